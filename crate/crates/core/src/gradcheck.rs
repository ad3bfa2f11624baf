//! Central-difference verification of the analytic gradients.
//!
//! Each loss family is evaluated on seeded random instances (n ≤ 16, d ≤ 8,
//! m ≤ 6). For every differentiable operand the analytic gradient `a` is
//! compared with the numerical gradient `g` through the norm-wise relative
//! error `‖a − g‖_F / max(‖a‖_F, ‖g‖_F)` (0 when both vanish).

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::coding_rate::{coding_rate, coding_rate_grad, RateParams};
use crate::embedding::{normalize_rows, EmbeddingBatch, ProxySet};
use crate::error::{Error, Result};
use crate::losses::{
    pair_anticollapse, proxy_anchor, proxy_anticollapse, proxy_nca, AntiCollapseConfig, BaseLoss, LossResult,
    ProxyAnchorParams, ProxySelection,
};
use crate::numerics::Matrix;
use crate::rng::SeededRng;
use crate::ClassId;

pub const FD_STEP: f64 = 1e-5;
pub const REL_TOLERANCE: f64 = 1e-5;
pub const DEFAULT_CASES: usize = 20;

/// `∂f/∂x` by central differences with step `h`.
pub fn central_difference<F>(f: F, x: &Matrix<f64>, h: f64) -> Result<Matrix<f64>>
where
    F: Fn(&Matrix<f64>) -> Result<f64>,
{
    let mut probe = x.clone();
    let mut grad = Matrix::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        for c in 0..x.cols() {
            let orig = probe[(r, c)];
            probe[(r, c)] = orig + h;
            let up = f(&probe)?;
            probe[(r, c)] = orig - h;
            let down = f(&probe)?;
            probe[(r, c)] = orig;
            grad[(r, c)] = (up - down) / (2.0 * h);
        }
    }
    Ok(grad)
}

pub fn relative_error(analytic: &Matrix<f64>, numeric: &Matrix<f64>) -> f64 {
    let mut diff = analytic.clone();
    diff.add_scaled(-1.0, numeric).expect("gradients share a shape");
    let scale = analytic.frobenius_norm().max(numeric.frobenius_norm());
    if scale == 0.0 {
        0.0
    } else {
        diff.frobenius_norm() / scale
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LossFamily {
    CodingRate,
    PairAnticollapse,
    ProxyNca,
    ProxyAnchor,
    ProxyAnticollapse,
}

impl LossFamily {
    pub const ALL: [LossFamily; 5] = [
        LossFamily::CodingRate,
        LossFamily::PairAnticollapse,
        LossFamily::ProxyNca,
        LossFamily::ProxyAnchor,
        LossFamily::ProxyAnticollapse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossFamily::CodingRate => "coding_rate",
            LossFamily::PairAnticollapse => "pair_anticollapse",
            LossFamily::ProxyNca => "proxy_nca",
            LossFamily::ProxyAnchor => "proxy_anchor",
            LossFamily::ProxyAnticollapse => "proxy_anticollapse",
        }
    }
}

impl fmt::Display for LossFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown loss family `{s}`")))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FamilyReport {
    pub family: LossFamily,
    pub cases: usize,
    pub max_rel_error: f64,
    pub worst_case: usize,
}

impl FamilyReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < REL_TOLERANCE
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct GradCheckOptions {
    /// Negates every analytic gradient. A negative control: the check must
    /// then fail.
    pub flip_sign: bool,
}

/// Random instance: unit-norm embeddings labelled from `0..m` and `m` unit
/// proxies, one per class.
pub struct Instance {
    pub batch: EmbeddingBatch<f64>,
    pub proxies: ProxySet<f64>,
}

fn random_unit(rng: &mut SeededRng, rows: usize, cols: usize) -> Matrix<f64> {
    let mut m = Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect()).expect("finite normals");
    normalize_rows(&mut m).expect("gaussian rows are nonzero");
    m
}

pub fn random_instance(seed: u64) -> Instance {
    let mut rng = SeededRng::new(seed);
    let d = 2 + rng.below(7);
    let m = 2 + rng.below(5);
    let n = 2 + rng.below(15);
    let x = random_unit(&mut rng, n, d);
    let labels: Vec<ClassId> = (0..n).map(|_| rng.below(m) as ClassId).collect();
    let p = random_unit(&mut rng, m, d);
    Instance {
        batch: EmbeddingBatch::new(x, labels).expect("unit rows"),
        proxies: ProxySet::new(p, (0..m as ClassId).collect()).expect("distinct classes"),
    }
}

type LossFn<'a> = dyn Fn(&EmbeddingBatch<f64>, &ProxySet<f64>) -> Result<LossResult<f64>> + 'a;

fn check_loss(inst: &Instance, loss: &LossFn<'_>, opts: GradCheckOptions) -> Result<f64> {
    let sign = if opts.flip_sign { -1.0 } else { 1.0 };
    let at = loss(&inst.batch, &inst.proxies)?;
    let labels = inst.batch.labels().to_vec();
    let mut worst: f64 = 0.0;
    if let Some(ge) = &at.grad_embeddings {
        let numeric = central_difference(
            |x| loss(&EmbeddingBatch::new_unchecked(x.clone(), labels.clone())?, &inst.proxies).map(|r| r.value),
            inst.batch.features(),
            FD_STEP,
        )?;
        worst = worst.max(relative_error(&ge.scale(sign), &numeric));
    }
    if let Some(gp) = &at.grad_proxies {
        let numeric = central_difference(
            |p| loss(&inst.batch, &inst.proxies.with_matrix_unchecked(p.clone())).map(|r| r.value),
            inst.proxies.matrix(),
            FD_STEP,
        )?;
        worst = worst.max(relative_error(&gp.scale(sign), &numeric));
    }
    Ok(worst)
}

/// Worst relative error of one family on the instance drawn from `seed`.
pub fn check_case(family: LossFamily, seed: u64, opts: GradCheckOptions) -> Result<f64> {
    let inst = random_instance(seed);
    let rate = RateParams::default();
    let pa = ProxyAnchorParams::default();
    match family {
        LossFamily::CodingRate => {
            let x = inst.batch.features();
            let sign = if opts.flip_sign { -1.0 } else { 1.0 };
            let analytic = coding_rate_grad(x, &rate)?.scale(sign);
            let numeric = central_difference(|x| coding_rate(x, &rate), x, FD_STEP)?;
            Ok(relative_error(&analytic, &numeric))
        }
        LossFamily::PairAnticollapse => check_loss(&inst, &|b, _| pair_anticollapse(b, &rate), opts),
        LossFamily::ProxyNca => check_loss(&inst, &|b, p| proxy_nca(b, p), opts),
        LossFamily::ProxyAnchor => check_loss(&inst, &|b, p| proxy_anchor(b, p, &pa), opts),
        LossFamily::ProxyAnticollapse => {
            let mut worst: f64 = 0.0;
            for selection in [ProxySelection::AllClass, ProxySelection::MiniBatch] {
                for base in [BaseLoss::ProxyAnchor(pa), BaseLoss::ProxyNca] {
                    // a large weight keeps the base term visible in the check
                    for nu in [0.0035, 1.0] {
                        let cfg = AntiCollapseConfig { nu, rate, selection, base };
                        worst = worst.max(check_loss(&inst, &|b, p| proxy_anticollapse(b, p, &cfg), opts)?);
                    }
                }
            }
            Ok(worst)
        }
    }
}

/// Runs `cases` seeded instances of one family, seeds `seed..seed + cases`.
pub fn check_family(family: LossFamily, cases: usize, seed: u64, opts: GradCheckOptions) -> Result<FamilyReport> {
    let mut report = FamilyReport { family, cases, max_rel_error: 0.0, worst_case: 0 };
    for case in 0..cases {
        let err = check_case(family, seed.wrapping_add(case as u64), opts)?;
        if err > report.max_rel_error || err.is_nan() {
            report.max_rel_error = err;
            report.worst_case = case;
        }
    }
    Ok(report)
}
