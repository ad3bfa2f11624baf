use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::config::{BaseName, FileConfig, LossName, SyntheticSpec, Variant};
use super::{
    AnalyzeArgs, Cli, Command, CommonArgs, EvalArgs, GradcheckArgs, TrainArgs, DEFAULT_BINS, DEFAULT_EPOCHS,
    DEFAULT_EVAL_EVERY, DEFAULT_KS, DEFAULT_MAP_CUTOFF, DEFAULT_OUT_DIR,
};
use crate::coding_rate::{coding_rate, intra_class_rate, RateParams, DEFAULT_EPSILON};
use crate::data_io::{
    generate_mixture, load_embeddings, load_proxies, save_embeddings, save_proxies, BatchPlan, LoadOptions,
    MixtureConfig, FORMAT_VERSION,
};
use crate::embedding::EmbeddingBatch;
use crate::error::{Error, Result};
use crate::gradcheck::{check_family, GradCheckOptions, LossFamily, DEFAULT_CASES, REL_TOLERANCE};
use crate::losses::{AntiCollapseConfig, BaseLoss, ProxyAnchorParams, ProxySelection, DEFAULT_NU};
use crate::metrics::{self, embedding_density, proxy_similarity_heat, similarity_histogram};
use crate::training::{train, LossKind, PairedComparison, TrainConfig, TrainTrace};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Common settings after merging flags, the config file and defaults.
struct Settings {
    seed: u64,
    out_dir: PathBuf,
    rate: RateParams<f64>,
    nu: f64,
    anchor: ProxyAnchorParams<f64>,
    selection: ProxySelection,
}

impl Settings {
    fn resolve(flags: &CommonArgs, file: &FileConfig) -> Result<Self> {
        let nu = flags.nu.or(file.nu).unwrap_or(DEFAULT_NU);
        if nu < 0.0 || !nu.is_finite() {
            return Err(Error::InvalidConfig(format!("nu must be nonnegative, got {nu}")));
        }
        let defaults = ProxyAnchorParams::<f64>::default();
        let selection = match flags.variant.or(file.variant).unwrap_or(Variant::MiniBatch) {
            Variant::AllClass => ProxySelection::AllClass,
            Variant::MiniBatch => ProxySelection::MiniBatch,
        };
        Ok(Self {
            seed: flags.seed.or(file.seed).unwrap_or(0),
            out_dir: flags.out_dir.clone().or_else(|| file.out_dir.clone()).unwrap_or_else(|| DEFAULT_OUT_DIR.into()),
            rate: RateParams::new(flags.epsilon.or(file.epsilon).unwrap_or(DEFAULT_EPSILON))?,
            nu,
            anchor: ProxyAnchorParams::new(
                flags.alpha.or(file.alpha).unwrap_or(defaults.alpha),
                flags.delta.or(file.delta).unwrap_or(defaults.delta),
            )?,
            selection,
        })
    }

    fn base(&self, name: BaseName) -> BaseLoss<f64> {
        match name {
            BaseName::ProxyAnchor => BaseLoss::ProxyAnchor(self.anchor),
            BaseName::ProxyNca => BaseLoss::ProxyNca,
        }
    }

    fn loss(&self, name: LossName, base: BaseName) -> LossKind<f64> {
        match name {
            LossName::ProxyAnchor => LossKind::ProxyAnchor(self.anchor),
            LossName::ProxyNca => LossKind::ProxyNca,
            LossName::Pair => LossKind::PairAntiCollapse(self.rate),
            LossName::AntiCollapse => LossKind::AntiCollapse(AntiCollapseConfig {
                nu: self.nu,
                rate: self.rate,
                selection: self.selection,
                base: self.base(base),
            }),
            LossName::PairPlusProxy => LossKind::PairPlusProxy { rate: self.rate, base: self.base(base) },
        }
    }
}

pub(super) fn dispatch(cli: Cli) -> Result<bool> {
    let file = match &cli.common.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let settings = Settings::resolve(&cli.common, &file)?;
    match cli.command {
        Command::Gradcheck(args) => gradcheck(&args, &file, &settings),
        Command::Train(args) => train_cmd(&args, &file, &settings).map(|()| true),
        Command::Analyze(args) => analyze(&args, &file, &settings).map(|()| true),
        Command::Eval(args) => eval(&args, &file, &settings).map(|()| true),
    }
}

fn gradcheck(args: &GradcheckArgs, file: &FileConfig, settings: &Settings) -> Result<bool> {
    let families = match &args.loss {
        Some(name) => vec![name.parse::<LossFamily>()?],
        None => LossFamily::ALL.to_vec(),
    };
    let cases = args.cases.or(file.cases).unwrap_or(DEFAULT_CASES);
    if cases == 0 {
        return Err(Error::InvalidConfig("cases must be at least 1".into()));
    }
    let opts = GradCheckOptions { flip_sign: args.flip_sign };
    let mut all_passed = true;
    println!("{:<20} {:>6} {:>14}  status", "family", "cases", "max_rel_error");
    for family in families {
        let report = check_family(family, cases, settings.seed, opts)?;
        let status = if report.passed() { "ok" } else { "FAILED" };
        println!("{:<20} {:>6} {:>14.3e}  {status}", family.name(), report.cases, report.max_rel_error);
        all_passed &= report.passed();
    }
    println!("tolerance {REL_TOLERANCE:e}: {}", if all_passed { "all passed" } else { "failures" });
    Ok(all_passed)
}

/// Where the training embeddings come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    Synthetic(MixtureConfig),
    File { path: PathBuf, renormalize: bool },
}

impl DataSource {
    fn resolve(args: &TrainArgs, file: &FileConfig, seed: u64) -> Result<Self> {
        let renormalize = args.renormalize || file.renormalize.unwrap_or(false);
        let file_synth = file.synthetic.clone().unwrap_or_default();
        if let Some(path) = &args.input {
            return Ok(DataSource::File { path: path.clone(), renormalize });
        }
        if let Some(pairs) = &args.synthetic {
            return Ok(DataSource::Synthetic(SyntheticSpec::parse_pairs(pairs)?.or(&file_synth).resolve(seed)));
        }
        match &file.input {
            Some(path) => Ok(DataSource::File { path: path.clone(), renormalize }),
            None => Ok(DataSource::Synthetic(file_synth.resolve(seed))),
        }
    }

    fn load(&self) -> Result<EmbeddingBatch<f64>> {
        match self {
            DataSource::Synthetic(cfg) => generate_mixture(cfg),
            DataSource::File { path, renormalize } => load_embeddings(path, LoadOptions { renormalize: *renormalize }),
        }
    }

    fn input_path(&self) -> Option<&Path> {
        match self {
            DataSource::Synthetic(_) => None,
            DataSource::File { path, .. } => Some(path),
        }
    }
}

/// Record of a training run, enough to repeat it. Output paths are relative
/// to the output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub format_version: u8,
    pub command: String,
    pub seed: u64,
    pub data: DataSource,
    pub config: TrainConfig<f64>,
    pub baseline: Option<TrainConfig<f64>>,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub outputs: BTreeMap<String, String>,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Writes to a sibling temporary file, then renames it over `path`.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Refuses to overwrite any of the inputs.
fn guard_inputs(outputs: &[PathBuf], inputs: &[&Path]) -> Result<()> {
    for input in inputs {
        let Ok(input) = input.canonicalize() else { continue };
        for out in outputs {
            if out.canonicalize().is_ok_and(|o| o == input) {
                return Err(Error::InvalidConfig(format!("output {} would overwrite an input", out.display())));
            }
        }
    }
    Ok(())
}

struct RunFiles {
    trace_csv: PathBuf,
    trace_jsonl: PathBuf,
    embeddings: PathBuf,
    proxies: PathBuf,
}

impl RunFiles {
    const NAMES: [(&'static str, &'static str); 4] = [
        ("trace_csv", "trace.csv"),
        ("trace_jsonl", "trace.jsonl"),
        ("embeddings", "embeddings.acem"),
        ("proxies", "proxies.acem"),
    ];

    fn in_dir(dir: &Path) -> Self {
        let [a, b, c, d] = Self::NAMES.map(|(_, name)| dir.join(name));
        Self { trace_csv: a, trace_jsonl: b, embeddings: c, proxies: d }
    }

    fn all(&self) -> [PathBuf; 4] {
        [self.trace_csv.clone(), self.trace_jsonl.clone(), self.embeddings.clone(), self.proxies.clone()]
    }

    fn record(prefix: &str, outputs: &mut BTreeMap<String, String>) {
        for (key, name) in Self::NAMES {
            let key = if prefix.is_empty() { key.to_string() } else { format!("{prefix}_{key}") };
            let path = if prefix.is_empty() { name.to_string() } else { format!("{prefix}/{name}") };
            outputs.insert(key, path);
        }
    }
}

fn write_run(files: &RunFiles, trace: &TrainTrace, state: &crate::training::TrainState<f64>) -> Result<()> {
    let mut csv = Vec::new();
    trace.write_csv(&mut csv)?;
    fs::write(&files.trace_csv, csv)?;
    let mut jsonl = Vec::new();
    trace.write_jsonl(&mut jsonl)?;
    fs::write(&files.trace_jsonl, jsonl)?;
    save_embeddings(&state.embeddings, &files.embeddings)?;
    save_proxies(&state.proxies, &files.proxies)
}

fn train_cmd(args: &TrainArgs, file: &FileConfig, settings: &Settings) -> Result<()> {
    let started = unix_now();
    let source = DataSource::resolve(args, file, settings.seed)?;
    let data = source.load()?;

    let base = args.base.or(file.base).unwrap_or(BaseName::ProxyAnchor);
    let loss_name = args.loss.or(file.loss).unwrap_or(LossName::AntiCollapse);
    let default_plan = BatchPlan::default();
    let classes = data.classes().len();
    let per_batch = args.classes_per_batch.or(file.classes_per_batch).unwrap_or(default_plan.classes_per_batch);
    let plan = BatchPlan::new(
        per_batch.min(classes),
        args.samples_per_class.or(file.samples_per_class).unwrap_or(default_plan.samples_per_class),
    )?;
    let mut config = TrainConfig::new(settings.loss(loss_name, base));
    config.lr = args.lr.or(file.lr).unwrap_or(config.lr);
    config.proxy_lr_multiplier =
        args.proxy_lr_multiplier.or(file.proxy_lr_multiplier).unwrap_or(config.proxy_lr_multiplier);
    config.epochs = args.epochs.or(file.epochs).unwrap_or(DEFAULT_EPOCHS);
    config.eval_every = args.eval_every.or(file.eval_every).unwrap_or(DEFAULT_EVAL_EVERY);
    config.batch_plan = plan;
    config.seed = settings.seed;
    config.trace_rate = settings.rate;
    config.sample_with_replacement = args.with_replacement || file.with_replacement.unwrap_or(false);
    let baseline = args
        .compare_with
        .or(file.compare_with)
        .map(|name| TrainConfig { loss: settings.loss(name, base), ..config.clone() });

    let out = &settings.out_dir;
    let files = RunFiles::in_dir(out);
    let baseline_files = RunFiles::in_dir(&out.join("baseline"));
    let mut planned: Vec<PathBuf> = files.all().into();
    planned.extend(baseline_files.all());
    planned.push(out.join(MANIFEST_FILE));
    guard_inputs(&planned, &source.input_path().into_iter().collect::<Vec<_>>())?;

    let baseline_run = match &baseline {
        Some(cfg) => Some(train(cfg, data.clone())?),
        None => None,
    };
    let (state, trace) = train(&config, data)?;

    fs::create_dir_all(out)?;
    write_run(&files, &trace, &state)?;
    let mut outputs = BTreeMap::new();
    RunFiles::record("", &mut outputs);
    if let Some((b_state, b_trace)) = &baseline_run {
        fs::create_dir_all(out.join("baseline"))?;
        write_run(&baseline_files, b_trace, b_state)?;
        RunFiles::record("baseline", &mut outputs);
        let comparison = PairedComparison::new(b_trace, &trace)?;
        fs::write(out.join("comparison.json"), to_json(&comparison)?)?;
        outputs.insert("comparison".into(), "comparison.json".into());
        print_comparison(&comparison);
    }

    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        format_version: FORMAT_VERSION,
        command: "train".into(),
        seed: settings.seed,
        data: source,
        config,
        baseline,
        started_unix: started,
        finished_unix: unix_now(),
        outputs,
    };
    write_atomic(&out.join(MANIFEST_FILE), &to_json(&manifest)?)?;

    if let Some(last) = trace.records.last() {
        println!(
            "{} epochs  loss {:.6}  R@1 {:.2}  nmi {:.4}  r_global {:.4}  r_intra {:.4}  r_proxy {:.4}",
            last.epoch, last.loss, last.recall1, last.nmi, last.r_global, last.r_intra, last.r_proxy
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn print_comparison(c: &PairedComparison) {
    let mark = |b: bool| if b { "yes" } else { "no" };
    println!("{:<34} {:>12} {:>12}", "", "baseline", "this run");
    println!("{:<34} {:>12.4} {:>12.4}", "final r_proxy", c.baseline_final_r_proxy, c.candidate_final_r_proxy);
    println!("{:<34} {:>12.4} {:>12.4}", "r_proxy std", c.baseline_r_proxy_std, c.candidate_r_proxy_std);
    println!("{:<34} {:>12} {:>12}", "best R@1 epoch", c.baseline_best.epoch, c.candidate_best.epoch);
    println!("{:<34} {:>12.4} {:>12.4}", "r_global at best R@1", c.baseline_best.r_global, c.candidate_best.r_global);
    println!("{:<34} {:>12.4} {:>12.4}", "r_intra at best R@1", c.baseline_best.r_intra, c.candidate_best.r_intra);
    println!("{:<34} {:>12.4} {:>12.4}", "r_proxy at best R@1", c.baseline_best.r_proxy, c.candidate_best.r_proxy);
    println!(
        "higher final r_proxy: {}  steadier r_proxy: {}  lower r_global: {}  lower r_intra: {}  higher r_proxy: {}",
        mark(c.candidate_final_rate_higher()),
        mark(c.candidate_rate_steadier()),
        mark(c.best_r_global_lower()),
        mark(c.best_r_intra_lower()),
        mark(c.best_r_proxy_higher()),
    );
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffDiagonalStats {
    pub max_abs: f64,
    pub mean_abs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub samples: usize,
    pub dim: usize,
    pub classes: usize,
    pub r_global: f64,
    pub r_intra: f64,
    pub r_proxy: Option<f64>,
    pub density: Option<f64>,
    pub positive_pairs: u64,
    pub negative_pairs: u64,
    pub proxy_off_diagonal: Option<OffDiagonalStats>,
}

fn require_input(flag: &Option<PathBuf>, file: &FileConfig, command: &str) -> Result<PathBuf> {
    flag.clone().or_else(|| file.input.clone()).ok_or_else(|| Error::InvalidConfig(format!("{command} needs --input")))
}

fn analyze(args: &AnalyzeArgs, file: &FileConfig, settings: &Settings) -> Result<()> {
    let input = require_input(&args.input, file, "analyze")?;
    let opts = LoadOptions { renormalize: args.renormalize || file.renormalize.unwrap_or(false) };
    let batch = load_embeddings(&input, opts)?;
    let proxy_path = args.proxies.clone().or_else(|| file.proxies.clone());
    let proxies = proxy_path.as_deref().map(|p| load_proxies(p, opts)).transpose()?;
    let bins = args.bins.or(file.bins).unwrap_or(DEFAULT_BINS);

    let hist = similarity_histogram(&batch, bins)?;
    let density = match embedding_density(&batch) {
        Ok(v) => Some(v),
        Err(Error::DegenerateInput(_)) => None,
        Err(e) => return Err(e),
    };
    let mut heat = None;
    let mut r_proxy = None;
    let mut off_diagonal = None;
    if let Some(p) = &proxies {
        if p.dim() != batch.dim() {
            return Err(Error::ShapeMismatch(format!(
                "proxies have dimension {}, embeddings {}",
                p.dim(),
                batch.dim()
            )));
        }
        r_proxy = Some(coding_rate(p.matrix(), &settings.rate)?);
        let sim = proxy_similarity_heat(p);
        let m = sim.rows();
        let (mut max_abs, mut sum) = (0.0f64, 0.0);
        for i in 0..m {
            for j in (0..m).filter(|&j| j != i) {
                max_abs = max_abs.max(sim[(i, j)].abs());
                sum += sim[(i, j)].abs();
            }
        }
        let pairs = m * m.saturating_sub(1);
        off_diagonal = Some(OffDiagonalStats { max_abs, mean_abs: if pairs == 0 { 0.0 } else { sum / pairs as f64 } });
        heat = Some(sim);
    }
    let report = AnalyzeReport {
        samples: batch.len(),
        dim: batch.dim(),
        classes: batch.classes().len(),
        r_global: coding_rate(batch.features(), &settings.rate)?,
        r_intra: intra_class_rate(batch.features(), batch.labels(), &settings.rate)?,
        r_proxy,
        density,
        positive_pairs: hist.positive.iter().sum(),
        negative_pairs: hist.negative.iter().sum(),
        proxy_off_diagonal: off_diagonal,
    };

    let out = &settings.out_dir;
    let report_path = out.join("analysis.json");
    let hist_path = out.join("similarity_histogram.csv");
    let heat_path = out.join("proxy_similarity.csv");
    let mut inputs = vec![input.as_path()];
    inputs.extend(proxy_path.as_deref());
    guard_inputs(&[report_path.clone(), hist_path.clone(), heat_path.clone()], &inputs)?;

    fs::create_dir_all(out)?;
    fs::write(&report_path, to_json(&report)?)?;
    let mut csv = String::from("lower,upper,positive,negative\n");
    for b in 0..bins {
        csv.push_str(&format!("{},{},{},{}\n", hist.edges[b], hist.edges[b + 1], hist.positive[b], hist.negative[b]));
    }
    fs::write(&hist_path, csv)?;
    if let (Some(sim), Some(p)) = (&heat, &proxies) {
        let mut csv = String::from("class");
        for c in p.class_ids() {
            csv.push_str(&format!(",{c}"));
        }
        csv.push('\n');
        for (i, c) in p.class_ids().iter().enumerate() {
            csv.push_str(&c.to_string());
            for v in sim.row(i) {
                csv.push_str(&format!(",{v}"));
            }
            csv.push('\n');
        }
        fs::write(&heat_path, csv)?;
    }

    println!("samples {}  dim {}  classes {}", report.samples, report.dim, report.classes);
    println!("r_global {:.6}  r_intra {:.6}", report.r_global, report.r_intra);
    if let Some(r) = report.r_proxy {
        println!("r_proxy {r:.6}");
    }
    match report.density {
        Some(d) => println!("density {d:.6}"),
        None => println!("density undefined"),
    }
    println!("pairs: {} positive, {} negative", report.positive_pairs, report.negative_pairs);
    if let Some(s) = report.proxy_off_diagonal {
        println!("proxy off-diagonal |cos|: max {:.6}  mean {:.6}", s.max_abs, s.mean_abs);
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn eval(args: &EvalArgs, file: &FileConfig, settings: &Settings) -> Result<()> {
    let input = require_input(&args.input, file, "eval")?;
    let opts = LoadOptions { renormalize: args.renormalize || file.renormalize.unwrap_or(false) };
    let batch = load_embeddings(&input, opts)?;
    let ks = args.k.clone().or_else(|| file.k.clone()).unwrap_or_else(|| DEFAULT_KS.to_vec());
    let cutoffs =
        args.map_cutoff.clone().or_else(|| file.map_cutoff.clone()).unwrap_or_else(|| vec![DEFAULT_MAP_CUTOFF]);
    let report = metrics::evaluate(&batch, &ks, &cutoffs, settings.seed)?;
    let json = to_json(&report)?;
    std::io::stdout().write_all(&json)?;
    Ok(())
}
