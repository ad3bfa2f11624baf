#![allow(dead_code)]

pub mod oracle;

use anticollapse::embedding::normalize_rows;
use anticollapse::{ClassId, EmbeddingBatch, Matrix, ProxySet, SeededRng};

pub fn gaussian(rng: &mut SeededRng, rows: usize, cols: usize) -> Matrix<f64> {
    Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect()).unwrap()
}

pub fn unit_rows(rng: &mut SeededRng, rows: usize, cols: usize) -> Matrix<f64> {
    let mut m = gaussian(rng, rows, cols);
    normalize_rows(&mut m).unwrap();
    m
}

/// Unit-norm batch with labels drawn from `0..classes`.
pub fn random_batch(seed: u64, n: usize, d: usize, classes: usize) -> EmbeddingBatch<f64> {
    let mut rng = SeededRng::new(seed);
    let x = unit_rows(&mut rng, n, d);
    let labels = (0..n).map(|_| rng.below(classes) as ClassId).collect();
    EmbeddingBatch::new(x, labels).unwrap()
}

pub fn random_proxies(seed: u64, m: usize, d: usize) -> ProxySet<f64> {
    let mut rng = SeededRng::new(seed ^ 0x9e37_79b9_7f4a_7c15);
    ProxySet::new(unit_rows(&mut rng, m, d), (0..m as ClassId).collect()).unwrap()
}

pub fn to_nalgebra(m: &Matrix<f64>) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

pub fn from_nalgebra(m: &nalgebra::DMatrix<f64>) -> Matrix<f64> {
    let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    Matrix::from_rows(&rows).unwrap()
}

/// Haar-ish random rotation from the QR factor of a Gaussian matrix.
pub fn random_rotation(seed: u64, d: usize) -> Matrix<f64> {
    let mut rng = SeededRng::new(seed);
    let g = to_nalgebra(&gaussian(&mut rng, d, d));
    from_nalgebra(&g.qr().q())
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Batches for metric comparisons: odd seeds draw rows from a small palette
/// of directions so that exact similarity ties are common.
pub fn metric_instance(seed: u64) -> EmbeddingBatch<f64> {
    let mut rng = SeededRng::new(seed);
    let n = 2 + rng.below(49);
    let d = 2 + rng.below(6);
    let classes = 1 + rng.below(6);
    let labels: Vec<ClassId> = (0..n).map(|_| rng.below(classes) as ClassId).collect();
    let x = if seed % 2 == 1 {
        let palette = unit_rows(&mut rng, 4, d);
        palette.select_rows(&(0..n).map(|_| rng.below(4)).collect::<Vec<_>>())
    } else {
        unit_rows(&mut rng, n, d)
    };
    EmbeddingBatch::new(x, labels).unwrap()
}
