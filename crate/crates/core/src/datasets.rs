//! LIBSVM ingestion, node partitioning, synthetic problems and ground truth.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use thiserror::Error;

use crate::problems::{LogisticProblem, Oracle, ProblemError, QuadraticProblem, Regularizer};

/// Sparse feature vector with strictly increasing 0-based indices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseRow {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseRow {
    pub fn new(indices: Vec<usize>, values: Vec<f64>) -> Self {
        assert_eq!(indices.len(), values.len());
        Self { indices, values }
    }

    pub fn from_dense(dense: &[f64]) -> Self {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(k, v)| (k, *v))
            .unzip();
        Self { indices, values }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn dot(&self, z: &[f64]) -> f64 {
        self.indices.iter().zip(&self.values).map(|(&k, v)| v * z[k]).sum()
    }

    /// `out += coef · a`
    pub fn axpy_into(&self, coef: f64, out: &mut [f64]) {
        for (&k, v) in self.indices.iter().zip(&self.values) {
            out[k] += coef * v;
        }
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{0} labels for {1} rows")]
    LengthMismatch(usize, usize),
    #[error("feature index {index} exceeds dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("cannot split {samples} samples over {nodes} nodes")]
    TooManyNodes { samples: usize, nodes: usize },
    #[error("condition number must be at least 1, got {0}")]
    BadKappa(f64),
    #[error("dimension must be at least {min}, got {got}")]
    BadDimension { min: usize, got: usize },
    #[error("ground truth needs a strongly convex problem")]
    NotStronglyConvex,
    #[error("linear system is singular")]
    Singular,
    #[error("accelerated gradient stalled at residual {residual:e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// Labelled samples; labels are ±1.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    rows: Vec<SparseRow>,
    labels: Vec<f64>,
    dim: usize,
}

impl SampleSet {
    pub fn new(rows: Vec<SparseRow>, labels: Vec<f64>, dim: usize) -> Result<Self, DatasetError> {
        if rows.len() != labels.len() {
            return Err(DatasetError::LengthMismatch(labels.len(), rows.len()));
        }
        if let Some(&index) = rows.iter().flat_map(|r| r.indices.iter()).find(|&&k| k >= dim) {
            return Err(DatasetError::IndexOutOfRange { index: index + 1, dim });
        }
        Ok(Self { rows, labels, dim })
    }

    pub fn rows(&self) -> &[SparseRow] {
        &self.rows
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `Σ_j a_j a_jᵀ` as a dense `dim × dim` matrix.
    pub fn gram(&self, dim: usize) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(dim, dim);
        for row in &self.rows {
            for (&a, va) in row.indices.iter().zip(&row.values) {
                for (&b, vb) in row.indices.iter().zip(&row.values) {
                    g[(a, b)] += va * vb;
                }
            }
        }
        g
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum LibsvmErrorKind {
    #[error("invalid label `{0}`")]
    Label(String),
    #[error("label set {0:?} cannot be mapped to ±1")]
    UnmappableLabels(Vec<f64>),
    #[error("malformed feature token `{0}`")]
    Token(String),
    #[error("feature indices are 1-based, found 0")]
    ZeroIndex,
    #[error("feature index {index} does not increase past {previous}")]
    NonIncreasing { previous: usize, index: usize },
    #[error("feature index {index} exceeds requested dimension {dim}")]
    ExceedsDimension { index: usize, dim: usize },
    #[error("read failed: {0}")]
    Io(String),
}

#[derive(Debug, Error, PartialEq)]
#[error("line {line}: {kind}")]
pub struct LibsvmError {
    pub line: usize,
    pub kind: LibsvmErrorKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum LabelScheme {
    PlusMinus,
    ZeroOne,
    OneTwo,
}

impl LabelScheme {
    const ALL: [LabelScheme; 3] = [LabelScheme::PlusMinus, LabelScheme::ZeroOne, LabelScheme::OneTwo];

    fn raw(self) -> [i64; 2] {
        match self {
            LabelScheme::PlusMinus => [-1, 1],
            LabelScheme::ZeroOne => [0, 1],
            LabelScheme::OneTwo => [1, 2],
        }
    }

    fn covering(seen: &BTreeSet<i64>) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|s| seen.iter().all(|l| s.raw().contains(l)))
    }

    fn map(self, raw: f64) -> f64 {
        match self {
            LabelScheme::PlusMinus => raw,
            LabelScheme::ZeroOne => 2.0 * raw - 1.0,
            LabelScheme::OneTwo => 3.0 - 2.0 * raw,
        }
    }
}

/// Parses LIBSVM text: `label idx:val idx:val ...` with 1-based, strictly
/// increasing indices. Blank lines and `#` comments are skipped. Raw labels
/// `{-1,+1}` are kept, `{0,1}` map to `{-1,+1}` and `{1,2}` map to `{+1,-1}`.
pub fn parse_libsvm<R: BufRead>(input: R, dim_override: Option<usize>) -> Result<SampleSet, LibsvmError> {
    let mut rows = Vec::new();
    let mut raw_labels = Vec::new();
    let mut seen = BTreeSet::new();
    let mut max_index = 0;

    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let err = |kind| LibsvmError { line: line_no, kind };
        let line = line.map_err(|e| err(LibsvmErrorKind::Io(e.to_string())))?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let label: f64 = label_tok
            .parse()
            .ok()
            .filter(|l: &f64| l.fract() == 0.0 && l.is_finite())
            .ok_or_else(|| err(LibsvmErrorKind::Label(label_tok.to_string())))?;
        seen.insert(label as i64);
        if LabelScheme::covering(&seen).is_none() {
            let set = seen.iter().map(|&l| l as f64).collect();
            return Err(err(LibsvmErrorKind::UnmappableLabels(set)));
        }

        let mut row = SparseRow::default();
        for tok in tokens {
            let bad = || err(LibsvmErrorKind::Token(tok.to_string()));
            let (k, v) = tok.split_once(':').ok_or_else(bad)?;
            let k: usize = k.parse().map_err(|_| bad())?;
            let v: f64 = v.parse().map_err(|_| bad())?;
            if !v.is_finite() {
                return Err(bad());
            }
            if k == 0 {
                return Err(err(LibsvmErrorKind::ZeroIndex));
            }
            if let Some(&prev) = row.indices.last() {
                if k - 1 <= prev {
                    return Err(err(LibsvmErrorKind::NonIncreasing {
                        previous: prev + 1,
                        index: k,
                    }));
                }
            }
            if let Some(dim) = dim_override {
                if k > dim {
                    return Err(err(LibsvmErrorKind::ExceedsDimension { index: k, dim }));
                }
            }
            max_index = max_index.max(k);
            row.indices.push(k - 1);
            row.values.push(v);
        }
        rows.push(row);
        raw_labels.push(label);
    }

    let scheme = LabelScheme::covering(&seen).unwrap_or(LabelScheme::PlusMinus);
    let labels = raw_labels.into_iter().map(|l| scheme.map(l)).collect();
    let dim = dim_override.unwrap_or(max_index);
    Ok(SampleSet { rows, labels, dim })
}

pub fn parse_libsvm_str(text: &str, dim_override: Option<usize>) -> Result<SampleSet, LibsvmError> {
    parse_libsvm(text.as_bytes(), dim_override)
}

/// Writes `+1`/`-1` labels and 1-based `idx:val` pairs.
pub fn write_libsvm<W: Write>(samples: &SampleSet, mut out: W) -> std::io::Result<()> {
    for (row, &label) in samples.rows.iter().zip(&samples.labels) {
        write!(out, "{}", if label > 0.0 { "+1" } else { "-1" })?;
        for (&k, v) in row.indices.iter().zip(&row.values) {
            write!(out, " {}:{}", k + 1, v)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Contiguous blocks in file order; the first `len % n` blocks get one extra sample.
pub fn partition(samples: &SampleSet, nodes: usize) -> Result<Vec<SampleSet>, DatasetError> {
    let total = samples.len();
    if nodes == 0 || nodes > total {
        return Err(DatasetError::TooManyNodes { samples: total, nodes });
    }
    let base = total / nodes;
    let extra = total % nodes;
    let mut out = Vec::with_capacity(nodes);
    let mut start = 0;
    for i in 0..nodes {
        let size = base + usize::from(i < extra);
        out.push(SampleSet {
            rows: samples.rows[start..start + size].to_vec(),
            labels: samples.labels[start..start + size].to_vec(),
            dim: samples.dim,
        });
        start += size;
    }
    Ok(out)
}

/// Random orthogonal matrix: QR of a standard Gaussian matrix with the
/// signs of `R`'s diagonal folded into `Q`.
pub fn random_orthogonal<R: Rng>(p: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..p {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Quadratic nodes `A_i = Qᵢᵀ diag(a) Qᵢ` with `a₁ = 1`, `a_p = kappa` and
/// the interior spectrum uniform on `(1, 2)`; `b_i` standard Gaussian.
/// Every node draws its own rotation and interior spectrum.
pub fn synth_quadratic(p: usize, kappa: f64, nodes: usize, seed: u64) -> Result<QuadraticProblem, DatasetError> {
    if !(kappa >= 1.0) {
        return Err(DatasetError::BadKappa(kappa));
    }
    if p < 2 {
        return Err(DatasetError::BadDimension { min: 2, got: p });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = Vec::with_capacity(nodes);
    let mut b = Vec::with_capacity(nodes);
    for _ in 0..nodes {
        let q = random_orthogonal(p, &mut rng);
        let mut spectrum = vec![1.0; p];
        spectrum[p - 1] = kappa;
        for s in spectrum.iter_mut().take(p - 1).skip(1) {
            *s = rng.random_range(1.0..2.0);
        }
        let d = DMatrix::from_diagonal(&DVector::from_vec(spectrum));
        let ai = q.transpose() * d * &q;
        a.push((&ai + ai.transpose()) * 0.5);
        b.push(DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal)));
    }
    Ok(QuadraticProblem::new(a, b)?)
}

/// Gaussian features scaled by `1/√p` with labels from a noisy linear
/// teacher; with `samples ≫ p` the classes overlap so the regularized loss has
/// a finite minimizer.
pub fn synth_logistic_samples(samples: usize, p: usize, seed: u64) -> SampleSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (p as f64).sqrt();
    let teacher: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
    let mut rows = Vec::with_capacity(samples);
    let mut labels = Vec::with_capacity(samples);
    for _ in 0..samples {
        let dense: Vec<f64> = (0..p)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let margin: f64 = dense.iter().zip(&teacher).map(|(a, w)| a * w).sum();
        let noise: f64 = rng.sample(StandardNormal);
        labels.push(if margin + noise >= 0.0 { 1.0 } else { -1.0 });
        rows.push(SparseRow::from_dense(&dense));
    }
    SampleSet { rows, labels, dim: p }
}

/// Writes `n,p` then, per node, `p` rows of `A_i` followed by the row `b_i`.
pub fn write_quadratic_csv<W: Write>(problem: &QuadraticProblem, mut out: W) -> std::io::Result<()> {
    let p = problem.dim();
    writeln!(out, "{},{}", problem.nodes(), p)?;
    let join = |it: &mut dyn Iterator<Item = f64>| it.map(|v| v.to_string()).collect::<Vec<_>>().join(",");
    for (a, b) in problem.matrices().iter().zip(problem.offsets()) {
        for r in 0..p {
            writeln!(out, "{}", join(&mut a.row(r).iter().copied()))?;
        }
        writeln!(out, "{}", join(&mut b.iter().copied()))?;
    }
    Ok(())
}

pub fn read_quadratic_csv<R: BufRead>(input: R) -> Result<QuadraticProblem, String> {
    let mut lines = input.lines();
    let mut next_row = |expect: usize| -> Result<Vec<f64>, String> {
        let line = lines.next().ok_or("unexpected end of file")?.map_err(|e| e.to_string())?;
        let row: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>().map_err(|e| e.to_string()))
            .collect::<Result<_, _>>()?;
        if row.len() != expect {
            return Err(format!("expected {expect} fields, found {}", row.len()));
        }
        Ok(row)
    };
    let header = next_row(2)?;
    let (n, p) = (header[0] as usize, header[1] as usize);
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for _ in 0..n {
        let mut m = DMatrix::zeros(p, p);
        for r in 0..p {
            for (c, v) in next_row(p)?.into_iter().enumerate() {
                m[(r, c)] = v;
            }
        }
        a.push(m);
        b.push(DVector::from_vec(next_row(p)?));
    }
    QuadraticProblem::new(a, b).map_err(|e| e.to_string())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SolutionMethod {
    Analytic,
    Iterative,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolutionCertificate {
    pub z_star: Vec<f64>,
    /// `‖∇F(z*)‖`
    pub residual: f64,
    pub method: SolutionMethod,
}

/// Exact minimizer `(Σ A_i) z = −Σ b_i` via Cholesky.
pub fn quadratic_solution(problem: &QuadraticProblem) -> Result<SolutionCertificate, DatasetError> {
    let p = problem.dim();
    let mut a = DMatrix::zeros(p, p);
    let mut b = DVector::zeros(p);
    for (ai, bi) in problem.matrices().iter().zip(problem.offsets()) {
        a += ai;
        b += bi;
    }
    let chol = a.cholesky().ok_or(DatasetError::Singular)?;
    let z = chol.solve(&(-b));
    let z_star: Vec<f64> = z.iter().copied().collect();
    let residual = crate::block::norm_sq(&problem.global_gradient(&z_star)).sqrt();
    Ok(SolutionCertificate {
        z_star,
        residual,
        method: SolutionMethod::Analytic,
    })
}

pub const LOGISTIC_RESIDUAL_TOL: f64 = 1e-12;
pub const LOGISTIC_ITERATION_CAP: usize = 1_000_000;

/// Centralized accelerated gradient descent on `F` with constant momentum
/// `(√κ − 1)/(√κ + 1)` until `‖∇F‖ ≤ 1e−12`.
pub fn logistic_solution(problem: &LogisticProblem) -> Result<SolutionCertificate, DatasetError> {
    if problem.regularizer() != Regularizer::L2 {
        return Err(DatasetError::NotStronglyConvex);
    }
    let c = problem.smoothness();
    let step = 1.0 / c.l;
    let root = (c.l / c.mu).sqrt();
    let momentum = (root - 1.0) / (root + 1.0);
    let p = problem.dim();

    let mut x = vec![0.0; p];
    let mut x_prev = x.clone();
    let mut y = vec![0.0; p];
    let mut residual = f64::INFINITY;
    for it in 0..LOGISTIC_ITERATION_CAP {
        for k in 0..p {
            y[k] = x[k] + momentum * (x[k] - x_prev[k]);
        }
        let gy = problem.global_gradient(&y);
        x_prev.copy_from_slice(&x);
        for k in 0..p {
            x[k] = y[k] - step * gy[k];
        }
        if it % 10 == 9 {
            residual = crate::block::norm_sq(&problem.global_gradient(&x)).sqrt();
            if residual <= LOGISTIC_RESIDUAL_TOL {
                return Ok(SolutionCertificate {
                    z_star: x,
                    residual,
                    method: SolutionMethod::Iterative,
                });
            }
        }
    }
    Err(DatasetError::NoConvergence {
        residual,
        iterations: LOGISTIC_ITERATION_CAP,
    })
}
