//! Objective evaluation: Frechet distances over embedding sets, paired
//! prediction KL, k-NN density/coverage, audio-visual alignment, and the
//! average-rank aggregator. All metric math is extractor-agnostic; embedding
//! adapters live in [`extractors`].

pub mod extractors;
pub mod linalg;

use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::error::{Error, Result};

/// Which side of an evaluation an embedding set came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceTag {
    Generated,
    Reference,
}

/// A set of `n x d` embedding vectors.
#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    pub vectors: Array2<f64>,
    pub tag: SourceTag,
}

impl EmbeddingSet {
    pub fn new(vectors: Array2<f64>, tag: SourceTag) -> Result<Self> {
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("embedding set contains non-finite entries"));
        }
        Ok(EmbeddingSet { vectors, tag })
    }

    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-clip class probability rows on the simplex.
#[derive(Debug, Clone)]
pub struct PredictionSet {
    pub probs: Array2<f64>,
}

impl PredictionSet {
    pub fn new(probs: Array2<f64>) -> Result<Self> {
        for row in probs.rows() {
            if row.iter().any(|&p| p < 0.0 || !p.is_finite()) {
                return Err(Error::numeric("probabilities must be finite and >= 0"));
            }
            if (row.sum() - 1.0).abs() > 1e-6 {
                return Err(Error::numeric(format!(
                    "probability row sums to {}, not 1",
                    row.sum()
                )));
            }
        }
        Ok(PredictionSet { probs })
    }
}

fn mean_and_cov(x: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = x.nrows();
    let d = x.ncols();
    let mean = x.sum_axis(ndarray::Axis(0)) / n as f64;
    let mut cov = Array2::zeros((d, d));
    for row in x.rows() {
        let c = &row - &mean;
        for i in 0..d {
            for j in 0..d {
                cov[[i, j]] += c[i] * c[j];
            }
        }
    }
    cov /= (n - 1) as f64;
    (mean, cov)
}

const EIG_FLOOR: f64 = 1e-10;

/// Frechet distance between Gaussian fits of two embedding sets:
/// `||mu_g - mu_r||^2 + Tr(S_g + S_r - 2 (S_g S_r)^{1/2})`.
///
/// Covariances use the `1/(n-1)` estimator. The matrix square root goes
/// through the symmetrized product `sqrt(S_g) S_r sqrt(S_g)` with an
/// eigenvalue floor, and the trace term is clamped at zero; both guards only
/// engage on degenerate spectra.
pub fn frechet(gen: &EmbeddingSet, reference: &EmbeddingSet) -> Result<f64> {
    if gen.vectors.ncols() != reference.vectors.ncols() {
        return Err(Error::config("embedding dims differ"));
    }
    if gen.len() < 2 || reference.len() < 2 {
        return Err(Error::config(
            "frechet needs at least 2 samples on each side",
        ));
    }
    let (mu_g, sig_g) = mean_and_cov(&gen.vectors);
    let (mu_r, sig_r) = mean_and_cov(&reference.vectors);

    let a = linalg::sqrt_psd(&sig_g, EIG_FLOOR)?;
    let inner = a.dot(&sig_r).dot(&a);
    let root = linalg::sqrt_psd(&inner, EIG_FLOOR)?;
    let tr_root: f64 = (0..root.nrows()).map(|i| root[[i, i]]).sum();
    let tr_g: f64 = (0..sig_g.nrows()).map(|i| sig_g[[i, i]]).sum();
    let tr_r: f64 = (0..sig_r.nrows()).map(|i| sig_r[[i, i]]).sum();
    let trace_term = (tr_g + tr_r - 2.0 * tr_root).max(0.0);
    let mean_term: f64 = mu_g
        .iter()
        .zip(mu_r.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let value = mean_term + trace_term;
    if !value.is_finite() {
        return Err(Error::numeric("frechet produced a non-finite value"));
    }
    Ok(value)
}

const KL_EPS: f64 = 1e-10;

/// Mean over paired rows of `KL(reference_row || generated_row)` with an
/// epsilon floor on both sides.
pub fn prediction_kl(gen: &PredictionSet, reference: &PredictionSet) -> Result<f64> {
    if gen.probs.nrows() != reference.probs.nrows() {
        return Err(Error::Pairing(format!(
            "prediction sets are unpaired: {} vs {} rows",
            gen.probs.nrows(),
            reference.probs.nrows()
        )));
    }
    if gen.probs.ncols() != reference.probs.ncols() {
        return Err(Error::config("prediction sets disagree on class count"));
    }
    if gen.probs.nrows() == 0 {
        return Err(Error::EmptyInput("no prediction pairs".into()));
    }
    let mut total = 0.0;
    for (g, r) in gen.probs.rows().into_iter().zip(reference.probs.rows()) {
        let mut kl = 0.0;
        for (&q, &p) in g.iter().zip(r.iter()) {
            let p = p.max(KL_EPS);
            let q = q.max(KL_EPS);
            kl += p * (p / q).ln();
        }
        total += kl;
    }
    Ok(total / gen.probs.nrows() as f64)
}

fn euclid(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// k-NN manifold density and coverage.
///
/// With `r_i` the distance from reference point `i` to its `k`-th nearest
/// neighbour within the reference set (self excluded) and strict `<` ball
/// membership:
///
/// - `density  = (1 / (k n_gen)) * sum_j sum_i [d(gen_j, ref_i) < r_i]`
/// - `coverage = (1 / n_ref) * sum_i [exists j: d(gen_j, ref_i) < r_i]`
pub fn density_coverage(
    gen: &EmbeddingSet,
    reference: &EmbeddingSet,
    k: usize,
) -> Result<(f64, f64)> {
    let n_ref = reference.len();
    let n_gen = gen.len();
    if gen.vectors.ncols() != reference.vectors.ncols() {
        return Err(Error::config("embedding dims differ"));
    }
    if k == 0 || k >= n_ref {
        return Err(Error::config(format!(
            "k = {k} must satisfy 1 <= k < n_ref = {n_ref}"
        )));
    }
    if n_gen == 0 {
        return Err(Error::EmptyInput("empty generated set".into()));
    }
    // k-th nearest neighbour radius within the reference set.
    let mut radii = vec![0.0f64; n_ref];
    for (i, radius) in radii.iter_mut().enumerate() {
        let mut dists: Vec<f64> = (0..n_ref)
            .filter(|&j| j != i)
            .map(|j| euclid(reference.vectors.row(i), reference.vectors.row(j)))
            .collect();
        dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
        *radius = dists[k - 1];
    }
    let mut density_hits = 0usize;
    let mut covered = vec![false; n_ref];
    for j in 0..n_gen {
        for i in 0..n_ref {
            let d = euclid(gen.vectors.row(j), reference.vectors.row(i));
            if d < radii[i] {
                density_hits += 1;
                covered[i] = true;
            }
        }
    }
    let density = density_hits as f64 / (k * n_gen) as f64;
    let coverage = covered.iter().filter(|&&c| c).count() as f64 / n_ref as f64;
    Ok((density, coverage))
}

/// Mean cosine similarity over row-paired embeddings, in `[-1, 1]`.
pub fn alignment_score(audio_emb: &Array2<f64>, video_emb: &Array2<f64>) -> Result<f64> {
    if audio_emb.dim() != video_emb.dim() {
        return Err(Error::Pairing("alignment inputs must be row-paired".into()));
    }
    if audio_emb.nrows() == 0 {
        return Err(Error::EmptyInput("no alignment pairs".into()));
    }
    let mut total = 0.0;
    for (i, (a, v)) in audio_emb
        .rows()
        .into_iter()
        .zip(video_emb.rows())
        .enumerate()
    {
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nv == 0.0 {
            return Err(Error::Numeric(format!("zero-norm embedding row {i}")));
        }
        total += a.iter().zip(v.iter()).map(|(x, y)| x * y).sum::<f64>() / (na * nv);
    }
    Ok(total / audio_emb.nrows() as f64)
}

/// Whether smaller or larger values of a metric are better.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    LowerBetter,
    HigherBetter,
}

/// Per-metric ranks of each method (`methods x metrics`), direction-aware,
/// with tied values sharing the mean of their rank positions.
pub fn metric_ranks(table: &Array2<f64>, directions: &[Direction]) -> Result<Array2<f64>> {
    let (n_methods, n_metrics) = table.dim();
    if n_methods < 2 {
        return Err(Error::config("ranking needs at least 2 methods"));
    }
    if directions.len() != n_metrics {
        return Err(Error::config("one direction required per metric"));
    }
    if table.iter().any(|v| v.is_nan()) {
        return Err(Error::Data("NaN cell in rank table".into()));
    }
    let mut ranks = Array2::zeros((n_methods, n_metrics));
    for m in 0..n_metrics {
        let mut order: Vec<usize> = (0..n_methods).collect();
        order.sort_by(|&a, &b| {
            let (x, y) = (table[[a, m]], table[[b, m]]);
            match directions[m] {
                Direction::LowerBetter => x.partial_cmp(&y).unwrap(),
                Direction::HigherBetter => y.partial_cmp(&x).unwrap(),
            }
        });
        // Mean rank over tie groups (exact value equality).
        let mut i = 0;
        while i < n_methods {
            let mut j = i;
            while j + 1 < n_methods && table[[order[j + 1], m]] == table[[order[i], m]] {
                j += 1;
            }
            let mean_rank = (i + 1 + j + 1) as f64 / 2.0;
            for &idx in &order[i..=j] {
                ranks[[idx, m]] = mean_rank;
            }
            i = j + 1;
        }
    }
    Ok(ranks)
}

/// Per-method average rank across metric columns: the mean of each method's
/// [`metric_ranks`] row.
pub fn average_rank(table: &Array2<f64>, directions: &[Direction]) -> Result<Vec<f64>> {
    let ranks = metric_ranks(table, directions)?;
    Ok(ranks
        .rows()
        .into_iter()
        .map(|row| row.sum() / row.len() as f64)
        .collect())
}

/// One method's row in the evaluation report. Missing entries (e.g. a
/// Frechet statistic refused for too few clips) stay `None` and are reported
/// as `N/A`.
#[derive(Debug, Clone, Serialize)]
pub struct MethodMetrics {
    pub method: String,
    pub kl: Option<f64>,
    pub fd: Option<f64>,
    pub fad: Option<f64>,
    pub density: Option<f64>,
    pub coverage: Option<f64>,
    pub alignment: Option<f64>,
    /// Clips excluded because no reference pair was found.
    pub unpaired: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    pub rows: Vec<MethodMetrics>,
    /// Present when at least two methods were evaluated.
    pub average_rank: Option<Vec<f64>>,
}

pub const METRIC_COLUMNS: [(&str, Direction); 6] = [
    ("kl", Direction::LowerBetter),
    ("fd", Direction::LowerBetter),
    ("fad", Direction::LowerBetter),
    ("density", Direction::HigherBetter),
    ("coverage", Direction::HigherBetter),
    ("alignment", Direction::HigherBetter),
];

impl MetricReport {
    /// Compute the AR column over every metric that is present for all rows.
    pub fn with_average_rank(mut self) -> Self {
        if self.rows.len() < 2 {
            self.average_rank = None;
            return self;
        }
        let mut cols = Vec::new();
        let mut dirs = Vec::new();
        for (idx, (_, dir)) in METRIC_COLUMNS.iter().enumerate() {
            if self.rows.iter().all(|r| r.metric(idx).is_some()) {
                cols.push(idx);
                dirs.push(*dir);
            }
        }
        if cols.is_empty() {
            self.average_rank = None;
            return self;
        }
        let table = Array2::from_shape_fn((self.rows.len(), cols.len()), |(r, c)| {
            self.rows[r].metric(cols[c]).unwrap()
        });
        self.average_rank = average_rank(&table, &dirs).ok();
        self
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,kl,fd,fad,density,coverage,alignment");
        if self.average_rank.is_some() {
            out.push_str(",ar");
        }
        out.push('\n');
        for (i, row) in self.rows.iter().enumerate() {
            out.push_str(&row.method);
            for idx in 0..6 {
                out.push(',');
                match row.metric(idx) {
                    Some(v) => out.push_str(&format!("{v:.6}")),
                    None => out.push_str("N/A"),
                }
            }
            if let Some(ar) = &self.average_rank {
                out.push_str(&format!(",{:.4}", ar[i]));
            }
            out.push('\n');
        }
        out
    }
}

impl MethodMetrics {
    fn metric(&self, idx: usize) -> Option<f64> {
        match idx {
            0 => self.kl,
            1 => self.fd,
            2 => self.fad,
            3 => self.density,
            4 => self.coverage,
            5 => self.alignment,
            _ => None,
        }
    }
}
