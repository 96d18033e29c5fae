//! Dataset-construction algorithms.
//!
//! Real posts are matched to fake posts in two stages: first per topic
//! ([`topic_quota`]), then inside each topic by entropic optimal transport
//! over image embeddings ([`sinkhorn`], [`ot_select`]). Fake posts get
//! misinformation types from explicit markers in their flagging posts
//! ([`ingest_flagging`]).

use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{FlaggingRef, Label, MisinfoType, Post, Topic};

pub const DEFAULT_EPS: f64 = 0.05;
pub const DEFAULT_MAX_ITER: usize = 1000;
pub const DEFAULT_TOL: f64 = 1e-6;
const MARGIN_SUM_TOL: f64 = 1e-9;
const MASS_TIE_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurationError {
    #[error("post `{0}` has no topic")]
    MissingTopic(String),
    #[error("marginals do not match the cost matrix: {0}")]
    MarginMismatch(String),
    #[error("scaling overflowed even in the log domain")]
    NonFiniteScaling,
    #[error("topic {topic}: {need} posts to match but only {have} candidates")]
    InsufficientCandidates { topic: Topic, need: usize, have: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Count of fake posts per topic. Real posts are selected to match it.
pub fn topic_quota(fake_posts: &[Post]) -> Result<BTreeMap<Topic, usize>, CurationError> {
    let mut quota = BTreeMap::new();
    for p in fake_posts {
        let t = p.topic.ok_or_else(|| CurationError::MissingTopic(p.id.clone()))?;
        *quota.entry(t).or_insert(0) += 1;
    }
    Ok(quota)
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, CurationError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(CurationError::InvalidInput("ragged matrix".into()));
        }
        Ok(Matrix { rows: rows.len(), cols, data: rows.concat() })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (acc, x) in s.iter_mut().zip(self.row(i)) {
                *acc += x;
            }
        }
        s
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &Matrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// `c_ij = 1 − cos(f_i, r_j)`, rows are fakes and columns candidates.
pub fn cost_matrix(fakes: &[Vec<f64>], candidates: &[Vec<f64>]) -> Result<Matrix, CurationError> {
    let dim = fakes.first().or(candidates.first()).map_or(0, Vec::len);
    for v in fakes.iter().chain(candidates) {
        if v.len() != dim {
            return Err(CurationError::InvalidInput(format!("embedding of dim {} among dim {dim}", v.len())));
        }
        if v.iter().any(|x| !x.is_finite()) || v.iter().all(|x| *x == 0.0) {
            return Err(CurationError::InvalidInput("zero or non-finite embedding".into()));
        }
    }
    let mut data = Vec::with_capacity(fakes.len() * candidates.len());
    for f in fakes {
        for r in candidates {
            data.push(1.0 - cosine(f, r));
        }
    }
    Ok(Matrix { rows: fakes.len(), cols: candidates.len(), data })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    pub plan: Matrix,
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
    pub eps: f64,
    pub iterations: usize,
    /// Whether the marginal violation reached `tol` before `max_iter`.
    pub converged: bool,
    /// Whether the log-domain fallback was used.
    pub log_domain: bool,
}

impl TransportPlan {
    /// L1 violation of the row and column marginals.
    pub fn marginal_violation(&self) -> (f64, f64) {
        let l1 = |a: Vec<f64>, b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>();
        (l1(self.plan.row_sums(), &self.mu), l1(self.plan.col_sums(), &self.nu))
    }

    pub fn cost(&self, c: &Matrix) -> f64 {
        self.plan.dot(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornParams {
    pub eps: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for SinkhornParams {
    fn default() -> Self {
        SinkhornParams { eps: DEFAULT_EPS, max_iter: DEFAULT_MAX_ITER, tol: DEFAULT_TOL }
    }
}

impl SinkhornParams {
    pub fn with_eps(eps: f64) -> Self {
        SinkhornParams { eps, ..Default::default() }
    }
}

fn check_marginal(name: &str, m: &[f64], len: usize) -> Result<(), CurationError> {
    if m.len() != len {
        return Err(CurationError::MarginMismatch(format!("{name} has length {} but needs {len}", m.len())));
    }
    if m.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(CurationError::MarginMismatch(format!("{name} has a negative or non-finite entry")));
    }
    let s: f64 = m.iter().sum();
    if (s - 1.0).abs() > MARGIN_SUM_TOL {
        return Err(CurationError::MarginMismatch(format!("{name} sums to {s}")));
    }
    Ok(())
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Entropic optimal transport by alternating marginal scaling.
///
/// Works with `K = exp(−C/ε)` directly when the cost range is at most
/// `PLAIN_RANGE` times ε and the scaling stays finite. Otherwise runs the
/// same updates on log potentials, with ε halved stage by stage from the
/// cost range down to the target and each stage warm-started from the last.
/// Stops when the L1 row-marginal violation at the target ε (columns are
/// exact after each update) is at most `tol`, or after `max_iter`
/// iterations in total.
pub fn sinkhorn(c: &Matrix, mu: &[f64], nu: &[f64], p: SinkhornParams) -> Result<TransportPlan, CurationError> {
    check_marginal("mu", mu, c.rows)?;
    check_marginal("nu", nu, c.cols)?;
    if !(p.eps > 0.0 && p.eps.is_finite()) {
        return Err(CurationError::InvalidInput(format!("eps must be positive, got {}", p.eps)));
    }
    if c.data.iter().any(|x| !x.is_finite()) {
        return Err(CurationError::InvalidInput("cost matrix has a non-finite entry".into()));
    }
    let range =
        c.data.iter().copied().fold(f64::NEG_INFINITY, f64::max) - c.data.iter().copied().fold(f64::INFINITY, f64::min);
    if range <= PLAIN_RANGE * p.eps {
        if let Some(plan) = sinkhorn_plain(c, mu, nu, p) {
            return Ok(plan);
        }
    }
    sinkhorn_log(c, mu, nu, p, range)
}

/// Largest cost range, in units of ε, handled without log potentials.
const PLAIN_RANGE: f64 = 30.0;
/// Iterations allowed per intermediate ε stage.
const STAGE_ITERS: usize = 50;

fn sinkhorn_plain(c: &Matrix, mu: &[f64], nu: &[f64], p: SinkhornParams) -> Option<TransportPlan> {
    let (n, m) = (c.rows, c.cols);
    let k: Vec<f64> = c.data.iter().map(|x| (-x / p.eps).exp()).collect();
    let mut u = vec![1.0; n];
    let mut v = vec![1.0; m];
    let mut iterations = 0;
    let mut converged = false;
    let mut rows = vec![0.0; n];
    while iterations < p.max_iter {
        iterations += 1;
        for i in 0..n {
            let kv: f64 = (0..m).map(|j| k[i * m + j] * v[j]).sum();
            u[i] = if mu[i] == 0.0 { 0.0 } else { mu[i] / kv };
        }
        for j in 0..m {
            let ku: f64 = (0..n).map(|i| k[i * m + j] * u[i]).sum();
            v[j] = if nu[j] == 0.0 { 0.0 } else { nu[j] / ku };
        }
        if u.iter().chain(&v).any(|x| !x.is_finite()) {
            return None;
        }
        for (i, r) in rows.iter_mut().enumerate() {
            *r = u[i] * (0..m).map(|j| k[i * m + j] * v[j]).sum::<f64>();
        }
        if l1(&rows, mu) <= p.tol {
            converged = true;
            break;
        }
    }
    let data = (0..n * m).map(|idx| u[idx / m] * k[idx] * v[idx % m]).collect::<Vec<_>>();
    if data.iter().any(|x| !x.is_finite()) {
        return None;
    }
    Some(TransportPlan {
        plan: Matrix { rows: n, cols: m, data },
        mu: mu.to_vec(),
        nu: nu.to_vec(),
        eps: p.eps,
        iterations,
        converged,
        log_domain: false,
    })
}

fn logsumexp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn sinkhorn_log(
    c: &Matrix,
    mu: &[f64],
    nu: &[f64],
    p: SinkhornParams,
    range: f64,
) -> Result<TransportPlan, CurationError> {
    let (n, m) = (c.rows, c.cols);
    let log_mu: Vec<f64> = mu.iter().map(|x| x.ln()).collect();
    let log_nu: Vec<f64> = nu.iter().map(|x| x.ln()).collect();
    // Potentials in cost units: P_ij = exp((f_i + g_j − C_ij) / eps).
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let log_p = |f: &[f64], g: &[f64], eps: f64, i: usize, j: usize| (f[i] + g[j] - c.get(i, j)) / eps;
    let mut stages = Vec::new();
    let mut e = p.eps;
    while e < range / 2.0 {
        e *= 2.0;
        stages.push(e);
    }
    stages.reverse();
    stages.push(p.eps);

    let mut iterations = 0;
    let mut converged = false;
    let last = stages.len() - 1;
    for (stage, &eps) in stages.iter().enumerate() {
        let budget = if stage == last {
            p.max_iter.saturating_sub(iterations)
        } else {
            STAGE_ITERS.min(p.max_iter / (2 * last))
        };
        let mut used = 0;
        while used < budget {
            used += 1;
            iterations += 1;
            for i in 0..n {
                let s = logsumexp((0..m).map(|j| (g[j] - c.get(i, j)) / eps));
                f[i] = if mu[i] == 0.0 { f64::NEG_INFINITY } else { eps * (log_mu[i] - s) };
            }
            for j in 0..m {
                let s = logsumexp((0..n).map(|i| (f[i] - c.get(i, j)) / eps));
                g[j] = if nu[j] == 0.0 { f64::NEG_INFINITY } else { eps * (log_nu[j] - s) };
            }
            if f.iter().chain(&g).any(|x| x.is_nan() || *x == f64::INFINITY) {
                return Err(CurationError::NonFiniteScaling);
            }
            let rows: Vec<f64> = (0..n).map(|i| (0..m).map(|j| log_p(&f, &g, eps, i, j).exp()).sum()).collect();
            if l1(&rows, mu) <= p.tol {
                converged = stage == last;
                break;
            }
        }
    }
    let data: Vec<f64> = (0..n * m).map(|idx| log_p(&f, &g, p.eps, idx / m, idx % m).exp()).collect();
    if data.iter().any(|x| !x.is_finite()) {
        return Err(CurationError::NonFiniteScaling);
    }
    Ok(TransportPlan {
        plan: Matrix { rows: n, cols: m, data },
        mu: mu.to_vec(),
        nu: nu.to_vec(),
        eps: p.eps,
        iterations,
        converged,
        log_domain: true,
    })
}

/// One row per fake: repeatedly takes the largest remaining plan entry whose
/// row and column are both free.
///
/// Plan masses equal to within 1e-6 of the largest entry count as ties and
/// go to the lower cost, then to the lower (row, column). Ties are common:
/// with uniform marginals over a larger candidate pool, every column carries
/// the same total mass.
pub fn greedy_assignment(plan: &Matrix, cost: &Matrix) -> Vec<usize> {
    let max = plan.data.iter().copied().fold(0.0, f64::max);
    let quantum = if max > 0.0 { max * MASS_TIE_TOL } else { 1.0 };
    let mass = |i: usize, j: usize| (plan.get(i, j) / quantum).round() as i64;
    let mut entries: Vec<(usize, usize)> = (0..plan.rows).flat_map(|i| (0..plan.cols).map(move |j| (i, j))).collect();
    entries.sort_by(|a, b| {
        mass(b.0, b.1).cmp(&mass(a.0, a.1)).then(cost.get(a.0, a.1).total_cmp(&cost.get(b.0, b.1))).then(a.cmp(b))
    });
    let mut assigned = vec![usize::MAX; plan.rows];
    let mut taken = vec![false; plan.cols];
    let mut left = plan.rows.min(plan.cols);
    for (i, j) in entries {
        if left == 0 {
            break;
        }
        if assigned[i] == usize::MAX && !taken[j] {
            assigned[i] = j;
            taken[j] = true;
            left -= 1;
        }
    }
    assigned
}

/// An embedded post.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedded {
    pub id: String,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub fake_id: String,
    pub candidate_id: String,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSelection {
    pub matches: Vec<Match>,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub topics: BTreeMap<Topic, TopicSelection>,
    pub total_cost: f64,
}

impl SelectionResult {
    pub fn counts(&self) -> BTreeMap<Topic, usize> {
        self.topics.iter().map(|(t, s)| (*t, s.matches.len())).collect()
    }

    pub fn chosen(&self) -> Vec<&str> {
        self.topics.values().flat_map(|s| s.matches.iter().map(|m| m.candidate_id.as_str())).collect()
    }
}

/// Selects one candidate real post per fake post inside each topic.
///
/// Per topic: cosine cost matrix, Sinkhorn with uniform marginals over the
/// fakes and over the whole candidate pool, then [`greedy_assignment`].
/// Topics run in parallel.
pub fn ot_select(
    fakes: &BTreeMap<Topic, Vec<Embedded>>,
    candidates: &BTreeMap<Topic, Vec<Embedded>>,
    quota: &BTreeMap<Topic, usize>,
    params: SinkhornParams,
) -> Result<SelectionResult, CurationError> {
    let empty = Vec::new();
    let mut jobs = Vec::new();
    for (&topic, &need) in quota {
        let f = fakes.get(&topic).unwrap_or(&empty);
        if f.len() != need {
            return Err(CurationError::InvalidInput(format!("topic {topic}: quota {need} but {} fake posts", f.len())));
        }
        let c = candidates.get(&topic).unwrap_or(&empty);
        if c.len() < need {
            return Err(CurationError::InsufficientCandidates { topic, need, have: c.len() });
        }
        if need > 0 {
            jobs.push((topic, f, c));
        }
    }
    let results = jobs
        .into_par_iter()
        .map(|(topic, f, c)| select_topic(f, c, params).map(|s| (topic, s)))
        .collect::<Result<Vec<_>, _>>()?;
    let topics: BTreeMap<_, _> = results.into_iter().collect();
    let total_cost = topics.values().map(|s| s.cost).sum();
    Ok(SelectionResult { topics, total_cost })
}

fn select_topic(
    fakes: &[Embedded],
    cands: &[Embedded],
    params: SinkhornParams,
) -> Result<TopicSelection, CurationError> {
    let fv: Vec<Vec<f64>> = fakes.iter().map(|e| e.vector.clone()).collect();
    let cv: Vec<Vec<f64>> = cands.iter().map(|e| e.vector.clone()).collect();
    let c = cost_matrix(&fv, &cv)?;
    let mu = vec![1.0 / fakes.len() as f64; fakes.len()];
    let nu = vec![1.0 / cands.len() as f64; cands.len()];
    let plan = sinkhorn(&c, &mu, &nu, params)?;
    let assignment = greedy_assignment(&plan.plan, &c);
    let matches: Vec<Match> = assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| Match { fake_id: fakes[i].id.clone(), candidate_id: cands[j].id.clone(), cost: c.get(i, j) })
        .collect();
    Ok(TopicSelection {
        cost: matches.iter().map(|m| m.cost).sum(),
        matches,
        iterations: plan.iterations,
        converged: plan.converged,
    })
}

/// Marker phrases that assign a misinformation type. Matching is
/// case-insensitive on word boundaries; nothing else is inferred.
pub const FLAG_RULES: &[(&str, MisinfoType)] = &[
    ("ai-generated", MisinfoType::Deepfake),
    ("ai generated", MisinfoType::Deepfake),
    ("generated by ai", MisinfoType::Deepfake),
    ("deepfake", MisinfoType::Deepfake),
    ("deep fake", MisinfoType::Deepfake),
    ("manipulated", MisinfoType::Deepfake),
    ("doctored", MisinfoType::Deepfake),
    ("photoshopped", MisinfoType::Deepfake),
    ("digitally altered", MisinfoType::Deepfake),
    ("edited image", MisinfoType::Deepfake),
    ("old photo", MisinfoType::ImageOOC),
    ("old image", MisinfoType::ImageOOC),
    ("old video", MisinfoType::ImageOOC),
    ("different event", MisinfoType::ImageOOC),
    ("unrelated event", MisinfoType::ImageOOC),
    ("out of context", MisinfoType::ImageOOC),
    ("out-of-context", MisinfoType::ImageOOC),
    ("false claim", MisinfoType::TextMisleading),
    ("claim is false", MisinfoType::TextMisleading),
    ("fabricated quote", MisinfoType::TextMisleading),
    ("never said", MisinfoType::TextMisleading),
    ("misleading claim", MisinfoType::TextMisleading),
];

static FLAG_PATTERNS: LazyLock<Vec<(Regex, MisinfoType)>> = LazyLock::new(|| {
    FLAG_RULES
        .iter()
        .map(|(marker, t)| {
            let pat = regex::escape(marker).replace(' ', r"\s+");
            (Regex::new(&format!(r"(?i)\b{pat}\b")).expect("rule is a valid pattern"), *t)
        })
        .collect()
});

/// One rule hit: which flag, which rule, and the text that matched.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagMatch {
    pub flag_index: usize,
    pub marker: String,
    pub matched: String,
    pub misinfo_type: MisinfoType,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagAnnotation {
    pub types: BTreeSet<MisinfoType>,
    pub matches: Vec<FlagMatch>,
    /// Set when no rule matched; the post needs a human annotator.
    pub needs_manual_review: bool,
}

/// Misinformation types stated explicitly in the flagging posts, by
/// [`FLAG_RULES`]. The post must not be labelled real.
pub fn ingest_flagging(post: &Post, flags: &[FlaggingRef]) -> Result<FlagAnnotation, CurationError> {
    if post.label == Some(Label::Real) {
        return Err(CurationError::InvalidInput(format!("post `{}` is labelled real", post.id)));
    }
    let mut ann = FlagAnnotation::default();
    for (flag_index, flag) in flags.iter().enumerate() {
        for ((re, t), (marker, _)) in FLAG_PATTERNS.iter().zip(FLAG_RULES) {
            if let Some(m) = re.find(&flag.text) {
                ann.types.insert(*t);
                ann.matches.push(FlagMatch {
                    flag_index,
                    marker: marker.to_string(),
                    matched: m.as_str().to_string(),
                    misinfo_type: *t,
                });
            }
        }
    }
    ann.needs_manual_review = ann.types.is_empty();
    Ok(ann)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub total: usize,
    pub real: usize,
    pub fake: usize,
    pub unlabeled: usize,
    pub by_topic: BTreeMap<Topic, usize>,
    pub no_topic: usize,
    /// Keyed `YYYY-MM`.
    pub by_month: BTreeMap<String, usize>,
    /// Over fake posts; a post counts once per type it carries.
    pub by_type: BTreeMap<MisinfoType, usize>,
}

pub fn dataset_stats(posts: &[Post]) -> DatasetStats {
    let mut s = DatasetStats {
        by_topic: Topic::ALL.iter().map(|t| (*t, 0)).collect(),
        by_type: MisinfoType::ALL.iter().map(|t| (*t, 0)).collect(),
        ..Default::default()
    };
    for p in posts {
        s.total += 1;
        match p.label {
            Some(Label::Real) => s.real += 1,
            Some(Label::Fake) => s.fake += 1,
            None => s.unlabeled += 1,
        }
        match p.topic {
            Some(t) => *s.by_topic.entry(t).or_insert(0) += 1,
            None => s.no_topic += 1,
        }
        *s.by_month.entry(p.date.format("%Y-%m").to_string()).or_insert(0) += 1;
        if p.label == Some(Label::Fake) {
            for t in &p.misinfo_types {
                *s.by_type.entry(*t).or_insert(0) += 1;
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn one_by_one() {
        let p = sinkhorn(&m(&[&[0.0]]), &[1.0], &[1.0], SinkhornParams::default()).unwrap();
        assert!((p.plan.get(0, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_optimum() {
        let p = sinkhorn(&m(&[&[0.0, 1.0], &[1.0, 0.0]]), &[0.5, 0.5], &[0.5, 0.5], SinkhornParams::with_eps(0.01))
            .unwrap();
        for (i, j, want) in [(0, 0, 0.5), (0, 1, 0.0), (1, 0, 0.0), (1, 1, 0.5)] {
            assert!((p.plan.get(i, j) - want).abs() < 1e-3, "{i},{j}: {}", p.plan.get(i, j));
        }
    }

    #[test]
    fn tiny_eps_uses_log_domain() {
        let p = sinkhorn(&m(&[&[1.5, 2.0], &[2.0, 1.5]]), &[0.5, 0.5], &[0.5, 0.5], SinkhornParams::with_eps(1e-3))
            .unwrap();
        assert!(p.log_domain);
        assert!(p.converged);
        assert!((p.plan.get(0, 0) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn marginal_checks() {
        let c = m(&[&[0.0, 1.0]]);
        assert!(matches!(
            sinkhorn(&c, &[1.0], &[0.7, 0.7], SinkhornParams::default()),
            Err(CurationError::MarginMismatch(_))
        ));
        assert!(matches!(
            sinkhorn(&c, &[1.0], &[1.0], SinkhornParams::default()),
            Err(CurationError::MarginMismatch(_))
        ));
        assert!(sinkhorn(&c, &[1.0], &[0.5, 0.5], SinkhornParams::with_eps(0.0)).is_err());
    }

    #[test]
    fn greedy_tie_break() {
        let flat = m(&[&[0.25, 0.25], &[0.25, 0.25]]);
        assert_eq!(greedy_assignment(&flat, &m(&[&[0.0, 0.0], &[0.0, 0.0]])), vec![0, 1]);
        assert_eq!(greedy_assignment(&flat, &m(&[&[0.5, 0.1], &[0.0, 0.0]])), vec![1, 0]);
    }

    #[test]
    fn flag_rules() {
        let line = format!(
            r#"{{"id":"p","text":"t","date":"2024-01-01","label":"fake","images":[{{"sha256":"{}"}}]}}"#,
            "a".repeat(64)
        );
        let post = |_: ()| Post::from_json_line(&line, &Default::default()).unwrap();
        let f = |t: &str| FlaggingRef { url: String::new(), text: t.into() };
        let a = ingest_flagging(&post(()), &[f("this photo is from the 2019 earthquake, different event")]).unwrap();
        assert_eq!(a.types, BTreeSet::from([MisinfoType::ImageOOC]));
        let a = ingest_flagging(&post(()), &[f("AI-generated image and the claim is false")]).unwrap();
        assert_eq!(a.types, BTreeSet::from([MisinfoType::Deepfake, MisinfoType::TextMisleading]));
        assert_eq!(a.matches[0].matched, "AI-generated");
        let a = ingest_flagging(&post(()), &[f("misleading")]).unwrap();
        assert!(a.types.is_empty() && a.needs_manual_review);
    }
}
