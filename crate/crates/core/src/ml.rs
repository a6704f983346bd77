//! Regularized linear models and the repeated-split evaluation protocol.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::stats::{mean, summarize, wilcoxon_signed_rank, Summary, TestResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Logistic,
    Ridge,
}

impl ModelKind {
    pub fn metric_name(self) -> &'static str {
        match self {
            ModelKind::Logistic => "accuracy",
            ModelKind::Ridge => "mse",
        }
    }

    fn better(self, a: f64, b: f64) -> bool {
        match self {
            ModelKind::Logistic => a > b,
            ModelKind::Ridge => a < b,
        }
    }
}

pub const GRAD_TOLERANCE: f64 = 1e-8;
const MAX_NEWTON_STEPS: usize = 200;

/// The regularization grid `2^-8, ..., 2^1`.
pub fn lambda_grid() -> Vec<f64> {
    (-8..=1).map(|e| 2f64.powi(e)).collect()
}

/// Per-column train-set mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Scaler> {
        let first = rows
            .first()
            .ok_or_else(|| Error::InvalidArgument("cannot standardize an empty matrix".into()))?;
        let d = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for ((v, x), m) in var.iter_mut().zip(r).zip(&mean) {
                *v += (x - m).powi(2);
            }
        }
        let std = var.into_iter().map(|v| (v / n).sqrt()).collect();
        Ok(Scaler { mean, std })
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| if *s > 0.0 { (x - m) / s } else { 0.0 })
            .collect()
    }

    pub fn transform(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.transform_row(r)).collect()
    }
}

/// Fits a scaler on `train` and returns it with the transformed matrix.
pub fn standardize(train: &[Vec<f64>]) -> Result<(Scaler, Vec<Vec<f64>>)> {
    let s = Scaler::fit(train)?;
    let t = s.transform(train);
    Ok((s, t))
}

/// Column means of the non-missing training values, zero for an all-missing
/// column.
pub fn imputation_means(train: &[Vec<f64>]) -> Vec<f64> {
    let d = train.first().map_or(0, Vec::len);
    (0..d)
        .map(|j| {
            let present: Vec<f64> = train.iter().map(|r| r[j]).filter(|v| !v.is_nan()).collect();
            if present.is_empty() {
                0.0
            } else {
                mean(&present)
            }
        })
        .collect()
}

pub fn impute(rows: &mut [Vec<f64>], means: &[f64]) {
    for r in rows {
        for (x, m) in r.iter_mut().zip(means) {
            if x.is_nan() {
                *x = *m;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub kind: ModelKind,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn dot(w: &[f64], x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum()
}

impl LinearModel {
    pub fn score(&self, row: &[f64]) -> f64 {
        dot(&self.weights, row) + self.intercept
    }

    /// Probability of the positive class for logistic models, the fitted
    /// value for ridge models.
    pub fn predict(&self, row: &[f64]) -> f64 {
        match self.kind {
            ModelKind::Logistic => sigmoid(self.score(row)),
            ModelKind::Ridge => self.score(row),
        }
    }

    /// Accuracy for logistic models, mean squared error for ridge models.
    pub fn evaluate(&self, x: &[Vec<f64>], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        match self.kind {
            ModelKind::Logistic => {
                let hits = x
                    .iter()
                    .zip(y)
                    .filter(|(r, &t)| (self.score(r) >= 0.0) == (t >= 0.5))
                    .count();
                hits as f64 / n
            }
            ModelKind::Ridge => {
                x.iter()
                    .zip(y)
                    .map(|(r, t)| (self.score(r) - t).powi(2))
                    .sum::<f64>()
                    / n
            }
        }
    }

    pub fn weight_norm(&self) -> f64 {
        dot(&self.weights, &self.weights).sqrt()
    }
}

/// Regularized objective at `params = [w..., b]`.
pub fn objective(kind: ModelKind, x: &[Vec<f64>], y: &[f64], lambda: f64, params: &[f64]) -> f64 {
    let (w, b) = params.split_at(params.len() - 1);
    let n = x.len() as f64;
    let loss: f64 = x
        .iter()
        .zip(y)
        .map(|(r, &t)| {
            let z = dot(w, r) + b[0];
            match kind {
                ModelKind::Logistic => softplus(z) - t * z,
                ModelKind::Ridge => (t - z).powi(2),
            }
        })
        .sum();
    loss / n + 0.5 * lambda * dot(w, w)
}

/// Gradient of [`objective`] with respect to `[w..., b]`.
pub fn gradient(kind: ModelKind, x: &[Vec<f64>], y: &[f64], lambda: f64, params: &[f64]) -> Vec<f64> {
    let d = params.len() - 1;
    let (w, b) = params.split_at(d);
    let n = x.len() as f64;
    let mut g = vec![0.0; d + 1];
    for (r, &t) in x.iter().zip(y) {
        let z = dot(w, r) + b[0];
        let resid = match kind {
            ModelKind::Logistic => sigmoid(z) - t,
            ModelKind::Ridge => 2.0 * (z - t),
        };
        for (gj, xj) in g.iter_mut().zip(r) {
            *gj += resid * xj;
        }
        g[d] += resid;
    }
    for (j, gj) in g.iter_mut().enumerate() {
        *gj /= n;
        if j < d {
            *gj += lambda * w[j];
        }
    }
    g
}

fn hessian(kind: ModelKind, x: &[Vec<f64>], lambda: f64, params: &[f64]) -> DMatrix<f64> {
    let d = params.len() - 1;
    let n = x.len() as f64;
    let mut h = DMatrix::<f64>::zeros(d + 1, d + 1);
    let mut z = vec![1.0; d + 1];
    for r in x {
        z[..d].copy_from_slice(r);
        let s = match kind {
            ModelKind::Logistic => {
                let p = sigmoid(dot(&params[..d], r) + params[d]);
                p * (1.0 - p)
            }
            ModelKind::Ridge => 2.0,
        };
        for i in 0..=d {
            let zi = s * z[i];
            for j in i..=d {
                h[(i, j)] += zi * z[j];
            }
        }
    }
    for i in 0..=d {
        for j in i..=d {
            h[(i, j)] /= n;
            h[(j, i)] = h[(i, j)];
        }
        if i < d {
            h[(i, i)] += lambda;
        }
    }
    h
}

fn solve(h: DMatrix<f64>, g: &[f64]) -> Option<DVector<f64>> {
    let rhs = DVector::from_column_slice(g);
    if let Some(ch) = h.clone().cholesky() {
        return Some(ch.solve(&rhs));
    }
    let bump = 1e-10 * h.trace().abs().max(1.0);
    let damped = &h + DMatrix::<f64>::identity(h.nrows(), h.ncols()) * bump;
    damped.cholesky().map(|ch| ch.solve(&rhs))
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Minimizes the regularized loss by damped Newton iterations from zero.
pub fn fit(kind: ModelKind, x: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<LinearModel> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(
            "design and response differ in length".into(),
        ));
    }
    if x.len() < 2 {
        return Err(Error::InvalidArgument("fitting needs at least two rows".into()));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidArgument("ragged design matrix".into()));
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("fitting input".into()));
    }
    let mut params = vec![0.0; d + 1];
    let mut f = objective(kind, x, y, lambda, &params);
    for _ in 0..MAX_NEWTON_STEPS {
        let g = gradient(kind, x, y, lambda, &params);
        if norm(&g) < GRAD_TOLERANCE {
            break;
        }
        let step = solve(hessian(kind, x, lambda, &params), &g)
            .ok_or_else(|| Error::NonFinite("singular Newton system".into()))?;
        let slope: f64 = g.iter().zip(step.iter()).map(|(a, b)| a * b).sum();
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-12 {
            let cand: Vec<f64> = params.iter().zip(step.iter()).map(|(p, s)| p - t * s).collect();
            let fc = objective(kind, x, y, lambda, &cand);
            if fc <= f - 1e-4 * t * slope {
                params = cand;
                f = fc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("fitted parameters".into()));
    }
    let intercept = params.pop().unwrap_or(0.0);
    Ok(LinearModel {
        kind,
        weights: params,
        intercept,
        lambda,
    })
}

/// Rounded 70/10/20 sizes for `n` units; validation and test get at least
/// one unit each.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let val = ((0.1 * n as f64).round() as usize).max(1);
    let test = ((0.2 * n as f64).round() as usize).max(1);
    let train = n.saturating_sub(val + test);
    (train, val, test)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub repeats: usize,
    pub seed: u64,
    /// Resampling attempts per repeat before giving up on a degenerate split.
    pub max_retries: usize,
    pub grid: Vec<f64>,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            repeats: 30,
            seed: 0,
            max_retries: 100,
            grid: lambda_grid(),
        }
    }
}

impl ProtocolConfig {
    pub fn with_seed(seed: u64, repeats: usize) -> Self {
        ProtocolConfig {
            repeats,
            seed,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub repeat: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub lambda: f64,
    pub metric: f64,
    /// Majority class (logistic) or train-mean (ridge) predictor on the same
    /// test split.
    pub baseline: f64,
    pub weights: Vec<f64>,
    pub intercept: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub kind: ModelKind,
    pub metric: String,
    pub families: Vec<String>,
    pub feature_names: Vec<String>,
    pub runs: Vec<RunOutcome>,
    pub summary: Summary,
    pub baseline: Summary,
    pub coef_means: Vec<f64>,
}

impl EvalReport {
    pub fn metrics(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.metric).collect()
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.lambda).collect()
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        let i = self.feature_names.iter().position(|n| n == name)?;
        Some(self.coef_means[i])
    }
}

struct Prepared {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    /// Row indices grouped into split units.
    units: Vec<Vec<usize>>,
}

fn prepare(data: &Dataset, kind: ModelKind, cols: &[usize]) -> Prepared {
    let keep: Vec<usize> = (0..data.rows.len())
        .filter(|&i| kind == ModelKind::Logistic || data.rows[i].target.is_some())
        .collect();
    let x = keep
        .iter()
        .map(|&i| cols.iter().map(|&c| data.rows[i].features[c]).collect())
        .collect();
    let y = keep
        .iter()
        .map(|&i| match kind {
            ModelKind::Logistic => f64::from(u8::from(data.rows[i].label)),
            ModelKind::Ridge => data.rows[i].target.unwrap_or(f64::NAN),
        })
        .collect();
    let mut units: Vec<Vec<usize>> = Vec::new();
    let mut by_pair: std::collections::BTreeMap<u64, usize> = Default::default();
    for (pos, &i) in keep.iter().enumerate() {
        match data.rows[i].pair_id {
            Some(p) => {
                let u = *by_pair.entry(p).or_insert_with(|| {
                    units.push(Vec::new());
                    units.len() - 1
                });
                units[u].push(pos);
            }
            None => units.push(vec![pos]),
        }
    }
    Prepared { x, y, units }
}

fn gather(p: &Prepared, units: &[usize]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let idx: Vec<usize> = units.iter().flat_map(|&u| p.units[u].iter().copied()).collect();
    (
        idx.iter().map(|&i| p.x[i].clone()).collect(),
        idx.iter().map(|&i| p.y[i]).collect(),
    )
}

fn degenerate(kind: ModelKind, y: &[f64]) -> bool {
    y.len() < 2 || (kind == ModelKind::Logistic && y.iter().all(|&v| v == y[0]))
}

fn baseline_metric(kind: ModelKind, train_y: &[f64], test_y: &[f64]) -> f64 {
    let n = test_y.len() as f64;
    match kind {
        ModelKind::Logistic => {
            let pos = train_y.iter().filter(|&&v| v >= 0.5).count();
            let guess = if 2 * pos >= train_y.len() { 1.0 } else { 0.0 };
            test_y.iter().filter(|&&v| v == guess).count() as f64 / n
        }
        ModelKind::Ridge => {
            let m = mean(train_y);
            test_y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n
        }
    }
}

fn one_repeat(p: &Prepared, kind: ModelKind, cfg: &ProtocolConfig, repeat: usize) -> Result<RunOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(repeat as u64);
    let (n_train, n_val, _) = split_sizes(p.units.len());
    let mut order: Vec<usize> = (0..p.units.len()).collect();
    for _ in 0..=cfg.max_retries {
        order.shuffle(&mut rng);
        let (train_u, rest) = order.split_at(n_train);
        let (val_u, test_u) = rest.split_at(n_val);
        let (mut xtr, ytr) = gather(p, train_u);
        if degenerate(kind, &ytr) {
            continue;
        }
        let (mut xva, yva) = gather(p, val_u);
        let (mut xte, yte) = gather(p, test_u);
        let means = imputation_means(&xtr);
        impute(&mut xtr, &means);
        impute(&mut xva, &means);
        impute(&mut xte, &means);
        let (scaler, xtr) = standardize(&xtr)?;
        let xva = scaler.transform(&xva);
        let xte = scaler.transform(&xte);

        let mut best: Option<(f64, LinearModel)> = None;
        for &lambda in &cfg.grid {
            let model = fit(kind, &xtr, &ytr, lambda)?;
            let v = model.evaluate(&xva, &yva);
            let replace = match &best {
                None => true,
                Some((bv, _)) => kind.better(v, *bv) || v == *bv,
            };
            if replace {
                best = Some((v, model));
            }
        }
        let (_, model) = best.ok_or_else(|| Error::Config("empty lambda grid".into()))?;
        return Ok(RunOutcome {
            repeat,
            train: ytr.len(),
            val: yva.len(),
            test: yte.len(),
            lambda: model.lambda,
            metric: model.evaluate(&xte, &yte),
            baseline: baseline_metric(kind, &ytr, &yte),
            weights: model.weights,
            intercept: model.intercept,
        });
    }
    Err(Error::DegenerateSplit(repeat))
}

/// Repeated random-split evaluation over the columns of `families` (all
/// columns for `None`).
///
/// Rows sharing a `pair_id` are kept on the same side of every split. Missing
/// values are replaced by training means before standardization. The
/// regularization strength is chosen on the validation split; ties go to the
/// larger value.
pub fn run_protocol(
    data: &Dataset,
    kind: ModelKind,
    families: Option<&[&str]>,
    cfg: &ProtocolConfig,
) -> Result<EvalReport> {
    if cfg.repeats == 0 {
        return Err(Error::InvalidArgument("at least one repeat is required".into()));
    }
    let cols = data.columns(families);
    if cols.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no feature columns for {families:?}"
        )));
    }
    let prepared = prepare(data, kind, &cols);
    if prepared.y.len() < 10 {
        return Err(Error::InvalidArgument(format!(
            "evaluation needs at least 10 rows, got {}",
            prepared.y.len()
        )));
    }
    let runs = (0..cfg.repeats)
        .into_par_iter()
        .map(|r| one_repeat(&prepared, kind, cfg, r))
        .collect::<Result<Vec<_>>>()?;
    let metrics: Vec<f64> = runs.iter().map(|r| r.metric).collect();
    let base: Vec<f64> = runs.iter().map(|r| r.baseline).collect();
    let coef_means = (0..cols.len())
        .map(|j| mean(&runs.iter().map(|r| r.weights[j]).collect::<Vec<_>>()))
        .collect();
    Ok(EvalReport {
        kind,
        metric: kind.metric_name().to_owned(),
        families: families.map_or_else(
            || data.family_names(),
            |fs| fs.iter().map(|s| s.to_string()).collect(),
        ),
        feature_names: cols.iter().map(|&c| data.feature_names[c].clone()).collect(),
        summary: summarize(&metrics),
        baseline: summarize(&base),
        runs,
        coef_means,
    })
}

/// Wilcoxon signed-rank comparison of two reports over paired runs.
pub fn compare_reports(a: &EvalReport, b: &EvalReport) -> Result<TestResult> {
    if a.runs.len() != b.runs.len() || a.kind != b.kind {
        return Err(Error::InvalidArgument("reports are not paired".into()));
    }
    wilcoxon_signed_rank(&a.metrics(), &b.metrics())
}
