//! Stratified cross-validation, classification metrics, 2-D feature
//! projections and group connectivity-difference maps.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::datamodel::{format_sig9, write_matrix_csv, Cohort, Subject};
use crate::error::{Error, Result};
use crate::linalg::{row_mean, squared_distance, Mat};
use crate::rng::{derive_seed, stream};
use crate::trainer::{prepare_all, train_stage1, train_stage2, TrainState};

pub const DEFAULT_FOLDS: usize = 10;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    /// Fold of every subject, in cohort order.
    pub assignment: Vec<usize>,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] != fold).collect()
    }
}

/// Stratified folds: each class is shuffled and dealt round-robin, the second
/// class continuing where the first stopped so fold sizes stay balanced.
pub fn make_folds(labels: &[usize], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 || k > labels.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot split {} subjects into {k} folds",
            labels.len()
        )));
    }
    let mut assignment = vec![0; labels.len()];
    let mut next = 0;
    for class in 0..2 {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut stream(seed, "folds", class as u64));
        for i in members {
            assignment[i] = next % k;
            next += 1;
        }
    }
    Ok(FoldPlan { k, seed, assignment })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub acc: f64,
    /// Undefined without positives.
    pub sen: Option<f64>,
    /// Undefined without negatives.
    pub spec: Option<f64>,
    /// Undefined unless both classes are present.
    pub auc: Option<f64>,
}

/// Probability that a random positive outranks a random negative, ties counting half.
pub fn auc(labels: &[usize], scores: &[f64]) -> Option<f64> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // average ranks over tie groups
    let mut rank = vec![0.0; scores.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &t in &idx[i..=j] {
            rank[t] = avg;
        }
        i = j + 1;
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let rank_sum: f64 = (0..labels.len()).filter(|&i| labels[i] == 1).map(|i| rank[i]).sum();
    let pos_f = pos as f64;
    Some((rank_sum - pos_f * (pos_f + 1.0) / 2.0) / (pos_f * neg as f64))
}

/// Class 1 is positive; a score at or above the threshold predicts it.
pub fn compute_metrics(labels: &[usize], scores: &[f64], threshold: f64) -> Result<Metrics> {
    if labels.len() != scores.len() || labels.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} labels against {} scores",
            labels.len(),
            scores.len()
        )));
    }
    let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
    for (&l, &s) in labels.iter().zip(scores) {
        match (l == 1, s >= threshold) {
            (true, true) => tp += 1,
            (true, false) => fn_ += 1,
            (false, true) => fp += 1,
            (false, false) => tn += 1,
        }
    }
    let ratio = |a: usize, b: usize| if a + b > 0 { Some(a as f64 / (a + b) as f64) } else { None };
    Ok(Metrics {
        n: labels.len(),
        tp,
        tn,
        fp,
        fn_,
        acc: (tp + tn) as f64 / labels.len() as f64,
        sen: ratio(tp, fn_),
        spec: ratio(tn, fp),
        auc: auc(labels, scores),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub acc: f64,
    pub sen: Option<f64>,
    pub spec: Option<f64>,
    pub auc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub folds: Vec<Metrics>,
    /// Means over the folds where each metric is defined.
    pub mean: Summary,
    /// Sample standard deviations (zero for a single defined fold).
    pub std: Summary,
}

fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Some((mean, var.sqrt()))
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

fn summary_row(out: &mut String, name: &str, s: &Summary) {
    let _ = writeln!(
        out,
        "{name:<6} {:>8} {:>8} {:>8} {:>8}",
        cell(Some(s.acc)),
        cell(s.sen),
        cell(s.spec),
        cell(s.auc)
    );
}

impl MetricsReport {
    pub fn from_folds(folds: Vec<Metrics>) -> Self {
        let pick = |f: fn(&Metrics) -> Option<f64>| mean_std(&folds.iter().filter_map(f).collect::<Vec<_>>());
        let acc = pick(|m| Some(m.acc)).unwrap_or((0.0, 0.0));
        let sen = pick(|m| m.sen);
        let spec = pick(|m| m.spec);
        let auc = pick(|m| m.auc);
        Self {
            mean: Summary {
                acc: acc.0,
                sen: sen.map(|s| s.0),
                spec: spec.map(|s| s.0),
                auc: auc.map(|s| s.0),
            },
            std: Summary {
                acc: acc.1,
                sen: sen.map(|s| s.1),
                spec: spec.map(|s| s.1),
                auc: auc.map(|s| s.1),
            },
            folds,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Per-fold rows followed by mean and standard deviation, 4 decimals.
    pub fn table(&self) -> String {
        let mut out = format!("{:<6} {:>8} {:>8} {:>8} {:>8}\n", "fold", "Acc", "Sen", "Spec", "AUC");
        for (i, m) in self.folds.iter().enumerate() {
            let row = Summary {
                acc: m.acc,
                sen: m.sen,
                spec: m.spec,
                auc: m.auc,
            };
            summary_row(&mut out, &i.to_string(), &row);
        }
        summary_row(&mut out, "mean", &self.mean);
        summary_row(&mut out, "std", &self.std);
        out
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        let mut out = String::from("fold,n,tp,tn,fp,fn,acc,sen,spec,auc\n");
        for (i, m) in self.folds.iter().enumerate() {
            let _ = writeln!(
                out,
                "{i},{},{},{},{},{},{},{},{},{}",
                m.n,
                m.tp,
                m.tn,
                m.fp,
                m.fn_,
                m.acc,
                opt(m.sen),
                opt(m.spec),
                opt(m.auc)
            );
        }
        for (name, s) in [("mean", &self.mean), ("std", &self.std)] {
            let _ = writeln!(
                out,
                "{name},,,,,,{},{},{},{}",
                s.acc,
                opt(s.sen),
                opt(s.spec),
                opt(s.auc)
            );
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ProjectionMethod {
    Tsne { perplexity: f64, iterations: usize },
    Pca,
}

impl Default for ProjectionMethod {
    fn default() -> Self {
        ProjectionMethod::Tsne {
            perplexity: 15.0,
            iterations: 500,
        }
    }
}

/// Top-two principal coordinates (`U Σ`), zero-padded when the rank is lower.
pub fn pca_2d(x: &Mat) -> Mat {
    let n = x.nrows();
    let mut centered = x.clone();
    if n > 0 {
        let mean = row_mean(x);
        for mut row in centered.row_iter_mut() {
            row -= &mean;
        }
    }
    let mut out = Mat::zeros(n, 2);
    if n == 0 || x.ncols() == 0 {
        return out;
    }
    let svd = centered.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    for (k, &c) in order.iter().take(2).enumerate() {
        let s = svd.singular_values[c];
        if s <= 1e-12 {
            continue;
        }
        let col = u.column(c);
        let flip = if col.iter().fold(0.0f64, |best, &v| if v.abs() > best.abs() { v } else { best }) < 0.0 {
            -1.0
        } else {
            1.0
        };
        for i in 0..n {
            out[(i, k)] = flip * col[i] * s;
        }
    }
    out
}

/// Row-stochastic affinities with per-point bandwidths matched to the perplexity.
fn tsne_affinities(x: &Mat, perplexity: f64) -> Mat {
    let n = x.nrows();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| x.row(i).iter().copied().collect()).collect();
    let d2 = Mat::from_fn(n, n, |i, j| squared_distance(&rows[i], &rows[j]));
    let target = perplexity.ln();
    let mut p = Mat::zeros(n, n);
    for i in 0..n {
        let (mut lo, mut hi, mut beta) = (0.0f64, f64::INFINITY, 1.0f64);
        let mut row = vec![0.0; n];
        for _ in 0..100 {
            let dmin = (0..n).filter(|&j| j != i).map(|j| d2[(i, j)]).fold(f64::INFINITY, f64::min);
            let mut sum = 0.0;
            for j in 0..n {
                row[j] = if j == i { 0.0 } else { (-(d2[(i, j)] - dmin) * beta).exp() };
                sum += row[j];
            }
            let mut entropy = 0.0;
            for j in 0..n {
                row[j] /= sum;
                if row[j] > 0.0 {
                    entropy -= row[j] * row[j].ln();
                }
            }
            let diff = entropy - target;
            if diff.abs() < 1e-5 {
                break;
            }
            if diff > 0.0 {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
        }
        for j in 0..n {
            p[(i, j)] = row[j];
        }
    }
    p
}

/// Exact t-SNE with early exaggeration and momentum, initialized from PCA.
fn tsne(x: &Mat, perplexity: f64, iterations: usize) -> Mat {
    let n = x.nrows();
    let perplexity = perplexity.min((n - 1) as f64 / 3.0).max(1.0);
    let cond = tsne_affinities(x, perplexity);
    let p = (&cond + cond.transpose()).map(|v| (v / (2.0 * n as f64)).max(1e-12));

    let mut y = pca_2d(x);
    let sd = (y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64).sqrt();
    if sd > 0.0 {
        y *= 1e-4 / sd;
    }
    let mut velocity = Mat::zeros(n, 2);
    let mut gains = Mat::from_element(n, 2, 1.0);
    let exaggeration_iters = 100.min(iterations / 4);
    let lr = (n as f64 / 12.0).max(50.0);

    for it in 0..iterations {
        let exaggeration = if it < exaggeration_iters { 12.0 } else { 1.0 };
        let momentum = if it < exaggeration_iters { 0.5 } else { 0.8 };
        let mut num = Mat::zeros(n, n);
        let mut sum = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let dx = y[(i, 0)] - y[(j, 0)];
                let dy = y[(i, 1)] - y[(j, 1)];
                let v = 1.0 / (1.0 + dx * dx + dy * dy);
                num[(i, j)] = v;
                num[(j, i)] = v;
                sum += 2.0 * v;
            }
        }
        let mut grad = Mat::zeros(n, 2);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let q = (num[(i, j)] / sum).max(1e-12);
                let coeff = 4.0 * (exaggeration * p[(i, j)] - q) * num[(i, j)];
                grad[(i, 0)] += coeff * (y[(i, 0)] - y[(j, 0)]);
                grad[(i, 1)] += coeff * (y[(i, 1)] - y[(j, 1)]);
            }
        }
        for i in 0..n {
            for k in 0..2 {
                let g = grad[(i, k)];
                let same_sign = (g > 0.0) == (velocity[(i, k)] > 0.0);
                gains[(i, k)] = if same_sign { (gains[(i, k)] * 0.8).max(0.01) } else { gains[(i, k)] + 0.2 };
                velocity[(i, k)] = momentum * velocity[(i, k)] - lr * gains[(i, k)] * g;
                y[(i, k)] += velocity[(i, k)];
            }
        }
        let mean = row_mean(&y);
        for mut row in y.row_iter_mut() {
            row -= &mean;
        }
    }
    y
}

/// 2-D embedding for plotting; PCA is used whenever fewer than 10 rows are given.
pub fn project_features(features: &Mat, method: ProjectionMethod) -> Result<Mat> {
    if let Some((row, col)) = crate::linalg::first_non_finite(features) {
        return Err(Error::NonFinite {
            field: "features".into(),
            row,
            col,
        });
    }
    match method {
        ProjectionMethod::Tsne { perplexity, iterations } if features.nrows() >= 10 => {
            Ok(tsne(features, perplexity, iterations))
        }
        _ => Ok(pca_2d(features)),
    }
}

/// Mean control-group connectivity minus mean patient-group connectivity.
pub fn connectivity_difference(controls: &[Mat], patients: &[Mat]) -> Result<Mat> {
    if controls.is_empty() || patients.is_empty() {
        return Err(Error::InvalidArgument("both groups need at least one connectivity matrix".into()));
    }
    let shape = controls[0].shape();
    if let Some(m) = controls.iter().chain(patients).find(|m| m.shape() != shape) {
        return Err(Error::Shape {
            field: "connectivity".into(),
            expected: format!("{}x{}", shape.0, shape.1),
            found: format!("{}x{}", m.nrows(), m.ncols()),
        });
    }
    let mean = |group: &[Mat]| group.iter().fold(Mat::zeros(shape.0, shape.1), |acc, m| acc + m) / group.len() as f64;
    Ok(mean(controls) - mean(patients))
}

/// Held-out outputs for one test subject.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub id: String,
    pub label: usize,
    pub fold: usize,
    pub score: f64,
    /// Mean-pooled graph and CNN latents, concatenated.
    pub stage1_features: Vec<f64>,
    /// Mean-pooled fused connectivity (the `C2` input).
    pub fused_features: Vec<f64>,
    pub connectivity: Mat,
}

#[derive(Clone, Debug)]
pub struct CvResult {
    pub plan: FoldPlan,
    pub report: MetricsReport,
    /// In cohort order.
    pub predictions: Vec<Prediction>,
}

fn fold_predictions(state: &TrainState, subjects: &[&Subject], fold: usize) -> Result<Vec<Prediction>> {
    let prepared = prepare_all(subjects, state.config.diffusion_steps)?;
    prepared
        .iter()
        .map(|s| {
            let latents = state.latents(s);
            let sample = state.fusion_sample(&latents)?;
            let out = state.model.fusion.forward(&sample.input());
            let mut stage1: Vec<f64> = row_mean(&latents.z).iter().copied().collect();
            stage1.extend(row_mean(&latents.r).iter());
            Ok(Prediction {
                id: s.id.clone(),
                label: s.label,
                fold,
                score: out.probs[1],
                stage1_features: stage1,
                fused_features: row_mean(&out.connectivity).iter().copied().collect(),
                connectivity: out.connectivity,
            })
        })
        .collect()
}

/// Trains both stages on one fold's training split and scores its test split.
pub fn run_fold(cohort: &Cohort, plan: &FoldPlan, fold: usize, config: &ModelConfig, seed: u64) -> Result<Vec<Prediction>> {
    let train: Vec<&Subject> = plan.train_indices(fold).into_iter().map(|i| &cohort.subjects[i]).collect();
    let test: Vec<&Subject> = plan.test_indices(fold).into_iter().map(|i| &cohort.subjects[i]).collect();
    let fold_seed = derive_seed(seed, "fold", fold as u64);
    let state = train_stage1(&train, config, fold_seed)?;
    let state = train_stage2(state, &train)?;
    fold_predictions(&state, &test, fold)
}

/// Full cross-validation; folds run on up to `jobs` threads with results
/// aggregated in fold order.
pub fn run_cv(cohort: &Cohort, config: &ModelConfig, seed: u64, k: usize, jobs: usize) -> Result<CvResult> {
    let plan = make_folds(&cohort.labels(), k, derive_seed(seed, "fold-plan", 0))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let per_fold: Vec<Result<Vec<Prediction>>> = pool.install(|| {
        use rayon::prelude::*;
        (0..k)
            .into_par_iter()
            .map(|f| run_fold(cohort, &plan, f, config, seed))
            .collect()
    });
    let mut folds = Vec::with_capacity(k);
    let mut predictions: Vec<Option<Prediction>> = vec![None; cohort.len()];
    for (f, result) in per_fold.into_iter().enumerate() {
        let preds = result?;
        let labels: Vec<usize> = preds.iter().map(|p| p.label).collect();
        let scores: Vec<f64> = preds.iter().map(|p| p.score).collect();
        folds.push(compute_metrics(&labels, &scores, 0.5)?);
        for (p, i) in preds.into_iter().zip(plan.test_indices(f)) {
            predictions[i] = Some(p);
        }
    }
    Ok(CvResult {
        report: MetricsReport::from_folds(folds),
        predictions: predictions.into_iter().map(|p| p.expect("every subject is tested once")).collect(),
        plan,
    })
}

fn embedding_csv(preds: &[Prediction], coords: &Mat) -> String {
    let mut out = String::from("id,label,fold,x,y\n");
    for (i, p) in preds.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            p.id,
            p.label,
            p.fold,
            format_sig9(coords[(i, 0)]),
            format_sig9(coords[(i, 1)])
        );
    }
    out
}

fn stack(rows: impl Iterator<Item = Vec<f64>>) -> Mat {
    let rows: Vec<Vec<f64>> = rows.collect();
    let cols = rows.first().map_or(0, Vec::len);
    Mat::from_fn(rows.len(), cols, |i, j| rows[i][j])
}

/// Writes `metrics.json`, `metrics.csv`, `predictions.csv`,
/// `embedding_stage1.csv`, `embedding_fused.csv` and `conn_diff.csv`.
pub fn write_cv_artifacts(result: &CvResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("metrics.json"), result.report.to_json()?)?;
    std::fs::write(dir.join("metrics.csv"), result.report.to_csv())?;

    let preds = &result.predictions;
    let mut text = String::from("id,label,fold,score\n");
    for p in preds {
        let _ = writeln!(text, "{},{},{},{}", p.id, p.label, p.fold, p.score);
    }
    std::fs::write(dir.join("predictions.csv"), text)?;

    let method = ProjectionMethod::default();
    let stage1 = project_features(&stack(preds.iter().map(|p| p.stage1_features.clone())), method)?;
    std::fs::write(dir.join("embedding_stage1.csv"), embedding_csv(preds, &stage1))?;
    let fused = project_features(&stack(preds.iter().map(|p| p.fused_features.clone())), method)?;
    std::fs::write(dir.join("embedding_fused.csv"), embedding_csv(preds, &fused))?;

    let group = |label: usize| -> Vec<Mat> {
        preds.iter().filter(|p| p.label == label).map(|p| p.connectivity.clone()).collect()
    };
    let diff = connectivity_difference(&group(0), &group(1))?;
    write_matrix_csv(&dir.join("conn_diff.csv"), &diff)
}
