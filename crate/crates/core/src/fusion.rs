//! Expert combination: subset averaging, SVM stacking with scaling-factor
//! search, per-class simplex weights optimized by two-phase random search,
//! swapped-prediction cross-fitting, and bagging.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::{svm_train, GridSearchPlan, LabeledDataset, TrainedSvm};
use crate::emotions::{
    accuracy, argmax_label, ClassDistribution, EmotionLabel, PredictionEntry, PredictionSet,
    Split,
};
use crate::error::{Error, Result};
use crate::kernels::{KernelConfig, KernelKind};
use crate::{Scalar, NUM_CLASSES};

/// Aligned per-model prediction sets, grouped by split. Every model covers
/// the same clip ids within each split, in the same order.
#[derive(Debug, Clone)]
pub struct ExpertBundle {
    models: Vec<String>,
    splits: BTreeMap<Split, Vec<PredictionSet>>,
}

impl ExpertBundle {
    /// Builds a bundle from one list of per-split sets per model. Entries
    /// are reordered to the first model's clip order per split.
    pub fn new(models: Vec<String>, per_model: Vec<Vec<PredictionSet>>) -> Result<Self> {
        if models.is_empty() || models.len() != per_model.len() {
            return Err(Error::Config(format!(
                "bundle needs one prediction list per model ({} models, {} lists)",
                models.len(),
                per_model.len()
            )));
        }
        let mut splits: BTreeMap<Split, Vec<PredictionSet>> = BTreeMap::new();
        for (mi, sets) in per_model.iter().enumerate() {
            for set in sets {
                let slot = splits.entry(set.split()).or_default();
                if slot.len() != mi {
                    return Err(Error::Config(format!(
                        "model `{}` provides split {} more than once or out of order",
                        models[mi],
                        set.split()
                    )));
                }
                slot.push(set.clone());
            }
        }
        for (split, sets) in &mut splits {
            if sets.len() != models.len() {
                let missing = &models[sets.len()];
                return Err(Error::Config(format!(
                    "model `{missing}` has no predictions for split {split}"
                )));
            }
            let reference: Vec<String> = sets[0]
                .entries()
                .iter()
                .map(|e| e.clip_id.clone())
                .collect();
            for (mi, set) in sets.iter_mut().enumerate().skip(1) {
                if set.len() != reference.len() {
                    return Err(Error::Config(format!(
                        "split {split}: model `{}` covers {} clips, expected {}",
                        models[mi],
                        set.len(),
                        reference.len()
                    )));
                }
                let mut entries = Vec::with_capacity(reference.len());
                for clip_id in &reference {
                    let entry = set.get(clip_id).ok_or_else(|| {
                        Error::Config(format!(
                            "clip `{clip_id}` missing from model `{}` on split {split}",
                            models[mi]
                        ))
                    })?;
                    entries.push(entry.clone());
                }
                *set = PredictionSet::new(*split, entries)?;
            }
        }
        Ok(Self { models, splits })
    }

    pub fn models(&self) -> &[String] {
        &self.models
    }

    pub fn n_models(&self) -> usize {
        self.models.len()
    }

    pub fn split_sets(&self, split: Split) -> Result<&[PredictionSet]> {
        self.splits
            .get(&split)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::Config(format!("bundle has no split {split}")))
    }

    pub fn available_splits(&self) -> Vec<Split> {
        self.splits.keys().copied().collect()
    }

    /// Bundle containing only the given models (indices into `models`).
    pub fn restrict(&self, idx: &[usize]) -> Result<ExpertBundle> {
        if idx.is_empty() {
            return Err(Error::Config("empty model subset".into()));
        }
        let models: Vec<String> = idx.iter().map(|&i| self.models[i].clone()).collect();
        let mut splits = BTreeMap::new();
        for (&split, sets) in &self.splits {
            let chosen: Vec<PredictionSet> = idx.iter().map(|&i| sets[i].clone()).collect();
            splits.insert(split, chosen);
        }
        Ok(ExpertBundle { models, splits })
    }
}

/// Per-class simplex weights over the models: 7 rows, each non-negative and
/// summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    w: Array2<Scalar>,
}

impl WeightMatrix {
    pub fn new(w: Array2<Scalar>) -> Result<Self> {
        if w.nrows() != NUM_CLASSES {
            return Err(Error::DimensionMismatch {
                expected: NUM_CLASSES,
                got: w.nrows(),
            });
        }
        for (c, row) in w.rows().into_iter().enumerate() {
            if row.iter().any(|&v| v < 0.0 || !v.is_finite()) {
                return Err(Error::Domain(format!("weight row {c} has invalid entries")));
            }
            let sum: Scalar = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Domain(format!(
                    "weight row {c} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(Self { w })
    }

    pub fn uniform(n_models: usize) -> Self {
        Self {
            w: Array2::from_elem((NUM_CLASSES, n_models), 1.0 / n_models as Scalar),
        }
    }

    /// Every row selects the same single model.
    pub fn one_hot(n_models: usize, model: usize) -> Self {
        let mut w = Array2::zeros((NUM_CLASSES, n_models));
        for c in 0..NUM_CLASSES {
            w[(c, model)] = 1.0;
        }
        Self { w }
    }

    pub fn n_models(&self) -> usize {
        self.w.ncols()
    }

    pub fn matrix(&self) -> &Array2<Scalar> {
        &self.w
    }

    pub fn row(&self, class: usize) -> Vec<Scalar> {
        self.w.row(class).to_vec()
    }
}

/// Uniformly samples one weight matrix: each row is M independent uniforms
/// normalized to sum 1 (all-zero rows are resampled).
pub fn sample_weight_matrix(n_models: usize, rng: &mut impl Rng) -> WeightMatrix {
    let mut w = Array2::zeros((NUM_CLASSES, n_models));
    for c in 0..NUM_CLASSES {
        loop {
            let mut sum = 0.0;
            for m in 0..n_models {
                let v: f64 = rng.random();
                w[(c, m)] = v;
                sum += v;
            }
            if sum > 0.0 {
                for m in 0..n_models {
                    w[(c, m)] /= sum;
                }
                break;
            }
        }
    }
    WeightMatrix { w }
}

/// Weighted average of aligned sets: fused score for class `c` is
/// `sum_m W[c][m] * p_m(c)`. The output carries raw (unnormalized) scores;
/// argmax is taken on them directly.
pub fn weighted_average(sets: &[PredictionSet], weights: &WeightMatrix) -> Result<PredictionSet> {
    if sets.is_empty() {
        return Err(Error::EmptyInput("weighted average of no models".into()));
    }
    if weights.n_models() != sets.len() {
        return Err(Error::DimensionMismatch {
            expected: sets.len(),
            got: weights.n_models(),
        });
    }
    let n = sets[0].len();
    let split = sets[0].split();
    let mut entries = Vec::with_capacity(n);
    for i in 0..n {
        let first = &sets[0].entries()[i];
        let mut scores = [0.0; NUM_CLASSES];
        for (m, set) in sets.iter().enumerate() {
            let e = set.entries().get(i).ok_or_else(|| {
                Error::Config(format!(
                    "clip `{}` missing from model index {m}",
                    first.clip_id
                ))
            })?;
            if e.clip_id != first.clip_id {
                return Err(Error::Config(format!(
                    "clip `{}` misaligned relative to model index {m}",
                    first.clip_id
                )));
            }
            for c in 0..NUM_CLASSES {
                scores[c] += weights.w[(c, m)] * e.dist.scores()[c];
            }
        }
        entries.push(PredictionEntry {
            clip_id: first.clip_id.clone(),
            dist: ClassDistribution::unnormalized(scores)?,
            gold: first.gold,
        });
    }
    PredictionSet::new(split, entries)
}

/// Plain mean over a subset of models.
pub fn mean_of_subset(sets: &[PredictionSet], subset: &[usize]) -> Result<PredictionSet> {
    if subset.is_empty() {
        return Err(Error::EmptyInput("mean of an empty subset".into()));
    }
    let chosen: Vec<PredictionSet> = subset.iter().map(|&m| sets[m].clone()).collect();
    weighted_average(&chosen, &WeightMatrix::uniform(subset.len()))
}

/// Evaluates the plain mean of every non-empty model subset on the
/// objective split; returns all subsets sorted by accuracy descending, ties
/// broken by smaller subset then lexicographic order.
pub fn enumerate_subset_averages(
    bundle: &ExpertBundle,
    objective: Split,
) -> Result<Vec<(Vec<usize>, Scalar)>> {
    let sets = bundle.split_sets(objective)?;
    let m = bundle.n_models();
    let mut results = Vec::with_capacity((1usize << m) - 1);
    for mask in 1u32..(1u32 << m) {
        let subset: Vec<usize> = (0..m).filter(|&i| mask & (1 << i) != 0).collect();
        let fused = mean_of_subset(sets, &subset)?;
        let acc = accuracy(&fused)?;
        results.push((subset, acc));
    }
    results.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.len().cmp(&b.0.len()))
            .then(a.0.cmp(&b.0))
    });
    Ok(results)
}

/// Random-search configuration for the simplex weight optimization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchConfig {
    pub coarse_samples: usize,
    pub local_samples: usize,
    pub local_sigma: f64,
    pub rounding_decimals: u32,
    pub seed: u64,
    pub objective_split: Split,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            coarse_samples: 2000,
            local_samples: 2000,
            local_sigma: 0.05,
            rounding_decimals: 2,
            seed: 0,
            objective_split: Split::Valid,
        }
    }
}

fn objective_accuracy(sets: &[PredictionSet], w: &WeightMatrix) -> Result<Scalar> {
    accuracy(&weighted_average(sets, w)?)
}

/// Evaluates candidates in parallel, then selects the best in candidate
/// order so parallel and serial runs choose identically.
fn best_candidate(
    sets: &[PredictionSet],
    candidates: Vec<WeightMatrix>,
) -> Result<(WeightMatrix, Scalar)> {
    let scored: Vec<Scalar> = candidates
        .par_iter()
        .map(|w| objective_accuracy(sets, w))
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0usize;
    for i in 1..scored.len() {
        if scored[i] > scored[best] {
            best = i;
        }
    }
    Ok((candidates[best].clone(), scored[best]))
}

/// Coarse phase: uniformly sampled simplex rows plus the seeded baselines
/// (uniform matrix and every one-hot matrix).
pub fn random_search_coarse(
    bundle: &ExpertBundle,
    cfg: &SearchConfig,
) -> Result<(WeightMatrix, Scalar)> {
    let sets = bundle.split_sets(cfg.objective_split)?;
    if sets[0].entries().iter().any(|e| e.gold.is_none()) {
        return Err(Error::MissingGold(format!(
            "objective split {} lacks gold labels",
            cfg.objective_split
        )));
    }
    let m = bundle.n_models();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut candidates = Vec::with_capacity(cfg.coarse_samples + m + 1);
    candidates.push(WeightMatrix::uniform(m));
    for i in 0..m {
        candidates.push(WeightMatrix::one_hot(m, i));
    }
    for _ in 0..cfg.coarse_samples {
        candidates.push(sample_weight_matrix(m, &mut rng));
    }
    best_candidate(sets, candidates)
}

fn round_to(v: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    (v * scale).round() / scale
}

/// One Gaussian perturbation of `w0`: clamped at zero, rounded to the
/// configured decimals, rows renormalized to exact simplexes.
fn perturb(w0: &WeightMatrix, cfg: &SearchConfig, rng: &mut impl Rng) -> WeightMatrix {
    let m = w0.n_models();
    let mut w = Array2::zeros((NUM_CLASSES, m));
    for c in 0..NUM_CLASSES {
        loop {
            let mut sum = 0.0;
            for j in 0..m {
                let z: f64 = StandardNormal.sample(rng);
                let v = round_to(
                    (w0.w[(c, j)] + cfg.local_sigma * z).max(0.0),
                    cfg.rounding_decimals,
                );
                w[(c, j)] = v;
                sum += v;
            }
            if sum > 0.0 {
                for j in 0..m {
                    w[(c, j)] /= sum;
                }
                break;
            }
        }
    }
    WeightMatrix { w }
}

/// Local phase: Gaussian perturbations of the best weights so far; keeps
/// the best candidate including `w0` itself.
pub fn random_search_local(
    bundle: &ExpertBundle,
    w0: &WeightMatrix,
    cfg: &SearchConfig,
) -> Result<(WeightMatrix, Scalar)> {
    let sets = bundle.split_sets(cfg.objective_split)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut candidates = Vec::with_capacity(cfg.local_samples + 1);
    candidates.push(w0.clone());
    for _ in 0..cfg.local_samples {
        candidates.push(perturb(w0, cfg, &mut rng));
    }
    best_candidate(sets, candidates)
}

/// Full two-phase search: coarse uniform sampling, then local Gaussian
/// refinement around the coarse optimum.
pub fn random_search(bundle: &ExpertBundle, cfg: &SearchConfig) -> Result<(WeightMatrix, Scalar)> {
    let (coarse, _) = random_search_coarse(bundle, cfg)?;
    random_search_local(bundle, &coarse, cfg)
}

/// Concatenates predictions made by models on splits they were not trained
/// on (valid predictions from train-split models, train predictions from
/// valid-split models) into a split tagged `other`, a less biased training
/// set for combiners.
pub fn build_swapped_predictions(
    valid_preds: &ExpertBundle,
    train_preds: &ExpertBundle,
) -> Result<ExpertBundle> {
    if valid_preds.models() != train_preds.models() {
        return Err(Error::Config(
            "swapped bundles must cover the same models".into(),
        ));
    }
    let v_sets = valid_preds.split_sets(Split::Valid)?;
    let t_sets = train_preds.split_sets(Split::Train)?;
    let mut per_model = Vec::with_capacity(v_sets.len());
    for (v, t) in v_sets.iter().zip(t_sets) {
        let mut entries: Vec<PredictionEntry> = v.entries().to_vec();
        entries.extend(t.entries().iter().cloned());
        // PredictionSet::new rejects any clip appearing in both halves.
        per_model.push(vec![PredictionSet::new(Split::Other, entries)?]);
    }
    ExpertBundle::new(valid_preds.models().to_vec(), per_model)
}

/// Mixes a bag index into the base seed (splitmix64 step).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9e3779b97f4a7c15)
        .wrapping_add(index.wrapping_mul(0xbf58476d1ce4e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Bagging with explicit per-bag seeds: each bag runs a full search and the
/// fused score per class is the mean of the bags' fused scores on
/// `apply_split`.
pub fn bag_weighted_averages_with_seeds(
    bundle: &ExpertBundle,
    cfg: &SearchConfig,
    seeds: &[u64],
    apply_split: Split,
) -> Result<(PredictionSet, Vec<WeightMatrix>)> {
    if seeds.is_empty() {
        return Err(Error::Config("bagging needs at least one bag".into()));
    }
    let apply_sets = bundle.split_sets(apply_split)?;
    let mut weights = Vec::with_capacity(seeds.len());
    let mut fused: Vec<PredictionSet> = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let cfg_i = SearchConfig {
            seed,
            ..cfg.clone()
        };
        let (w, _) = random_search(bundle, &cfg_i)?;
        fused.push(weighted_average(apply_sets, &w)?);
        weights.push(w);
    }
    let n = fused[0].len();
    let mut entries = Vec::with_capacity(n);
    for i in 0..n {
        let mut scores = [0.0; NUM_CLASSES];
        for f in &fused {
            for c in 0..NUM_CLASSES {
                scores[c] += f.entries()[i].dist.scores()[c];
            }
        }
        for s in &mut scores {
            *s /= fused.len() as Scalar;
        }
        entries.push(PredictionEntry {
            clip_id: fused[0].entries()[i].clip_id.clone(),
            dist: ClassDistribution::unnormalized(scores)?,
            gold: fused[0].entries()[i].gold,
        });
    }
    Ok((PredictionSet::new(apply_split, entries)?, weights))
}

/// Bagging of `n_bags` independent searches with derived seeds.
pub fn bag_weighted_averages(
    bundle: &ExpertBundle,
    cfg: &SearchConfig,
    n_bags: usize,
    apply_split: Split,
) -> Result<(PredictionSet, Vec<WeightMatrix>)> {
    let seeds: Vec<u64> = (0..n_bags as u64)
        .map(|i| derive_seed(cfg.seed, i))
        .collect();
    bag_weighted_averages_with_seeds(bundle, cfg, &seeds, apply_split)
}

/// Discrete per-dimension scaling factors in `{0, 1, 2, 3}` applied to the
/// stacked feature vector (dimension `7 * M`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScalingFactors {
    /// Model-major factors; entry `m * 7 + c` scales model m's probability
    /// for class c.
    pub factors: Vec<u8>,
    pub n_models: usize,
}

impl ScalingFactors {
    pub fn all_ones(n_models: usize) -> Self {
        Self {
            factors: vec![1; NUM_CLASSES * n_models],
            n_models,
        }
    }

    pub fn new(factors: Vec<u8>, n_models: usize) -> Result<Self> {
        if factors.len() != NUM_CLASSES * n_models {
            return Err(Error::DimensionMismatch {
                expected: NUM_CLASSES * n_models,
                got: factors.len(),
            });
        }
        if factors.iter().any(|&f| f > 3) {
            return Err(Error::Domain("scaling factors live in {0,1,2,3}".into()));
        }
        Ok(Self { factors, n_models })
    }

    pub fn factor(&self, class: usize, model: usize) -> f64 {
        self.factors[model * NUM_CLASSES + class] as f64
    }
}

/// Stacked features for a split: the M expert 7-vectors concatenated
/// model-major, optionally scaled per dimension.
pub fn stack_features(
    bundle: &ExpertBundle,
    split: Split,
    scaling: Option<&ScalingFactors>,
) -> Result<(Array2<f64>, Vec<Option<EmotionLabel>>, Vec<String>)> {
    let sets = bundle.split_sets(split)?;
    let m = sets.len();
    let n = sets[0].len();
    let mut x = Array2::zeros((n, m * NUM_CLASSES));
    let mut gold = Vec::with_capacity(n);
    let mut ids = Vec::with_capacity(n);
    for i in 0..n {
        for (mi, set) in sets.iter().enumerate() {
            let e = &set.entries()[i];
            for c in 0..NUM_CLASSES {
                let factor = scaling.map_or(1.0, |s| s.factor(c, mi));
                x[(i, mi * NUM_CLASSES + c)] = factor * e.dist.scores()[c];
            }
        }
        gold.push(sets[0].entries()[i].gold);
        ids.push(sets[0].entries()[i].clip_id.clone());
    }
    Ok((x, gold, ids))
}

/// RBF-SVM combiner over concatenated expert predictions.
#[derive(Debug)]
pub struct StackModel {
    pub svm: TrainedSvm,
    pub scaling: Option<ScalingFactors>,
    pub models: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct StackConfig {
    pub plan: GridSearchPlan,
    pub train_split: Split,
    pub valid_split: Split,
}

impl Default for StackConfig {
    fn default() -> Self {
        Self {
            plan: GridSearchPlan::default(),
            train_split: Split::Train,
            valid_split: Split::Valid,
        }
    }
}

fn labeled_from_stack(
    x: Array2<f64>,
    gold: Vec<Option<EmotionLabel>>,
    ids: Vec<String>,
) -> Result<LabeledDataset> {
    let y = gold
        .into_iter()
        .enumerate()
        .map(|(i, g)| g.ok_or_else(|| Error::MissingGold(ids[i].clone())))
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::with_ids(x, y, ids)
}

/// Trains the stacking SVM (RBF kernel, two-stage grid search tuned on the
/// configured validation split).
pub fn svm_stack_train(
    bundle: &ExpertBundle,
    scaling: Option<ScalingFactors>,
    cfg: &StackConfig,
) -> Result<StackModel> {
    let (xt, gt, it) = stack_features(bundle, cfg.train_split, scaling.as_ref())?;
    let train = labeled_from_stack(xt, gt, it)?;
    let (xv, gv, iv) = stack_features(bundle, cfg.valid_split, scaling.as_ref())?;
    let valid = labeled_from_stack(xv, gv, iv)?;
    let result = crate::classifiers::svm_grid_search(&cfg.plan, KernelKind::Rbf, &train, &valid)?;
    let svm = svm_train(&train, &result.config)?;
    Ok(StackModel {
        svm,
        scaling,
        models: bundle.models().to_vec(),
    })
}

impl StackModel {
    /// Combiner predictions for one split of the bundle.
    pub fn predict_split(&self, bundle: &ExpertBundle, split: Split) -> Result<PredictionSet> {
        let (x, gold, ids) = stack_features(bundle, split, self.scaling.as_ref())?;
        let mut entries = Vec::with_capacity(ids.len());
        for i in 0..ids.len() {
            let dist = self
                .svm
                .predict_proba(x.row(i).as_slice().expect("row contiguous"))?;
            entries.push(PredictionEntry {
                clip_id: ids[i].clone(),
                dist,
                gold: gold[i],
            });
        }
        PredictionSet::new(split, entries)
    }

    pub fn kernel(&self) -> &KernelConfig {
        self.svm.kernel()
    }
}

/// Seeded search over `{0,1,2,3}^dims` maximizing `objective`: exhaustive
/// when the space fits the budget, otherwise random sampling (always
/// including all-ones first) followed by greedy coordinate refinement.
/// Ties keep the earlier candidate.
pub fn discrete_search(
    dims: usize,
    budget: usize,
    seed: u64,
    mut objective: impl FnMut(&[u8]) -> Result<f64>,
) -> Result<(Vec<u8>, f64)> {
    if budget == 0 {
        return Err(Error::Config("search budget must be >= 1".into()));
    }
    let exhaustive_size = if dims < 32 {
        4usize.checked_pow(dims as u32)
    } else {
        None
    };
    let mut best: Option<(Vec<u8>, f64)> = None;
    let consider = |cand: Vec<u8>,
                        obj: &mut dyn FnMut(&[u8]) -> Result<f64>,
                        best: &mut Option<(Vec<u8>, f64)>|
     -> Result<()> {
        let v = obj(&cand)?;
        if best.as_ref().map_or(true, |(_, bv)| v > *bv) {
            *best = Some((cand, v));
        }
        Ok(())
    };

    if let Some(size) = exhaustive_size.filter(|&s| s <= budget) {
        for code in 0..size {
            let mut cand = vec![0u8; dims];
            let mut rem = code;
            for slot in cand.iter_mut() {
                *slot = (rem % 4) as u8;
                rem /= 4;
            }
            consider(cand, &mut objective, &mut best)?;
        }
        let (cand, v) = best.expect("exhaustive evaluated");
        return Ok((cand, v));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used = 0usize;
    consider(vec![1u8; dims], &mut objective, &mut best)?;
    used += 1;
    let sample_budget = budget.saturating_sub(1) / 2;
    for _ in 0..sample_budget {
        let cand: Vec<u8> = (0..dims).map(|_| rng.random_range(0..4u8)).collect();
        consider(cand, &mut objective, &mut best)?;
        used += 1;
    }
    // Greedy coordinate refinement from the best candidate so far.
    'outer: loop {
        let (current, current_v) = best.clone().expect("candidates evaluated");
        let mut improved = false;
        for d in 0..dims {
            for val in 0..4u8 {
                if val == current[d] {
                    continue;
                }
                if used >= budget {
                    break 'outer;
                }
                let mut cand = current.clone();
                cand[d] = val;
                consider(cand, &mut objective, &mut best)?;
                used += 1;
            }
            if best.as_ref().expect("set").1 > current_v {
                improved = true;
                break;
            }
        }
        if !improved {
            break;
        }
    }
    let (cand, v) = best.expect("candidates evaluated");
    Ok((cand, v))
}

/// Searches scaling factors for the stacking SVM, maximizing combiner
/// accuracy on the validation split.
pub fn scaling_search(
    bundle: &ExpertBundle,
    cfg: &StackConfig,
    budget: usize,
    seed: u64,
) -> Result<(ScalingFactors, f64)> {
    let dims = NUM_CLASSES * bundle.n_models();
    let valid_sets = bundle.split_sets(cfg.valid_split)?;
    if valid_sets[0].entries().iter().any(|e| e.gold.is_none()) {
        return Err(Error::MissingGold("scaling search objective".into()));
    }
    let (factors, acc) = discrete_search(dims, budget, seed, |cand| {
        let scaling = ScalingFactors::new(cand.to_vec(), bundle.n_models())?;
        let model = svm_stack_train(bundle, Some(scaling), cfg)?;
        let preds = model.predict_split(bundle, cfg.valid_split)?;
        accuracy(&preds)
    })?;
    Ok((ScalingFactors::new(factors, bundle.n_models())?, acc))
}

/// JSON schema of a stored weight matrix.
#[derive(Debug, Serialize, Deserialize)]
pub struct WeightsFile {
    pub models: Vec<String>,
    pub weights: Vec<Vec<f64>>,
}

pub fn write_weights_json(path: &Path, models: &[String], w: &WeightMatrix) -> Result<()> {
    let file = WeightsFile {
        models: models.to_vec(),
        weights: (0..NUM_CLASSES).map(|c| w.row(c)).collect(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

pub fn read_weights_json(path: &Path) -> Result<(Vec<String>, WeightMatrix)> {
    let file: WeightsFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let m = file.models.len();
    if file.weights.len() != NUM_CLASSES {
        return Err(Error::DimensionMismatch {
            expected: NUM_CLASSES,
            got: file.weights.len(),
        });
    }
    let mut w = Array2::zeros((NUM_CLASSES, m));
    for (c, row) in file.weights.iter().enumerate() {
        if row.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: row.len(),
            });
        }
        for (j, &v) in row.iter().enumerate() {
            w[(c, j)] = v;
        }
    }
    Ok((file.models, WeightMatrix::new(w)?))
}

/// Argmax of a fused entry's raw scores.
pub fn fused_argmax(entry: &PredictionEntry) -> Result<EmotionLabel> {
    argmax_label(&entry.dist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    fn bundle() -> ExpertBundle {
        synth::complementary_bundle(1234, 140)
    }

    #[test]
    fn uniform_weights_equal_elementwise_mean() {
        let b = bundle();
        let sets = b.split_sets(Split::Valid).unwrap();
        let fused = weighted_average(sets, &WeightMatrix::uniform(b.n_models())).unwrap();
        for (i, e) in fused.entries().iter().enumerate() {
            for c in 0..NUM_CLASSES {
                let mean: f64 = sets
                    .iter()
                    .map(|s| s.entries()[i].dist.scores()[c])
                    .sum::<f64>()
                    / b.n_models() as f64;
                let got = e.dist.scores()[c];
                assert!((got - mean).abs() < 1e-12, "clip {i} class {c}");
            }
        }
    }

    #[test]
    fn one_hot_rows_reproduce_single_expert() {
        let b = bundle();
        let sets = b.split_sets(Split::Valid).unwrap();
        for m in 0..b.n_models() {
            let fused = weighted_average(sets, &WeightMatrix::one_hot(b.n_models(), m)).unwrap();
            for (e, orig) in fused.entries().iter().zip(sets[m].entries()) {
                assert_eq!(e.dist.scores(), orig.dist.scores());
            }
        }
    }

    #[test]
    fn weighted_average_dot_product_case() {
        let mk = |p_happy: f64| {
            let rest = (1.0 - p_happy) / 6.0;
            let mut scores = [rest; NUM_CLASSES];
            scores[EmotionLabel::Happy.index()] = p_happy;
            ClassDistribution::normalized(scores).unwrap()
        };
        let sets = vec![
            PredictionSet::new(
                Split::Valid,
                vec![PredictionEntry {
                    clip_id: "c".into(),
                    dist: mk(0.6),
                    gold: None,
                }],
            )
            .unwrap(),
            PredictionSet::new(
                Split::Valid,
                vec![PredictionEntry {
                    clip_id: "c".into(),
                    dist: mk(0.2),
                    gold: None,
                }],
            )
            .unwrap(),
        ];
        let mut w = Array2::from_elem((NUM_CLASSES, 2), 0.5);
        w[(EmotionLabel::Happy.index(), 0)] = 0.75;
        w[(EmotionLabel::Happy.index(), 1)] = 0.25;
        let fused = weighted_average(&sets, &WeightMatrix::new(w).unwrap()).unwrap();
        // Independent dot product: 0.75 * 0.6 + 0.25 * 0.2 = 0.5.
        let got = fused.entries()[0].dist.score(EmotionLabel::Happy);
        assert!((got - 0.5).abs() < 1e-12);
        assert!(!fused.entries()[0].dist.is_normalized());
    }

    #[test]
    fn fused_scores_stay_inside_model_envelope() {
        let b = bundle();
        let sets = b.split_sets(Split::Valid).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = sample_weight_matrix(b.n_models(), &mut rng);
        let fused = weighted_average(sets, &w).unwrap();
        for (i, e) in fused.entries().iter().enumerate() {
            for c in 0..NUM_CLASSES {
                let lo = sets
                    .iter()
                    .map(|s| s.entries()[i].dist.scores()[c])
                    .fold(f64::INFINITY, f64::min);
                let hi = sets
                    .iter()
                    .map(|s| s.entries()[i].dist.scores()[c])
                    .fold(f64::NEG_INFINITY, f64::max);
                let v = e.dist.scores()[c];
                assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn argmax_invariant_under_global_weight_rescaling() {
        // Scaling every row of W by one positive constant leaves argmax
        // unchanged (per-row rescaling is NOT claimed).
        let b = bundle();
        let sets = b.split_sets(Split::Valid).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let w = sample_weight_matrix(b.n_models(), &mut rng);
        let fused = weighted_average(sets, &w).unwrap();
        for e in fused.entries() {
            let scaled = ClassDistribution::unnormalized(e.dist.scores().map(|v| v * 3.7))
                .unwrap();
            assert_eq!(
                argmax_label(&e.dist).unwrap(),
                argmax_label(&scaled).unwrap()
            );
        }
    }

    #[test]
    fn subset_enumeration_counts() {
        let b = bundle();
        let results = enumerate_subset_averages(&b, Split::Valid).unwrap();
        assert_eq!(results.len(), (1 << b.n_models()) - 1);

        let single = b.restrict(&[0]).unwrap();
        assert_eq!(
            enumerate_subset_averages(&single, Split::Valid)
                .unwrap()
                .len(),
            1
        );
    }

    #[test]
    fn subset_enumeration_finds_perfect_expert() {
        let b = synth::bundle_with_perfect_expert(99, 60, 2);
        let results = enumerate_subset_averages(&b, Split::Valid).unwrap();
        assert!(
            results[0].0.contains(&2),
            "top subset {:?} should contain the perfect expert",
            results[0].0
        );
        // Brute-force oracle: recompute every subset's accuracy directly.
        let sets = b.split_sets(Split::Valid).unwrap();
        for (subset, acc) in &results {
            let fused = mean_of_subset(sets, subset).unwrap();
            assert_eq!(accuracy(&fused).unwrap(), *acc);
        }
    }

    #[test]
    fn sampled_rows_are_simplexes_with_correct_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = 4;
        let mut sum0 = vec![0.0; m];
        let n = 10_000;
        for _ in 0..n {
            let w = sample_weight_matrix(m, &mut rng);
            let row = w.row(0);
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
            for j in 0..m {
                sum0[j] += row[j];
            }
        }
        // Monte-Carlo check: per-coordinate mean of a normalized uniform
        // row is 1/M by symmetry; allow 3 standard errors. The variance of
        // one coordinate is below 0.05 for M = 4.
        for j in 0..m {
            let mean = sum0[j] / n as f64;
            let tol = 3.0 * (0.05f64 / n as f64).sqrt();
            assert!((mean - 0.25).abs() < tol, "coordinate {j}: mean {mean}");
        }
    }

    #[test]
    fn single_model_weight_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let w = sample_weight_matrix(1, &mut rng);
        for c in 0..NUM_CLASSES {
            assert_eq!(w.matrix()[(c, 0)], 1.0);
        }
    }

    #[test]
    fn coarse_search_dominates_single_experts_and_is_deterministic() {
        let b = bundle();
        let cfg = SearchConfig {
            coarse_samples: 50,
            local_samples: 0,
            seed: 42,
            ..SearchConfig::default()
        };
        let (w, acc) = random_search_coarse(&b, &cfg).unwrap();
        let sets = b.split_sets(Split::Valid).unwrap();
        for m in 0..b.n_models() {
            let single = accuracy(
                &weighted_average(sets, &WeightMatrix::one_hot(b.n_models(), m)).unwrap(),
            )
            .unwrap();
            assert!(acc >= single);
        }
        let (w2, acc2) = random_search_coarse(&b, &cfg).unwrap();
        assert_eq!(w, w2);
        assert_eq!(acc, acc2);

        let cfg0 = SearchConfig {
            coarse_samples: 0,
            ..cfg.clone()
        };
        let (_, acc0) = random_search_coarse(&b, &cfg0).unwrap();
        let uniform_acc =
            accuracy(&weighted_average(sets, &WeightMatrix::uniform(b.n_models())).unwrap())
                .unwrap();
        let best_baseline = (0..b.n_models())
            .map(|m| {
                accuracy(
                    &weighted_average(sets, &WeightMatrix::one_hot(b.n_models(), m)).unwrap(),
                )
                .unwrap()
            })
            .fold(uniform_acc, f64::max);
        assert_eq!(acc0, best_baseline);
    }

    #[test]
    fn local_search_zero_sigma_returns_w0() {
        let b = bundle();
        // Uniform over 4 models is 2-decimal stable (0.25 each).
        let w0 = WeightMatrix::uniform(b.n_models());
        let cfg = SearchConfig {
            coarse_samples: 0,
            local_samples: 25,
            local_sigma: 0.0,
            seed: 3,
            ..SearchConfig::default()
        };
        let (w, acc) = random_search_local(&b, &w0, &cfg).unwrap();
        assert_eq!(w, w0);
        let sets = b.split_sets(Split::Valid).unwrap();
        assert_eq!(
            acc,
            accuracy(&weighted_average(sets, &w0).unwrap()).unwrap()
        );
    }

    #[test]
    fn local_search_never_loses_to_w0_and_rows_are_simplexes() {
        let b = bundle();
        let cfg = SearchConfig {
            coarse_samples: 10,
            local_samples: 40,
            seed: 11,
            ..SearchConfig::default()
        };
        let (w0, acc0) = random_search_coarse(&b, &cfg).unwrap();
        let sets = b.split_sets(Split::Valid).unwrap();
        let (w, acc) = random_search_local(&b, &w0, &cfg).unwrap();
        assert!(acc >= acc0);
        assert!(acc >= accuracy(&weighted_average(sets, &w0).unwrap()).unwrap());
        for c in 0..NUM_CLASSES {
            let sum: f64 = w.row(c).iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn swapped_predictions_concatenate_disjoint_splits() {
        let b = bundle();
        let swapped = build_swapped_predictions(&b, &b).unwrap();
        let sets = swapped.split_sets(Split::Other).unwrap();
        let n_train = b.split_sets(Split::Train).unwrap()[0].len();
        let n_valid = b.split_sets(Split::Valid).unwrap()[0].len();
        assert_eq!(sets[0].len(), n_train + n_valid);

        // Overlapping clip ids are rejected.
        let v_only = {
            let sets: Vec<Vec<PredictionSet>> = b
                .split_sets(Split::Valid)
                .unwrap()
                .iter()
                .map(|s| vec![s.clone(), s.with_split(Split::Train)])
                .collect();
            ExpertBundle::new(b.models().to_vec(), sets).unwrap()
        };
        assert!(build_swapped_predictions(&v_only, &v_only).is_err());
    }

    #[test]
    fn bagging_degenerate_cases() {
        let b = bundle();
        let cfg = SearchConfig {
            coarse_samples: 20,
            local_samples: 10,
            seed: 21,
            ..SearchConfig::default()
        };
        let (single, _) = bag_weighted_averages_with_seeds(&b, &cfg, &[7], Split::Test).unwrap();
        let (tripled, _) =
            bag_weighted_averages_with_seeds(&b, &cfg, &[7, 7, 7], Split::Test).unwrap();
        for (a, t) in single.entries().iter().zip(tripled.entries()) {
            for c in 0..NUM_CLASSES {
                assert!((a.dist.scores()[c] - t.dist.scores()[c]).abs() < 1e-12);
            }
            assert_eq!(
                argmax_label(&a.dist).unwrap(),
                argmax_label(&t.dist).unwrap()
            );
        }
        let (one, ws) = bag_weighted_averages(&b, &cfg, 1, Split::Test).unwrap();
        assert_eq!(ws.len(), 1);
        assert_eq!(one.len(), single.len());
    }

    #[test]
    fn stack_features_layout_and_scaling() {
        let b = bundle();
        let (x, _, _) = stack_features(&b, Split::Valid, None).unwrap();
        assert_eq!(x.ncols(), NUM_CLASSES * b.n_models());
        let sets = b.split_sets(Split::Valid).unwrap();
        assert_eq!(x[(0, 0)], sets[0].entries()[0].dist.scores()[0]);
        assert_eq!(x[(0, NUM_CLASSES)], sets[1].entries()[0].dist.scores()[0]);

        let mut f = ScalingFactors::all_ones(b.n_models());
        f.factors[0] = 0;
        let (xs, _, _) = stack_features(&b, Split::Valid, Some(&f)).unwrap();
        assert_eq!(xs[(0, 0)], 0.0);
        assert_eq!(xs[(1, 0)], 0.0);

        // 7M search dimensions for M = 4.
        assert_eq!(NUM_CLASSES * 4, 28);
    }

    #[test]
    fn discrete_search_exhaustive_matches_brute_force() {
        let objective =
            |c: &[u8]| -> f64 { -(((c[0] as f64) - 2.0).powi(2) + ((c[1] as f64) - 3.0).powi(2)) };
        let (best, v) = discrete_search(2, 16, 0, |c| Ok(objective(c))).unwrap();
        let mut expect = (vec![0u8, 0], f64::NEG_INFINITY);
        for a in 0..4u8 {
            for b in 0..4u8 {
                let val = objective(&[a, b]);
                if val > expect.1 {
                    expect = (vec![a, b], val);
                }
            }
        }
        assert_eq!(best, expect.0);
        assert_eq!(v, expect.1);
    }

    #[test]
    fn discrete_search_always_contains_all_ones_and_is_deterministic() {
        let run = |seed| {
            discrete_search(6, 20, seed, |c| {
                Ok(-(c.iter().map(|&v| v as f64).sum::<f64>()))
            })
            .unwrap()
        };
        let (a, av) = run(9);
        let (b, bv) = run(9);
        assert_eq!(a, b);
        assert_eq!(av, bv);
        // Never worse than the all-ones candidate (score -6).
        assert!(av >= -6.0);
    }

    #[test]
    fn weights_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("weights.json");
        let models: Vec<String> = (0..3).map(|i| format!("expert{i}")).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let w = sample_weight_matrix(3, &mut rng);
        write_weights_json(&path, &models, &w).unwrap();
        let (back_models, back_w) = read_weights_json(&path).unwrap();
        assert_eq!(models, back_models);
        for c in 0..NUM_CLASSES {
            for j in 0..3 {
                assert!((w.matrix()[(c, j)] - back_w.matrix()[(c, j)]).abs() < 1e-12);
            }
        }
    }
}
