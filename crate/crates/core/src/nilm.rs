//! Appliance-type classification on low-rate, high-rate, or reconstructed
//! windows, reproducing the train/test protocol of the load-monitoring study:
//! (LF trained, LF tested), (HF trained, SRP tested), (HF trained, HF tested),
//! with "gain" = acc(HF->SRP) - acc(LF->LF).

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::metrics::accuracy;
use crate::net::{infer, SrpModel};
use crate::signal::TimeSeries;

/// A fixed-length feature vector with its class index (into the experiment's
/// sorted label vocabulary).
#[derive(Debug, Clone)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub label: usize,
}

/// Turn a window into `dim` features: the first half is the window resampled
/// to `dim/2` points and normalized by its largest-magnitude element (signed,
/// so any nonzero rescaling of the window leaves the features unchanged); the
/// second half is the first `dim/2` FFT magnitude bins normalized by the
/// fundamental (the strongest positive-frequency bin). A zero window maps to
/// all-zero features.
pub fn featurize(window: &TimeSeries, dim: usize) -> Result<Vec<f64>> {
    let mut planner = FftPlanner::new();
    featurize_with(&mut planner, window.samples(), dim)
}

/// Auto feature size for a window length: twice the length, capped at 256.
pub fn auto_feature_dim(window_len: usize) -> usize {
    (2 * window_len).min(256)
}

fn featurize_with(planner: &mut FftPlanner<f64>, samples: &[f64], dim: usize) -> Result<Vec<f64>> {
    assert!(dim >= 4 && dim % 2 == 0, "feature dim must be even and at least 4");
    let n = samples.len();
    let half = dim / 2;
    if n < half {
        return Err(Error::TooShort { needed: half, got: n });
    }

    let mut values = Vec::with_capacity(dim);

    // Sample part: linear resample to `half` points, normalized by the
    // (signed) element of largest magnitude.
    let mut resampled = Vec::with_capacity(half);
    for j in 0..half {
        let pos = j as f64 * (n - 1) as f64 / (half - 1) as f64;
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        let v = if i + 1 < n {
            samples[i] + frac * (samples[i + 1] - samples[i])
        } else {
            samples[n - 1]
        };
        resampled.push(v);
    }
    let norm = resampled
        .iter()
        .copied()
        .max_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap())
        .unwrap_or(0.0);
    if norm == 0.0 {
        values.extend(std::iter::repeat(0.0).take(half));
    } else {
        values.extend(resampled.iter().map(|v| v / norm));
    }

    // Spectral part: FFT magnitudes of the raw window, scaled by the
    // fundamental bin.
    let fft = planner.plan_fft_forward(n);
    let mut buf: Vec<Complex<f64>> =
        samples.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft.process(&mut buf);
    let mags: Vec<f64> = buf.iter().map(|c| c.norm()).collect();
    let fundamental_bin = (1..=n / 2)
        .max_by(|&a, &b| mags[a].partial_cmp(&mags[b]).unwrap())
        .unwrap_or(0);
    let fund = if fundamental_bin == 0 { 0.0 } else { mags[fundamental_bin] };
    if fund <= 1e-9 * mags[0].max(1e-300) {
        values.extend(std::iter::repeat(0.0).take(half));
    } else {
        values.extend((0..half).map(|j| if j < n { mags[j] / fund } else { 0.0 }));
    }
    Ok(values)
}

// ---------------------------------------------------------------------------
// k-nearest-neighbor classifier
// ---------------------------------------------------------------------------

pub struct KnnClassifier {
    k: usize,
    train: Vec<FeatureVector>,
    n_labels: usize,
}

pub fn knn_fit(train: Vec<FeatureVector>, k: usize) -> Result<KnnClassifier> {
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if k == 0 || k > train.len() {
        return Err(Error::InvalidConfig(format!(
            "k = {k} must lie in [1, {}]",
            train.len()
        )));
    }
    let n_labels = train.iter().map(|f| f.label).max().unwrap() + 1;
    Ok(KnnClassifier { k, train, n_labels })
}

impl KnnClassifier {
    /// Majority vote among the k nearest (Euclidean); ties go to the label
    /// with the smallest summed distance, then the lowest label index.
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut dists: Vec<(f64, usize)> = self
            .train
            .iter()
            .enumerate()
            .map(|(i, f)| (euclidean(x, &f.values), i))
            .collect();
        dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let mut votes = vec![0usize; self.n_labels];
        let mut summed = vec![0.0f64; self.n_labels];
        for &(d, i) in dists.iter().take(self.k) {
            let label = self.train[i].label;
            votes[label] += 1;
            summed[label] += d;
        }
        let mut best = 0usize;
        for label in 1..self.n_labels {
            let better = votes[label] > votes[best]
                || (votes[label] == votes[best] && votes[label] > 0 && summed[label] < summed[best]);
            if better {
                best = label;
            }
        }
        best
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

// ---------------------------------------------------------------------------
// CART decision tree (Gini impurity, axis-aligned splits)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self { max_depth: 12, min_leaf: 2 }
    }
}

pub struct DecisionTree {
    nodes: Vec<TreeNode>,
    root: usize,
}

enum TreeNode {
    Leaf { label: usize },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

pub fn tree_fit(train: &[FeatureVector], cfg: &TreeConfig) -> Result<DecisionTree> {
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let n_labels = train.iter().map(|f| f.label).max().unwrap() + 1;
    let indices: Vec<usize> = (0..train.len()).collect();
    let mut nodes = Vec::new();
    let root = grow(train, &indices, n_labels, cfg, 0, &mut nodes);
    Ok(DecisionTree { nodes, root })
}

fn majority_label(train: &[FeatureVector], indices: &[usize], n_labels: usize) -> usize {
    let mut counts = vec![0usize; n_labels];
    for &i in indices {
        counts[train[i].label] += 1;
    }
    let mut best = 0;
    for label in 1..n_labels {
        if counts[label] > counts[best] {
            best = label;
        }
    }
    best
}

fn gini_from_counts(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let mut sum_sq = 0.0;
    for &c in counts {
        let p = c as f64 / total as f64;
        sum_sq += p * p;
    }
    1.0 - sum_sq
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

/// Exhaustive best axis-aligned split by a sorted sweep per feature. The
/// first (lowest feature index, lowest threshold) of any impurity ties wins,
/// because only strict improvements replace the incumbent.
fn best_split(
    train: &[FeatureVector],
    indices: &[usize],
    n_labels: usize,
    min_leaf: usize,
) -> Option<SplitChoice> {
    let n = indices.len();
    let n_features = train[indices[0]].values.len();
    let mut total_counts = vec![0usize; n_labels];
    for &i in indices {
        total_counts[train[i].label] += 1;
    }
    let mut best: Option<SplitChoice> = None;
    for feature in 0..n_features {
        let mut ordered: Vec<(f64, usize)> =
            indices.iter().map(|&i| (train[i].values[feature], train[i].label)).collect();
        ordered.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut left_counts = vec![0usize; n_labels];
        let mut left_n = 0usize;
        for pos in 0..n - 1 {
            left_counts[ordered[pos].1] += 1;
            left_n += 1;
            if ordered[pos].0 == ordered[pos + 1].0 {
                continue; // no threshold separates equal values
            }
            let right_n = n - left_n;
            if left_n < min_leaf || right_n < min_leaf {
                continue;
            }
            let mut right_counts = vec![0usize; n_labels];
            for label in 0..n_labels {
                right_counts[label] = total_counts[label] - left_counts[label];
            }
            let impurity = (left_n as f64 * gini_from_counts(&left_counts, left_n)
                + right_n as f64 * gini_from_counts(&right_counts, right_n))
                / n as f64;
            let threshold = 0.5 * (ordered[pos].0 + ordered[pos + 1].0);
            if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                best = Some(SplitChoice { feature, threshold, impurity });
            }
        }
    }
    best
}

fn grow(
    train: &[FeatureVector],
    indices: &[usize],
    n_labels: usize,
    cfg: &TreeConfig,
    depth: usize,
    nodes: &mut Vec<TreeNode>,
) -> usize {
    let pure = indices.windows(2).all(|w| train[w[0]].label == train[w[1]].label);
    if pure || depth >= cfg.max_depth || indices.len() < 2 * cfg.min_leaf {
        nodes.push(TreeNode::Leaf { label: majority_label(train, indices, n_labels) });
        return nodes.len() - 1;
    }
    let parent_gini = {
        let mut counts = vec![0usize; n_labels];
        for &i in indices {
            counts[train[i].label] += 1;
        }
        gini_from_counts(&counts, indices.len())
    };
    match best_split(train, indices, n_labels, cfg.min_leaf) {
        Some(split) if split.impurity < parent_gini => {
            let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
                .iter()
                .partition(|&&i| train[i].values[split.feature] <= split.threshold);
            let left = grow(train, &left_idx, n_labels, cfg, depth + 1, nodes);
            let right = grow(train, &right_idx, n_labels, cfg, depth + 1, nodes);
            nodes.push(TreeNode::Split {
                feature: split.feature,
                threshold: split.threshold,
                left,
                right,
            });
            nodes.len() - 1
        }
        _ => {
            nodes.push(TreeNode::Leaf { label: majority_label(train, indices, n_labels) });
            nodes.len() - 1
        }
    }
}

impl DecisionTree {
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut node = self.root;
        loop {
            match &self.nodes[node] {
                TreeNode::Leaf { label } => return *label,
                TreeNode::Split { feature, threshold, left, right } => {
                    node = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }
}

// ---------------------------------------------------------------------------
// Linear SVM, one-vs-rest, hinge loss + L2, full-batch subgradient descent
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvmConfig {
    pub lambda: f64,
    pub iterations: usize,
    /// Seeds the (tiny) random weight initialization.
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self { lambda: 1e-3, iterations: 300, seed: 0 }
    }
}

pub struct LinearSvm {
    weights: Vec<Vec<f64>>, // one hyperplane per class
    biases: Vec<f64>,
}

/// Full-batch subgradient descent on the averaged hinge loss, one binary
/// margin per class. The averaged objective is invariant to duplicating the
/// training set, so the learned decision is too.
pub fn svm_fit(train: &[FeatureVector], cfg: &SvmConfig) -> Result<LinearSvm> {
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let n_labels = train.iter().map(|f| f.label).max().unwrap() + 1;
    let distinct = {
        let mut seen = vec![false; n_labels];
        for f in train {
            seen[f.label] = true;
        }
        seen.iter().filter(|&&s| s).count()
    };
    if distinct < 2 {
        return Err(Error::SingleClass);
    }
    let dim = train[0].values.len();
    let n = train.len() as f64;

    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut weights: Vec<Vec<f64>> = (0..n_labels)
        .map(|_| (0..dim).map(|_| rng.random_range(-1e-6..1e-6)).collect())
        .collect();
    let mut biases = vec![0.0f64; n_labels];

    let mut grad_w = vec![0.0f64; dim];
    for t in 0..cfg.iterations {
        let eta = 1.0 / (cfg.lambda * (t as f64 + 2.0));
        for class in 0..n_labels {
            let w = &mut weights[class];
            grad_w.iter_mut().for_each(|g| *g = 0.0);
            let mut grad_b = 0.0f64;
            for f in train {
                let y = if f.label == class { 1.0 } else { -1.0 };
                let margin =
                    y * (dot(w, &f.values) + biases[class]);
                if margin < 1.0 {
                    for (g, &v) in grad_w.iter_mut().zip(&f.values) {
                        *g -= y * v;
                    }
                    grad_b -= y;
                }
            }
            for (wi, g) in w.iter_mut().zip(&grad_w) {
                *wi -= eta * (cfg.lambda * *wi + g / n);
            }
            biases[class] -= eta * grad_b / n;
        }
    }
    Ok(LinearSvm { weights, biases })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl LinearSvm {
    /// Argmax class margin; ties go to the lowest class index.
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut best = 0usize;
        let mut best_margin = f64::NEG_INFINITY;
        for (class, w) in self.weights.iter().enumerate() {
            let margin = dot(w, x) + self.biases[class];
            if margin > best_margin {
                best_margin = margin;
                best = class;
            }
        }
        best
    }
}

// ---------------------------------------------------------------------------
// Protocol runner
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TrainSource {
    Lf,
    Hf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TestSource {
    Lf,
    Hf,
    Srp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Knn,
    DecisionTree,
    Svm,
}

impl ClassifierKind {
    pub fn all() -> [ClassifierKind; 3] {
        [ClassifierKind::Knn, ClassifierKind::DecisionTree, ClassifierKind::Svm]
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::Knn => "knn",
            ClassifierKind::DecisionTree => "decision_tree",
            ClassifierKind::Svm => "svm",
        }
    }
}

/// One train/test arrangement from the study's table.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NilmProtocol {
    pub train_source: TrainSource,
    pub test_source: TestSource,
    pub classifier: ClassifierKind,
}

/// Classifier settings shared across a table run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NilmOptions {
    pub k: usize,
    pub tree: TreeConfig,
    pub svm: SvmConfig,
    /// Override the automatic feature size (twice the source window length,
    /// capped at 256).
    pub feature_dim: Option<usize>,
}

impl Default for NilmOptions {
    fn default() -> Self {
        Self { k: 5, tree: TreeConfig::default(), svm: SvmConfig::default(), feature_dim: None }
    }
}

/// Windows with exactly one active appliance type, featurized from the
/// requested source.
fn feature_set(
    dataset: &Dataset,
    source: TestSource,
    model: Option<&SrpModel>,
    dim: usize,
) -> Result<Vec<FeatureVector>> {
    let mut planner = FftPlanner::new();
    let mut out = Vec::new();
    for pair in &dataset.pairs {
        let Some(label) = pair.single_label() else { continue };
        let label_idx = dataset
            .vocabulary
            .iter()
            .position(|v| v == label)
            .ok_or_else(|| Error::UnknownType(label.to_string()))?;
        let values = match source {
            TestSource::Lf => featurize_with(&mut planner, pair.low.samples(), dim)?,
            TestSource::Hf => featurize_with(&mut planner, pair.high.samples(), dim)?,
            TestSource::Srp => {
                let model = model.ok_or_else(|| {
                    Error::InvalidConfig("SRP-tested protocol needs a trained model".into())
                })?;
                let recon = infer(model, &pair.low)?;
                featurize_with(&mut planner, recon.samples(), dim)?
            }
        };
        out.push(FeatureVector { values, label: label_idx });
    }
    Ok(out)
}

fn source_window_len(dataset: &Dataset, source: TrainSource) -> usize {
    match source {
        TrainSource::Lf => dataset.lowres_window_len,
        TrainSource::Hf => dataset.lowres_window_len * dataset.alpha,
    }
}

/// Fit on the training split's designated source and score accuracy on the
/// test split's designated source.
pub fn run_protocol(
    train: &Dataset,
    test: &Dataset,
    model: Option<&SrpModel>,
    protocol: NilmProtocol,
    opts: &NilmOptions,
) -> Result<f64> {
    let dim = opts
        .feature_dim
        .unwrap_or_else(|| auto_feature_dim(source_window_len(train, protocol.train_source)));
    let train_src = match protocol.train_source {
        TrainSource::Lf => TestSource::Lf,
        TrainSource::Hf => TestSource::Hf,
    };
    let train_set = feature_set(train, train_src, model, dim)?;
    let test_set = feature_set(test, protocol.test_source, model, dim)?;
    if train_set.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if test_set.is_empty() {
        return Err(Error::EmptyInput);
    }
    let labels: Vec<usize> = test_set.iter().map(|f| f.label).collect();
    let predictions: Vec<usize> = match protocol.classifier {
        ClassifierKind::Knn => {
            let k = opts.k.min(train_set.len());
            let knn = knn_fit(train_set, k)?;
            test_set.iter().map(|f| knn.predict(&f.values)).collect()
        }
        ClassifierKind::DecisionTree => {
            let tree = tree_fit(&train_set, &opts.tree)?;
            test_set.iter().map(|f| tree.predict(&f.values)).collect()
        }
        ClassifierKind::Svm => {
            let svm = svm_fit(&train_set, &opts.svm)?;
            test_set.iter().map(|f| svm.predict(&f.values)).collect()
        }
    };
    accuracy(&predictions, &labels)
}

/// One classifier's row in the accuracy table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NilmRow {
    pub classifier: String,
    pub low_rate_hz: f64,
    pub alpha: usize,
    pub lf_lf: f64,
    pub hf_srp: f64,
    pub hf_hf: f64,
    pub gain_from_srp: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NilmReport {
    pub rows: Vec<NilmRow>,
}

impl NilmReport {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("classifier,low_rate_hz,alpha,lf_lf,hf_srp,hf_hf,gain_from_srp\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:.4},{:.4},{:.4},{:+.4}\n",
                r.classifier, r.low_rate_hz, r.alpha, r.lf_lf, r.hf_srp, r.hf_hf, r.gain_from_srp
            ));
        }
        out
    }
}

/// All three classifiers across the three protocol columns.
pub fn run_table(
    train: &Dataset,
    test: &Dataset,
    model: &SrpModel,
    opts: &NilmOptions,
) -> Result<NilmReport> {
    let mut rows = Vec::new();
    for classifier in ClassifierKind::all() {
        let acc = |train_source, test_source| {
            run_protocol(
                train,
                test,
                Some(model),
                NilmProtocol { train_source, test_source, classifier },
                opts,
            )
        };
        let lf_lf = acc(TrainSource::Lf, TestSource::Lf)?;
        let hf_srp = acc(TrainSource::Hf, TestSource::Srp)?;
        let hf_hf = acc(TrainSource::Hf, TestSource::Hf)?;
        rows.push(NilmRow {
            classifier: classifier.name().to_string(),
            low_rate_hz: train.low_rate_hz,
            alpha: train.alpha,
            lf_lf,
            hf_srp,
            hf_hf,
            gain_from_srp: hf_srp - lf_lf,
        });
    }
    Ok(NilmReport { rows })
}
