//! Labeled aggregate load data: synthetic appliance signatures composed by
//! on/off state simulation, plus ingestion of PLAID-style per-appliance
//! recordings.
//!
//! The synthetic catalog encodes appliance identity mostly in the harmonic
//! structure of the power waveform. Mean power levels overlap across several
//! types, so a low-rate meter (which aliases every mains harmonic) sees far
//! less class information than a high-rate one.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{degrade, DegradationSpec, Domain, TimeSeries};

/// Splitmix64 finalizer; derives stream seeds from a master seed.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One appliance's electrical fingerprint: a steady-state waveform covering
/// whole mains cycles and a startup transient, both in raw watts at the same
/// base rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ApplianceSignature {
    pub appliance_type: String,
    pub steady_waveform: TimeSeries,
    pub transient_waveform: TimeSeries,
    pub id: String,
}

struct TypeProfile {
    name: &'static str,
    dc: f64,
    fundamental: f64,
    /// (harmonic number, amplitude in watts, waveshape phase offset)
    harmonics: &'static [(u32, f64, f64)],
    surge: f64,
    surge_tau_s: f64,
}

const PROFILES: &[TypeProfile] = &[
    TypeProfile { name: "air_conditioner", dc: 1100.0, fundamental: 940.0, harmonics: &[(3, 170.0, 0.6), (5, 80.0, 2.1), (7, 35.0, 1.4)], surge: 4.0, surge_tau_s: 0.40 },
    TypeProfile { name: "cfl", dc: 16.0, fundamental: 7.0, harmonics: &[(3, 5.0, 0.3), (5, 4.0, 1.5), (7, 3.0, 2.8), (9, 2.0, 0.5)], surge: 1.6, surge_tau_s: 0.03 },
    TypeProfile { name: "fan", dc: 75.0, fundamental: 58.0, harmonics: &[(3, 11.0, 2.2), (5, 5.0, 0.2)], surge: 2.5, surge_tau_s: 0.20 },
    TypeProfile { name: "fridge", dc: 120.0, fundamental: 90.0, harmonics: &[(3, 25.0, 1.1)], surge: 5.0, surge_tau_s: 0.25 },
    TypeProfile { name: "hairdryer", dc: 1000.0, fundamental: 930.0, harmonics: &[(3, 45.0, 0.9)], surge: 1.4, surge_tau_s: 0.05 },
    TypeProfile { name: "heater", dc: 1500.0, fundamental: 1400.0, harmonics: &[(3, 60.0, 0.4)], surge: 1.3, surge_tau_s: 0.08 },
    TypeProfile { name: "incandescent", dc: 60.0, fundamental: 52.0, harmonics: &[], surge: 7.0, surge_tau_s: 0.04 },
    TypeProfile { name: "laptop", dc: 55.0, fundamental: 26.0, harmonics: &[(3, 17.0, 2.6), (5, 12.0, 1.9), (7, 8.0, 0.9)], surge: 2.2, surge_tau_s: 0.06 },
    TypeProfile { name: "microwave", dc: 1200.0, fundamental: 1000.0, harmonics: &[(3, 280.0, 2.0), (5, 130.0, 0.7)], surge: 1.8, surge_tau_s: 0.12 },
    TypeProfile { name: "vacuum", dc: 800.0, fundamental: 690.0, harmonics: &[(3, 95.0, 1.7), (5, 40.0, 2.4)], surge: 3.0, surge_tau_s: 0.30 },
    TypeProfile { name: "washing_machine", dc: 500.0, fundamental: 420.0, harmonics: &[(3, 80.0, 2.9), (5, 35.0, 1.3)], surge: 3.5, surge_tau_s: 0.35 },
];

/// Names of the built-in synthetic appliance types, sorted.
pub fn synthetic_types() -> Vec<&'static str> {
    PROFILES.iter().map(|p| p.name).collect()
}

const MAINS_HZ: f64 = 50.0;
const STEADY_CYCLES: usize = 5;
const TRANSIENT_S: f64 = 0.3;

/// Deterministically synthesize one appliance instance. Instances of the same
/// type share a harmonic profile but get jittered amplitudes and a random
/// mains phase, so classes have intra-class variance.
pub fn synth_signature(
    appliance_type: &str,
    seed: u64,
    base_rate_hz: f64,
) -> Result<ApplianceSignature> {
    let profile = PROFILES
        .iter()
        .find(|p| p.name == appliance_type)
        .ok_or_else(|| Error::UnknownType(appliance_type.to_string()))?;
    let per_cycle = base_rate_hz / MAINS_HZ;
    if per_cycle.fract() != 0.0 || per_cycle < 4.0 {
        return Err(Error::InvalidConfig(format!(
            "base rate {base_rate_hz} Hz must be an integer multiple (>= 4) of the {MAINS_HZ} Hz mains frequency"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale: f64 = rng.random_range(0.85..1.15);
    let phase0: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let jitters: Vec<f64> =
        (0..profile.harmonics.len() + 1).map(|_| rng.random_range(0.9..1.1)).collect();
    let surge = profile.surge * rng.random_range(0.8..1.2);
    let tau = profile.surge_tau_s * rng.random_range(0.8..1.2);

    let wave = |t: f64| -> f64 {
        let mut v = profile.dc * scale;
        v += profile.fundamental * scale * jitters[0]
            * (std::f64::consts::TAU * MAINS_HZ * t + phase0).sin();
        for (hi, (h, amp, psi)) in profile.harmonics.iter().enumerate() {
            // Harmonic phase tracks the fundamental so instances are
            // time-shifted versions of the same waveshape.
            v += amp * scale * jitters[hi + 1]
                * (std::f64::consts::TAU * MAINS_HZ * *h as f64 * t
                    + *h as f64 * phase0
                    + psi)
                    .sin();
        }
        v.max(0.0)
    };

    let steady_len = STEADY_CYCLES * per_cycle as usize;
    let steady: Vec<f64> = (0..steady_len).map(|i| wave(i as f64 / base_rate_hz)).collect();
    let transient_len = (TRANSIENT_S * base_rate_hz).round() as usize;
    let transient: Vec<f64> = (0..transient_len)
        .map(|i| {
            let t = i as f64 / base_rate_hz;
            wave(t) * (1.0 + surge * (-t / tau).exp())
        })
        .collect();

    Ok(ApplianceSignature {
        appliance_type: appliance_type.to_string(),
        steady_waveform: TimeSeries::new(steady, base_rate_hz, Domain::Raw),
        transient_waveform: TimeSeries::new(transient, base_rate_hz, Domain::Raw),
        id: format!("{appliance_type}#{seed:x}"),
    })
}

/// A set of appliance signatures addressable by id.
#[derive(Debug, Clone)]
pub struct Catalog {
    signatures: Vec<ApplianceSignature>,
    by_id: BTreeMap<String, usize>,
}

impl Catalog {
    pub fn new(signatures: Vec<ApplianceSignature>) -> Self {
        let by_id =
            signatures.iter().enumerate().map(|(i, s)| (s.id.clone(), i)).collect();
        Self { signatures, by_id }
    }

    /// A catalog with `instances_per_type` jittered instances of every
    /// built-in type.
    pub fn synthetic(seed: u64, instances_per_type: usize, base_rate_hz: f64) -> Result<Self> {
        let mut signatures = Vec::new();
        for (ti, profile) in PROFILES.iter().enumerate() {
            for inst in 0..instances_per_type {
                let s = derive_seed(seed, (ti * 1000 + inst) as u64);
                signatures.push(synth_signature(profile.name, s, base_rate_hz)?);
            }
        }
        Ok(Self::new(signatures))
    }

    pub fn get(&self, id: &str) -> Option<&ApplianceSignature> {
        self.by_id.get(id).map(|&i| &self.signatures[i])
    }

    pub fn signatures(&self) -> &[ApplianceSignature] {
        &self.signatures
    }

    /// Sorted unique appliance types present.
    pub fn vocabulary(&self) -> Vec<String> {
        let mut v: Vec<String> =
            self.signatures.iter().map(|s| s.appliance_type.clone()).collect();
        v.sort();
        v.dedup();
        v
    }
}

/// One on/off activation of a catalog appliance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Event {
    pub appliance_id: String,
    pub on_s: f64,
    pub off_s: f64,
}

/// A household's appliance schedule over a fixed time span.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HouseholdScenario {
    pub events: Vec<Event>,
    pub duration_s: f64,
    pub base_rate_hz: f64,
}

impl HouseholdScenario {
    /// Checks the event-list invariants required for dataset building;
    /// [`simulate`] itself also accepts an empty (all-off) schedule.
    pub fn validate(&self) -> Result<()> {
        if self.events.is_empty() {
            return Err(Error::InvalidConfig("scenario has no events".into()));
        }
        for e in &self.events {
            if !(0.0 <= e.on_s && e.on_s < e.off_s && e.off_s <= self.duration_s) {
                return Err(Error::InvalidConfig(format!(
                    "event for {} has invalid interval [{}, {})",
                    e.appliance_id, e.on_s, e.off_s
                )));
            }
        }
        Ok(())
    }
}

/// Sum the scheduled appliances into one aggregate meter waveform (raw watts
/// at the scenario base rate). Each activation plays its transient first and
/// then tiles the steady-state waveform cyclically.
pub fn simulate(scenario: &HouseholdScenario, catalog: &Catalog) -> Result<TimeSeries> {
    let rate = scenario.base_rate_hz;
    let n = (scenario.duration_s * rate).round() as usize;
    assert!(n > 0, "scenario duration too short for its base rate");
    let mut agg = vec![0.0f64; n];
    for event in &scenario.events {
        let sig = catalog
            .get(&event.appliance_id)
            .ok_or_else(|| Error::UnknownAppliance(event.appliance_id.clone()))?;
        if sig.steady_waveform.sample_rate_hz() != rate {
            return Err(Error::InvalidConfig(format!(
                "signature {} is sampled at {} Hz, scenario runs at {rate} Hz",
                sig.id,
                sig.steady_waveform.sample_rate_hz()
            )));
        }
        let on_idx = ((event.on_s * rate - 1e-9).ceil().max(0.0)) as usize;
        let off_idx = (((event.off_s * rate - 1e-9).ceil()) as usize).min(n);
        let transient = sig.transient_waveform.samples();
        let steady = sig.steady_waveform.samples();
        for i in on_idx..off_idx {
            let k = i - on_idx;
            agg[i] += if k < transient.len() {
                transient[k]
            } else {
                steady[(k - transient.len()) % steady.len()]
            };
        }
    }
    Ok(TimeSeries::new(agg, rate, Domain::Raw))
}

/// Which split a dataset belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// One aligned (low_res, high_res) window pair with its labels and the exact
/// degradation that produced the low-res side.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPair {
    pub low: TimeSeries,
    pub high: TimeSeries,
    /// Sorted unique appliance types active anywhere in the window span.
    pub active_types: Vec<String>,
    pub degradation: DegradationSpec,
    pub scenario_index: usize,
}

impl LabeledPair {
    /// The window's label when exactly one appliance type is active.
    pub fn single_label(&self) -> Option<&str> {
        match self.active_types.as_slice() {
            [one] => Some(one),
            _ => None,
        }
    }
}

/// Window pairs of one split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub split: Split,
    pub pairs: Vec<LabeledPair>,
    pub vocabulary: Vec<String>,
    pub alpha: usize,
    pub low_rate_hz: f64,
    pub high_rate_hz: f64,
    pub lowres_window_len: usize,
}

impl Dataset {
    /// Borrowed (low, high) sample pairs in network-feed form.
    pub fn net_pairs(&self) -> Vec<(&[f64], &[f64])> {
        self.pairs.iter().map(|p| (p.low.samples(), p.high.samples())).collect()
    }
}

/// Train/val/test datasets from one generation run.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub config: DatasetConfig,
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

impl DatasetBundle {
    pub fn split(&self, split: Split) -> &Dataset {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// Everything needed to build a dataset bundle deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub low_rate_hz: f64,
    pub alpha: usize,
    /// Low-res window length d; high-res windows have alpha * d samples.
    pub lowres_window_len: usize,
    pub n_scenarios: usize,
    pub duration_s: f64,
    /// Noise added to the low-res side, in the preprocessed domain.
    pub noise_sigma: f64,
    pub phase: usize,
    pub synth_rate_hz: f64,
    pub instances_per_type: usize,
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            low_rate_hz: 100.0,
            alpha: 10,
            lowres_window_len: 32,
            n_scenarios: 40,
            duration_s: 10.0,
            noise_sigma: 0.01,
            phase: 0,
            synth_rate_hz: 1000.0,
            instances_per_type: 6,
            train_fraction: 0.7,
            val_fraction: 0.1,
            seed: 0,
        }
    }
}

/// Size estimate produced by [`DatasetConfig::dry_run`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetPlan {
    pub high_rate_hz: f64,
    pub decimation_from_synth: usize,
    pub windows_per_scenario: usize,
    pub train_windows: usize,
    pub val_windows: usize,
    pub test_windows: usize,
    pub highres_window_len: usize,
    pub window_s: f64,
    pub approx_bytes: u64,
}

impl DatasetConfig {
    pub fn high_rate_hz(&self) -> f64 {
        self.low_rate_hz * self.alpha as f64
    }

    pub fn window_s(&self) -> f64 {
        self.lowres_window_len as f64 / self.low_rate_hz
    }

    pub fn validate(&self) -> Result<()> {
        if self.low_rate_hz <= 0.0 || self.synth_rate_hz <= 0.0 {
            return Err(Error::InvalidConfig("sample rates must be positive".into()));
        }
        if self.alpha < 1 || self.phase >= self.alpha {
            return Err(Error::InvalidConfig("need alpha >= 1 and phase < alpha".into()));
        }
        if self.lowres_window_len < 2 {
            return Err(Error::InvalidConfig("low-res windows need at least 2 samples".into()));
        }
        if self.n_scenarios < 1 || self.instances_per_type < 1 {
            return Err(Error::InvalidConfig(
                "need at least one scenario and one instance per type".into(),
            ));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::InvalidConfig("noise sigma must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.train_fraction)
            || !(0.0..=1.0).contains(&self.val_fraction)
            || self.train_fraction + self.val_fraction > 1.0
        {
            return Err(Error::InvalidConfig("split fractions must be in [0,1] and sum <= 1".into()));
        }
        let f_h = self.high_rate_hz();
        let decim = self.synth_rate_hz / f_h;
        if decim.fract() != 0.0 || decim < 1.0 {
            return Err(Error::InvalidConfig(format!(
                "synth rate {} Hz must be an integer multiple of f_h = {f_h} Hz",
                self.synth_rate_hz
            )));
        }
        if self.duration_s < 3.0 * self.window_s() {
            return Err(Error::InvalidConfig(
                "scenario duration must cover at least three windows".into(),
            ));
        }
        Ok(())
    }

    /// Validate and report the sizes a build would produce, without building.
    pub fn dry_run(&self) -> Result<DatasetPlan> {
        self.validate()?;
        let f_h = self.high_rate_hz();
        let hi_len = self.alpha * self.lowres_window_len;
        let samples_per_scenario = (self.duration_s * f_h).round() as usize;
        let windows_per_scenario = samples_per_scenario / hi_len;
        let (train_s, val_s, test_s) = split_counts(self.n_scenarios, self.train_fraction, self.val_fraction);
        let per_window_bytes = (hi_len + self.lowres_window_len) as u64 * 4;
        Ok(DatasetPlan {
            high_rate_hz: f_h,
            decimation_from_synth: (self.synth_rate_hz / f_h) as usize,
            windows_per_scenario,
            train_windows: train_s * windows_per_scenario,
            val_windows: val_s * windows_per_scenario,
            test_windows: test_s * windows_per_scenario,
            highres_window_len: hi_len,
            window_s: self.window_s(),
            approx_bytes: (self.n_scenarios * windows_per_scenario) as u64 * per_window_bytes,
        })
    }
}

fn split_counts(n: usize, train_fraction: f64, val_fraction: f64) -> (usize, usize, usize) {
    let train = ((n as f64 * train_fraction).round() as usize).min(n);
    let val = ((n as f64 * val_fraction).round() as usize).min(n - train);
    (train, val, n - train - val)
}

/// The deterministic event schedules a build uses, exposed so labels can be
/// re-derived independently of the built dataset.
pub fn generate_scenarios(cfg: &DatasetConfig, catalog: &Catalog) -> Vec<HouseholdScenario> {
    let window_s = cfg.window_s();
    let n_sig = catalog.signatures().len();
    (0..cfg.n_scenarios)
        .map(|idx| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0x5CE0 + idx as u64));
            let mut events = Vec::new();
            let mut t = 0.0f64;
            loop {
                let on = t + rng.random_range(0.05..0.40) * window_s;
                if on >= cfg.duration_s - 1.2 * window_s {
                    break;
                }
                let dur = rng.random_range(1.5..3.5) * window_s;
                let off = (on + dur).min(cfg.duration_s);
                let sig = &catalog.signatures()[rng.random_range(0..n_sig)];
                events.push(Event { appliance_id: sig.id.clone(), on_s: on, off_s: off });
                t = off;
            }
            if events.is_empty() {
                // Degenerate durations still get one activation.
                let sig = &catalog.signatures()[rng.random_range(0..n_sig)];
                events.push(Event {
                    appliance_id: sig.id.clone(),
                    on_s: 0.0,
                    off_s: cfg.duration_s,
                });
            }
            HouseholdScenario {
                events,
                duration_s: cfg.duration_s,
                base_rate_hz: cfg.synth_rate_hz,
            }
        })
        .collect()
}

/// Appliance types whose activation intervals overlap `[t0, t1)`.
pub fn active_types_in_span(
    scenario: &HouseholdScenario,
    catalog: &Catalog,
    t0: f64,
    t1: f64,
) -> Result<Vec<String>> {
    let mut types = Vec::new();
    for e in &scenario.events {
        if e.on_s < t1 && e.off_s > t0 {
            let sig = catalog
                .get(&e.appliance_id)
                .ok_or_else(|| Error::UnknownAppliance(e.appliance_id.clone()))?;
            types.push(sig.appliance_type.clone());
        }
    }
    types.sort();
    types.dedup();
    Ok(types)
}

/// Build train/val/test window pairs: simulate each scenario, decimate to the
/// target high rate, preprocess, window, and degrade each high-res window
/// into its noisy low-res counterpart with a per-pair seed. Deterministic for
/// a fixed config; scenarios are assigned to splits disjointly.
pub fn build_dataset(cfg: &DatasetConfig) -> Result<DatasetBundle> {
    cfg.validate()?;
    let catalog = Catalog::synthetic(derive_seed(cfg.seed, 0xCA7A), cfg.instances_per_type, cfg.synth_rate_hz)?;
    let scenarios = generate_scenarios(cfg, &catalog);
    let f_h = cfg.high_rate_hz();
    let hi_len = cfg.alpha * cfg.lowres_window_len;
    let decim = (cfg.synth_rate_hz / f_h) as usize;
    let vocabulary = catalog.vocabulary();
    let (train_s, val_s, _) = split_counts(cfg.n_scenarios, cfg.train_fraction, cfg.val_fraction);

    let mut splits: [Vec<LabeledPair>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut pair_counter = 0u64;
    for (s_idx, scenario) in scenarios.iter().enumerate() {
        let agg = simulate(scenario, &catalog)?;
        let at_rate = if decim > 1 {
            degrade(&agg, &DegradationSpec::new(decim, 0, 0.0, 0))?
        } else {
            agg
        };
        let pre = at_rate.preprocess()?;
        let windows = pre.window(hi_len, hi_len)?;
        let split_slot = if s_idx < train_s {
            0
        } else if s_idx < train_s + val_s {
            1
        } else {
            2
        };
        for (w_idx, high) in windows.into_iter().enumerate() {
            let spec = DegradationSpec::new(
                cfg.alpha,
                cfg.phase,
                cfg.noise_sigma,
                derive_seed(cfg.seed, 0xD06E ^ pair_counter),
            );
            pair_counter += 1;
            let high = high.quantize_f32();
            let low = degrade(&high, &spec)?.quantize_f32();
            let t0 = (w_idx * hi_len) as f64 / f_h;
            let t1 = ((w_idx + 1) * hi_len) as f64 / f_h;
            let active_types = active_types_in_span(scenario, &catalog, t0, t1)?;
            splits[split_slot].push(LabeledPair {
                low,
                high,
                active_types,
                degradation: spec,
                scenario_index: s_idx,
            });
        }
    }

    let [train_pairs, val_pairs, test_pairs] = splits;
    let make = |split: Split, pairs: Vec<LabeledPair>| Dataset {
        split,
        pairs,
        vocabulary: vocabulary.clone(),
        alpha: cfg.alpha,
        low_rate_hz: cfg.low_rate_hz,
        high_rate_hz: f_h,
        lowres_window_len: cfg.lowres_window_len,
    };
    Ok(DatasetBundle {
        config: cfg.clone(),
        train: make(Split::Train, train_pairs),
        val: make(Split::Val, val_pairs),
        test: make(Split::Test, test_pairs),
    })
}

// ---------------------------------------------------------------------------
// On-disk dataset format: manifest JSON plus binary series files.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct PairEntry {
    low: String,
    high: String,
    labels: Vec<String>,
    degradation: DegradationSpec,
    scenario_index: usize,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: u32,
    config: DatasetConfig,
    vocabulary: Vec<String>,
    splits: BTreeMap<String, Vec<PairEntry>>,
}

const MANIFEST_VERSION: u32 = 1;

pub fn save_dataset(bundle: &DatasetBundle, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut splits = BTreeMap::new();
    for ds in [&bundle.train, &bundle.val, &bundle.test] {
        let sub = dir.join(ds.split.name());
        std::fs::create_dir_all(&sub)?;
        let mut entries = Vec::with_capacity(ds.pairs.len());
        for (i, pair) in ds.pairs.iter().enumerate() {
            let low_rel = format!("{}/{i:06}_lo.bin", ds.split.name());
            let high_rel = format!("{}/{i:06}_hi.bin", ds.split.name());
            pair.low.save_binary(&dir.join(&low_rel))?;
            pair.high.save_binary(&dir.join(&high_rel))?;
            entries.push(PairEntry {
                low: low_rel,
                high: high_rel,
                labels: pair.active_types.clone(),
                degradation: pair.degradation.clone(),
                scenario_index: pair.scenario_index,
            });
        }
        splits.insert(ds.split.name().to_string(), entries);
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        config: bundle.config.clone(),
        vocabulary: bundle.train.vocabulary.clone(),
        splits,
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<DatasetBundle> {
    let manifest_path = dir.join("manifest.json");
    if !manifest_path.exists() {
        return Err(Error::MissingMetadata(manifest_path));
    }
    let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(&manifest_path)?)?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::VersionMismatch {
            found: manifest.version,
            expected: MANIFEST_VERSION,
        });
    }
    let cfg = manifest.config;
    let load_split = |split: Split| -> Result<Dataset> {
        let entries = manifest
            .splits
            .get(split.name())
            .ok_or_else(|| Error::CorruptFile(format!("manifest missing {} split", split.name())))?;
        let mut pairs = Vec::with_capacity(entries.len());
        for e in entries {
            pairs.push(LabeledPair {
                low: TimeSeries::load_binary(&dir.join(&e.low))?,
                high: TimeSeries::load_binary(&dir.join(&e.high))?,
                active_types: e.labels.clone(),
                degradation: e.degradation.clone(),
                scenario_index: e.scenario_index,
            });
        }
        Ok(Dataset {
            split,
            pairs,
            vocabulary: manifest.vocabulary.clone(),
            alpha: cfg.alpha,
            low_rate_hz: cfg.low_rate_hz,
            high_rate_hz: cfg.high_rate_hz(),
            lowres_window_len: cfg.lowres_window_len,
        })
    };
    Ok(DatasetBundle {
        train: load_split(Split::Train)?,
        val: load_split(Split::Val)?,
        test: load_split(Split::Test)?,
        config: cfg,
    })
}

// ---------------------------------------------------------------------------
// PLAID-style ingestion: a directory of `current,voltage` CSV recordings with
// a metadata JSON mapping each file to an appliance type.
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct PlaidMetadata {
    #[serde(default = "default_plaid_rate")]
    sample_rate_hz: f64,
    files: BTreeMap<String, String>,
}

fn default_plaid_rate() -> f64 {
    30_000.0
}

/// Result of ingesting a recording directory.
#[derive(Debug)]
pub struct PlaidIngest {
    pub signatures: Vec<ApplianceSignature>,
    /// Files skipped because of missing metadata or unparseable rows.
    pub skipped_files: usize,
}

pub fn ingest_plaid(dir: &Path) -> Result<PlaidIngest> {
    let meta_path = dir.join("metadata.json");
    if !meta_path.exists() {
        return Err(Error::MissingMetadata(meta_path));
    }
    let meta: PlaidMetadata = serde_json::from_str(&std::fs::read_to_string(&meta_path)?)?;

    let mut csvs: Vec<std::path::PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    csvs.sort();
    if csvs.is_empty() {
        return Err(Error::EmptyDirectory(dir.to_path_buf()));
    }

    let mut signatures = Vec::new();
    let mut skipped_files = 0usize;
    'files: for path in &csvs {
        let file_name = path.file_name().unwrap().to_string_lossy().to_string();
        let Some(appliance_type) = meta.files.get(&file_name) else {
            skipped_files += 1;
            continue;
        };
        let text = std::fs::read_to_string(path)?;
        let mut power = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with(|c: char| c.is_alphabetic())) {
                continue;
            }
            let mut cols = line.split(',');
            let parsed = cols
                .next()
                .and_then(|c| c.trim().parse::<f64>().ok())
                .zip(cols.next().and_then(|v| v.trim().parse::<f64>().ok()));
            match parsed {
                Some((current, voltage)) => power.push(current * voltage),
                None => {
                    skipped_files += 1;
                    continue 'files;
                }
            }
        }
        if power.is_empty() {
            skipped_files += 1;
            continue;
        }
        let rate = meta.sample_rate_hz;
        let transient_len = ((rate * 0.5) as usize).clamp(1, power.len());
        signatures.push(ApplianceSignature {
            appliance_type: appliance_type.clone(),
            steady_waveform: TimeSeries::new(power.clone(), rate, Domain::Raw),
            transient_waveform: TimeSeries::new(power[..transient_len].to_vec(), rate, Domain::Raw),
            id: file_name,
        });
    }
    Ok(PlaidIngest { signatures, skipped_files })
}
