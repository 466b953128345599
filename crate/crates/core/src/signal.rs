//! Waveform types, the log-domain preprocessing transform, and the
//! degradation model (nearest-neighbor decimation plus Gaussian noise)
//! shared by every other stage of the pipeline.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Magic prefix of the packed binary series format.
pub const SERIES_MAGIC: [u8; 8] = *b"SRPTS\0\0\0";
/// Version of the packed binary series format.
pub const SERIES_VERSION: u32 = 1;

const LN_100: f64 = 4.605170185988092; // ln(100)

/// Which value domain a series lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    /// Instantaneous power in watts.
    Raw,
    /// log100(x*1e3 + 1) of the raw values.
    Preprocessed,
}

impl Domain {
    fn tag(self) -> u8 {
        match self {
            Domain::Raw => 0,
            Domain::Preprocessed => 1,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Domain::Raw),
            1 => Ok(Domain::Preprocessed),
            other => Err(Error::CorruptFile(format!("unknown domain tag {other}"))),
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Raw => write!(f, "raw"),
            Domain::Preprocessed => write!(f, "preprocessed"),
        }
    }
}

/// A uniformly sampled scalar waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    samples: Vec<f64>,
    sample_rate_hz: f64,
    domain: Domain,
}

impl TimeSeries {
    /// Build a series. Panics on an empty sample vector or a non-positive rate;
    /// both indicate a programming error rather than bad input data.
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64, domain: Domain) -> Self {
        assert!(!samples.is_empty(), "TimeSeries must be non-empty");
        assert!(
            sample_rate_hz > 0.0 && sample_rate_hz.is_finite(),
            "sample rate must be positive"
        );
        Self { samples, sample_rate_hz, domain }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    /// Map raw watts into the compressed log domain:
    /// `x~ = log100(x * 1e3 + 1)`. Rejects samples where the argument of the
    /// logarithm is non-positive (raw power below -1e-3 kW is corrupt data).
    pub fn preprocess(&self) -> Result<TimeSeries> {
        self.expect_domain(Domain::Raw)?;
        let mut out = Vec::with_capacity(self.samples.len());
        for (index, &x) in self.samples.iter().enumerate() {
            let arg = x * 1e3 + 1.0;
            if arg <= 0.0 {
                return Err(Error::NonPositiveArgument { index, value: x });
            }
            out.push(arg.ln() / LN_100);
        }
        Ok(TimeSeries::new(out, self.sample_rate_hz, Domain::Preprocessed))
    }

    /// Algebraic inverse of [`preprocess`](Self::preprocess):
    /// `x = (100^x~ - 1) * 1e-3`.
    pub fn inverse_preprocess(&self) -> Result<TimeSeries> {
        self.expect_domain(Domain::Preprocessed)?;
        let out: Vec<f64> = self
            .samples
            .iter()
            .map(|&x| ((x * LN_100).exp() - 1.0) * 1e-3)
            .collect();
        Ok(TimeSeries::new(out, self.sample_rate_hz, Domain::Raw))
    }

    /// Slice into fixed-length windows at offsets `0, stride, 2*stride, ...`.
    /// A trailing window that would run past the end is dropped.
    pub fn window(&self, len: usize, stride: usize) -> Result<Vec<TimeSeries>> {
        assert!(len > 0 && stride > 0, "window len and stride must be positive");
        if len > self.samples.len() {
            return Err(Error::WindowTooLong { len, available: self.samples.len() });
        }
        let mut windows = Vec::new();
        let mut start = 0usize;
        while start + len <= self.samples.len() {
            windows.push(TimeSeries::new(
                self.samples[start..start + len].to_vec(),
                self.sample_rate_hz,
                self.domain,
            ));
            start += stride;
        }
        Ok(windows)
    }

    /// Round every sample to f32 precision, the width used by the on-disk
    /// sample blobs. Applied when assembling datasets so that a dataset built
    /// in memory is bit-identical to one saved and reloaded.
    pub fn quantize_f32(mut self) -> TimeSeries {
        for v in &mut self.samples {
            *v = *v as f32 as f64;
        }
        self
    }

    fn expect_domain(&self, expected: Domain) -> Result<()> {
        if self.domain != expected {
            return Err(Error::DomainMismatch {
                expected: expected.to_string(),
                got: self.domain.to_string(),
            });
        }
        Ok(())
    }

    /// Write the packed binary format: magic, u32 version, f64 sample rate,
    /// u8 domain tag, u64 count, then `count` little-endian f32 samples.
    pub fn save_binary(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(29 + self.samples.len() * 4);
        buf.extend_from_slice(&SERIES_MAGIC);
        buf.extend_from_slice(&SERIES_VERSION.to_le_bytes());
        buf.extend_from_slice(&self.sample_rate_hz.to_le_bytes());
        buf.push(self.domain.tag());
        buf.extend_from_slice(&(self.samples.len() as u64).to_le_bytes());
        for &v in &self.samples {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        let mut file = std::fs::File::create(path)?;
        file.write_all(&buf)?;
        Ok(())
    }

    pub fn load_binary(path: &Path) -> Result<TimeSeries> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_binary(&bytes)
    }

    pub fn from_binary(bytes: &[u8]) -> Result<TimeSeries> {
        let mut cursor = Cursor { bytes, pos: 0 };
        let magic = cursor.take(8)?;
        if magic != SERIES_MAGIC {
            return Err(Error::CorruptFile("bad series magic".into()));
        }
        let version = u32::from_le_bytes(cursor.take(4)?.try_into().unwrap());
        if version != SERIES_VERSION {
            return Err(Error::VersionMismatch { found: version, expected: SERIES_VERSION });
        }
        let rate = f64::from_le_bytes(cursor.take(8)?.try_into().unwrap());
        let domain = Domain::from_tag(cursor.take(1)?[0])?;
        let count = u64::from_le_bytes(cursor.take(8)?.try_into().unwrap()) as usize;
        let mut samples = Vec::with_capacity(count);
        for _ in 0..count {
            let v = f32::from_le_bytes(cursor.take(4)?.try_into().unwrap());
            samples.push(v as f64);
        }
        if samples.is_empty() {
            return Err(Error::CorruptFile("series has no samples".into()));
        }
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::CorruptFile(format!("bad sample rate {rate}")));
        }
        Ok(TimeSeries::new(samples, rate, domain))
    }

    /// Write `t,value` CSV plus a sidecar JSON (same stem, `.json` extension)
    /// holding the sample rate and domain.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("t,value\n");
        for (i, &v) in self.samples.iter().enumerate() {
            let t = i as f64 / self.sample_rate_hz;
            out.push_str(&format!("{t},{v}\n"));
        }
        std::fs::write(path, out)?;
        let sidecar = Sidecar { sample_rate_hz: self.sample_rate_hz, domain: self.domain };
        std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }

    pub fn load_csv(path: &Path) -> Result<TimeSeries> {
        let sidecar: Sidecar =
            serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
        let text = std::fs::read_to_string(path)?;
        let mut samples = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with("t,")) {
                continue;
            }
            let value = line
                .split(',')
                .nth(1)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| {
                    Error::CorruptFile(format!("unparseable CSV row {} in {path:?}", lineno + 1))
                })?;
            samples.push(value);
        }
        if samples.is_empty() {
            return Err(Error::CorruptFile(format!("no samples in {path:?}")));
        }
        Ok(TimeSeries::new(samples, sidecar.sample_rate_hz, sidecar.domain))
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    path.with_extension("json")
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    sample_rate_hz: f64,
    domain: Domain,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::CorruptFile("unexpected end of file".into()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
}

/// How a high-resolution series is turned into its low-resolution counterpart:
/// keep one sample per block of `alpha`, then add Gaussian noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationSpec {
    pub alpha: usize,
    pub phase: usize,
    pub noise_sigma: f64,
    pub rng_seed: u64,
}

impl DegradationSpec {
    pub fn new(alpha: usize, phase: usize, noise_sigma: f64, rng_seed: u64) -> Self {
        assert!(alpha >= 1, "alpha must be at least 1");
        assert!(phase < alpha, "phase must be in [0, alpha)");
        assert!(noise_sigma >= 0.0, "noise sigma must be non-negative");
        Self { alpha, phase, noise_sigma, rng_seed }
    }

    /// Same decimation geometry with a different noise stream.
    pub fn with_seed(&self, rng_seed: u64) -> Self {
        Self { rng_seed, ..self.clone() }
    }

    /// Noise-free variant, useful for rate reduction in the raw domain.
    pub fn noiseless(&self) -> Self {
        Self { noise_sigma: 0.0, ..self.clone() }
    }
}

/// Realize the degradation model: `low[i] = high[alpha*i + phase] + eps_i`
/// with `eps_i ~ N(0, sigma^2)` drawn from a ChaCha stream seeded by
/// `spec.rng_seed`. Deterministic for a fixed seed.
pub fn degrade(high: &TimeSeries, spec: &DegradationSpec) -> Result<TimeSeries> {
    let len = high.len();
    if len % spec.alpha != 0 {
        return Err(Error::LengthNotDivisible { len, alpha: spec.alpha });
    }
    let out_len = len / spec.alpha;
    let mut out = Vec::with_capacity(out_len);
    for i in 0..out_len {
        out.push(high.samples()[spec.alpha * i + spec.phase]);
    }
    if spec.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
        let normal = Normal::new(0.0, spec.noise_sigma)
            .expect("sigma validated non-negative and finite");
        for v in &mut out {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(TimeSeries::new(
        out,
        high.sample_rate_hz() / spec.alpha as f64,
        high.domain(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raw(samples: Vec<f64>) -> TimeSeries {
        TimeSeries::new(samples, 100.0, Domain::Raw)
    }

    #[test]
    fn preprocess_zero_maps_to_zero() {
        let x = raw(vec![0.0]).preprocess().unwrap();
        assert_eq!(x.samples(), &[0.0]);
        assert_eq!(x.domain(), Domain::Preprocessed);
    }

    #[test]
    fn preprocess_known_point() {
        // 0.099 * 1e3 + 1 = 100, log100(100) = 1
        let x = raw(vec![0.099]).preprocess().unwrap();
        assert!((x.samples()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn preprocess_rejects_corrupt_raw_data() {
        let err = raw(vec![0.5, -0.002]).preprocess().unwrap_err();
        match err {
            Error::NonPositiveArgument { index, .. } => assert_eq!(index, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn preprocess_keeps_sample_rate() {
        let x = TimeSeries::new(vec![1.0, 2.0], 250.0, Domain::Raw);
        assert_eq!(x.preprocess().unwrap().sample_rate_hz(), 250.0);
    }

    #[test]
    fn inverse_known_points() {
        let pre = TimeSeries::new(vec![0.0, 1.0, 2.0], 10.0, Domain::Preprocessed);
        let x = pre.inverse_preprocess().unwrap();
        assert_eq!(x.samples()[0], 0.0);
        assert!((x.samples()[1] - 0.099).abs() < 1e-12);
        assert!((x.samples()[2] - 9.999).abs() < 1e-12); // (100^2 - 1) / 1000
    }

    #[test]
    fn roundtrip_over_dynamic_range() {
        let values = vec![1e-3, 1.0, 1e3, 1e6];
        let x = raw(values.clone());
        let back = x.preprocess().unwrap().inverse_preprocess().unwrap();
        for (orig, rec) in values.iter().zip(back.samples()) {
            assert!(
                ((rec - orig) / orig).abs() <= 1e-9,
                "roundtrip off: {orig} -> {rec}"
            );
        }
    }

    #[test]
    fn preprocess_requires_raw_domain() {
        let pre = TimeSeries::new(vec![1.0], 1.0, Domain::Preprocessed);
        assert!(matches!(pre.preprocess(), Err(Error::DomainMismatch { .. })));
        assert!(matches!(raw(vec![1.0]).inverse_preprocess(), Err(Error::DomainMismatch { .. })));
    }

    #[test]
    fn degrade_phase_selection() {
        let h = raw(vec![5.0, 6.0, 7.0, 8.0]);
        let lo = degrade(&h, &DegradationSpec::new(2, 0, 0.0, 1)).unwrap();
        assert_eq!(lo.samples(), &[5.0, 7.0]);
        assert_eq!(lo.sample_rate_hz(), 50.0);
        let lo = degrade(&h, &DegradationSpec::new(2, 1, 0.0, 1)).unwrap();
        assert_eq!(lo.samples(), &[6.0, 8.0]);
    }

    #[test]
    fn degrade_identity_when_alpha_one_sigma_zero() {
        let h = raw(vec![1.0, 2.0, 3.0]);
        let out = degrade(&h, &DegradationSpec::new(1, 0, 0.0, 9)).unwrap();
        assert_eq!(out, h);
    }

    #[test]
    fn degrade_rejects_indivisible_length() {
        let h = raw(vec![1.0, 2.0, 3.0]);
        assert!(matches!(
            degrade(&h, &DegradationSpec::new(2, 0, 0.0, 1)),
            Err(Error::LengthNotDivisible { len: 3, alpha: 2 })
        ));
    }

    #[test]
    fn degrade_noise_statistics() {
        let n = 100_000usize;
        let h = TimeSeries::new(vec![0.0; n], 1000.0, Domain::Preprocessed);
        let spec = DegradationSpec::new(1, 0, 0.01, 1234);
        let out = degrade(&h, &spec).unwrap();
        let mean: f64 = out.samples().iter().sum::<f64>() / n as f64;
        let var: f64 =
            out.samples().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        assert!(mean.abs() <= 3.0 * 0.01 / (n as f64).sqrt(), "mean {mean}");
        assert!((std - 0.01).abs() <= 0.05 * 0.01, "std {std}");
    }

    #[test]
    fn degrade_deterministic_per_seed() {
        let h = raw((0..64).map(|i| i as f64).collect());
        let spec = DegradationSpec::new(4, 2, 0.5, 77);
        let a = degrade(&h, &spec).unwrap();
        let b = degrade(&h, &spec).unwrap();
        assert_eq!(a.samples(), b.samples());
        let c = degrade(&h, &spec.with_seed(78)).unwrap();
        assert_ne!(a.samples(), c.samples());
    }

    #[test]
    fn degrade_commutes_with_preprocess_when_noiseless() {
        let h = raw((0..12).map(|i| 0.1 + i as f64 * 0.37).collect());
        let spec = DegradationSpec::new(3, 1, 0.0, 0);
        let a = degrade(&h.preprocess().unwrap(), &spec).unwrap();
        let b = degrade(&h, &spec).unwrap().preprocess().unwrap();
        assert_eq!(a.samples(), b.samples());
    }

    #[test]
    fn window_offsets() {
        let s = raw((0..10).map(|i| i as f64).collect());
        let w = s.window(4, 3).unwrap();
        assert_eq!(w.len(), 3);
        assert_eq!(w[0].samples(), &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(w[1].samples(), &[3.0, 4.0, 5.0, 6.0]);
        assert_eq!(w[2].samples(), &[6.0, 7.0, 8.0, 9.0]);

        let w = s.window(4, 4).unwrap();
        assert_eq!(w.len(), 2); // offset 8 would be partial, dropped

        let w = s.window(10, 1).unwrap();
        assert_eq!(w.len(), 1);

        assert!(matches!(s.window(11, 1), Err(Error::WindowTooLong { .. })));
    }

    #[test]
    fn binary_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.bin");
        let s = TimeSeries::new(vec![0.5, -0.25, 3.0], 123.0, Domain::Preprocessed);
        s.save_binary(&path).unwrap();
        let back = TimeSeries::load_binary(&path).unwrap();
        assert_eq!(back, s); // all values f32-exact
    }

    #[test]
    fn binary_rejects_bad_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.bin");
        let s = raw(vec![1.0, 2.0]);
        s.save_binary(&path).unwrap();

        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        assert!(matches!(
            TimeSeries::from_binary(&bytes),
            Err(Error::CorruptFile(_))
        ));

        let good = std::fs::read(&path).unwrap();
        assert!(matches!(
            TimeSeries::from_binary(&good[..good.len() - 2]),
            Err(Error::CorruptFile(_))
        ));
    }

    #[test]
    fn binary_rejects_wrong_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.bin");
        raw(vec![1.0]).save_binary(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[8] = 9;
        assert!(matches!(
            TimeSeries::from_binary(&bytes),
            Err(Error::VersionMismatch { found: 9, .. })
        ));
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.csv");
        let s = TimeSeries::new(vec![0.5, 1.5, 2.5], 10.0, Domain::Raw);
        s.save_csv(&path).unwrap();
        let back = TimeSeries::load_csv(&path).unwrap();
        assert_eq!(back, s);
    }

    proptest! {
        #[test]
        fn preprocess_strictly_monotone(
            a in -1e-3f64..1e6,
            delta in 1e-6f64..1e5,
        ) {
            let lo = a.max(-0.99e-3);
            let hi = lo + delta;
            let x = raw(vec![lo, hi]).preprocess().unwrap();
            prop_assert!(x.samples()[0] < x.samples()[1]);
        }

        #[test]
        fn roundtrip_identity_property(v in 1e-3f64..1e6) {
            let back = raw(vec![v]).preprocess().unwrap().inverse_preprocess().unwrap();
            let rel = ((back.samples()[0] - v) / v).abs();
            prop_assert!(rel <= 1e-9);
        }

        #[test]
        fn degrade_then_window_lengths(alpha in 1usize..6, blocks in 1usize..20) {
            let n = alpha * blocks;
            let h = raw((0..n).map(|i| i as f64).collect());
            let lo = degrade(&h, &DegradationSpec::new(alpha, 0, 0.0, 0)).unwrap();
            prop_assert_eq!(lo.len() * alpha, h.len());
        }
    }
}
