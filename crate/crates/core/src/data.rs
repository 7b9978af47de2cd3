//! Multi-modal datasets, scalar normalization and the synthetic gap benchmark.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::seed;
use crate::{Error, Result};

/// Number of input scalars produced by the synthetic benchmark.
pub const BENCH_D_IN: usize = 9;
/// Number of output scalars produced by the synthetic benchmark.
pub const BENCH_D_OUT: usize = 10;
/// Input dimensions pinned to 0.5 in the target domain.
pub const TARGET_FIXED_INPUTS: [usize; 4] = [0, 2, 5, 8];
/// Output channels perturbed by the domain shift (asymmetry and preheat analogs).
pub const SHIFTED_OUTPUTS: [usize; 2] = [7, 8];

/// Which side of the gap a dataset comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

/// Shapes shared by every sample of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub d_in: usize,
    pub d_out: usize,
    pub img_h: usize,
    pub img_w: usize,
}

impl Dims {
    /// Benchmark dimensions with a square image of side `img_size`.
    pub fn benchmark(img_size: usize) -> Self {
        Self {
            d_in: BENCH_D_IN,
            d_out: BENCH_D_OUT,
            img_h: img_size,
            img_w: img_size,
        }
    }

    pub fn pixels(&self) -> usize {
        self.img_h * self.img_w
    }
}

impl Default for Dims {
    fn default() -> Self {
        Self::benchmark(24)
    }
}

/// One record: raw inputs, raw outputs and a raw output image (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct MultiModalSample {
    pub x: Vec<f32>,
    pub o: Vec<f32>,
    pub img: Vec<f32>,
}

/// Per-scalar min/max ranges used to map raw scalars into `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub x_min: Vec<f64>,
    pub x_max: Vec<f64>,
    pub o_min: Vec<f64>,
    pub o_max: Vec<f64>,
}

impl NormStats {
    /// Computes ranges over `samples`.
    pub fn fit(samples: &[MultiModalSample]) -> Result<Self> {
        let first = samples.first().ok_or(Error::Empty("samples"))?;
        let (d_in, d_out) = (first.x.len(), first.o.len());
        let mut stats = Self {
            x_min: vec![f64::INFINITY; d_in],
            x_max: vec![f64::NEG_INFINITY; d_in],
            o_min: vec![f64::INFINITY; d_out],
            o_max: vec![f64::NEG_INFINITY; d_out],
        };
        for s in samples {
            check_len("inputs", d_in, s.x.len())?;
            check_len("outputs", d_out, s.o.len())?;
            for (k, &v) in s.x.iter().enumerate() {
                stats.x_min[k] = stats.x_min[k].min(f64::from(v));
                stats.x_max[k] = stats.x_max[k].max(f64::from(v));
            }
            for (k, &v) in s.o.iter().enumerate() {
                stats.o_min[k] = stats.o_min[k].min(f64::from(v));
                stats.o_max[k] = stats.o_max[k].max(f64::from(v));
            }
        }
        Ok(stats)
    }

    pub fn normalize_inputs(&self, raw: &[f64]) -> Result<Vec<f64>> {
        normalize_scalars(raw, &self.x_min, &self.x_max)
    }

    pub fn normalize_outputs(&self, raw: &[f64]) -> Result<Vec<f64>> {
        normalize_scalars(raw, &self.o_min, &self.o_max)
    }

    /// Width of output scalar `k`'s raw range (used to report raw-space errors).
    pub fn output_span(&self, k: usize) -> f64 {
        self.o_max[k] - self.o_min[k]
    }
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            got,
        })
    }
}

/// Maps each component to `(v - min) / (max - min)`, clamped to `[0, 1]`.
///
/// A constant scalar (`max == min`) maps to 0.5.
pub fn normalize_scalars(raw: &[f64], min: &[f64], max: &[f64]) -> Result<Vec<f64>> {
    check_len("scalar vector", min.len(), raw.len())?;
    check_len("scalar range", min.len(), max.len())?;
    Ok(raw
        .iter()
        .zip(min.iter().zip(max))
        .map(|(&v, (&lo, &hi))| {
            let span = hi - lo;
            if span <= 0.0 {
                0.5
            } else {
                ((v - lo) / span).clamp(0.0, 1.0)
            }
        })
        .collect())
}

/// Divides an image by its own pixel mean.
pub fn self_normalize_image(img: &[f64]) -> Result<Vec<f64>> {
    if img.is_empty() {
        return Err(Error::Empty("image"));
    }
    let mean = img.iter().sum::<f64>() / img.len() as f64;
    if !(mean > 0.0) || !mean.is_finite() {
        return Err(Error::DegenerateImage { mean });
    }
    Ok(img.iter().map(|p| p / mean).collect())
}

/// An ordered collection of samples from one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dims: Dims,
    pub domain: Domain,
    pub norm: NormStats,
    pub seed: u64,
    pub samples: Vec<MultiModalSample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Checks that every sample matches `dims` and the norm stats agree in length.
    pub fn validate(&self) -> Result<()> {
        check_len("norm x_min", self.dims.d_in, self.norm.x_min.len())?;
        check_len("norm x_max", self.dims.d_in, self.norm.x_max.len())?;
        check_len("norm o_min", self.dims.d_out, self.norm.o_min.len())?;
        check_len("norm o_max", self.dims.d_out, self.norm.o_max.len())?;
        for s in &self.samples {
            check_len("inputs", self.dims.d_in, s.x.len())?;
            check_len("outputs", self.dims.d_out, s.o.len())?;
            check_len("image", self.dims.pixels(), s.img.len())?;
        }
        Ok(())
    }

    /// Normalizes every sample for model consumption.
    pub fn prepare(&self) -> Result<Vec<PreparedSample>> {
        self.samples
            .iter()
            .map(|s| PreparedSample::new(s, &self.norm))
            .collect()
    }

    /// Returns a dataset holding only the samples at `indices` (in that order).
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Dataset {
        Dataset {
            dims: self.dims,
            domain: self.domain,
            norm: self.norm.clone(),
            seed: self.seed,
            samples: Vec::new(),
        }
    }
}

/// A sample in model space: scalars in `[0, 1]`, image divided by its mean.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSample {
    pub x: Vec<f64>,
    pub o: Vec<f64>,
    pub img: Vec<f64>,
}

impl PreparedSample {
    pub fn new(sample: &MultiModalSample, norm: &NormStats) -> Result<Self> {
        let x: Vec<f64> = sample.x.iter().map(|&v| f64::from(v)).collect();
        let o: Vec<f64> = sample.o.iter().map(|&v| f64::from(v)).collect();
        let img: Vec<f64> = sample.img.iter().map(|&v| f64::from(v)).collect();
        Ok(Self {
            x: norm.normalize_inputs(&x)?,
            o: norm.normalize_outputs(&o)?,
            img: self_normalize_image(&img)?,
        })
    }
}

// --- synthetic benchmark -------------------------------------------------

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-z))
}

/// The fixed analytic forward map standing in for the simulator.
///
/// ```text
/// o0 = (x0 + x1 + x2) / 3
/// o1 = x0 x1 + 0.5 x2
/// o2 = sigmoid(6 (x3 - x4))
/// o3 = 4 (x5 - 0.5)^2
/// o4 = 0.5 + 0.5 x6 x7
/// o5 = x7 x8 + 0.2 x0
/// o6 = 0.5 (x1 + x6)
/// o7 = 0.3 + 0.4 x4 x8 + 0.2 x2          (asymmetry analog)
/// o8 = 0.2 + 0.5 x3 + 0.3 x5 x7          (preheat analog)
/// o9 = mean(x)
/// ```
pub fn forward_map(x: &[f64]) -> [f64; BENCH_D_OUT] {
    assert_eq!(x.len(), BENCH_D_IN, "forward map input length");
    [
        (x[0] + x[1] + x[2]) / 3.0,
        x[0] * x[1] + 0.5 * x[2],
        sigmoid(6.0 * (x[3] - x[4])),
        4.0 * (x[5] - 0.5) * (x[5] - 0.5),
        0.5 + 0.5 * x[6] * x[7],
        x[7] * x[8] + 0.2 * x[0],
        0.5 * (x[1] + x[6]),
        0.3 + 0.4 * x[4] * x[8] + 0.2 * x[2],
        0.2 + 0.5 * x[3] + 0.3 * x[5] * x[7],
        x.iter().sum::<f64>() / BENCH_D_IN as f64,
    ]
}

/// The smooth perturbation applied to the shifted channels at full strength.
///
/// ```text
/// d7 =  0.25 + 0.15 x1
/// d8 = -(0.15 + 0.2 x3 x6)
/// ```
pub fn shift_delta(x: &[f64]) -> [f64; 2] {
    [0.25 + 0.15 * x[1], -(0.15 + 0.2 * x[3] * x[6])]
}

/// The experiment-side map: `forward_map(x) + shift * delta(x)` on the shifted channels.
pub fn shifted_map(x: &[f64], shift: f64) -> [f64; BENCH_D_OUT] {
    let mut o = forward_map(x);
    let d = shift_delta(x);
    for (c, dv) in SHIFTED_OUTPUTS.iter().zip(d) {
        o[*c] += shift * dv;
    }
    o
}

/// Elliptical blob parameters derived from three outputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobParams {
    pub radius: f64,
    pub amplitude: f64,
    pub ellipticity: f64,
}

impl BlobParams {
    /// `radius = 0.25 + 0.2 o0`, `amplitude = 0.5 + o1`, `ellipticity = (0.1 + 0.3 o6)(1 + 0.8 shift)`.
    pub fn from_outputs(o: &[f64], shift: f64) -> Self {
        Self {
            radius: 0.25 + 0.2 * o[0],
            amplitude: 0.5 + o[1],
            ellipticity: (0.1 + 0.3 * o[6]) * (1.0 + 0.8 * shift),
        }
    }

    /// Renders the blob on a `h x w` grid spanning `[-1, 1]^2`, over a 0.05 floor.
    pub fn render(&self, h: usize, w: usize) -> Vec<f64> {
        let ax = self.radius * (1.0 + self.ellipticity);
        let ay = self.radius * (1.0 - self.ellipticity);
        let mut img = Vec::with_capacity(h * w);
        for i in 0..h {
            let v = 2.0 * (i as f64 + 0.5) / h as f64 - 1.0;
            for j in 0..w {
                let u = 2.0 * (j as f64 + 0.5) / w as f64 - 1.0;
                let q = (u / ax) * (u / ax) + (v / ay) * (v / ay);
                img.push(0.05 + self.amplitude * libm::exp(-0.5 * q));
            }
        }
        img
    }
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

fn make_sample(x: &[f64], shift: f64, dims: Dims) -> MultiModalSample {
    let o = shifted_map(x, shift);
    let img = BlobParams::from_outputs(&o, shift).render(dims.img_h, dims.img_w);
    MultiModalSample {
        x: to_f32(x),
        o: to_f32(&o),
        img: to_f32(&img),
    }
}

/// Generates a source (simulation) set and a task-shifted target (experiment) set.
///
/// Source inputs are uniform on the unit cube. Target inputs pin
/// [`TARGET_FIXED_INPUTS`] to 0.5 and draw the rest uniformly; target outputs
/// come from [`shifted_map`] and the target image ellipticity is warped by
/// `1 + 0.8 shift`. Both sets carry normalization ranges fitted on the source.
pub fn gen_synthetic_benchmark(
    seed_value: u64,
    n_source: usize,
    n_target: usize,
    shift_strength: f64,
    dims: Dims,
) -> Result<(Dataset, Dataset)> {
    if n_source == 0 || n_target == 0 {
        return Err(Error::InvalidArgument("dataset sizes must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&shift_strength) {
        return Err(Error::InvalidArgument("shift strength must lie in [0, 1]".into()));
    }
    if dims.d_in != BENCH_D_IN || dims.d_out != BENCH_D_OUT {
        return Err(Error::InvalidArgument("benchmark has 9 inputs and 10 outputs".into()));
    }
    if dims.img_h < 2 || dims.img_w < 2 {
        return Err(Error::InvalidArgument("image must be at least 2x2".into()));
    }

    let mut rng = seed::rng(seed::derive(seed_value, "gen/source"));
    let source_samples: Vec<MultiModalSample> = (0..n_source)
        .map(|_| {
            let x: Vec<f64> = (0..BENCH_D_IN).map(|_| rng.random::<f64>()).collect();
            make_sample(&x, 0.0, dims)
        })
        .collect();

    let mut rng = seed::rng(seed::derive(seed_value, "gen/target"));
    let target_samples: Vec<MultiModalSample> = (0..n_target)
        .map(|_| {
            let x: Vec<f64> = (0..BENCH_D_IN)
                .map(|k| {
                    let u = rng.random::<f64>();
                    if TARGET_FIXED_INPUTS.contains(&k) {
                        0.5
                    } else {
                        u
                    }
                })
                .collect();
            make_sample(&x, shift_strength, dims)
        })
        .collect();

    let norm = NormStats::fit(&source_samples)?;
    Ok((
        Dataset {
            dims,
            domain: Domain::Source,
            norm: norm.clone(),
            seed: seed_value,
            samples: source_samples,
        },
        Dataset {
            dims,
            domain: Domain::Target,
            norm,
            seed: seed_value,
            samples: target_samples,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_bounds_and_midpoint() {
        let min = [1.0, 0.0];
        let max = [5.0, 2.0];
        assert_eq!(normalize_scalars(&min, &min, &max).unwrap(), vec![0.0, 0.0]);
        assert_eq!(normalize_scalars(&max, &min, &max).unwrap(), vec![1.0, 1.0]);
        assert_eq!(normalize_scalars(&[3.0, 1.0], &min, &max).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn normalize_clamps_and_handles_constant_scalar() {
        let out = normalize_scalars(&[-4.0, 9.0, 3.0], &[0.0, 0.0, 3.0], &[1.0, 1.0, 3.0]).unwrap();
        assert_eq!(out, vec![0.0, 1.0, 0.5]);
    }

    #[test]
    fn normalize_length_mismatch() {
        let err = normalize_scalars(&[1.0], &[0.0, 0.0], &[1.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
    }

    #[test]
    fn normalize_idempotent_on_unit_stats() {
        let min = [0.0; 3];
        let max = [1.0; 3];
        let once = normalize_scalars(&[0.2, 1.7, -0.3], &min, &max).unwrap();
        assert_eq!(normalize_scalars(&once, &min, &max).unwrap(), once);
    }

    #[test]
    fn self_normalize_cases() {
        assert_eq!(self_normalize_image(&[5.0; 4]).unwrap(), vec![1.0; 4]);
        assert_eq!(self_normalize_image(&[2.0, 6.0]).unwrap(), vec![0.5, 1.5]);
        assert!(matches!(
            self_normalize_image(&[0.0; 9]),
            Err(Error::DegenerateImage { .. })
        ));
        assert!(matches!(
            self_normalize_image(&[1.0, -3.0]),
            Err(Error::DegenerateImage { .. })
        ));
    }

    #[test]
    fn zero_shift_is_identity() {
        let x = [0.1, 0.9, 0.5, 0.3, 0.7, 0.5, 0.2, 0.4, 0.5];
        assert_eq!(shifted_map(&x, 0.0), forward_map(&x));
        assert_eq!(
            BlobParams::from_outputs(&forward_map(&x), 0.0),
            BlobParams::from_outputs(&shifted_map(&x, 0.0), 0.0)
        );
    }

    #[test]
    fn generator_is_deterministic_and_seed_sensitive() {
        let dims = Dims::benchmark(8);
        let a = gen_synthetic_benchmark(7, 16, 4, 0.6, dims).unwrap();
        let b = gen_synthetic_benchmark(7, 16, 4, 0.6, dims).unwrap();
        assert_eq!(a, b);
        let c = gen_synthetic_benchmark(8, 16, 4, 0.6, dims).unwrap();
        assert_ne!(a.0.samples, c.0.samples);
    }

    #[test]
    fn target_pins_designated_inputs() {
        let (_, tgt) = gen_synthetic_benchmark(3, 4, 6, 0.5, Dims::benchmark(8)).unwrap();
        for s in &tgt.samples {
            for &k in &TARGET_FIXED_INPUTS {
                assert_eq!(s.x[k], 0.5);
            }
        }
    }

    #[test]
    fn full_shift_moves_only_designated_channels() {
        // Direct evaluation over the generated target inputs.
        let (_, tgt) = gen_synthetic_benchmark(11, 4, 10, 1.0, Dims::benchmark(8)).unwrap();
        let mut drift = [0.0f64; BENCH_D_OUT];
        for s in &tgt.samples {
            let x: Vec<f64> = s.x.iter().map(|&v| f64::from(v)).collect();
            let g = forward_map(&x);
            for k in 0..BENCH_D_OUT {
                drift[k] += (f64::from(s.o[k]) - g[k]).abs() / tgt.len() as f64;
            }
        }
        let shifted = SHIFTED_OUTPUTS.iter().map(|&k| drift[k]).fold(f64::INFINITY, f64::min);
        let unshifted = (0..BENCH_D_OUT)
            .filter(|k| !SHIFTED_OUTPUTS.contains(k))
            .map(|k| drift[k])
            .fold(0.0, f64::max);
        assert!(shifted > 0.1);
        assert!(shifted > 5.0 * unshifted, "{shifted} vs {unshifted}");
    }

    #[test]
    fn prepared_images_have_unit_mean() {
        let (src, _) = gen_synthetic_benchmark(1, 8, 1, 0.0, Dims::benchmark(12)).unwrap();
        for p in src.prepare().unwrap() {
            let m = p.img.iter().sum::<f64>() / p.img.len() as f64;
            assert!((m - 1.0).abs() < 1e-6);
            assert!(p.x.iter().chain(&p.o).all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
