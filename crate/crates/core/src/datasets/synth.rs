//! Synthetic datasets with known ground truth.

use nalgebra::{DMatrix, Matrix2, Vector2};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{Dataset, GroundTruth, Layout};
use crate::error::{Error, Result};
use crate::geometry::normalize;
use crate::metrics::cerf_brain_map;
use crate::rng::child_rng;

/// Class-conditional mean of the positive class; the negative class sits at
/// the mirror image.
pub const TOY_MEAN: [f64; 2] = [1.5, 0.0];

/// Noise covariance shared by both toy classes.
pub const TOY_COVARIANCE: [[f64; 2]; 2] = [[1.02, -0.3], [-0.3, 0.15]];

/// The 2-D two-Gaussian problem in which only the first feature carries the
/// class signal, but correlated noise makes the second feature useful to an
/// accuracy-maximizing decoder.
///
/// The first `n_per_class` rows are class `+1`, the rest class `-1`. The true
/// weight direction is `[1, 0]`.
pub fn generate_toy(n_per_class: usize, seed: u64) -> Result<(Dataset, GroundTruth)> {
    if n_per_class == 0 {
        return Err(Error::InvalidInput("n_per_class must be >= 1".into()));
    }
    let cov = Matrix2::new(
        TOY_COVARIANCE[0][0],
        TOY_COVARIANCE[0][1],
        TOY_COVARIANCE[1][0],
        TOY_COVARIANCE[1][1],
    );
    let chol = cov
        .cholesky()
        .expect("toy covariance is positive definite")
        .l();
    let mean = Vector2::new(TOY_MEAN[0], TOY_MEAN[1]);
    let mut rng = child_rng(seed, 0);
    let n = 2 * n_per_class;
    let mut x = DMatrix::zeros(n, 2);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let label: i8 = if i < n_per_class { 1 } else { -1 };
        let z = Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        let row = mean * f64::from(label) + chol * z;
        x[(i, 0)] = row[0];
        x[(i, 1)] = row[1];
        y.push(label);
    }
    let d = Dataset::new(x, y, None, "toy")?;
    let truth = GroundTruth {
        theta_star: Some(normalize(&[1.0, 0.0])?),
        cerf_reference: cerf_brain_map(&d).ok(),
    };
    Ok((d, truth))
}

/// Parameters of the evoked-response generator.
#[derive(Debug, Clone, PartialEq)]
pub struct ErfConfig {
    pub channels: usize,
    pub timepoints: usize,
    pub n_per_class: usize,
    /// Pattern RMS divided by the per-feature noise standard deviation.
    pub snr: f64,
    /// Channel-major `channels x timepoints` effect; `None` uses
    /// [`default_erf_pattern`].
    pub pattern: Option<Vec<f64>>,
    pub seed: u64,
    /// Number of latent background sources mixed into the channels.
    pub background_sources: usize,
    /// Share of the noise variance contributed by the background sources;
    /// the rest is independent sensor noise.
    pub background_fraction: f64,
    /// Lag-one autocorrelation of the background source time courses.
    pub smoothness: f64,
}

impl ErfConfig {
    pub fn new(channels: usize, timepoints: usize, n_per_class: usize, snr: f64) -> Self {
        ErfConfig {
            channels,
            timepoints,
            n_per_class,
            snr,
            pattern: None,
            seed: 0,
            background_sources: 3,
            background_fraction: 0.8,
            smoothness: 0.9,
        }
    }
}

/// A smooth bump peaking at 1, centred at 40% of the channel axis and 37% of
/// the time axis: a localized, N170-like evoked component.
pub fn default_erf_pattern(channels: usize, timepoints: usize) -> Vec<f64> {
    let bump = |len: usize, centre: f64, width: f64| -> Vec<f64> {
        let c = centre * (len.saturating_sub(1)) as f64;
        (0..len)
            .map(|i| (-0.5 * ((i as f64 - c) / width).powi(2)).exp())
            .collect()
    };
    let ch = bump(channels, 0.4, (channels as f64 / 8.0).max(1.0));
    let tm = bump(timepoints, 0.37, (timepoints as f64 / 20.0).max(1.0));
    ch.iter()
        .flat_map(|a| tm.iter().map(move |b| a * b))
        .collect()
}

/// Two-class evoked-response trials: class `+1` carries `pattern` on top of
/// noise, class `-1` is noise only.
///
/// Noise on every feature has standard deviation `rms(pattern) / snr` and is
/// a mix of independent sensor noise and a few smooth background sources that
/// are shared across channels. The shared background is what makes the
/// accuracy-optimal decoder differ from the pattern itself.
///
/// The returned ground truth holds `theta_star = normalize(pattern)` and the
/// contrast map of the generated trials as `cerf_reference`.
#[allow(clippy::needless_range_loop)]
pub fn generate_erf(cfg: &ErfConfig) -> Result<(Dataset, GroundTruth)> {
    let (c, t) = (cfg.channels, cfg.timepoints);
    if c == 0 || t == 0 {
        return Err(Error::InvalidInput(
            "channels and timepoints must be >= 1".into(),
        ));
    }
    if cfg.n_per_class == 0 {
        return Err(Error::InvalidInput("n_per_class must be >= 1".into()));
    }
    if !(cfg.snr > 0.0) {
        return Err(Error::Domain {
            what: "snr",
            value: cfg.snr,
        });
    }
    if !(0.0..=1.0).contains(&cfg.background_fraction) {
        return Err(Error::Domain {
            what: "background_fraction",
            value: cfg.background_fraction,
        });
    }
    if !(0.0..1.0).contains(&cfg.smoothness) {
        return Err(Error::Domain {
            what: "smoothness",
            value: cfg.smoothness,
        });
    }
    let layout = Layout {
        channels: c,
        timepoints: t,
    };
    let p = layout.len();
    let pattern = match &cfg.pattern {
        Some(pat) if pat.len() != p => {
            return Err(Error::PatternShapeMismatch {
                expected: p,
                actual: pat.len(),
            })
        }
        Some(pat) => pat.clone(),
        None => default_erf_pattern(c, t),
    };
    let rms = (pattern.iter().map(|v| v * v).sum::<f64>() / p as f64).sqrt();
    // An all-zero pattern still gets unit-variance noise.
    let sigma = if rms > 0.0 { rms / cfg.snr } else { 1.0 };

    let k = cfg.background_sources;
    let mut mix_rng = child_rng(cfg.seed, 0);
    // mixing[s][ch], each channel column scaled to unit norm
    let mut mixing: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..c).map(|_| mix_rng.sample(StandardNormal)).collect())
        .collect();
    for ch in 0..c {
        let norm = (0..k).map(|s| mixing[s][ch].powi(2)).sum::<f64>().sqrt();
        for row in mixing.iter_mut() {
            row[ch] = if norm > 0.0 { row[ch] / norm } else { 0.0 };
        }
    }
    let (bg, white) = if k == 0 {
        (0.0, sigma)
    } else {
        (
            sigma * cfg.background_fraction.sqrt(),
            sigma * (1.0 - cfg.background_fraction).sqrt(),
        )
    };
    let a = cfg.smoothness;
    let innov = (1.0 - a * a).sqrt();

    let mut rng = child_rng(cfg.seed, 1);
    let n = 2 * cfg.n_per_class;
    let mut x = DMatrix::zeros(n, p);
    let mut y = Vec::with_capacity(n);
    let mut sources = vec![vec![0.0; t]; k];
    for i in 0..n {
        let label: i8 = if i < cfg.n_per_class { 1 } else { -1 };
        for src in sources.iter_mut() {
            src[0] = rng.sample(StandardNormal);
            for tt in 1..t {
                let e: f64 = rng.sample(StandardNormal);
                src[tt] = a * src[tt - 1] + innov * e;
            }
        }
        for ch in 0..c {
            for tt in 0..t {
                let j = layout.index(ch, tt);
                let background: f64 = (0..k).map(|s| mixing[s][ch] * sources[s][tt]).sum();
                let e: f64 = rng.sample(StandardNormal);
                let signal = if label == 1 { pattern[j] } else { 0.0 };
                x[(i, j)] = signal + bg * background + white * e;
            }
        }
        y.push(label);
    }
    let d = Dataset::new(x, y, Some(layout), "erf")?;
    let truth = GroundTruth {
        theta_star: normalize(&pattern).ok(),
        cerf_reference: cerf_brain_map(&d).ok(),
    };
    Ok((d, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{cosine_similarity, norm};

    #[test]
    fn toy_shape_and_truth() {
        let (d, truth) = generate_toy(1, 5).unwrap();
        assert_eq!((d.n(), d.p()), (2, 2));
        assert_eq!(d.y(), &[1, -1]);
        assert_eq!(truth.theta_star.unwrap().as_slice(), &[1.0, 0.0]);
        for seed in [0, 1, 99] {
            let (_, t) = generate_toy(3, seed).unwrap();
            assert_eq!(t.theta_star.unwrap().as_slice(), &[1.0, 0.0]);
        }
    }

    #[test]
    fn toy_class_mean_difference() {
        let (d, _) = generate_toy(1000, 7).unwrap();
        let mut diff = [0.0; 2];
        for i in 0..d.n() {
            let s = f64::from(d.y()[i]) / 1000.0;
            diff[0] += s * d.x()[(i, 0)];
            diff[1] += s * d.x()[(i, 1)];
        }
        // CLT: each class mean has sd sqrt(Sigma_jj / 1000); the difference of two
        // means sqrt(2) times that. Bound at 3 sd of the difference.
        let tol0 = 3.0 * (2.0 * 1.02 / 1000.0f64).sqrt();
        let tol1 = 3.0 * (2.0 * 0.15 / 1000.0f64).sqrt();
        assert!((diff[0] - 3.0).abs() < tol0, "{diff:?}");
        assert!(diff[1].abs() < tol1, "{diff:?}");
    }

    #[test]
    fn generators_are_reproducible() {
        assert_eq!(generate_toy(50, 3).unwrap(), generate_toy(50, 3).unwrap());
        assert_ne!(
            generate_toy(50, 3).unwrap().0,
            generate_toy(50, 4).unwrap().0
        );
        let cfg = ErfConfig {
            seed: 9,
            ..ErfConfig::new(3, 7, 4, 0.5)
        };
        assert_eq!(generate_erf(&cfg).unwrap(), generate_erf(&cfg).unwrap());
    }

    #[test]
    fn erf_rejects_bad_pattern() {
        let cfg = ErfConfig {
            pattern: Some(vec![1.0; 5]),
            ..ErfConfig::new(2, 3, 4, 1.0)
        };
        assert!(matches!(
            generate_erf(&cfg),
            Err(Error::PatternShapeMismatch {
                expected: 6,
                actual: 5
            })
        ));
        assert!(generate_erf(&ErfConfig::new(2, 3, 4, 0.0)).is_err());
    }

    #[test]
    fn erf_noiseless_limit_recovers_pattern() {
        let cfg = ErfConfig {
            seed: 1,
            ..ErfConfig::new(4, 6, 30, 1e12)
        };
        let (d, truth) = generate_erf(&cfg).unwrap();
        let reference = normalize(&default_erf_pattern(4, 6)).unwrap();
        let cerf = cerf_brain_map(&d).unwrap();
        for (a, b) in cerf.as_slice().iter().zip(reference.as_slice()) {
            assert!((a - b).abs() < 1e-6);
        }
        assert_eq!(truth.theta_star.unwrap(), reference);
    }

    #[test]
    fn erf_zero_pattern_contrast_vanishes() {
        // With no effect the class-mean difference is pure noise and shrinks
        // like 1/sqrt(n).
        let contrast_norm = |n| {
            let cfg = ErfConfig {
                pattern: Some(vec![0.0; 12]),
                seed: 4,
                ..ErfConfig::new(3, 4, n, 1.0)
            };
            let (d, truth) = generate_erf(&cfg).unwrap();
            assert!(truth.theta_star.is_none());
            let mut diff = vec![0.0; d.p()];
            for i in 0..d.n() {
                for (j, v) in diff.iter_mut().enumerate() {
                    *v += f64::from(d.y()[i]) * d.x()[(i, j)] / n as f64;
                }
            }
            norm(&diff)
        };
        let small = contrast_norm(20);
        let large = contrast_norm(20_000);
        assert!(large < small / 10.0, "{small} {large}");
    }

    #[test]
    fn toy_least_squares_misses_true_direction() {
        // numpy lstsq on the exported data: direction [0.44180, 0.89711]
        let (d, truth) = generate_toy(1000, 7).unwrap();
        let ls = normalize(&crate::decoders::fit_least_squares(&d).theta).unwrap();
        assert!((ls.as_slice()[0] - 0.44180).abs() < 1e-5);
        assert!((ls.as_slice()[1] - 0.89711).abs() < 1e-5);
        let cos = cosine_similarity(&ls, truth.theta_star.as_ref().unwrap()).unwrap();
        assert!(cos < 0.9, "{cos}");
    }

    #[test]
    fn erf_contrast_tracks_pattern() {
        let cfg = ErfConfig {
            seed: 3,
            ..ErfConfig::new(10, 50, 200, 1.0)
        };
        let (d, truth) = generate_erf(&cfg).unwrap();
        assert_eq!(d.layout().unwrap().len(), 500);
        let cos = cosine_similarity(
            truth.cerf_reference.as_ref().unwrap(),
            truth.theta_star.as_ref().unwrap(),
        )
        .unwrap();
        assert!(cos > 0.8, "{cos}");
    }
}
