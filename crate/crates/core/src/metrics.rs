//! Interpretability of a decoder's weight maps.
//!
//! Given the unit-norm maps `w_1..w_m` fitted on perturbed training sets and
//! a reference direction `r` (the true map, or the class-contrast map as a
//! stand-in):
//!
//! * the **main map** is the renormalized sum `mu = sum w_j / ||sum w_j||`;
//! * **reproducibility** `psi = mean_j cos(w_j, mu)`;
//! * **representativeness** `beta = |cos(mu, r)|`;
//! * **interpretability** `eta = |mean_j cos(w_j, r)|`.
//!
//! Because `mean_j w_j = psi * mu`, the identity `eta = beta * psi` holds for
//! any ensemble up to rounding; [`MetricsReport::decomposition_residual`]
//! reports the floating-point gap.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::{Dataset, GroundTruth};
use crate::decoders::LinearModel;
use crate::error::{Error, Result};
use crate::geometry::{cosine_similarity, dot, normalize, UnitVector};
use crate::resampling::ReplicateEnsemble;

/// Which reference the headline metrics are measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Against the known true map (synthetic data).
    Exact,
    /// Against the class-contrast map.
    Heuristic,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Mode::Exact),
            "heuristic" => Ok(Mode::Heuristic),
            other => Err(Error::InvalidInput(format!("unknown mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Exact => "exact",
            Mode::Heuristic => "heuristic",
        })
    }
}

fn check_dims(maps: &[UnitVector], p: usize) -> Result<()> {
    match maps.iter().find(|m| m.dim() != p) {
        Some(m) => Err(Error::DimensionMismatch {
            expected: p,
            actual: m.dim(),
        }),
        None => Ok(()),
    }
}

/// Renormalized sum of the maps.
pub fn main_map(maps: &[UnitVector]) -> Result<UnitVector> {
    let first = maps.first().ok_or(Error::EmptyInput("map ensemble"))?;
    let p = first.dim();
    check_dims(maps, p)?;
    let mut sum = vec![0.0; p];
    for m in maps {
        for (s, v) in sum.iter_mut().zip(m.as_slice()) {
            *s += v;
        }
    }
    normalize(&sum)
}

fn mean_cosine(maps: &[UnitVector], reference: &UnitVector) -> Result<f64> {
    if maps.is_empty() {
        return Err(Error::EmptyInput("map ensemble"));
    }
    check_dims(maps, reference.dim())?;
    let cosines: Vec<f64> = maps
        .par_iter()
        .map(|m| cosine_similarity(m, reference))
        .collect::<Result<_>>()?;
    Ok(cosines.iter().sum::<f64>() / cosines.len() as f64)
}

/// Mean cosine between each map and the main map (signed; the report clamps).
pub fn reproducibility(maps: &[UnitVector]) -> Result<f64> {
    let mu = main_map(maps)?;
    mean_cosine(maps, &mu)
}

pub fn representativeness(main: &UnitVector, reference: &UnitVector) -> Result<f64> {
    Ok(cosine_similarity(main, reference)?.abs())
}

/// Absolute value of the mean cosine between the maps and `reference`.
pub fn interpretability(maps: &[UnitVector], reference: &UnitVector) -> Result<f64> {
    Ok(mean_cosine(maps, reference)?.abs())
}

/// Normalized difference between the class means (the contrast map).
///
/// Computed in whatever feature space `d` is in; pass standardized data to
/// compare against decoders fitted on standardized features.
pub fn cerf_brain_map(d: &Dataset) -> Result<UnitVector> {
    let (pos, neg) = d.class_counts();
    if pos == 0 || neg == 0 {
        return Err(Error::InvalidInput(
            "contrast map needs trials from both classes".into(),
        ));
    }
    let mut diff = vec![0.0; d.p()];
    for (j, col) in d.x().column_iter().enumerate() {
        let (mut sp, mut sn) = (0.0, 0.0);
        for (v, &l) in col.iter().zip(d.y()) {
            if l == 1 {
                sp += v;
            } else {
                sn += v;
            }
        }
        diff[j] = sp / pos as f64 - sn / neg as f64;
    }
    normalize(&diff)
}

/// Activation pattern `Sigma_X theta` of a linear decoder, where `Sigma_X` is
/// the (population) covariance of the features in `d`.
pub fn haufe_pattern(d: &Dataset, model: &LinearModel) -> Result<UnitVector> {
    if model.theta.len() != d.p() {
        return Err(Error::DimensionMismatch {
            expected: d.p(),
            actual: model.theta.len(),
        });
    }
    let n = d.n() as f64;
    let means: Vec<f64> = d.x().column_iter().map(|c| c.sum() / n).collect();
    let mut centered = d.x().clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    let scores = &centered * nalgebra::DVector::from_column_slice(&model.theta);
    let pattern = centered.tr_mul(&scores) / n;
    normalize(pattern.as_slice())
}

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub lo: f64,
    pub hi: f64,
}

impl Envelope {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn contains_within(&self, v: f64, slack: f64) -> bool {
        self.lo - slack <= v && v <= self.hi + slack
    }
}

fn check_unit_interval(what: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::Domain { what, value })
    }
}

/// Range of the exact representativeness given the heuristic one and the
/// cosine `delta_beta` between the true and heuristic references.
pub fn beta_envelope(beta_tilde: f64, delta_beta: f64) -> Result<Envelope> {
    check_unit_interval("beta_tilde", beta_tilde)?;
    check_unit_interval("delta_beta", delta_beta)?;
    let centre = delta_beta * beta_tilde;
    let half = ((1.0 - beta_tilde * beta_tilde) * (1.0 - delta_beta * delta_beta)).sqrt();
    Ok(Envelope {
        lo: (centre - half).max(0.0),
        hi: (centre + half).min(1.0),
    })
}

/// Range of the exact interpretability given the angles `gammas` between each
/// map and the heuristic reference.
pub fn eta_envelope(gammas: &[f64], delta_beta: f64) -> Result<Envelope> {
    check_unit_interval("delta_beta", delta_beta)?;
    if gammas.is_empty() {
        return Err(Error::EmptyInput("angles"));
    }
    if let Some(&g) = gammas
        .iter()
        .find(|g| !(0.0..=std::f64::consts::PI).contains(*g))
    {
        return Err(Error::Domain {
            what: "gamma",
            value: g,
        });
    }
    let m = gammas.len() as f64;
    let mean_cos = gammas.iter().map(|g| g.cos()).sum::<f64>() / m;
    let mean_sin = gammas.iter().map(|g| g.sin()).sum::<f64>() / m;
    let centre = delta_beta * mean_cos;
    let half = (1.0 - delta_beta * delta_beta).sqrt() * mean_sin;
    Ok(Envelope {
        lo: (centre - half).clamp(0.0, 1.0),
        hi: (centre + half).clamp(0.0, 1.0),
    })
}

/// Unclamped values behind the headline metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignedMetrics {
    pub psi: f64,
    pub beta: f64,
    pub eta: f64,
}

/// Heuristic metrics and the bounds they imply on the exact ones; available
/// when both the true and the contrast references are known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelopes {
    pub delta_beta: f64,
    pub beta_tilde: f64,
    pub eta_tilde: f64,
    /// Representativeness and interpretability against the true map.
    pub beta_exact: f64,
    pub eta_exact: f64,
    pub beta: Envelope,
    pub eta: Envelope,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mode: Mode,
    pub psi: f64,
    pub beta: f64,
    pub eta: f64,
    /// `eta - beta * psi`.
    pub decomposition_residual: f64,
    pub m_effective: usize,
    /// Set when the maps point in opposing directions so strongly that the
    /// mean cosine to their own main map is negative (`psi` clamped to 0).
    pub degenerate_geometry: bool,
    pub signed: SignedMetrics,
    pub main_map: UnitVector,
    pub envelopes: Option<Envelopes>,
}

fn reference_for(truth: &GroundTruth, mode: Mode) -> Result<&UnitVector> {
    match mode {
        Mode::Exact => truth.theta_star.as_ref(),
        Mode::Heuristic => truth.cerf_reference.as_ref(),
    }
    .ok_or_else(|| Error::InvalidInput(format!("no reference map available for {mode} mode")))
}

/// All map metrics of an ensemble against the reference selected by `mode`.
pub fn full_report(
    ensemble: &ReplicateEnsemble,
    truth: &GroundTruth,
    mode: Mode,
) -> Result<MetricsReport> {
    let maps = ensemble.valid_maps();
    if maps.is_empty() {
        return Err(Error::AllReplicatesDegenerate {
            lambda: ensemble.lambda,
        });
    }
    report_for_maps(&maps, truth, mode)
}

/// [`full_report`] on a bare list of non-degenerate maps.
pub fn report_for_maps(
    maps: &[UnitVector],
    truth: &GroundTruth,
    mode: Mode,
) -> Result<MetricsReport> {
    let reference = reference_for(truth, mode)?;
    let mu = main_map(maps)?;
    let psi_raw = mean_cosine(maps, &mu)?;
    let beta_raw = cosine_similarity(&mu, reference)?;
    let eta_raw = mean_cosine(maps, reference)?;

    let degenerate_geometry = psi_raw < 0.0;
    let psi = psi_raw.max(0.0);
    let beta = beta_raw.abs();
    let eta = eta_raw.abs();

    let envelopes = match (&truth.theta_star, &truth.cerf_reference) {
        (Some(star), Some(cerf)) => Some(envelopes(maps, &mu, star, cerf)?),
        _ => None,
    };

    Ok(MetricsReport {
        mode,
        psi,
        beta,
        eta,
        decomposition_residual: eta - beta * psi,
        m_effective: maps.len(),
        degenerate_geometry,
        signed: SignedMetrics {
            psi: psi_raw,
            beta: beta_raw,
            eta: eta_raw,
        },
        main_map: mu,
        envelopes,
    })
}

fn envelopes(
    maps: &[UnitVector],
    mu: &UnitVector,
    star: &UnitVector,
    cerf: &UnitVector,
) -> Result<Envelopes> {
    let cross = cosine_similarity(star, cerf)?;
    // Orient the contrast map towards the true map; both are only defined up
    // to sign.
    let cerf = if cross < 0.0 {
        cerf.negated()
    } else {
        cerf.clone()
    };
    let delta_beta = cross.abs();
    let beta_tilde = representativeness(mu, &cerf)?;
    let eta_tilde = interpretability(maps, &cerf)?;
    let gammas: Vec<f64> = maps
        .iter()
        .map(|m| Ok(cosine_similarity(m, &cerf)?.acos()))
        .collect::<Result<_>>()?;
    Ok(Envelopes {
        delta_beta,
        beta_tilde,
        eta_tilde,
        beta_exact: representativeness(mu, star)?,
        eta_exact: interpretability(maps, star)?,
        beta: beta_envelope(beta_tilde, delta_beta)?,
        eta: eta_envelope(&gammas, delta_beta)?,
    })
}

/// Cosine between the true and the contrast reference, when both exist.
pub fn delta_beta(truth: &GroundTruth) -> Option<f64> {
    match (&truth.theta_star, &truth.cerf_reference) {
        (Some(a), Some(b)) => Some(dot(a.as_slice(), b.as_slice()).abs().min(1.0)),
        _ => None,
    }
}

#[cfg(test)]
#[allow(clippy::approx_constant)]
mod tests {
    use super::*;
    use crate::datasets::standardize;
    use crate::decoders::fit_least_squares;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4, FRAC_PI_6};

    fn unit(v: &[f64]) -> UnitVector {
        normalize(v).unwrap()
    }

    fn at_angle(theta: f64) -> UnitVector {
        unit(&[theta.cos(), theta.sin()])
    }

    fn truth_exact(r: UnitVector) -> GroundTruth {
        GroundTruth {
            theta_star: Some(r),
            cerf_reference: None,
        }
    }

    #[test]
    fn main_map_examples() {
        let v = unit(&[0.3, -0.2, 0.9]);
        let m = main_map(&vec![v.clone(); 5]).unwrap();
        for (a, b) in m.as_slice().iter().zip(v.as_slice()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
        let m = main_map(&[unit(&[1.0, 0.0]), unit(&[0.0, 1.0])]).unwrap();
        assert_abs_diff_eq!(m.as_slice()[0], FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(m.as_slice()[1], FRAC_1_SQRT_2, epsilon = 1e-15);
        assert!(matches!(
            main_map(&[unit(&[1.0, 0.0]), unit(&[-1.0, 0.0])]),
            Err(Error::ZeroVector)
        ));
        assert!(main_map(&[]).is_err());
        assert!(main_map(&[unit(&[1.0, 0.0]), unit(&[1.0])]).is_err());
    }

    #[test]
    fn reproducibility_examples() {
        let v = unit(&[1.0, 2.0]);
        assert_abs_diff_eq!(
            reproducibility(&[v.clone(), v]).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        let r = reproducibility(&[unit(&[1.0, 0.0]), unit(&[0.0, 1.0])]).unwrap();
        assert_abs_diff_eq!(r, 0.70710678, epsilon = 1e-8);
        let r = reproducibility(&[at_angle(FRAC_PI_6), at_angle(-FRAC_PI_6)]).unwrap();
        assert_abs_diff_eq!(r, 0.8660254, epsilon = 1e-7);
    }

    #[test]
    fn representativeness_examples() {
        let e1 = unit(&[1.0, 0.0]);
        assert_eq!(representativeness(&e1, &e1).unwrap(), 1.0);
        assert_eq!(representativeness(&e1, &unit(&[0.0, 1.0])).unwrap(), 0.0);
        let diag = unit(&[1.0, 1.0]);
        assert_abs_diff_eq!(
            representativeness(&diag, &e1).unwrap(),
            0.70710678,
            epsilon = 1e-8
        );
        // sign invariance
        assert_eq!(
            representativeness(&diag, &e1).unwrap(),
            representativeness(&diag, &e1.negated()).unwrap()
        );
        assert!(representativeness(&e1, &unit(&[1.0])).is_err());
    }

    #[test]
    fn interpretability_examples() {
        let r = unit(&[1.0, 0.0]);
        assert_eq!(interpretability(&[r.clone(), r.clone()], &r).unwrap(), 1.0);
        let maps = [at_angle(FRAC_PI_4), at_angle(-FRAC_PI_4)];
        let eta = interpretability(&maps, &r).unwrap();
        assert_abs_diff_eq!(eta, 0.70710678, epsilon = 1e-8);
        let beta = representativeness(&main_map(&maps).unwrap(), &r).unwrap();
        let psi = reproducibility(&maps).unwrap();
        assert_abs_diff_eq!(eta, beta * psi, epsilon = 1e-15);
        assert!(interpretability(&maps, &unit(&[1.0, 0.0, 0.0])).is_err());
    }

    #[test]
    fn cerf_examples() {
        let d =
            Dataset::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]], vec![1, -1], None, "d").unwrap();
        assert_eq!(cerf_brain_map(&d).unwrap().as_slice(), &[1.0, 0.0]);
        let same =
            Dataset::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0]], vec![1, -1], None, "d").unwrap();
        assert!(matches!(cerf_brain_map(&same), Err(Error::ZeroVector)));
        let one_class = Dataset::from_rows(&[vec![1.0], vec![2.0]], vec![1, 1], None, "d").unwrap();
        assert!(cerf_brain_map(&one_class).is_err());
    }

    fn model(theta: Vec<f64>) -> LinearModel {
        LinearModel {
            theta,
            lambda: 0.0,
            converged: true,
            iterations: 0,
            ridge_fallback: false,
        }
    }

    #[test]
    fn haufe_with_identity_covariance() {
        // four points at (+-1, +-1): covariance is the identity
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0]);
        let d = Dataset::new(x, vec![1, 1, -1, -1], None, "d").unwrap();
        let pat = haufe_pattern(&d, &model(vec![3.0, -1.0])).unwrap();
        assert_eq!(pat, unit(&[3.0, -1.0]));
    }

    #[test]
    fn haufe_with_diagonal_covariance() {
        // (+-2, +-1): covariance diag(4, 1)
        let x = DMatrix::from_row_slice(4, 2, &[2.0, 1.0, 2.0, -1.0, -2.0, 1.0, -2.0, -1.0]);
        let d = Dataset::new(x, vec![1, 1, -1, -1], None, "d").unwrap();
        let pat = haufe_pattern(&d, &model(vec![1.0, 1.0])).unwrap();
        let expected = unit(&[4.0, 1.0]);
        for (a, b) in pat.as_slice().iter().zip(expected.as_slice()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
        assert!(haufe_pattern(&d, &model(vec![1.0])).is_err());
    }

    #[test]
    fn haufe_of_least_squares_is_contrast() {
        let (d, _) = crate::datasets::generate_toy(200, 12).unwrap();
        let (s, _) = standardize(&d).unwrap();
        let pat = haufe_pattern(&s, &fit_least_squares(&s)).unwrap();
        let cerf = cerf_brain_map(&s).unwrap();
        assert!(cosine_similarity(&pat, &cerf).unwrap() > 1.0 - 1e-9);
    }

    #[test]
    fn beta_envelope_examples() {
        let e = beta_envelope(0.37, 1.0).unwrap();
        assert_abs_diff_eq!(e.lo, 0.37, epsilon = 1e-15);
        assert_abs_diff_eq!(e.hi, 0.37, epsilon = 1e-15);
        let e = beta_envelope(1.0, 0.8).unwrap();
        assert_eq!((e.lo, e.hi), (0.8, 0.8));
        // 0.48 - sqrt(0.64 * 0.36) = 0 and 0.48 + 0.48 = 0.96
        let e = beta_envelope(0.6, 0.8).unwrap();
        assert_abs_diff_eq!(e.lo, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e.hi, 0.96, epsilon = 1e-15);
        assert!(beta_envelope(1.2, 0.5).is_err());
        assert!(beta_envelope(0.5, -0.1).is_err());
    }

    #[test]
    fn eta_envelope_examples() {
        let gammas = [0.1, 0.5, 1.2];
        let tilde = gammas.iter().map(|g: &f64| g.cos()).sum::<f64>() / 3.0;
        let e = eta_envelope(&gammas, 1.0).unwrap();
        assert_abs_diff_eq!(e.lo, tilde, epsilon = 1e-15);
        assert_abs_diff_eq!(e.hi, tilde, epsilon = 1e-15);
        let e = eta_envelope(&[0.0, 0.0], 0.9).unwrap();
        assert_abs_diff_eq!(e.lo, 0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(e.hi, 0.9, epsilon = 1e-15);
        // centre 0, half-width 1
        let e = eta_envelope(&[FRAC_PI_2, FRAC_PI_2], 0.0).unwrap();
        assert_eq!((e.lo, e.hi), (0.0, 1.0));
        assert!(eta_envelope(&[4.0], 0.5).is_err());
        assert!(eta_envelope(&[0.1], 1.5).is_err());
        assert!(eta_envelope(&[], 0.5).is_err());
    }

    #[test]
    fn report_on_perfect_ensemble() {
        let r = unit(&[0.2, 0.5, -0.1]);
        let rep = report_for_maps(&vec![r.clone(); 4], &truth_exact(r), Mode::Exact).unwrap();
        assert_abs_diff_eq!(rep.psi, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rep.beta, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rep.eta, 1.0, epsilon = 1e-15);
        assert!(rep.decomposition_residual.abs() < 1e-15);
        assert_eq!(rep.m_effective, 4);
        assert!(rep.envelopes.is_none());
    }

    #[test]
    fn report_symmetric_pair() {
        let maps = [at_angle(FRAC_PI_4), at_angle(-FRAC_PI_4)];
        let rep = report_for_maps(&maps, &truth_exact(unit(&[1.0, 0.0])), Mode::Exact).unwrap();
        assert!(rep.decomposition_residual.abs() <= 1e-12);
    }

    #[test]
    fn report_needs_reference_for_mode() {
        let r = unit(&[1.0, 0.0]);
        assert!(report_for_maps(
            std::slice::from_ref(&r),
            &truth_exact(r.clone()),
            Mode::Heuristic
        )
        .is_err());
    }

    #[test]
    fn anti_aligned_maps_flag_geometry() {
        // three maps whose sum points along a direction most of them oppose
        let maps = [
            unit(&[1.0, 0.0]),
            unit(&[-1.0, 0.01]),
            unit(&[-1.0, -0.01]),
            unit(&[1.0, 0.0]),
            unit(&[0.0, 1e-3]),
        ];
        let rep = report_for_maps(&maps, &truth_exact(unit(&[1.0, 0.0])), Mode::Exact).unwrap();
        assert!(rep.psi >= 0.0 && rep.psi <= 1.0);
        if rep.signed.psi < 0.0 {
            assert!(rep.degenerate_geometry);
        }
    }

    #[test]
    fn envelopes_contain_exact_values() {
        let star = unit(&[1.0, 0.0, 0.0]);
        let cerf = unit(&[0.9, 0.3, 0.1]);
        let maps: Vec<UnitVector> = [[0.8, 0.5, 0.1], [0.95, -0.1, 0.3], [0.7, 0.2, -0.4]]
            .iter()
            .map(|v| unit(v))
            .collect();
        let truth = GroundTruth {
            theta_star: Some(star),
            cerf_reference: Some(cerf),
        };
        let rep = report_for_maps(&maps, &truth, Mode::Exact).unwrap();
        let env = rep.envelopes.unwrap();
        assert_eq!((env.beta_exact, env.eta_exact), (rep.beta, rep.eta));
        assert!(env.beta.contains(rep.beta), "{env:?} {}", rep.beta);
        assert!(env.eta.contains(rep.eta), "{env:?} {}", rep.eta);
        assert_abs_diff_eq!(env.delta_beta, delta_beta(&truth).unwrap(), epsilon = 1e-15);
    }
}
