//! Choosing the regularization strength by performance and interpretability.
//!
//! `zeta = (omega1 * eta + omega2 * delta) / (omega1 + omega2)` when
//! `delta >= kappa`, and 0 otherwise.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::datasets::{Dataset, GroundTruth};
use crate::decoders::LambdaGrid;
use crate::error::{Error, Result};
use crate::geometry::UnitVector;
use crate::metrics::{cerf_brain_map, full_report, Envelopes, Mode};
use crate::performance::bias_variance;
use crate::resampling::{fit_ensemble_path, make_plan, make_stratified_plan, FitOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// Weight on interpretability.
    pub omega1: f64,
    /// Weight on performance.
    pub omega2: f64,
    /// Performance floor below which `zeta` is 0.
    pub kappa: f64,
    pub grid: LambdaGrid,
    /// Bootstrap replicates.
    pub m: usize,
    pub seed: u64,
    pub mode: Mode,
    /// Draw replicates within each class.
    pub stratify: bool,
    pub fit: FitOptions,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            omega1: 1.0,
            omega2: 1.0,
            kappa: 0.6,
            grid: LambdaGrid::standard(),
            m: 50,
            seed: 0,
            mode: Mode::Exact,
            stratify: true,
            fit: FitOptions::default(),
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        for (what, v) in [("omega1", self.omega1), ("omega2", self.omega2)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Domain { what, value: v });
            }
        }
        if self.omega1 + self.omega2 <= 0.0 {
            return Err(Error::InvalidInput(
                "omega1 + omega2 must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.kappa) {
            return Err(Error::Domain {
                what: "kappa",
                value: self.kappa,
            });
        }
        if self.m == 0 {
            return Err(Error::InvalidInput("need at least one replicate".into()));
        }
        Ok(())
    }
}

pub fn zeta(eta: f64, delta: f64, cfg: &SelectionConfig) -> Result<f64> {
    for (what, v) in [("eta", eta), ("delta", delta)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Domain { what, value: v });
        }
    }
    if delta < cfg.kappa {
        return Ok(0.0);
    }
    Ok((cfg.omega1 * eta + cfg.omega2 * delta) / (cfg.omega1 + cfg.omega2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    /// Every replicate fitted the zero vector; `delta` is the chance proxy.
    Degenerate,
    /// Some replicate fits hit the sweep budget.
    Unconverged,
    /// Some (not all) replicates fitted the zero vector.
    PartiallyDegenerate,
    /// Replicate maps disagree so much that `psi` was clamped at 0.
    DegenerateGeometry,
}

impl Flag {
    pub fn as_str(&self) -> &'static str {
        match self {
            Flag::Degenerate => "degenerate",
            Flag::Unconverged => "unconverged",
            Flag::PartiallyDegenerate => "partially_degenerate",
            Flag::DegenerateGeometry => "degenerate_geometry",
        }
    }
}

/// One grid point. In heuristic mode `eta` and `beta` are measured against
/// the contrast map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub lambda: f64,
    pub delta: f64,
    pub eta: f64,
    pub zeta: f64,
    pub psi: f64,
    pub beta: f64,
    pub bias: f64,
    pub variance_net: f64,
    pub m_effective: usize,
    pub decomposition_residual: f64,
    pub flags: Vec<Flag>,
    pub envelopes: Option<Envelopes>,
    pub main_map: Option<UnitVector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub mode: Mode,
    pub rows: Vec<SelectionRow>,
    pub best_by_delta: f64,
    pub best_by_zeta: f64,
    /// Lambdas of the non-dominated rows in the (delta, eta) plane, by
    /// ascending delta.
    pub pareto_front: Vec<f64>,
    pub zeta_on_front: bool,
}

impl SelectionResult {
    pub fn row(&self, lambda: f64) -> Option<&SelectionRow> {
        self.rows.iter().find(|r| r.lambda == lambda)
    }
}

/// Indices of the points not strictly dominated in both coordinates by any
/// other point, ordered by ascending first coordinate (then index).
pub fn pareto_front(points: &[(f64, f64)]) -> Vec<usize> {
    let mut front: Vec<usize> = (0..points.len())
        .filter(|&i| {
            let (d, e) = points[i];
            !points.iter().any(|&(d2, e2)| d2 > d && e2 > e)
        })
        .collect();
    front.sort_by(|&a, &b| points[a].0.total_cmp(&points[b].0).then(a.cmp(&b)));
    front
}

/// First index of the maximum (the grid is increasing, so ties go to the
/// smaller lambda).
fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Runs the bootstrap pipeline at every grid value and scores each one.
///
/// A single perturbation plan is shared by all grid values, so differences
/// between rows come from `lambda` alone.
pub fn select(d: &Dataset, truth: &GroundTruth, cfg: &SelectionConfig) -> Result<SelectionResult> {
    cfg.validate()?;
    d.ensure_decodable()?;
    let mut truth = truth.clone();
    match cfg.mode {
        Mode::Exact if truth.theta_star.is_none() => {
            return Err(Error::InvalidInput(
                "exact mode needs a true map (theta_star)".into(),
            ))
        }
        Mode::Heuristic if truth.cerf_reference.is_none() => {
            truth.cerf_reference = Some(cerf_brain_map(&cfg.fit.preprocessing.fit(d)?.0)?);
        }
        _ => {}
    }

    let plan = Arc::new(if cfg.stratify {
        make_stratified_plan(d.y(), cfg.m, cfg.seed)?
    } else {
        make_plan(d.n(), cfg.m, cfg.seed)?
    });
    let ensembles = fit_ensemble_path(d, &plan, &cfg.grid, &cfg.fit)?;

    let mut rows = Vec::with_capacity(ensembles.len());
    for (ensemble, &lambda) in ensembles.into_iter().zip(cfg.grid.values()) {
        let ensemble = match ensemble {
            Ok(e) => e,
            Err(Error::AllReplicatesDegenerate { .. }) => {
                rows.push(SelectionRow {
                    lambda,
                    delta: 0.5,
                    eta: 0.0,
                    zeta: 0.0,
                    psi: 0.0,
                    beta: 0.0,
                    bias: f64::NAN,
                    variance_net: f64::NAN,
                    m_effective: 0,
                    decomposition_residual: 0.0,
                    flags: vec![Flag::Degenerate],
                    envelopes: None,
                    main_map: None,
                });
                continue;
            }
            Err(e) => return Err(e),
        };
        let metrics = full_report(&ensemble, &truth, cfg.mode)?;
        let perf = bias_variance(&ensemble, d.y())?;
        let mut flags = Vec::new();
        if ensemble.unconverged > 0 {
            flags.push(Flag::Unconverged);
        }
        if metrics.m_effective < ensemble.m() {
            flags.push(Flag::PartiallyDegenerate);
        }
        if metrics.degenerate_geometry {
            flags.push(Flag::DegenerateGeometry);
        }
        let delta = perf.delta.clamp(0.0, 1.0);
        rows.push(SelectionRow {
            lambda,
            delta,
            eta: metrics.eta,
            zeta: zeta(metrics.eta.min(1.0), delta, cfg)?,
            psi: metrics.psi,
            beta: metrics.beta,
            bias: perf.bias,
            variance_net: perf.variance_net,
            m_effective: metrics.m_effective,
            decomposition_residual: metrics.decomposition_residual,
            flags,
            envelopes: metrics.envelopes,
            main_map: Some(metrics.main_map),
        });
    }

    let best_delta = argmax(rows.iter().map(|r| r.delta));
    let best_zeta = argmax(rows.iter().map(|r| r.zeta));
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.delta, r.eta)).collect();
    let front = pareto_front(&points);
    Ok(SelectionResult {
        mode: cfg.mode,
        best_by_delta: rows[best_delta].lambda,
        best_by_zeta: rows[best_zeta].lambda,
        pareto_front: front.iter().map(|&i| rows[i].lambda).collect(),
        zeta_on_front: front.contains(&best_zeta),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{generate_toy, Preprocessing};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn zeta_examples() {
        let cfg = SelectionConfig::default();
        assert_abs_diff_eq!(zeta(1.0, 0.9292, &cfg).unwrap(), 0.9646, epsilon = 1e-12);
        assert_eq!(zeta(0.9, 0.59, &cfg).unwrap(), 0.0);
        assert_eq!(zeta(1.0, 1.0, &cfg).unwrap(), 1.0);
        assert_abs_diff_eq!(zeta(0.2, 0.6, &cfg).unwrap(), 0.4, epsilon = 1e-15);
        assert!(zeta(1.1, 0.9, &cfg).is_err());
        assert!(zeta(0.5, -0.1, &cfg).is_err());
    }

    #[test]
    fn config_validation() {
        let ok = SelectionConfig::default();
        assert!(ok.validate().is_ok());
        let zero = SelectionConfig {
            omega1: 0.0,
            omega2: 0.0,
            ..ok.clone()
        };
        assert!(zero.validate().is_err());
        let neg = SelectionConfig {
            omega1: -1.0,
            ..ok.clone()
        };
        assert!(neg.validate().is_err());
        let kappa = SelectionConfig { kappa: 1.5, ..ok };
        assert!(kappa.validate().is_err());
    }

    #[test]
    fn pareto_examples() {
        assert_eq!(pareto_front(&[(0.9, 0.3), (0.8, 0.6), (0.7, 0.5)]), [1, 0]);
        assert_eq!(pareto_front(&[(0.5, 0.5)]), [0]);
        assert_eq!(pareto_front(&[(0.5, 0.5), (0.5, 0.5)]), [0, 1]);
        // equal delta, higher eta: no strict dominance
        assert_eq!(pareto_front(&[(0.5, 0.4), (0.5, 0.6)]), [0, 1]);
    }

    fn toy_cfg(grid: &str) -> SelectionConfig {
        SelectionConfig {
            grid: grid.parse().unwrap(),
            m: 10,
            seed: 3,
            fit: FitOptions {
                preprocessing: Preprocessing::None,
                ..FitOptions::default()
            },
            ..SelectionConfig::default()
        }
    }

    #[test]
    fn single_lambda_wins_both() {
        let (d, truth) = generate_toy(100, 4).unwrap();
        let res = select(&d, &truth, &toy_cfg("10")).unwrap();
        assert_eq!(res.rows.len(), 1);
        assert_eq!(res.best_by_delta, 10.0);
        assert_eq!(res.best_by_zeta, 10.0);
        assert!(res.zeta_on_front);
    }

    #[test]
    fn degenerate_lambda_is_flagged() {
        let (d, truth) = generate_toy(100, 4).unwrap();
        let res = select(&d, &truth, &toy_cfg("1,1e9")).unwrap();
        let row = res.row(1e9).unwrap();
        assert_eq!(row.flags, [Flag::Degenerate]);
        assert_eq!((row.delta, row.zeta), (0.5, 0.0));
        assert_eq!(res.best_by_zeta, 1.0);
    }

    #[test]
    fn heuristic_mode_without_reference_falls_back() {
        let (d, truth) = generate_toy(100, 4).unwrap();
        let bare = GroundTruth {
            theta_star: truth.theta_star.clone(),
            cerf_reference: None,
        };
        let cfg = SelectionConfig {
            mode: Mode::Heuristic,
            ..toy_cfg("1,100")
        };
        let a = select(&d, &bare, &cfg).unwrap();
        let b = select(&d, &truth, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(select(&d, &GroundTruth::default(), &toy_cfg("1")).is_err());
    }

    #[test]
    fn rows_satisfy_invariants() {
        let (d, truth) = generate_toy(150, 9).unwrap();
        let res = select(&d, &truth, &toy_cfg("0,1,10,100,500")).unwrap();
        assert!(res.zeta_on_front);
        for r in res
            .rows
            .iter()
            .filter(|r| !r.flags.contains(&Flag::Degenerate))
        {
            assert!((0.0..=1.0).contains(&r.delta));
            assert!(r.decomposition_residual.abs() < 1e-12);
            let env = r.envelopes.as_ref().unwrap();
            assert!(env.beta.contains_within(r.beta, 1e-12));
            assert!(env.eta.contains_within(r.eta, 1e-12));
        }
    }

    proptest! {
        #[test]
        fn zeta_monotone_and_scale_free(
            e1 in 0.0..=1.0f64, e2 in 0.0..=1.0f64, d in 0.6..=1.0f64,
            w1 in 0.01..10.0f64, w2 in 0.01..10.0f64, s in 0.01..100.0f64,
        ) {
            let cfg = SelectionConfig { omega1: w1, omega2: w2, ..SelectionConfig::default() };
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            prop_assert!(zeta(lo, d, &cfg).unwrap() <= zeta(hi, d, &cfg).unwrap());
            prop_assert!(zeta(lo, d, &cfg).unwrap() <= zeta(lo, (d + 0.1).min(1.0), &cfg).unwrap());
            let scaled = SelectionConfig { omega1: w1 * s, omega2: w2 * s, ..cfg.clone() };
            let a = zeta(e1, d, &cfg).unwrap();
            let b = zeta(e1, d, &scaled).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }

        #[test]
        fn front_is_exactly_the_undominated_set(
            pts in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), 1..20)
        ) {
            let front = pareto_front(&pts);
            prop_assert!(!front.is_empty());
            for i in 0..pts.len() {
                let dominated = pts.iter().any(|q| q.0 > pts[i].0 && q.1 > pts[i].1);
                prop_assert_eq!(front.contains(&i), !dominated);
            }
            prop_assert!(front.windows(2).all(|w| pts[w[0]].0 <= pts[w[1]].0));
        }
    }
}
