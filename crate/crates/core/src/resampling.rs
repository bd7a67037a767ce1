//! Bootstrap perturbation with out-of-bag test sets.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::{Dataset, Preprocessing};
use crate::decoders::{predict_theta, solve_path, LambdaGrid, LassoOptions, LassoProblem};
use crate::error::{Error, Result};
use crate::geometry::{normalize, UnitVector};
use crate::rng::child_rng;

/// One bootstrap draw: a training multiset and the trials it left out.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Replicate {
    pub train: Vec<usize>,
    /// Sorted indices absent from `train`.
    pub oob: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbationPlan {
    pub n: usize,
    pub seed: u64,
    pub stratified: bool,
    pub replicates: Vec<Replicate>,
}

impl PerturbationPlan {
    pub fn m(&self) -> usize {
        self.replicates.len()
    }

    /// How many replicates hold each trial out of bag.
    pub fn oob_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n];
        for r in &self.replicates {
            for &i in &r.oob {
                counts[i] += 1;
            }
        }
        counts
    }
}

fn complement(n: usize, train: &[usize]) -> Vec<usize> {
    let mut seen = vec![false; n];
    for &i in train {
        seen[i] = true;
    }
    (0..n).filter(|&i| !seen[i]).collect()
}

fn check_plan_args(n: usize, m: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("need n >= 2, got {n}")));
    }
    if m < 1 {
        return Err(Error::InvalidInput("need at least one replicate".into()));
    }
    Ok(())
}

/// `m` ordinary bootstrap draws of size `n`. Replicate `r` draws from its own
/// stream `child(seed, r)`.
pub fn make_plan(n: usize, m: usize, seed: u64) -> Result<PerturbationPlan> {
    check_plan_args(n, m)?;
    let replicates = (0..m)
        .map(|r| {
            let mut rng = child_rng(seed, r as u64);
            let train: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let oob = complement(n, &train);
            Replicate { train, oob }
        })
        .collect();
    Ok(PerturbationPlan {
        n,
        seed,
        stratified: false,
        replicates,
    })
}

/// Bootstrap stratified by class: each replicate draws `n+` trials from the
/// positive class and `n-` from the negative class, so every training set
/// contains both classes.
pub fn make_stratified_plan(labels: &[i8], m: usize, seed: u64) -> Result<PerturbationPlan> {
    let n = labels.len();
    check_plan_args(n, m)?;
    let pos: Vec<usize> = (0..n).filter(|&i| labels[i] == 1).collect();
    let neg: Vec<usize> = (0..n).filter(|&i| labels[i] != 1).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::InvalidInput(
            "stratified bootstrap needs both classes".into(),
        ));
    }
    let replicates = (0..m)
        .map(|r| {
            let mut rng = child_rng(seed, r as u64);
            let mut train = Vec::with_capacity(n);
            for class in [&pos, &neg] {
                train.extend((0..class.len()).map(|_| class[rng.random_range(0..class.len())]));
            }
            let oob = complement(n, &train);
            Replicate { train, oob }
        })
        .collect();
    Ok(PerturbationPlan {
        n,
        seed,
        stratified: true,
        replicates,
    })
}

/// How replicate training sets are preprocessed and fitted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Transform estimated on each training multiset and applied to its OOB
    /// trials.
    pub preprocessing: Preprocessing,
    pub lasso: LassoOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            preprocessing: Preprocessing::Standardize,
            lasso: LassoOptions::default(),
        }
    }
}

/// Per-replicate weight maps and OOB predictions at one `lambda`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateEnsemble {
    pub lambda: f64,
    /// `None` marks a replicate whose fitted weights were all zero.
    pub maps: Vec<Option<UnitVector>>,
    /// Predicted labels for `plan.replicates[j].oob`, in the same order.
    pub oob_predictions: Vec<Vec<i8>>,
    /// Replicates whose fit hit the sweep budget (best iterate kept).
    pub unconverged: usize,
    pub plan: Arc<PerturbationPlan>,
}

impl ReplicateEnsemble {
    pub fn m(&self) -> usize {
        self.maps.len()
    }

    /// The non-degenerate maps.
    pub fn valid_maps(&self) -> Vec<UnitVector> {
        self.maps.iter().flatten().cloned().collect()
    }

    pub fn m_effective(&self) -> usize {
        self.maps.iter().filter(|m| m.is_some()).count()
    }

    /// Drops replicate `j`, keeping every other replicate untouched.
    pub fn without_replicate(&self, j: usize) -> ReplicateEnsemble {
        let mut plan = (*self.plan).clone();
        plan.replicates.remove(j);
        let mut maps = self.maps.clone();
        maps.remove(j);
        let mut preds = self.oob_predictions.clone();
        preds.remove(j);
        ReplicateEnsemble {
            lambda: self.lambda,
            maps,
            oob_predictions: preds,
            unconverged: self.unconverged,
            plan: Arc::new(plan),
        }
    }
}

struct ReplicateFit {
    map: Option<UnitVector>,
    oob_predictions: Vec<i8>,
    converged: bool,
}

fn fit_replicate(
    d: &Dataset,
    rep: &Replicate,
    grid: &LambdaGrid,
    opts: &FitOptions,
) -> Result<Vec<ReplicateFit>> {
    let train = d.select_rows(&rep.train);
    let oob = d.select_rows(&rep.oob);
    let (train, transform) = opts.preprocessing.fit(&train)?;
    let oob_x = match transform {
        Some(t) => t.apply(oob.x())?,
        None => oob.x().clone(),
    };
    let problem = LassoProblem::from_dataset(&train);
    solve_path(&problem, grid, &opts.lasso)
        .into_iter()
        .map(|fit| {
            let (model, converged) = match fit {
                Ok(m) => (m, true),
                Err(Error::NotConverged(m)) => (*m, false),
                Err(e) => return Err(e),
            };
            Ok(ReplicateFit {
                map: normalize(&model.theta).ok(),
                oob_predictions: predict_theta(&model.theta, &oob_x)?,
                converged,
            })
        })
        .collect()
}

/// Fits every replicate along `grid` and returns one ensemble per grid value
/// (in grid order). A value at which every replicate is all-zero yields
/// [`Error::AllReplicatesDegenerate`].
///
/// Replicates run in parallel; each is a self-contained sequential
/// computation, and results are gathered by replicate index, so the output
/// is bit-identical for any thread count.
pub fn fit_ensemble_path(
    d: &Dataset,
    plan: &Arc<PerturbationPlan>,
    grid: &LambdaGrid,
    opts: &FitOptions,
) -> Result<Vec<Result<ReplicateEnsemble>>> {
    if plan.n != d.n() {
        return Err(Error::DimensionMismatch {
            expected: d.n(),
            actual: plan.n,
        });
    }
    let per_replicate: Vec<Vec<ReplicateFit>> = plan
        .replicates
        .par_iter()
        .map(|rep| fit_replicate(d, rep, grid, opts))
        .collect::<Result<_>>()?;

    let mut columns: Vec<Vec<ReplicateFit>> = (0..grid.len()).map(|_| Vec::new()).collect();
    for fits in per_replicate {
        for (g, fit) in fits.into_iter().enumerate() {
            columns[g].push(fit);
        }
    }
    Ok(columns
        .into_iter()
        .zip(grid.values())
        .map(|(fits, &lambda)| {
            if fits.iter().all(|f| f.map.is_none()) {
                return Err(Error::AllReplicatesDegenerate { lambda });
            }
            let unconverged = fits.iter().filter(|f| !f.converged).count();
            let (maps, oob_predictions) =
                fits.into_iter().map(|f| (f.map, f.oob_predictions)).unzip();
            Ok(ReplicateEnsemble {
                lambda,
                maps,
                oob_predictions,
                unconverged,
                plan: Arc::clone(plan),
            })
        })
        .collect())
}

/// Fits the replicate ensemble at a single `lambda`.
pub fn fit_ensemble(
    d: &Dataset,
    plan: &Arc<PerturbationPlan>,
    lambda: f64,
    opts: &FitOptions,
) -> Result<ReplicateEnsemble> {
    let grid = LambdaGrid::new(vec![lambda])?;
    fit_ensemble_path(d, plan, &grid, opts)?
        .pop()
        .expect("one grid value")
}
