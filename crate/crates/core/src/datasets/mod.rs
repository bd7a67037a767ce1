//! Trial matrices, labels, and feature standardization.

mod io;
mod synth;

pub use io::{load_binary, load_csv, save_binary, save_csv, BINARY_MAGIC, BINARY_VERSION};
pub use synth::{
    default_erf_pattern, generate_erf, generate_toy, ErfConfig, TOY_COVARIANCE, TOY_MEAN,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::UnitVector;

/// Channel x time arrangement of the feature axis.
///
/// Features are flattened channel-major: all timepoints of channel 0, then
/// all timepoints of channel 1, and so on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub channels: usize,
    pub timepoints: usize,
}

impl Layout {
    pub fn len(&self) -> usize {
        self.channels * self.timepoints
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat feature index of `(channel, timepoint)`.
    pub fn index(&self, channel: usize, timepoint: usize) -> usize {
        channel * self.timepoints + timepoint
    }
}

/// A labelled set of trials: `x` is `n x p`, `y` holds `+1` / `-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: Vec<i8>,
    layout: Option<Layout>,
    name: String,
}

impl Dataset {
    pub fn new(
        x: DMatrix<f64>,
        y: Vec<i8>,
        layout: Option<Layout>,
        name: impl Into<String>,
    ) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                actual: y.len(),
            });
        }
        if let Some(bad) = y.iter().find(|&&l| l != 1 && l != -1) {
            return Err(Error::InvalidInput(format!("label {bad} is not +1 or -1")));
        }
        if let Some(l) = layout {
            if l.len() != x.ncols() {
                return Err(Error::PatternShapeMismatch {
                    expected: x.ncols(),
                    actual: l.len(),
                });
            }
        }
        Ok(Dataset {
            x,
            y,
            layout,
            name: name.into(),
        })
    }

    /// Builds a dataset from row-major feature values.
    pub fn from_rows(
        rows: &[Vec<f64>],
        y: Vec<i8>,
        layout: Option<Layout>,
        name: impl Into<String>,
    ) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                actual: r.len(),
            });
        }
        let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
        Self::new(x, y, layout, name)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &[i8] {
        &self.y
    }

    pub fn y_f64(&self) -> DVector<f64> {
        DVector::from_iterator(self.y.len(), self.y.iter().map(|&l| f64::from(l)))
    }

    pub fn layout(&self) -> Option<Layout> {
        self.layout
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// `(n_positive, n_negative)`.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.y.iter().filter(|&&l| l == 1).count();
        (pos, self.y.len() - pos)
    }

    /// Checks the dataset can be used for decoding: at least two trials and
    /// both classes present.
    pub fn ensure_decodable(&self) -> Result<()> {
        let (pos, neg) = self.class_counts();
        if self.n() < 2 || pos == 0 || neg == 0 {
            return Err(Error::InvalidInput(format!(
                "decoding needs both classes present (got {pos} positive, {neg} negative)"
            )));
        }
        Ok(())
    }

    /// Rows selected by `indices` (repeats allowed).
    pub fn select_rows(&self, indices: &[usize]) -> Dataset {
        let x = self.x.select_rows(indices.iter());
        let y = indices.iter().map(|&i| self.y[i]).collect();
        Dataset {
            x,
            y,
            layout: self.layout,
            name: self.name.clone(),
        }
    }

    pub fn with_x(&self, x: DMatrix<f64>) -> Result<Dataset> {
        Dataset::new(x, self.y.clone(), self.layout, self.name.clone())
    }
}

/// Known or heuristic reference directions for a dataset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// The true weight map direction, when known (synthetic data only).
    pub theta_star: Option<UnitVector>,
    /// The contrast (class-mean difference) map used as a heuristic reference.
    pub cerf_reference: Option<UnitVector>,
}

/// Per-feature affine transform fitted by [`standardize`].
///
/// `std` is the population standard deviation (denominator `n`). Constant
/// columns record `std = 0` and are only centered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Columns whose spread is below this are treated as constant.
const CONSTANT_STD: f64 = 1e-12;

impl Standardizer {
    pub fn fit(x: &DMatrix<f64>) -> Standardizer {
        let n = x.nrows() as f64;
        let (mean, std) = x
            .column_iter()
            .map(|col| {
                let m = col.sum() / n;
                let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
                let s = var.sqrt();
                (
                    m,
                    if s < CONSTANT_STD * (1.0 + m.abs()) {
                        0.0
                    } else {
                        s
                    },
                )
            })
            .unzip();
        Standardizer { mean, std }
    }

    /// Mean removal only (every `std` recorded as 0).
    pub fn fit_centering(x: &DMatrix<f64>) -> Standardizer {
        let n = x.nrows() as f64;
        Standardizer {
            mean: x.column_iter().map(|c| c.sum() / n).collect(),
            std: vec![0.0; x.ncols()],
        }
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                actual: x.ncols(),
            });
        }
        let mut out = x.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            let (m, s) = (self.mean[j], self.std[j]);
            let scale = if s > 0.0 { 1.0 / s } else { 1.0 };
            col.apply(|v| *v = (*v - m) * scale);
        }
        Ok(out)
    }
}

/// Centers each feature and scales it to unit population standard deviation.
pub fn standardize(d: &Dataset) -> Result<(Dataset, Standardizer)> {
    if d.n() < 2 {
        return Err(Error::InvalidInput(format!(
            "standardization needs at least 2 trials, got {}",
            d.n()
        )));
    }
    let s = Standardizer::fit(d.x());
    let x = s.apply(d.x())?;
    Ok((d.with_x(x)?, s))
}

/// How features are transformed before a decoder is fitted. The transform
/// is always estimated on the training trials alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preprocessing {
    /// Fit on the raw features.
    None,
    /// Remove each feature's mean. Without an intercept this is what lets
    /// the decision boundary sit between two classes that are not
    /// symmetric about the origin, and it keeps weights in the original
    /// feature units.
    Center,
    /// Remove the mean and scale to unit standard deviation.
    #[default]
    Standardize,
}

impl Preprocessing {
    /// Fits the transform on `d` and returns the transformed data with the
    /// transform (`None` for [`Preprocessing::None`]).
    pub fn fit(&self, d: &Dataset) -> Result<(Dataset, Option<Standardizer>)> {
        match self {
            Preprocessing::None => Ok((d.clone(), None)),
            Preprocessing::Center => {
                let s = Standardizer::fit_centering(d.x());
                let x = s.apply(d.x())?;
                Ok((d.with_x(x)?, Some(s)))
            }
            Preprocessing::Standardize => {
                let (out, s) = standardize(d)?;
                Ok((out, Some(s)))
            }
        }
    }
}

impl std::str::FromStr for Preprocessing {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Preprocessing::None),
            "center" => Ok(Preprocessing::Center),
            "standardize" => Ok(Preprocessing::Standardize),
            other => Err(Error::InvalidInput(format!(
                "unknown preprocessing {other:?} (expected none, center or standardize)"
            ))),
        }
    }
}

impl std::fmt::Display for Preprocessing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Preprocessing::None => "none",
            Preprocessing::Center => "center",
            Preprocessing::Standardize => "standardize",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn column_stats(x: &DMatrix<f64>, j: usize) -> (f64, f64) {
        let col = x.column(j);
        let n = col.len() as f64;
        let m = col.sum() / n;
        let v = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
        (m, v.sqrt())
    }

    #[test]
    fn rejects_bad_labels_and_shapes() {
        let x = DMatrix::zeros(2, 2);
        assert!(Dataset::new(x.clone(), vec![1, 0], None, "d").is_err());
        assert!(Dataset::new(x.clone(), vec![1], None, "d").is_err());
        let layout = Layout {
            channels: 3,
            timepoints: 1,
        };
        assert!(Dataset::new(x, vec![1, -1], Some(layout), "d").is_err());
    }

    #[test]
    fn preprocessing_modes() {
        let d = Dataset::from_rows(
            &[vec![1.0, 10.0], vec![3.0, 30.0], vec![5.0, 20.0]],
            vec![1, -1, 1],
            None,
            "d",
        )
        .unwrap();
        let (same, t) = Preprocessing::None.fit(&d).unwrap();
        assert!(t.is_none());
        assert_eq!(same.x(), d.x());

        let (c, _) = Preprocessing::Center.fit(&d).unwrap();
        for j in 0..2 {
            let (m, _) = column_stats(c.x(), j);
            assert_abs_diff_eq!(m, 0.0, epsilon = 1e-12);
        }
        // spread is kept in raw units
        assert_abs_diff_eq!(c.x()[(2, 0)] - c.x()[(0, 0)], 4.0, epsilon = 1e-12);
        let (cc, _) = Preprocessing::Center.fit(&c).unwrap();
        assert_eq!(cc.x(), c.x());

        let (s, t) = Preprocessing::Standardize.fit(&d).unwrap();
        assert!(t.is_some());
        let (_, sd) = column_stats(s.x(), 1);
        assert_abs_diff_eq!(sd, 1.0, epsilon = 1e-12);

        for m in [
            Preprocessing::None,
            Preprocessing::Center,
            Preprocessing::Standardize,
        ] {
            assert_eq!(m.to_string().parse::<Preprocessing>().unwrap(), m);
        }
        assert!("zscore".parse::<Preprocessing>().is_err());
        assert_eq!(Preprocessing::default(), Preprocessing::Standardize);
    }

    #[test]
    fn two_point_column() {
        let d = Dataset::from_rows(&[vec![1.0], vec![3.0]], vec![1, -1], None, "d").unwrap();
        let (s, t) = standardize(&d).unwrap();
        assert_eq!(t.mean, vec![2.0]);
        assert_eq!(t.std, vec![1.0]);
        assert_eq!(s.x().as_slice(), &[-1.0, 1.0]);
    }

    #[test]
    fn constant_column_is_centered_only() {
        let d = Dataset::from_rows(
            &[vec![5.0, 1.0], vec![5.0, 2.0], vec![5.0, 6.0]],
            vec![1, -1, 1],
            None,
            "d",
        )
        .unwrap();
        let (s, t) = standardize(&d).unwrap();
        assert_eq!(t.std[0], 0.0);
        assert_eq!(s.x().column(0).as_slice(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn single_trial_is_rejected() {
        let d = Dataset::from_rows(&[vec![1.0]], vec![1], None, "d").unwrap();
        assert!(standardize(&d).is_err());
    }

    #[test]
    fn select_rows_allows_repeats() {
        let d = Dataset::from_rows(&[vec![1.0], vec![2.0]], vec![1, -1], None, "d").unwrap();
        let s = d.select_rows(&[1, 1, 0]);
        assert_eq!(s.x().as_slice(), &[2.0, 2.0, 1.0]);
        assert_eq!(s.y(), &[-1, -1, 1]);
    }

    proptest! {
        #[test]
        fn standardized_columns_have_zero_mean_unit_std(
            rows in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 3), 2..30)
        ) {
            let y = (0..rows.len()).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect();
            let d = Dataset::from_rows(&rows, y, None, "p").unwrap();
            let (s, t) = standardize(&d).unwrap();
            for j in 0..3 {
                let (m, sd) = column_stats(s.x(), j);
                prop_assert!(m.abs() < 1e-10);
                if t.std[j] > 0.0 {
                    prop_assert!((sd - 1.0).abs() < 1e-10);
                }
            }
            // idempotence
            let (s2, _) = standardize(&s).unwrap();
            for (a, b) in s.x().iter().zip(s2.x().iter()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-10);
            }
        }
    }
}
