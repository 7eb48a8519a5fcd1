//! The bidimensionally linked data container `(X, N, Y, Z)` and the
//! factorization of its natural parameters.
//!
//! `X` (m1×n1) shares its columns with `Y` (m2×n1) and its rows with
//! `Z` (m1×n2). The fitted model is
//!
//! ```text
//! Θ_X = U Vᵀ,   Θ_Y = U_y Vᵀ,   Θ_Z = U V_zᵀ
//! ```

use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GlmfError, Result};
use crate::expfam::{DistributionSpec, Family};
use crate::linalg::{hstack, vstack};

/// Row and column labels of the three blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Labels {
    /// Rows of X and Z (batters).
    pub rows: Vec<String>,
    /// Columns of X and Y (pitchers).
    pub cols: Vec<String>,
    /// Rows of Y (pitching statistics).
    pub y_rows: Vec<String>,
    /// Columns of Z (batting statistics).
    pub z_cols: Vec<String>,
}

impl Labels {
    pub fn numbered(m1: usize, n1: usize, m2: usize, n2: usize) -> Self {
        let gen = |prefix: &str, n: usize| (0..n).map(|i| format!("{prefix}{i}")).collect();
        Self {
            rows: gen("r", m1),
            cols: gen("c", n1),
            y_rows: gen("y", m2),
            z_cols: gen("z", n2),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkedDataset {
    x: DMatrix<f64>,
    trials: DMatrix<f64>,
    y: DMatrix<f64>,
    z: DMatrix<f64>,
    mask: DMatrix<bool>,
    spec_x: DistributionSpec,
    spec_y: DistributionSpec,
    spec_z: DistributionSpec,
    labels: Labels,
}

impl LinkedDataset {
    /// Binomial `X` with trials `N`, normal `Y` and `Z` with estimated variances.
    /// Masked-out cells of `X` and `N` are stored as zero.
    pub fn new(
        x: DMatrix<f64>,
        trials: DMatrix<f64>,
        y: DMatrix<f64>,
        z: DMatrix<f64>,
        mask: DMatrix<bool>,
    ) -> Result<Self> {
        let labels = Labels::numbered(x.nrows(), x.ncols(), y.nrows(), z.ncols());
        Self::with_specs(
            x,
            trials,
            y,
            z,
            mask,
            DistributionSpec::binomial(),
            DistributionSpec::normal_estimated(),
            DistributionSpec::normal_estimated(),
            labels,
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_specs(
        mut x: DMatrix<f64>,
        mut trials: DMatrix<f64>,
        y: DMatrix<f64>,
        z: DMatrix<f64>,
        mask: DMatrix<bool>,
        spec_x: DistributionSpec,
        spec_y: DistributionSpec,
        spec_z: DistributionSpec,
        labels: Labels,
    ) -> Result<Self> {
        let (m1, n1) = x.shape();
        let dim = |what: &str, got: (usize, usize), want: String| {
            GlmfError::Dimension(format!("{what} is {}x{}, expected {want}", got.0, got.1))
        };
        if trials.shape() != (m1, n1) {
            return Err(dim("N", trials.shape(), format!("{m1}x{n1}")));
        }
        if mask.shape() != (m1, n1) {
            return Err(dim("mask", mask.shape(), format!("{m1}x{n1}")));
        }
        if y.ncols() != n1 {
            return Err(dim("Y", y.shape(), format!("?x{n1}")));
        }
        if z.nrows() != m1 {
            return Err(dim("Z", z.shape(), format!("{m1}x?")));
        }
        if labels.rows.len() != m1
            || labels.cols.len() != n1
            || labels.y_rows.len() != y.nrows()
            || labels.z_cols.len() != z.ncols()
        {
            return Err(GlmfError::Dimension("label counts do not match blocks".into()));
        }
        for spec in [&spec_x, &spec_y, &spec_z] {
            spec.validate()?;
        }
        if y.iter().chain(z.iter()).any(|v| !v.is_finite()) {
            return Err(GlmfError::InvalidData(
                "Y and Z must be complete and finite".into(),
            ));
        }
        for j in 0..n1 {
            for i in 0..m1 {
                if !mask[(i, j)] {
                    x[(i, j)] = 0.0;
                    trials[(i, j)] = 0.0;
                    continue;
                }
                let (xv, nv) = (x[(i, j)], trials[(i, j)]);
                if !xv.is_finite() {
                    return Err(GlmfError::InvalidData(format!("X[{i},{j}] is not finite")));
                }
                if spec_x.family == Family::Binomial {
                    if !(nv > 0.0) || !nv.is_finite() {
                        return Err(GlmfError::InvalidData(format!(
                            "observed cell ({i},{j}) has trials {nv}"
                        )));
                    }
                    if xv < 0.0 || xv > nv {
                        return Err(GlmfError::InvalidData(format!(
                            "X[{i},{j}] = {xv} outside [0, {nv}]"
                        )));
                    }
                }
            }
        }
        Ok(Self {
            x,
            trials,
            y,
            z,
            mask,
            spec_x,
            spec_y,
            spec_z,
            labels,
        })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }
    pub fn trials(&self) -> &DMatrix<f64> {
        &self.trials
    }
    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }
    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }
    pub fn mask(&self) -> &DMatrix<bool> {
        &self.mask
    }
    pub fn spec_x(&self) -> DistributionSpec {
        self.spec_x
    }
    pub fn spec_y(&self) -> DistributionSpec {
        self.spec_y
    }
    pub fn spec_z(&self) -> DistributionSpec {
        self.spec_z
    }
    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    /// `(m1, n1, m2, n2)`.
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.x.nrows(), self.x.ncols(), self.y.nrows(), self.z.ncols())
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    /// Observed cells as `(row, col)` in column-major order.
    pub fn observed_cells(&self) -> Vec<(usize, usize)> {
        let (m1, n1) = self.x.shape();
        let mut out = Vec::with_capacity(self.observed_count());
        for j in 0..n1 {
            for i in 0..m1 {
                if self.mask[(i, j)] {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Copy of this dataset with a different missingness mask. Cells newly
    /// hidden are zeroed; cells cannot be revealed.
    pub fn with_mask(&self, mask: DMatrix<bool>) -> Result<Self> {
        if mask.shape() != self.mask.shape() {
            return Err(GlmfError::Dimension("mask shape".into()));
        }
        if mask.iter().zip(self.mask.iter()).any(|(&n, &o)| n && !o) {
            return Err(GlmfError::InvalidData(
                "cannot reveal cells that were never observed".into(),
            ));
        }
        Self::with_specs(
            self.x.clone(),
            self.trials.clone(),
            self.y.clone(),
            self.z.clone(),
            mask,
            self.spec_x,
            self.spec_y,
            self.spec_z,
            self.labels.clone(),
        )
    }

    /// Copy with the X block, trials and spec replaced, every cell observed.
    /// Used by the imputation loop to present filled data to a fitter.
    pub fn filled(&self, x: DMatrix<f64>, trials: DMatrix<f64>, spec_x: DistributionSpec) -> Result<Self> {
        let mask = DMatrix::from_element(x.nrows(), x.ncols(), true);
        Self::with_specs(
            x,
            trials,
            self.y.clone(),
            self.z.clone(),
            mask,
            spec_x,
            self.spec_y,
            self.spec_z,
            self.labels.clone(),
        )
    }

    pub fn with_side_specs(mut self, spec_y: DistributionSpec, spec_z: DistributionSpec) -> Result<Self> {
        spec_y.validate()?;
        spec_z.validate()?;
        self.spec_y = spec_y;
        self.spec_z = spec_z;
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Labels) -> Result<Self> {
        let (m1, n1, m2, n2) = self.dims();
        if labels.rows.len() != m1
            || labels.cols.len() != n1
            || labels.y_rows.len() != m2
            || labels.z_cols.len() != n2
        {
            return Err(GlmfError::Dimension("label counts do not match blocks".into()));
        }
        self.labels = labels;
        Ok(self)
    }
}

/// One contiguous block of a stacked view.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewBlock {
    pub range: Range<usize>,
    pub spec: DistributionSpec,
}

/// Which axis the blocks of a stacked view partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockAxis {
    Rows,
    Cols,
}

/// A stacked matrix with per-block distributions. `data` holds raw values
/// (counts for binomial blocks) and `trials` the per-cell trial counts
/// (1 outside binomial blocks).
#[derive(Debug, Clone, PartialEq)]
pub struct StackedView {
    pub data: DMatrix<f64>,
    pub trials: DMatrix<f64>,
    pub blocks: Vec<ViewBlock>,
    pub axis: BlockAxis,
}

impl StackedView {
    pub fn transposed(&self) -> Self {
        Self {
            data: self.data.transpose(),
            trials: self.trials.transpose(),
            blocks: self.blocks.clone(),
            axis: match self.axis {
                BlockAxis::Rows => BlockAxis::Cols,
                BlockAxis::Cols => BlockAxis::Rows,
            },
        }
    }
}

fn x_trials(dataset: &LinkedDataset) -> DMatrix<f64> {
    match dataset.spec_x.family {
        Family::Binomial => dataset.trials.clone(),
        _ => DMatrix::from_element(dataset.x.nrows(), dataset.x.ncols(), 1.0),
    }
}

/// `[X; Y]`, (m1+m2)×n1, blocks along rows.
pub fn augment_rows(dataset: &LinkedDataset) -> StackedView {
    let (m1, _, m2, _) = dataset.dims();
    let ones = DMatrix::from_element(m2, dataset.y.ncols(), 1.0);
    StackedView {
        data: vstack(&dataset.x, &dataset.y),
        trials: vstack(&x_trials(dataset), &ones),
        blocks: vec![
            ViewBlock {
                range: 0..m1,
                spec: dataset.spec_x,
            },
            ViewBlock {
                range: m1..m1 + m2,
                spec: dataset.spec_y,
            },
        ],
        axis: BlockAxis::Rows,
    }
}

/// `[X Z]`, m1×(n1+n2), blocks along columns.
pub fn augment_cols(dataset: &LinkedDataset) -> StackedView {
    let (_, n1, _, n2) = dataset.dims();
    let ones = DMatrix::from_element(dataset.z.nrows(), n2, 1.0);
    StackedView {
        data: hstack(&dataset.x, &dataset.z),
        trials: hstack(&x_trials(dataset), &ones),
        blocks: vec![
            ViewBlock {
                range: 0..n1,
                spec: dataset.spec_x,
            },
            ViewBlock {
                range: n1..n1 + n2,
                spec: dataset.spec_z,
            },
        ],
        axis: BlockAxis::Cols,
    }
}

/// Serde form of a matrix: `{"rows", "cols", "data"}` with `data` in
/// row-major order.
pub mod row_major {
    use nalgebra::DMatrix;
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Dense {
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    }

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        Dense {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.transpose().as_slice().to_vec(),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let dense = Dense::deserialize(d)?;
        if dense.data.len() != dense.rows * dense.cols {
            return Err(D::Error::custom(format!(
                "{}x{} matrix with {} entries",
                dense.rows,
                dense.cols,
                dense.data.len()
            )));
        }
        Ok(DMatrix::from_row_slice(dense.rows, dense.cols, &dense.data))
    }
}

/// Fitted joint factorization with its diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factorization {
    #[serde(with = "row_major")]
    pub u: DMatrix<f64>,
    #[serde(with = "row_major")]
    pub v: DMatrix<f64>,
    #[serde(with = "row_major")]
    pub u_y: DMatrix<f64>,
    #[serde(with = "row_major")]
    pub v_z: DMatrix<f64>,
    pub rank: usize,
    pub family_x: Family,
    pub family_y: Family,
    pub family_z: Family,
    /// Normal dispersion of X when X is modelled as normal, otherwise 1.
    pub sigma2_x: f64,
    pub sigma2_y: f64,
    pub sigma2_z: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Relative change of the fitted means after each cycle past the first.
    pub mu_trace: Vec<f64>,
    /// Weighted solves that needed the ridge fallback.
    pub ridge_events: usize,
    /// Inner IRLS solves that hit their iteration cap.
    pub inner_nonconverged: usize,
}

/// Natural-parameter and mean-scale reconstructions of the three blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub theta_x: DMatrix<f64>,
    pub theta_y: DMatrix<f64>,
    pub theta_z: DMatrix<f64>,
    pub mean_x: DMatrix<f64>,
    pub mean_y: DMatrix<f64>,
    pub mean_z: DMatrix<f64>,
}

impl Factorization {
    /// Dimensions `(m1, n1, m2, n2)` implied by the components.
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.u.nrows(), self.v.nrows(), self.u_y.nrows(), self.v_z.nrows())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: Self = serde_json::from_str(text)?;
        let r = f.rank;
        if [&f.u, &f.v, &f.u_y, &f.v_z].iter().any(|m| m.ncols() != r) {
            return Err(GlmfError::Dimension(format!("factor matrices must have {r} columns")));
        }
        Ok(f)
    }

    pub fn theta_x(&self) -> DMatrix<f64> {
        &self.u * self.v.transpose()
    }
    pub fn theta_y(&self) -> DMatrix<f64> {
        &self.u_y * self.v.transpose()
    }
    pub fn theta_z(&self) -> DMatrix<f64> {
        &self.u * self.v_z.transpose()
    }

    /// `Ṽ = [V; V_z]`.
    pub fn stacked_scores(&self) -> DMatrix<f64> {
        vstack(&self.v, &self.v_z)
    }

    /// `Ũ = [U; U_y]`.
    pub fn stacked_loadings(&self) -> DMatrix<f64> {
        vstack(&self.u, &self.u_y)
    }

    pub fn reconstruct(&self) -> Reconstruction {
        let theta_x = self.theta_x();
        let theta_y = self.theta_y();
        let theta_z = self.theta_z();
        let fx = self.family_x;
        let fy = self.family_y;
        let fz = self.family_z;
        Reconstruction {
            mean_x: theta_x.map(|t| fx.inverse_link(t)),
            mean_y: theta_y.map(|t| fy.inverse_link(t)),
            mean_z: theta_z.map(|t| fz.inverse_link(t)),
            theta_x,
            theta_y,
            theta_z,
        }
    }
}

/// Free-function form of [`Factorization::reconstruct`].
pub fn reconstruct(factorization: &Factorization) -> Reconstruction {
    factorization.reconstruct()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(m1: usize, n1: usize, m2: usize, n2: usize) -> LinkedDataset {
        let x = DMatrix::from_fn(m1, n1, |i, j| ((i + j) % 3) as f64);
        let n = DMatrix::from_element(m1, n1, 3.0);
        let y = DMatrix::from_fn(m2, n1, |i, j| i as f64 - j as f64 * 0.5);
        let z = DMatrix::from_fn(m1, n2, |i, j| (i * j) as f64 * 0.1);
        let mask = DMatrix::from_element(m1, n1, true);
        LinkedDataset::new(x, n, y, z, mask).unwrap()
    }

    #[test]
    fn factorization_json_round_trip() {
        let f = Factorization {
            u: DMatrix::from_row_slice(2, 1, &[0.1, -1.0 / 3.0]),
            v: DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]),
            u_y: DMatrix::from_row_slice(1, 1, &[std::f64::consts::PI]),
            v_z: DMatrix::from_row_slice(2, 1, &[1e-300, 5.0]),
            rank: 1,
            family_x: Family::Binomial,
            family_y: Family::Normal,
            family_z: Family::Normal,
            sigma2_x: 1.0,
            sigma2_y: 0.3,
            sigma2_z: 0.7,
            converged: true,
            iterations: 4,
            mu_trace: vec![0.1, 1e-7],
            ridge_events: 0,
            inner_nonconverged: 0,
        };
        let text = f.to_json().unwrap();
        assert!(text.contains("\"data\""));
        assert_eq!(Factorization::from_json(&text).unwrap(), f);
        let wide = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let g = Factorization { u: wide, ..f };
        let text = serde_json::to_string(&g).unwrap();
        assert!(text.contains("[1.0,2.0,3.0,4.0]"));
        assert!(Factorization::from_json(&text).is_err());
    }

    #[test]
    fn augmented_shapes() {
        let d = toy(2, 4, 3, 3);
        let rows = augment_rows(&d);
        assert_eq!(rows.data.shape(), (5, 4));
        assert_eq!(rows.blocks[0].range, 0..2);
        assert_eq!(rows.blocks[1].range, 2..5);
        assert_eq!(rows.blocks[0].spec.family, Family::Binomial);
        let cols = augment_cols(&d);
        assert_eq!(cols.data.shape(), (2, 7));
        assert_eq!(cols.blocks[1].range, 4..7);
    }

    #[test]
    fn augmented_blocks_extract_exactly() {
        let d = toy(4, 5, 2, 3);
        let rows = augment_rows(&d);
        assert_eq!(rows.data.rows(0, 4).into_owned(), d.x().clone());
        assert_eq!(rows.data.rows(4, 2).into_owned(), d.y().clone());
        let cols = augment_cols(&d);
        assert_eq!(cols.data.columns(0, 5).into_owned(), d.x().clone());
        assert_eq!(cols.data.columns(5, 3).into_owned(), d.z().clone());
    }

    #[test]
    fn all_normal_view_is_homogeneous() {
        let d = toy(3, 3, 2, 2);
        let d = d
            .filled(d.x().clone(), d.trials().clone(), DistributionSpec::normal(1.0))
            .unwrap();
        let v = augment_rows(&d);
        assert!(v.blocks.iter().all(|b| b.spec.family == Family::Normal));
        assert!(v.trials.iter().all(|&t| t == 1.0));
    }

    #[test]
    fn construction_rejects_bad_data() {
        let x = DMatrix::from_element(2, 2, 3.0);
        let n = DMatrix::from_element(2, 2, 2.0);
        let y = DMatrix::zeros(1, 2);
        let z = DMatrix::zeros(2, 1);
        let mask = DMatrix::from_element(2, 2, true);
        assert!(LinkedDataset::new(x.clone(), n.clone(), y.clone(), z.clone(), mask.clone()).is_err());
        let bad_y = DMatrix::zeros(1, 3);
        assert!(LinkedDataset::new(n.clone(), n.clone(), bad_y, z.clone(), mask.clone()).is_err());
        let mut nan_z = z.clone();
        nan_z[(0, 0)] = f64::NAN;
        assert!(LinkedDataset::new(n.clone(), n.clone(), y, nan_z, mask).is_err());
    }

    #[test]
    fn masked_cells_are_zeroed() {
        let x = DMatrix::from_element(2, 2, 1.0);
        let n = DMatrix::from_element(2, 2, 2.0);
        let mut mask = DMatrix::from_element(2, 2, true);
        mask[(1, 0)] = false;
        let d = LinkedDataset::new(x, n, DMatrix::zeros(1, 2), DMatrix::zeros(2, 1), mask).unwrap();
        assert_eq!(d.x()[(1, 0)], 0.0);
        assert_eq!(d.trials()[(1, 0)], 0.0);
        assert_eq!(d.observed_count(), 3);
    }

    fn fact(u: DMatrix<f64>, v: DMatrix<f64>) -> Factorization {
        let r = u.ncols();
        Factorization {
            u_y: DMatrix::from_element(2, r, 0.3),
            v_z: DMatrix::from_element(2, r, -0.2),
            u,
            v,
            rank: r,
            family_x: Family::Binomial,
            family_y: Family::Normal,
            family_z: Family::Normal,
            sigma2_x: 1.0,
            sigma2_y: 1.0,
            sigma2_z: 1.0,
            converged: true,
            iterations: 1,
            mu_trace: vec![],
            ridge_events: 0,
            inner_nonconverged: 0,
        }
    }

    #[test]
    fn zero_loadings_give_half() {
        let f = fact(DMatrix::zeros(3, 2), DMatrix::from_element(4, 2, 1.7));
        let rec = f.reconstruct();
        assert!(rec.mean_x.iter().all(|&p| p == 0.5));
    }

    #[test]
    fn rank_one_outer_product() {
        let u = DMatrix::from_column_slice(3, 1, &[1.0, -2.0, 0.5]);
        let v = DMatrix::from_column_slice(2, 1, &[0.4, 3.0]);
        let rec = fact(u.clone(), v.clone()).reconstruct();
        for i in 0..3 {
            for j in 0..2 {
                assert_eq!(rec.theta_x[(i, j)], u[(i, 0)] * v[(j, 0)]);
            }
        }
        assert_eq!(rec.mean_y, rec.theta_y);
        assert!(rec.mean_x.iter().all(|&p| p > 0.0 && p < 1.0));
        assert_eq!(rec, reconstruct(&fact(u, v)));
    }
}
