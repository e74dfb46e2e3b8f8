//! Correlation-matrix models with O(d) column access.
//!
//! Every model exposes `entry(i, j)` and `column(i)` for a symmetric matrix
//! `V` with unit diagonal. Kernel variants store only the d planar locations
//! and recompute entries on demand, so a model never costs more than O(d)
//! memory; this is what lets the chain in [`crate::chain`] run at dimensions
//! where the d x d matrix itself would not fit.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tolerance for symmetry / unit-diagonal checks.
pub const SYM_TOL: f64 = 1e-10;

/// Default cap on dimensions that [`validate`] will materialize.
pub const VALIDATE_CAP: usize = 2048;

/// A point in the plane.
pub type Location = [f64; 2];

fn distance(a: Location, b: Location) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Locations on the unit grid: point `i` is
/// `(floor(i / d') / d', (i mod d') / d')` with `d' = ceil(sqrt(d))`.
///
/// All coordinates lie in `[0, 1)`.
pub fn grid_locations(d: usize) -> Vec<Location> {
    assert!(d >= 1, "grid_locations requires d >= 1");
    let mut dp = (d as f64).sqrt().floor() as usize;
    while dp * dp < d {
        dp += 1;
    }
    let dpf = dp as f64;
    (0..d)
        .map(|i| [(i / dp) as f64 / dpf, (i % dp) as f64 / dpf])
        .collect()
}

/// Explicit symmetric matrix with unit diagonal, stored row-major.
#[derive(Debug, Clone)]
pub struct DenseCorrelation {
    dim: usize,
    values: Vec<f64>,
    symmetrized: bool,
}

impl DenseCorrelation {
    /// Builds from `d*d` row-major values.
    ///
    /// The diagonal must be 1 within `SYM_TOL` and entries must not exceed 1
    /// in absolute value (beyond the tolerance). Asymmetry within the
    /// tolerance is accepted as-is; larger asymmetry is repaired by
    /// `(V + V^T) / 2` and flagged via [`DenseCorrelation::was_symmetrized`].
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        if values.len() != dim * dim {
            return Err(Error::InvalidArgument(format!(
                "expected {} values for a {dim}x{dim} matrix, got {}",
                dim * dim,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("correlation matrix entry".into()));
        }
        for i in 0..dim {
            let vii = values[i * dim + i];
            if (vii - 1.0).abs() > SYM_TOL {
                return Err(Error::InvalidArgument(format!(
                    "diagonal entry [{i}][{i}] = {vii} is not 1"
                )));
            }
        }
        if let Some(v) = values.iter().find(|v| v.abs() > 1.0 + SYM_TOL) {
            return Err(Error::InvalidArgument(format!(
                "entry {v} outside [-1, 1]; not a correlation"
            )));
        }
        let mut asym: f64 = 0.0;
        for i in 0..dim {
            for j in 0..i {
                asym = asym.max((values[i * dim + j] - values[j * dim + i]).abs());
            }
        }
        let mut values = values;
        let symmetrized = asym > SYM_TOL;
        if symmetrized {
            for i in 0..dim {
                for j in 0..i {
                    let s = 0.5 * (values[i * dim + j] + values[j * dim + i]);
                    values[i * dim + j] = s;
                    values[j * dim + i] = s;
                }
            }
        }
        Ok(Self {
            dim,
            values,
            symmetrized,
        })
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidArgument("matrix is not square".into()));
        }
        let dim = m.nrows();
        let mut values = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                values.push(m[(i, j)]);
            }
        }
        Self::new(dim, values)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.dim + j]
    }

    /// True if the input was repaired by `(V + V^T) / 2` at construction.
    pub fn was_symmetrized(&self) -> bool {
        self.symmetrized
    }
}

/// Correlation `exp(-(|s_i - s_j| / range)^exponent)` over planar locations.
#[derive(Debug, Clone)]
pub struct PoweredExponentialKernel {
    locations: Vec<Location>,
    range: f64,
    exponent: f64,
}

impl PoweredExponentialKernel {
    pub fn new(locations: Vec<Location>, range: f64, exponent: f64) -> Result<Self> {
        if locations.is_empty() {
            return Err(Error::InvalidArgument("need at least one location".into()));
        }
        if !range.is_finite() || range <= 0.0 {
            return Err(Error::InvalidArgument(format!("range must be positive, got {range}")));
        }
        if !exponent.is_finite() || exponent <= 0.0 || exponent > 2.0 {
            return Err(Error::InvalidArgument(format!(
                "exponent must lie in (0, 2], got {exponent}"
            )));
        }
        if locations.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::NonFinite("kernel location".into()));
        }
        Ok(Self {
            locations,
            range,
            exponent,
        })
    }

    pub fn dim(&self) -> usize {
        self.locations.len()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 1.0;
        }
        let d = distance(self.locations[i], self.locations[j]);
        (-(d / self.range).powf(self.exponent)).exp()
    }
}

/// Correlation with off-diagonal `ratio * exp(-|s_i - s_j| / range)` and
/// unit diagonal, `ratio` in (0, 1).
///
/// Since the plain exponential kernel is positive semi-definite, the
/// smallest eigenvalue of this matrix is at least `1 - ratio`.
#[derive(Debug, Clone)]
pub struct ScaledExponentialKernel {
    locations: Vec<Location>,
    range: f64,
    ratio: f64,
}

impl ScaledExponentialKernel {
    pub fn new(locations: Vec<Location>, range: f64, ratio: f64) -> Result<Self> {
        if locations.is_empty() {
            return Err(Error::InvalidArgument("need at least one location".into()));
        }
        if !range.is_finite() || range <= 0.0 {
            return Err(Error::InvalidArgument(format!("range must be positive, got {range}")));
        }
        if !ratio.is_finite() || ratio <= 0.0 || ratio >= 1.0 {
            return Err(Error::InvalidArgument(format!(
                "ratio must lie in (0, 1), got {ratio}"
            )));
        }
        if locations.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::NonFinite("kernel location".into()));
        }
        Ok(Self {
            locations,
            range,
            ratio,
        })
    }

    pub fn dim(&self) -> usize {
        self.locations.len()
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 1.0;
        }
        let d = distance(self.locations[i], self.locations[j]);
        self.ratio * (-d / self.range).exp()
    }
}

/// A correlation matrix with O(d) column access.
#[derive(Debug, Clone)]
pub enum CovarianceModel {
    Dense(DenseCorrelation),
    PoweredExponential(PoweredExponentialKernel),
    ScaledExponential(ScaledExponentialKernel),
    Identity { dim: usize },
}

impl CovarianceModel {
    pub fn identity(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        CovarianceModel::Identity { dim }
    }

    pub fn dim(&self) -> usize {
        match self {
            CovarianceModel::Dense(m) => m.dim(),
            CovarianceModel::PoweredExponential(k) => k.dim(),
            CovarianceModel::ScaledExponential(k) => k.dim(),
            CovarianceModel::Identity { dim } => *dim,
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match self {
            CovarianceModel::Dense(m) => m.entry(i, j),
            CovarianceModel::PoweredExponential(k) => k.entry(i, j),
            CovarianceModel::ScaledExponential(k) => k.entry(i, j),
            CovarianceModel::Identity { .. } => {
                if i == j {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Writes column `i` of `V` into `out` in O(d) operations.
    pub fn column_into(&self, i: usize, out: &mut [f64]) -> Result<()> {
        let d = self.dim();
        if i >= d {
            return Err(Error::IndexOutOfRange { index: i, dim: d });
        }
        if out.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: out.len(),
            });
        }
        match self {
            CovarianceModel::Dense(m) => {
                // row i equals column i by symmetry; contiguous copy
                out.copy_from_slice(&m.values[i * d..(i + 1) * d]);
            }
            CovarianceModel::PoweredExponential(k) => {
                for (j, o) in out.iter_mut().enumerate() {
                    *o = k.entry(j, i);
                }
            }
            CovarianceModel::ScaledExponential(k) => {
                for (j, o) in out.iter_mut().enumerate() {
                    *o = k.entry(j, i);
                }
            }
            CovarianceModel::Identity { .. } => {
                out.fill(0.0);
                out[i] = 1.0;
            }
        }
        Ok(())
    }

    /// Column `i` of `V` as a fresh vector.
    pub fn column(&self, i: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.column_into(i, &mut out)?;
        Ok(out)
    }

    /// Materializes the full d x d matrix, refusing dimensions above `cap`.
    pub fn materialize(&self, cap: usize) -> Result<DMatrix<f64>> {
        let d = self.dim();
        if d > cap {
            return Err(Error::CapacityExceeded { dim: d, cap });
        }
        let mut m = DMatrix::zeros(d, d);
        let mut col = vec![0.0; d];
        for i in 0..d {
            self.column_into(i, &mut col)?;
            for j in 0..d {
                m[(j, i)] = col[j];
            }
        }
        Ok(m)
    }
}

/// Outcome of materialized validation of a model.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ValidationReport {
    pub symmetric: bool,
    pub unit_diagonal: bool,
    pub min_eigenvalue: f64,
}

/// Materializes the model (capped at [`VALIDATE_CAP`]) and checks symmetry,
/// unit diagonal, and the smallest eigenvalue via a symmetric
/// eigendecomposition.
pub fn validate(model: &CovarianceModel, tol: f64) -> Result<ValidationReport> {
    validate_with_cap(model, tol, VALIDATE_CAP)
}

pub fn validate_with_cap(model: &CovarianceModel, tol: f64, cap: usize) -> Result<ValidationReport> {
    let m = model.materialize(cap)?;
    let d = m.nrows();
    let mut symmetric = true;
    let mut unit_diagonal = true;
    for i in 0..d {
        if (m[(i, i)] - 1.0).abs() > tol {
            unit_diagonal = false;
        }
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > tol {
                symmetric = false;
            }
        }
    }
    let eigen = m.symmetric_eigen();
    let min_eigenvalue = eigen.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(ValidationReport {
        symmetric,
        unit_diagonal,
        min_eigenvalue,
    })
}

/// JSON-facing description of a model.
///
/// For kernel types either `locations` or `d` must be present; a bare `d`
/// places the points on the unit grid of [`grid_locations`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ModelDescriptor {
    Dense {
        d: usize,
        values: Vec<f64>,
    },
    Powexp {
        #[serde(skip_serializing_if = "Option::is_none")]
        d: Option<usize>,
        #[serde(skip_serializing_if = "Option::is_none")]
        locations: Option<Vec<Location>>,
        r: f64,
        theta: f64,
    },
    Scaledexp {
        #[serde(skip_serializing_if = "Option::is_none")]
        d: Option<usize>,
        #[serde(skip_serializing_if = "Option::is_none")]
        locations: Option<Vec<Location>>,
        r: f64,
        ratio: f64,
    },
    Identity {
        d: usize,
    },
}

impl ModelDescriptor {
    pub fn build(&self) -> Result<CovarianceModel> {
        match self {
            ModelDescriptor::Dense { d, values } => Ok(CovarianceModel::Dense(
                DenseCorrelation::new(*d, values.clone())?,
            )),
            ModelDescriptor::Powexp {
                d,
                locations,
                r,
                theta,
            } => {
                let locs = resolve_locations(*d, locations.as_deref())?;
                Ok(CovarianceModel::PoweredExponential(
                    PoweredExponentialKernel::new(locs, *r, *theta)?,
                ))
            }
            ModelDescriptor::Scaledexp {
                d,
                locations,
                r,
                ratio,
            } => {
                let locs = resolve_locations(*d, locations.as_deref())?;
                Ok(CovarianceModel::ScaledExponential(
                    ScaledExponentialKernel::new(locs, *r, *ratio)?,
                ))
            }
            ModelDescriptor::Identity { d } => {
                if *d == 0 {
                    return Err(Error::InvalidArgument("dimension must be positive".into()));
                }
                Ok(CovarianceModel::identity(*d))
            }
        }
    }
}

fn resolve_locations(d: Option<usize>, locations: Option<&[Location]>) -> Result<Vec<Location>> {
    match (locations, d) {
        (Some(locs), Some(d)) if locs.len() != d => Err(Error::InvalidArgument(format!(
            "descriptor lists {} locations but d = {d}",
            locs.len()
        ))),
        (Some(locs), _) => Ok(locs.to_vec()),
        (None, Some(0)) => Err(Error::InvalidArgument("dimension must be positive".into())),
        (None, Some(d)) => Ok(grid_locations(d)),
        (None, None) => Err(Error::InvalidArgument(
            "kernel descriptor needs locations or d".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn identity_column() {
        let model = CovarianceModel::identity(3);
        assert_eq!(model.column(1).unwrap(), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn dense_column_is_direct_read() {
        let model = CovarianceModel::Dense(
            DenseCorrelation::new(2, vec![1.0, 0.5, 0.5, 1.0]).unwrap(),
        );
        assert_eq!(model.column(1).unwrap(), vec![0.5, 1.0]);
    }

    #[test]
    fn column_index_out_of_range() {
        let model = CovarianceModel::identity(3);
        assert!(matches!(
            model.column(3),
            Err(Error::IndexOutOfRange { index: 3, dim: 3 })
        ));
    }

    #[test]
    fn grid_locations_d4() {
        let locs = grid_locations(4);
        assert_eq!(locs, vec![[0.0, 0.0], [0.0, 0.5], [0.5, 0.0], [0.5, 0.5]]);
    }

    #[test]
    fn grid_locations_d3() {
        let locs = grid_locations(3);
        assert_eq!(locs, vec![[0.0, 0.0], [0.0, 0.5], [0.5, 0.0]]);
    }

    #[test]
    fn grid_locations_d9_point5() {
        let locs = grid_locations(9);
        assert_relative_eq!(locs[5][0], 1.0 / 3.0);
        assert_relative_eq!(locs[5][1], 2.0 / 3.0);
        for p in locs {
            assert!(p[0] >= 0.0 && p[0] < 1.0);
            assert!(p[1] >= 0.0 && p[1] < 1.0);
        }
    }

    #[test]
    fn scaled_exponential_column_formula() {
        // ratio 7.44/8 = 0.93, range 10, unit grid with d = 4
        let locs = grid_locations(4);
        let kernel = ScaledExponentialKernel::new(locs.clone(), 10.0, 0.93).unwrap();
        let model = CovarianceModel::ScaledExponential(kernel);
        let col = model.column(0).unwrap();
        assert_eq!(col[0], 1.0);
        for j in 1..4 {
            let dist = (locs[0][0] - locs[j][0]).hypot(locs[0][1] - locs[j][1]);
            assert_relative_eq!(col[j], 0.93 * (-dist / 10.0).exp(), epsilon = 1e-15);
        }
    }

    #[test]
    fn validate_identity() {
        let report = validate(&CovarianceModel::identity(5), SYM_TOL).unwrap();
        assert!(report.symmetric);
        assert!(report.unit_diagonal);
        assert_relative_eq!(report.min_eigenvalue, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn validate_rank_one_correlation() {
        let model = CovarianceModel::Dense(
            DenseCorrelation::new(2, vec![1.0, 1.0, 1.0, 1.0]).unwrap(),
        );
        let report = validate(&model, SYM_TOL).unwrap();
        assert!(report.min_eigenvalue.abs() <= 1e-10);
    }

    #[test]
    fn validate_scaled_exponential_eigenvalue_floor() {
        let locs = grid_locations(25);
        let model = CovarianceModel::ScaledExponential(
            ScaledExponentialKernel::new(locs, 10.0, 0.93).unwrap(),
        );
        let report = validate(&model, SYM_TOL).unwrap();
        assert!(
            report.min_eigenvalue >= 0.07 - 1e-9,
            "min eigenvalue {} below 1 - ratio",
            report.min_eigenvalue
        );
    }

    #[test]
    fn validate_respects_cap() {
        let model = CovarianceModel::identity(100);
        assert!(matches!(
            validate_with_cap(&model, SYM_TOL, 64),
            Err(Error::CapacityExceeded { dim: 100, cap: 64 })
        ));
    }

    #[test]
    fn dense_rejects_bad_diagonal() {
        assert!(DenseCorrelation::new(2, vec![1.0, 0.0, 0.0, 0.9]).is_err());
    }

    #[test]
    fn dense_symmetrizes_noisy_input() {
        let m = DenseCorrelation::new(2, vec![1.0, 0.5, 0.5001, 1.0]).unwrap();
        assert!(m.was_symmetrized());
        assert_relative_eq!(m.entry(0, 1), 0.50005);
        assert_eq!(m.entry(0, 1), m.entry(1, 0));
        let clean = DenseCorrelation::new(2, vec![1.0, 0.5, 0.5, 1.0]).unwrap();
        assert!(!clean.was_symmetrized());
    }

    #[test]
    fn descriptor_round_trip_and_grid_default() {
        let json = r#"{"type":"scaledexp","d":16,"r":10.0,"ratio":0.93}"#;
        let desc: ModelDescriptor = serde_json::from_str(json).unwrap();
        let model = desc.build().unwrap();
        assert_eq!(model.dim(), 16);
        assert_eq!(model.entry(2, 2), 1.0);

        let json = r#"{"type":"identity","d":7}"#;
        let desc: ModelDescriptor = serde_json::from_str(json).unwrap();
        assert_eq!(desc.build().unwrap().dim(), 7);

        let json = r#"{"type":"dense","d":2,"values":[1.0,0.25,0.25,1.0]}"#;
        let desc: ModelDescriptor = serde_json::from_str(json).unwrap();
        let model = desc.build().unwrap();
        assert_eq!(model.entry(0, 1), 0.25);

        let round = serde_json::to_string(&desc).unwrap();
        let desc2: ModelDescriptor = serde_json::from_str(&round).unwrap();
        assert_eq!(desc2.build().unwrap().entry(0, 1), 0.25);
    }

    #[test]
    fn descriptor_rejects_mismatched_locations() {
        let json = r#"{"type":"powexp","d":3,"locations":[[0.0,0.0],[1.0,0.0]],"r":1.0,"theta":1.0}"#;
        let desc: ModelDescriptor = serde_json::from_str(json).unwrap();
        assert!(desc.build().is_err());
    }

    fn arb_model() -> impl Strategy<Value = CovarianceModel> {
        let identity = (1usize..12).prop_map(CovarianceModel::identity);
        let powexp = (1usize..12, 0.2f64..5.0, 0.2f64..2.0).prop_map(|(d, r, theta)| {
            CovarianceModel::PoweredExponential(
                PoweredExponentialKernel::new(grid_locations(d), r, theta).unwrap(),
            )
        });
        let scaledexp = (1usize..12, 0.2f64..5.0, 0.05f64..0.95).prop_map(|(d, r, ratio)| {
            CovarianceModel::ScaledExponential(
                ScaledExponentialKernel::new(grid_locations(d), r, ratio).unwrap(),
            )
        });
        prop_oneof![identity, powexp, scaledexp]
    }

    proptest! {
        #[test]
        fn columns_match_materialized_matrix(model in arb_model()) {
            let d = model.dim();
            let m = model.materialize(64).unwrap();
            for i in 0..d {
                let col = model.column(i).unwrap();
                for j in 0..d {
                    prop_assert!((col[j] - m[(j, i)]).abs() <= 1e-12);
                    prop_assert!((col[j] - model.entry(j, i)).abs() == 0.0);
                }
            }
        }

        #[test]
        fn powexp_entries_decrease_with_distance(
            r in 0.5f64..5.0,
            theta in 0.2f64..2.0,
            d1 in 0.01f64..5.0,
            d2 in 0.01f64..5.0,
        ) {
            // three collinear points at distances d1 and d1 + d2 from the origin
            let kernel = PoweredExponentialKernel::new(
                vec![[0.0, 0.0], [d1, 0.0], [d1 + d2, 0.0]],
                r,
                theta,
            ).unwrap();
            let near = kernel.entry(0, 1);
            let far = kernel.entry(0, 2);
            prop_assert!(near > 0.0 && near <= 1.0);
            prop_assert!(far > 0.0 && far <= 1.0);
            prop_assert!(far < near);
        }

        #[test]
        fn dense_exact_column_equality(d in 1usize..10, seed in 0u64..1000) {
            // random PD correlation via G G^T normalization
            let mut stream = crate::rng::RngStream::new(seed, 0);
            let k = d + 3;
            let g = DMatrix::from_fn(d, k, |_, _| stream.next_gaussian());
            let s = &g * g.transpose() + DMatrix::identity(d, d) * 0.5;
            let mut v = s.clone();
            for i in 0..d {
                for j in 0..d {
                    v[(i, j)] = s[(i, j)] / (s[(i, i)] * s[(j, j)]).sqrt();
                }
            }
            for i in 0..d { v[(i, i)] = 1.0; }
            let dense = DenseCorrelation::from_matrix(&v).unwrap();
            let model = CovarianceModel::Dense(dense);
            for i in 0..d {
                let col = model.column(i).unwrap();
                for j in 0..d {
                    // bitwise equality for the dense variant
                    prop_assert_eq!(col[j].to_bits(), v[(j, i)].to_bits());
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]
        #[test]
        fn scaled_exponential_floor_on_random_grids(
            d in 2usize..40,
            ratio in 0.1f64..0.95,
            r in 0.5f64..20.0,
            seed in 0u64..1000,
        ) {
            // random subset of a larger grid
            let base = grid_locations(200);
            let mut stream = crate::rng::RngStream::new(seed, 1);
            let mut locs = Vec::with_capacity(d);
            for _ in 0..d {
                locs.push(base[stream.next_index(base.len())]);
            }
            let model = CovarianceModel::ScaledExponential(
                ScaledExponentialKernel::new(locs, r, ratio).unwrap(),
            );
            let report = validate(&model, SYM_TOL).unwrap();
            prop_assert!(report.min_eigenvalue >= 1.0 - ratio - 1e-9);
        }
    }
}
