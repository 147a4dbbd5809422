use super::{softmin_unchecked, AlignmentError, BaseDistance, Result};
use crate::encoder::FeatureMap;

/// Dense `rows x cols` matrix of nonnegative frame distances.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(AlignmentError::EmptyMatrix);
        }
        if values.len() != rows * cols {
            return Err(AlignmentError::DimensionMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                values.len()
            )));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(AlignmentError::InvalidDistance);
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let values = (0..rows * cols).map(|i| f(i / cols, i % cols)).collect();
        Self::new(rows, cols, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, t: usize, tp: usize) -> f64 {
        self.values[t * self.cols + tp]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Base distances of shape `K x K' x tau x tau'`, stored row-major in that
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceTensor {
    shape: [usize; 4],
    values: Vec<f64>,
}

impl DistanceTensor {
    pub fn new(shape: [usize; 4], values: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(AlignmentError::EmptyMatrix);
        }
        if values.len() != shape.iter().product::<usize>() {
            return Err(AlignmentError::DimensionMismatch(format!(
                "{} values for shape {shape:?}",
                values.len()
            )));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(AlignmentError::InvalidDistance);
        }
        Ok(Self { shape, values })
    }

    pub fn from_fn(
        shape: [usize; 4],
        f: impl Fn(usize, usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let [_, kp, tau, taup] = shape;
        let n: usize = shape.iter().product();
        let values = (0..n)
            .map(|i| {
                let tp = i % taup;
                let t = (i / taup) % tau;
                let b = (i / (taup * tau)) % kp;
                let a = i / (taup * tau * kp);
                f(a, b, t, tp)
            })
            .collect();
        Self::new(shape, values)
    }

    /// Unchecked constructor for gradient tensors, which may be zero but
    /// never fail validation by construction.
    pub(crate) fn from_raw(shape: [usize; 4], values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), shape.iter().product::<usize>());
        Self { shape, values }
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    #[inline]
    pub fn index(&self, k: usize, kp: usize, t: usize, tp: usize) -> usize {
        let [_, nkp, tau, taup] = self.shape;
        ((k * nkp + kp) * tau + t) * taup + tp
    }

    #[inline]
    pub fn get(&self, k: usize, kp: usize, t: usize, tp: usize) -> f64 {
        self.values[self.index(k, kp, t, tp)]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Copy with one entry replaced; used by finite-difference checks.
    pub fn with_value(&self, flat: usize, value: f64) -> Result<Self> {
        let mut values = self.values.clone();
        values[flat] = value;
        Self::new(self.shape, values)
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.shape, self.values.iter().map(|v| v * c).collect())
    }

    /// The `tau x tau'` matrix of a single view.
    pub fn view(&self, k: usize, kp: usize) -> CostMatrix {
        let [_, _, tau, taup] = self.shape;
        let start = self.index(k, kp, 0, 0);
        CostMatrix {
            rows: tau,
            cols: taup,
            values: self.values[start..start + tau * taup].to_vec(),
        }
    }
}

/// Distances between every query view and every support view, shape
/// `(K*K') x (Ks*Ks') x tau x tau'`, used by free-viewpoint matching.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewPairTensor {
    query_grid: (usize, usize),
    support_views: usize,
    tau: usize,
    tau_prime: usize,
    values: Vec<f64>,
}

impl ViewPairTensor {
    #[inline]
    fn index(&self, qv: usize, sv: usize, t: usize, tp: usize) -> usize {
        ((qv * self.support_views + sv) * self.tau + t) * self.tau_prime + tp
    }

    pub fn query_views(&self) -> usize {
        self.query_grid.0 * self.query_grid.1
    }

    pub fn support_views(&self) -> usize {
        self.support_views
    }

    /// Soft-min over all view pairs for each `(t, t')`.
    pub(crate) fn collapse(&self, gamma: f64) -> CostMatrix {
        let pairs = self.query_views() * self.support_views;
        let mut buf = Vec::with_capacity(pairs);
        let mut values = Vec::with_capacity(self.tau * self.tau_prime);
        for t in 0..self.tau {
            for tp in 0..self.tau_prime {
                buf.clear();
                for qv in 0..self.query_views() {
                    for sv in 0..self.support_views {
                        buf.push(self.values[self.index(qv, sv, t, tp)]);
                    }
                }
                values.push(softmin_unchecked(&buf, gamma));
            }
        }
        CostMatrix {
            rows: self.tau,
            cols: self.tau_prime,
            values,
        }
    }

    /// Query view `(k, k')` of the cheapest pair at `(t, t')`; lowest index
    /// wins ties.
    pub(crate) fn best_query_view(&self, t: usize, tp: usize) -> (usize, usize) {
        let mut best = (f64::INFINITY, 0);
        for qv in 0..self.query_views() {
            for sv in 0..self.support_views {
                let v = self.values[self.index(qv, sv, t, tp)];
                if v < best.0 {
                    best = (v, qv);
                }
            }
        }
        (best.1 / self.query_grid.1, best.1 % self.query_grid.1)
    }
}

impl From<&DistanceTensor> for ViewPairTensor {
    fn from(d: &DistanceTensor) -> Self {
        let [k, kp, tau, tau_prime] = d.shape;
        Self {
            query_grid: (k, kp),
            support_views: 1,
            tau,
            tau_prime,
            values: d.values.clone(),
        }
    }
}

pub fn base_distance(x: &[f64], y: &[f64], base: BaseDistance) -> Result<f64> {
    if x.len() != y.len() {
        return Err(AlignmentError::DimensionMismatch(format!(
            "feature lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if let BaseDistance::Rbf { sigma } = base {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(AlignmentError::InvalidSigma(sigma));
        }
    }
    Ok(base_distance_unchecked(x, y, base))
}

#[inline]
fn base_distance_unchecked(x: &[f64], y: &[f64], base: BaseDistance) -> f64 {
    let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    match base {
        BaseDistance::Euclidean => sq.sqrt(),
        BaseDistance::Rbf { sigma } => {
            let k = (-sq / (2.0 * sigma * sigma)).exp();
            (2.0 - 2.0 * k).max(0.0).sqrt()
        }
    }
}

/// Entry `(k, k', t, t')` is the base distance between query column
/// `(k, k', t)` and support block `t'`. A view-expanded support contributes
/// its center view.
pub fn distance_tensor(
    query: &FeatureMap,
    support: &FeatureMap,
    base: BaseDistance,
) -> Result<DistanceTensor> {
    if query.dim() != support.dim() {
        return Err(AlignmentError::DimensionMismatch(format!(
            "feature dims {} and {}",
            query.dim(),
            support.dim()
        )));
    }
    // validates sigma
    base_distance(&[], &[], base)?;
    let (sk, skp) = support.center();
    let shape = [query.k(), query.k_prime(), query.tau(), support.tau()];
    DistanceTensor::from_fn(shape, |k, kp, t, tp| {
        base_distance_unchecked(query.column(k, kp, t), support.column(sk, skp, tp), base)
    })
}

/// Distances between every query view and every support view.
pub fn view_pair_tensor(
    query: &FeatureMap,
    support: &FeatureMap,
    base: BaseDistance,
) -> Result<ViewPairTensor> {
    if query.dim() != support.dim() {
        return Err(AlignmentError::DimensionMismatch(format!(
            "feature dims {} and {}",
            query.dim(),
            support.dim()
        )));
    }
    base_distance(&[], &[], base)?;
    let qviews: Vec<(usize, usize)> = grid_cells(query.k(), query.k_prime());
    let sviews: Vec<(usize, usize)> = grid_cells(support.k(), support.k_prime());
    let (tau, tau_prime) = (query.tau(), support.tau());
    let mut values = Vec::with_capacity(qviews.len() * sviews.len() * tau * tau_prime);
    for &(qk, qkp) in &qviews {
        for &(sk, skp) in &sviews {
            for t in 0..tau {
                for tp in 0..tau_prime {
                    values.push(base_distance_unchecked(
                        query.column(qk, qkp, t),
                        support.column(sk, skp, tp),
                        base,
                    ));
                }
            }
        }
    }
    Ok(ViewPairTensor {
        query_grid: (query.k(), query.k_prime()),
        support_views: sviews.len(),
        tau,
        tau_prime,
        values,
    })
}

fn grid_cells(k: usize, kp: usize) -> Vec<(usize, usize)> {
    (0..k).flat_map(|a| (0..kp).map(move |b| (a, b))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn base_distance_examples() {
        let rbf = BaseDistance::Rbf { sigma: 2.0 };
        assert_eq!(
            base_distance(&[1.0, 2.0], &[1.0, 2.0], BaseDistance::Euclidean).unwrap(),
            0.0
        );
        assert_eq!(base_distance(&[1.0, 2.0], &[1.0, 2.0], rbf).unwrap(), 0.0);
        assert_eq!(
            base_distance(&[3.0, 0.0], &[0.0, 4.0], BaseDistance::Euclidean).unwrap(),
            5.0
        );
        assert_abs_diff_eq!(
            base_distance(&[1e3, 0.0], &[-1e3, 0.0], rbf).unwrap(),
            std::f64::consts::SQRT_2,
            epsilon = 1e-15
        );
        assert!(matches!(
            base_distance(&[1.0], &[1.0, 2.0], rbf),
            Err(AlignmentError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn rbf_matches_closed_form() {
        let d = base_distance(&[1.0, 1.0], &[0.0, 0.0], BaseDistance::Rbf { sigma: 2.0 }).unwrap();
        let expected = (2.0 - 2.0 * (-2.0f64 / 8.0).exp()).sqrt();
        assert_abs_diff_eq!(d, expected, epsilon = 1e-15);
    }

    #[test]
    fn identical_single_maps_give_zero() {
        let q = FeatureMap::support(vec![vec![0.5, -0.25, 1.0]]).unwrap();
        let d = distance_tensor(&q, &q, BaseDistance::default()).unwrap();
        assert_eq!(d.shape(), [1, 1, 1, 1]);
        assert_eq!(d.values(), &[0.0]);
    }

    #[test]
    fn matching_view_has_zero_diagonal() {
        let support_cols = vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![2.0, 2.0]];
        let support = FeatureMap::support(support_cols.clone()).unwrap();
        let shifted: Vec<Vec<f64>> = support_cols
            .iter()
            .map(|c| c.iter().map(|v| v + 3.0).collect())
            .collect();
        let views = vec![
            vec![shifted.clone()],
            vec![support_cols.clone()],
            vec![shifted],
        ];
        let query = FeatureMap::from_views(views).unwrap();
        let d = distance_tensor(&query, &support, BaseDistance::Euclidean).unwrap();
        assert_eq!(d.shape(), [3, 1, 3, 3]);
        for t in 0..3 {
            assert_eq!(d.get(1, 0, t, t), 0.0);
            assert!(d.get(0, 0, t, t) > 0.0);
        }
    }

    #[test]
    fn tensor_validation() {
        assert_eq!(
            DistanceTensor::new([1, 1, 1, 1], vec![-1.0]),
            Err(AlignmentError::InvalidDistance)
        );
        assert_eq!(
            DistanceTensor::new([1, 0, 1, 1], vec![]),
            Err(AlignmentError::EmptyMatrix)
        );
        assert!(matches!(
            DistanceTensor::new([1, 1, 2, 1], vec![1.0]),
            Err(AlignmentError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn from_fn_index_layout() {
        let d = DistanceTensor::from_fn([2, 3, 4, 5], |a, b, t, tp| {
            (((a * 3 + b) * 4 + t) * 5 + tp) as f64
        })
        .unwrap();
        for (i, v) in d.values().iter().enumerate() {
            assert_eq!(*v, i as f64);
        }
        assert_eq!(d.get(1, 2, 3, 4), 119.0);
    }
}
