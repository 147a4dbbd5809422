//! Property checks on random alignment instances, shared by the command
//! line `oracle` run and the test suites.

use rand::Rng;

use crate::alignment::{
    brute_force_jeanie, fixed_view_soft_dtw, fvm, jeanie, jeanie_grad, jeanie_hard_path, soft_dtw,
    AlignmentParams, DistanceTensor, Result, ViewPairTensor,
};

/// Bounds of a random instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InstanceBounds {
    pub max_k: usize,
    pub max_k_prime: usize,
    pub max_tau: usize,
    pub max_tau_prime: usize,
}

impl Default for InstanceBounds {
    fn default() -> Self {
        Self {
            max_k: 3,
            max_k_prime: 2,
            max_tau: 4,
            max_tau_prime: 4,
        }
    }
}

/// Tensor with uniform shape in the bounds and entries uniform in `[0, 2)`.
pub fn random_tensor(rng: &mut impl Rng, bounds: InstanceBounds) -> DistanceTensor {
    let shape = [
        rng.random_range(1..=bounds.max_k),
        rng.random_range(1..=bounds.max_k_prime),
        rng.random_range(1..=bounds.max_tau),
        rng.random_range(1..=bounds.max_tau_prime),
    ];
    random_tensor_of_shape(rng, shape)
}

pub fn random_tensor_of_shape(rng: &mut impl Rng, shape: [usize; 4]) -> DistanceTensor {
    let n = shape.iter().product();
    let values = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
    DistanceTensor::new(shape, values).expect("finite nonnegative entries")
}

/// `|jeanie - brute force| / (1 + |brute force|)`.
pub fn oracle_error(d: &DistanceTensor, params: &AlignmentParams) -> Result<f64> {
    let fast = jeanie(d, params)?.distance;
    let slow = brute_force_jeanie(d, params)?;
    Ok((fast - slow).abs() / (1.0 + slow.abs()))
}

/// `max |analytic - fd| / max |fd|` with central differences of step `h`.
pub fn gradient_error(d: &DistanceTensor, params: &AlignmentParams, h: f64) -> Result<f64> {
    let analytic = jeanie_grad(d, params)?;
    let mut max_diff: f64 = 0.0;
    let mut max_fd: f64 = 0.0;
    for (i, &v) in d.values().iter().enumerate() {
        let up = jeanie(&d.with_value(i, v + h)?, params)?.distance;
        let down = jeanie(&d.with_value(i, (v - h).max(0.0))?, params)?.distance;
        let step = v + h - (v - h).max(0.0);
        let fd = (up - down) / step;
        max_diff = max_diff.max((analytic.values()[i] - fd).abs());
        max_fd = max_fd.max(fd.abs());
    }
    Ok(if max_fd > 0.0 {
        max_diff / max_fd
    } else {
        max_diff
    })
}

/// Distances of the three alignment regimes on one tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ordering {
    pub fvm: f64,
    pub jeanie: f64,
    /// Best soft-DTW over single fixed views.
    pub fixed_view: f64,
}

impl Ordering {
    /// Largest violation of `fvm <= jeanie <= fixed_view`, zero when the
    /// ordering holds.
    pub fn violation(&self) -> f64 {
        (self.fvm - self.jeanie)
            .max(self.jeanie - self.fixed_view)
            .max(0.0)
    }
}

pub fn ordering(d: &DistanceTensor, params: &AlignmentParams) -> Result<Ordering> {
    let free = fvm(&ViewPairTensor::from(d), params.gamma)?.distance;
    let joint = jeanie(d, params)?.distance;
    let fixed = fixed_view_soft_dtw(d, params.gamma)?
        .into_iter()
        .flatten()
        .fold(f64::INFINITY, f64::min);
    Ok(Ordering {
        fvm: free,
        jeanie: joint,
        fixed_view: fixed,
    })
}

/// Cost of the hard-min path under view-step bound `iota`.
pub fn hard_jeanie(d: &DistanceTensor, iota: usize) -> f64 {
    jeanie_hard_path(d, iota)
        .iter()
        .map(|s| d.get(s.k, s.k_prime, s.t, s.t_prime))
        .sum()
}

/// Largest increase of the hard-min cost when `iota` grows from 0 to
/// `max_iota`; zero when the cost is non-increasing.
pub fn monotonicity_violation(d: &DistanceTensor, max_iota: usize) -> f64 {
    let costs: Vec<f64> = (0..=max_iota).map(|i| hard_jeanie(d, i)).collect();
    costs.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
}

/// Whether jeanie on the single view `(0, 0)` bitwise-equals soft-DTW.
pub fn reduces_to_soft_dtw(d: &DistanceTensor, gamma: f64) -> Result<bool> {
    let m = d.view(0, 0);
    let single = DistanceTensor::new([1, 1, m.rows(), m.cols()], m.values().to_vec())?;
    let params = AlignmentParams::new(gamma, 0);
    Ok(jeanie(&single, &params)?.distance.to_bits() == soft_dtw(&m, gamma)?.distance.to_bits())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn checks_pass_on_a_few_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            let d = random_tensor(&mut rng, InstanceBounds::default());
            let p = AlignmentParams::new(0.1, 1);
            assert!(oracle_error(&d, &p).unwrap() < 1e-12);
            assert!(gradient_error(&d, &p, 1e-6).unwrap() < 1e-5);
            assert!(
                ordering(&d, &AlignmentParams::new(1e-6, 2))
                    .unwrap()
                    .violation()
                    < 1e-6
            );
            assert!(monotonicity_violation(&d, 2) < 1e-9);
            assert!(reduces_to_soft_dtw(&d, 0.1).unwrap());
        }
    }

    #[test]
    fn hard_cost_of_single_cell() {
        let d = DistanceTensor::new([1, 1, 1, 1], vec![0.75]).unwrap();
        assert_eq!(hard_jeanie(&d, 0), 0.75);
    }
}
