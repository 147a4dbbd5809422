use super::{
    check_gamma, softmin_unchecked, AlignmentResult, CostMatrix, DistanceTensor, PathStep, Result,
    TEMPORAL_STEPS,
};

/// Soft-DTW over a `tau x tau'` cost matrix with predecessors `(t, t'-1)`,
/// `(t-1, t')` and `(t-1, t'-1)`. The result carries the hard-min path with
/// view indices set to zero.
pub fn soft_dtw(d: &CostMatrix, gamma: f64) -> Result<AlignmentResult> {
    check_gamma(gamma)?;
    let (rows, cols) = (d.rows(), d.cols());
    let mut r = vec![f64::INFINITY; rows * cols];
    let mut preds = Vec::with_capacity(3);
    for t in 0..rows {
        for tp in 0..cols {
            if t == 0 && tp == 0 {
                r[0] = d.get(0, 0);
                continue;
            }
            preds.clear();
            for &(dt, dtp) in &TEMPORAL_STEPS {
                if t >= dt && tp >= dtp {
                    preds.push(r[(t - dt) * cols + tp - dtp]);
                }
            }
            r[t * cols + tp] = d.get(t, tp) + softmin_unchecked(&preds, gamma);
        }
    }
    let distance = softmin_unchecked(&[r[rows * cols - 1]], gamma);
    Ok(AlignmentResult {
        distance,
        gradient: None,
        hard_path: Some(hard_path(d)),
    })
}

/// Hard-min DTW path, preferring the diagonal step on ties, then `(1, 0)`.
fn hard_path(d: &CostMatrix) -> Vec<PathStep> {
    let (rows, cols) = (d.rows(), d.cols());
    let mut h = vec![f64::INFINITY; rows * cols];
    for t in 0..rows {
        for tp in 0..cols {
            let best = if t == 0 && tp == 0 {
                0.0
            } else {
                TEMPORAL_STEPS
                    .iter()
                    .filter(|&&(dt, dtp)| t >= dt && tp >= dtp)
                    .map(|&(dt, dtp)| h[(t - dt) * cols + tp - dtp])
                    .fold(f64::INFINITY, f64::min)
            };
            h[t * cols + tp] = d.get(t, tp) + best;
        }
    }
    let (mut t, mut tp) = (rows - 1, cols - 1);
    let mut path = vec![PathStep {
        k: 0,
        k_prime: 0,
        t,
        t_prime: tp,
    }];
    while t > 0 || tp > 0 {
        let mut best: Option<(f64, usize, usize)> = None;
        for &(dt, dtp) in [(1, 1), (1, 0), (0, 1)].iter() {
            if t >= dt && tp >= dtp {
                let v = h[(t - dt) * cols + tp - dtp];
                if best.is_none_or(|(b, _, _)| v < b) {
                    best = Some((v, t - dt, tp - dtp));
                }
            }
        }
        let (_, nt, ntp) = best.expect("interior cell has a predecessor");
        t = nt;
        tp = ntp;
        path.push(PathStep {
            k: 0,
            k_prime: 0,
            t,
            t_prime: tp,
        });
    }
    path.reverse();
    path
}

/// Soft-DTW of every fixed view of a distance tensor, indexed `[k][k']`.
pub fn fixed_view_soft_dtw(d: &DistanceTensor, gamma: f64) -> Result<Vec<Vec<f64>>> {
    let [k, kp, _, _] = d.shape();
    (0..k)
        .map(|a| {
            (0..kp)
                .map(|b| soft_dtw(&d.view(a, b), gamma).map(|r| r.distance))
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::AlignmentError;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_cell() {
        let d = CostMatrix::new(1, 1, vec![2.5]).unwrap();
        assert_eq!(soft_dtw(&d, 1.0).unwrap().distance, 2.5);
    }

    #[test]
    fn two_by_two_ones() {
        let d = CostMatrix::new(2, 2, vec![1.0; 4]).unwrap();
        assert_abs_diff_eq!(soft_dtw(&d, 0.01).unwrap().distance, 2.0, epsilon = 1e-3);
        // paths: diagonal (cost 2) and two corner paths (cost 3 each)
        let expected = -((-2.0f64).exp() + 2.0 * (-3.0f64).exp()).ln();
        assert_abs_diff_eq!(
            soft_dtw(&d, 1.0).unwrap().distance,
            expected,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(expected, 1.448_555_286, epsilon = 1e-9);
    }

    #[test]
    fn hard_path_is_monotone_and_prefers_diagonal() {
        let d = CostMatrix::new(2, 2, vec![1.0; 4]).unwrap();
        let path = soft_dtw(&d, 1.0).unwrap().hard_path.unwrap();
        let cells: Vec<_> = path.iter().map(|s| (s.t, s.t_prime)).collect();
        assert_eq!(cells, vec![(0, 0), (1, 1)]);

        let d = CostMatrix::from_fn(3, 4, |t, tp| ((t as f64) - (tp as f64) * 0.7).abs()).unwrap();
        let path = soft_dtw(&d, 1.0).unwrap().hard_path.unwrap();
        assert_eq!((path[0].t, path[0].t_prime), (0, 0));
        assert_eq!(
            (path.last().unwrap().t, path.last().unwrap().t_prime),
            (2, 3)
        );
        for w in path.windows(2) {
            let dt = w[1].t - w[0].t;
            let dtp = w[1].t_prime - w[0].t_prime;
            assert!(dt <= 1 && dtp <= 1 && dt + dtp >= 1);
        }
    }

    #[test]
    fn empty_matrix_rejected() {
        assert_eq!(
            CostMatrix::new(0, 3, vec![]),
            Err(AlignmentError::EmptyMatrix)
        );
    }
}
