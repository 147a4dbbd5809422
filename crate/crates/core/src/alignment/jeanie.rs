//! Joint temporal and viewpoint alignment.
//!
//! The accumulator `r` lives on the full `K x K' x tau x tau'` grid. Every
//! `(k, k', 0, 0)` cell is a path origin. Any other cell adds its base
//! distance to the soft-min over predecessors
//! `(k - i, k' - i', t - dt, t' - dt')` with `|i|, |i'| <= iota` and
//! `(dt, dt')` one of the three temporal moves; predecessors off the grid
//! carry no mass. The distance is the soft-min of `r` over all end views at
//! `(tau - 1, tau' - 1)`.
//!
//! Cells are visited with `t` outermost, then `t'`, then `k`, then `k'`;
//! predecessors are gathered in `TEMPORAL_STEPS` order, then by ascending
//! `k`, then ascending `k'`. With a single view this reproduces
//! [`soft_dtw`](super::soft_dtw) operation for operation.

use super::{
    softmin_unchecked, AlignmentParams, AlignmentResult, DistanceTensor, PathStep, Result,
    TEMPORAL_STEPS,
};

struct Forward {
    r: Vec<f64>,
    /// Soft-min over predecessors, i.e. `r - D` (unused at origins).
    soft: Vec<f64>,
    distance: f64,
}

#[inline]
fn view_range(center: usize, iota: usize, len: usize) -> std::ops::RangeInclusive<usize> {
    center.saturating_sub(iota)..=(center + iota).min(len - 1)
}

fn end_cells(d: &DistanceTensor) -> impl Iterator<Item = usize> + '_ {
    let [nk, nkp, tau, taup] = d.shape();
    (0..nk).flat_map(move |k| (0..nkp).map(move |kp| d.index(k, kp, tau - 1, taup - 1)))
}

/// Calls `f(flat_index_of_predecessor)` for every in-bounds predecessor.
#[inline]
fn for_each_pred(
    d: &DistanceTensor,
    iota: usize,
    (k, kp, t, tp): (usize, usize, usize, usize),
    mut f: impl FnMut(usize),
) {
    let [nk, nkp, _, _] = d.shape();
    for &(dt, dtp) in &TEMPORAL_STEPS {
        if t < dt || tp < dtp {
            continue;
        }
        for pk in view_range(k, iota, nk) {
            for pkp in view_range(kp, iota, nkp) {
                f(d.index(pk, pkp, t - dt, tp - dtp));
            }
        }
    }
}

fn forward(d: &DistanceTensor, gamma: f64, iota: usize) -> Forward {
    let [nk, nkp, tau, taup] = d.shape();
    let n = d.values().len();
    let mut r = vec![f64::INFINITY; n];
    let mut soft = vec![f64::INFINITY; n];
    let side = 2 * iota + 1;
    let mut preds = Vec::with_capacity(3 * side * side);
    for t in 0..tau {
        for tp in 0..taup {
            for k in 0..nk {
                for kp in 0..nkp {
                    let idx = d.index(k, kp, t, tp);
                    if t == 0 && tp == 0 {
                        r[idx] = d.values()[idx];
                        continue;
                    }
                    preds.clear();
                    for_each_pred(d, iota, (k, kp, t, tp), |p| preds.push(r[p]));
                    let s = softmin_unchecked(&preds, gamma);
                    soft[idx] = s;
                    r[idx] = d.values()[idx] + s;
                }
            }
        }
    }
    let ends: Vec<f64> = end_cells(d).map(|i| r[i]).collect();
    let distance = softmin_unchecked(&ends, gamma);
    Forward { r, soft, distance }
}

/// Soft joint temporal/viewpoint alignment distance.
pub fn jeanie(d: &DistanceTensor, params: &AlignmentParams) -> Result<AlignmentResult> {
    params.check()?;
    Ok(AlignmentResult::scalar(
        forward(d, params.gamma, params.iota).distance,
    ))
}

/// Distance, gradient with respect to the base distances, and hard path.
pub fn jeanie_with_grad(d: &DistanceTensor, params: &AlignmentParams) -> Result<AlignmentResult> {
    params.check()?;
    let fwd = forward(d, params.gamma, params.iota);
    let grad = backward(d, params.gamma, params.iota, &fwd);
    Ok(AlignmentResult {
        distance: fwd.distance,
        gradient: Some(grad),
        hard_path: Some(hard_path(d, params.iota)),
    })
}

/// `d jeanie / d D`: the soft occupancy of every cell by the path
/// distribution.
pub fn jeanie_grad(d: &DistanceTensor, params: &AlignmentParams) -> Result<DistanceTensor> {
    params.check()?;
    let fwd = forward(d, params.gamma, params.iota);
    Ok(backward(d, params.gamma, params.iota, &fwd))
}

fn backward(d: &DistanceTensor, gamma: f64, iota: usize, fwd: &Forward) -> DistanceTensor {
    let [nk, nkp, tau, taup] = d.shape();
    let mut e = vec![0.0; d.values().len()];
    if fwd.distance.is_finite() {
        for i in end_cells(d) {
            e[i] = (-(fwd.r[i] - fwd.distance) / gamma).exp();
        }
    }
    for t in (0..tau).rev() {
        for tp in (0..taup).rev() {
            if t == 0 && tp == 0 {
                continue;
            }
            for k in (0..nk).rev() {
                for kp in (0..nkp).rev() {
                    let idx = d.index(k, kp, t, tp);
                    let (occupancy, s) = (e[idx], fwd.soft[idx]);
                    if occupancy == 0.0 || !s.is_finite() {
                        continue;
                    }
                    for_each_pred(d, iota, (k, kp, t, tp), |p| {
                        e[p] += occupancy * (-(fwd.r[p] - s) / gamma).exp();
                    });
                }
            }
        }
    }
    DistanceTensor::from_raw(d.shape(), e)
}

/// Hard-min joint path. Ties prefer the diagonal temporal step, then the
/// smaller viewpoint move, then the lower flat index; the end view prefers
/// the grid center.
pub fn jeanie_hard_path(d: &DistanceTensor, iota: usize) -> Vec<PathStep> {
    hard_path(d, iota)
}

fn hard_path(d: &DistanceTensor, iota: usize) -> Vec<PathStep> {
    let [nk, nkp, tau, taup] = d.shape();
    let mut h = vec![f64::INFINITY; d.values().len()];
    for t in 0..tau {
        for tp in 0..taup {
            for k in 0..nk {
                for kp in 0..nkp {
                    let idx = d.index(k, kp, t, tp);
                    let best = if t == 0 && tp == 0 {
                        0.0
                    } else {
                        let mut m = f64::INFINITY;
                        for_each_pred(d, iota, (k, kp, t, tp), |p| m = m.min(h[p]));
                        m
                    };
                    h[idx] = d.values()[idx] + best;
                }
            }
        }
    }

    let (ck, ckp) = (nk / 2, nkp / 2);
    let mut end = (f64::INFINITY, usize::MAX, 0, 0);
    for k in 0..nk {
        for kp in 0..nkp {
            let cand = (
                h[d.index(k, kp, tau - 1, taup - 1)],
                k.abs_diff(ck) + kp.abs_diff(ckp),
                k,
                kp,
            );
            if (cand.0, cand.1, cand.2, cand.3) < end {
                end = cand;
            }
        }
    }
    let (mut k, mut kp, mut t, mut tp) = (end.2, end.3, tau - 1, taup - 1);
    let mut path = vec![PathStep {
        k,
        k_prime: kp,
        t,
        t_prime: tp,
    }];
    // ties: cost, then move order (1,1), (1,0), (0,1), then smallest view jump
    type Key = (f64, usize, usize, usize);
    type Cell = (usize, usize, usize, usize);
    while t > 0 || tp > 0 {
        let mut best: Option<(Key, Cell)> = None;
        for (rank, &(dt, dtp)) in [(1usize, 1usize), (1, 0), (0, 1)].iter().enumerate() {
            if t < dt || tp < dtp {
                continue;
            }
            for pk in view_range(k, iota, nk) {
                for pkp in view_range(kp, iota, nkp) {
                    let flat = d.index(pk, pkp, t - dt, tp - dtp);
                    let key = (h[flat], rank, pk.abs_diff(k) + pkp.abs_diff(kp), flat);
                    if best.as_ref().is_none_or(|(b, _)| key < *b) {
                        best = Some((key, (pk, pkp, t - dt, tp - dtp)));
                    }
                }
            }
        }
        let (_, cell) = best.expect("interior cell has a predecessor");
        (k, kp, t, tp) = cell;
        path.push(PathStep {
            k,
            k_prime: kp,
            t,
            t_prime: tp,
        });
    }
    path.reverse();
    path
}
