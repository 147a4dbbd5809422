//! Exhaustive path enumeration, kept independent of the recursion in
//! `jeanie.rs`: paths are walked forward from every origin and their costs
//! folded into a running log-sum-exp.

use super::{AlignmentError, AlignmentParams, DistanceTensor, Result};

/// Largest number of paths [`brute_force_jeanie`] agrees to enumerate.
pub const MAX_ORACLE_PATHS: f64 = 1e7;

const FORWARD_MOVES: [(usize, usize); 3] = [(0, 1), (1, 0), (1, 1)];

fn neighbours(center: usize, iota: usize, len: usize) -> std::ops::Range<usize> {
    center.saturating_sub(iota)..(center + iota + 1).min(len)
}

/// Number of admissible joint paths (any start view at the first cell, any
/// end view at the last cell).
pub fn count_paths(shape: [usize; 4], iota: usize) -> f64 {
    let [nk, nkp, tau, taup] = shape;
    let idx = |k: usize, kp: usize, t: usize, tp: usize| ((k * nkp + kp) * tau + t) * taup + tp;
    let mut count = vec![0.0f64; nk * nkp * tau * taup];
    for t in 0..tau {
        for tp in 0..taup {
            for k in 0..nk {
                for kp in 0..nkp {
                    if t == 0 && tp == 0 {
                        count[idx(k, kp, 0, 0)] = 1.0;
                        continue;
                    }
                    let mut c = 0.0;
                    for &(dt, dtp) in &FORWARD_MOVES {
                        if t < dt || tp < dtp {
                            continue;
                        }
                        for pk in neighbours(k, iota, nk) {
                            for pkp in neighbours(kp, iota, nkp) {
                                c += count[idx(pk, pkp, t - dt, tp - dtp)];
                            }
                        }
                    }
                    count[idx(k, kp, t, tp)] = c;
                }
            }
        }
    }
    (0..nk)
        .flat_map(|k| (0..nkp).map(move |kp| (k, kp)))
        .map(|(k, kp)| count[idx(k, kp, tau - 1, taup - 1)])
        .sum()
}

/// Running `ln(sum exp(a_i))` without storing the terms.
struct LogSumExp {
    max: f64,
    scaled_sum: f64,
}

impl LogSumExp {
    fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            scaled_sum: 0.0,
        }
    }

    fn push(&mut self, a: f64) {
        if a > self.max {
            self.scaled_sum = self.scaled_sum * (self.max - a).exp() + 1.0;
            self.max = a;
        } else {
            self.scaled_sum += (a - self.max).exp();
        }
    }

    fn value(&self) -> f64 {
        self.max + self.scaled_sum.ln()
    }
}

struct Walker<'a> {
    d: &'a DistanceTensor,
    iota: usize,
    gamma: f64,
    acc: LogSumExp,
}

impl Walker<'_> {
    fn walk(&mut self, k: usize, kp: usize, t: usize, tp: usize, cost: f64) {
        let [nk, nkp, tau, taup] = self.d.shape();
        let cost = cost + self.d.get(k, kp, t, tp);
        if t + 1 == tau && tp + 1 == taup {
            self.acc.push(-cost / self.gamma);
            return;
        }
        for &(dt, dtp) in &FORWARD_MOVES {
            let (nt, ntp) = (t + dt, tp + dtp);
            if nt >= tau || ntp >= taup {
                continue;
            }
            for nk_ in neighbours(k, self.iota, nk) {
                for nkp_ in neighbours(kp, self.iota, nkp) {
                    self.walk(nk_, nkp_, nt, ntp, cost);
                }
            }
        }
    }
}

/// `-gamma * ln(sum over admissible paths of exp(-cost / gamma))`, by
/// enumeration. Refuses instances with more than [`MAX_ORACLE_PATHS`] paths.
pub fn brute_force_jeanie(d: &DistanceTensor, params: &AlignmentParams) -> Result<f64> {
    params.check()?;
    let paths = count_paths(d.shape(), params.iota);
    if paths > MAX_ORACLE_PATHS {
        return Err(AlignmentError::TooLarge {
            paths,
            limit: MAX_ORACLE_PATHS,
        });
    }
    let [nk, nkp, _, _] = d.shape();
    let mut walker = Walker {
        d,
        iota: params.iota,
        gamma: params.gamma,
        acc: LogSumExp::new(),
    };
    for k in 0..nk {
        for kp in 0..nkp {
            walker.walk(k, kp, 0, 0, 0.0);
        }
    }
    Ok(-params.gamma * walker.acc.value())
}
