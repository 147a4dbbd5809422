use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use clap::Args;
use jeanie_core::alignment::{fvm, jeanie, jeanie_with_grad, soft_dtw, Method, ViewPairTensor};
use jeanie_core::diagnostics::random_tensor_of_shape;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::common::Context;

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Timed repetitions per configuration.
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
    /// Sizes as `K,K',tau,tau'`, repeatable; a default sweep otherwise.
    #[arg(long = "size", value_parser = parse_size)]
    pub sizes: Vec<[usize; 4]>,
    /// Time the forward pass together with the gradient.
    #[arg(long)]
    pub grad: bool,
}

pub const HEADER: &str = "method,K,K',tau,tau_p,iota,mean_us,p95_us";

const DEFAULT_SWEEP: [[usize; 4]; 9] = [
    [1, 1, 8, 8],
    [1, 1, 16, 8],
    [1, 1, 16, 16],
    [3, 3, 8, 8],
    [3, 3, 16, 8],
    [3, 3, 16, 16],
    [7, 7, 8, 8],
    [7, 7, 16, 8],
    [7, 7, 16, 16],
];

fn parse_size(s: &str) -> std::result::Result<[usize; 4], String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match parts[..] {
        [k, kp, t, tp] if parts.iter().all(|&x| x >= 1) => Ok([k, kp, t, tp]),
        _ => Err(format!(
            "expected four positive integers K,K',tau,tau', got {s:?}"
        )),
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() as f64 - 1.0) * q).ceil() as usize;
    sorted[idx.min(sorted.len() - 1)]
}

pub fn run(ctx: &Context, args: BenchArgs) -> Result<ExitCode> {
    anyhow::ensure!(args.reps >= 1, "--reps must be at least 1");
    let sizes = if args.sizes.is_empty() {
        DEFAULT_SWEEP.to_vec()
    } else {
        args.sizes.clone()
    };
    let mut params = ctx.config.alignment();
    // benchmark inputs are random tensors, so the base distance is irrelevant
    params.base = Default::default();
    let methods = ctx
        .method
        .map(|m| vec![m])
        .unwrap_or_else(|| Method::ALL.to_vec());
    let jobs: Vec<(usize, Method, [usize; 4])> = sizes
        .iter()
        .enumerate()
        .flat_map(|(i, &s)| methods.iter().map(move |&m| (i, m, s)))
        .collect();
    let seed = ctx.config.seed;
    // timings interfere when run concurrently, so fan out only on request
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.jobs.unwrap_or(1))
        .build()?;
    let rows = pool.install(|| {
        jobs.par_iter()
            .map(|&(i, method, shape)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
                let d = random_tensor_of_shape(&mut rng, shape);
                let pairs = ViewPairTensor::from(&d);
                let center = d.view(shape[0] / 2, shape[1] / 2);
                let mut times = Vec::with_capacity(args.reps);
                for _ in 0..args.reps {
                    let t = Instant::now();
                    let value = match method {
                        Method::SoftDtw => soft_dtw(&center, params.gamma)?.distance,
                        Method::Fvm => fvm(&pairs, params.gamma)?.distance,
                        Method::Jeanie if args.grad => jeanie_with_grad(&d, &params)?.distance,
                        Method::Jeanie => jeanie(&d, &params)?.distance,
                    };
                    times.push(t.elapsed().as_secs_f64() * 1e6);
                    std::hint::black_box(value);
                }
                let mean = times.iter().sum::<f64>() / times.len() as f64;
                times.sort_by(f64::total_cmp);
                let p95 = percentile(&times, 0.95);
                Ok(format!(
                    "{},{},{},{},{},{},{mean:.3},{p95:.3}",
                    method.as_str(),
                    shape[0],
                    shape[1],
                    shape[2],
                    shape[3],
                    params.iota
                ))
            })
            .collect::<Result<Vec<String>>>()
    })?;
    let mut text = String::from(HEADER);
    text.push('\n');
    for row in rows {
        text.push_str(&row);
        text.push('\n');
    }
    ctx.emit(&text)?;
    Ok(ExitCode::SUCCESS)
}
