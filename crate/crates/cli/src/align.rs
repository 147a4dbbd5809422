use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::Args;
use jeanie_core::alignment::{
    distance_tensor, fixed_view_soft_dtw, fvm, jeanie_with_grad, soft_dtw, view_pair_tensor,
    AlignmentResult, Method,
};
use jeanie_core::fewshot::encode_pair;
use serde_json::{json, Value};

use crate::common::{load_first, Context};
use crate::json::{canonical, num};

#[derive(Debug, Args)]
pub struct AlignArgs {
    /// Query sequence file; its first sequence is used.
    pub query: PathBuf,
    /// Support sequence file; its first sequence is used.
    pub support: PathBuf,
}

pub fn run(ctx: &Context, args: AlignArgs) -> Result<ExitCode> {
    let cfg = &ctx.config;
    let method = ctx.method.unwrap_or(Method::Jeanie);
    let query = load_first(&args.query)?;
    let support = load_first(&args.support)?;
    let blocking = cfg.blocking()?;
    let encoder = ctx.encoder(query.num_joints())?;
    let cam = ctx.camera()?;
    let grid = cfg.grid();
    let (q, _) = encode_pair(
        &query,
        &grid,
        cam.as_ref(),
        blocking,
        encoder.as_ref(),
        false,
    )?;
    let (_, s) = encode_pair(
        &support,
        &grid,
        cam.as_ref(),
        blocking,
        encoder.as_ref(),
        cfg.expand_support,
    )?;
    let params = cfg.alignment();

    let (result, per_view, shape): (AlignmentResult, Vec<Vec<f64>>, [usize; 4]) = match method {
        Method::SoftDtw => {
            let d = distance_tensor(&q.center_view(), &s, params.base)?;
            let r = soft_dtw(&d.view(0, 0), params.gamma)?;
            let dist = r.distance;
            (r, vec![vec![dist]], d.shape())
        }
        Method::Fvm => {
            let d = distance_tensor(&q, &s, params.base)?;
            let r = fvm(&view_pair_tensor(&q, &s, params.base)?, params.gamma)?;
            (r, fixed_view_soft_dtw(&d, params.gamma)?, d.shape())
        }
        Method::Jeanie => {
            let d = distance_tensor(&q, &s, params.base)?;
            let r = jeanie_with_grad(&d, &params)?;
            (r, fixed_view_soft_dtw(&d, params.gamma)?, d.shape())
        }
    };
    let path: Vec<Value> = result
        .hard_path
        .unwrap_or_default()
        .iter()
        .map(|s| json!(s.as_array()))
        .collect();
    let per_view: Vec<Value> = per_view
        .into_iter()
        .map(|row| Value::Array(row.into_iter().map(num).collect()))
        .collect();
    let doc = json!({
        "method": method.as_str(),
        "distance": num(result.distance),
        "path": path,
        "per_view": per_view,
        "shape": shape,
        "gamma": num(params.gamma),
        "iota": params.iota,
        "config_hash": cfg.hash(),
    });
    ctx.emit(&(canonical(&doc) + "\n"))?;
    Ok(ExitCode::SUCCESS)
}
