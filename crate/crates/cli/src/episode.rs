use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context as _, Result};
use clap::Args;
use jeanie_core::alignment::Method;
use jeanie_core::fewshot::{
    encode_pair, evaluate_item, synth_corpus, EncodedCorpus, Episode, EpisodeSampler,
};
use jeanie_core::skeleton::load_sequences;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::common::{wilson_interval, Context};
use crate::json::{canonical, num};

#[derive(Debug, Args)]
pub struct EpisodeArgs {
    /// Labelled corpus; falls back to the configured `corpus` path.
    pub corpus: Option<PathBuf>,
    /// Generate the corpus from the `synth.*` settings instead of reading one.
    #[arg(long, conflicts_with = "corpus")]
    pub synthetic: bool,
    /// Comma-separated methods to compare; defaults to --method, else all.
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<Method>,
    /// Overrides the configured episode count.
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Also write one CSV row per method to this file.
    #[arg(long, value_name = "PATH")]
    pub csv: Option<PathBuf>,
}

pub const CSV_HEADER: [&str; 10] = [
    "run_id",
    "method",
    "episodes",
    "n_way",
    "z_shot",
    "correct",
    "accuracy",
    "ci_low",
    "ci_high",
    "config_hash",
];

struct MethodRecord {
    method: Method,
    per_episode: Vec<usize>,
    wall_time: f64,
}

pub fn run(ctx: &Context, args: EpisodeArgs) -> Result<ExitCode> {
    let cfg = &ctx.config;
    let methods = if !args.methods.is_empty() {
        args.methods.clone()
    } else if let Some(m) = ctx.method {
        vec![m]
    } else {
        Method::ALL.to_vec()
    };
    let (corpus, source) = if args.synthetic {
        (synth_corpus(&cfg.synth())?, "synthetic".to_string())
    } else {
        let path = args
            .corpus
            .clone()
            .or_else(|| cfg.corpus.clone())
            .context("episode needs a corpus path or --synthetic")?;
        let seqs = load_sequences(&path).with_context(|| format!("reading {}", path.display()))?;
        (seqs, path.display().to_string())
    };
    anyhow::ensure!(!corpus.is_empty(), "corpus is empty");
    let episodes_n = args.episodes.unwrap_or(cfg.episodes);
    let shape = cfg.episode_shape();
    let mut sampler = EpisodeSampler::new(&corpus, shape, cfg.seed)?;
    let episodes: Vec<Episode> = (0..episodes_n).map(|_| sampler.next_episode()).collect();

    let blocking = cfg.blocking()?;
    let grid = cfg.grid();
    let cam = ctx.camera()?;
    let encoder = ctx.encoder(corpus[0].num_joints())?;
    let started = Instant::now();
    let pairs = ctx.pool.install(|| {
        corpus
            .par_iter()
            .map(|seq| {
                encode_pair(
                    seq,
                    &grid,
                    cam.as_ref(),
                    blocking,
                    encoder.as_ref(),
                    cfg.expand_support,
                )
            })
            .collect::<std::result::Result<Vec<_>, _>>()
    })?;
    let (queries, supports) = pairs.into_iter().unzip();
    let encoded = EncodedCorpus { queries, supports };
    log::info!(
        "encoded {} sequences in {:.2?}",
        corpus.len(),
        started.elapsed()
    );

    let params = cfg.alignment();
    let mut records = Vec::with_capacity(methods.len());
    for &method in &methods {
        let started = Instant::now();
        let per_episode = ctx.pool.install(|| {
            episodes
                .par_iter()
                .map(|ep| {
                    ep.items.iter().try_fold(0usize, |acc, item| {
                        Ok::<_, anyhow::Error>(
                            acc + evaluate_item(&encoded, item, &params, method)?.correct()
                                as usize,
                        )
                    })
                })
                .collect::<Result<Vec<usize>>>()
        })?;
        let wall_time = started.elapsed().as_secs_f64();
        log::info!("{method}: {episodes_n} episodes in {wall_time:.2}s");
        records.push(MethodRecord {
            method,
            per_episode,
            wall_time,
        });
    }

    let hash = cfg.hash();
    let run_id = format!("{}-{}", &hash[..12], cfg.seed);
    let trials = episodes_n * shape.batch;
    let summary = |r: &MethodRecord| {
        let correct: usize = r.per_episode.iter().sum();
        let accuracy = if trials > 0 {
            correct as f64 / trials as f64
        } else {
            0.0
        };
        let (lo, hi) = wilson_interval(correct, trials);
        (correct, accuracy, lo, hi)
    };

    let json_records: Vec<Value> = records
        .iter()
        .map(|r| {
            let (correct, accuracy, lo, hi) = summary(r);
            json!({
                "method": r.method.as_str(),
                "episodes": episodes_n,
                "correct": correct,
                "trials": trials,
                "accuracy": num(accuracy),
                "ci_low": num(lo),
                "ci_high": num(hi),
                "per_episode": r.per_episode.iter().map(|&c| num(c as f64 / shape.batch as f64)).collect::<Vec<_>>(),
                "wall_time_s": num(r.wall_time),
            })
        })
        .collect();
    let doc = json!({
        "run_id": run_id,
        "config_hash": hash,
        "seed": cfg.seed,
        "corpus": source,
        "n_way": shape.n_way,
        "z_shot": shape.z_shot,
        "batch": shape.batch,
        "records": json_records,
    });
    ctx.emit(&(canonical(&doc) + "\n"))?;

    if let Some(path) = &args.csv {
        let mut w =
            csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(CSV_HEADER)?;
        for r in &records {
            let (correct, accuracy, lo, hi) = summary(r);
            w.write_record([
                run_id.clone(),
                r.method.as_str().to_string(),
                episodes_n.to_string(),
                shape.n_way.to_string(),
                shape.z_shot.to_string(),
                correct.to_string(),
                format!("{accuracy:.6}"),
                format!("{lo:.6}"),
                format!("{hi:.6}"),
                hash.clone(),
            ])?;
        }
        w.flush()?;
    }
    Ok(ExitCode::SUCCESS)
}
