//! The ten experiment pipelines.
//!
//! Every pipeline is a pure function of (config, input files, seeds): it
//! stages deterministic CSV artifacts, then commits them to a directory
//! named by the config hash. Per-head work parallelizes across a pool
//! capped by `ROPESCOPE_THREADS`; results are merged in (layer, head)
//! order so artifact bytes never depend on the worker count.

use std::fmt::Write as _;
use std::path::PathBuf;

use rayon::prelude::*;

use ropescope_core::analysis::{
    dimension_heatmap, head_distance_curve, head_dominant_records, head_top_dims,
    sample_random_pairs, sample_top_attention_pairs, score_heads, select_mask, DistanceCurve,
    HeadRanking, HeadScore, MaskSet,
};
use ropescope_core::contrib::{hadamard_contrib, pair_contributions};
use ropescope_core::model::{ForwardOptions, Model, ModelWeights};
use ropescope_core::rope::{
    effective_frequencies, frequencies, remap_distance, trig_profile, ScalingMethod,
};
use ropescope_core::rstn::load_trace;
use ropescope_core::tasks::{passkey_make, passkey_score};
use ropescope_core::tokenizer::{ByteTokenizer, Tokenizer};
use ropescope_core::trace::ActivationTrace;

use crate::config::{ExperimentConfig, MaskMode};
use crate::errors::CliError;
use crate::report::{fmt_f64, RunDir, SeedSummary};

/// A pipeline name, as spelled on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Freqs,
    TrigCurves,
    Decompose,
    Dominant,
    Corr,
    Heatmap,
    ScoreHeads,
    MaskEval,
    Passkey,
    Ppl,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Freqs => "freqs",
            Command::TrigCurves => "trig-curves",
            Command::Decompose => "decompose",
            Command::Dominant => "dominant",
            Command::Corr => "corr",
            Command::Heatmap => "heatmap",
            Command::ScoreHeads => "score-heads",
            Command::MaskEval => "mask-eval",
            Command::Passkey => "passkey",
            Command::Ppl => "ppl",
        }
    }
}

/// Run one pipeline end to end; returns the committed run directory.
pub fn run_pipeline(command: Command, cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    cfg.validate()?;
    let hash = cfg.hash_for(command.name());
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| CliError::Input(format!("cannot create out dir: {e}")))?;
    let mut run = RunDir::create(&cfg.out_dir, command.name(), &hash)?;

    let mut attention_temperature = None;
    match command {
        Command::Freqs => attention_temperature = freqs(cfg, &mut run)?,
        Command::TrigCurves => trig_curves(cfg, &mut run)?,
        Command::Decompose => decompose(cfg, &mut run)?,
        Command::Dominant => dominant(cfg, &mut run)?,
        Command::Corr => corr(cfg, &mut run)?,
        Command::Heatmap => heatmap(cfg, &mut run)?,
        Command::ScoreHeads => score_heads_cmd(cfg, &mut run)?,
        Command::MaskEval => mask_eval(cfg, &mut run)?,
        Command::Passkey => passkey_cmd(cfg, &mut run)?,
        Command::Ppl => ppl_cmd(cfg, &mut run)?,
    }

    let seeds = SeedSummary {
        sampling: cfg.sampling.seed,
        mask: cfg.mask.seed,
        passkey: cfg.passkey.seed,
        weights: cfg.model.weight_seed,
    };
    run.commit(command.name(), &hash, seeds, attention_temperature)
}

fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(value) = std::env::var("ROPESCOPE_THREADS") {
        let n: usize = value
            .parse()
            .map_err(|_| CliError::Config(format!("ROPESCOPE_THREADS={value} is not a number")))?;
        builder = builder.num_threads(n.max(1));
    }
    builder
        .build()
        .map_err(|e| CliError::Internal(e.to_string()))
}

/// Run a job per (layer, head), in parallel, merged in (layer, head) order.
fn per_head<T, F>(n_layers: usize, n_heads: usize, job: F) -> Result<Vec<T>, CliError>
where
    T: Send,
    F: Fn(usize, usize) -> Result<T, CliError> + Sync,
{
    let heads: Vec<(usize, usize)> = (0..n_layers)
        .flat_map(|l| (0..n_heads).map(move |h| (l, h)))
        .collect();
    thread_pool()?.install(|| {
        heads
            .par_iter()
            .map(|&(l, h)| job(l, h))
            .collect::<Result<Vec<T>, CliError>>()
    })
}

fn build_model(cfg: &ExperimentConfig) -> Result<Model, CliError> {
    let model_config = cfg.model_config();
    let weights = match &cfg.model.weights {
        Some(store) => ModelWeights::load(&model_config, &store.manifest, &store.container)?,
        None => ModelWeights::random(&model_config, cfg.model.weight_seed)?,
    };
    Ok(Model::new(model_config, &weights)?)
}

/// Prompts as byte-level token sequences: inline text first, then each file.
fn read_prompts(cfg: &ExperimentConfig) -> Result<Vec<Vec<u32>>, CliError> {
    let mut prompts = Vec::new();
    if let Some(text) = &cfg.input.prompt_text {
        prompts.push(ByteTokenizer.encode(text));
    }
    for path in &cfg.input.prompt_paths {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::Input(format!("cannot read prompt {}: {e}", path.display())))?;
        prompts.push(bytes.into_iter().map(u32::from).collect());
    }
    if prompts.is_empty() {
        return Err(CliError::Config(
            "no prompts configured: set input.prompt_text or input.prompt_paths".into(),
        ));
    }
    Ok(prompts)
}

/// The analysis substrate: an external dump when configured, otherwise a
/// traced forward pass of the toy model over the first prompt.
fn obtain_trace(cfg: &ExperimentConfig) -> Result<ActivationTrace, CliError> {
    if let Some(dump) = &cfg.input.dump {
        return Ok(load_trace(&dump.manifest, &dump.container)?);
    }
    let model = build_model(cfg)?;
    let prompts = read_prompts(cfg)?;
    let options = ForwardOptions {
        capture_trace: true,
        disable_query_rotation: cfg.disable_query_rotation,
        ..Default::default()
    };
    let out = model.forward(&prompts[0], &options)?;
    out.trace
        .ok_or_else(|| CliError::Internal("forward did not return a trace".into()))
}

fn curves_for(trace: &ActivationTrace, per_query_k: usize) -> Result<Vec<DistanceCurve>, CliError> {
    per_head(trace.n_layers(), trace.n_heads(), |l, h| {
        head_distance_curve(trace, l, h, per_query_k).map_err(CliError::from)
    })
}

fn ranking(cfg: &ExperimentConfig) -> HeadRanking {
    if cfg.analysis.rank_by_abs {
        HeadRanking::Absolute
    } else {
        HeadRanking::Signed
    }
}

/// Mask selection for eval commands. Top masks need head scores; random
/// masks draw over the whole grid; `none` is empty.
fn resolve_mask(
    cfg: &ExperimentConfig,
    scores: Option<&[HeadScore]>,
    n_layers: usize,
    n_heads: usize,
) -> Result<MaskSet, CliError> {
    match cfg.mask.strategy {
        MaskMode::None => Ok(MaskSet::empty()),
        MaskMode::Top => {
            let scores = scores.ok_or_else(|| {
                CliError::Internal("top mask requested without head scores".into())
            })?;
            Ok(select_mask(
                scores,
                ropescope_core::analysis::MaskStrategy::Top,
                cfg.mask.fraction,
                cfg.mask.seed,
            )?)
        }
        MaskMode::Random => {
            let grid: Vec<HeadScore> = (0..n_layers)
                .flat_map(|l| {
                    (0..n_heads).map(move |h| HeadScore {
                        layer: l,
                        head: h,
                        rho: None,
                        n_points: 0,
                    })
                })
                .collect();
            Ok(select_mask(
                &grid,
                ropescope_core::analysis::MaskStrategy::Random,
                cfg.mask.fraction,
                cfg.mask.seed,
            )?)
        }
    }
}

fn freqs(cfg: &ExperimentConfig, run: &mut RunDir) -> Result<Option<f64>, CliError> {
    let spec = cfg.model_config().freq_spec();
    let theta = frequencies(&spec)?;
    let scaled = effective_frequencies(&spec, &cfg.scaling)?;
    let mut csv = String::from("dim,theta,theta_scaled\n");
    for (i, (t, s)) in theta.iter().zip(&scaled.theta).enumerate() {
        writeln!(csv, "{i},{},{}", fmt_f64(*t), fmt_f64(*s)).unwrap();
    }
    run.write_file("freqs.csv", &csv)?;
    Ok(scaled.temperature)
}

fn trig_curves(cfg: &ExperimentConfig, run: &mut RunDir) -> Result<(), CliError> {
    let spec = cfg.model_config().freq_spec();
    let scaled = effective_frequencies(&spec, &cfg.scaling)?;
    let mut boundaries = String::from("distance,effective_distance,wrap_boundary\n");
    for &distance in &cfg.trig.distances {
        let effective = match cfg.scaling {
            ScalingMethod::SelfExtend {
                group_size,
                neighbor_window,
            } => remap_distance(distance, group_size, neighbor_window),
            _ => distance,
        };
        let profile = trig_profile(effective, &scaled.theta);
        let mut csv = String::from("dim,phase,cos\n");
        for i in 0..profile.cosines.len() {
            writeln!(
                csv,
                "{i},{},{}",
                fmt_f64(profile.phases[i]),
                fmt_f64(profile.cosines[i])
            )
            .unwrap();
        }
        run.write_file(&format!("trig_D{distance}.csv"), &csv)?;
        writeln!(
            boundaries,
            "{distance},{effective},{}",
            profile.wrap_boundary
        )
        .unwrap();
    }
    run.write_file("wrap_boundaries.csv", &boundaries)?;
    Ok(())
}

fn decompose(cfg: &ExperimentConfig, run: &mut RunDir) -> Result<(), CliError> {
    let trace = obtain_trace(cfg)?;
    let (layer, head) = (cfg.decompose.layer, cfg.decompose.head);
    if layer >= trace.n_layers() || head >= trace.n_heads() {
        return Err(CliError::Config(format!(
            "decompose target (layer {layer}, head {head}) outside trace grid {}x{}",
            trace.n_layers(),
            trace.n_heads()
        )));
    }
    let ht = trace.head(layer, head);
    let samples =
        sample_top_attention_pairs(&ht.scores, layer, head, cfg.sampling.per_query_k)?;
    let pairs = cfg.decompose.pairs.min(samples.len());

    let half = trace.head_dim() / 2;
    let mut csv = String::from("query_pos,key_pos,distance,attention_score,sum_g");
    for i in 0..half {
        write!(csv, ",g{i}").unwrap();
    }
    csv.push('\n');
    for sample in &samples[..pairs] {
        let h = hadamard_contrib(ht.q_rot.row(sample.query_pos), ht.k_rot.row(sample.key_pos))?;
        let g = pair_contributions(&h, sample.query_pos as u64, sample.key_pos as u64)?;
        write!(
            csv,
            "{},{},{},{},{}",
            sample.query_pos,
            sample.key_pos,
            sample.query_pos - sample.key_pos,
            fmt_f64(sample.attention_score),
            fmt_f64(g.total()),
        )
        .unwrap();
        for v in &g.values {
            write!(csv, ",{}", fmt_f64(*v)).unwrap();
        }
        csv.push('\n');
    }
    run.write_file(&format!("decompose_L{layer}_H{head}.csv"), &csv)
}

fn dominant(cfg: &ExperimentConfig, run: &mut RunDir) -> Result<(), CliError> {
    let trace = obtain_trace(cfg)?;
    let rows = per_head(trace.n_layers(), trace.n_heads(), |l, h| {
        head_dominant_records(&trace, l, h, cfg.sampling.per_query_k).map_err(CliError::from)
    })?;
    let mut csv = String::from("layer,head,query_pos,key_pos,distance,dominant_dim\n");
    for records in rows {
        for r in records {
            writeln!(
                csv,
                "{},{},{},{},{},{}",
                r.sample.layer,
                r.sample.head,
                r.sample.query_pos,
                r.sample.key_pos,
                r.sample.query_pos - r.sample.key_pos,
                fmt_f64(r.dominant_dim)
            )
            .unwrap();
        }
    }
    run.write_file("dominant.csv", &csv)
}

fn corr(cfg: &ExperimentConfig, run: &mut RunDir) -> Result<(), CliError> {
    let trace = obtain_trace(cfg)?;
    let curves = curves_for(&trace, cfg.sampling.per_query_k)?;
    for curve in &curves {
        let mut csv = String::from("distance,mean_dominant_dim\n");
        for &(d, v) in &curve.points {
            writeln!(csv, "{d},{}", fmt_f64(v)).unwrap();
        }
        run.write_file(
            &format!("distance_curve_L{}_H{}.csv", curve.layer, curve.head),
            &csv,
        )?;
    }
    Ok(())
}

fn heatmap(cfg: &ExperimentConfig, run: &mut RunDir) -> Result<(), CliError> {
    let trace = obtain_trace(cfg)?;
    let pairs = sample_random_pairs(trace.seq_len(), cfg.sampling.rate, cfg.sampling.seed)?;
    let per_head_dims = per_head(trace.n_layers(), trace.n_heads(), |l, h| {
        head_top_dims(&trace, l, h, &pairs, cfg.analysis.top_k).map_err(CliError::from)
    })?;
    let records: Vec<_> = per_head_dims.into_iter().flatten().collect();
    let grid = dimension_heatmap(&records, trace.n_layers(), trace.n_heads())?;
    let mut csv = String::from("layer,head,mean_top5_dim\n");
    for (l, row) in grid.iter().enumerate() {
        for (h, cell) in row.iter().enumerate() {
            let value = cell.map(fmt_f64).unwrap_or_else(|| "NaN".into());
            writeln!(csv, "{l},{h},{value}").unwrap();
        }
    }
    run.write_file("heatmap.csv", &csv)
}

fn head_scores_csv(scores: &[HeadScore]) -> String {
    let mut csv = String::from("layer,head,rho,n_points\n");
    for s in scores {
        let rho = s.rho.map(fmt_f64).unwrap_or_else(|| "NaN".into());
        writeln!(csv, "{},{},{rho},{}", s.layer, s.head, s.n_points).unwrap();
    }
    csv
}

fn score_heads_cmd(cfg: &ExperimentConfig, run: &mut RunDir) -> Result<(), CliError> {
    let trace = obtain_trace(cfg)?;
    let curves = curves_for(&trace, cfg.sampling.per_query_k)?;
    let scores = score_heads(&curves, ranking(cfg));
    run.write_file("head_scores.csv", &head_scores_csv(&scores))
}

fn ppl_rows(
    model: &Model,
    prompts: &[Vec<u32>],
    mask: &MaskSet,
    variant: &str,
    disable_query_rotation: bool,
    csv: &mut String,
) -> Result<(), CliError> {
    for (i, tokens) in prompts.iter().enumerate() {
        let options = ForwardOptions {
            mask: mask.clone(),
            disable_query_rotation,
            capture_trace: false,
        };
        let ppl = model.perplexity(tokens, &options)?;
        writeln!(csv, "{variant},{i},{},{}", tokens.len(), fmt_f64(ppl)).unwrap();
    }
    Ok(())
}

fn passkey_rows(
    model: &Model,
    cfg: &ExperimentConfig,
    mask: &MaskSet,
    variant: &str,
    csv: &mut String,
) -> Result<(), CliError> {
    let tokenizer = ByteTokenizer;
    for trial in 0..cfg.passkey.trials {
        let prompt = passkey_make(
            cfg.passkey.context_len,
            cfg.passkey.key_digits,
            cfg.passkey.seed.wrapping_add(trial as u64),
        )?;
        let tokens = tokenizer.encode(&prompt.text);
        let options = ForwardOptions {
            mask: mask.clone(),
            disable_query_rotation: cfg.disable_query_rotation,
            capture_trace: false,
        };
        let generated =
            model.greedy_generate(&tokens, cfg.passkey.key_digits + 2, &options)?;
        let output = tokenizer.decode(&generated);
        let digits: String = {
            let bytes = output.as_bytes();
            match bytes.iter().position(u8::is_ascii_digit) {
                Some(start) => bytes[start..]
                    .iter()
                    .take_while(|b| b.is_ascii_digit())
                    .map(|&b| char::from(b))
                    .collect(),
                None => String::new(),
            }
        };
        let score = passkey_score(&output, &prompt.answer);
        writeln!(
            csv,
            "{variant},{trial},{},{},{digits},{score}",
            fmt_f64(prompt.depth_fraction),
            prompt.answer,
        )
        .unwrap();
    }
    Ok(())
}

fn mask_eval(cfg: &ExperimentConfig, run: &mut RunDir) -> Result<(), CliError> {
    let model = build_model(cfg)?;
    let prompts = read_prompts(cfg)?;
    let trace = obtain_trace(cfg)?;
    let scores = match cfg.mask.strategy {
        MaskMode::Top => {
            let curves = curves_for(&trace, cfg.sampling.per_query_k)?;
            Some(score_heads(&curves, ranking(cfg)))
        }
        _ => None,
    };
    let mask = resolve_mask(
        cfg,
        scores.as_deref(),
        model.config().n_layers,
        model.config().n_heads,
    )?;

    let mut mask_csv = String::from("layer,head\n");
    for &(l, h) in &mask.entries {
        writeln!(mask_csv, "{l},{h}").unwrap();
    }
    run.write_file("mask_set.csv", &mask_csv)?;

    let empty = MaskSet::empty();
    let mut eval_csv = String::from("variant,prompt_index,n_tokens,ppl\n");
    ppl_rows(
        &model,
        &prompts,
        &empty,
        "baseline",
        cfg.disable_query_rotation,
        &mut eval_csv,
    )?;
    ppl_rows(
        &model,
        &prompts,
        &mask,
        "masked",
        cfg.disable_query_rotation,
        &mut eval_csv,
    )?;
    run.write_file("mask_eval.csv", &eval_csv)?;

    if cfg.passkey.trials > 0 {
        let mut pk_csv = String::from("variant,trial,depth_fraction,answer,output_digits,score\n");
        passkey_rows(&model, cfg, &empty, "baseline", &mut pk_csv)?;
        passkey_rows(&model, cfg, &mask, "masked", &mut pk_csv)?;
        run.write_file("mask_passkey.csv", &pk_csv)?;
    }
    Ok(())
}

fn passkey_cmd(cfg: &ExperimentConfig, run: &mut RunDir) -> Result<(), CliError> {
    let model = build_model(cfg)?;
    let scores = match cfg.mask.strategy {
        MaskMode::Top => {
            let trace = obtain_trace_for_masking(cfg, &model)?;
            let curves = curves_for(&trace, cfg.sampling.per_query_k)?;
            Some(score_heads(&curves, ranking(cfg)))
        }
        _ => None,
    };
    let mask = resolve_mask(
        cfg,
        scores.as_deref(),
        model.config().n_layers,
        model.config().n_heads,
    )?;
    let mut csv = String::from("variant,trial,depth_fraction,answer,output_digits,score\n");
    let variant = if mask.is_empty() { "baseline" } else { "masked" };
    passkey_rows(&model, cfg, &mask, variant, &mut csv)?;
    run.write_file("passkey.csv", &csv)
}

/// Trace source for top-mask selection in ppl/passkey runs: the configured
/// dump or prompts when present, otherwise the first pass-key prompt.
fn obtain_trace_for_masking(
    cfg: &ExperimentConfig,
    model: &Model,
) -> Result<ActivationTrace, CliError> {
    if cfg.input.dump.is_some()
        || cfg.input.prompt_text.is_some()
        || !cfg.input.prompt_paths.is_empty()
    {
        return obtain_trace(cfg);
    }
    let prompt = passkey_make(
        cfg.passkey.context_len,
        cfg.passkey.key_digits,
        cfg.passkey.seed,
    )?;
    let options = ForwardOptions {
        capture_trace: true,
        disable_query_rotation: cfg.disable_query_rotation,
        ..Default::default()
    };
    let out = model.forward(&ByteTokenizer.encode(&prompt.text), &options)?;
    out.trace
        .ok_or_else(|| CliError::Internal("forward did not return a trace".into()))
}

fn ppl_cmd(cfg: &ExperimentConfig, run: &mut RunDir) -> Result<(), CliError> {
    let model = build_model(cfg)?;
    let prompts = read_prompts(cfg)?;
    let scores = match cfg.mask.strategy {
        MaskMode::Top => {
            let trace = obtain_trace(cfg)?;
            let curves = curves_for(&trace, cfg.sampling.per_query_k)?;
            Some(score_heads(&curves, ranking(cfg)))
        }
        _ => None,
    };
    let mask = resolve_mask(
        cfg,
        scores.as_deref(),
        model.config().n_layers,
        model.config().n_heads,
    )?;
    let variant = if mask.is_empty() { "baseline" } else { "masked" };
    let mut csv = String::from("variant,prompt_index,n_tokens,ppl\n");
    ppl_rows(
        &model,
        &prompts,
        &mask,
        variant,
        cfg.disable_query_rotation,
        &mut csv,
    )?;
    run.write_file("ppl.csv", &csv)
}
