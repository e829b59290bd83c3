use std::io::Write;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use dchi::analysis::{
    deniability_stats, geometry_profile, inversion_attack, perturbation_examples, stride_sample,
};
use dchi::mlm::{generate_pretraining_examples, PretrainConfig};
use dchi::probe::{eval_probe_correct, load_tsv, train_probe, Privatization, ProbeConfig};
use dchi::rng::{context, derive_context};
use dchi::stats::{mean, proportion_se, std_error};
use dchi::{
    detokenize, load_table, tokenize, EmbeddingTable, PrivacyParams, Privatizer, StreamFamily, TokenId,
};

use crate::output::{write_report, AtomicFile, RunInfo};
use crate::{
    DeniabilityArgs, ExamplesArgs, GeometryArgs, InversionArgs, PretrainArgs, PrivatizeArgs, ProbeArgs,
    TableArgs,
};

/// Everything that determines an artifact's content.
#[derive(Serialize)]
struct RunConfig<'a, A: Serialize> {
    command: &'static str,
    #[serde(flatten)]
    args: &'a A,
}

fn open_table(args: &TableArgs) -> Result<EmbeddingTable> {
    load_table(&args.table, args.format).with_context(|| format!("loading {}", args.table.display()))
}

fn privatizer<'a>(table: &'a EmbeddingTable, args: &TableArgs, eta: f64) -> Result<Privatizer<'a>> {
    let params = PrivacyParams::new(eta, table.dim(), args.seed)?;
    Ok(Privatizer::new(table, params)?.with_candidates(args.candidates))
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().map(str::to_owned).collect())
}

fn read_corpus(path: &Path, table: &EmbeddingTable, max_len: usize) -> Result<Vec<Vec<TokenId>>> {
    read_lines(path)?
        .par_iter()
        .enumerate()
        .map(|(i, line)| tokenize(line, table, max_len).with_context(|| format!("{}:{}", path.display(), i + 1)))
        .collect()
}

/// Write a JSONL file whose first line is the run header.
fn write_jsonl<C: Serialize, R: Serialize>(dest: &Path, config: &C, records: &[R]) -> Result<()> {
    let mut f = AtomicFile::create(dest)?;
    serde_json::to_writer(&mut f, &serde_json::json!({ "run": RunInfo::new(config) }))?;
    writeln!(f)?;
    for r in records {
        serde_json::to_writer(&mut f, r)?;
        writeln!(f)?;
    }
    f.commit()
}

#[derive(Serialize)]
struct PrivatizedLine {
    line: usize,
    original_ids: Vec<TokenId>,
    privatized_ids: Vec<TokenId>,
    text: String,
}

pub fn privatize(args: &PrivatizeArgs) -> Result<()> {
    let config = RunConfig { command: "privatize", args };
    let table = open_table(&args.table)?;
    let pr = privatizer(&table, &args.table, args.eta)?;
    let corpus = read_corpus(&args.input, &table, args.max_len)?;
    let records: Vec<PrivatizedLine> = corpus
        .into_par_iter()
        .enumerate()
        .map(|(d, ids)| {
            let family = StreamFamily::new(args.table.seed, derive_context(context::PRIVATIZE, d as u64), 0);
            let privatized = pr.privatize_text(&ids, family)?;
            Ok(PrivatizedLine {
                line: d + 1,
                text: detokenize(&privatized, &table)?,
                original_ids: ids,
                privatized_ids: privatized,
            })
        })
        .collect::<Result<_>>()?;
    write_jsonl(&args.out, &config, &records)
}

#[derive(Serialize)]
struct GeometryRow {
    eta: f64,
    k: usize,
    avg_noise_norm: f64,
    avg_knn_distance: f64,
    ratio: f64,
}

pub fn geometry(args: &GeometryArgs) -> Result<()> {
    let config = RunConfig { command: "report geometry", args };
    let table = open_table(&args.table)?;
    let sample = args.sample.map(|n| stride_sample(&table, n));
    let report = geometry_profile(&table, &args.eta, &args.k, args.trials, args.table.seed, sample.as_deref())?;
    let mut rows = Vec::new();
    for (&eta, &noise) in report.eta_list.iter().zip(&report.avg_noise_norm) {
        for (&k, &dist) in report.k_list.iter().zip(&report.avg_knn_distance) {
            rows.push(GeometryRow { eta, k, avg_noise_norm: noise, avg_knn_distance: dist, ratio: noise / dist });
        }
    }
    write_report(&args.out, &config, &report, &rows)
}

#[derive(Serialize)]
struct DeniabilityRow<'a> {
    eta: f64,
    id: TokenId,
    token: &'a str,
    n_w: u32,
    s_w: u32,
}

pub fn deniability(args: &DeniabilityArgs) -> Result<()> {
    let config = RunConfig { command: "report deniability", args };
    ensure!(args.trials > 0, "--trials must be at least 1");
    let table = open_table(&args.table)?;
    let sample = args.sample.map(|n| stride_sample(&table, n));
    let reports = args
        .eta
        .iter()
        .map(|&eta| Ok(deniability_stats(&privatizer(&table, &args.table, eta)?, args.trials, sample.as_deref())?))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<DeniabilityRow> = reports
        .iter()
        .flat_map(|r| {
            r.tokens.iter().map(move |t| DeniabilityRow {
                eta: r.eta,
                id: t.id,
                token: &t.token,
                n_w: t.n_w,
                s_w: t.s_w,
            })
        })
        .collect();
    write_report(&args.out, &config, &reports, &rows)
}

#[derive(Serialize)]
struct InversionRow {
    eta: f64,
    total: u64,
    correct: u64,
    accuracy: f64,
    std_error: f64,
}

pub fn inversion(args: &InversionArgs) -> Result<()> {
    let config = RunConfig { command: "report inversion", args };
    let table = open_table(&args.table)?;
    let corpus = read_corpus(&args.input, &table, args.max_len)?;
    let reports = args
        .eta
        .iter()
        .map(|&eta| Ok(inversion_attack(&privatizer(&table, &args.table, eta)?, &corpus)?))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<InversionRow> = reports
        .iter()
        .map(|r| InversionRow {
            eta: r.eta,
            total: r.total,
            correct: r.correct,
            accuracy: r.accuracy,
            std_error: proportion_se(r.accuracy, r.total as usize),
        })
        .collect();
    write_report(&args.out, &config, &reports, &rows)
}

#[derive(Serialize)]
struct ExampleRow<'a> {
    eta: f64,
    position: usize,
    token: &'a str,
    output: &'a str,
    count: u32,
}

pub fn examples(args: &ExamplesArgs) -> Result<()> {
    let config = RunConfig { command: "report examples", args };
    let table = open_table(&args.table)?;
    let seq = tokenize(&args.text, &table, args.max_len)?;
    ensure!(!seq.is_empty(), "--text produced no tokens");
    let results = perturbation_examples(&table, &seq, &args.eta, args.trials, args.top_k, args.table.seed)?;
    let rows: Vec<ExampleRow> = results
        .iter()
        .flat_map(|e| {
            e.histograms.iter().flat_map(move |h| {
                h.top.iter().map(move |o| ExampleRow {
                    eta: e.eta,
                    position: h.position,
                    token: &h.token,
                    output: &o.token,
                    count: o.count,
                })
            })
        })
        .collect();
    write_report(&args.out, &config, &results, &rows)
}

pub fn gen_pretrain(args: &PretrainArgs) -> Result<()> {
    let config = RunConfig { command: "gen-pretrain", args };
    ensure!((0.0..=1.0).contains(&args.mask_rate), "--mask-rate must lie in [0, 1]");
    ensure!(args.prob_draws > 0, "--prob-draws must be at least 1");
    let table = open_table(&args.table)?;
    let pr = privatizer(&table, &args.table, args.eta)?;
    let corpus = read_corpus(&args.input, &table, args.max_len)?;
    let pretrain = PretrainConfig {
        mask_rate: args.mask_rate,
        max_predictions: (args.max_predictions > 0).then_some(args.max_predictions),
        prob_draws: args.prob_draws,
        mode: args.mode,
        trial: args.trial,
    };
    let examples = generate_pretraining_examples(&corpus, &pr, &pretrain)?;
    write_jsonl(&args.out, &config, &examples)
}

#[derive(Debug, Clone, Serialize)]
struct ProbeRow {
    /// Absent for the unprivatized upper-bound rows.
    eta: Option<f64>,
    mode: Privatization,
    seed: u64,
    accuracy: f64,
    std_error: f64,
    train_accuracy: f64,
    /// Clean-trained probe evaluated on the same privatized inputs.
    clean_accuracy: Option<f64>,
    /// Paired per-example difference `accuracy - clean_accuracy` and its SE.
    gain_over_clean: Option<f64>,
    gain_std_error: Option<f64>,
}

#[derive(Serialize)]
struct ProbeSummary {
    eta: Option<f64>,
    mode: Privatization,
    runs: usize,
    mean_accuracy: f64,
    std_error: f64,
    mean_clean_accuracy: Option<f64>,
}

#[derive(Serialize)]
struct ProbeResults {
    train_size: usize,
    eval_size: usize,
    rows: Vec<ProbeRow>,
    summary: Vec<ProbeSummary>,
}

fn hit_rate(hits: &[bool]) -> f64 {
    hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64
}

pub fn probe(args: &ProbeArgs) -> Result<()> {
    let config = RunConfig { command: "probe", args };
    ensure!(args.runs > 0, "--runs must be at least 1");
    if args.modes.contains(&Privatization::None) {
        bail!("--mode none is implied; the unprivatized rows are always reported");
    }
    let mut modes = Vec::new();
    for &m in &args.modes {
        if !modes.contains(&m) {
            modes.push(m);
        }
    }
    let table = open_table(&args.table)?;
    let train = load_tsv(&args.train, &table, args.max_len)?;
    let eval = load_tsv(&args.eval, &table, args.max_len)?;
    ensure!(!eval.is_empty(), "{} has no examples", args.eval.display());

    let seeds: Vec<u64> = (0..args.runs).map(|r| args.table.seed.wrapping_add(r)).collect();
    let probe_config = |seed| ProbeConfig {
        learning_rate: args.learning_rate,
        epochs: args.epochs,
        batch_size: args.batch_size,
        l2: args.l2,
        standardize: true,
        seed,
    };
    let base = |seed| PrivacyParams::new(args.eta[0], table.dim(), seed);
    let clean_models = seeds
        .par_iter()
        .map(|&seed| Ok(train_probe(&train, &table, Privatization::None, &base(seed)?, &probe_config(seed))?))
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for (&seed, clean) in seeds.iter().zip(&clean_models) {
        let hits = eval_probe_correct(clean, &eval, &table, Privatization::None, &base(seed)?)?;
        let acc = hit_rate(&hits);
        rows.push(ProbeRow {
            eta: None,
            mode: Privatization::None,
            seed,
            accuracy: acc,
            std_error: proportion_se(acc, hits.len()),
            train_accuracy: clean.train_accuracy,
            clean_accuracy: None,
            gain_over_clean: None,
            gain_std_error: None,
        });
    }

    let n_runs = seeds.len();
    let cells: Vec<(f64, Privatization, usize)> = args
        .eta
        .iter()
        .flat_map(|&eta| modes.iter().flat_map(move |&m| (0..n_runs).map(move |s| (eta, m, s))))
        .collect();
    let grid = cells
        .par_iter()
        .map(|&(eta, mode, s)| {
            let seed = seeds[s];
            let params = base(seed)?.with_eta(eta)?;
            let model = train_probe(&train, &table, mode, &params, &probe_config(seed))?;
            let hits = eval_probe_correct(&model, &eval, &table, mode, &params)?;
            let clean_hits = eval_probe_correct(&clean_models[s], &eval, &table, mode, &params)?;
            let diffs: Vec<f64> = hits
                .iter()
                .zip(&clean_hits)
                .map(|(&a, &b)| f64::from(u8::from(a)) - f64::from(u8::from(b)))
                .collect();
            let acc = hit_rate(&hits);
            Ok(ProbeRow {
                eta: Some(eta),
                mode,
                seed,
                accuracy: acc,
                std_error: proportion_se(acc, hits.len()),
                train_accuracy: model.train_accuracy,
                clean_accuracy: Some(hit_rate(&clean_hits)),
                gain_over_clean: Some(mean(&diffs)),
                gain_std_error: Some(std_error(&diffs)),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.extend(grid);

    let mut summary = Vec::new();
    let keys = std::iter::once((None, Privatization::None))
        .chain(args.eta.iter().flat_map(|&e| modes.iter().map(move |&m| (Some(e), m))));
    for (eta, mode) in keys {
        let group: Vec<&ProbeRow> = rows.iter().filter(|r| r.eta == eta && r.mode == mode).collect();
        let accs: Vec<f64> = group.iter().map(|r| r.accuracy).collect();
        let clean: Vec<f64> = group.iter().filter_map(|r| r.clean_accuracy).collect();
        summary.push(ProbeSummary {
            eta,
            mode,
            runs: group.len(),
            mean_accuracy: mean(&accs),
            std_error: if accs.len() > 1 { std_error(&accs) } else { group[0].std_error },
            mean_clean_accuracy: (!clean.is_empty()).then(|| mean(&clean)),
        });
    }

    let results = ProbeResults { train_size: train.len(), eval_size: eval.len(), rows, summary };
    write_report(&args.out, &config, &results, &results.rows)
}
