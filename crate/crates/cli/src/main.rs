//! `maclab` experiment driver.
//!
//! Errors are printed to stderr as one JSON line
//! `{"error":<kind>,"exit_code":<n>,"message":<text>}` and the process exits
//! with 2 (configuration or usage), 3 (invariant violation) or 4 (missing
//! artifact).

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

use maclab::env::EnvConfig;
use maclab::eval::{evaluate, Policy};
use maclab::experiment::{
    self, eval_csv, load_symbolic, load_trained, run_dir, ExperimentConfig, ExtractConfig, RunManifest,
    EVAL_EPISODES, MANIFEST_FILE,
};
use maclab::info::{
    mec_brute_force, min_entropy_coupling, semantic_entropy, shannon_entropy, smoothed_entropy,
    von_neumann_entropy, Dist,
};
use maclab::learn::RegSign;
use maclab::symbolic::{edit, parse, remove_conflicts, select_best, Edit, SymbolicProtocol};
use maclab::Error;

#[derive(Parser)]
#[command(name = "maclab", version, about = "Train, extract and analyse learned MAC protocols")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct Common {
    /// Experiment configuration (strict JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Single seed; defaults to every seed of the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the config's output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Regularizer sign.
    #[arg(long, default_value = "pos", value_parser = parse_arm)]
    arm: RegSign,
}

fn parse_arm(s: &str) -> Result<RegSign, String> {
    RegSign::from_arm(s).ok_or_else(|| format!("arm must be pos, neg or off, got `{s}`"))
}

#[derive(Subcommand)]
enum Command {
    /// Train one arm for the selected seeds.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Extract a symbolic protocol from a trained file, or from every run of an arm.
    Extract {
        input: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a trained (`.json`) or symbolic (`.sproto`) protocol.
    Eval {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Argmax execution.
        #[arg(long)]
        deterministic: bool,
        #[arg(long, default_value_t = EVAL_EPISODES)]
        episodes: usize,
    },
    /// Edit a `.sproto` file.
    Manipulate {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Clause id to remove (applied before additions).
        #[arg(long)]
        remove: Vec<usize>,
        /// Clause text to add.
        #[arg(long)]
        add: Vec<String>,
        /// Remove clauses until no two agents can access together.
        #[arg(long)]
        remove_conflicts: bool,
    },
    /// Pick the protocol with the lowest semantic entropy.
    Select {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Minimum-entropy coupling of marginals given as `{"marginals": [[..], ..]}`.
    Mec { input: Option<PathBuf> },
    /// Entropies of a `.sproto` file or of `{"probs"|"counts"|"contexts": ..}`.
    Entropy { input: Option<PathBuf> },
    /// Aggregate all runs under the output directory into one JSON report.
    Report {
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let message = e.to_string();
            let first = message.lines().next().unwrap_or("usage error");
            return fail("usage", 2, first.trim_start_matches("error: "));
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, code) = classify(&e);
            fail(kind, code, &e.to_string())
        }
    }
}

fn fail(kind: &str, code: u8, message: &str) -> ExitCode {
    eprintln!("{}", json!({"error": kind, "exit_code": code, "message": message}));
    ExitCode::from(code)
}

fn classify(e: &Error) -> (&'static str, u8) {
    match e {
        Error::Config { .. } => ("config", 2),
        Error::MissingArtifact(_) => ("missing_artifact", 4),
        Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => ("missing_artifact", 4),
        Error::Syntax { .. } => ("syntax", 3),
        _ => ("invariant", 3),
    }
}

type Res<T> = maclab::Result<T>;

fn run(command: Command) -> Res<()> {
    match command {
        Command::Train { common } => train(&common),
        Command::Extract { input, common } => extract(input, &common),
        Command::Eval {
            input,
            common,
            deterministic,
            episodes,
        } => eval(&input, &common, deterministic, episodes),
        Command::Manipulate {
            input,
            out,
            remove,
            add,
            remove_conflicts,
        } => manipulate(&input, &out, &remove, &add, remove_conflicts),
        Command::Select { inputs, out } => select(&inputs, out.as_deref()),
        Command::Mec { input } => mec(input.as_deref()),
        Command::Entropy { input } => entropy(input.as_deref()),
        Command::Report { common } => report(&common),
    }
}

fn load_config(common: &Common) -> Res<ExperimentConfig> {
    let path = common.config.as_ref().ok_or_else(|| Error::Config {
        field: "config",
        reason: "--config is required".into(),
    })?;
    ExperimentConfig::load(path)
}

fn seeds(cfg: &ExperimentConfig, common: &Common) -> Vec<u64> {
    common.seed.map_or_else(|| cfg.seeds.clone(), |s| vec![s])
}

fn out_root(cfg: Option<&ExperimentConfig>, common: &Common) -> Res<PathBuf> {
    common
        .out
        .clone()
        .or_else(|| cfg.map(|c| c.output_dir.clone()))
        .ok_or_else(|| Error::Config {
            field: "out",
            reason: "--out or --config is required".into(),
        })
}

/// Runs `job` for every seed on its own thread; results are merged in seed order.
fn per_seed<F>(seeds: &[u64], job: F) -> Res<Vec<(u64, Vec<PathBuf>)>>
where
    F: Fn(u64) -> Res<Vec<PathBuf>> + Sync,
{
    let results: Vec<Res<Vec<PathBuf>>> = std::thread::scope(|scope| {
        let job = &job;
        let handles: Vec<_> = seeds.iter().map(|&s| scope.spawn(move || job(s))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("seed worker panicked"))
            .collect()
    });
    let mut out: Vec<(u64, Vec<PathBuf>)> = Vec::new();
    for (&s, r) in seeds.iter().zip(results) {
        out.push((s, r?));
    }
    out.sort_by_key(|(s, _)| *s);
    Ok(out)
}

fn write_manifest(cfg: &ExperimentConfig, dir: &Path, files: Vec<(u64, Vec<PathBuf>)>, start: Instant) -> Res<()> {
    let mut manifest = RunManifest::new(cfg.hash());
    manifest.files.extend(files);
    manifest.wall_clock_secs = start.elapsed().as_secs_f64();
    std::fs::create_dir_all(dir)?;
    manifest.write_merged(&dir.join(MANIFEST_FILE))?;
    Ok(())
}

fn train(common: &Common) -> Res<()> {
    let cfg = load_config(common)?;
    let root = out_root(Some(&cfg), common)?;
    let start = Instant::now();
    let files = per_seed(&seeds(&cfg, common), |s| {
        experiment::run_train(&cfg, common.arm, s, &run_dir(&root, common.arm, s))
    })?;
    write_manifest(&cfg, &root.join(common.arm.arm()), files, start)
}

fn extract(input: Option<PathBuf>, common: &Common) -> Res<()> {
    let cfg = common.config.as_ref().map(|p| ExperimentConfig::load(p)).transpose()?;
    let params = cfg.as_ref().map_or_else(ExtractConfig::default, |c| c.extract);
    match input {
        Some(path) => {
            let dir = match &common.out {
                Some(d) => d.clone(),
                None => path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf),
            };
            let files = experiment::run_extract(&path, &params, common.seed.unwrap_or(0), &dir)?;
            for f in files {
                println!("{}", f.display());
            }
            Ok(())
        }
        None => {
            let cfg = cfg.ok_or_else(|| Error::Config {
                field: "config",
                reason: "either an input file or --config is required".into(),
            })?;
            let root = out_root(Some(&cfg), common)?;
            let start = Instant::now();
            let files = per_seed(&seeds(&cfg, common), |s| {
                let dir = run_dir(&root, common.arm, s);
                experiment::run_extract(&dir.join(experiment::TRAINED_FILE), &params, s, &dir)
            })?;
            write_manifest(&cfg, &root.join(common.arm.arm()), files, start)
        }
    }
}

fn is_symbolic(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "sproto")
}

fn eval(input: &Path, common: &Common, deterministic: bool, episodes: usize) -> Res<()> {
    let cfg = common.config.as_ref().map(|p| ExperimentConfig::load(p)).transpose()?;
    let seed = common.seed.unwrap_or(0);
    let (label, stats) = if is_symbolic(input) {
        let p = load_symbolic(input)?;
        let env = cfg.map_or_else(EnvConfig::default, |c| c.env);
        ("symbolic", evaluate(&Policy::Symbolic(&p), &env, episodes, deterministic, seed)?)
    } else {
        let p = load_trained(input)?;
        ("neural", evaluate(&Policy::Neural(&p), &p.env, episodes, deterministic, seed)?)
    };
    let csv = eval_csv(&[(label.to_string(), stats)]);
    emit(common.out.as_deref(), "eval.csv", &csv)
}

fn emit(dir: Option<&Path>, name: &str, text: &str) -> Res<()> {
    match dir {
        Some(d) => {
            std::fs::create_dir_all(d)?;
            std::fs::write(d.join(name), text)?;
            println!("{}", d.join(name).display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn single_clause(text: &str) -> Res<maclab::symbolic::Clause> {
    let p = parse(text)?;
    match p.clauses() {
        [c] => Ok(c.clone()),
        _ => Err(Error::Validation(format!("expected exactly one clause in `{text}`"))),
    }
}

fn manipulate(input: &Path, out: &Path, remove: &[usize], add: &[String], conflicts: bool) -> Res<()> {
    let original = load_symbolic(input)?;
    let mut p = original.clone();
    // descending ids keep earlier removals from shifting later ones
    let mut ids = remove.to_vec();
    ids.sort_unstable_by(|a, b| b.cmp(a));
    ids.dedup();
    for id in ids {
        p = edit(&p, &Edit::Remove(id))?;
    }
    for text in add {
        p = edit(&p, &Edit::Add(single_clause(text)?))?;
    }
    let mut removed = Vec::new();
    let mut added = Vec::new();
    if conflicts {
        let r = remove_conflicts(&p)?;
        removed = r.removed.iter().map(ToString::to_string).collect();
        added = r.added.iter().map(ToString::to_string).collect();
        p = r.protocol;
    }
    let path = if is_symbolic(out) { out.to_path_buf() } else { out.join("edited.sproto") };
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(&path, p.to_text())?;
    println!(
        "{}",
        json!({
            "output": path,
            "clauses_before": original.len(),
            "clauses_after": p.len(),
            "conflict_removed": removed,
            "conflict_added": added,
        })
    );
    Ok(())
}

fn select(inputs: &[PathBuf], out: Option<&Path>) -> Res<()> {
    let candidates: Vec<SymbolicProtocol> = inputs.iter().map(|p| load_symbolic(p)).collect::<Res<_>>()?;
    let best = select_best(&candidates)?;
    let rows: Vec<_> = inputs
        .iter()
        .zip(&candidates)
        .map(|(path, c)| {
            Ok(json!({
                "path": path,
                "clauses": c.len(),
                "semantic_entropy": semantic_entropy(&c.contexts())?,
            }))
        })
        .collect::<Res<_>>()?;
    let record = json!({
        "selected_index": best,
        "selected_path": inputs[best],
        "rule": "minimum semantic entropy, ties to the lowest index",
        "candidates": rows,
    });
    emit(out, "selection.json", &format!("{}\n", serde_json::to_string_pretty(&record)?))
}

fn read_input(input: Option<&Path>) -> Res<String> {
    match input {
        Some(p) => {
            if !p.exists() {
                return Err(Error::MissingArtifact(vec![p.to_path_buf()]));
            }
            Ok(std::fs::read_to_string(p)?)
        }
        None => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s)?;
            Ok(s)
        }
    }
}

fn config_json<T: for<'de> Deserialize<'de>>(text: &str) -> Res<T> {
    serde_json::from_str(text).map_err(|e| Error::Config {
        field: "input",
        reason: e.to_string(),
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MecInput {
    marginals: Vec<Vec<f64>>,
}

fn mec(input: Option<&Path>) -> Res<()> {
    let parsed: MecInput = config_json(&read_input(input)?)?;
    let marginals: Vec<Dist> = parsed.marginals.into_iter().map(Dist::new).collect::<Res<_>>()?;
    let table = min_entropy_coupling(&marginals)?;
    let exact = match marginals.as_slice() {
        [p, q] if p.len() <= 3 && q.len() <= 3 => Some(mec_brute_force(p, q)?.entropy()),
        _ => None,
    };
    let cells: Vec<_> = table.cells().iter().map(|(idx, p)| json!({"index": idx, "p": p})).collect();
    let marginal_entropies: Vec<f64> = marginals.iter().map(shannon_entropy).collect();
    println!(
        "{}",
        json!({
            "entropy": table.entropy(),
            "marginal_entropies": marginal_entropies,
            "marginal_error": table.marginal_error(&marginals),
            "exact_entropy": exact,
            "cells": cells,
        })
    );
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, rename_all = "lowercase")]
enum EntropyInput {
    Probs(Vec<f64>),
    Counts { counts: Vec<f64>, alpha: f64 },
    Contexts(Vec<f64>),
}

fn entropy(input: Option<&Path>) -> Res<()> {
    let text = read_input(input)?;
    let value = if input.is_some_and(is_symbolic) {
        let p = parse(&text)?;
        let graph = maclab::extract::protocol_graph(&p)?;
        let n = graph.n();
        let hv = von_neumann_entropy(&graph)?;
        json!({
            "clauses": p.len(),
            "semantic_entropy": semantic_entropy(&p.contexts())?,
            "vertices": n,
            "graph_entropy": hv,
            "log2_n": (n as f64).log2(),
            "within_bound": hv <= (n as f64).log2() + 1e-9,
        })
    } else {
        match config_json::<EntropyInput>(&text)? {
            EntropyInput::Probs(p) => json!({"entropy": shannon_entropy(&Dist::new(p)?)}),
            EntropyInput::Counts { counts, alpha } => {
                if !(alpha > 0.0) || counts.iter().any(|c| !(*c >= 0.0)) {
                    return Err(Error::Contract("counts must be nonnegative and alpha positive".into()));
                }
                json!({"entropy": smoothed_entropy(&counts, alpha)})
            }
            EntropyInput::Contexts(c) => json!({"semantic_entropy": semantic_entropy(&c)?}),
        }
    };
    println!("{value}");
    Ok(())
}

fn report(common: &Common) -> Res<()> {
    let cfg = load_config(common)?;
    let root = out_root(Some(&cfg), common)?;
    let r = experiment::report(&cfg, &root)?;
    let text = format!("{}\n", serde_json::to_string_pretty(&r)?);
    std::fs::create_dir_all(&root)?;
    std::fs::write(root.join("report.json"), &text)?;
    print!("{text}");
    Ok(())
}
