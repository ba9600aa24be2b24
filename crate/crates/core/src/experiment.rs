//! Experiment plumbing: strict JSON configuration, the on-disk run layout,
//! per-seed pipelines, manifests, and the aggregated acceptance report.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::EnvConfig;
use crate::error::{contract, Error, Result};
use crate::eval::{evaluate, fidelity, EvalStats, Policy};
use crate::extract::{
    assign_context, build_protocol, extract_table, simplify, ClusterMap, SimplifyOptions,
    DEFAULT_MIN_FREQUENCY, DEFAULT_ROLLOUTS, DEFAULT_TV_THRESHOLD,
};
use crate::info::{semantic_entropy, von_neumann_entropy, ProtocolGraph};
use crate::learn::{train, RegSign, TrainConfig, TrainedProtocol};
use crate::seeds::derive_seed;
use crate::symbolic::{cost_report, parse, remove_conflicts, select_best, SymbolicProtocol};

pub const TRAINED_FILE: &str = "protocol.json";
pub const CURVES_FILE: &str = "curves.csv";
pub const SPROTO_FILE: &str = "protocol.sproto";
pub const GRAPH_FILE: &str = "graph.json";
pub const EXTRACT_SUMMARY_FILE: &str = "extract.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Slots used for neural/symbolic agreement.
pub const FIDELITY_SLOTS: usize = 1000;
/// Episodes for symbolic evaluation (10^4 slots at the default episode length).
pub const EVAL_EPISODES: usize = 500;
/// Random selections averaged when comparing against entropy-based selection.
pub const RANDOM_DRAWS: usize = 5;

/// Reference vertex counts of the unsimplified and simplified two-UE protocols.
pub const REFERENCE_VERTEX_COUNTS: [usize; 2] = [22, 13];

pub const ARMS: [RegSign; 3] = [RegSign::Penalize, RegSign::Off, RegSign::Reward];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractConfig {
    pub rollouts: usize,
    pub tv_threshold: f64,
    pub min_frequency: f64,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            rollouts: DEFAULT_ROLLOUTS,
            tv_threshold: DEFAULT_TV_THRESHOLD,
            min_frequency: DEFAULT_MIN_FREQUENCY,
        }
    }
}

impl ExtractConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field, reason: &str| {
            Err(Error::Config {
                field,
                reason: reason.to_string(),
            })
        };
        if self.rollouts < 1 {
            return bad("rollouts", "must be at least 1");
        }
        if !(0.0..1.0).contains(&self.tv_threshold) {
            return bad("tv_threshold", "must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.min_frequency) {
            return bad("min_frequency", "must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn options(&self) -> SimplifyOptions {
        SimplifyOptions {
            tv_threshold: self.tv_threshold,
            min_frequency: self.min_frequency,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub env: EnvConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub extract: ExtractConfig,
    pub output_dir: PathBuf,
    pub seeds: Vec<u64>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config {
            field: "config",
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file. Unreadable files are configuration errors.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config {
            field: "config",
            reason: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config {
                field: "seeds",
                reason: "at least one seed required".into(),
            });
        }
        self.env.validate()?;
        self.train.validate()?;
        self.extract.validate()
    }

    /// SHA-256 of the compact JSON serialization.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex(&Sha256::digest(json.as_bytes()))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// `<root>/<arm>/seed_<seed>`
pub fn run_dir(root: &Path, arm: RegSign, seed: u64) -> PathBuf {
    root.join(arm.arm()).join(format!("seed_{seed}"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    /// Output files keyed by seed.
    pub files: BTreeMap<u64, Vec<PathBuf>>,
    pub versions: BTreeMap<String, String>,
    pub wall_clock_secs: f64,
}

impl RunManifest {
    pub fn new(config_hash: String) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("maclab".into(), env!("CARGO_PKG_VERSION").into());
        versions.insert(
            crate::learn::model::PROTOCOL_FORMAT.into(),
            crate::learn::model::PROTOCOL_VERSION.to_string(),
        );
        Self {
            config_hash,
            files: BTreeMap::new(),
            versions,
            wall_clock_secs: 0.0,
        }
    }

    /// Merges into an existing manifest at `path` when the config hash
    /// matches, so seeds run by separate processes accumulate.
    pub fn write_merged(mut self, path: &Path) -> Result<Self> {
        if let Ok(text) = fs::read_to_string(path) {
            if let Ok(old) = serde_json::from_str::<RunManifest>(&text) {
                if old.config_hash == self.config_hash {
                    for (seed, files) in old.files {
                        let merged = self.files.entry(seed).or_default();
                        merged.extend(files);
                        merged.sort();
                        merged.dedup();
                    }
                    self.wall_clock_secs += old.wall_clock_secs;
                }
            }
        }
        self.check()?;
        fs::write(path, serde_json::to_string_pretty(&self)?)?;
        Ok(self)
    }

    /// Fails with the list of listed files that do not exist.
    pub fn check(&self) -> Result<()> {
        let missing: Vec<PathBuf> = self
            .files
            .values()
            .flatten()
            .filter(|p| !p.exists())
            .cloned()
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::MissingArtifact(missing))
        }
    }
}

/// Trains one arm for one seed and writes the protocol and its curves.
pub fn run_train(cfg: &ExperimentConfig, arm: RegSign, seed: u64, dir: &Path) -> Result<Vec<PathBuf>> {
    let train_cfg = TrainConfig {
        reg_sign: arm,
        seed,
        ..cfg.train.clone()
    };
    let out = train(&cfg.env, &train_cfg)?;
    fs::create_dir_all(dir)?;
    let protocol_path = dir.join(TRAINED_FILE);
    let curves_path = dir.join(CURVES_FILE);
    out.protocol.save(&protocol_path)?;
    fs::write(&curves_path, out.curves.to_csv())?;
    Ok(vec![protocol_path, curves_path])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub vertices: usize,
    pub graph_entropy: f64,
    pub log2_n: f64,
}

impl GraphSummary {
    pub fn of(graph: &ProtocolGraph) -> Result<Self> {
        Ok(Self {
            vertices: graph.n(),
            graph_entropy: von_neumann_entropy(graph)?,
            log2_n: (graph.n() as f64).log2(),
        })
    }

    pub fn within_bound(&self) -> bool {
        self.graph_entropy <= self.log2_n + 1e-9
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractSummary {
    pub clauses: usize,
    pub merges: usize,
    pub before: GraphSummary,
    pub after: GraphSummary,
}

/// Extraction with and without simplification; only the simplified
/// protocol is returned.
pub fn extract_with_summary(
    neural: &TrainedProtocol,
    extract: &ExtractConfig,
    seed: u64,
) -> Result<(SymbolicProtocol, ProtocolGraph, ExtractSummary)> {
    let table = extract_table(neural, &neural.env, extract.rollouts, seed)?;
    let identity = ClusterMap::identity(table.num_ues, table.codebook_size);
    let (_, raw_graph) = build_protocol(&assign_context(&table)?, table.levels, &identity, None)?;
    let (simple, map) = simplify(&table, extract.options())?;
    let (symbolic, graph) = build_protocol(
        &assign_context(&simple)?,
        table.levels,
        &map,
        Some(neural.identifier()),
    )?;
    let summary = ExtractSummary {
        clauses: symbolic.len(),
        merges: map.merges(),
        before: GraphSummary::of(&raw_graph)?,
        after: GraphSummary::of(&graph)?,
    };
    Ok((symbolic, graph, summary))
}

/// Extracts from a trained protocol file into `dir`.
pub fn run_extract(trained: &Path, extract: &ExtractConfig, seed: u64, dir: &Path) -> Result<Vec<PathBuf>> {
    let neural = load_trained(trained)?;
    let (symbolic, graph, summary) = extract_with_summary(&neural, extract, seed)?;
    fs::create_dir_all(dir)?;
    let files = vec![dir.join(SPROTO_FILE), dir.join(GRAPH_FILE), dir.join(EXTRACT_SUMMARY_FILE)];
    fs::write(&files[0], symbolic.to_text())?;
    fs::write(&files[1], serde_json::to_string_pretty(&graph)?)?;
    fs::write(&files[2], serde_json::to_string_pretty(&summary)?)?;
    Ok(files)
}

/// Loads a trained protocol, reporting an absent file as a missing artifact.
pub fn load_trained(path: &Path) -> Result<TrainedProtocol> {
    require(&[path.to_path_buf()])?;
    TrainedProtocol::load(path)
}

pub fn load_symbolic(path: &Path) -> Result<SymbolicProtocol> {
    require(&[path.to_path_buf()])?;
    parse(&fs::read_to_string(path)?)
}

fn require(paths: &[PathBuf]) -> Result<()> {
    let missing: Vec<PathBuf> = paths.iter().filter(|p| !p.exists()).cloned().collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::MissingArtifact(missing))
    }
}

pub const EVAL_HEADER: &str =
    "policy,episodes,slots,mean_return,collisions,collision_rate,successes,action_entropy";

/// One CSV row per labelled evaluation, six fractional digits.
pub fn eval_csv(rows: &[(String, EvalStats)]) -> String {
    let mut out = format!("{EVAL_HEADER}\n");
    for (label, s) in rows {
        out.push_str(&format!(
            "{label},{},{},{:.6},{},{:.6},{},{:.6}\n",
            s.episodes,
            s.slots,
            s.mean_return,
            s.collisions,
            s.collision_rate(),
            s.successes,
            s.action_entropy
        ));
    }
    out
}

/// Final-window values read back from a curves CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalWindow {
    pub mean_reward: f64,
    pub h_up: Vec<f64>,
    pub h_u: Vec<f64>,
    /// `up_1..up_n, dn_1..dn_n`
    pub active: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurveSeries {
    pub rewards: Vec<f64>,
    pub last: FinalWindow,
}

pub fn read_curves(path: &Path) -> Result<CurveSeries> {
    require(&[path.to_path_buf()])?;
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| contract("empty curves file"))?.split(',').collect();
    let n = header.iter().filter(|h| h.starts_with("H_m")).count();
    let bad = |msg: &str| contract(format!("{}: {msg}", path.display()));
    let mut rewards = Vec::new();
    let mut last = None;
    for line in lines.filter(|l| !l.is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != header.len() {
            return Err(bad("row width differs from header"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad("non-numeric field"));
        let mean_reward = num(f[1])?;
        rewards.push(mean_reward);
        last = Some(FinalWindow {
            mean_reward,
            h_up: f[2..2 + n].iter().map(|s| num(s)).collect::<Result<_>>()?,
            h_u: f[2 + n..2 + 2 * n].iter().map(|s| num(s)).collect::<Result<_>>()?,
            active: f[2 + 2 * n]
                .split(';')
                .map(|s| s.parse().map_err(|_| bad("bad active codeword field")))
                .collect::<Result<_>>()?,
        });
    }
    let last = last.ok_or_else(|| bad("no rows"))?;
    Ok(CurveSeries { rewards, last })
}

/// Worst-case slack of `H(m_up_j) >= H(U_partner(j))` over UEs. The tolerance
/// is applied by the caller.
pub fn inequality_margin(w: &FinalWindow) -> f64 {
    let n = w.h_up.len();
    (0..n)
        .map(|j| w.h_up[j] - w.h_u[crate::learn::stats::partner(j, n)])
        .fold(f64::INFINITY, f64::min)
}

/// Ordering check on per-arm mean rewards. Without a baseline only `pos > neg`
/// is required; the gap requirement applies when a baseline range is known.
pub fn causality_boost(pos: f64, off: Option<f64>, neg: f64, baseline_range: Option<f64>) -> bool {
    let ordered = match off {
        Some(off) => pos > off && off > neg,
        None => pos > neg,
    };
    let gap = baseline_range.is_none_or(|r| pos - neg >= 0.1 * r);
    ordered && gap
}

/// Selection by minimal semantic entropy versus uniformly random selection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub semantic_entropies: Vec<f64>,
    pub rewards: Vec<f64>,
    pub selected: usize,
    pub selected_reward: f64,
    pub random_draws: Vec<usize>,
    pub random_mean_reward: f64,
    pub pass: bool,
}

pub fn compare_selection(
    candidates: &[SymbolicProtocol],
    env: &EnvConfig,
    seed: u64,
) -> Result<SelectionOutcome> {
    let selected = select_best(candidates)?;
    let mut rewards = Vec::with_capacity(candidates.len());
    for p in candidates {
        let stats = evaluate(&Policy::Symbolic(p), env, EVAL_EPISODES, false, derive_seed(seed, 3))?;
        rewards.push(stats.mean_return);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 4));
    let random_draws: Vec<usize> = (0..RANDOM_DRAWS)
        .map(|_| rng.random_range(0..candidates.len()))
        .collect();
    let random_mean_reward =
        random_draws.iter().map(|&i| rewards[i]).sum::<f64>() / RANDOM_DRAWS as f64;
    Ok(SelectionOutcome {
        semantic_entropies: candidates
            .iter()
            .map(|c| semantic_entropy(&c.contexts()))
            .collect::<Result<_>>()?,
        selected_reward: rewards[selected],
        pass: rewards[selected] >= random_mean_reward,
        rewards,
        selected,
        random_draws,
        random_mean_reward,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolicMetrics {
    pub seed: u64,
    pub fidelity: f64,
    pub compute_ratio: f64,
    pub memory_ratio: f64,
    pub conflicts_removed: usize,
    pub collisions_after_removal: usize,
    pub graph_before: GraphSummary,
    pub graph_after: GraphSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: String,
    pub final_rewards: Vec<f64>,
    pub mean_final_reward: f64,
    pub inequality_margins: Vec<f64>,
    /// Per seed, `up_1..up_n, dn_1..dn_n`.
    pub active_codewords: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceBound {
    pub vertices: usize,
    pub log2_n: f64,
}

/// Aggregated metrics. Values that cannot be computed from the artifacts on
/// disk are `null`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub arms: Vec<ArmSummary>,
    pub baseline_reward_range: f64,
    pub causality_boost: &'static str,
    pub inequality_seeds_satisfied: usize,
    pub sparsified_seeds: usize,
    pub symbolic: Option<Vec<SymbolicMetrics>>,
    pub mean_fidelity: Option<f64>,
    pub graph_bound_violations: Option<usize>,
    pub reference_bounds: Vec<ReferenceBound>,
    pub selection: Option<SelectionOutcome>,
}

/// Tolerance on the entropic inequality, in bits.
pub const INEQUALITY_TOLERANCE: f64 = 0.1;

/// Builds the report from `<root>/<arm>/seed_<s>` directories. Curves for every
/// arm and seed are required; extraction artifacts of the penalized arm are
/// optional and yield nulls when any seed lacks them.
pub fn report(cfg: &ExperimentConfig, root: &Path) -> Result<Report> {
    let required: Vec<PathBuf> = ARMS
        .iter()
        .flat_map(|&arm| {
            cfg.seeds.iter().flat_map(move |&s| {
                let d = run_dir(root, arm, s);
                [d.join(TRAINED_FILE), d.join(CURVES_FILE)]
            })
        })
        .collect();
    require(&required)?;

    let mut arms = Vec::new();
    let mut baseline_curves = Vec::new();
    for &arm in &ARMS {
        let mut final_rewards = Vec::new();
        let mut margins = Vec::new();
        let mut active = Vec::new();
        for &s in &cfg.seeds {
            let series = read_curves(&run_dir(root, arm, s).join(CURVES_FILE))?;
            final_rewards.push(series.last.mean_reward);
            margins.push(inequality_margin(&series.last));
            active.push(series.last.active.clone());
            if arm == RegSign::Off {
                baseline_curves.push(series.rewards);
            }
        }
        arms.push(ArmSummary {
            arm: arm.arm().to_string(),
            mean_final_reward: mean(&final_rewards),
            final_rewards,
            inequality_margins: margins,
            active_codewords: active,
        });
    }
    let baseline_reward_range = curve_range(&baseline_curves);
    let boost = causality_boost(
        arms[0].mean_final_reward,
        Some(arms[1].mean_final_reward),
        arms[2].mean_final_reward,
        Some(baseline_reward_range),
    );
    let pos = &arms[0];
    let inequality_seeds_satisfied = pos
        .inequality_margins
        .iter()
        .filter(|&&m| m >= -INEQUALITY_TOLERANCE)
        .count();
    let codebook = cfg.train.codebook_size;
    let sparsified_seeds = pos
        .active_codewords
        .iter()
        .filter(|a| a.iter().all(|&c| c < codebook))
        .count();

    let extracted: Vec<(u64, PathBuf)> = cfg
        .seeds
        .iter()
        .map(|&s| (s, run_dir(root, RegSign::Penalize, s)))
        .collect();
    let complete = extracted
        .iter()
        .all(|(_, d)| d.join(SPROTO_FILE).exists() && d.join(EXTRACT_SUMMARY_FILE).exists());
    let (symbolic, selection) = if complete {
        let mut metrics = Vec::new();
        let mut candidates = Vec::new();
        for (s, dir) in &extracted {
            let neural = load_trained(&dir.join(TRAINED_FILE))?;
            let sym = load_symbolic(&dir.join(SPROTO_FILE))?;
            let summary: ExtractSummary =
                serde_json::from_str(&fs::read_to_string(dir.join(EXTRACT_SUMMARY_FILE))?)?;
            metrics.push(symbolic_metrics(&neural, &sym, &summary, *s)?);
            candidates.push(sym);
        }
        let selection = compare_selection(&candidates, &cfg.env, cfg.seeds[0])?;
        (Some(metrics), Some(selection))
    } else {
        (None, None)
    };

    Ok(Report {
        config_hash: cfg.hash(),
        seeds: cfg.seeds.clone(),
        causality_boost: if boost { "pass" } else { "fail" },
        baseline_reward_range,
        inequality_seeds_satisfied,
        sparsified_seeds,
        mean_fidelity: symbolic
            .as_ref()
            .map(|m| mean(&m.iter().map(|x| x.fidelity).collect::<Vec<_>>())),
        graph_bound_violations: symbolic.as_ref().map(|m| {
            m.iter()
                .filter(|x| !x.graph_before.within_bound() || !x.graph_after.within_bound())
                .count()
        }),
        symbolic,
        reference_bounds: REFERENCE_VERTEX_COUNTS
            .iter()
            .map(|&n| ReferenceBound {
                vertices: n,
                log2_n: (n as f64).log2(),
            })
            .collect(),
        selection,
        arms,
    })
}

/// Fidelity, costs and conflict removal of one extracted protocol.
pub fn symbolic_metrics(
    neural: &TrainedProtocol,
    symbolic: &SymbolicProtocol,
    summary: &ExtractSummary,
    seed: u64,
) -> Result<SymbolicMetrics> {
    let fid = fidelity(neural, symbolic, FIDELITY_SLOTS, derive_seed(seed, 1))?;
    let cost = cost_report(neural, symbolic)?;
    let removal = remove_conflicts(symbolic)?;
    let stats = evaluate(
        &Policy::Symbolic(&removal.protocol),
        &neural.env,
        EVAL_EPISODES,
        false,
        derive_seed(seed, 2),
    )?;
    Ok(SymbolicMetrics {
        seed,
        fidelity: fid.rate,
        compute_ratio: cost.compute_ratio,
        memory_ratio: cost.memory_ratio,
        conflicts_removed: removal.removed.len(),
        collisions_after_removal: stats.collisions,
        graph_before: summary.before.clone(),
        graph_after: summary.after.clone(),
    })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len().max(1) as f64
}

/// `max - min` of the seed-averaged curve.
pub fn curve_range(curves: &[Vec<f64>]) -> f64 {
    let len = curves.iter().map(Vec::len).min().unwrap_or(0);
    if len == 0 {
        return 0.0;
    }
    let avg: Vec<f64> = (0..len)
        .map(|i| curves.iter().map(|c| c[i]).sum::<f64>() / curves.len() as f64)
        .collect();
    avg.iter().copied().fold(f64::NEG_INFINITY, f64::max) - avg.iter().copied().fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> &'static str {
        r#"{"output_dir": "runs", "seeds": [1, 2]}"#
    }

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = ExperimentConfig::from_json(minimal()).unwrap();
        assert_eq!(cfg.train, TrainConfig::default());
        assert_eq!(cfg.extract.rollouts, 256);
        assert_eq!(cfg.seeds, vec![1, 2]);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        for text in [
            r#"{"output_dir": "r", "seeds": [1], "sedes": [2]}"#,
            r#"{"output_dir": "r", "seeds": [1], "train": {"lr_typo": 0.1}}"#,
            r#"{"output_dir": "r", "seeds": [1], "env": {"num_ue": 2}}"#,
        ] {
            assert!(matches!(ExperimentConfig::from_json(text), Err(Error::Config { .. })), "{text}");
        }
    }

    #[test]
    fn empty_seeds_rejected() {
        let err = ExperimentConfig::from_json(r#"{"output_dir": "r", "seeds": []}"#).unwrap_err();
        assert!(matches!(err, Error::Config { field: "seeds", .. }));
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::from_json(minimal()).unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seeds.push(3);
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn ordering_flag() {
        assert!(causality_boost(0.9, None, 0.4, None));
        assert!(!causality_boost(0.4, None, 0.9, None));
        assert!(causality_boost(3.0, Some(2.0), 1.0, Some(10.0)));
        assert!(!causality_boost(3.0, Some(2.0), 2.5, Some(10.0)));
        assert!(!causality_boost(3.0, Some(3.5), 1.0, Some(10.0)));
    }

    #[test]
    fn curve_range_of_mean() {
        let r = curve_range(&[vec![0.0, 2.0, 4.0], vec![2.0, 2.0, 2.0]]);
        assert!((r - 2.0).abs() < 1e-12);
    }

    #[test]
    fn margin_uses_partner() {
        let w = FinalWindow {
            mean_reward: 0.0,
            h_up: vec![1.0, 2.0],
            h_u: vec![1.5, 0.5],
            active: vec![8; 4],
        };
        // H(up_1) - H(U_2) = 0.5, H(up_2) - H(U_1) = 0.5
        assert!((inequality_margin(&w) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_root_lists_expected_files() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::from_json(minimal()).unwrap();
        match report(&cfg, dir.path()) {
            Err(Error::MissingArtifact(paths)) => {
                assert_eq!(paths.len(), 3 * 2 * 2);
                assert!(paths.iter().any(|p| p.ends_with("pos/seed_1/curves.csv")));
            }
            other => panic!("expected missing artifacts, got {other:?}"),
        }
    }
}
