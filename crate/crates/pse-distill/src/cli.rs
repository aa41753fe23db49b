//! Subcommand implementations behind the `pse-distill` binary: dataset
//! simulation, enrollment, the two training stages, evaluation, and the
//! system-comparison matrix. Diagnostics go to stderr, data to files; heavy
//! commands skip work whose artifacts already exist with a matching config
//! hash.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dsp::StftConfig;
use crate::embed::{compute_dvector, DVector};
use crate::error::{Error, Result};
use crate::loss::{LossConfig, LossVariant};
use crate::metrics::{evaluate_session, session_csv, SessionReport};
use crate::model::PseModel;
use crate::simulate::{
    build_eval_session, write_eval_sessions, write_training_set, Corpus, DatasetManifest,
    MixtureGenerator, Scenario, SyntheticCorpusConfig,
};
use crate::train::{self, RunConfig};
use crate::wav::read_wav;

// ─── Argument surface ───────────────────────────────────────────────────────

#[derive(Parser, Debug)]
#[command(
    name = "pse-distill",
    version,
    about = "Personalized speech enhancement with teacher-gated training",
    after_help = "Set PSE_DISTILL_THREADS to cap worker parallelism."
)]
pub struct Cli {
    /// Seed override for the invoked command.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory override.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,

    /// Run-config TOML for training commands.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render a training set (WAV components + JSONL manifest).
    Simulate {
        /// Corpus directory (speakers/, enroll/, noise/).
        #[arg(long)]
        corpus: PathBuf,
        /// Output dataset directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Hours of audio to render.
        #[arg(long, default_value_t = 0.05)]
        hours: f64,
        /// Inactive-target sample probability.
        #[arg(long, default_value_t = 0.15)]
        its_prob: f64,
        /// Materialize a synthetic corpus with this many speakers if the
        /// corpus directory is missing or empty.
        #[arg(long)]
        synth_speakers: Option<usize>,
    },
    /// Render long-form evaluation sessions for one scenario.
    SimulateEval {
        #[arg(long)]
        scenario: Scenario,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Sessions (one per speaker, round-robin).
        #[arg(long, default_value_t = 4)]
        sessions: usize,
        /// Clips concatenated per session.
        #[arg(long, default_value_t = 8)]
        clips: usize,
        #[arg(long)]
        synth_speakers: Option<usize>,
    },
    /// Compute a speaker embedding from enrollment WAVs.
    Enroll {
        #[arg(long)]
        speaker: String,
        /// Glob over enrollment WAV files.
        #[arg(long)]
        wavs: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stage 1: train the voice-activity teacher.
    TrainPvad {},
    /// Stage 2: train the enhancement model (optionally teacher-gated).
    TrainPse {
        /// Teacher checkpoint (required for gated loss variants).
        #[arg(long)]
        pvad: Option<PathBuf>,
        #[arg(long)]
        loss: Option<LossVariant>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        asym_weight: Option<f64>,
    },
    /// Evaluate a checkpoint on rendered evaluation sessions.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        /// Directory produced by simulate-eval (scenario subdirectories).
        #[arg(long)]
        eval_dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate the full system comparison.
    RunMatrix {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Comma-separated system names (default: b1,b2,s1,s4,s5).
        #[arg(long)]
        systems: Option<String>,
        /// Comma-separated scenarios (default: ts1,ts2,ts3).
        #[arg(long)]
        scenarios: Option<String>,
        #[arg(long)]
        synth_speakers: Option<usize>,
    },
    /// Render a matrix CSV as an aligned text table.
    Report {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

// ─── Shared helpers ─────────────────────────────────────────────────────────

fn required_out(out: Option<PathBuf>, global: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    out.or_else(|| global.clone())
        .ok_or_else(|| Error::Config(format!("{what} needs --out (or global --out-dir)")))
}

fn short_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Skip guard: returns true when `marker` already records `hash` and every
/// listed artifact exists.
fn artifacts_current(marker: &Path, hash: &str, artifacts: &[&Path]) -> bool {
    if !artifacts.iter().all(|p| p.exists()) {
        return false;
    }
    matches!(fs::read_to_string(marker), Ok(existing) if existing.trim() == hash)
}

fn write_marker(marker: &Path, hash: &str) -> Result<()> {
    if let Some(parent) = marker.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(marker, hash)?;
    Ok(())
}

/// Per-cell lock file so concurrent matrix processes cannot collide.
struct CellLock {
    path: PathBuf,
}

impl CellLock {
    fn acquire(path: PathBuf) -> Result<CellLock> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(CellLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Config(format!(
                "{} is locked by another process (remove the stale lock if none is running)",
                path.display()
            ))),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for CellLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Loads the corpus, materializing a synthetic one first when requested and
/// the directory is missing or empty.
fn ensure_corpus(dir: &Path, synth_speakers: Option<usize>, seed: u64) -> Result<Corpus> {
    let missing = !dir.join("speakers").is_dir();
    if missing {
        if let Some(speakers) = synth_speakers {
            eprintln!(
                "corpus {} missing; materializing {} synthetic speakers",
                dir.display(),
                speakers
            );
            let cfg = SyntheticCorpusConfig {
                speakers,
                seed,
                ..SyntheticCorpusConfig::default()
            };
            let corpus = cfg.build();
            corpus.write_to_dir(dir)?;
            return Ok(corpus);
        }
        return Err(Error::MissingPrerequisite(format!(
            "corpus {} not found (pass --synth-speakers N to generate one)",
            dir.display()
        )));
    }
    Corpus::load(dir)
}

fn load_run_config(config: &Option<PathBuf>) -> Result<RunConfig> {
    match config {
        Some(path) => RunConfig::load_toml(path),
        None => Ok(RunConfig::default()),
    }
}

// ─── The experiment matrix ──────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainData {
    Base,
    BaseIts,
}

/// One systems-comparison row: training data regime plus loss settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemSpec {
    pub name: String,
    pub train_data: TrainData,
    pub variant: LossVariant,
    pub tau: f64,
    pub asym_weight: f64,
}

impl SystemSpec {
    pub fn preset(name: &str) -> Result<SystemSpec> {
        let (train_data, variant, tau, asym_weight) = match name.to_ascii_lowercase().as_str() {
            "b1" => (TrainData::Base, LossVariant::Plcpa, 0.5, 0.0),
            "b2" => (TrainData::BaseIts, LossVariant::Plcpa, 0.5, 0.0),
            "s1" => (TrainData::BaseIts, LossVariant::Exclude, 0.5, 0.0),
            "s2" => (TrainData::BaseIts, LossVariant::Exclude, 0.25, 0.0),
            "s3" => (TrainData::BaseIts, LossVariant::Exclude, 0.1, 0.0),
            "s4" => (TrainData::BaseIts, LossVariant::Posterior, 0.5, 0.0),
            "s5" => (TrainData::BaseIts, LossVariant::MixRef, 0.5, 0.0),
            "b1a" => (TrainData::Base, LossVariant::Plcpa, 0.5, 1.0),
            "b2a" => (TrainData::BaseIts, LossVariant::Plcpa, 0.5, 1.0),
            "s4a" => (TrainData::BaseIts, LossVariant::Posterior, 0.5, 1.0),
            other => {
                return Err(Error::Config(format!("unknown system preset '{other}'")));
            }
        };
        Ok(SystemSpec {
            name: name.to_ascii_lowercase(),
            train_data,
            variant,
            tau,
            asym_weight,
        })
    }

    /// Whether this system needs the frozen teacher.
    pub fn needs_teacher(&self) -> bool {
        self.variant != LossVariant::Plcpa
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentMatrix {
    pub systems: Vec<SystemSpec>,
    pub scenarios: Vec<Scenario>,
}

impl ExperimentMatrix {
    pub fn default_matrix() -> ExperimentMatrix {
        ExperimentMatrix {
            systems: ["b1", "b2", "s1", "s4", "s5"]
                .iter()
                .map(|n| SystemSpec::preset(n).unwrap())
                .collect(),
            scenarios: vec![Scenario::Ts1, Scenario::Ts2, Scenario::Ts3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = std::collections::BTreeSet::new();
        for s in &self.systems {
            if !names.insert(s.name.clone()) {
                return Err(Error::Config(format!("duplicate system name '{}'", s.name)));
            }
        }
        if self.systems.is_empty() || self.scenarios.is_empty() {
            return Err(Error::Config("matrix needs systems and scenarios".into()));
        }
        Ok(())
    }
}

/// Session generation parameters for matrix evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixEvalConfig {
    /// Sessions per scenario (one speaker each, round-robin over the corpus).
    pub sessions: usize,
    pub clips_per_session: usize,
    pub seed: u64,
}

impl Default for MatrixEvalConfig {
    fn default() -> Self {
        MatrixEvalConfig {
            sessions: 6,
            clips_per_session: 8,
            seed: 9090,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixRow {
    pub system: String,
    pub scenario: String,
    /// Mean over-suppression segment count per session.
    pub tsos_segments: f64,
    /// Mean flagged-active seconds per session.
    pub tsos_seconds: f64,
    /// Mean input-minus-output energy per session, dB.
    pub delta_n_db: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MatrixOutcome {
    pub rows: Vec<MatrixRow>,
}

impl MatrixOutcome {
    pub fn row(&self, system: &str, scenario: Scenario) -> Option<&MatrixRow> {
        self.rows
            .iter()
            .find(|r| r.system == system && r.scenario == scenario.to_string())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("system,scenario,tsos_segments,tsos_seconds,delta_n_db\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:.4},{:.4},{:.4}\n",
                r.system, r.scenario, r.tsos_segments, r.tsos_seconds, r.delta_n_db
            ));
        }
        out
    }
}

/// Derives the per-system run configuration from the base config.
pub fn system_run_config(base: &RunConfig, system: &SystemSpec, out_dir: &Path) -> RunConfig {
    let mut cfg = base.clone();
    cfg.loss = LossConfig {
        variant: system.variant,
        tau: system.tau,
        asym_weight: system.asym_weight,
        ..base.loss.clone()
    };
    cfg.data.simulate.its_prob = match system.train_data {
        TrainData::Base => 0.0,
        TrainData::BaseIts => base.data.simulate.its_prob,
    };
    cfg.checkpoint_dir = out_dir.join("systems").join(&system.name);
    cfg.pvad_checkpoint = if system.needs_teacher() {
        Some(out_dir.join("pvad").join("pvad.ckpt"))
    } else {
        None
    };
    cfg
}

fn train_system_if_needed(cfg: &RunConfig, kind: &str) -> Result<PathBuf> {
    let (ckpt_name, marker_name) = match kind {
        "pvad" => ("pvad.ckpt", ".hash"),
        _ => ("pse.ckpt", ".hash"),
    };
    let ckpt = cfg.checkpoint_dir.join(ckpt_name);
    let marker = cfg.checkpoint_dir.join(marker_name);
    let hash = cfg.config_hash();
    if artifacts_current(&marker, &hash, &[&ckpt]) {
        eprintln!("skip {kind} training: {} is current", ckpt.display());
        return Ok(ckpt);
    }
    let _lock = CellLock::acquire(cfg.checkpoint_dir.join(".lock"))?;
    if kind == "pvad" {
        train::train_pvad(cfg)?;
    } else {
        train::train_pse(cfg)?;
    }
    write_marker(&marker, &hash)?;
    Ok(ckpt)
}

/// Trains (or reuses) every system and evaluates all scenarios on shared
/// deterministic sessions. Writes `matrix.csv`, a text table, and per-session
/// JSON reports under `out_dir`.
pub fn execute_matrix(
    matrix: &ExperimentMatrix,
    base: &RunConfig,
    out_dir: &Path,
    eval: &MatrixEvalConfig,
) -> Result<MatrixOutcome> {
    matrix.validate()?;
    train::init_thread_pool();
    fs::create_dir_all(out_dir)?;
    let stft_cfg = StftConfig::default();

    // Stage 0: shared corpus and teacher.
    let corpus = base.build_corpus()?;
    if matrix.systems.iter().any(|s| s.needs_teacher()) {
        let mut pvad_cfg = base.clone();
        pvad_cfg.checkpoint_dir = out_dir.join("pvad");
        train_system_if_needed(&pvad_cfg, "pvad")?;
    }

    // Stage 1: train (or load) each system.
    let mut checkpoints: BTreeMap<String, PathBuf> = BTreeMap::new();
    for system in &matrix.systems {
        let cfg = system_run_config(base, system, out_dir);
        let ckpt = train_system_if_needed(&cfg, "pse")?;
        checkpoints.insert(system.name.clone(), ckpt);
    }

    // Stage 2: shared evaluation sessions per scenario.
    let generator = MixtureGenerator::new(&corpus, base.data.simulate.clone())?;
    let embeddings = train::speaker_embeddings(&corpus)?;
    let mut sessions = Vec::new();
    for &scenario in &matrix.scenarios {
        for s in 0..eval.sessions {
            let speaker = s % corpus.speakers.len();
            let session_seed = crate::simulate::synth::mix_seed(eval.seed, 0x0eaa, s as u64);
            let session =
                build_eval_session(&generator, speaker, scenario, session_seed, eval.clips_per_session)?;
            sessions.push((scenario, speaker, session));
        }
    }

    // Stage 3: evaluate every system on the shared sessions.
    let mut rows = Vec::new();
    for system in &matrix.systems {
        let (model, _) = PseModel::load(&checkpoints[&system.name], &stft_cfg)?;
        let mut per_scenario: BTreeMap<String, Vec<SessionReport>> = BTreeMap::new();
        for (scenario, speaker, session) in &sessions {
            let report = evaluate_session(
                &model,
                &embeddings[*speaker],
                &format!("{}-{}", session.speaker_id, scenario),
                &scenario.to_string(),
                &session.mixture,
                &session.clean_target,
                &stft_cfg,
                &base.loss,
            )?;
            let dir = out_dir.join("eval").join(&system.name).join(scenario.to_string());
            fs::create_dir_all(&dir)?;
            fs::write(
                dir.join(format!("{}.json", session.speaker_id)),
                serde_json::to_vec_pretty(&report)?,
            )?;
            per_scenario.entry(scenario.to_string()).or_default().push(report);
        }
        for (scenario, reports) in per_scenario {
            let n = reports.len() as f64;
            rows.push(MatrixRow {
                system: system.name.clone(),
                scenario,
                tsos_segments: reports.iter().map(|r| r.tsos_segments as f64).sum::<f64>() / n,
                tsos_seconds: reports.iter().map(|r| r.tsos_seconds).sum::<f64>() / n,
                delta_n_db: reports.iter().map(|r| r.delta_n_db).sum::<f64>() / n,
            });
        }
    }

    let outcome = MatrixOutcome { rows };
    fs::write(out_dir.join("matrix.csv"), outcome.to_csv())?;
    fs::write(out_dir.join("matrix.txt"), render_table(&outcome.to_csv())?)?;
    Ok(outcome)
}

fn render_table(csv: &str) -> Result<String> {
    let rows: Vec<Vec<String>> = csv
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(|c| c.to_string()).collect())
        .collect();
    if rows.is_empty() {
        return Err(Error::Config("empty CSV".into()));
    }
    let cols = rows[0].len();
    let mut widths = vec![0usize; cols];
    for row in &rows {
        for (i, cell) in row.iter().enumerate() {
            if i < cols {
                widths[i] = widths[i].max(cell.len());
            }
        }
    }
    let mut out = String::new();
    for (r, row) in rows.iter().enumerate() {
        for (i, cell) in row.iter().enumerate() {
            out.push_str(&format!("{:<width$}", cell, width = widths[i] + 2));
        }
        out.push('\n');
        if r == 0 {
            out.push_str(&"-".repeat(widths.iter().map(|w| w + 2).sum()));
            out.push('\n');
        }
    }
    Ok(out)
}

// ─── Command implementations ────────────────────────────────────────────────

pub fn run(cli: Cli) -> Result<()> {
    train::init_thread_pool();
    let seed = cli.seed.unwrap_or(7);
    match cli.command {
        Command::Simulate {
            corpus,
            out,
            hours,
            its_prob,
            synth_speakers,
        } => {
            let out = required_out(out, &cli.out_dir, "simulate")?;
            let corpus_data = ensure_corpus(&corpus, synth_speakers, seed)?;
            let mut sim = load_run_config(&cli.config)?.data.simulate;
            sim.its_prob = its_prob;
            sim.seed = seed;
            let descriptor = format!("simulate|{}|{hours}|{its_prob}|{seed}", corpus.display());
            let hash = short_hash(&descriptor);
            let manifest_path = out.join("manifest.jsonl");
            if artifacts_current(&out.join(".hash"), &hash, &[&manifest_path]) {
                eprintln!("simulate: {} is current, skipping", manifest_path.display());
                return Ok(());
            }
            let generator = MixtureGenerator::new(&corpus_data, sim)?;
            let manifest = write_training_set(&generator, &out, hours)?;
            manifest.validate(&out)?;
            write_marker(&out.join(".hash"), &hash)?;
            eprintln!(
                "simulate: wrote {} samples to {}",
                manifest.records.len(),
                out.display()
            );
            Ok(())
        }
        Command::SimulateEval {
            scenario,
            corpus,
            out,
            sessions,
            clips,
            synth_speakers,
        } => {
            let out = required_out(out, &cli.out_dir, "simulate-eval")?;
            let corpus_data = ensure_corpus(&corpus, synth_speakers, seed)?;
            let mut sim = load_run_config(&cli.config)?.data.simulate;
            sim.seed = seed;
            let descriptor = format!("simulate-eval|{scenario}|{sessions}|{clips}|{seed}");
            let hash = short_hash(&descriptor);
            let manifest_path = out.join(scenario.to_string()).join("manifest.jsonl");
            if artifacts_current(&out.join(format!(".hash-{scenario}")), &hash, &[&manifest_path]) {
                eprintln!("simulate-eval: {} is current, skipping", manifest_path.display());
                return Ok(());
            }
            let generator = MixtureGenerator::new(&corpus_data, sim)?;
            let speakers: Vec<usize> =
                (0..sessions).map(|s| s % corpus_data.speakers.len()).collect();
            let manifest = write_eval_sessions(&generator, &out, scenario, &speakers, clips, seed)?;
            manifest.validate(&out)?;
            write_marker(&out.join(format!(".hash-{scenario}")), &hash)?;
            eprintln!(
                "simulate-eval: wrote {} {scenario} sessions to {}",
                manifest.records.len(),
                out.display()
            );
            Ok(())
        }
        Command::Enroll { speaker, wavs, out } => {
            let mut paths: Vec<PathBuf> = glob::glob(&wavs)
                .map_err(|e| Error::Config(format!("bad glob '{wavs}': {e}")))?
                .filter_map(|p| p.ok())
                .collect();
            paths.sort();
            if paths.is_empty() {
                return Err(Error::MissingPrerequisite(format!(
                    "no files match '{wavs}'"
                )));
            }
            let waves = paths.iter().map(|p| read_wav(p)).collect::<Result<Vec<_>>>()?;
            let dvec = compute_dvector(&waves)?;
            dvec.write_to(&out)?;
            eprintln!(
                "enroll: {} -> {} ({} files)",
                speaker,
                out.display(),
                paths.len()
            );
            Ok(())
        }
        Command::TrainPvad {} => {
            let mut cfg = load_run_config(&cli.config)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            if let Some(dir) = &cli.out_dir {
                cfg.checkpoint_dir = dir.clone();
            }
            train_system_if_needed(&cfg, "pvad")?;
            Ok(())
        }
        Command::TrainPse {
            pvad,
            loss,
            tau,
            asym_weight,
        } => {
            let mut cfg = load_run_config(&cli.config)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            if let Some(dir) = &cli.out_dir {
                cfg.checkpoint_dir = dir.clone();
            }
            if let Some(p) = pvad {
                cfg.pvad_checkpoint = Some(p);
            }
            if let Some(v) = loss {
                cfg.loss.variant = v;
            }
            if let Some(t) = tau {
                cfg.loss.tau = t;
            }
            if let Some(w) = asym_weight {
                cfg.loss.asym_weight = w;
            }
            train_system_if_needed(&cfg, "pse")?;
            Ok(())
        }
        Command::Evaluate {
            model,
            eval_dir,
            out,
        } => {
            let out = required_out(out, &cli.out_dir, "evaluate")?;
            run_evaluate(&model, &eval_dir, &out)
        }
        Command::RunMatrix {
            corpus,
            systems,
            scenarios,
            synth_speakers,
        } => {
            let out = required_out(None, &cli.out_dir, "run-matrix")?;
            let mut base = load_run_config(&cli.config)?;
            if let Some(s) = cli.seed {
                base.seed = s;
            }
            if let Some(dir) = corpus {
                // Materialize if needed, then point the config at it.
                ensure_corpus(&dir, synth_speakers, seed)?;
                base.data.corpus_dir = Some(dir);
            }
            let mut matrix = ExperimentMatrix::default_matrix();
            if let Some(list) = systems {
                matrix.systems = list
                    .split(',')
                    .map(SystemSpec::preset)
                    .collect::<Result<Vec<_>>>()?;
            }
            if let Some(list) = scenarios {
                matrix.scenarios = list
                    .split(',')
                    .map(|s| s.parse())
                    .collect::<Result<Vec<_>>>()?;
            }
            let eval = MatrixEvalConfig {
                seed: base.seed ^ 0x5eed_0eaa,
                ..MatrixEvalConfig::default()
            };
            let outcome = execute_matrix(&matrix, &base, &out, &eval)?;
            eprintln!(
                "run-matrix: {} rows -> {}",
                outcome.rows.len(),
                out.join("matrix.csv").display()
            );
            Ok(())
        }
        Command::Report { csv, out } => {
            let text = fs::read_to_string(&csv)?;
            let table = render_table(&text)?;
            let out = out
                .or(cli.out_dir.map(|d| d.join("report.txt")))
                .unwrap_or_else(|| csv.with_extension("txt"));
            fs::write(&out, table)?;
            eprintln!("report: wrote {}", out.display());
            Ok(())
        }
    }
}

/// `evaluate` over a rendered eval directory: one JSON per session plus a CSV
/// summary.
fn run_evaluate(model_path: &Path, eval_dir: &Path, out: &Path) -> Result<()> {
    let stft_cfg = StftConfig::default();
    let (model, _) = PseModel::load(model_path, &stft_cfg)?;
    let mut reports = Vec::new();
    for scenario in [Scenario::Ts1, Scenario::Ts2, Scenario::Ts3] {
        let manifest_path = eval_dir.join(scenario.to_string()).join("manifest.jsonl");
        if !manifest_path.exists() {
            continue;
        }
        let manifest = DatasetManifest::load_jsonl(&manifest_path)?;
        for record in &manifest.records {
            let mixture = read_wav(&eval_dir.join(&record.mixture))?;
            let clean = read_wav(&eval_dir.join(&record.clean_target))?;
            let enrollment = record
                .enrollment
                .iter()
                .map(|rel| read_wav(&eval_dir.join(rel)))
                .collect::<Result<Vec<_>>>()?;
            let dvec: DVector = compute_dvector(&enrollment)?;
            let report = evaluate_session(
                &model,
                &dvec,
                &format!("{}-{}", record.target_speaker_id, scenario),
                &scenario.to_string(),
                &mixture,
                &clean,
                &stft_cfg,
                &LossConfig::default(),
            )?;
            let dir = out.join(scenario.to_string());
            fs::create_dir_all(&dir)?;
            fs::write(
                dir.join(format!("{}.json", record.target_speaker_id)),
                serde_json::to_vec_pretty(&report)?,
            )?;
            reports.push(report);
        }
    }
    if reports.is_empty() {
        return Err(Error::MissingPrerequisite(format!(
            "no scenario manifests under {} (run simulate-eval first)",
            eval_dir.display()
        )));
    }
    fs::create_dir_all(out)?;
    fs::write(out.join("summary.csv"), session_csv(&reports))?;
    eprintln!(
        "evaluate: {} sessions -> {}",
        reports.len(),
        out.join("summary.csv").display()
    );
    Ok(())
}
