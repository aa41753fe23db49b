// Scratch pilot for sizing the acceptance matrix. Not part of the deliverable.
use std::path::PathBuf;
use std::time::Instant;

use pse_distill::cli::{execute_matrix, ExperimentMatrix, MatrixEvalConfig, SystemSpec};
use pse_distill::model::{PvadModel, PseConfig, PvadConfig};
use pse_distill::simulate::{MixtureGenerator, Scenario, SimulateConfig, SyntheticCorpusConfig};
use pse_distill::train::{self, RunConfig};
use pse_distill::dsp::StftConfig;

fn base_config(out: PathBuf, steps: usize) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.seed = 11;
    cfg.optimizer.steps = steps;
    cfg.optimizer.batch_size = 8;
    cfg.optimizer.eval_every = 50;
    cfg.optimizer.eval_samples = 8;
    cfg.optimizer.patience = 100; // no early stop in pilot
    cfg.data.synthetic = Some(SyntheticCorpusConfig {
        speakers: 12,
        utterances_per_speaker: 16,
        enroll_per_speaker: 3,
        noise_clips: 16,
        utterance_seconds: 4.0,
        seed: 77,
    });
    cfg.data.simulate = SimulateConfig {
        utterance_seconds: 3.0,
        rir_pool: 16,
        seed: 77,
        ..SimulateConfig::default()
    };
    cfg.checkpoint_dir = out;
    cfg
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(|s| s.as_str()).unwrap_or("speed");
    let out = PathBuf::from("/tmp/pilot");

    match mode {
        "speed" => {
            // Ten steps of pvad and pse to measure per-step cost.
            let mut cfg = base_config(out.join("speed-pvad"), 10);
            let t = Instant::now();
            let report = train::train_pvad(&cfg).unwrap();
            eprintln!(
                "pvad: {} steps in {:.1}s ({:.2} s/step)",
                report.steps_run,
                t.elapsed().as_secs_f64(),
                t.elapsed().as_secs_f64() / report.steps_run as f64
            );
            cfg.checkpoint_dir = out.join("speed-pse");
            let t = Instant::now();
            let report = train::train_pse(&cfg).unwrap();
            eprintln!(
                "pse: {} steps in {:.1}s ({:.2} s/step)",
                report.steps_run,
                t.elapsed().as_secs_f64(),
                t.elapsed().as_secs_f64() / report.steps_run as f64
            );
        }
        "pvad" => {
            let steps: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(200);
            let cfg = base_config(out.join("pvad"), steps);
            let t = Instant::now();
            let report = train::train_pvad(&cfg).unwrap();
            eprintln!(
                "pvad trained: steps {} best_val {:.4} acc {:?} in {:.0}s",
                report.steps_run,
                report.best_val_loss,
                report.val_accuracy,
                t.elapsed().as_secs_f64()
            );
            // ITS misclassification fraction.
            let corpus = cfg.build_corpus().unwrap();
            let generator = MixtureGenerator::new(&corpus, cfg.data.simulate.clone()).unwrap();
            let embeddings = train::speaker_embeddings(&corpus).unwrap();
            let (teacher, _) =
                PvadModel::load(&report.checkpoint, &StftConfig::default()).unwrap();
            let frac =
                train::its_misclassified_fraction(&teacher, &generator, &embeddings, 20).unwrap();
            let acc =
                train::pvad_validation_accuracy(&teacher, &generator, &embeddings, 20).unwrap();
            eprintln!("pvad acc {acc:.3}, ITS misclassified fraction {frac:.3}");
        }
        "matrix" => {
            let steps: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(200);
            let systems = args.get(3).map(|s| s.as_str()).unwrap_or("b1,b2,s1,s4,s5");
            let base = base_config(out.join("matrix"), steps);
            let matrix = ExperimentMatrix {
                systems: systems
                    .split(',')
                    .map(|n| SystemSpec::preset(n).unwrap())
                    .collect(),
                scenarios: vec![Scenario::Ts1, Scenario::Ts2, Scenario::Ts3],
            };
            let eval = MatrixEvalConfig {
                sessions: 6,
                clips_per_session: 8,
                seed: 909,
            };
            let t = Instant::now();
            let outcome = execute_matrix(&matrix, &base, &out.join("matrix"), &eval).unwrap();
            eprintln!("matrix in {:.0}s", t.elapsed().as_secs_f64());
            println!("{}", outcome.to_csv());
        }
        other => eprintln!("unknown pilot mode {other}"),
    }
    let _ = (PseConfig::toy(), PvadConfig::toy());
}
