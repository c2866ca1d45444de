//! The four CLI verbs as library calls.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::checkpoint::Checkpoint;
use crate::checks::{run_suite, CheckRecord};
use crate::config::RunConfig;
use crate::encoding::stream_id;
use crate::error::{Error, Result};
use crate::harness::{assess, evaluate, Assessment, EvalSummary, Trainer};
use crate::metrics::MetricsWriter;
use crate::network::{BasalTape, FusionTape};

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, Serialize)]
pub struct TrainOutcome {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub steps: u64,
    pub episodes: u64,
    pub updates: u64,
    /// Comparison with the exact oracles after the last step.
    pub assessment: Assessment,
}

/// Output directory of one seed: `out` itself for single-seed runs.
pub fn seed_dir(config: &RunConfig, seed: u64) -> PathBuf {
    let out = PathBuf::from(&config.out);
    if config.seeds > 1 {
        out.join(format!("seed-{seed}"))
    } else {
        out
    }
}

/// Trains every configured seed in turn.
pub fn train(config: &RunConfig) -> Result<Vec<TrainOutcome>> {
    config.validate()?;
    (config.seed..config.seed + config.seeds.max(1))
        .map(|s| train_seed(config, s, &seed_dir(config, s)))
        .collect()
}

fn checkpoint_path(dir: &Path, step: u64) -> PathBuf {
    dir.join(format!("step-{step:08}.ckpt"))
}

/// Trains one seed, writing the metrics stream, periodic checkpoints, the
/// final checkpoint and a summary into `dir`. On divergence the metrics
/// written so far are flushed before the error is returned.
pub fn train_seed(config: &RunConfig, seed: u64, dir: &Path) -> Result<TrainOutcome> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let spec = config.env_spec();
    let mut trainer = Trainer::new(config.agent(seed)?, spec.clone(), config.steps)?;
    let metrics_path = dir.join(METRICS_FILE);
    let mut metrics = MetricsWriter::create(&metrics_path, config, seed)?;
    let io = |e| Error::io(&metrics_path, e);
    while trainer.step < config.steps {
        let record = match trainer.train_iteration() {
            Ok(r) => r,
            Err(err) => {
                metrics.flush().map_err(io)?;
                return Err(err);
            }
        };
        metrics.write(&record).map_err(io)?;
        if config.checkpoint_every > 0 && trainer.step % config.checkpoint_every == 0 {
            metrics.flush().map_err(io)?;
            Checkpoint::capture(config, &trainer.agent, Some(&trainer))
                .save(&checkpoint_path(dir, trainer.step))?;
        }
    }
    metrics.flush().map_err(io)?;
    Checkpoint::capture(config, &trainer.agent, Some(&trainer)).save(&dir.join(FINAL_CHECKPOINT))?;
    let assessment = assess(&trainer.agent, &spec, config.gamma, config.eval_draws)?;
    let outcome = TrainOutcome {
        seed,
        out_dir: dir.to_path_buf(),
        steps: trainer.step,
        episodes: trainer.episode,
        updates: trainer.agent.updates,
        assessment,
    };
    let summary = dir.join(SUMMARY_FILE);
    let text = serde_json::to_string_pretty(&outcome).expect("summary serialises");
    std::fs::write(&summary, text + "\n").map_err(|e| Error::io(&summary, e))?;
    Ok(outcome)
}

/// Greedy evaluation of a checkpoint. `episodes` and `seed` default to the
/// stored configuration.
pub fn eval(checkpoint: &Path, episodes: Option<usize>, seed: Option<u64>) -> Result<EvalSummary> {
    let ck = Checkpoint::load(checkpoint)?;
    let (config, agent) = ck.restore_agent()?;
    evaluate(
        &agent,
        &config.env_spec(),
        episodes.unwrap_or(config.eval_episodes),
        seed.unwrap_or(config.seed),
        config.eval_draws,
    )
}

pub fn verify(config: &RunConfig) -> Result<Vec<CheckRecord>> {
    config.validate()?;
    run_suite(config)
}

/// Dumps per-step dendritic and somatic traces of randomly chosen fusion
/// units for each listed state, one CSV per state, using the median
/// fraction's query. LI ablations write the two group potentials and their
/// product in the `v_b`, `v_a` and `u` columns, with `spike` always 0.
pub fn inspect(checkpoint: &Path, states: &[usize], out_dir: &Path) -> Result<Vec<PathBuf>> {
    let ck = Checkpoint::load(checkpoint)?;
    let (config, agent) = ck.restore_agent()?;
    let spec = config.env_spec();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let units = config.n_mcn;
    let mut rng = ChaCha8Rng::seed_from_u64(stream_id(&[config.seed, 0x15]));
    let mut chosen = sample(&mut rng, units, config.inspect_units.min(units)).into_vec();
    chosen.sort_unstable();
    let mut files = Vec::new();
    for &s in states {
        if s >= spec.num_states() {
            return Err(Error::InvalidParam(format!(
                "state {s} is out of range for an environment with {} states",
                spec.num_states()
            )));
        }
        let fwd = agent.forward(&spec.observe(s), stream_id(&[config.seed, 0x15, s as u64]))?;
        let tape = &fwd.tape;
        let q = &tape.queries[tape.queries.len() / 2];
        let basal = tape.basal.potential();
        let (apical, soma, spikes): (&[Vec<f64>], Vec<Vec<f64>>, Vec<Vec<f64>>) = match (&q.fusion, &tape.basal) {
            (FusionTape::Mcn { v_a, soma, .. }, BasalTape::Mcn { .. }) => {
                (v_a, soma.u_pre.clone(), soma.out.clone())
            }
            (FusionTape::Li { u_e, fused, .. }, _) => {
                (u_e, fused.clone(), vec![vec![0.0; units]; fused.len()])
            }
            _ => return Err(Error::InvalidParam("tape mixes fusion kinds".into())),
        };
        let path = out_dir.join(format!("inspect-state{s}.csv"));
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(&path, e);
        writeln!(w, "t,neuron,v_b,v_a,u,spike").map_err(io)?;
        for t in 0..basal.len() {
            for &n in &chosen {
                writeln!(
                    w,
                    "{t},{n},{},{},{},{}",
                    basal[t][n], apical[t][n], soma[t][n], spikes[t][n]
                )
                .map_err(io)?;
            }
        }
        w.flush().map_err(io)?;
        files.push(path);
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(dir: &Path) -> RunConfig {
        let mut c = RunConfig::parse_str(
            "N = 4\nM = 8\nn_mcn = 8\nhidden = 8\nencoder_hidden = 8\nT = 2\nbatch = 2\nwarmup = 4\nsteps = 12\ninspect_units = 5",
        )
        .unwrap();
        c.out = dir.display().to_string();
        c
    }

    #[test]
    fn train_writes_artifacts_and_is_reproducible() {
        let tmp = tempfile::tempdir().unwrap();
        let mut c = tiny(&tmp.path().join("a"));
        c.checkpoint_every = 5;
        train(&c).unwrap();
        let a = tmp.path().join("a");
        for f in [METRICS_FILE, FINAL_CHECKPOINT, SUMMARY_FILE, "step-00000005.ckpt", "step-00000010.ckpt"] {
            assert!(a.join(f).exists(), "{f}");
        }
        let lines = std::fs::read_to_string(a.join(METRICS_FILE)).unwrap();
        assert_eq!(lines.lines().count(), 13);
        // The output path is part of the echoed config, so rerun in place.
        let first: Vec<Vec<u8>> = [METRICS_FILE, FINAL_CHECKPOINT]
            .iter()
            .map(|f| std::fs::read(a.join(f)).unwrap())
            .collect();
        train(&c).unwrap();
        for (f, bytes) in [METRICS_FILE, FINAL_CHECKPOINT].iter().zip(first) {
            assert_eq!(std::fs::read(a.join(f)).unwrap(), bytes, "{f}");
        }
    }

    #[test]
    fn zero_steps_writes_initial_checkpoint() {
        let tmp = tempfile::tempdir().unwrap();
        let mut c = tiny(tmp.path());
        c.steps = 0;
        let out = train(&c).unwrap();
        assert_eq!(out[0].steps, 0);
        let text = std::fs::read_to_string(tmp.path().join(METRICS_FILE)).unwrap();
        assert_eq!(text.lines().count(), 1);
        let ck = Checkpoint::load(&tmp.path().join(FINAL_CHECKPOINT)).unwrap();
        let (_, agent) = ck.restore_agent().unwrap();
        assert_eq!(agent.updates, 0);
    }

    #[test]
    fn multiple_seeds_get_their_own_directories() {
        let tmp = tempfile::tempdir().unwrap();
        let mut c = tiny(tmp.path());
        c.seeds = 2;
        c.steps = 3;
        let out = train(&c).unwrap();
        assert_eq!(out.len(), 2);
        assert!(tmp.path().join("seed-0").join(METRICS_FILE).exists());
        assert!(tmp.path().join("seed-1").join(METRICS_FILE).exists());
    }

    #[test]
    fn eval_and_inspect_read_a_checkpoint() {
        let tmp = tempfile::tempdir().unwrap();
        let c = tiny(tmp.path());
        train(&c).unwrap();
        let ck = tmp.path().join(FINAL_CHECKPOINT);
        let e1 = eval(&ck, Some(3), Some(1)).unwrap();
        assert_eq!(e1, eval(&ck, Some(3), Some(1)).unwrap());
        assert_eq!(e1.episodes, 3);
        let files = inspect(&ck, &[0, 2], &tmp.path().join("inspect")).unwrap();
        let text = std::fs::read_to_string(&files[0]).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,neuron,v_b,v_a,u,spike"));
        assert_eq!(lines.count(), 2 * 5);
        assert!(inspect(&ck, &[99], tmp.path()).is_err());
    }

    #[test]
    fn zero_weights_give_zero_traces() {
        let tmp = tempfile::tempdir().unwrap();
        let c = tiny(tmp.path());
        let mut agent = c.agent(0).unwrap();
        agent.params = agent.network.zero_params();
        let ck = tmp.path().join("zero.ckpt");
        Checkpoint::capture(&c, &agent, None).save(&ck).unwrap();
        let files = inspect(&ck, &[2], tmp.path()).unwrap();
        let text = std::fs::read_to_string(&files[0]).unwrap();
        for line in text.lines().skip(1) {
            let cols: Vec<f64> = line.split(',').skip(2).map(|x| x.parse().unwrap()).collect();
            assert!(cols.iter().all(|&x| x == 0.0), "{line}");
        }
    }
}
