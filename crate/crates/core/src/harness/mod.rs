//! Experiment protocol: generated scenes, each segmented once and then
//! pushed for a fixed number of steps by every method, with per-step
//! evaluation against the simulator's ground truth.

mod config;
mod report;

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{ExperimentConfig, Method};
pub use report::{read_records, write_records, MethodSummary, Report, StepSummary};

use crate::belief::{init_belief, project_to_masks, Belief};
use crate::mask::Mask;
use crate::metrics::evaluate;
use crate::planner::{
    default_push_distance, random_action, region_worlds, sample_actions, select_action,
    select_target_region,
};
use crate::scene::io::label_map;
use crate::scene::{
    apply_push, generate_scene, render, Observation, PushAction, Scene, SceneError,
};
use crate::segmenter::{OracleSegmenter, Segmenter};
use crate::uncos::{uncos, UncosError};
use crate::update::{update_belief, SimTracker};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Uncos(#[from] UncosError),
}

/// Independent random streams derived from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    SceneGen,
    Segmenter,
    Planner,
    Tracker,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::SceneGen => 0x5ce7e,
            Stream::Segmenter => 0x5e6,
            Stream::Planner => 0x91a7,
            Stream::Tracker => 0x7ac4,
        }
    }
}

/// Generator for one named stream of one scene.
pub fn stream_rng(master: u64, stream: Stream, scene: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream.tag() << 32 | scene as u64);
    rng
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub scene: usize,
    pub method: Method,
    pub step: usize,
    pub p_n: f64,
    pub r_n: f64,
    pub f_n: f64,
    pub p: f64,
    pub r: f64,
    pub f: f64,
    /// `x y dx dy distance` of the push leading to this step, if any.
    pub action: String,
    /// Uncertainty count of every belief region, `;`-separated.
    pub kappa: String,
    pub wall_ms: f64,
    /// `ok`, `no-ambiguity`, `no-action` or `error: ...`.
    pub status: String,
}

impl StepRecord {
    /// The record with wall time zeroed, for run-to-run comparison.
    pub fn timeless(&self) -> Self {
        Self {
            wall_ms: 0.0,
            ..self.clone()
        }
    }
}

/// Predicted segmentation of one step as a label map.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub scene: usize,
    pub method: Method,
    pub step: usize,
    pub rows: usize,
    pub cols: usize,
    pub labels: Vec<u32>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeOutput {
    pub records: Vec<StepRecord>,
    pub frames: Vec<Frame>,
}

struct Recorder<'a> {
    scene: usize,
    method: Method,
    save: bool,
    out: &'a mut EpisodeOutput,
}

impl Recorder<'_> {
    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        step: usize,
        pred: &[Mask],
        obs: &Observation,
        action: Option<&PushAction>,
        kappa: &[usize],
        wall: Duration,
        status: &str,
    ) {
        let e = evaluate::<f64>(pred, &obs.ground_truth_masks());
        self.out.records.push(StepRecord {
            scene: self.scene,
            method: self.method,
            step,
            p_n: e.p_n,
            r_n: e.r_n,
            f_n: e.f_n,
            p: e.p,
            r: e.r,
            f: e.f,
            action: action.map_or_else(String::new, format_action),
            kappa: kappa
                .iter()
                .map(|k| k.to_string())
                .collect::<Vec<_>>()
                .join(";"),
            wall_ms: wall.as_secs_f64() * 1e3,
            status: status.to_string(),
        });
        if self.save {
            self.out.frames.push(Frame {
                scene: self.scene,
                method: self.method,
                step,
                rows: obs.dims.rows,
                cols: obs.dims.cols,
                labels: label_map(obs.dims, pred),
            });
        }
    }

    fn error(&mut self, step: usize, err: &HarnessError) {
        self.out.records.push(StepRecord {
            scene: self.scene,
            method: self.method,
            step,
            p_n: 0.0,
            r_n: 0.0,
            f_n: 0.0,
            p: 0.0,
            r: 0.0,
            f: 0.0,
            action: String::new(),
            kappa: String::new(),
            wall_ms: 0.0,
            status: format!("error: {err}"),
        });
    }
}

fn format_action(a: &PushAction) -> String {
    format!(
        "{:.5} {:.5} {:.5} {:.5} {:.5}",
        a.target[0], a.target[1], a.direction[0], a.direction[1], a.distance
    )
}

fn kappas(belief: &Belief) -> Vec<usize> {
    let p = &belief.params;
    belief
        .regions
        .iter()
        .map(|r| crate::planner::region_uncertainty(r, p.lambda, p.delta))
        .collect()
}

fn belief_prediction(belief: &Belief, obs: &Observation) -> Vec<Mask> {
    project_to_masks(&belief.most_likely(), obs)
}

/// Runs the requested methods on one scene. `eos` and `random` share the
/// step-0 segmentation; `finalFrame` re-segments the frames produced by the
/// `random` trajectory. An error ends the affected method's episode with a
/// diagnostic record.
pub fn run_episode<S: Segmenter + ?Sized>(
    scene: &Scene,
    scene_id: usize,
    methods: &[Method],
    config: &ExperimentConfig,
    segmenter: &S,
) -> EpisodeOutput {
    let mut out = EpisodeOutput::default();
    let mut seg_rng = stream_rng(config.seed, Stream::Segmenter, scene_id);
    let step_seeds: Vec<u64> = (0..=config.steps).map(|_| seg_rng.random()).collect();
    let obs0 = render(scene, config.resolution);
    let started = Instant::now();
    let initial = match uncos(&obs0, segmenter, &config.uncos, step_seeds[0]) {
        Ok(r) => r,
        Err(e) => {
            let e = HarnessError::from(e);
            for &m in methods {
                Recorder {
                    scene: scene_id,
                    method: m,
                    save: false,
                    out: &mut out,
                }
                .error(0, &e);
            }
            return out;
        }
    };
    let belief0 = init_belief(&initial, &obs0, &config.belief);
    let push_distance = config
        .planner
        .push_distance
        .unwrap_or_else(|| default_push_distance(&belief0, config.resolution));
    let t0 = started.elapsed();
    let mut handles = vec![obs0.handle];

    if methods.contains(&Method::Eos) {
        let mut rec = Recorder {
            scene: scene_id,
            method: Method::Eos,
            save: config.save_frames,
            out: &mut out,
        };
        run_belief_method(
            Method::Eos,
            scene,
            &obs0,
            &belief0,
            push_distance,
            config,
            &mut rec,
            t0,
        );
    }
    if methods.contains(&Method::Random) || methods.contains(&Method::FinalFrame) {
        let mut scratch = EpisodeOutput::default();
        let mut rec = Recorder {
            scene: scene_id,
            method: Method::Random,
            save: config.save_frames,
            out: &mut scratch,
        };
        let trajectory = run_belief_method(
            Method::Random,
            scene,
            &obs0,
            &belief0,
            push_distance,
            config,
            &mut rec,
            t0,
        );
        if methods.contains(&Method::Random) {
            out.records.append(&mut scratch.records);
            out.frames.append(&mut scratch.frames);
        }
        if methods.contains(&Method::FinalFrame) {
            let mut rec = Recorder {
                scene: scene_id,
                method: Method::FinalFrame,
                save: config.save_frames,
                out: &mut out,
            };
            rec.push(
                0,
                &initial.most_likely(),
                &obs0,
                None,
                &kappas(&belief0),
                t0,
                "ok",
            );
            for (step, (obs, action)) in trajectory.iter().enumerate() {
                let step = step + 1;
                let started = Instant::now();
                match uncos(obs, segmenter, &config.uncos, step_seeds[step]) {
                    Ok(result) => {
                        handles.push(obs.handle);
                        let kappa = kappas(&init_belief(&result, obs, &config.belief));
                        rec.push(
                            step,
                            &result.most_likely(),
                            obs,
                            action.as_ref(),
                            &kappa,
                            started.elapsed(),
                            "ok",
                        );
                    }
                    Err(e) => {
                        rec.error(step, &e.into());
                        break;
                    }
                }
            }
        }
    }
    for h in handles {
        segmenter.release_frame(h);
    }
    out
}

/// Runs `eos` or `random` and returns the frames and pushes of the
/// trajectory.
#[allow(clippy::too_many_arguments)]
fn run_belief_method(
    method: Method,
    scene: &Scene,
    obs0: &Observation,
    belief0: &Belief,
    push_distance: f64,
    config: &ExperimentConfig,
    rec: &mut Recorder<'_>,
    t0: Duration,
) -> Vec<(Observation, Option<PushAction>)> {
    let mut planner_rng = stream_rng(config.seed, Stream::Planner, rec.scene);
    let mut tracker_rng = stream_rng(config.seed, Stream::Tracker, rec.scene);
    let mut belief = belief0.clone();
    let mut scene = scene.clone();
    let mut obs = obs0.clone();
    let mut trajectory = Vec::new();
    rec.push(
        0,
        &belief_prediction(&belief, &obs),
        &obs,
        None,
        &kappas(&belief),
        t0,
        "ok",
    );

    for step in 1..=config.steps {
        let started = Instant::now();
        let (action, status) = match method {
            Method::Eos => match select_target_region(&belief) {
                None => (None, "no-ambiguity"),
                Some(region) => {
                    let worlds = region_worlds(&belief, &obs, region, config.planner.world_cap);
                    let candidates = sample_actions(
                        &belief,
                        region,
                        &obs,
                        config.planner.k,
                        push_distance,
                        &mut planner_rng,
                    );
                    let chosen = select_action(&worlds, &candidates, config.resolution)
                        .map(|(i, _)| candidates[i].action);
                    (chosen, if chosen.is_some() { "ok" } else { "no-action" })
                }
            },
            _ => {
                let a = random_action(&belief, &obs, push_distance, &mut planner_rng);
                (a, if a.is_some() { "ok" } else { "no-action" })
            }
        };
        let tracker_seed: u64 = tracker_rng.random();
        if let Some(a) = action {
            match apply_push(&scene, &a) {
                Ok(outcome) => {
                    let new_obs = render(&outcome.scene, config.resolution);
                    let tracker = SimTracker::between(
                        &scene,
                        &outcome.scene,
                        &obs,
                        &new_obs,
                        config.tracker.clone(),
                    );
                    belief = update_belief(
                        &belief,
                        &obs,
                        &new_obs,
                        &tracker,
                        &config.update,
                        tracker_seed,
                    );
                    scene = outcome.scene;
                    obs = new_obs;
                }
                Err(e) => {
                    rec.error(step, &e.into());
                    return trajectory;
                }
            }
        }
        trajectory.push((obs.clone(), action));
        rec.push(
            step,
            &belief_prediction(&belief, &obs),
            &obs,
            action.as_ref(),
            &kappas(&belief),
            started.elapsed(),
            status,
        );
    }
    trajectory
}

/// Full experiment: scenes in parallel, records sorted by scene, method
/// and step.
pub fn run_experiment(config: &ExperimentConfig) -> Result<(EpisodeOutput, Report), HarnessError> {
    config.validate()?;
    let segmenter = OracleSegmenter::new(config.oracle.clone());
    let scenes = experiment_scenes(config)?;
    let episodes: Vec<EpisodeOutput> = scenes
        .par_iter()
        .enumerate()
        .map(|(i, s)| run_episode(s, i, &config.methods, config, &segmenter))
        .collect();
    let mut out = EpisodeOutput::default();
    for mut e in episodes {
        out.records.append(&mut e.records);
        out.frames.append(&mut e.frames);
    }
    out.records.sort_by_key(|r| (r.scene, r.method, r.step));
    out.frames.sort_by_key(|f| (f.scene, f.method, f.step));
    let report = Report::from_records(&out.records, config.steps);
    Ok((out, report))
}

/// Scenes of an experiment, as generated from its seed.
pub fn experiment_scenes(config: &ExperimentConfig) -> Result<Vec<Scene>, HarnessError> {
    (0..config.scenes)
        .map(|i| {
            Ok(generate_scene(
                &config.scene,
                &mut stream_rng(config.seed, Stream::SceneGen, i),
            )?)
        })
        .collect()
}
