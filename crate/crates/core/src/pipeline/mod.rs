//! End-to-end transfer: ingest, retarget, replay, configure, train, plan,
//! track and evaluate, with every stage output persisted in a bundle.

mod bundle;
mod config;

pub use bundle::{Bundle, Manifest, StageRecord, BUNDLE_FORMAT, CONFIG, MANIFEST};
pub use config::{sha256_hex, TransferConfig};

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::adapt::{
    configure_episode, train_residual_policy, worker_count, Env, Episode, EpisodeConfig, Mode,
    PrimaryTrajectory, ResidualPolicy,
};
use crate::demo::{ContactSet, DemoSequence};
use crate::geom::Pose;
use crate::hand::HandModel;
use crate::metrics::{evaluate, CorpusReport, Evidence, MetricReport};
use crate::retarget::{retarget_sequence, ActuatorModel, ControlPlan};
use crate::sim::{World, WorldState};
use crate::wrist::{plan_wrist, rebase_object_trajectory, track_manipulation, ManipulationPlan};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("stage {stage} failed: {message}")]
    Stage { stage: Stage, message: String },
    #[error("cannot resume: {0}")]
    Resume(String),
    #[error("incomplete bundle: {0}")]
    Incomplete(String),
    #[error("integrity error in {}: {message}", path.display())]
    Integrity { path: PathBuf, message: String },
    #[error("cannot parse {}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Retarget,
    Replay,
    Configure,
    Train,
    Plan,
    Track,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Ingest,
        Stage::Retarget,
        Stage::Replay,
        Stage::Configure,
        Stage::Train,
        Stage::Plan,
        Stage::Track,
        Stage::Evaluate,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Retarget => "retarget",
            Stage::Replay => "replay",
            Stage::Configure => "configure",
            Stage::Train => "train",
            Stage::Plan => "plan",
            Stage::Track => "track",
            Stage::Evaluate => "evaluate",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .iter()
            .find(|st| st.name() == s)
            .copied()
            .ok_or_else(|| {
                format!(
                    "unknown stage {s:?}; expected one of {}",
                    Stage::ALL.map(|s| s.name()).join(", ")
                )
            })
    }
}

fn failed(stage: Stage) -> impl Fn(&dyn fmt::Display) -> PipelineError {
    move |e| PipelineError::Stage {
        stage,
        message: e.to_string(),
    }
}

/// Grasp-phase rollout from the pre-grasp state, with or without the policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspRollout {
    pub residual: bool,
    pub final_distance: f64,
    pub success: bool,
    pub held: bool,
    pub total_reward: f64,
    /// Object pose after every episode step.
    pub object: Vec<Pose>,
    pub final_state: WorldState,
    pub last_control: Vec<f64>,
}

impl GraspRollout {
    fn of(episode: &Episode, residual: bool) -> Option<Self> {
        Some(Self {
            residual,
            final_distance: episode.final_distance,
            success: episode.success,
            held: episode.held,
            total_reward: episode.total_reward(),
            object: episode.states.iter().map(|s| s.object.pose).collect(),
            final_state: episode.states.last()?.clone(),
            last_control: episode.steps.last()?.control.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingRecord {
    /// Executed object poses, one per manipulation plan pose.
    pub object: Vec<Pose>,
    /// Hand joint positions after every tracking step.
    pub hand_q: Vec<Vec<f64>>,
    pub dropped: bool,
    pub drop_step: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Skip training and roll out the primary controls alone.
    pub no_rl: bool,
    pub resume_from: Option<Stage>,
}

/// In-memory view of a completed bundle.
#[derive(Debug, Clone)]
pub struct TransferBundle {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub contacts: ContactSet,
    pub plan: ControlPlan,
    pub primary: PrimaryTrajectory,
    pub episode: EpisodeConfig,
    pub policy: Option<ResidualPolicy>,
    pub rollout: GraspRollout,
    pub manipulation: ManipulationPlan,
    pub tracking: TrackingRecord,
    /// Executed object trajectory, one pose per control step.
    pub executed: Vec<Pose>,
    pub report: MetricReport,
}

struct Inputs {
    model: HandModel,
    demo: DemoSequence,
    /// Digest of the hand file, demo file and object and simulator settings.
    world_key: String,
}

/// Loads and checks everything a run reads before any output is written.
fn preflight(cfg: &TransferConfig) -> Result<Inputs, PipelineError> {
    cfg.validate()?;
    let invalid = |what: &str, p: &Path, e: &dyn fmt::Display| {
        PipelineError::Validation(format!("{what} file {}: {e}", p.display()))
    };
    let read = |what: &str, p: &Path| std::fs::read(p).map_err(|e| invalid(what, p, &e));
    let (hand_bytes, demo_bytes) = (read("hand", &cfg.hand)?, read("demo", &cfg.demo)?);
    let model = HandModel::load(&cfg.hand).map_err(|e| invalid("hand", &cfg.hand, &e))?;
    if !model.is_floating() {
        return Err(PipelineError::Validation(
            "the hand needs a floating wrist".into(),
        ));
    }
    if cfg.adapt.guide_finger < crate::hand::HUMAN_FINGERS
        && model.robot_finger(cfg.adapt.guide_finger).is_none()
    {
        return Err(PipelineError::Validation(format!(
            "guide finger {} has no robot fingertip",
            cfg.adapt.guide_finger
        )));
    }
    let demo = DemoSequence::load(&cfg.demo).map_err(|e| invalid("demo", &cfg.demo, &e))?;
    let object = demo
        .object()
        .with_lowered_com(cfg.com_lowering)
        .map_err(|e| PipelineError::Validation(e.to_string()))?;
    if let Some(g) = cfg.grasp_frame {
        if g >= demo.horizon() {
            return Err(PipelineError::Validation(format!(
                "grasp frame {g} is past the demo end ({} frames)",
                demo.horizon()
            )));
        }
    }
    let world_key = digest_of(&json!({
        "hand": sha256_hex(&hand_bytes),
        "demo": sha256_hex(&demo_bytes),
        "com_lowering": cfg.com_lowering,
        "sim": cfg.sim,
    }));
    Ok(Inputs {
        model,
        demo: demo.with_object(object),
        world_key,
    })
}

fn digest_of(value: &serde_json::Value) -> String {
    sha256_hex(value.to_string().as_bytes())
}

/// Object poses of `reference` (sampled at `fps`) at the control steps
/// after `goal_step`.
fn demo_after_goal(
    reference: &[Pose],
    fps: f64,
    plan: &ControlPlan,
    goal_step: usize,
) -> Vec<Pose> {
    let last = reference.len() - 1;
    (goal_step + 1..plan.len())
        .map(|s| {
            let f = (plan.times[s] * fps).clamp(0.0, last as f64);
            let i = (f.floor() as usize).min(last);
            let j = (i + 1).min(last);
            reference[i].interpolate(&reference[j], f - i as f64)
        })
        .collect()
}

/// Executed object trajectory per control step: the start pose, the primary
/// replay up to the pre-grasp step, the grasp rollout up to the goal step
/// and the tracked manipulation.
pub fn executed_trajectory(
    start: &Pose,
    primary: &PrimaryTrajectory,
    episode: &EpisodeConfig,
    rollout: &GraspRollout,
    tracking: &TrackingRecord,
) -> Vec<Pose> {
    let mut out = vec![*start];
    out.extend_from_slice(&primary.object[..=episode.pregrasp_step]);
    out.extend(
        rollout
            .object
            .iter()
            .take(episode.goal_step - episode.pregrasp_step),
    );
    out.extend(tracking.object.iter().skip(1));
    out
}

/// Decides per stage whether to reuse the bundled outputs or recompute them.
struct Runner {
    bundle: Bundle,
    resume_from: Option<Stage>,
    world_key: String,
}

impl Runner {
    /// Input key of `stage`: the world digest, the config fields it reads and
    /// the digests of the upstream outputs it reads.
    fn key(&self, stage: Stage, config: serde_json::Value, upstream: &[&str]) -> String {
        let files: BTreeMap<&str, Option<&String>> = upstream
            .iter()
            .map(|f| (*f, self.bundle.manifest().digest(f)))
            .collect();
        digest_of(&json!({
            "stage": stage,
            "world": self.world_key,
            "config": config,
            "upstream": files,
        }))
    }

    fn reuse(&self, stage: Stage, key: &str) -> Result<bool, PipelineError> {
        let current = self.bundle.is_current(stage, key);
        match self.resume_from {
            Some(from) if stage < from && !current => Err(PipelineError::Resume(format!(
                "stage {stage} has no outputs matching the current config and inputs"
            ))),
            Some(from) if stage >= from => Ok(false),
            _ => Ok(current),
        }
    }

    /// Reuses the outputs of `stage` when its key matches, otherwise runs
    /// `compute` and records the files it writes.
    fn stage<T>(
        &mut self,
        stage: Stage,
        key: String,
        load: impl FnOnce(&Bundle) -> Result<T, PipelineError>,
        compute: impl FnOnce() -> Result<T, PipelineError>,
        save: impl FnOnce(&mut Bundle, &T) -> Result<(), PipelineError>,
    ) -> Result<T, PipelineError> {
        if self.reuse(stage, &key)? {
            log::info!("reusing stage {stage}");
            return load(&self.bundle);
        }
        self.bundle.begin_stage(stage)?;
        log::info!("running stage {stage}");
        let t = Instant::now();
        let value = compute()?;
        let seconds = t.elapsed().as_secs_f64();
        save(&mut self.bundle, &value)?;
        self.bundle.finish_stage(stage, key, seconds)?;
        Ok(value)
    }
}

/// Runs the transfer described by `cfg`, writing the bundle to `cfg.output`.
/// Stages whose inputs are unchanged since an earlier run into the same
/// directory are reused.
pub fn run_transfer(
    cfg: &TransferConfig,
    opts: &RunOptions,
) -> Result<TransferBundle, PipelineError> {
    let Inputs {
        model,
        demo,
        world_key,
    } = preflight(cfg)?;
    if opts.resume_from.is_some() && !cfg.output.join(MANIFEST).is_file() {
        return Err(PipelineError::Resume(format!(
            "no bundle in {}",
            cfg.output.display()
        )));
    }
    let bundle = Bundle::reopen(
        &cfg.output,
        &cfg.to_json(),
        cfg.seed,
        opts.no_rl,
        worker_count(),
    )?;
    let mut run = Runner {
        bundle,
        resume_from: opts.resume_from,
        world_key,
    };
    let actuator = ActuatorModel::default_for(&model);

    let key = run.key(
        Stage::Ingest,
        json!({ "grasp_frame": cfg.grasp_frame }),
        &[],
    );
    let (reference, contacts): (Vec<Pose>, ContactSet) = run.stage(
        Stage::Ingest,
        key,
        |b| Ok((b.read("reference.json")?, b.read("contacts.json")?)),
        || {
            let g = cfg
                .grasp_frame
                .unwrap_or_else(|| demo.default_grasp_frame());
            let contacts = demo
                .extract_contacts(g)
                .map_err(|e| failed(Stage::Ingest)(&e))?;
            Ok((demo.object_poses(), contacts))
        },
        |b, (reference, contacts)| {
            b.write("reference.json", reference)?;
            b.write("contacts.json", contacts)
        },
    )?;

    let key = run.key(
        Stage::Retarget,
        json!({
            "retarget": cfg.retarget,
            "solver": cfg.solver,
            "control_frequency": cfg.control_frequency,
        }),
        &[],
    );
    let mut plan: ControlPlan = run.stage(
        Stage::Retarget,
        key,
        |b| b.read("control_plan.json"),
        || {
            let f = failed(Stage::Retarget);
            let humans: Vec<_> = demo.frames().iter().map(|fr| fr.hand).collect();
            let r = retarget_sequence(&model, &humans, &cfg.retarget, &cfg.solver)
                .map_err(|e| f(&e))?;
            if !r.all_converged() {
                let n = r.converged.iter().filter(|c| !**c).count();
                log::warn!("retargeting did not converge on {n} frames");
            }
            ControlPlan::build(
                &model,
                r.q,
                demo.fps(),
                &actuator,
                cfg.control_frequency,
                &cfg.sim.gravity(),
            )
            .map_err(|e| f(&e))
        },
        |b, plan| b.write("control_plan.json", plan),
    )?;

    let world = World::new(
        model.clone(),
        demo.object().clone(),
        cfg.sim.clone(),
        actuator.clone(),
    )
    .map_err(|e| PipelineError::Validation(e.to_string()))?;
    let start = world.initial_state(plan.reference[0].clone(), reference[0]);

    let key = run.key(
        Stage::Replay,
        json!(null),
        &["control_plan.json", "reference.json"],
    );
    let primary: PrimaryTrajectory = run.stage(
        Stage::Replay,
        key,
        |b| b.read("primary.json"),
        || {
            let replay = world
                .replay(&plan, &start)
                .map_err(|e| failed(Stage::Replay)(&e))?;
            Ok(PrimaryTrajectory::from_replay(&replay))
        },
        |b, primary| b.write("primary.json", primary),
    )?;
    plan.primary = primary.hand.clone();
    plan.contact_flags = primary.contact_flags.clone();

    let key = run.key(
        Stage::Configure,
        json!({ "adapt": cfg.adapt }),
        &[
            "control_plan.json",
            "primary.json",
            "reference.json",
            "contacts.json",
        ],
    );
    let episode: EpisodeConfig = run.stage(
        Stage::Configure,
        key,
        |b| b.read("episode.json"),
        || {
            configure_episode(&model, &plan, &primary, &reference, &contacts, &cfg.adapt)
                .map_err(|e| failed(Stage::Configure)(&e))
        },
        |b, episode| b.write("episode.json", episode),
    )?;

    let env = Env::new(&world, &plan.a_primary, &episode).map_err(|e| failed(Stage::Train)(&e))?;
    let key = run.key(
        Stage::Train,
        json!({ "ppo": cfg.ppo, "seed": cfg.seed, "no_rl": opts.no_rl }),
        &["control_plan.json", "episode.json"],
    );
    let (policy, rollout, _log): (Option<ResidualPolicy>, GraspRollout, Option<Vec<u8>>) = run
        .stage(
            Stage::Train,
            key,
            |b| {
                let policy = if opts.no_rl {
                    None
                } else {
                    Some(b.read("policy.json")?)
                };
                Ok((policy, b.read("rollout.json")?, None))
            },
            || {
                let f = failed(Stage::Train);
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                let empty = || f(&"the rollout has no steps");
                if opts.no_rl {
                    let ep = env.run(None, Mode::Mean, &mut rng).map_err(|e| f(&e))?;
                    return Ok((None, GraspRollout::of(&ep, false).ok_or_else(empty)?, None));
                }
                let mut log = Vec::new();
                let out = train_residual_policy(&env, &cfg.ppo, cfg.seed, Some(&mut log))
                    .map_err(|e| f(&e))?;
                let ep = env
                    .run(Some(&out.policy), Mode::Mean, &mut rng)
                    .map_err(|e| f(&e))?;
                let rollout = GraspRollout::of(&ep, true).ok_or_else(empty)?;
                Ok((Some(out.policy), rollout, Some(log)))
            },
            |b, (policy, rollout, log)| {
                if let Some(p) = policy {
                    b.write("policy.json", p)?;
                }
                if let Some(log) = log {
                    b.write_raw("train_log.jsonl", log)?;
                }
                b.write("rollout.json", rollout)
            },
        )?;

    let key = run.key(
        Stage::Plan,
        json!(null),
        &[
            "control_plan.json",
            "episode.json",
            "reference.json",
            "rollout.json",
        ],
    );
    let manipulation: ManipulationPlan = run.stage(
        Stage::Plan,
        key,
        |b| b.read("manipulation_plan.json"),
        || {
            let f = failed(Stage::Plan);
            let t_grasp = model
                .wrist_pose(&rollout.final_state.hand.q)
                .map_err(|e| f(&e))?;
            let o_grasp = rollout.final_state.object.pose;
            let after = demo_after_goal(&reference, demo.fps(), &plan, episode.goal_step);
            let object = rebase_object_trajectory(&after, &episode.o_target, &o_grasp);
            plan_wrist(&object, t_grasp, rollout.last_control.clone()).map_err(|e| f(&e))
        },
        |b, m| b.write("manipulation_plan.json", m),
    )?;

    let key = run.key(
        Stage::Track,
        json!({ "tracking": cfg.tracking }),
        &[
            "manipulation_plan.json",
            "rollout.json",
            "primary.json",
            "episode.json",
            "reference.json",
        ],
    );
    let (tracking, executed): (TrackingRecord, Vec<Pose>) = run.stage(
        Stage::Track,
        key,
        |b| Ok((b.read("tracking.json")?, b.read("executed.json")?)),
        || {
            let t = track_manipulation(&manipulation, &world, &rollout.final_state, &cfg.tracking)
                .map_err(|e| failed(Stage::Track)(&e))?;
            let tracking = TrackingRecord {
                object: t.object,
                hand_q: t.states.iter().map(|s| s.hand.q.clone()).collect(),
                dropped: t.dropped,
                drop_step: t.drop_step,
            };
            let executed =
                executed_trajectory(&reference[0], &primary, &episode, &rollout, &tracking);
            Ok((tracking, executed))
        },
        |b, (tracking, executed)| {
            b.write("tracking.json", tracking)?;
            b.write("executed.json", executed)
        },
    )?;

    let key = run.key(
        Stage::Evaluate,
        json!({ "semantics": cfg.semantics }),
        &[
            "reference.json",
            "executed.json",
            "rollout.json",
            "tracking.json",
        ],
    );
    let report: MetricReport = run.stage(
        Stage::Evaluate,
        key,
        |b| b.read("metrics.json"),
        || {
            let evidence = Evidence {
                reference: &reference,
                executed: &executed,
                grasp_distance: rollout.final_distance,
                held: rollout.held,
                dropped: tracking.dropped,
            };
            evaluate(&evidence, &cfg.semantics).map_err(|e| failed(Stage::Evaluate)(&e))
        },
        |b, report| b.write("metrics.json", report),
    )?;

    run.bundle.commit()?;
    Ok(TransferBundle {
        dir: run.bundle.dir().to_path_buf(),
        manifest: run.bundle.manifest().clone(),
        contacts,
        plan,
        primary,
        episode,
        policy,
        rollout,
        manipulation,
        tracking,
        executed,
        report,
    })
}

fn bundle_config(bundle: &Bundle) -> Result<TransferConfig, PipelineError> {
    let text = bundle.config_json()?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Format {
        path: bundle.dir().join(CONFIG),
        message: e.to_string(),
    })
}

/// Recomputes the metrics of a bundle from its persisted trajectories.
pub fn evaluate_bundle(dir: impl AsRef<Path>) -> Result<MetricReport, PipelineError> {
    let bundle = Bundle::open(dir.as_ref())?;
    let reference: Vec<Pose> = bundle.read("reference.json")?;
    evaluate_persisted(&bundle, &reference)
}

/// Like [`evaluate_bundle`], scoring against another reference trajectory.
pub fn evaluate_bundle_against(
    dir: impl AsRef<Path>,
    reference: &[Pose],
) -> Result<MetricReport, PipelineError> {
    evaluate_persisted(&Bundle::open(dir.as_ref())?, reference)
}

fn evaluate_persisted(bundle: &Bundle, reference: &[Pose]) -> Result<MetricReport, PipelineError> {
    if !bundle.manifest().completed(Stage::Track) {
        return Err(PipelineError::Incomplete(
            "tracking has not completed".into(),
        ));
    }
    let cfg = bundle_config(bundle)?;
    let executed: Vec<Pose> = bundle.read("executed.json")?;
    let rollout: GraspRollout = bundle.read("rollout.json")?;
    let tracking: TrackingRecord = bundle.read("tracking.json")?;
    let evidence = Evidence {
        reference,
        executed: &executed,
        grasp_distance: rollout.final_distance,
        held: rollout.held,
        dropped: tracking.dropped,
    };
    evaluate(&evidence, &cfg.semantics).map_err(|e| failed(Stage::Evaluate)(&e))
}

/// Evaluates every bundle directly under `dir` and summarizes them.
pub fn corpus_report(dir: impl AsRef<Path>) -> Result<CorpusReport, PipelineError> {
    let dir = dir.as_ref();
    let mut bundles: Vec<(String, PathBuf)> = std::fs::read_dir(dir)
        .map_err(|source| PipelineError::Io {
            path: dir.to_path_buf(),
            source,
        })?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.join(MANIFEST).is_file())
        .map(|p| {
            (
                p.file_name()
                    .unwrap_or_default()
                    .to_string_lossy()
                    .into_owned(),
                p,
            )
        })
        .collect();
    bundles.sort();
    if bundles.is_empty() {
        return Err(PipelineError::Incomplete(format!(
            "no bundles under {}",
            dir.display()
        )));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()
        .map_err(|e| PipelineError::Validation(e.to_string()))?;
    let entries = pool.install(|| {
        bundles
            .par_iter()
            .map(|(name, path)| evaluate_bundle(path).map(|r| (name.clone(), r)))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(CorpusReport::new(entries))
}
