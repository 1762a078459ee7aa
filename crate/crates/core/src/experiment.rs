//! The P1–P9 protocol runner, cohorts, replay of recorded sessions, and the
//! supervised-versus-reward comparison.
//!
//! Every random draw is seeded by `derive_seed(seed, stream, subject)`:
//!
//! | draw                         | stream                      |
//! |------------------------------|-----------------------------|
//! | P1, P2, P8, P9 keyframes     | `Keyframes(phase)`          |
//! | P3–P7 curriculum             | `Curriculum`                |
//! | teacher noise in a phase     | `TeacherNoise(phase)`       |
//! | metric start states          | `MetricStarts`, subject `0` |
//!
//! With `reuse_test_keyframes` P8 and P9 reuse the P2 and P1 draws.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lspi::LinearPolicy;
use crate::metrics::{ade, armse_vs_horizon, draw_starts, metric_report, CurvePoint, MetricParams, MetricReport};
use crate::phase::{Phase, SkillRole};
use crate::record::{PhaseEntry, SessionRecord, Submission};
use crate::seeds::{stream_seed, Stream};
use crate::skills::{make_skill_s1, make_skill_s2, SkillId, SkillSpec, State};
use crate::teachers::{run_simulated_session, run_simulated_supervised, supervised_fit, TeacherModel, DEFAULT_SUPERVISED_RIDGE};
use crate::teaching::{
    build_curriculum, evaluate_submission, ideal_rewards, learner_config, optimal_policy, sample_keyframes_with,
    CurriculumParams, Keyframe, SamplingConfig, SliderSpec, TeachingOutcome, DEFAULT_KEYFRAME_BOX,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Guided,
    Control,
}

impl Group {
    pub const ALL: [Group; 2] = [Group::Guided, Group::Control];

    pub fn as_str(self) -> &'static str {
        match self {
            Group::Guided => "guided",
            Group::Control => "control",
        }
    }

    /// Whether the ideal rewards are shown in `phase`.
    pub fn sees_guidance(self, phase: Phase) -> bool {
        self == Group::Guided && phase.is_training()
    }
}

impl std::fmt::Display for Group {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Group {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "guided" => Ok(Group::Guided),
            "control" => Ok(Group::Control),
            other => Err(Error::Parse(format!("unknown group '{other}' (expected guided or control)"))),
        }
    }
}

/// A simulated subject: how they give rewards before and after training.
///
/// Guided subjects give rewards with `novice` up to and including P7 and
/// with `trained` in P8 and P9. Control subjects use `novice` throughout.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectModel {
    pub novice: TeacherModel,
    pub trained: TeacherModel,
}

impl Default for SubjectModel {
    fn default() -> Self {
        SubjectModel {
            novice: TeacherModel::untrained_biased(1.0, 2.0),
            trained: TeacherModel::trained_noisy(1.0),
        }
    }
}

impl SubjectModel {
    /// The same teacher in every phase.
    pub fn fixed(model: TeacherModel) -> Self {
        SubjectModel {
            novice: model,
            trained: model,
        }
    }

    pub fn teacher_for(&self, group: Group, phase: Phase) -> &TeacherModel {
        match (group, phase) {
            (Group::Guided, Phase::P8 | Phase::P9) => &self.trained,
            _ => &self.novice,
        }
    }
}

fn default_s1() -> SkillSpec {
    make_skill_s1(crate::skills::DEFAULT_BETA, crate::skills::DEFAULT_GAMMA).expect("default S1 is valid")
}

fn default_s2() -> SkillSpec {
    make_skill_s2(
        crate::skills::DEFAULT_BETA,
        crate::skills::DEFAULT_LINE_EPSILON,
        std::f64::consts::PI,
        0.0,
        crate::skills::DEFAULT_GAMMA,
    )
    .expect("default S2 is valid")
}

fn default_box() -> f64 {
    DEFAULT_KEYFRAME_BOX
}

/// Everything that fixes a session's keyframes and scoring, independent of
/// who is teaching.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSettings {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub subject: u64,
    #[serde(default = "default_s1")]
    pub skill_train: SkillSpec,
    #[serde(default = "default_s2")]
    pub skill_transfer: SkillSpec,
    #[serde(default)]
    pub curriculum: CurriculumParams,
    #[serde(default)]
    pub metrics: MetricParams,
    #[serde(default)]
    pub sampling: SamplingConfig,
    /// Half-width of the box test keyframes are drawn from, in mm.
    #[serde(default = "default_box")]
    pub keyframe_box: f64,
    #[serde(default)]
    pub reuse_test_keyframes: bool,
    #[serde(default)]
    pub slider: SliderSpec,
}

impl Default for ProtocolSettings {
    fn default() -> Self {
        ProtocolSettings {
            seed: 0,
            subject: 0,
            skill_train: default_s1(),
            skill_transfer: default_s2(),
            curriculum: CurriculumParams::default(),
            metrics: MetricParams::default(),
            sampling: SamplingConfig::default(),
            keyframe_box: DEFAULT_KEYFRAME_BOX,
            reuse_test_keyframes: false,
            slider: SliderSpec::default(),
        }
    }
}

impl ProtocolSettings {
    pub fn skill(&self, phase: Phase) -> &SkillSpec {
        match phase.skill_role() {
            SkillRole::Train => &self.skill_train,
            SkillRole::Transfer => &self.skill_transfer,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.metrics.m == 0 || self.metrics.horizon == 0 {
            return Err(Error::InvalidParameter("metrics.m and metrics.horizon must be at least 1".into()));
        }
        if !(self.keyframe_box.is_finite() && self.keyframe_box > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "keyframe_box must be positive, got {}",
                self.keyframe_box
            )));
        }
        if self.sampling.max_attempts == 0 || !(self.sampling.cond_max > 1.0) {
            return Err(Error::InvalidParameter(
                "sampling needs max_attempts ≥ 1 and cond_max > 1".into(),
            ));
        }
        let s = &self.slider;
        if !(s.min < s.max && s.step > 0.0 && s.min.is_finite() && s.max.is_finite()) {
            return Err(Error::InvalidParameter("slider needs min < max and step > 0".into()));
        }
        Ok(())
    }

    /// Rollout start states shared by every subject of this seed.
    pub fn metric_starts(&self, skill: &SkillSpec) -> Vec<State> {
        draw_starts(skill, self.metrics.m, stream_seed(self.seed, Stream::MetricStarts, 0))
    }
}

/// A complete simulated run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub group: Group,
    #[serde(default)]
    pub teacher: SubjectModel,
    #[serde(default)]
    pub settings: ProtocolSettings,
}

impl ProtocolConfig {
    pub fn new(group: Group, teacher: SubjectModel, seed: u64) -> Self {
        ProtocolConfig {
            group,
            teacher,
            settings: ProtocolSettings {
                seed,
                ..ProtocolSettings::default()
            },
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ProtocolConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.teacher.novice.validate()?;
        self.teacher.trained.validate()?;
        self.settings.validate()
    }
}

/// Keyframes presented in `phase`, with their conditioning under the optimal
/// policy (`None` for the rank-deficient curriculum phases).
pub fn phase_keyframes(settings: &ProtocolSettings, phase: Phase) -> Result<(Vec<Keyframe>, Option<f64>)> {
    let draw = |from: Phase| {
        let skill = settings.skill(from);
        let seed = stream_seed(settings.seed, Stream::Keyframes(from), settings.subject);
        sample_keyframes_with(skill, 8, seed, settings.keyframe_box, &settings.sampling)
    };
    let set = match phase {
        Phase::P1 | Phase::P2 => draw(phase)?,
        Phase::P8 if settings.reuse_test_keyframes => draw(Phase::P2)?,
        Phase::P9 if settings.reuse_test_keyframes => draw(Phase::P1)?,
        Phase::P8 | Phase::P9 => draw(phase)?,
        _ => {
            let seed = stream_seed(settings.seed, Stream::Curriculum, settings.subject);
            let curriculum = build_curriculum(&settings.skill_train, &settings.curriculum, seed)?;
            curriculum
                .phase(phase)
                .map(|p| p.keyframes.clone())
                .ok_or_else(|| Error::InvalidParameter(format!("no curriculum phase {phase}")))?
        }
    };
    Ok((set.keyframes, set.conditioning))
}

/// What the learner made of one phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PhaseLearning {
    Learned {
        outcome: TeachingOutcome,
        metrics: MetricReport,
    },
    /// The keyframes do not pin down all eight parameters; expected for the
    /// P3–P6 curriculum sets, which isolate one reward component each.
    NotIdentifiable { reason: String },
    /// The keyframes are well conditioned but learning broke down, typically
    /// because an intermediate policy made the LSTD system singular.
    Failed { reason: String },
}

impl PhaseLearning {
    pub fn outcome(&self) -> Option<&TeachingOutcome> {
        match self {
            PhaseLearning::Learned { outcome, .. } => Some(outcome),
            _ => None,
        }
    }

    pub fn metrics(&self) -> Option<&MetricReport> {
        match self {
            PhaseLearning::Learned { metrics, .. } => Some(metrics),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            PhaseLearning::Learned { .. } => "learned",
            PhaseLearning::NotIdentifiable { .. } => "not_identifiable",
            PhaseLearning::Failed { .. } => "failed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseResult {
    pub phase: Phase,
    pub skill: SkillId,
    pub guidance_shown: bool,
    pub keyframes: Vec<Keyframe>,
    pub conditioning: Option<f64>,
    pub submitted: Vec<f64>,
    pub ade: f64,
    pub learning: PhaseLearning,
}

/// Learns from `submitted` and scores the result on `starts`.
///
/// Numerical failures of the learner become [`PhaseLearning`] variants;
/// malformed input is an error.
pub fn score_phase(
    settings: &ProtocolSettings,
    phase: Phase,
    group: Group,
    keyframes: Vec<Keyframe>,
    conditioning: Option<f64>,
    submitted: Vec<f64>,
) -> Result<PhaseResult> {
    let skill = settings.skill(phase);
    let ideal = ideal_rewards(skill, &keyframes);
    let ade_value = ade(&submitted, &ideal)?;
    let learning = match evaluate_submission(skill, &keyframes, &submitted, &learner_config(skill)) {
        Ok(outcome) => {
            let starts = settings.metric_starts(skill);
            let metrics = metric_report(
                &outcome.theta,
                &outcome.theta_star,
                skill,
                ade_value,
                &starts,
                settings.metrics.horizon,
                false,
            )?;
            PhaseLearning::Learned { outcome, metrics }
        }
        Err(e) if e.is_numerical() => {
            let reason = e.to_string();
            if conditioning.is_none() {
                PhaseLearning::NotIdentifiable { reason }
            } else {
                PhaseLearning::Failed { reason }
            }
        }
        Err(e) => return Err(e),
    };
    Ok(PhaseResult {
        phase,
        skill: skill.skill_id(),
        guidance_shown: group.sees_guidance(phase),
        keyframes,
        conditioning,
        submitted,
        ade: ade_value,
        learning,
    })
}

/// Before/after comparison on one skill.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseDelta {
    pub before: Phase,
    pub after: Phase,
    pub ade_before: f64,
    pub ade_after: f64,
    /// `1 − ade_after / ade_before`; `None` when `ade_before` is zero.
    pub ade_reduction: Option<f64>,
    pub armse_before: Option<f64>,
    pub armse_after: Option<f64>,
}

impl PhaseDelta {
    fn between(before: &PhaseResult, after: &PhaseResult) -> Self {
        PhaseDelta {
            before: before.phase,
            after: after.phase,
            ade_before: before.ade,
            ade_after: after.ade,
            ade_reduction: (before.ade > 0.0).then(|| 1.0 - after.ade / before.ade),
            armse_before: before.learning.metrics().map(|m| m.armse),
            armse_after: after.learning.metrics().map(|m| m.armse),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub seed: u64,
    pub subject: u64,
    pub group: Group,
    pub phases: Vec<PhaseResult>,
    /// P1 against P9 (trained skill); present once both are done.
    pub h1: Option<PhaseDelta>,
    /// P2 against P8 (transfer skill); present once both are done.
    pub h2: Option<PhaseDelta>,
}

impl ExperimentResult {
    pub fn assemble(settings: &ProtocolSettings, group: Group, phases: Vec<PhaseResult>) -> Result<Self> {
        for (i, p) in phases.iter().enumerate() {
            if p.phase.index() != i {
                return Err(Error::InvalidParameter(format!(
                    "phase {} recorded in position {}; phases must follow P1…P9",
                    p.phase,
                    i + 1
                )));
            }
        }
        let delta = |a: Phase, b: Phase| match (phases.get(a.index()), phases.get(b.index())) {
            (Some(x), Some(y)) => Some(PhaseDelta::between(x, y)),
            _ => None,
        };
        Ok(ExperimentResult {
            seed: settings.seed,
            subject: settings.subject,
            group,
            h1: delta(Phase::P1, Phase::P9),
            h2: delta(Phase::P2, Phase::P8),
            phases,
        })
    }

    pub fn phase(&self, phase: Phase) -> Option<&PhaseResult> {
        self.phases.get(phase.index()).filter(|p| p.phase == phase)
    }
}

/// Runs P1–P9 with a simulated subject.
pub fn run_protocol(config: &ProtocolConfig) -> Result<ExperimentResult> {
    Ok(run_protocol_traced(config)?.0)
}

/// As [`run_protocol`], also returning the session record of the run.
/// Simulated submissions carry timestamp 0.
pub fn run_protocol_traced(config: &ProtocolConfig) -> Result<(ExperimentResult, SessionRecord)> {
    config.validate()?;
    let settings = &config.settings;
    let mut record = SessionRecord::new(
        format!("sim-{}-{}-{}", settings.seed, config.group, settings.subject),
        config.group,
        0,
        settings.clone(),
    );
    for phase in Phase::ALL {
        let entry = simulate_phase(config, phase).map_err(|e| e.in_phase(phase))?;
        record.phases.push(entry);
    }
    record.status = crate::record::SessionStatus::Completed;
    let result = ExperimentResult::assemble(
        settings,
        config.group,
        record.phases.iter().map(|e| e.result.clone()).collect(),
    )?;
    Ok((result, record))
}

fn simulate_phase(config: &ProtocolConfig, phase: Phase) -> Result<PhaseEntry> {
    let settings = &config.settings;
    let skill = settings.skill(phase);
    let (keyframes, conditioning) = phase_keyframes(settings, phase)?;
    let teacher = config
        .teacher
        .teacher_for(config.group, phase)
        .with_seed(stream_seed(settings.seed, Stream::TeacherNoise(phase), settings.subject));
    let rewards = run_simulated_session(&teacher, phase, skill, &keyframes, &settings.slider);
    let guided = config.group.sees_guidance(phase);
    let ideal = guided.then(|| ideal_rewards(skill, &keyframes));
    let submissions = rewards
        .iter()
        .enumerate()
        .map(|(index, &reward)| Submission { index, reward, at_ms: 0 })
        .collect();
    let result = score_phase(settings, phase, config.group, keyframes, conditioning, rewards)?;
    Ok(PhaseEntry {
        phase,
        submissions,
        ideal_rewards: ideal,
        result,
    })
}

/// Recomputes an experiment from a session record's keyframes and rewards.
///
/// Keyframes are checked against the record's seed before scoring.
pub fn replay(record: &SessionRecord) -> Result<ExperimentResult> {
    let settings = &record.settings;
    settings.validate()?;
    let mut phases = Vec::with_capacity(record.phases.len());
    for entry in &record.phases {
        let phase = entry.phase;
        let (keyframes, conditioning) = phase_keyframes(settings, phase).map_err(|e| e.in_phase(phase))?;
        if keyframes != entry.result.keyframes {
            return Err(Error::InvalidParameter(format!(
                "recorded keyframes of {phase} do not match seed {} subject {}",
                settings.seed, settings.subject
            )));
        }
        let rewards: Vec<f64> = entry.submissions.iter().map(|s| s.reward).collect();
        phases.push(
            score_phase(settings, phase, record.group, keyframes, conditioning, rewards)
                .map_err(|e| e.in_phase(phase))?,
        );
    }
    ExperimentResult::assemble(settings, record.group, phases)
}

/// One row of a cohort table: one subject in one phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortRow {
    pub seed: u64,
    pub group: Group,
    pub subject: u64,
    pub phase: Phase,
    pub skill: SkillId,
    pub status: String,
    pub ade: f64,
    pub risk: Option<f64>,
    pub armse: Option<f64>,
    pub atc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    pub results: Vec<ExperimentResult>,
    pub rows: Vec<CohortRow>,
}

impl Cohort {
    pub fn group(&self, group: Group) -> impl Iterator<Item = &ExperimentResult> {
        self.results.iter().filter(move |r| r.group == group)
    }
}

/// Runs `n_per_group` subjects per group for every seed. Subjects run in
/// parallel; results are ordered by seed, group (guided first), subject.
pub fn run_cohort(base: &ProtocolConfig, n_per_group: usize, seeds: &[u64]) -> Result<Cohort> {
    if n_per_group == 0 {
        return Err(Error::InvalidParameter("n_per_group must be at least 1".into()));
    }
    base.validate()?;
    let jobs: Vec<ProtocolConfig> = seeds
        .iter()
        .flat_map(|&seed| {
            Group::ALL.into_iter().flat_map(move |group| {
                (0..n_per_group as u64).map(move |subject| {
                    let mut c = base.clone();
                    c.group = group;
                    c.settings.seed = seed;
                    c.settings.subject = subject;
                    c
                })
            })
        })
        .collect();
    let results = jobs
        .par_iter()
        .map(run_protocol)
        .collect::<Result<Vec<_>>>()?;
    let rows = results.iter().flat_map(cohort_rows).collect();
    Ok(Cohort { results, rows })
}

/// Group-level medians of a cohort.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: Group,
    pub subjects: usize,
    /// Median over subjects of `1 − ADE(P9) / ADE(P1)`.
    pub median_h1_ade_reduction: Option<f64>,
    /// Median over subjects of `1 − ADE(P8) / ADE(P2)`.
    pub median_h2_ade_reduction: Option<f64>,
    pub phases: Vec<PhaseSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub phase: Phase,
    pub median_ade: Option<f64>,
    /// Over subjects whose learner produced a policy.
    pub median_armse: Option<f64>,
    pub learned: usize,
    pub not_identifiable: usize,
    pub failed: usize,
}

impl Cohort {
    pub fn summary(&self) -> Vec<GroupSummary> {
        Group::ALL
            .into_iter()
            .map(|group| {
                let members: Vec<&ExperimentResult> = self.group(group).collect();
                let reduction = |pick: fn(&ExperimentResult) -> Option<PhaseDelta>| {
                    let mut v: Vec<f64> = members.iter().filter_map(|r| pick(r)?.ade_reduction).collect();
                    median(&mut v)
                };
                let phases = Phase::ALL
                    .into_iter()
                    .map(|phase| {
                        let results: Vec<&PhaseResult> = members.iter().filter_map(|r| r.phase(phase)).collect();
                        let mut ade: Vec<f64> = results.iter().map(|p| p.ade).collect();
                        let mut armse: Vec<f64> =
                            results.iter().filter_map(|p| p.learning.metrics().map(|m| m.armse)).collect();
                        let count = |label: &str| results.iter().filter(|p| p.learning.label() == label).count();
                        PhaseSummary {
                            phase,
                            median_ade: median(&mut ade),
                            median_armse: median(&mut armse),
                            learned: count("learned"),
                            not_identifiable: count("not_identifiable"),
                            failed: count("failed"),
                        }
                    })
                    .collect();
                GroupSummary {
                    group,
                    subjects: members.len(),
                    median_h1_ade_reduction: reduction(|r| r.h1),
                    median_h2_ade_reduction: reduction(|r| r.h2),
                    phases,
                }
            })
            .collect()
    }
}

pub fn cohort_rows(r: &ExperimentResult) -> Vec<CohortRow> {
    r.phases
        .iter()
        .map(|p| CohortRow {
            seed: r.seed,
            group: r.group,
            subject: r.subject,
            phase: p.phase,
            skill: p.skill,
            status: p.learning.label().to_string(),
            ade: p.ade,
            risk: p.learning.outcome().map(|o| o.risk),
            armse: p.learning.metrics().map(|m| m.armse),
            atc: p.learning.metrics().map(|m| m.atc),
        })
        .collect()
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Reward learner against supervised learner on one skill.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkillComparison {
    pub skill: SkillId,
    /// Why the reward learner produced no policy, if it did not.
    pub rlfd_failure: Option<String>,
    pub rlfd_gain: Option<[[f64; 2]; 2]>,
    pub supervised_gain: [[f64; 2]; 2],
    pub rlfd_spectral_radius: Option<f64>,
    pub supervised_spectral_radius: f64,
    /// First horizon at which the better of the two learners changes,
    /// relative to horizon 1.
    pub crossover: Option<usize>,
    pub curve: Vec<CurvePoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupervisedComparison {
    pub seed: u64,
    pub subject: u64,
    pub skills: Vec<SkillComparison>,
}

pub const COMPARISON_HORIZON: usize = 400;

fn gain_rows(p: &LinearPolicy) -> [[f64; 2]; 2] {
    [[p.gain[(0, 0)], p.gain[(0, 1)]], [p.gain[(1, 0)], p.gain[(1, 1)]]]
}

fn crossover(curve: &[CurvePoint]) -> Option<usize> {
    let first = curve.first()?;
    let rlfd_ahead = first.armse_rlfd? < first.armse_supervised;
    curve
        .iter()
        .find(|p| {
            p.armse_rlfd
                .is_some_and(|r| (r < p.armse_supervised) != rlfd_ahead && r != p.armse_supervised)
        })
        .map(|p| p.horizon)
}

/// Teaches both skills to a reward learner and to a supervised learner with
/// the `trained` teacher of `config`, on the P1 (S1) and P2 (S2) keyframes,
/// and scores both against the optimal policy for horizons `1..=400`.
///
/// A numerical failure of the reward learner is reported in the result, not
/// raised.
pub fn compare_supervised(config: &ProtocolConfig) -> Result<SupervisedComparison> {
    config.validate()?;
    let settings = &config.settings;
    let mut skills = Vec::with_capacity(2);
    for phase in [Phase::P1, Phase::P2] {
        let compare = || -> Result<SkillComparison> {
            let skill = settings.skill(phase);
            let (keyframes, _) = phase_keyframes(settings, phase)?;
            let teacher = config
                .teacher
                .trained
                .with_seed(stream_seed(settings.seed, Stream::TeacherNoise(phase), settings.subject));
            let rewards = run_simulated_session(&teacher, phase, skill, &keyframes, &settings.slider);
            let rlfd = evaluate_submission(skill, &keyframes, &rewards, &learner_config(skill))
                .and_then(|o| crate::lspi::policy_from_theta(&o.theta));
            let (rlfd, rlfd_failure) = match rlfd {
                Ok(p) => (Some(p), None),
                Err(e) if e.is_numerical() => (None, Some(e.to_string())),
                Err(e) => return Err(e),
            };
            let states: Vec<State> = keyframes.iter().map(|k| k.state).collect();
            let demos = run_simulated_supervised(&teacher, phase, skill, &states)?;
            let supervised = supervised_fit(skill, &demos, DEFAULT_SUPERVISED_RIDGE)?;
            let reference = optimal_policy(skill)?;
            let horizons: Vec<usize> = (1..=COMPARISON_HORIZON).collect();
            let curve = armse_vs_horizon(
                rlfd.as_ref(),
                &supervised,
                &reference,
                skill,
                &horizons,
                &settings.metric_starts(skill),
            )?;
            Ok(SkillComparison {
                skill: skill.skill_id(),
                rlfd_failure,
                rlfd_gain: rlfd.as_ref().map(gain_rows),
                supervised_gain: gain_rows(&supervised),
                rlfd_spectral_radius: rlfd.as_ref().map(LinearPolicy::spectral_radius),
                supervised_spectral_radius: supervised.spectral_radius(),
                crossover: crossover(&curve),
                curve,
            })
        };
        skills.push(compare().map_err(|e| e.in_phase(phase))?);
    }
    Ok(SupervisedComparison {
        seed: settings.seed,
        subject: settings.subject,
        skills,
    })
}
