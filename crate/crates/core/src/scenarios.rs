//! Ready-made problems: target localisation on a grid with distance and
//! up/down signals, localisation in the unit square with distance and
//! azimuth signals, and a seeded Monte Carlo harness over random sensor
//! placements.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{group_objective, objective_margin, BOUNDARY_TOLERANCE};
use crate::error::{Error, Result};
use crate::learning::{simulate_final, GeneratorSampler, LearningProblem};
use crate::network::{
    stationary_distribution, validate_network, Gamma, Network, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use crate::rng;
use crate::signal_model::{HypothesisSpace, LikelihoodFamily, SignalModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (other.x - self.x).hypot(other.y - self.y)
    }

    /// Bearing from `self` to `other`, `atan2(Δy, Δx)` in (−π, π].
    pub fn azimuth_to(&self, other: &Point) -> f64 {
        (other.y - self.y).atan2(other.x - self.x)
    }

    fn in_unit_square(&self) -> bool {
        (0.0..=1.0).contains(&self.x) && (0.0..=1.0).contains(&self.y)
    }
}

/// Two-agent network shared by both shipped scenarios.
pub fn two_agent_weights() -> Vec<Vec<f64>> {
    vec![vec![0.0, 1.0], vec![0.7, 0.3]]
}

pub fn two_agent_network() -> Network {
    validate_network(&two_agent_weights()).expect("fixed matrix is valid")
}

/// Target on an integer grid; agents hear noisy distances (type 0) and
/// whether the target is above or below them (type 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridScenario {
    pub grid_side: usize,
    pub agent_positions: Vec<Point>,
    pub target: Point,
    pub noise_std: f64,
    pub up_prob: f64,
    pub gamma: Vec<f64>,
}

impl Default for GridScenario {
    /// Agents sit on the line y = 1.5, so each state and its mirror image
    /// across that line look identical through distances alone.
    fn default() -> Self {
        Self {
            grid_side: 4,
            agent_positions: vec![Point::new(0.3, 1.5), Point::new(2.6, 1.5)],
            target: Point::new(1.0, 2.0),
            noise_std: 0.5,
            up_prob: 0.8,
            gamma: vec![0.5, 0.5],
        }
    }
}

impl GridScenario {
    /// Grid points in row-major order (`y` outer, `x` inner).
    pub fn grid_points(&self) -> Vec<Point> {
        let s = self.grid_side;
        (0..s * s)
            .map(|k| Point::new((k % s) as f64, (k / s) as f64))
            .collect()
    }
}

pub fn grid_label(p: &Point) -> String {
    format!("({},{})", p.x, p.y)
}

/// Builds the grid scenario. The generators equal the structures at the
/// target, so the model is well specified. A state level with an agent
/// counts as above it.
pub fn build_example1(scn: &GridScenario) -> Result<LearningProblem> {
    if scn.grid_side == 0 {
        return Err(Error::InvalidParameter("grid side must be positive".into()));
    }
    if scn.agent_positions.len() != 2 {
        return Err(Error::InvalidParameter(format!(
            "the grid scenario uses the fixed two-agent network, got {} agents",
            scn.agent_positions.len()
        )));
    }
    if !(scn.up_prob > 0.0 && scn.up_prob < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "up probability {} must lie in (0,1)",
            scn.up_prob
        )));
    }
    let states = scn.grid_points();
    let star = states
        .iter()
        .position(|p| p == &scn.target)
        .ok_or(Error::TargetOffGrid {
            x: scn.target.x,
            y: scn.target.y,
        })?;
    let up_down = |above: bool| {
        let pu = if above {
            scn.up_prob
        } else {
            1.0 - scn.up_prob
        };
        LikelihoodFamily::categorical(vec!["U", "D"], vec![pu, 1.0 - pu])
    };
    let mut structures = Vec::new();
    for agent in &scn.agent_positions {
        let dist = states
            .iter()
            .map(|s| LikelihoodFamily::gaussian(agent.distance(s), scn.noise_std))
            .collect::<Result<Vec<_>>>()?;
        let vert = states
            .iter()
            .map(|s| up_down(s.y >= agent.y))
            .collect::<Result<Vec<_>>>()?;
        structures.push(vec![dist, vert]);
    }
    let generators = structures
        .iter()
        .map(|per_type| per_type.iter().map(|fams| fams[star].clone()).collect())
        .collect();
    let model = SignalModel::new(structures, generators)?;
    let hyp = HypothesisSpace::new(states.iter().map(grid_label).collect(), star)?;
    LearningProblem::new(
        two_agent_network(),
        Gamma::relaxed(scn.gamma.clone())?,
        model,
        hyp,
    )
}

/// Sensors in the unit square observe noisy distance (type 0) and azimuth
/// (type 1) to a target; candidate states form a uniform lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationScenario {
    pub agent_positions: Vec<Point>,
    pub target: Point,
    /// Lattice points per side; `M = grid_side²`.
    pub grid_side: usize,
    pub sigma1: f64,
    pub sigma2: f64,
    /// Azimuth structures use variance `factor · σ2²`.
    pub azimuth_variance_factor: f64,
    pub weights: Vec<Vec<f64>>,
    pub gamma: Vec<f64>,
}

impl LocalizationScenario {
    pub fn new(agent_positions: Vec<Point>, target: Point) -> Self {
        Self {
            agent_positions,
            target,
            grid_side: 6,
            sigma1: 0.5,
            sigma2: 0.5,
            azimuth_variance_factor: 10.0,
            weights: two_agent_weights(),
            gamma: vec![0.5, 0.5],
        }
    }

    /// Lattice `(c/(s−1), r/(s−1))`, row-major with `r` outer.
    pub fn candidates(&self) -> Vec<Point> {
        lattice(self.grid_side)
    }

    /// Candidate closest to the target (lowest index on ties).
    pub fn nearest_candidate(&self) -> usize {
        nearest(&self.candidates(), &self.target)
    }
}

pub fn lattice(side: usize) -> Vec<Point> {
    if side == 1 {
        return vec![Point::new(0.5, 0.5)];
    }
    let h = (side - 1) as f64;
    (0..side * side)
        .map(|k| Point::new((k % side) as f64 / h, (k / side) as f64 / h))
        .collect()
}

fn nearest(points: &[Point], target: &Point) -> usize {
    (0..points.len())
        .min_by(|&a, &b| {
            points[a]
                .distance(target)
                .total_cmp(&points[b].distance(target))
        })
        .expect("non-empty lattice")
}

pub fn lattice_label(p: &Point) -> String {
    format!("({:.4},{:.4})", p.x, p.y)
}

/// Builds the localisation scenario. The true state is the candidate nearest
/// the target; when the target is off-lattice the model is misspecified.
pub fn build_example2(scn: &LocalizationScenario) -> Result<LearningProblem> {
    for p in scn
        .agent_positions
        .iter()
        .chain(std::iter::once(&scn.target))
    {
        if !p.in_unit_square() {
            return Err(Error::OutOfBounds { x: p.x, y: p.y });
        }
    }
    if scn.agent_positions.is_empty() || scn.grid_side == 0 {
        return Err(Error::InvalidParameter(
            "need at least one agent and one candidate state".into(),
        ));
    }
    if scn.azimuth_variance_factor.is_nan() || scn.azimuth_variance_factor <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "azimuth variance factor {} must be positive",
            scn.azimuth_variance_factor
        )));
    }
    let network = validate_network(&scn.weights)?;
    let candidates = scn.candidates();
    let star = nearest(&candidates, &scn.target);
    let azimuth_std = scn.sigma2 * scn.azimuth_variance_factor.sqrt();

    let mut structures = Vec::new();
    let mut generators = Vec::new();
    for agent in &scn.agent_positions {
        let dist = candidates
            .iter()
            .map(|c| LikelihoodFamily::gaussian(agent.distance(c), scn.sigma1))
            .collect::<Result<Vec<_>>>()?;
        let azim = candidates
            .iter()
            .map(|c| LikelihoodFamily::gaussian(agent.azimuth_to(c), azimuth_std))
            .collect::<Result<Vec<_>>>()?;
        structures.push(vec![dist, azim]);
        generators.push(vec![
            LikelihoodFamily::gaussian(agent.distance(&scn.target), scn.sigma1)?,
            LikelihoodFamily::gaussian(agent.azimuth_to(&scn.target), scn.sigma2)?,
        ]);
    }
    let model = SignalModel::new(structures, generators)?;
    let hyp = HypothesisSpace::new(candidates.iter().map(lattice_label).collect(), star)?;
    LearningProblem::new(network, Gamma::relaxed(scn.gamma.clone())?, model, hyp)
}

/// Monte Carlo campaign over uniformly random sensor placements with a fixed
/// target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Campaign {
    pub trials: usize,
    pub seed: u64,
    pub horizon: u64,
    pub target: Point,
    #[serde(default = "default_agents")]
    pub agents: usize,
    #[serde(default = "default_grid_side")]
    pub grid_side: usize,
    #[serde(default = "default_sigma")]
    pub sigma1: f64,
    #[serde(default = "default_sigma")]
    pub sigma2: f64,
    #[serde(default = "default_factor")]
    pub azimuth_variance_factor: f64,
    #[serde(default = "two_agent_weights")]
    pub weights: Vec<Vec<f64>>,
    #[serde(default = "default_gamma")]
    pub gamma: Vec<f64>,
}

fn default_agents() -> usize {
    2
}
fn default_grid_side() -> usize {
    6
}
fn default_sigma() -> f64 {
    0.5
}
fn default_factor() -> f64 {
    10.0
}
fn default_gamma() -> Vec<f64> {
    vec![0.5, 0.5]
}

impl Campaign {
    pub fn new(trials: usize, seed: u64, horizon: u64, target: Point) -> Self {
        Self {
            trials,
            seed,
            horizon,
            target,
            agents: default_agents(),
            grid_side: default_grid_side(),
            sigma1: default_sigma(),
            sigma2: default_sigma(),
            azimuth_variance_factor: default_factor(),
            weights: two_agent_weights(),
            gamma: default_gamma(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParameter(
                "at least one trial required".into(),
            ));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be at least 1".into()));
        }
        if self.weights.len() != self.agents {
            return Err(Error::DimensionMismatch(format!(
                "{} agents but a {}-row weight matrix",
                self.agents,
                self.weights.len()
            )));
        }
        if self.gamma.len() != 2 {
            return Err(Error::DimensionMismatch(
                "localisation uses two signal types".into(),
            ));
        }
        validate_network(&self.weights)?;
        Gamma::relaxed(self.gamma.clone())?;
        // builds a throwaway scenario to surface parameter errors up front
        let probe = vec![Point::new(0.5, 0.5); self.agents];
        build_example2(&self.scenario(probe))?;
        Ok(())
    }

    fn scenario(&self, agent_positions: Vec<Point>) -> LocalizationScenario {
        LocalizationScenario {
            agent_positions,
            target: self.target,
            grid_side: self.grid_side,
            sigma1: self.sigma1,
            sigma2: self.sigma2,
            azimuth_variance_factor: self.azimuth_variance_factor,
            weights: self.weights.clone(),
            gamma: self.gamma.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LearnerOutcome {
    /// Every agent on every type ranks the target's nearest candidate first.
    pub success: bool,
    /// Common argmax across agents and types at the horizon, if any.
    pub simulated_limit: Option<usize>,
    /// Group-objective minimiser; `None` when tied within tolerance.
    pub predicted_limit: Option<usize>,
    pub objective_gap: f64,
    /// `None` for tied (boundary) predictions.
    pub agrees: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub placement_seed: u64,
    pub agent_positions: Vec<Point>,
    pub combined: LearnerOutcome,
    pub type1_only: LearnerOutcome,
    pub type2_only: LearnerOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct AgreementStats {
    pub non_boundary: usize,
    pub agreed: usize,
    pub rate: f64,
}

impl AgreementStats {
    fn from_outcomes<'a>(outcomes: impl Iterator<Item = &'a LearnerOutcome>) -> Self {
        let mut s = AgreementStats::default();
        for o in outcomes {
            if let Some(a) = o.agrees {
                s.non_boundary += 1;
                s.agreed += usize::from(a);
            }
        }
        s.rate = if s.non_boundary == 0 {
            1.0
        } else {
            s.agreed as f64 / s.non_boundary as f64
        };
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Agreement {
    pub combined: AgreementStats,
    pub type1_only: AgreementStats,
    pub type2_only: AgreementStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloSummary {
    pub trials: usize,
    pub seed: u64,
    pub horizon: u64,
    pub target: Point,
    pub nearest_state: usize,
    pub nearest_state_label: String,
    pub successes_combined: usize,
    pub successes_type1_only: usize,
    pub successes_type2_only: usize,
    pub agreement: Agreement,
    pub records: Vec<TrialRecord>,
}

fn learner_outcome(
    problem: &LearningProblem,
    seed: u64,
    trial: u64,
    horizon: u64,
) -> Result<LearnerOutcome> {
    let pi = stationary_distribution(&problem.network, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let objective = group_objective(&problem.model, &pi, &problem.gamma)?;
    let (best, gap) = objective_margin(&objective).expect("non-empty state space");
    let predicted = (gap > BOUNDARY_TOLERANCE).then_some(best);

    let mut source = GeneratorSampler::for_model(&problem.model, seed, trial);
    let last = simulate_final(problem, horizon, &mut source)?;
    let simulated = last.consensus_argmax();
    Ok(LearnerOutcome {
        success: simulated == Some(problem.hypotheses.true_index()),
        simulated_limit: simulated,
        predicted_limit: predicted,
        objective_gap: gap,
        agrees: predicted.map(|p| simulated == Some(p)),
    })
}

/// Runs one placement with the combined weights and each single-type point
/// mass. All three learners see the same observation streams.
pub fn run_trial(campaign: &Campaign, trial: usize) -> Result<TrialRecord> {
    let placement_seed = rng::placement_seed(campaign.seed, trial as u64);
    let mut placement = rng::placement_stream(placement_seed);
    let agent_positions: Vec<Point> = (0..campaign.agents)
        .map(|_| {
            let x = placement.random::<f64>();
            let y = placement.random::<f64>();
            Point::new(x, y)
        })
        .collect();
    let combined = build_example2(&campaign.scenario(agent_positions.clone()))?;
    let outcome = |gamma: Gamma| -> Result<LearnerOutcome> {
        let prob = combined.with_gamma(gamma)?;
        learner_outcome(&prob, campaign.seed, trial as u64, campaign.horizon)
    };
    Ok(TrialRecord {
        trial,
        placement_seed,
        agent_positions,
        combined: outcome(combined.gamma.clone())?,
        type1_only: outcome(Gamma::point_mass(2, 0)?)?,
        type2_only: outcome(Gamma::point_mass(2, 1)?)?,
    })
}

/// Runs every trial, on up to `jobs` threads. Results are ordered by trial
/// index, so the summary does not depend on `jobs`.
pub fn monte_carlo(campaign: &Campaign, jobs: usize) -> Result<MonteCarloSummary> {
    campaign.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let records: Vec<TrialRecord> = pool.install(|| {
        (0..campaign.trials)
            .into_par_iter()
            .map(|t| run_trial(campaign, t))
            .collect::<Result<Vec<_>>>()
    })?;

    let scn = campaign.scenario(vec![]);
    let nearest_state = scn.nearest_candidate();
    let count =
        |f: fn(&TrialRecord) -> &LearnerOutcome| records.iter().filter(|r| f(r).success).count();
    Ok(MonteCarloSummary {
        trials: campaign.trials,
        seed: campaign.seed,
        horizon: campaign.horizon,
        target: campaign.target,
        nearest_state,
        nearest_state_label: lattice_label(&scn.candidates()[nearest_state]),
        successes_combined: count(|r| &r.combined),
        successes_type1_only: count(|r| &r.type1_only),
        successes_type2_only: count(|r| &r.type2_only),
        agreement: Agreement {
            combined: AgreementStats::from_outcomes(records.iter().map(|r| &r.combined)),
            type1_only: AgreementStats::from_outcomes(records.iter().map(|r| &r.type1_only)),
            type2_only: AgreementStats::from_outcomes(records.iter().map(|r| &r.type2_only)),
        },
        records,
    })
}
