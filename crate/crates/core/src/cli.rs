//! Config files and the `run`, `analyze`, `montecarlo` and `scenario`
//! commands.
//!
//! Configs and reports are JSON; trajectories are CSV with columns
//! `t,agent,signal_type,state,belief` and beliefs in linear scale.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{build_report, AnalysisReport};
use crate::error::{Error, Result};
use crate::learning::{
    run, ConvergenceCriterion, ConvergenceReport, GeneratorSampler, LearningProblem, RunOptions,
    Trajectory,
};
use crate::network::{validate_network, Gamma};
use crate::scenarios::{
    build_example1, build_example2, monte_carlo, Campaign, GridScenario, LocalizationScenario,
    MonteCarloSummary,
};
use crate::signal_model::{HypothesisSpace, LikelihoodFamily, SignalModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub weights: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypothesesConfig {
    pub labels: Vec<String>,
    pub true_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalModelConfig {
    /// `structures[i][l][θ]`.
    pub structures: Vec<Vec<Vec<LikelihoodFamily>>>,
    /// `generators[i][l]`.
    pub generators: Vec<Vec<LikelihoodFamily>>,
}

/// A single-run experiment: model, horizon and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub network: NetworkConfig,
    pub gamma: Vec<f64>,
    pub hypotheses: HypothesesConfig,
    pub signal_model: SignalModelConfig,
    pub horizon: u64,
    pub seed: u64,
    #[serde(default = "one")]
    pub record_stride: u64,
    #[serde(default)]
    pub convergence: ConvergenceCriterion,
}

fn one() -> u64 {
    1
}

impl ExperimentConfig {
    pub fn from_problem(problem: &LearningProblem, horizon: u64, seed: u64) -> Self {
        Self {
            network: NetworkConfig {
                weights: problem.network.to_rows(),
            },
            gamma: problem.gamma.as_slice().to_vec(),
            hypotheses: HypothesesConfig {
                labels: problem.hypotheses.labels().to_vec(),
                true_index: problem.hypotheses.true_index(),
            },
            signal_model: SignalModelConfig {
                structures: problem.model.nested_structures(),
                generators: problem.model.nested_generators(),
            },
            horizon,
            seed,
            record_stride: 1,
            convergence: ConvergenceCriterion::default(),
        }
    }

    /// Runs every model validation and assembles the problem.
    pub fn problem(&self) -> Result<LearningProblem> {
        let network = validate_network(&self.network.weights)?;
        let gamma = Gamma::relaxed(self.gamma.clone())?;
        let model = SignalModel::new(
            self.signal_model.structures.clone(),
            self.signal_model.generators.clone(),
        )?;
        let hyp = HypothesisSpace::new(self.hypotheses.labels.clone(), self.hypotheses.true_index)?;
        LearningProblem::new(network, gamma, model, hyp)
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            horizon: self.horizon,
            record_stride: self.record_stride,
            convergence: self.convergence,
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(h) = o.horizon {
            self.horizon = h;
        }
    }
}

/// Command-line values that take precedence over config fields.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub horizon: Option<u64>,
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Parses and fully validates an experiment config.
pub fn load_experiment(path: &Path) -> Result<(ExperimentConfig, LearningProblem)> {
    let cfg: ExperimentConfig = parse_json(path)?;
    let problem = cfg.problem()?;
    Ok((cfg, problem))
}

pub fn load_campaign(path: &Path) -> Result<Campaign> {
    let c: Campaign = parse_json(path)?;
    c.validate()?;
    Ok(c)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Writes `t,agent,signal_type,state,belief` rows for every recorded state,
/// beliefs with 12 significant digits.
pub fn write_trajectory_csv<W: Write>(
    out: W,
    trajectory: &Trajectory,
    labels: &[String],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(["t", "agent", "signal_type", "state", "belief"])
        .map_err(io)?;
    for s in &trajectory.states {
        let (n, p, m) = s.dims();
        for i in 0..n {
            for l in 0..p {
                for (theta, label) in labels.iter().enumerate().take(m) {
                    w.write_record([
                        s.t().to_string(),
                        i.to_string(),
                        l.to_string(),
                        label.clone(),
                        format!("{:.11e}", s.belief(i, l, theta)),
                    ])
                    .map_err(io)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentTypeArgmax {
    pub agent: usize,
    pub signal_type: usize,
    pub state: String,
    pub belief: f64,
}

/// Summary written next to the trajectory CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinalState {
    pub t: u64,
    pub seed: u64,
    pub true_state: String,
    pub argmax: Vec<AgentTypeArgmax>,
    /// Common argmax across all agents and types, if they agree.
    pub consensus: Option<String>,
    pub convergence: ConvergenceReport,
}

/// Path of the final-state JSON written alongside a trajectory CSV.
pub fn final_state_path(out: &Path) -> PathBuf {
    out.with_extension("final.json")
}

pub fn cmd_run(config: &Path, out: &Path, overrides: &Overrides) -> Result<FinalState> {
    let (mut cfg, problem) = load_experiment(config)?;
    cfg.apply(overrides);
    let mut source = GeneratorSampler::for_model(&problem.model, cfg.seed, 0);
    let trajectory = run(&problem, &cfg.run_options(), &mut source)?;
    let labels = problem.hypotheses.labels();

    let file = fs::File::create(out)?;
    write_trajectory_csv(std::io::BufWriter::new(file), &trajectory, labels)?;

    let last = trajectory.final_state();
    let (n, p, _) = last.dims();
    let argmax = (0..n)
        .flat_map(|i| (0..p).map(move |l| (i, l)))
        .map(|(i, l)| {
            let k = last.argmax(i, l);
            AgentTypeArgmax {
                agent: i,
                signal_type: l,
                state: labels[k].clone(),
                belief: last.belief(i, l, k),
            }
        })
        .collect();
    let summary = FinalState {
        t: last.t(),
        seed: cfg.seed,
        true_state: labels[problem.hypotheses.true_index()].clone(),
        argmax,
        consensus: last.consensus_argmax().map(|k| labels[k].clone()),
        convergence: trajectory.convergence.clone(),
    };
    write_json(&final_state_path(out), &summary)?;
    Ok(summary)
}

pub fn cmd_analyze(config: &Path, out: Option<&Path>) -> Result<AnalysisReport> {
    let (_, problem) = load_experiment(config)?;
    let report = build_report(&problem)?;
    match out {
        Some(path) => write_json(path, &report)?,
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(report)
}

pub fn cmd_montecarlo(
    campaign: &Path,
    out: &Path,
    overrides: &Overrides,
    jobs: usize,
) -> Result<MonteCarloSummary> {
    let mut c = load_campaign(campaign)?;
    if let Some(s) = overrides.seed {
        c.seed = s;
    }
    if let Some(h) = overrides.horizon {
        c.horizon = h;
    }
    let summary = monte_carlo(&c, jobs)?;
    write_json(out, &summary)?;
    Ok(summary)
}

/// Shipped scenario families for `mvsl scenario`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Grid,
    Localization,
}

/// Writes an experiment config for a scenario. `params` is a JSON file
/// holding a [`GridScenario`] or [`LocalizationScenario`]; the grid default
/// is used when absent (localisation requires it).
pub fn cmd_scenario(
    kind: ScenarioKind,
    params: Option<&Path>,
    out: &Path,
    horizon: u64,
    seed: u64,
) -> Result<ExperimentConfig> {
    let problem = match kind {
        ScenarioKind::Grid => {
            let scn: GridScenario = match params {
                Some(p) => parse_json(p)?,
                None => GridScenario::default(),
            };
            build_example1(&scn)?
        }
        ScenarioKind::Localization => {
            let p = params
                .ok_or_else(|| Error::Config("localization scenario needs --params".into()))?;
            let scn: LocalizationScenario = parse_json(p)?;
            build_example2(&scn)?
        }
    };
    let cfg = ExperimentConfig::from_problem(&problem, horizon, seed);
    write_json(out, &cfg)?;
    Ok(cfg)
}

/// Process exit status for an error: 2 for invalid input, 3 for numerical
/// failure, 1 for I/O.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_numerical() {
        3
    } else if matches!(err, Error::Io(_)) {
        1
    } else {
        2
    }
}

#[derive(Debug, Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    assumption: Option<&'a str>,
    message: String,
}

/// `{"error": {"kind", "assumption", "message"}}`.
pub fn error_json(err: &Error) -> String {
    #[derive(Serialize)]
    struct Wrapper<'a> {
        error: ErrorBody<'a>,
    }
    serde_json::to_string(&Wrapper {
        error: ErrorBody {
            kind: err.kind(),
            assumption: err.assumption().map(|a| a.id()),
            message: err.to_string(),
        },
    })
    .expect("error body serialises")
}
