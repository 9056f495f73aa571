//! TOML scenario files: schema, validation, and turning a scenario into a
//! model, initial state, grid and checks.

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{certify_consensus, CertifyOptions, ConsensusReport};
use crate::dynamics::{
    shift_box_to_positive, shift_to_positive, simulate_with, ContractMode, Kernel, Scheme, SimOptions, SystemModel,
    Trajectory,
};
use crate::error::{Error, Result};
use crate::graph::{MetzlerMatrix, WeightedDigraph};
use crate::hilbert::StateVector;
use crate::rng;
use crate::topology::{
    chain_random_activation, dwell_time_signal, moreau_signal, signal_from_trace, verify_accumulated_lower_bound,
    ChainActivationConfig, CheckpointSequence, GraphSignal, LowerBound, LowerBoundMode, LowerBoundReport, ScalarSignal,
    SwitchingSignal,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub seed: Option<u64>,
    pub model: ModelSpec,
    pub initial: InitialSpec,
    #[serde(default)]
    pub integrator: IntegratorSpec,
    pub horizon: HorizonSpec,
    #[serde(default)]
    pub checkpoints: CheckpointSpec,
    #[serde(default)]
    pub topology: Option<TopologySpec>,
    #[serde(default)]
    pub certification: CertifyOptions,
    #[serde(default)]
    pub lower_bound: Option<LowerBoundSpec>,
    #[serde(default)]
    pub outputs: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    /// Constant `matrix`, or `A(t) = G(t) − diag(G(t)𝟙)` from the topology.
    Ltv {
        #[serde(default)]
        matrix: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        mode: ContractMode,
    },
    Kuramoto {
        #[serde(default)]
        mode: ContractMode,
    },
    CuckerSmaleVelocity {
        lambda: f64,
        #[serde(default = "one")]
        k: f64,
        #[serde(default)]
        beta: f64,
        #[serde(default)]
        mode: ContractMode,
    },
    HegselmannKrause {
        n: usize,
        radius: ScalarSignal,
        #[serde(default)]
        mode: ContractMode,
    },
    AnimalGroup {
        repulsion: Vec<Vec<f64>>,
        phi_a: Kernel,
        phi_r: Kernel,
        #[serde(default)]
        mode: ContractMode,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    /// `[lo, hi]`: entries drawn uniformly from the seed.
    #[serde(default)]
    pub r#box: Option<[f64; 2]>,
    #[serde(default)]
    pub n: Option<usize>,
    /// Positivity margin for diagnostics; `α` covers the whole box when one
    /// is given.
    #[serde(default)]
    pub shift_margin: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    #[serde(default)]
    pub scheme: Scheme,
    pub h: f64,
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        Self {
            scheme: Scheme::Euler,
            h: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonSpec {
    #[serde(default)]
    pub t0: f64,
    pub t_end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointSpec {
    #[serde(default = "one")]
    pub spacing: f64,
    /// Use the outer intervals of a random chain activation instead.
    #[serde(default)]
    pub use_outer: bool,
}

impl Default for CheckpointSpec {
    fn default() -> Self {
        Self {
            spacing: 1.0,
            use_outer: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum TopologySpec {
    Constant {
        graph: Vec<Vec<f64>>,
    },
    ChainRandom {
        n: usize,
        delta: f64,
        #[serde(default, flatten)]
        config: ChainActivationConfig,
    },
    Moreau {
        n: usize,
        delta: f64,
        #[serde(default = "one")]
        period: f64,
        #[serde(default)]
        center: usize,
        #[serde(default)]
        distractors: usize,
    },
    DwellTime {
        graphs: Vec<Vec<Vec<f64>>>,
        tau: f64,
    },
    /// Signal trace CSV, relative to the scenario file.
    Trace {
        n: usize,
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum LowerBoundSpec {
    Graph {
        graph: Vec<Vec<f64>>,
        #[serde(default)]
        sampled: Option<SampledSpec>,
    },
    /// `b_ik = weight` for every `i ≠ center`.
    Star {
        center: usize,
        weight: f64,
        #[serde(default)]
        sampled: Option<SampledSpec>,
    },
    /// `b_{i,i+1} = weight`.
    Chain {
        weight: f64,
        #[serde(default)]
        sampled: Option<SampledSpec>,
    },
}

/// Frozen-state form of the check on a grid of the initial box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampledSpec {
    /// Grid points per coordinate.
    pub resolution: usize,
    /// Time steps per checkpoint interval.
    pub steps: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub csv: Option<PathBuf>,
    #[serde(default)]
    pub report: Option<PathBuf>,
    #[serde(default)]
    pub plots: Option<PathBuf>,
}

/// Scenarios shipped with the crate.
pub const BUNDLED: &[(&str, &str)] = &[
    ("fig1", include_str!("../scenarios/fig1.toml")),
    ("chain10", include_str!("../scenarios/chain10.toml")),
    ("moreau_ltv", include_str!("../scenarios/moreau_ltv.toml")),
    ("kuramoto_qsc", include_str!("../scenarios/kuramoto_qsc.toml")),
    (
        "hk_shrinking_radius",
        include_str!("../scenarios/hk_shrinking_radius.toml"),
    ),
    (
        "adversarial_single_link",
        include_str!("../scenarios/adversarial_single_link.toml"),
    ),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(config_err)
    }

    pub fn from_value(value: toml::Value) -> Result<Self> {
        value.try_into().map_err(config_err)
    }

    /// Reads a scenario file, or a bundled scenario when `path` names one
    /// and no such file exists. Returns the base directory for relative
    /// paths alongside.
    pub fn load(path: &Path) -> Result<(toml::Value, PathBuf)> {
        let (text, base) = if path.exists() {
            (
                std::fs::read_to_string(path)?,
                path.parent().map(Path::to_path_buf).unwrap_or_default(),
            )
        } else if let Some(text) = path.to_str().and_then(bundled) {
            (text.to_string(), PathBuf::from("."))
        } else {
            return Err(Error::Config(format!(
                "scenario `{}` not found (bundled: {})",
                path.display(),
                BUNDLED.iter().map(|b| b.0).collect::<Vec<_>>().join(", ")
            )));
        };
        // Typed parse of the source text so schema errors carry a line.
        Self::from_toml(&text)?;
        let value: toml::Value = toml::from_str(&text).map_err(config_err)?;
        Ok((value, base))
    }

    /// Hex SHA-256 of the scenario's canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("scenario serialises");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn uses_randomness(&self) -> bool {
        self.initial.r#box.is_some()
            || matches!(
                self.topology,
                Some(TopologySpec::ChainRandom { .. } | TopologySpec::DwellTime { .. })
            )
            || matches!(self.topology, Some(TopologySpec::Moreau { distractors, .. }) if distractors > 0)
    }

    pub fn build(&self, base: &Path) -> Result<BuiltScenario> {
        if self.uses_randomness() && self.seed.is_none() {
            return Err(Error::Config(format!(
                "scenario `{}` uses random generators and needs a `seed`",
                self.name
            )));
        }
        let seed = self.seed();
        let HorizonSpec { t0, t_end } = self.horizon;
        if !(t_end > t0) {
            return Err(Error::Config(format!("horizon: t_end = {t_end} must exceed t0 = {t0}")));
        }
        if !(self.integrator.h > 0.0) {
            return Err(Error::Config(format!(
                "integrator.h = {} must be > 0",
                self.integrator.h
            )));
        }

        let mut outer = None;
        let signal: Option<GraphSignal> = match &self.topology {
            None => None,
            Some(TopologySpec::Constant { graph }) => {
                Some(SwitchingSignal::constant(WeightedDigraph::from_rows(graph)?))
            }
            Some(TopologySpec::ChainRandom { n, delta, config }) => {
                let act = chain_random_activation(*n, *delta, t_end, seed, config)?;
                outer = Some(act.outer);
                Some(act.signal)
            }
            Some(TopologySpec::Moreau {
                n,
                delta,
                period,
                center,
                distractors,
            }) => Some(moreau_signal(*n, *center, *delta, *period, t_end, *distractors, seed)?),
            Some(TopologySpec::DwellTime { graphs, tau }) => {
                let family = graphs
                    .iter()
                    .map(|g| WeightedDigraph::from_rows(g))
                    .collect::<Result<Vec<_>>>()?;
                Some(dwell_time_signal(&family, *tau, t_end - t0, seed)?)
            }
            Some(TopologySpec::Trace { n, path }) => {
                let text = std::fs::read_to_string(base.join(path))?;
                Some(signal_from_trace(*n, &text)?)
            }
        };
        let need_signal = || {
            signal
                .clone()
                .ok_or_else(|| Error::Config("model needs a [topology] section".into()))
        };
        let model = match &self.model {
            ModelSpec::Ltv { matrix: Some(m), mode } => {
                SystemModel::ltv_constant(MetzlerMatrix::from_rows(m)?)?.with_mode(*mode)
            }
            ModelSpec::Ltv { matrix: None, mode } => SystemModel::ltv_from_graphs(&need_signal()?)?.with_mode(*mode),
            ModelSpec::Kuramoto { mode } => SystemModel::kuramoto(need_signal()?)?.with_mode(*mode),
            ModelSpec::CuckerSmaleVelocity { lambda, k, beta, mode } => {
                SystemModel::cucker_smale_velocity(need_signal()?, *lambda, *k, *beta)?.with_mode(*mode)
            }
            ModelSpec::HegselmannKrause { n, radius, mode } => {
                SystemModel::hegselmann_krause(*n, radius.clone())?.with_mode(*mode)
            }
            ModelSpec::AnimalGroup {
                repulsion,
                phi_a,
                phi_r,
                mode,
            } => SystemModel::animal_group(
                need_signal()?,
                SwitchingSignal::constant(WeightedDigraph::from_rows(repulsion)?),
                *phi_a,
                *phi_r,
            )?
            .with_mode(*mode),
        };
        let n = model.n();

        let x0 = match (&self.initial.x0, self.initial.r#box) {
            (Some(x), None) => StateVector::new(x.clone())?,
            (None, Some([lo, hi])) => {
                if !(hi > lo) {
                    return Err(Error::Config(format!("initial.box = [{lo}, {hi}] is empty")));
                }
                let count = self.initial.n.unwrap_or(n);
                let mut r = rng::stream(seed, "initial-state");
                StateVector::new((0..count).map(|_| r.random_range(lo..hi)).collect())?
            }
            _ => return Err(Error::Config("initial: give exactly one of `x0` or `box`".into())),
        };
        if x0.n() != n {
            return Err(Error::Config(format!(
                "initial state has {} entries, model has {n} agents",
                x0.n()
            )));
        }
        let shift = match self.initial.shift_margin {
            None => 0.0,
            Some(m) => match self.initial.r#box {
                Some([lo, _]) => shift_box_to_positive(lo, m)?,
                None => shift_to_positive(&x0, m)?.0,
            },
        };

        let checkpoints = match (&outer, self.checkpoints.use_outer) {
            (Some(o), true) => {
                let mut times: Vec<f64> = o.iter().copied().filter(|&t| t > t0 && t < t_end).collect();
                times.insert(0, t0);
                times.push(t_end);
                CheckpointSequence::new(times)?
            }
            (None, true) => {
                return Err(Error::Config(
                    "checkpoints.use_outer needs a chain_random topology".into(),
                ))
            }
            _ => CheckpointSequence::uniform(t0, t_end, self.checkpoints.spacing)?,
        };

        let lower_bound = match &self.lower_bound {
            None => None,
            Some(spec) => {
                let (g, sampled) = match spec {
                    LowerBoundSpec::Graph { graph, sampled } => (WeightedDigraph::from_rows(graph)?, sampled),
                    LowerBoundSpec::Star {
                        center,
                        weight,
                        sampled,
                    } => {
                        let mut g = WeightedDigraph::empty(n);
                        for i in (0..n).filter(|i| i != center) {
                            g.set(i, *center, *weight)?;
                        }
                        (g, sampled)
                    }
                    LowerBoundSpec::Chain { weight, sampled } => (WeightedDigraph::chain(n, *weight)?, sampled),
                };
                if g.n() != n {
                    return Err(Error::Config(format!(
                        "lower_bound graph has {} agents, model has {n}",
                        g.n()
                    )));
                }
                let mode = match sampled {
                    None => LowerBoundMode::Trajectory,
                    Some(s) => {
                        let [lo, hi] = self.initial.r#box.unwrap_or([x0.min(), x0.max()]);
                        LowerBoundMode::Sampled {
                            states: box_grid(n, lo, hi, s.resolution)?,
                            steps: s.steps,
                        }
                    }
                };
                Some((LowerBound::Constant(g), mode))
            }
        };

        Ok(BuiltScenario {
            model,
            x0,
            shift,
            t0,
            t_end,
            h: self.integrator.h,
            scheme: self.integrator.scheme,
            checkpoints,
            signal,
            lower_bound,
            certification: self.certification,
        })
    }
}

/// Grid of `resolution^n` points of `[lo, hi]^n`, capped at 4096 points by
/// lowering the resolution.
fn box_grid(n: usize, lo: f64, hi: f64, resolution: usize) -> Result<Vec<StateVector>> {
    let mut r = resolution.max(2);
    while (r as f64).powi(n as i32) > 4096.0 && r > 2 {
        r -= 1;
    }
    if (r as f64).powi(n as i32) > 4096.0 {
        return Err(Error::Config(format!("sampled lower bound grid too large for n = {n}")));
    }
    let total = r.pow(n as u32);
    let mut out = Vec::with_capacity(total);
    for mut code in 0..total {
        let mut x = Vec::with_capacity(n);
        for _ in 0..n {
            x.push(lo + (hi - lo) * (code % r) as f64 / (r - 1) as f64);
            code /= r;
        }
        out.push(StateVector::new(x)?);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct BuiltScenario {
    pub model: SystemModel,
    pub x0: StateVector,
    pub shift: f64,
    pub t0: f64,
    pub t_end: f64,
    pub h: f64,
    pub scheme: Scheme,
    pub checkpoints: CheckpointSequence,
    pub signal: Option<GraphSignal>,
    pub lower_bound: Option<(LowerBound, LowerBoundMode)>,
    pub certification: CertifyOptions,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    pub consensus: ConsensusReport,
    pub lower_bound: Option<LowerBoundReport>,
}

impl BuiltScenario {
    pub fn simulate(&self) -> Result<Trajectory> {
        simulate_with(
            &self.model,
            &self.x0,
            self.t0,
            self.t_end,
            self.h,
            self.scheme,
            &SimOptions {
                anchors: self.checkpoints.times().to_vec(),
                shift: self.shift,
            },
        )
    }

    pub fn run(&self) -> Result<RunOutput> {
        let trajectory = self.simulate()?;
        let consensus = certify_consensus(&trajectory, &self.certification)?;
        let lower_bound = match &self.lower_bound {
            None => None,
            Some((b, mode)) => Some(verify_accumulated_lower_bound(
                &self.model,
                &trajectory,
                &self.checkpoints,
                b,
                mode,
            )?),
        };
        Ok(RunOutput {
            trajectory,
            consensus,
            lower_bound,
        })
    }
}

/// Sets the dotted key path `path` (e.g. `topology.delta`) in `value`,
/// parsing `raw` as a TOML value and falling back to a string.
pub fn set_path(value: &mut toml::Value, path: &str, raw: &str) -> Result<()> {
    let parsed: toml::Value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut cur = value;
    let keys: Vec<&str> = path.split('.').collect();
    for (depth, key) in keys.iter().enumerate() {
        let table = cur
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{}` is not a table", keys[..depth].join("."))))?;
        if depth + 1 == keys.len() {
            if !table.contains_key(*key) && !optional_key(&keys) {
                return Err(Error::Config(format!("unknown parameter path `{path}`")));
            }
            table.insert(key.to_string(), parsed);
            return Ok(());
        }
        cur = table
            .get_mut(*key)
            .ok_or_else(|| Error::Config(format!("unknown parameter path `{path}`")))?;
    }
    Err(Error::Config("empty parameter path".into()))
}

/// Keys with defaults that may be absent from a file but still swept.
fn optional_key(keys: &[&str]) -> bool {
    matches!(
        keys,
        ["seed"]
            | ["integrator", "scheme" | "h"]
            | ["checkpoints", "spacing"]
            | ["certification", "fit_window_fraction" | "residual_tol"]
            | [
                "topology",
                "edges_per_step"
                    | "outer_min"
                    | "outer_max"
                    | "pieces_min"
                    | "pieces_max"
                    | "weight_factor"
                    | "period"
                    | "center"
                    | "distractors"
            ]
            | ["initial", "shift_margin"]
    )
}
