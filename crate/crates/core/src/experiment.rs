//! Seeded Monte Carlo trials and their summary metrics.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::attack::{active_targets, corrupt_broadcasts, validate_attacks, SpoofAttack};
use crate::detection::{calibrate, Detector, ThresholdProfile, DEFAULT_FLOOR, DEFAULT_KAPPA};
use crate::dynamics::{nominal_step, SimState, StepParams};
use crate::error::{Error, Result};
use crate::formation::FormationSpec;
use crate::graph::Graph;
use crate::mitigation::{
    effective_readings_huber, effective_readings_none, effective_readings_sosh,
    effective_readings_wmsr, Aggregate, MitigationConfig, MitigationMethod, Reading,
};

/// Minimum trajectory length for all four metrics.
pub const MIN_STEPS: usize = 200;
/// Last step of the transient window.
pub const TRANSIENT_END: usize = 100;
/// Steady-state averaging window, inclusive bounds.
pub const STEADY_WINDOW: (usize, usize) = (150, 199);
/// Settling fraction of the initial metric value.
pub const SETTLING_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub enum GraphSpec {
    Complete(usize),
    Ring(usize),
    Explicit {
        nodes: usize,
        edges: Vec<(usize, usize)>,
    },
}

impl GraphSpec {
    pub fn build(&self) -> Result<Graph> {
        match self {
            Self::Complete(n) => Graph::complete(*n),
            Self::Ring(n) => Graph::ring(*n),
            Self::Explicit { nodes, edges } => Graph::from_edges(*nodes, edges),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FormationConfig {
    /// Planar regular polygon with one vertex per agent.
    Polygon { radius: f64 },
    Explicit(Vec<Vec<f64>>),
}

impl FormationConfig {
    pub fn build(&self, agent_count: usize) -> Result<FormationSpec> {
        match self {
            Self::Polygon { radius } => FormationSpec::regular_polygon(agent_count, 2, *radius),
            Self::Explicit(points) => {
                if points.len() != agent_count {
                    return Err(Error::Shape {
                        what: "formation positions",
                        expected: agent_count,
                        got: points.len(),
                    });
                }
                FormationSpec::from_positions(
                    points.iter().map(|p| DVector::from_column_slice(p)).collect(),
                )
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionConfig {
    pub kappa: f64,
    /// Nominal steps whose residuals calibrate the thresholds.
    pub calibration_window: usize,
    /// Standard deviation of additive Gaussian noise on every broadcast.
    pub noise_std: f64,
    pub floor: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            kappa: DEFAULT_KAPPA,
            calibration_window: 50,
            noise_std: 0.0,
            floor: DEFAULT_FLOOR,
        }
    }
}

/// Axis-aligned box for uniform initial positions.
#[derive(Debug, Clone, PartialEq)]
pub struct InitBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Default for InitBox {
    fn default() -> Self {
        Self {
            lower: vec![-0.5, -0.5],
            upper: vec![1.5, 1.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub graph: GraphSpec,
    pub formation: FormationConfig,
    pub dt: f64,
    pub steps: usize,
    pub attacks: Vec<SpoofAttack>,
    pub detection: DetectionConfig,
    pub mitigation: MitigationConfig,
    pub init_box: InitBox,
    pub trials: usize,
    pub base_seed: u64,
}

impl Default for ScenarioConfig {
    /// Five agents on a unit pentagon over the complete graph, no attack.
    fn default() -> Self {
        Self {
            graph: GraphSpec::Complete(5),
            formation: FormationConfig::Polygon { radius: 1.0 },
            dt: 0.05,
            steps: MIN_STEPS,
            attacks: Vec::new(),
            detection: DetectionConfig::default(),
            mitigation: MitigationConfig::default(),
            init_box: InitBox::default(),
            trials: 30,
            base_seed: 0,
        }
    }
}

impl ScenarioConfig {
    /// The default scenario with agent 2 spoofed by a constant `[3, 3]` offset
    /// from the first step.
    pub fn spoofed_pentagon() -> Self {
        Self {
            attacks: vec![SpoofAttack::constant(2, DVector::from_vec(vec![3.0, 3.0]))],
            ..Self::default()
        }
    }
}

/// Validated, ready-to-run scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub graph: Graph,
    pub spec: FormationSpec,
    pub params: StepParams,
}

impl Scenario {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        let graph = config.graph.build()?;
        graph.ensure_connected()?;
        let spec = config.formation.build(graph.node_count())?;
        let params = StepParams::new(config.dt)?;
        let dim = spec.dim();
        if config.steps < MIN_STEPS {
            return Err(Error::Config(format!(
                "steps must be at least {MIN_STEPS} for the steady-state window, got {}",
                config.steps
            )));
        }
        if config.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        validate_attacks(&config.attacks, graph.node_count(), dim)?;
        let det = &config.detection;
        if !(det.kappa >= 0.0 && det.kappa.is_finite()) {
            return Err(Error::Config(format!("kappa must be non-negative, got {}", det.kappa)));
        }
        if !(det.floor > 0.0 && det.floor.is_finite()) {
            return Err(Error::Config(format!("threshold floor must be positive, got {}", det.floor)));
        }
        if !(det.noise_std >= 0.0 && det.noise_std.is_finite()) {
            return Err(Error::Config(format!(
                "noise_std must be non-negative, got {}",
                det.noise_std
            )));
        }
        if det.calibration_window < 2 {
            return Err(Error::Config(format!(
                "calibration_window must be at least 2, got {}",
                det.calibration_window
            )));
        }
        config.mitigation.validate()?;
        let b = &config.init_box;
        if b.lower.len() != dim || b.upper.len() != dim {
            return Err(Error::Config(format!(
                "init box must have {dim} coordinates per corner, got {} and {}",
                b.lower.len(),
                b.upper.len()
            )));
        }
        if b.lower.iter().zip(&b.upper).any(|(lo, hi)| !(lo <= hi && lo.is_finite() && hi.is_finite())) {
            return Err(Error::Config("init box needs finite lower <= upper in every coordinate".into()));
        }
        Ok(Self {
            config,
            graph,
            spec,
            params,
        })
    }

    pub fn agent_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    /// Generator for trial `trial`: the base seed selects the key, the trial
    /// index selects an independent stream.
    pub fn trial_rng(&self, trial: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.base_seed);
        rng.set_stream(trial as u64);
        rng
    }

    /// Uniform draw from the init box, agent by agent, coordinate by coordinate.
    pub fn sample_initial(&self, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
        let b = &self.config.init_box;
        (0..self.agent_count())
            .map(|_| {
                DVector::from_iterator(
                    self.dim(),
                    b.lower
                        .iter()
                        .zip(&b.upper)
                        .map(|(lo, hi)| lo + rng.random::<f64>() * (hi - lo)),
                )
            })
            .collect()
    }

    fn noisy(&self, mut y: Vec<DVector<f64>>, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
        let std = self.config.detection.noise_std;
        if std > 0.0 {
            let normal = Normal::new(0.0, std).expect("validated noise level");
            for v in y.iter_mut() {
                for c in v.iter_mut() {
                    *c += normal.sample(rng);
                }
            }
        }
        y
    }

    /// Thresholds from an attack-free, unmitigated run of
    /// `calibration_window` steps starting at `initial`.
    pub fn calibrate(&self, initial: &[DVector<f64>], rng: &mut ChaCha8Rng) -> Result<ThresholdProfile> {
        let det = &self.config.detection;
        let mut state = SimState::new(initial.to_vec());
        let mut samples = vec![Vec::new(); self.agent_count()];
        let mut detector: Option<Detector> = None;
        for k in 0..=det.calibration_window {
            let y = self.noisy(state.states.clone(), rng);
            let detector = detector.get_or_insert_with(|| Detector::bootstrap(&self.graph, &y));
            if k > 0 {
                for (i, window) in samples.iter_mut().enumerate() {
                    window.extend(detector.neighbor_residuals(i, &y).into_iter().map(|(_, r)| r));
                }
            }
            if k == det.calibration_window {
                break;
            }
            let aggregates: Vec<Aggregate> = (0..self.agent_count())
                .map(|i| Aggregate::Readings(self.raw_readings(i, &y)))
                .collect();
            let next = nominal_step(&state, &self.spec, &self.graph, &self.params, &aggregates)?;
            detector.propagate(&y, &self.spec, &self.graph, self.params.dt, None);
            state = next;
        }
        calibrate(&samples, det.kappa, det.floor)
    }

    fn raw_readings(&self, agent: usize, y: &[DVector<f64>]) -> Vec<Reading> {
        self.graph
            .neighbors(agent)
            .iter()
            .map(|&j| (j, y[j].clone()))
            .collect()
    }

    /// Full closed loop from `initial`: broadcast, detect, mitigate, update.
    pub fn simulate(
        &self,
        method: MitigationMethod,
        initial: &[DVector<f64>],
        rng: &mut ChaCha8Rng,
        record_states: bool,
    ) -> Result<TrialRecord> {
        if initial.len() != self.agent_count() {
            return Err(Error::Shape {
                what: "initial states",
                expected: self.agent_count(),
                got: initial.len(),
            });
        }
        let profile = self.calibrate(initial, rng)?;
        let steps = self.config.steps;
        let mitigation = &self.config.mitigation;
        let sosh = (method == MitigationMethod::Sosh).then_some(&mitigation.sosh);

        let mut state = SimState::new(initial.to_vec());
        let mut v = Vec::with_capacity(steps);
        let mut states = record_states.then(Vec::new);
        let mut detector: Option<Detector> = None;
        let mut first_flag = vec![None; self.agent_count()];
        let mut exceedances = 0usize;
        let mut checks = 0usize;
        let mut diverged_at = None;

        for k in 0..steps {
            let stacked = state.stacked();
            let value = self.spec.v_metric(&stacked, &self.graph)?;
            if !value.is_finite() || stacked.iter().any(|c| !c.is_finite()) {
                diverged_at = Some(k);
                break;
            }
            v.push(value);
            if let Some(s) = states.as_mut() {
                s.push(stacked);
            }
            if k + 1 == steps {
                break;
            }

            let y = self.noisy(
                corrupt_broadcasts(&state.states, &self.config.attacks, k),
                rng,
            );
            let detector = detector.get_or_insert_with(|| Detector::bootstrap(&self.graph, &y));
            let targets = active_targets(&self.config.attacks, k);
            for i in 0..self.agent_count() {
                let fresh = detector.exceedances(i, &y, &profile).len();
                let flags = detector.detect(i, &y, &profile);
                if targets.contains(i) {
                    continue;
                }
                exceedances += fresh;
                checks += self.graph.degree(i);
                for &j in flags {
                    first_flag[j].get_or_insert(k);
                    state.flagged[j] = true;
                }
            }

            let aggregates: Vec<Aggregate> = (0..self.agent_count())
                .map(|i| {
                    let raw = self.raw_readings(i, &y);
                    let own = &state.states[i];
                    if targets.contains(i) {
                        return effective_readings_none(&raw);
                    }
                    match method {
                        MitigationMethod::None => effective_readings_none(&raw),
                        MitigationMethod::Sosh => effective_readings_sosh(
                            i,
                            own,
                            &raw,
                            detector.flags(i),
                            |j| {
                                detector
                                    .prediction(i, j)
                                    .cloned()
                                    .unwrap_or_else(|| y[j].clone())
                            },
                            &self.spec,
                            &mitigation.sosh,
                        ),
                        MitigationMethod::Wmsr => {
                            effective_readings_wmsr(i, own, &raw, &self.spec, mitigation.wmsr_f)
                        }
                        MitigationMethod::Huber => {
                            effective_readings_huber(i, own, &raw, &self.spec, mitigation.huber_c)
                        }
                        MitigationMethod::Oracle => {
                            Aggregate::Readings(self.raw_readings(i, &state.states))
                        }
                    }
                })
                .collect();
            let mut next = nominal_step(&state, &self.spec, &self.graph, &self.params, &aggregates)?;
            next.flagged = state.flagged.clone();
            detector.propagate(&y, &self.spec, &self.graph, self.params.dt, sosh);
            state = next;
        }

        let metrics = match diverged_at {
            None => Some(compute_metrics(&v, self.params.dt)?),
            Some(_) => None,
        };
        Ok(TrialRecord {
            method,
            trial: 0,
            v,
            metrics,
            diverged_at,
            first_flag,
            exceedances,
            residual_checks: checks,
            degraded_predictions: detector.map_or(0, |d| d.degraded().len()),
            states,
        })
    }

    /// One seeded trial: initial draw, calibration noise, then run noise, all
    /// from the trial's own stream.
    pub fn run_trial(&self, method: MitigationMethod, trial: usize, record_states: bool) -> Result<TrialRecord> {
        let mut rng = self.trial_rng(trial);
        let initial = self.sample_initial(&mut rng);
        let mut record = self.simulate(method, &initial, &mut rng, record_states)?;
        record.trial = trial;
        Ok(record)
    }

    /// All trials for each method. Every method sees the same per-trial seeds.
    pub fn monte_carlo(&self, methods: &[MitigationMethod], record_states: bool) -> Result<Vec<MethodReport>> {
        methods
            .iter()
            .map(|&method| {
                let records = (0..self.config.trials)
                    .into_par_iter()
                    .map(|t| self.run_trial(method, t, record_states))
                    .collect::<Result<Vec<_>>>()?;
                Ok(MethodReport::from_records(method, records))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub v100: f64,
    pub vinf: f64,
    pub auc: f64,
    /// First step with `V[k] ≤ 0.01 V[0]`; `None` if never reached.
    pub t1pct: Option<usize>,
}

/// Transient value, steady-state mean, transient area and settling step of a
/// metric trajectory.
pub fn compute_metrics(v: &[f64], dt: f64) -> Result<MetricsRecord> {
    if v.len() < MIN_STEPS {
        return Err(Error::Metric(format!(
            "trajectory has {} samples, need at least {MIN_STEPS}",
            v.len()
        )));
    }
    if let Some(k) = v.iter().position(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::Metric(format!("V[{k}] = {} is not a finite non-negative value", v[k])));
    }
    let (lo, hi) = STEADY_WINDOW;
    let vinf = v[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64;
    let auc = v[..=TRANSIENT_END].iter().sum::<f64>() * dt;
    let target = SETTLING_FRACTION * v[0];
    Ok(MetricsRecord {
        v100: v[TRANSIENT_END],
        vinf,
        auc,
        t1pct: v.iter().position(|&x| x <= target),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub method: MitigationMethod,
    pub trial: usize,
    /// Metric trajectory; shorter than `steps` only if the trial diverged.
    pub v: Vec<f64>,
    pub metrics: Option<MetricsRecord>,
    pub diverged_at: Option<usize>,
    /// First step at which an observer outside the attacked set flagged each
    /// agent.
    pub first_flag: Vec<Option<usize>>,
    /// Per-neighbor residuals above threshold, summed over observers outside
    /// the attacked set and over steps.
    pub exceedances: usize,
    pub residual_checks: usize,
    pub degraded_predictions: usize,
    /// Stacked true states per step, when requested.
    pub states: Option<Vec<DVector<f64>>>,
}

impl TrialRecord {
    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }
}

/// Order statistics of one metric across trials. Quartiles use linear
/// interpolation between order statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub q1: f64,
    pub q3: f64,
}

impl Summary {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Self {
            count: sorted.len(),
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
            median: quantile(&sorted, 0.5),
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            q1: quantile(&sorted, 0.25),
            q3: quantile(&sorted, 0.75),
        })
    }
}

/// Quantile of sorted data, interpolating at position `p (n − 1)`.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodReport {
    pub method: MitigationMethod,
    /// Sorted by trial index.
    pub records: Vec<TrialRecord>,
    pub v100: Option<Summary>,
    pub vinf: Option<Summary>,
    pub auc: Option<Summary>,
    /// Over trials that settled.
    pub t1pct: Option<Summary>,
    pub settled: usize,
    pub diverged: usize,
    /// Per-step mean of `V` over non-diverged trials.
    pub mean_v: Vec<f64>,
}

impl MethodReport {
    pub fn from_records(method: MitigationMethod, mut records: Vec<TrialRecord>) -> Self {
        records.sort_by_key(|r| r.trial);
        let ok: Vec<&MetricsRecord> = records.iter().filter_map(|r| r.metrics.as_ref()).collect();
        let collect = |f: fn(&MetricsRecord) -> f64| Summary::from_values(&ok.iter().map(|m| f(m)).collect::<Vec<_>>());
        let t1: Vec<f64> = ok.iter().filter_map(|m| m.t1pct).map(|t| t as f64).collect();
        let finished: Vec<&TrialRecord> = records.iter().filter(|r| !r.diverged()).collect();
        let len = finished.iter().map(|r| r.v.len()).min().unwrap_or(0);
        let mean_v = (0..len)
            .map(|k| finished.iter().map(|r| r.v[k]).sum::<f64>() / finished.len() as f64)
            .collect();
        Self {
            method,
            v100: collect(|m| m.v100),
            vinf: collect(|m| m.vinf),
            auc: collect(|m| m.auc),
            t1pct: Summary::from_values(&t1),
            settled: t1.len(),
            diverged: records.len() - finished.len(),
            mean_v,
            records,
        }
    }
}
