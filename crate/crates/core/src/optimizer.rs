//! Bayesian-optimization driver.
//!
//! Approach 1 runs one constrained single-objective optimization per
//! weighting of the three objectives, each restarted from scratch. Approach 2
//! runs one multi-objective optimization with a surrogate per objective plus
//! one for feasibility. Every simulation flows through a [`Session`], which
//! numbers evaluations globally, maintains the Pareto archive, appends to the
//! ledger sink and replays a previous ledger when resuming.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::{ceim, eic, maximize_acquisition, Prediction};
use crate::controller::{WeightVector, N_WEIGHTS};
use crate::error::{Error, Result};
use crate::gpr::{Dataset, GprHyperparams, GprModel, GprOptions};
use crate::pareto::{self, hypervolume_within, Objectives};
use crate::sim::ObjectiveTriple;

pub const DIM: usize = N_WEIGHTS;

/// Raw bounds of every weight; the search runs in `log10` coordinates mapped
/// affinely onto the unit cube.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightBox {
    pub lower: [f64; DIM],
    pub upper: [f64; DIM],
}

impl Default for WeightBox {
    fn default() -> Self {
        Self { lower: [1e-3; DIM], upper: [1e3; DIM] }
    }
}

impl WeightBox {
    pub fn validate(&self) -> Result<()> {
        for d in 0..DIM {
            let (lo, hi) = (self.lower[d], self.upper[d]);
            if !(lo > 0.0 && hi > lo && hi.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "bounds of {} must satisfy 0 < lower < upper, got [{lo}, {hi}]",
                    WeightVector::NAMES[d]
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, w: &WeightVector) -> bool {
        w.to_array()
            .iter()
            .enumerate()
            .all(|(d, v)| *v >= self.lower[d] * (1.0 - 1e-12) && *v <= self.upper[d] * (1.0 + 1e-12))
    }

    pub fn to_unit(&self, w: &WeightVector) -> Result<Vec<f64>> {
        if !self.contains(w) {
            return Err(Error::InvalidArgument(format!("weights {w:?} outside the search box")));
        }
        Ok(w.to_array()
            .iter()
            .enumerate()
            .map(|(d, v)| {
                let (lo, hi) = (self.lower[d].log10(), self.upper[d].log10());
                ((v.log10() - lo) / (hi - lo)).clamp(0.0, 1.0)
            })
            .collect())
    }

    pub fn from_unit(&self, u: &[f64]) -> WeightVector {
        WeightVector::from_array(std::array::from_fn(|d| {
            let (lo, hi) = (self.lower[d].log10(), self.upper[d].log10());
            10f64.powf(lo + u[d].clamp(0.0, 1.0) * (hi - lo))
        }))
    }
}

/// Convex weighting of `(E_jerk, E_v, E_lat)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightingScheme(pub [f64; 3]);

impl WeightingScheme {
    pub fn new(w: [f64; 3]) -> Result<Self> {
        let sum: f64 = w.iter().sum();
        if w.iter().any(|v| !(0.0..=1.0).contains(v)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("weighting {w:?} must lie on the unit simplex")));
        }
        Ok(Self(w))
    }
}

/// `B = w1 E_jerk + w2 E_v + w3 E_lat`.
pub fn scalarize(e: &ObjectiveTriple, w: &WeightingScheme) -> f64 {
    scalarize_values(&e.values(), w)
}

fn scalarize_values(v: &Objectives, w: &WeightingScheme) -> f64 {
    v.iter().zip(&w.0).map(|(a, b)| a * b).sum()
}

/// All simplex lattice points with spacing `step`.
pub fn generate_weight_grid(step: f64) -> Result<Vec<WeightingScheme>> {
    let k = (1.0 / step).round();
    if !(step > 0.0 && step <= 1.0) || (k * step - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("1/step must be a positive integer, got step {step}")));
    }
    let k = k as usize;
    let mut grid = Vec::with_capacity((k + 1) * (k + 2) / 2);
    for i in 0..=k {
        for j in 0..=(k - i) {
            let l = k - i - j;
            grid.push(WeightingScheme([i as f64 / k as f64, j as f64 / k as f64, l as f64 / k as f64]));
        }
    }
    Ok(grid)
}

pub fn dominates(a: &ObjectiveTriple, b: &ObjectiveTriple) -> bool {
    pareto::dominates(&a.values(), &b.values())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Approach {
    WeightedSum,
    Pareto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    /// position in the global ledger
    pub index: usize,
    pub approach: Approach,
    /// weighting number (Approach 1) or 0
    pub instance: usize,
    pub weighting: Option<WeightingScheme>,
    /// evaluation count inside the instance
    pub iteration: usize,
    pub initial: bool,
    pub weights: WeightVector,
    pub unit: Vec<f64>,
    /// absent when the simulation could not take a single step
    pub objectives: Option<ObjectiveTriple>,
    /// wall time of the simulation, s
    pub sim_time: f64,
    /// wall time of surrogate fitting and acquisition before this evaluation, s
    pub overhead_time: f64,
    /// hyperparameters (target units) of the surrogates that proposed this
    /// point: feasibility first, then the objective models
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub surrogates: Vec<GprHyperparams>,
}

impl EvaluationRecord {
    pub fn g(&self) -> i8 {
        self.objectives.map_or(-1, |o| o.g)
    }

    pub fn feasible_values(&self) -> Option<Objectives> {
        self.objectives.filter(ObjectiveTriple::is_feasible).map(|o| o.values())
    }

    /// Equality ignoring the timing fields.
    pub fn same_outcome(&self, other: &Self) -> bool {
        let strip = |r: &Self| Self { sim_time: 0.0, overhead_time: 0.0, ..r.clone() };
        strip(self) == strip(other)
    }
}

/// Feasible, mutually nondominated evaluations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParetoArchive {
    pub members: Vec<EvaluationRecord>,
}

impl ParetoArchive {
    /// Inserts a feasible record unless an existing member dominates it, and
    /// drops members it dominates. Returns whether it was inserted.
    pub fn update(&mut self, record: &EvaluationRecord) -> bool {
        let Some(v) = record.feasible_values() else { return false };
        if self.members.iter().any(|m| pareto::dominates(&m.feasible_values().unwrap(), &v)) {
            return false;
        }
        self.members.retain(|m| !pareto::dominates(&v, &m.feasible_values().unwrap()));
        self.members.push(record.clone());
        true
    }

    pub fn objectives(&self) -> Vec<Objectives> {
        self.members.iter().filter_map(EvaluationRecord::feasible_values).collect()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn from_records(records: &[EvaluationRecord]) -> Self {
        let mut a = Self::default();
        for r in records {
            a.update(r);
        }
        a
    }

    /// CSV with columns [`ARCHIVE_COLUMNS`].
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(ARCHIVE_COLUMNS)?;
        for m in &self.members {
            let o = m.objectives.expect("archive members are feasible");
            let mut row = vec![m.index.to_string(), o.e_jerk.to_string(), o.e_v.to_string(), o.e_lat.to_string()];
            row.extend(m.weights.to_array().iter().map(f64::to_string));
            row.extend(m.unit.iter().map(f64::to_string));
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Archive export with the totals of the run that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveFile {
    pub evaluations: usize,
    /// simulation plus optimizer time, s
    pub run_time: f64,
    /// expert objectives used for normalization, when feasible
    pub baseline: Option<Objectives>,
    pub archive: ParetoArchive,
}

impl ArchiveFile {
    pub fn from_records(records: &[EvaluationRecord], baseline: Option<Objectives>) -> Self {
        Self {
            evaluations: records.len(),
            run_time: records.iter().map(|r| r.sim_time + r.overhead_time).sum(),
            baseline,
            archive: ParetoArchive::from_records(records),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    /// Loads and checks that every member is feasible and nondominated.
    pub fn load(path: &Path) -> Result<Self> {
        let file: Self = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        let values: Vec<Option<Objectives>> = file.archive.members.iter().map(|m| m.feasible_values()).collect();
        let valid = values.iter().all(Option::is_some) && {
            let v: Vec<Objectives> = values.iter().flatten().copied().collect();
            pareto::nondominated_indices(&v).len() == v.len()
        };
        if !valid {
            return Err(Error::InvalidArgument(format!("{}: not a Pareto archive", path.display())));
        }
        Ok(file)
    }
}

pub const ARCHIVE_COLUMNS: [&str; 18] = [
    "index", "e_jerk", "e_v", "e_lat", "q_x", "q_y", "q_psi", "q_a", "r_a", "r_omega", "r_vartheta", "u_q_x",
    "u_q_y", "u_q_psi", "u_q_a", "u_r_a", "u_r_omega", "u_r_vartheta",
];

pub fn update_pareto_archive(mut archive: ParetoArchive, record: &EvaluationRecord) -> ParetoArchive {
    archive.update(record);
    archive
}

/// Latin hypercube sample in `[0,1]^DIM`; with `include`, that point comes
/// first and the hypercube has `n0 - 1` points.
pub fn initial_sampling(n0: usize, seed: u64, include: Option<&[f64]>) -> Result<Vec<Vec<f64>>> {
    if n0 == 0 {
        return Err(Error::InvalidArgument("initial sample size must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(n0);
    if let Some(p) = include {
        out.push(p.to_vec());
    }
    out.extend(latin_hypercube(n0 - out.len(), DIM, seed));
    Ok(out)
}

pub fn latin_hypercube(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = vec![vec![0.0; dim]; n];
    for d in 0..dim {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        for (p, s) in pts.iter_mut().zip(strata) {
            p[d] = (s as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    pts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    /// initial design size per optimization instance
    pub n0: usize,
    /// random-search candidates per acquisition maximization
    pub acquisition_budget: usize,
    /// fit responses on a log scale when they span more than this many decades
    pub log_span_decades: f64,
    /// start every instance from the hand-tuned weights
    pub include_expert: bool,
    pub seed: u64,
    pub weight_box: WeightBox,
    pub gpr: GprOptions,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            n0: 10,
            acquisition_budget: 10_000,
            log_span_decades: 3.0,
            include_expert: true,
            seed: 1,
            weight_box: WeightBox::default(),
            gpr: GprOptions::default(),
        }
    }
}

impl OptimizerSettings {
    pub fn validate(&self) -> Result<()> {
        if self.n0 == 0 || self.acquisition_budget == 0 {
            return Err(Error::InvalidArgument("n0 and acquisition_budget must be positive".into()));
        }
        self.weight_box.validate()
    }
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ b.wrapping_mul(0xc2b2_ae3d_27d4_eb4f);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

type Evaluator<'a> = Box<dyn FnMut(&WeightVector) -> Option<ObjectiveTriple> + 'a>;
type Sink<'a> = Box<dyn FnMut(&EvaluationRecord) -> Result<()> + 'a>;

struct Slot {
    approach: Approach,
    instance: usize,
    weighting: Option<WeightingScheme>,
    iteration: usize,
    initial: bool,
}

/// Global evaluation bookkeeping shared by all optimization instances.
pub struct Session<'a> {
    evaluate: Evaluator<'a>,
    settings: OptimizerSettings,
    replay: VecDeque<EvaluationRecord>,
    sink: Option<Sink<'a>>,
    records: Vec<EvaluationRecord>,
    archive: ParetoArchive,
}

impl<'a> Session<'a> {
    pub fn new(settings: OptimizerSettings, evaluate: impl FnMut(&WeightVector) -> Option<ObjectiveTriple> + 'a) -> Self {
        Self {
            evaluate: Box::new(evaluate),
            settings,
            replay: VecDeque::new(),
            sink: None,
            records: Vec::new(),
            archive: ParetoArchive::default(),
        }
    }

    /// Records to reuse, in order, instead of simulating again.
    pub fn with_replay(mut self, records: Vec<EvaluationRecord>) -> Self {
        self.replay = records.into();
        self
    }

    /// Called with every freshly simulated record.
    pub fn with_sink(mut self, sink: impl FnMut(&EvaluationRecord) -> Result<()> + 'a) -> Self {
        self.sink = Some(Box::new(sink));
        self
    }

    pub fn settings(&self) -> &OptimizerSettings {
        &self.settings
    }

    pub fn records(&self) -> &[EvaluationRecord] {
        &self.records
    }

    pub fn archive(&self) -> &ParetoArchive {
        &self.archive
    }

    pub fn into_parts(self) -> (Vec<EvaluationRecord>, ParetoArchive) {
        (self.records, self.archive)
    }

    /// `exact` overrides the weights decoded from `unit`.
    fn evaluate(
        &mut self,
        unit: Vec<f64>,
        exact: Option<WeightVector>,
        slot: Slot,
        overhead: f64,
        surrogates: Vec<GprHyperparams>,
    ) -> Result<EvaluationRecord> {
        let index = self.records.len();
        let weights = exact.unwrap_or_else(|| self.settings.weight_box.from_unit(&unit));
        let rec = if let Some(r) = self.replay.pop_front() {
            let same_point = r.unit.len() == unit.len() && r.unit.iter().zip(&unit).all(|(a, b)| (a - b).abs() <= 1e-12);
            if r.index != index || r.approach != slot.approach || r.instance != slot.instance || !same_point {
                return Err(Error::InvalidArgument(format!(
                    "ledger record {index} does not match the replayed run (different config or seed?)"
                )));
            }
            r
        } else {
            let t = Instant::now();
            let objectives = (self.evaluate)(&weights);
            let rec = EvaluationRecord {
                index,
                approach: slot.approach,
                instance: slot.instance,
                weighting: slot.weighting,
                iteration: slot.iteration,
                initial: slot.initial,
                weights,
                unit,
                objectives,
                sim_time: t.elapsed().as_secs_f64(),
                overhead_time: overhead,
                surrogates,
            };
            if let Some(sink) = self.sink.as_mut() {
                sink(&rec)?;
            }
            rec
        };
        self.archive.update(&rec);
        self.records.push(rec.clone());
        Ok(rec)
    }

    /// Evaluates the initial design; returns the evaluated points and whether
    /// the first one is the expert point.
    fn initial_design(
        &mut self,
        expert: Option<&WeightVector>,
        seed: u64,
        slot: impl Fn(usize) -> Slot,
    ) -> Result<(Vec<(Vec<f64>, EvaluationRecord)>, bool)> {
        let expert = expert.filter(|_| self.settings.include_expert);
        let include = expert.map(|e| self.settings.weight_box.to_unit(e)).transpose()?;
        let pts = initial_sampling(self.settings.n0, seed, include.as_deref())?;
        let mut out = Vec::with_capacity(pts.len());
        for (i, u) in pts.into_iter().enumerate() {
            let exact = if i == 0 { expert.copied() } else { None };
            let rec = self.evaluate(u.clone(), exact, slot(i), 0.0, Vec::new())?;
            out.push((u, rec));
        }
        Ok((out, include.is_some()))
    }
}

/// Positive expert objectives used to normalize the others, if available.
fn baseline_of(first: &EvaluationRecord, has_expert: bool) -> Option<Objectives> {
    first.feasible_values().filter(|v| has_expert && v.iter().all(|x| *x > 0.0 && x.is_finite()))
}

fn normalized(v: &Objectives, baseline: Option<&Objectives>) -> Objectives {
    match baseline {
        Some(b) => [v[0] / b[0], v[1] / b[1], v[2] / b[2]],
        None => *v,
    }
}

/// Log-transform when all values are positive and span more than `decades`.
fn maybe_log(values: &[f64], decades: f64) -> (Vec<f64>, bool) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo > 0.0 && (hi / lo).log10() > decades {
        (values.iter().map(|v| v.ln()).collect(), true)
    } else {
        (values.to_vec(), false)
    }
}

struct Surrogates {
    hyp: Vec<Option<GprHyperparams>>,
}

impl Surrogates {
    fn new(n: usize) -> Self {
        Self { hyp: vec![None; n] }
    }

    fn fit(&mut self, slot: usize, data: &Dataset, opts: &GprOptions, seed: u64) -> Result<GprModel> {
        let opts = GprOptions { seed, ..opts.clone() };
        let model = GprModel::fit_from(data, opts.mode_for(data.len()), &opts, self.hyp[slot].as_ref())?;
        self.hyp[slot] = Some(model.standardized_hyperparams().clone());
        Ok(model)
    }
}

fn feasibility_data(points: &[(Vec<f64>, EvaluationRecord)]) -> Result<Dataset> {
    Dataset::new(
        points.iter().map(|(u, _)| u.clone()).collect(),
        points.iter().map(|(_, r)| f64::from(r.g())).collect(),
    )
}

/// Approach 1: one constrained single-objective optimization per weighting,
/// each with its own seed (`seed + k`) and no shared data.
pub fn run_weighted_sum(
    session: &mut Session,
    weightings: &[WeightingScheme],
    budget_per_weight: usize,
    expert: Option<&WeightVector>,
) -> Result<()> {
    for (k, w) in weightings.iter().enumerate() {
        let seed = session.settings.seed.wrapping_add(k as u64);
        run_single_objective(session, k, *w, budget_per_weight, seed, expert)?;
    }
    Ok(())
}

/// One constrained single-objective instance (EIC acquisition) on the
/// scalarized objective `w . E`.
pub fn run_single_objective(
    session: &mut Session,
    instance: usize,
    w: WeightingScheme,
    budget: usize,
    seed: u64,
    expert: Option<&WeightVector>,
) -> Result<()> {
    let n0 = session.settings.n0;
    if budget < n0 {
        return Err(Error::InvalidArgument(format!("budget {budget} below the initial design size {n0}")));
    }
    let slot = |iteration: usize, initial: bool| Slot {
        approach: Approach::WeightedSum,
        instance,
        weighting: Some(w),
        iteration,
        initial,
    };
    let (mut local, has_expert) = session.initial_design(expert, seed, |i| slot(i, true))?;
    let baseline = baseline_of(&local[0].1, has_expert);
    let mut surrogates = Surrogates::new(2);
    for it in n0..budget {
        let t = Instant::now();
        let (u, hyp) = propose_single(&local, &w, baseline.as_ref(), &session.settings, &mut surrogates, seed, it)?;
        let overhead = t.elapsed().as_secs_f64();
        let rec = session.evaluate(u.clone(), None, slot(it, false), overhead, hyp)?;
        local.push((u, rec));
    }
    Ok(())
}

fn propose_single(
    local: &[(Vec<f64>, EvaluationRecord)],
    w: &WeightingScheme,
    baseline: Option<&Objectives>,
    settings: &OptimizerSettings,
    surrogates: &mut Surrogates,
    seed: u64,
    it: usize,
) -> Result<(Vec<f64>, Vec<GprHyperparams>)> {
    let acq_seed = mix(seed, it as u64, 0);
    if local.len() < 2 {
        return maximize_acquisition(|_| 0.0, DIM, 1, acq_seed).map(|(u, _)| (u, Vec::new()));
    }
    let g_model = surrogates.fit(0, &feasibility_data(local)?, &settings.gpr, mix(seed, it as u64, 1))?;
    let feasible: Vec<(&Vec<f64>, f64)> = local
        .iter()
        .filter_map(|(u, r)| r.feasible_values().map(|v| (u, scalarize_values(&normalized(&v, baseline), w))))
        .collect();
    let b = if feasible.len() >= 2 {
        let (targets, _) = maybe_log(&feasible.iter().map(|(_, b)| *b).collect::<Vec<_>>(), settings.log_span_decades);
        let best = targets.iter().copied().fold(f64::INFINITY, f64::min);
        let data = Dataset::new(feasible.iter().map(|(u, _)| (*u).clone()).collect(), targets)?;
        Some((surrogates.fit(1, &data, &settings.gpr, mix(seed, it as u64, 2))?, best))
    } else {
        None
    };
    let mut hyp = vec![g_model.hyperparams()];
    hyp.extend(b.as_ref().map(|(m, _)| m.hyperparams()));
    let score = |m: &[f64]| {
        let pg = g_model.predict(m);
        match &b {
            Some((model, best)) => eic(model.predict(m), Some(*best), pg),
            None => eic(Prediction { mean: 0.0, std: 0.0 }, None, pg),
        }
    };
    Ok((maximize_acquisition(score, DIM, settings.acquisition_budget, acq_seed)?.0, hyp))
}

/// Approach 2: a single instance with one surrogate per objective plus the
/// feasibility surrogate, driven by the constrained EIM criterion.
pub fn run_pareto(session: &mut Session, budget: usize, expert: Option<&WeightVector>) -> Result<()> {
    let n0 = session.settings.n0;
    if budget < n0 {
        return Err(Error::InvalidArgument(format!("budget {budget} below the initial design size {n0}")));
    }
    let seed = session.settings.seed;
    let slot = |iteration: usize, initial: bool| Slot {
        approach: Approach::Pareto,
        instance: 0,
        weighting: None,
        iteration,
        initial,
    };
    let (mut local, has_expert) = session.initial_design(expert, seed, |i| slot(i, true))?;
    let baseline = baseline_of(&local[0].1, has_expert);
    let mut surrogates = Surrogates::new(4);
    for it in n0..budget {
        let t = Instant::now();
        let (u, hyp) = propose_pareto(&local, baseline.as_ref(), &session.settings, &mut surrogates, seed, it)?;
        let overhead = t.elapsed().as_secs_f64();
        let rec = session.evaluate(u.clone(), None, slot(it, false), overhead, hyp)?;
        local.push((u, rec));
    }
    Ok(())
}

fn propose_pareto(
    local: &[(Vec<f64>, EvaluationRecord)],
    baseline: Option<&Objectives>,
    settings: &OptimizerSettings,
    surrogates: &mut Surrogates,
    seed: u64,
    it: usize,
) -> Result<(Vec<f64>, Vec<GprHyperparams>)> {
    let acq_seed = mix(seed, it as u64, 0);
    if local.len() < 2 {
        return maximize_acquisition(|_| 0.0, DIM, 1, acq_seed).map(|(u, _)| (u, Vec::new()));
    }
    let g_model = surrogates.fit(0, &feasibility_data(local)?, &settings.gpr, mix(seed, it as u64, 1))?;
    let feasible: Vec<(&Vec<f64>, Objectives)> = local
        .iter()
        .filter_map(|(u, r)| r.feasible_values().map(|v| (u, normalized(&v, baseline))))
        .collect();
    if feasible.len() < 2 {
        let score = |m: &[f64]| eic(Prediction { mean: 0.0, std: 0.0 }, None, g_model.predict(m));
        let u = maximize_acquisition(score, DIM, settings.acquisition_budget, acq_seed)?.0;
        return Ok((u, vec![g_model.hyperparams()]));
    }
    let inputs: Vec<Vec<f64>> = feasible.iter().map(|(u, _)| (*u).clone()).collect();
    let mut models = Vec::with_capacity(3);
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(3);
    let mut ranges = [1.0; 3];
    for i in 0..3 {
        let (t, _) = maybe_log(&feasible.iter().map(|(_, v)| v[i]).collect::<Vec<_>>(), settings.log_span_decades);
        let lo = t.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo > 0.0 {
            ranges[i] = hi - lo;
        }
        let data = Dataset::new(inputs.clone(), t.clone())?;
        models.push(surrogates.fit(i + 1, &data, &settings.gpr, mix(seed, it as u64, 2 + i as u64))?);
        columns.push(t);
    }
    let scaled: Vec<Objectives> =
        (0..feasible.len()).map(|k| std::array::from_fn(|i| columns[i][k] / ranges[i])).collect();
    let front: Vec<Objectives> = pareto::nondominated_indices(&scaled).into_iter().map(|k| scaled[k]).collect();
    let hyp: Vec<GprHyperparams> =
        std::iter::once(g_model.hyperparams()).chain(models.iter().map(GprModel::hyperparams)).collect();
    let score = |m: &[f64]| {
        let preds: [Prediction; 3] = std::array::from_fn(|i| {
            let p = models[i].predict(m);
            Prediction { mean: p.mean / ranges[i], std: p.std / ranges[i] }
        });
        ceim(&preds, &front, g_model.predict(m)).unwrap_or(0.0)
    };
    Ok((maximize_acquisition(score, DIM, settings.acquisition_budget, acq_seed)?.0, hyp))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HvPoint {
    pub evaluations: usize,
    /// simulation plus optimizer time up to this evaluation, s
    pub cumulative_time: f64,
    pub hypervolume: f64,
}

/// Hypervolume of the running archive after each evaluation, on objectives
/// divided by `baseline`.
pub fn hv_curve(records: &[EvaluationRecord], baseline: &Objectives, reference: &Objectives) -> Result<Vec<HvPoint>> {
    let mut archive = ParetoArchive::default();
    let mut time = 0.0;
    let mut out = Vec::with_capacity(records.len());
    for (k, r) in records.iter().enumerate() {
        time += r.sim_time + r.overhead_time;
        archive.update(r);
        let front = pareto::normalize_front(&archive.objectives(), baseline)?;
        out.push(HvPoint { evaluations: k + 1, cumulative_time: time, hypervolume: hypervolume_within(&front, reference) });
    }
    Ok(out)
}

pub const HV_COLUMNS: [&str; 3] = ["evaluations", "cumulative_time", "hypervolume"];

pub fn save_hv_csv(curve: &[HvPoint], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(HV_COLUMNS)?;
    for p in curve {
        w.write_record([p.evaluations.to_string(), p.cumulative_time.to_string(), p.hypervolume.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Append-only JSON-lines ledger, flushed after every record.
pub struct LedgerWriter {
    out: BufWriter<File>,
}

impl LedgerWriter {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(Self { out: BufWriter::new(File::create(path)?) })
    }

    pub fn append_to(path: &Path) -> Result<Self> {
        Ok(Self { out: BufWriter::new(File::options().append(true).create(true).open(path)?) })
    }

    pub fn append(&mut self, rec: &EvaluationRecord) -> Result<()> {
        serde_json::to_writer(&mut self.out, rec)?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }
}

/// Reads a ledger; a truncated final line (interrupted write) is dropped.
pub fn read_ledger(path: &Path) -> Result<Vec<EvaluationRecord>> {
    let lines: Vec<String> = BufReader::new(File::open(path)?).lines().collect::<std::io::Result<_>>()?;
    let mut out = Vec::with_capacity(lines.len());
    let last = lines.iter().rposition(|l| !l.trim().is_empty());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(r) => out.push(r),
            Err(e) if Some(i) == last => log::warn!("dropping truncated ledger line {}: {e}", i + 1),
            Err(e) => return Err(Error::Parse(format!("ledger line {}: {e}", i + 1))),
        }
    }
    Ok(out)
}

pub fn write_ledger(path: &Path, records: &[EvaluationRecord]) -> Result<()> {
    let mut w = LedgerWriter::create(path)?;
    records.iter().try_for_each(|r| w.append(r))
}
