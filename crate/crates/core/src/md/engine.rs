//! Velocity-Verlet integration with Berendsen coupling and anomaly checks.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calc::{evaluate_pairs, CalcError, Evaluation, PairCalculator};
use crate::elements::MassTable;
use crate::extxyz;
use crate::geometry::{image_mode_for, neighbor_pairs, Cell, NeighborPair, Vec3};
use crate::report::{MdConditions, TrajectoryRecord};
use crate::structure::AtomicConfiguration;
use crate::units::{kinetic_energy, ACCEL_PER_EV_A_AMU, AMU_PER_A3_TO_G_PER_CM3, BOLTZMANN, EV_PER_A3_TO_BAR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ensemble {
    #[serde(rename = "NVE")]
    Nve,
    #[serde(rename = "NVT")]
    Nvt,
    #[serde(rename = "NPT")]
    Npt,
}

impl Ensemble {
    pub fn as_str(&self) -> &'static str {
        match self {
            Ensemble::Nve => "NVE",
            Ensemble::Nvt => "NVT",
            Ensemble::Npt => "NPT",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MdProtocol {
    pub ensemble: Ensemble,
    /// K.
    pub temperature: f64,
    /// bar.
    pub pressure: f64,
    /// fs.
    pub dt: f64,
    pub n_steps: usize,
    pub snapshot_interval: usize,
    /// Steps excluded from observables; 20% of `n_steps` when absent.
    pub equilibration_steps: Option<usize>,
    /// Thermostat time constant (fs).
    pub tau_t: f64,
    /// Barostat time constant (fs).
    pub tau_p: f64,
    /// Isothermal compressibility (1/bar).
    pub compressibility: f64,
    /// Verlet-list skin (Å).
    pub skin: f64,
    pub seed: u64,
}

impl Default for MdProtocol {
    fn default() -> Self {
        Self {
            ensemble: Ensemble::Nvt,
            temperature: 300.0,
            pressure: 1.0,
            dt: 1.0,
            n_steps: 1000,
            snapshot_interval: 8,
            equilibration_steps: None,
            tau_t: 100.0,
            tau_p: 1000.0,
            compressibility: 1e-4,
            skin: 0.5,
            seed: 0,
        }
    }
}

impl MdProtocol {
    pub fn equilibration(&self) -> usize {
        self.equilibration_steps.unwrap_or(self.n_steps / 5)
    }

    pub fn validate(&self) -> Result<(), MdError> {
        let bad = |m: &str| Err(MdError::Setup(m.to_string()));
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if self.snapshot_interval == 0 {
            return bad("snapshot_interval must be at least 1");
        }
        if self.n_steps == 0 || self.equilibration() >= self.n_steps {
            return bad("equilibration_steps must be below n_steps");
        }
        if self.ensemble != Ensemble::Nve && !(self.temperature > 0.0) {
            return bad("thermostatted runs need a positive temperature");
        }
        if !(self.tau_t > 0.0) || !(self.tau_p > 0.0) || !(self.compressibility > 0.0) || !(self.skin >= 0.0) {
            return bad("coupling constants must be positive");
        }
        Ok(())
    }

    /// Snapshots a completed run of `steps` emits: one at the end of
    /// equilibration and one every `snapshot_interval` steps after it.
    pub fn snapshot_count(&self, steps: usize) -> usize {
        let eq = self.equilibration();
        if steps < eq {
            0
        } else {
            (steps - eq) / self.snapshot_interval + 1
        }
    }

    pub fn conditions(&self) -> MdConditions {
        MdConditions {
            ensemble: self.ensemble.as_str().into(),
            temperature: self.temperature,
            pressure: self.pressure,
            dt: self.dt,
            steps: self.n_steps,
            snapshot_interval: self.snapshot_interval,
            equilibration_steps: self.equilibration(),
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnomalyThresholds {
    /// Trip when temperature exceeds this multiple of the target...
    pub temp_factor: f64,
    /// ...for this many consecutive steps.
    pub temp_window: usize,
    /// Å.
    pub min_distance: f64,
    /// eV/atom between consecutive snapshots.
    pub energy_jump: f64,
    /// Fraction of the initial density (NPT only).
    pub density_floor: f64,
}

impl Default for AnomalyThresholds {
    fn default() -> Self {
        Self { temp_factor: 2.0, temp_window: 50, min_distance: 0.5, energy_jump: 10.0, density_floor: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TemperatureRunaway,
    StructuralCollapse,
    EnergyDivergence,
    DensityCollapse,
    NonFinite,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::TemperatureRunaway => "temperature_runaway",
            StopReason::StructuralCollapse => "structural_collapse",
            StopReason::EnergyDivergence => "energy_divergence",
            StopReason::DensityCollapse => "density_collapse",
            StopReason::NonFinite => "non_finite",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunStatus {
    Completed,
    EarlyStop(StopReason),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MdError {
    #[error("MD setup: {0}")]
    Setup(String),
    #[error(transparent)]
    Calc(#[from] CalcError),
}

/// One stored frame with its thermodynamic state.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    /// fs since the start of the run.
    pub time: f64,
    pub config: AtomicConfiguration,
    pub potential_energy: f64,
    pub kinetic_energy: f64,
    pub temperature: f64,
    /// bar.
    pub pressure: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub trajectory_id: String,
    pub source_structure_id: String,
    pub calculator_id: String,
    pub protocol: MdProtocol,
    pub frames: Vec<Snapshot>,
    pub status: RunStatus,
    pub steps_completed: usize,
}

impl Trajectory {
    pub fn is_completed(&self) -> bool {
        self.status == RunStatus::Completed
    }

    pub fn stop_reason(&self) -> Option<StopReason> {
        match self.status {
            RunStatus::Completed => None,
            RunStatus::EarlyStop(r) => Some(r),
        }
    }

    pub fn record(&self, category: &str, path: &str) -> TrajectoryRecord {
        TrajectoryRecord {
            trajectory_id: self.trajectory_id.clone(),
            structure_id: self.source_structure_id.clone(),
            category: category.into(),
            calculator_id: self.calculator_id.clone(),
            snapshot_count: self.frames.len(),
            steps_completed: self.steps_completed,
            conditions: self.protocol.conditions(),
            status: if self.is_completed() { "completed".into() } else { "early_stop".into() },
            reason: self.stop_reason().map(|r| r.as_str().to_string()),
            path: path.into(),
        }
    }

    /// Writes all snapshots as concatenated extended-XYZ blocks.
    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let mut text = String::new();
        for s in &self.frames {
            let mut c = s.config.clone();
            c.info.insert("step".into(), s.step.to_string());
            c.info.insert("time".into(), format!("{:.16e}", s.time));
            c.info.insert("potential_energy".into(), format!("{:.16e}", s.potential_energy));
            c.info.insert("temperature".into(), format!("{:.16e}", s.temperature));
            c.info.insert("trajectory_id".into(), self.trajectory_id.clone());
            text.push_str(&extxyz::encode_config(&c));
        }
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, text)
    }
}

/// Test seam: called after every completed step with mutable access to the
/// dynamical state.
pub trait StepHook {
    fn after_step(&mut self, step: usize, positions: &mut [Vec3], velocities: &mut [Vec3], masses: &[f64]);
}

/// Instantaneous temperature with `3N − 3` degrees of freedom.
pub fn temperature(velocities: &[Vec3], masses: &[f64]) -> f64 {
    let ke = total_kinetic(velocities, masses);
    let dof = (3 * velocities.len()).saturating_sub(3).max(1) as f64;
    2.0 * ke / (dof * BOLTZMANN)
}

pub fn total_kinetic(velocities: &[Vec3], masses: &[f64]) -> f64 {
    velocities.iter().zip(masses).map(|(v, &m)| kinetic_energy(m, v.norm_squared())).sum()
}

/// Maxwell–Boltzmann velocities at `t` with zero total momentum, rescaled to
/// exactly `t`.
pub fn maxwell_boltzmann(masses: &[f64], t: f64, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut v: Vec<Vec3> = masses
        .iter()
        .map(|&m| {
            let s = (BOLTZMANN * t / m * ACCEL_PER_EV_A_AMU).sqrt();
            Vec3::new(normal.sample(rng) * s, normal.sample(rng) * s, normal.sample(rng) * s)
        })
        .collect();
    remove_drift(&mut v, masses);
    let now = temperature(&v, masses);
    if now > 0.0 && masses.len() > 1 {
        let f = (t / now).sqrt();
        v.iter_mut().for_each(|x| *x *= f);
    }
    v
}

fn remove_drift(v: &mut [Vec3], masses: &[f64]) {
    let total: f64 = masses.iter().sum();
    let p: Vec3 = v.iter().zip(masses).map(|(x, &m)| x * m).sum();
    let vc = p / total;
    v.iter_mut().for_each(|x| *x -= vc);
}

/// Verlet neighbor list storing image shifts so pair vectors can be rebuilt
/// from unwrapped positions under a changing cell.
struct NeighborList {
    pairs: Vec<(usize, usize, [i32; 3])>,
    reference: Vec<Vec3>,
    reference_cell: Cell,
    reach: f64,
    skin: f64,
}

impl NeighborList {
    fn build(cell: &Cell, positions: &[Vec3], cutoff: f64, skin: f64) -> Result<Self, CalcError> {
        let reach = cutoff + skin;
        let pairs = neighbor_pairs(cell, positions, reach, image_mode_for(cell, reach))?
            .into_iter()
            .map(|p| (p.i, p.j, p.shift))
            .collect();
        Ok(Self { pairs, reference: positions.to_vec(), reference_cell: cell.clone(), reach, skin })
    }

    fn stale(&self, cell: &Cell, positions: &[Vec3]) -> bool {
        let scale = cell.volume().cbrt() / self.reference_cell.volume().cbrt();
        let scale = if scale.is_finite() { scale } else { 1.0 };
        let max_disp = positions
            .iter()
            .zip(&self.reference)
            .map(|(p, r)| (p - r * scale).norm())
            .fold(0.0, f64::max);
        2.0 * max_disp + (scale - 1.0).abs() * self.reach > self.skin
    }

    fn current(&self, cell: &Cell, positions: &[Vec3]) -> Vec<NeighborPair> {
        self.pairs
            .iter()
            .map(|&(i, j, shift)| {
                let v = positions[j] + cell.shift_vector(shift) - positions[i];
                NeighborPair { i, j, shift, vector: v, distance: v.norm() }
            })
            .collect()
    }
}

struct Forces {
    eval: Evaluation,
}

fn compute(
    calc: &dyn PairCalculator,
    types: &[usize],
    list: &mut NeighborList,
    cell: &Cell,
    positions: &[Vec3],
    cutoff: f64,
) -> Result<Forces, CalcError> {
    if positions.iter().any(|p| p.iter().any(|x| !x.is_finite())) {
        return Ok(Forces {
            eval: Evaluation { energy: f64::NAN, forces: vec![Vec3::zeros(); positions.len()], virial: 0.0, min_distance: f64::NAN },
        });
    }
    if list.stale(cell, positions) {
        *list = NeighborList::build(cell, positions, cutoff, list.skin)?;
    }
    let pairs = list.current(cell, positions);
    Ok(Forces { eval: evaluate_pairs(calc, types, &pairs) })
}

fn pressure_bar(ke: f64, virial: f64, volume: f64) -> f64 {
    (2.0 * ke + virial) / (3.0 * volume) * EV_PER_A3_TO_BAR
}

/// Runs MD from `config`. Early stops are reported in the trajectory status;
/// only setup problems are errors.
pub fn run_md(
    trajectory_id: &str,
    config: &AtomicConfiguration,
    calc: &dyn PairCalculator,
    masses: &MassTable,
    protocol: &MdProtocol,
    thresholds: &AnomalyThresholds,
    mut hook: Option<&mut dyn StepHook>,
) -> Result<Trajectory, MdError> {
    protocol.validate()?;
    if config.is_empty() {
        return Err(MdError::Setup("configuration has no atoms".into()));
    }
    config.validate().map_err(|e| MdError::Setup(e.to_string()))?;
    if protocol.ensemble == Ensemble::Npt && !config.cell.fully_periodic() {
        return Err(MdError::Setup("NPT needs a fully periodic cell".into()));
    }
    let types = calc.type_indices(&config.species)?;
    let m: Vec<f64> = config
        .species
        .iter()
        .map(|s| masses.get(s).copied().ok_or_else(|| MdError::Setup(format!("no mass for species `{s}`"))))
        .collect::<Result<_, _>>()?;
    let total_mass: f64 = m.iter().sum();
    let cutoff = calc.cutoff();

    let mut cell = config.cell.clone();
    let mut r = config.positions.clone();
    let mut v = match &config.velocities {
        Some(v) => v.clone(),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(protocol.seed);
            maxwell_boltzmann(&m, protocol.temperature, &mut rng)
        }
    };
    let mut list = NeighborList::build(&cell, &r, cutoff, protocol.skin)?;
    let mut f = compute(calc, &types, &mut list, &cell, &r, cutoff)?;
    let density0 = if cell.fully_periodic() { total_mass / cell.volume() } else { 0.0 };
    let dt = protocol.dt;
    let eq = protocol.equilibration();
    let target_t = protocol.temperature;
    let hot_limit = thresholds.temp_factor * target_t;

    let mut frames = Vec::new();
    let mut hot_steps = 0usize;
    let mut last_epa: Option<f64> = None;
    let n_atoms = r.len() as f64;

    let snapshot = |step: usize, cell: &Cell, r: &[Vec3], v: &[Vec3], f: &Forces| {
        let ke = total_kinetic(v, &m);
        let mut c = config.clone();
        c.cell = cell.clone();
        c.positions = r.to_vec();
        c.velocities = Some(v.to_vec());
        Snapshot {
            step,
            time: step as f64 * dt,
            config: c,
            potential_energy: f.eval.energy,
            kinetic_energy: ke,
            temperature: temperature(v, &m),
            pressure: if cell.fully_periodic() { pressure_bar(ke, f.eval.virial, cell.volume()) } else { 0.0 },
        }
    };

    let check = |step: usize,
                 cell: &Cell,
                 r: &[Vec3],
                 v: &[Vec3],
                 f: &Forces,
                 hot_steps: &mut usize,
                 last_epa: &mut Option<f64>|
     -> Option<StopReason> {
        let finite = f.eval.energy.is_finite()
            && r.iter().chain(v.iter()).chain(f.eval.forces.iter()).all(|x| x.iter().all(|c| c.is_finite()));
        if !finite {
            return Some(StopReason::NonFinite);
        }
        if f.eval.min_distance < thresholds.min_distance {
            return Some(StopReason::StructuralCollapse);
        }
        if target_t > 0.0 && temperature(v, &m) > hot_limit {
            *hot_steps += 1;
            if *hot_steps >= thresholds.temp_window {
                return Some(StopReason::TemperatureRunaway);
            }
        } else {
            *hot_steps = 0;
        }
        if protocol.ensemble == Ensemble::Npt && total_mass / cell.volume() < thresholds.density_floor * density0 {
            return Some(StopReason::DensityCollapse);
        }
        if step == 0 || (step >= eq && (step - eq) % protocol.snapshot_interval == 0) {
            let epa = f.eval.energy / n_atoms;
            if let Some(prev) = *last_epa {
                if (epa - prev).abs() > thresholds.energy_jump {
                    return Some(StopReason::EnergyDivergence);
                }
            }
            *last_epa = Some(epa);
        }
        None
    };

    let mut last_pressure = if protocol.ensemble == Ensemble::Npt {
        pressure_bar(total_kinetic(&v, &m), f.eval.virial, cell.volume())
    } else {
        f64::NAN
    };
    let mut status = RunStatus::Completed;
    let mut steps_completed = 0;
    if let Some(reason) = check(0, &cell, &r, &v, &f, &mut hot_steps, &mut last_epa) {
        status = RunStatus::EarlyStop(reason);
    } else if eq == 0 {
        frames.push(snapshot(0, &cell, &r, &v, &f));
    }

    if status == RunStatus::Completed {
        for step in 1..=protocol.n_steps {
            for i in 0..r.len() {
                let a = f.eval.forces[i] * (ACCEL_PER_EV_A_AMU / m[i]);
                v[i] += a * (0.5 * dt);
                r[i] += v[i] * dt;
            }
            // Isotropic rescale driven by the pressure at the end of the
            // previous step, so forces are evaluated once per step.
            if protocol.ensemble == Ensemble::Npt && last_pressure.is_finite() {
                let mu3 = 1.0 - protocol.compressibility * dt / protocol.tau_p * (protocol.pressure - last_pressure);
                let mu = mu3.max(0.0).cbrt().clamp(0.98, 1.02);
                cell = cell.scaled(mu);
                r.iter_mut().for_each(|x| *x *= mu);
            }
            f = compute(calc, &types, &mut list, &cell, &r, cutoff)?;
            for i in 0..r.len() {
                let a = f.eval.forces[i] * (ACCEL_PER_EV_A_AMU / m[i]);
                v[i] += a * (0.5 * dt);
            }
            if protocol.ensemble != Ensemble::Nve {
                let t_now = temperature(&v, &m);
                if t_now > 0.0 && t_now.is_finite() {
                    let lam2 = 1.0 + dt / protocol.tau_t * (target_t / t_now - 1.0);
                    let lam = lam2.max(0.0).sqrt().clamp(0.8, 1.25);
                    v.iter_mut().for_each(|x| *x *= lam);
                }
            }
            if let Some(h) = hook.as_deref_mut() {
                h.after_step(step, &mut r, &mut v, &m);
                f = compute(calc, &types, &mut list, &cell, &r, cutoff)?;
            }
            if protocol.ensemble == Ensemble::Npt {
                last_pressure = pressure_bar(total_kinetic(&v, &m), f.eval.virial, cell.volume());
            }
            steps_completed = step;
            if let Some(reason) = check(step, &cell, &r, &v, &f, &mut hot_steps, &mut last_epa) {
                status = RunStatus::EarlyStop(reason);
                break;
            }
            if step >= eq && (step - eq) % protocol.snapshot_interval == 0 {
                frames.push(snapshot(step, &cell, &r, &v, &f));
            }
        }
    }

    Ok(Trajectory {
        trajectory_id: trajectory_id.into(),
        source_structure_id: config.structure_id.clone(),
        calculator_id: calc.id().into(),
        protocol: protocol.clone(),
        frames,
        status,
        steps_completed,
    })
}

/// Mass density (g/cm³) of a periodic configuration given per-atom masses.
pub fn density_of(cell: &Cell, total_mass: f64) -> f64 {
    total_mass / cell.volume() * AMU_PER_A3_TO_G_PER_CM3
}
