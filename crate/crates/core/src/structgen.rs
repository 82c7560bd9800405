//! Deterministic structure builders and the annotated initial structure set.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Matrix3;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::elements::MassTable;
use crate::extxyz;
use crate::geometry::{min_pair_distance, Cell, Vec3};
use crate::seed::derive_seed;
use crate::structure::AtomicConfiguration;
use crate::units::AMU_PER_A3_TO_G_PER_CM3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BuildError {
    #[error("unknown lattice `{0}`")]
    UnknownLattice(String),
    #[error("invalid build parameters: {0}")]
    Invalid(String),
    #[error("packing failed after placing {placed} of {requested} atoms ({:.1}%)", 100.0 * *placed as f64 / *requested as f64)]
    Packing { placed: usize, requested: usize },
    #[error("lateral mismatch {strain:.4} exceeds tolerance {tolerance:.4}")]
    LatticeMismatch { strain: f64, tolerance: f64 },
    #[error("plan `{plan}` variant {variant}: {source}")]
    Plan { plan: String, variant: usize, source: Box<BuildError> },
    #[error("structure `{id}` fails validation: min distance {min_distance:.3} Å < {threshold:.3} Å")]
    Validation { id: String, min_distance: f64, threshold: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lattice {
    Sc,
    Fcc,
    Bcc,
    Rocksalt,
}

impl std::str::FromStr for Lattice {
    type Err = BuildError;
    fn from_str(s: &str) -> Result<Self, BuildError> {
        match s {
            "sc" => Ok(Lattice::Sc),
            "fcc" => Ok(Lattice::Fcc),
            "bcc" => Ok(Lattice::Bcc),
            "rocksalt" => Ok(Lattice::Rocksalt),
            _ => Err(BuildError::UnknownLattice(s.into())),
        }
    }
}

/// Fractional basis sites and the sublattice each belongs to.
fn basis_sites(lattice: Lattice) -> Vec<([f64; 3], usize)> {
    match lattice {
        Lattice::Sc => vec![([0.0, 0.0, 0.0], 0)],
        Lattice::Bcc => vec![([0.0, 0.0, 0.0], 0), ([0.5, 0.5, 0.5], 0)],
        Lattice::Fcc => vec![([0.0, 0.0, 0.0], 0), ([0.5, 0.5, 0.0], 0), ([0.5, 0.0, 0.5], 0), ([0.0, 0.5, 0.5], 0)],
        Lattice::Rocksalt => vec![
            ([0.0, 0.0, 0.0], 0),
            ([0.5, 0.5, 0.0], 0),
            ([0.5, 0.0, 0.5], 0),
            ([0.0, 0.5, 0.5], 0),
            ([0.5, 0.0, 0.0], 1),
            ([0.0, 0.5, 0.0], 1),
            ([0.0, 0.0, 0.5], 1),
            ([0.5, 0.5, 0.5], 1),
        ],
    }
}

/// Cubic supercell of a conventional cell. `species` gives one symbol per
/// sublattice (two for rocksalt), or one symbol used for every site.
pub fn build_solid(
    lattice: Lattice,
    a0: f64,
    species: &[String],
    reps: [usize; 3],
) -> Result<AtomicConfiguration, BuildError> {
    if reps.contains(&0) {
        return Err(BuildError::Invalid("repetitions must be at least 1".into()));
    }
    if !(a0 > 0.0) {
        return Err(BuildError::Invalid("lattice constant must be positive".into()));
    }
    let sites = basis_sites(lattice);
    let sublattices = sites.iter().map(|s| s.1).max().unwrap() + 1;
    if species.is_empty() || (species.len() != 1 && species.len() != sublattices) {
        return Err(BuildError::Invalid(format!("{} species for {sublattices} sublattice(s)", species.len())));
    }
    let mut sp = Vec::new();
    let mut pos = Vec::new();
    for ix in 0..reps[0] {
        for iy in 0..reps[1] {
            for iz in 0..reps[2] {
                for (f, sub) in &sites {
                    let r = Vec3::new(ix as f64 + f[0], iy as f64 + f[1], iz as f64 + f[2]) * a0;
                    pos.push(r);
                    sp.push(species[if species.len() == 1 { 0 } else { *sub }].clone());
                }
            }
        }
    }
    let cell = Cell::orthorhombic(a0 * reps[0] as f64, a0 * reps[1] as f64, a0 * reps[2] as f64);
    Ok(AtomicConfiguration::new(cell, sp, pos))
}

/// Nearest-neighbor distance of a lattice with conventional constant `a0`.
pub fn nearest_neighbor_distance(lattice: Lattice, a0: f64) -> f64 {
    match lattice {
        Lattice::Sc => a0,
        Lattice::Fcc => a0 / 2f64.sqrt(),
        Lattice::Bcc => a0 * 3f64.sqrt() / 2.0,
        Lattice::Rocksalt => a0 / 2.0,
    }
}

fn total_mass(counts: &BTreeMap<String, usize>, masses: &MassTable) -> Result<f64, BuildError> {
    counts
        .iter()
        .map(|(s, &n)| {
            masses.get(s).map(|m| m * n as f64).ok_or_else(|| BuildError::Invalid(format!("no mass for `{s}`")))
        })
        .sum()
}

const RANDOM_CLOSE_PACKING: f64 = 0.64;

/// Random sequential insertion into a periodic box sized for `density`
/// (g/cm³). With `lateral = Some((lx, ly))` the box has those in-plane
/// lengths and its height follows from the density; otherwise it is cubic.
pub fn build_packed(
    counts: &BTreeMap<String, usize>,
    density: f64,
    min_separation: f64,
    masses: &MassTable,
    seed: u64,
    max_attempts: usize,
    lateral: Option<(f64, f64)>,
) -> Result<AtomicConfiguration, BuildError> {
    if !(density > 0.0) || !(min_separation > 0.0) {
        return Err(BuildError::Invalid("density and min_separation must be positive".into()));
    }
    let n: usize = counts.values().sum();
    if n == 0 {
        return Err(BuildError::Invalid("no atoms requested".into()));
    }
    let volume = total_mass(counts, masses)? * AMU_PER_A3_TO_G_PER_CM3 / density;
    let cell = match lateral {
        Some((lx, ly)) => Cell::orthorhombic(lx, ly, volume / (lx * ly)),
        None => Cell::cubic(volume.cbrt()),
    };
    // Random close packing bounds what insertion can reach.
    let fraction = n as f64 / volume * 4.0 / 3.0 * std::f64::consts::PI * (0.5 * min_separation).powi(3);
    if fraction > RANDOM_CLOSE_PACKING {
        return Err(BuildError::Packing { placed: 0, requested: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Interleave species deterministically so no species is starved of space.
    let mut order: Vec<String> = Vec::with_capacity(n);
    let mut left: Vec<(String, usize)> = counts.iter().map(|(s, &c)| (s.clone(), c)).collect();
    while order.len() < n {
        for (s, c) in left.iter_mut() {
            if *c > 0 {
                order.push(s.clone());
                *c -= 1;
            }
        }
    }
    let d2 = min_separation * min_separation;
    let mut pos: Vec<Vec3> = Vec::with_capacity(n);
    for placed in 0..n {
        let mut ok = false;
        for _ in 0..max_attempts.max(1) {
            let f = Vec3::new(rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>());
            let r = cell.to_cartesian(&f);
            if pos.iter().all(|p| cell.min_image(&(r - p)).norm_squared() >= d2) {
                pos.push(r);
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(BuildError::Packing { placed, requested: n });
        }
    }
    Ok(AtomicConfiguration::new(cell, order, pos))
}

/// Pushes overlapping pairs apart until no pair is closer than `target`
/// (or `iterations` sweeps pass). Deterministic.
pub fn spread(config: &mut AtomicConfiguration, target: f64, iterations: usize) {
    let n = config.len();
    for _ in 0..iterations {
        let mut moves = vec![Vec3::zeros(); n];
        let mut any = false;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = config.cell.min_image(&(config.positions[j] - config.positions[i]));
                let d = v.norm();
                if d < target && d > 0.0 {
                    let push = v * (0.25 * (target - d) / d);
                    moves[j] += push;
                    moves[i] -= push;
                    any = true;
                }
            }
        }
        if !any {
            break;
        }
        for (p, m) in config.positions.iter_mut().zip(moves) {
            *p += m;
        }
    }
    config.positions = config.wrapped_positions();
}

/// Adds `vacuum` along `axis`, centers the atoms and makes that axis
/// non-periodic.
pub fn build_slab(bulk: &AtomicConfiguration, axis: usize, vacuum: f64) -> Result<AtomicConfiguration, BuildError> {
    if axis > 2 {
        return Err(BuildError::Invalid(format!("axis {axis} out of range")));
    }
    if !(vacuum > 0.0) {
        return Err(BuildError::Invalid("vacuum must be positive".into()));
    }
    if !bulk.cell.periodic()[axis] {
        return Err(BuildError::Invalid("bulk must be periodic along the slab axis".into()));
    }
    let h = *bulk.cell.vectors();
    let a = bulk.cell.vector(axis);
    let len = a.norm();
    let unit = a / len;
    let mut rows = h;
    let new_a = unit * (len + vacuum);
    for k in 0..3 {
        rows[(axis, k)] = new_a[k];
    }
    let mut periodic = bulk.cell.periodic();
    periodic[axis] = false;
    let cell = Cell::new(rows, periodic).map_err(|e| BuildError::Invalid(e.to_string()))?;
    let mut out = bulk.clone();
    out.positions = bulk.wrapped_positions();
    out.cell = cell;
    out.translate(&(unit * (0.5 * vacuum)));
    Ok(out)
}

fn fresh_tag(existing: &[String], base: &str) -> String {
    if !existing.iter().any(|t| t == base) {
        return base.to_string();
    }
    (2..).map(|k| format!("{base}_{k}")).find(|t| !existing.iter().any(|e| e == t)).unwrap()
}

/// Stacks `upper` on top of `lower` along z. The upper block is strained
/// in-plane to the lower cell; `gap` separates the closest atomic planes on
/// both the inner and the periodic seam.
pub fn build_stack(
    lower: &AtomicConfiguration,
    upper: &AtomicConfiguration,
    gap: f64,
    lateral_strain_tol: f64,
) -> Result<AtomicConfiguration, BuildError> {
    if !(gap > 0.0) {
        return Err(BuildError::Invalid("gap must be positive".into()));
    }
    for c in [lower, upper] {
        if !c.cell.is_orthorhombic() || !c.cell.fully_periodic() {
            return Err(BuildError::Invalid("stacking needs fully periodic orthorhombic cells".into()));
        }
    }
    let (hl, hu) = (lower.cell.vectors(), upper.cell.vectors());
    let sx = hl[(0, 0)] / hu[(0, 0)];
    let sy = hl[(1, 1)] / hu[(1, 1)];
    let strain = (sx - 1.0).abs().max((sy - 1.0).abs());
    if strain > lateral_strain_tol {
        return Err(BuildError::LatticeMismatch { strain, tolerance: lateral_strain_tol });
    }
    let wl = lower.wrapped_positions();
    let wu: Vec<Vec3> = upper.wrapped_positions().iter().map(|p| Vec3::new(p.x * sx, p.y * sy, p.z)).collect();
    let z_range = |ps: &[Vec3]| {
        ps.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.z), hi.max(p.z)))
    };
    let (l0, l1) = z_range(&wl);
    let (u0, u1) = z_range(&wu);
    let height = (l1 - l0) + gap + (u1 - u0) + gap;
    let mut species = lower.species.clone();
    species.extend(upper.species.iter().cloned());
    let mut positions: Vec<Vec3> = wl.iter().map(|p| Vec3::new(p.x, p.y, p.z - l0)).collect();
    let offset = (l1 - l0) + gap;
    positions.extend(wu.iter().map(|p| Vec3::new(p.x, p.y, p.z - u0 + offset)));
    let lower_tags = lower.region_tags.clone().unwrap_or_else(|| vec!["lower".into(); lower.len()]);
    let mut existing: Vec<String> = lower_tags.clone();
    existing.sort();
    existing.dedup();
    let upper_tags = match &upper.region_tags {
        Some(t) => t.clone(),
        None => vec![fresh_tag(&existing, "upper"); upper.len()],
    };
    let mut tags = lower_tags;
    tags.extend(upper_tags);
    let cell = Cell::new(Matrix3::from_diagonal(&Vec3::new(hl[(0, 0)], hl[(1, 1)], height)), [true; 3])
        .map_err(|e| BuildError::Invalid(e.to_string()))?;
    let mut out = AtomicConfiguration::new(cell, species, positions);
    out.region_tags = Some(tags);
    Ok(out)
}

/// Sphere of radius `radius` cut around the center of a periodic solid.
pub fn build_cluster(bulk: &AtomicConfiguration, radius: f64) -> Result<AtomicConfiguration, BuildError> {
    let center = bulk.cell.to_cartesian(&Vec3::new(0.5, 0.5, 0.5));
    let mut sp = Vec::new();
    let mut pos = Vec::new();
    for (s, p) in bulk.species.iter().zip(bulk.wrapped_positions()) {
        if (p - center).norm() <= radius {
            sp.push(s.clone());
            pos.push(p - center);
        }
    }
    if pos.is_empty() {
        return Err(BuildError::Invalid("cluster radius selects no atoms".into()));
    }
    Ok(AtomicConfiguration::new(Cell::open(), sp, pos))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub min_distance: f64,
    pub density: Option<f64>,
    pub pass: bool,
}

/// Closest-pair check with optional density.
pub fn validate_structure(config: &AtomicConfiguration, min_separation: f64, masses: &MassTable) -> ValidationReport {
    let min_distance = min_pair_distance(&config.cell, &config.positions);
    let density = config.density(masses).ok();
    ValidationReport { min_distance, density, pass: min_distance >= min_separation }
}

/// Table of structure categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Solid,
    Amorphous,
    MoleculeLiquid,
    SolidSurface,
    Cluster,
    SolidSolid,
    SolidLiquid,
    LiquidLiquid,
    Multilayer,
}

impl Category {
    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Solid => "solid",
            Category::Amorphous => "amorphous",
            Category::MoleculeLiquid => "molecule_liquid",
            Category::SolidSurface => "solid_surface",
            Category::Cluster => "cluster",
            Category::SolidSolid => "solid_solid",
            Category::SolidLiquid => "solid_liquid",
            Category::LiquidLiquid => "liquid_liquid",
            Category::Multilayer => "multilayer",
        }
    }
}

/// Builder recipe. Composite recipes nest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Builder {
    Solid {
        lattice: Lattice,
        a0: f64,
        species: Vec<String>,
        reps: [usize; 3],
    },
    Packed {
        counts: BTreeMap<String, usize>,
        /// g/cm³.
        density: f64,
        min_separation: f64,
        /// Spread pairs to at least this distance after insertion.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        spread_to: Option<f64>,
    },
    Slab {
        bulk: Box<Builder>,
        axis: usize,
        vacuum: f64,
    },
    Cluster {
        bulk: Box<Builder>,
        radius: f64,
    },
    /// Layers stacked bottom to top along z. A packed layer takes the
    /// in-plane size of the layer below it.
    Stack {
        layers: Vec<Builder>,
        gap: f64,
        #[serde(default = "default_strain_tol")]
        lateral_strain_tol: f64,
    },
}

fn default_strain_tol() -> f64 {
    0.02
}

/// Jitter ranges applied to variants after the first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Jitter {
    /// Relative density change, ±.
    pub density: f64,
    /// Repetition change along one axis, ±.
    pub reps: usize,
    /// Gap change (Å), ±.
    pub gap: f64,
}

impl Default for Jitter {
    fn default() -> Self {
        Self { density: 0.1, reps: 1, gap: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildPlan {
    pub name: String,
    pub category: Category,
    pub builder: Builder,
    #[serde(default = "default_variants")]
    pub variants: usize,
    #[serde(default)]
    pub jitter: Jitter,
}

fn default_variants() -> usize {
    6
}

const MAX_INSERTION_ATTEMPTS: usize = 20_000;

fn sym(rng: &mut ChaCha8Rng, x: f64) -> f64 {
    if x > 0.0 {
        rng.random_range(-x..x)
    } else {
        0.0
    }
}

fn jittered(b: &Builder, j: &Jitter, rng: &mut ChaCha8Rng) -> Builder {
    match b {
        Builder::Solid { lattice, a0, species, reps } => {
            let d = sym(rng, j.density);
            let mut reps = *reps;
            let axis = rng.random_range(0..3usize);
            let step = rng.random_range(-(j.reps as i64)..=j.reps as i64);
            reps[axis] = (reps[axis] as i64 + step).max(1) as usize;
            // Density scales as a0⁻³.
            Builder::Solid { lattice: *lattice, a0: a0 * (1.0 + d).powf(-1.0 / 3.0), species: species.clone(), reps }
        }
        Builder::Packed { counts, density, min_separation, spread_to } => Builder::Packed {
            counts: counts.clone(),
            density: density * (1.0 + sym(rng, j.density)),
            min_separation: *min_separation,
            spread_to: *spread_to,
        },
        Builder::Slab { bulk, axis, vacuum } => {
            Builder::Slab { bulk: Box::new(jittered(bulk, j, rng)), axis: *axis, vacuum: *vacuum }
        }
        Builder::Cluster { bulk, radius } => {
            Builder::Cluster { bulk: Box::new(jittered(bulk, j, rng)), radius: radius * (1.0 + sym(rng, j.density) / 3.0) }
        }
        Builder::Stack { layers, gap, lateral_strain_tol } => {
            let g = (gap + sym(rng, j.gap)).max(0.5 * gap);
            Builder::Stack {
                layers: layers.iter().map(|l| jittered(l, j, rng)).collect(),
                gap: g,
                lateral_strain_tol: *lateral_strain_tol,
            }
        }
    }
}

/// Realizes a recipe. `seed` drives every random choice.
pub fn build(b: &Builder, masses: &MassTable, seed: u64) -> Result<AtomicConfiguration, BuildError> {
    build_on(b, masses, seed, None)
}

fn build_on(
    b: &Builder,
    masses: &MassTable,
    seed: u64,
    lateral: Option<(f64, f64)>,
) -> Result<AtomicConfiguration, BuildError> {
    match b {
        Builder::Solid { lattice, a0, species, reps } => build_solid(*lattice, *a0, species, *reps),
        Builder::Packed { counts, density, min_separation, spread_to } => {
            let mut c = build_packed(counts, *density, *min_separation, masses, seed, MAX_INSERTION_ATTEMPTS, lateral)?;
            if let Some(t) = spread_to {
                spread(&mut c, *t, 200);
            }
            Ok(c)
        }
        Builder::Slab { bulk, axis, vacuum } => build_slab(&build_on(bulk, masses, seed, None)?, *axis, *vacuum),
        Builder::Cluster { bulk, radius } => build_cluster(&build_on(bulk, masses, seed, None)?, *radius),
        Builder::Stack { layers, gap, lateral_strain_tol } => {
            let mut acc: Option<AtomicConfiguration> = None;
            for (k, layer) in layers.iter().enumerate() {
                let lat = acc.as_ref().map(|c| {
                    let h = c.cell.vectors();
                    (h[(0, 0)], h[(1, 1)])
                });
                let next = build_on(layer, masses, derive_seed(seed, &format!("layer{k}")), lat)?;
                acc = Some(match acc {
                    None => next,
                    Some(lower) => build_stack(&lower, &next, *gap, *lateral_strain_tol)?,
                });
            }
            acc.ok_or_else(|| BuildError::Invalid("stack has no layers".into()))
        }
    }
}

/// One emitted structure and its annotation.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialStructure {
    pub config: AtomicConfiguration,
    pub plan: String,
    pub category: Category,
    pub builder: Builder,
}

impl InitialStructure {
    pub fn description_line(&self) -> String {
        let params = serde_json::to_string(&self.builder).unwrap_or_default();
        format!(
            "{}\t{}\t{}\tvalidation={}",
            self.config.structure_id,
            self.category.as_str(),
            params,
            u8::from(self.config.is_validation)
        )
    }
}

/// Builds every variant of every plan. Variant 0 of each plan uses the
/// recipe unchanged and is the plan's validation structure.
pub fn generate_initial_set(
    plans: &[BuildPlan],
    masses: &MassTable,
    min_separation: f64,
    seed: u64,
) -> Result<Vec<InitialStructure>, BuildError> {
    if plans.is_empty() {
        return Err(BuildError::Invalid("no build plans".into()));
    }
    let mut out = Vec::new();
    for plan in plans {
        if plan.variants == 0 {
            return Err(BuildError::Invalid(format!("plan `{}` has no variants", plan.name)));
        }
        for v in 0..plan.variants {
            let wrap = |e: BuildError| BuildError::Plan { plan: plan.name.clone(), variant: v, source: Box::new(e) };
            let vseed = derive_seed(seed, &format!("{}/{v}", plan.name));
            let recipe = if v == 0 {
                plan.builder.clone()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(vseed, "jitter"));
                jittered(&plan.builder, &plan.jitter, &mut rng)
            };
            let mut config = build(&recipe, masses, vseed).map_err(wrap)?;
            config.structure_id = format!("{}_{v:02}", plan.name);
            config.is_validation = v == 0;
            let report = validate_structure(&config, min_separation, masses);
            if !report.pass {
                return Err(BuildError::Validation {
                    id: config.structure_id,
                    min_distance: report.min_distance,
                    threshold: min_separation,
                });
            }
            out.push(InitialStructure { config, plan: plan.name.clone(), category: plan.category, builder: recipe });
        }
    }
    Ok(out)
}

/// Writes `<id>.extxyz` per structure and the tab-separated description file.
pub fn write_initial_set(dir: &Path, set: &[InitialStructure]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut desc = String::new();
    for s in set {
        extxyz::write_configs(&dir.join(format!("{}.extxyz", s.config.structure_id)), std::slice::from_ref(&s.config))?;
        let _ = writeln!(desc, "{}", s.description_line());
    }
    std::fs::write(dir.join("init_structure_description.txt"), desc)
}
