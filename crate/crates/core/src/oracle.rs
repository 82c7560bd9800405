//! Analytic reference potentials used to label frames.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::calc::{evaluate, CalcError, PairCalculator};
use crate::frame::{Dataset, LabeledFrame};
use crate::parallel;
use crate::structure::AtomicConfiguration;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("invalid oracle spec: {0}")]
    Spec(String),
    #[error("frame {index}: {source}")]
    Frame { index: usize, source: CalcError },
    #[error(transparent)]
    Calc(#[from] CalcError),
    #[error("no frames to label")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    LennardJones,
    Morse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PairParams {
    LennardJones { epsilon: f64, sigma: f64 },
    Morse { d_e: f64, a: f64, r_e: f64 },
}

/// Reference potential definition as stored in the workspace config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    pub kind: OracleKind,
    /// Keyed by `"A-B"`; order within the key does not matter.
    pub pairs: BTreeMap<String, PairParams>,
    pub cutoff: f64,
    #[serde(default = "default_shift")]
    pub shift: bool,
}

fn default_shift() -> bool {
    true
}

pub fn pair_key(a: &str, b: &str) -> String {
    if a <= b {
        format!("{a}-{b}")
    } else {
        format!("{b}-{a}")
    }
}

fn split_key(key: &str) -> Option<(&str, &str)> {
    key.split_once('-')
}

impl OracleSpec {
    /// Stable identifier derived from the canonical JSON form.
    pub fn identity(&self) -> String {
        let json = serde_json::to_string(self).unwrap_or_default();
        let digest = Sha256::digest(json.as_bytes());
        let kind = match self.kind {
            OracleKind::LennardJones => "lj",
            OracleKind::Morse => "morse",
        };
        let hex: String = digest[..4].iter().map(|b| format!("{b:02x}")).collect();
        format!("oracle-{kind}-{hex}")
    }

    fn canonical_pairs(&self) -> Result<BTreeMap<String, PairParams>, OracleError> {
        let mut out = BTreeMap::new();
        for (k, p) in &self.pairs {
            let (a, b) = split_key(k).ok_or_else(|| OracleError::Spec(format!("pair key `{k}` is not `A-B`")))?;
            let ok = matches!(
                (self.kind, p),
                (OracleKind::LennardJones, PairParams::LennardJones { .. }) | (OracleKind::Morse, PairParams::Morse { .. })
            );
            if !ok {
                return Err(OracleError::Spec(format!("pair `{k}` parameters do not match kind")));
            }
            let positive = match *p {
                PairParams::LennardJones { epsilon, sigma } => epsilon > 0.0 && sigma > 0.0,
                PairParams::Morse { d_e, a, r_e } => d_e > 0.0 && a > 0.0 && r_e > 0.0,
            };
            if !positive {
                return Err(OracleError::Spec(format!("pair `{k}` parameters must be positive")));
            }
            out.insert(pair_key(a, b), *p);
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        if !(self.cutoff > 0.0) {
            return Err(OracleError::Spec("cutoff must be positive".into()));
        }
        let pairs = self.canonical_pairs()?;
        if self.kind == OracleKind::LennardJones {
            let max_sigma = pairs
                .values()
                .map(|p| match p {
                    PairParams::LennardJones { sigma, .. } => *sigma,
                    _ => 0.0,
                })
                .fold(0.0, f64::max);
            if self.cutoff < 2.0 * max_sigma {
                return Err(OracleError::Spec(format!(
                    "cutoff {} Å is below twice the largest sigma ({} Å)",
                    self.cutoff, max_sigma
                )));
            }
        }
        Ok(())
    }

    /// Fills every pair among `species`, mixing missing cross terms from the
    /// like-pair parameters. Mixed keys are listed in [`PairOracle::mixed`].
    pub fn resolve<'a>(&self, species: impl IntoIterator<Item = &'a str>) -> Result<PairOracle, OracleError> {
        self.validate()?;
        let given = self.canonical_pairs()?;
        let types: Vec<String> = species.into_iter().map(str::to_string).collect::<BTreeSet<_>>().into_iter().collect();
        let n = types.len();
        let mut params = vec![vec![None; n]; n];
        let mut mixed = Vec::new();
        let mut missing = Vec::new();
        for i in 0..n {
            for j in i..n {
                let key = pair_key(&types[i], &types[j]);
                let p = match given.get(&key) {
                    Some(p) => Some(*p),
                    None => {
                        let a = given.get(&pair_key(&types[i], &types[i]));
                        let b = given.get(&pair_key(&types[j], &types[j]));
                        match (a, b) {
                            (Some(a), Some(b)) => {
                                mixed.push(key.clone());
                                Some(mix(a, b))
                            }
                            _ => None,
                        }
                    }
                };
                match p {
                    Some(p) => {
                        params[i][j] = Some(p);
                        params[j][i] = Some(p);
                    }
                    None => missing.push(key),
                }
            }
        }
        if !missing.is_empty() {
            return Err(CalcError::UncoveredPair(missing.join(", ")).into());
        }
        let params: Vec<Vec<PairParams>> = params.into_iter().map(|r| r.into_iter().map(Option::unwrap).collect()).collect();
        let shifts = params
            .iter()
            .map(|row| row.iter().map(|p| if self.shift { raw_pair(p, self.cutoff).0 } else { 0.0 }).collect())
            .collect();
        Ok(PairOracle { id: self.identity(), types, params, shifts, cutoff: self.cutoff, mixed })
    }

    /// The resolved cross-pair table for the given species, as `"A-B"` keys.
    pub fn resolved_pairs<'a>(
        &self,
        species: impl IntoIterator<Item = &'a str>,
    ) -> Result<BTreeMap<String, PairParams>, OracleError> {
        let o = self.resolve(species)?;
        let mut out = BTreeMap::new();
        for i in 0..o.types.len() {
            for j in i..o.types.len() {
                out.insert(pair_key(&o.types[i], &o.types[j]), o.params[i][j]);
            }
        }
        Ok(out)
    }
}

/// Lorentz–Berthelot for LJ; the Morse analogue takes the geometric mean of
/// well depths and arithmetic means of `a` and `r_e`.
fn mix(a: &PairParams, b: &PairParams) -> PairParams {
    match (*a, *b) {
        (PairParams::LennardJones { epsilon: e1, sigma: s1 }, PairParams::LennardJones { epsilon: e2, sigma: s2 }) => {
            PairParams::LennardJones { epsilon: (e1 * e2).sqrt(), sigma: 0.5 * (s1 + s2) }
        }
        (PairParams::Morse { d_e: d1, a: a1, r_e: r1 }, PairParams::Morse { d_e: d2, a: a2, r_e: r2 }) => {
            PairParams::Morse { d_e: (d1 * d2).sqrt(), a: 0.5 * (a1 + a2), r_e: 0.5 * (r1 + r2) }
        }
        _ => unreachable!("kinds validated before mixing"),
    }
}

/// Unshifted pair energy and `dφ/dr`.
fn raw_pair(p: &PairParams, r: f64) -> (f64, f64) {
    match *p {
        PairParams::LennardJones { epsilon, sigma } => {
            let s6 = (sigma / r).powi(6);
            let s12 = s6 * s6;
            (4.0 * epsilon * (s12 - s6), 4.0 * epsilon * (-12.0 * s12 + 6.0 * s6) / r)
        }
        PairParams::Morse { d_e, a, r_e } => {
            let x = (-a * (r - r_e)).exp();
            (d_e * (x * x - 2.0 * x), d_e * (-2.0 * a * x * x + 2.0 * a * x))
        }
    }
}

/// An [`OracleSpec`] resolved for a fixed set of species.
#[derive(Debug, Clone, PartialEq)]
pub struct PairOracle {
    id: String,
    types: Vec<String>,
    params: Vec<Vec<PairParams>>,
    shifts: Vec<Vec<f64>>,
    cutoff: f64,
    mixed: Vec<String>,
}

impl PairOracle {
    pub fn types(&self) -> &[String] {
        &self.types
    }

    /// Pair keys whose parameters came from the mixing rule.
    pub fn mixed(&self) -> &[String] {
        &self.mixed
    }

    pub fn params(&self, a: &str, b: &str) -> Option<PairParams> {
        let i = self.types.iter().position(|t| t == a)?;
        let j = self.types.iter().position(|t| t == b)?;
        Some(self.params[i][j])
    }
}

impl PairCalculator for PairOracle {
    fn id(&self) -> &str {
        &self.id
    }

    fn cutoff(&self) -> f64 {
        self.cutoff
    }

    fn type_indices(&self, species: &[String]) -> Result<Vec<usize>, CalcError> {
        species
            .iter()
            .map(|s| self.types.iter().position(|t| t == s).ok_or_else(|| CalcError::UncoveredSpecies(s.clone())))
            .collect()
    }

    #[inline]
    fn pair(&self, ti: usize, tj: usize, r: f64) -> (f64, f64) {
        let (e, de) = raw_pair(&self.params[ti][tj], r);
        (e - self.shifts[ti][tj], de)
    }
}

/// Labels one configuration with reference energy and forces.
pub fn oracle_energy_forces(config: &AtomicConfiguration, spec: &OracleSpec) -> Result<LabeledFrame, OracleError> {
    let oracle = spec.resolve(config.species.iter().map(String::as_str))?;
    label_with(&oracle, config).map_err(OracleError::from)
}

/// Labels with an already-resolved oracle.
pub fn label_with(oracle: &PairOracle, config: &AtomicConfiguration) -> Result<LabeledFrame, CalcError> {
    let ev = evaluate(oracle, config)?;
    LabeledFrame::new(config.clone(), ev.energy, ev.forces, oracle.id()).map_err(|e| CalcError::Config(e.to_string()))
}

/// Labels every configuration, preserving order.
pub fn label_frames(
    dataset_id: &str,
    configs: &[AtomicConfiguration],
    spec: &OracleSpec,
    origin: Vec<String>,
) -> Result<Dataset, OracleError> {
    if configs.is_empty() {
        return Err(OracleError::Empty);
    }
    let species: BTreeSet<&str> = configs.iter().flat_map(|c| c.species.iter().map(String::as_str)).collect();
    let oracle = spec.resolve(species)?;
    let labeled = parallel::map_range(configs.len(), |k| label_with(&oracle, &configs[k]));
    let mut frames = Vec::with_capacity(configs.len());
    for (index, r) in labeled.into_iter().enumerate() {
        frames.push(r.map_err(|source| OracleError::Frame { index, source })?);
    }
    Ok(Dataset::new(dataset_id, frames, origin))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Cell, Vec3};

    fn lj(cutoff: f64, shift: bool) -> OracleSpec {
        let mut pairs = BTreeMap::new();
        pairs.insert("Ar-Ar".into(), PairParams::LennardJones { epsilon: 0.01, sigma: 3.4 });
        pairs.insert("Cu-Cu".into(), PairParams::LennardJones { epsilon: 0.2, sigma: 2.3 });
        OracleSpec { kind: OracleKind::LennardJones, pairs, cutoff, shift }
    }

    fn dimer(r: f64) -> AtomicConfiguration {
        AtomicConfiguration::new(
            Cell::open(),
            vec!["Ar".into(), "Ar".into()],
            vec![Vec3::zeros(), Vec3::new(r, 0.0, 0.0)],
        )
    }

    #[test]
    fn lj_at_sigma() {
        let f = oracle_energy_forces(&dimer(3.4), &lj(8.5, false)).unwrap();
        assert!(f.energy.abs() < 1e-15);
        let expect = 24.0 * 0.01 / 3.4;
        assert!((f.forces[1].x - expect).abs() < 1e-12);
        assert!((f.forces[0].x + expect).abs() < 1e-12);
    }

    #[test]
    fn lj_at_minimum() {
        let f = oracle_energy_forces(&dimer(2f64.powf(1.0 / 6.0) * 3.4), &lj(8.5, false)).unwrap();
        assert!((f.energy + 0.01).abs() < 1e-14);
        assert!(f.forces[1].norm() < 1e-14);
    }

    #[test]
    fn mixing_recorded() {
        let o = lj(8.5, true).resolve(["Ar", "Cu"]).unwrap();
        assert_eq!(o.mixed(), ["Ar-Cu"]);
        match o.params("Cu", "Ar").unwrap() {
            PairParams::LennardJones { epsilon, sigma } => {
                assert!((epsilon - (0.002f64).sqrt()).abs() < 1e-15);
                assert!((sigma - 2.85).abs() < 1e-15);
            }
            _ => panic!(),
        }
    }

    #[test]
    fn uncovered_pair_is_named() {
        let e = lj(8.5, true).resolve(["Ar", "Xe"]).unwrap_err();
        assert_eq!(e, OracleError::Calc(CalcError::UncoveredPair("Ar-Xe, Xe-Xe".into())));
    }

    #[test]
    fn cutoff_must_cover_two_sigma() {
        assert!(lj(6.0, true).validate().is_err());
    }

    #[test]
    fn shifted_energy_zero_at_cutoff() {
        let o = lj(8.5, true).resolve(["Ar"]).unwrap();
        assert!(o.pair(0, 0, 8.5).0.abs() < 1e-15);
    }

    #[test]
    fn morse_minimum() {
        let mut pairs = BTreeMap::new();
        pairs.insert("Cu-Cu".into(), PairParams::Morse { d_e: 0.34, a: 1.36, r_e: 2.6 });
        let spec = OracleSpec { kind: OracleKind::Morse, pairs, cutoff: 7.0, shift: false };
        let o = spec.resolve(["Cu"]).unwrap();
        let (e, de) = o.pair(0, 0, 2.6);
        assert!((e + 0.34).abs() < 1e-15);
        assert!(de.abs() < 1e-15);
    }

    #[test]
    fn spec_json_shape() {
        let json = r#"{"kind":"lennard_jones","pairs":{"Ar-Ar":{"epsilon":0.01,"sigma":3.4}},"cutoff":8.5,"shift":true}"#;
        let spec: OracleSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec.kind, OracleKind::LennardJones);
        assert_eq!(serde_json::to_string(&spec).unwrap(), json);
    }

    #[test]
    fn empty_label_set_rejected() {
        assert_eq!(label_frames("d", &[], &lj(8.5, true), vec![]).unwrap_err(), OracleError::Empty);
    }
}
