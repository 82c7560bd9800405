//! Standard atomic masses for the symbols the bundled tasks use.

use std::collections::BTreeMap;

const MASSES: &[(&str, f64)] = &[
    ("H", 1.008),
    ("He", 4.002_602),
    ("Li", 6.94),
    ("C", 12.011),
    ("N", 14.007),
    ("O", 15.999),
    ("F", 18.998_403_163),
    ("Ne", 20.1797),
    ("Na", 22.989_769_28),
    ("Mg", 24.305),
    ("Al", 26.981_538_5),
    ("Si", 28.085),
    ("P", 30.973_761_998),
    ("S", 32.06),
    ("Cl", 35.45),
    ("Ar", 39.948),
    ("K", 39.0983),
    ("Ca", 40.078),
    ("Fe", 55.845),
    ("Ni", 58.6934),
    ("Cu", 63.546),
    ("Zn", 65.38),
    ("Kr", 83.798),
    ("Ag", 107.8682),
    ("Xe", 131.293),
    ("Au", 196.966_569),
];

/// Mass in amu for a chemical symbol, if known.
pub fn standard_mass(symbol: &str) -> Option<f64> {
    MASSES.iter().find(|(s, _)| *s == symbol).map(|(_, m)| *m)
}

/// Per-species masses in amu.
pub type MassTable = BTreeMap<String, f64>;

/// Builds a mass table for `species`, preferring `overrides` and falling back
/// to standard masses. Returns the first symbol with no known mass on failure.
pub fn mass_table<'a>(
    species: impl IntoIterator<Item = &'a str>,
    overrides: &MassTable,
) -> Result<MassTable, String> {
    let mut table = MassTable::new();
    for s in species {
        let m = overrides
            .get(s)
            .copied()
            .or_else(|| standard_mass(s))
            .ok_or_else(|| s.to_string())?;
        table.insert(s.to_string(), m);
    }
    Ok(table)
}
