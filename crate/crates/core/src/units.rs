//! Unit system: lengths in Å, energies in eV, time in fs, masses in amu.

/// Boltzmann constant in eV/K.
pub const BOLTZMANN: f64 = 8.617333262e-5;

/// One eV/(Å·amu) expressed as an acceleration in Å/fs².
pub const ACCEL_PER_EV_A_AMU: f64 = 9.648_533_215_665_327e-3;

/// amu/Å³ to g/cm³.
pub const AMU_PER_A3_TO_G_PER_CM3: f64 = 1.660_539_066_60;

/// eV/Å³ to bar.
pub const EV_PER_A3_TO_BAR: f64 = 1.602_176_634e6;

/// Å²/fs to cm²/s.
pub const A2_PER_FS_TO_CM2_PER_S: f64 = 0.1;

/// Kinetic energy in eV of mass `m` (amu) moving at squared speed `v2` (Å²/fs²).
#[inline]
pub fn kinetic_energy(m: f64, v2: f64) -> f64 {
    0.5 * m * v2 / ACCEL_PER_EV_A_AMU
}
