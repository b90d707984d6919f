//! Hartree atomic units and the few conversions the command-line layer needs.
//!
//! Internally everything is computed with `hbar = m_e = |e| = 1`. Lengths are
//! bohr, energies hartree, times in units of `hbar / hartree`.

/// Bohr radius in nanometres (CODATA 2018).
pub const BOHR_IN_NM: f64 = 0.052_917_721_090_3;

/// One hartree in electronvolts (CODATA 2018).
pub const HARTREE_IN_EV: f64 = 27.211_386_245_988;

/// One atomic time unit in femtoseconds.
pub const AU_TIME_IN_FS: f64 = 0.024_188_843_265_857;

/// Nanometres -> bohr.
pub fn nm_to_bohr(nm: f64) -> f64 {
    nm / BOHR_IN_NM
}

/// Bohr -> nanometres.
pub fn bohr_to_nm(bohr: f64) -> f64 {
    bohr * BOHR_IN_NM
}

/// Electronvolts -> hartree.
pub fn ev_to_hartree(ev: f64) -> f64 {
    ev / HARTREE_IN_EV
}

/// Millielectronvolts -> hartree.
pub fn mev_to_hartree(mev: f64) -> f64 {
    mev * 1e-3 / HARTREE_IN_EV
}

/// Hartree -> millielectronvolts.
pub fn hartree_to_mev(e: f64) -> f64 {
    e * HARTREE_IN_EV * 1e3
}

/// Femtoseconds -> atomic time units.
pub fn fs_to_au(fs: f64) -> f64 {
    fs / AU_TIME_IN_FS
}

/// Atomic time units -> femtoseconds.
pub fn au_to_fs(t: f64) -> f64 {
    t * AU_TIME_IN_FS
}
