//! Resonant-mode extraction from time series and field snapshots.

mod harminv;
mod profile;
mod spectrum;

use serde::{Deserialize, Serialize};

pub use harminv::{
    band_from_wavelengths, harmonic_inversion, harmonic_inversion_with, hz_to_nm, nm_to_hz, HarmonicOptions,
    ModeCandidate, Q_REPORT_LIMIT,
};
pub use profile::{
    extract_mode_profile, mode_volume, profile_from_dft, ringdown_start, ModeProfile, ProfileOptions, LOCALIZED_FRACTION,
};
pub use spectrum::{spectrum_from_samples, spectrum_from_timeseries, Spectrum, SpectrumOptions, Window, MIN_SPECTRUM_SAMPLES};


/// A characterized cavity mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonantMode {
    pub wavelength_nm: f64,
    pub q: f64,
    /// Mode volume in units of `(lambda / n_slab)^3`.
    pub volume_cubic_wavelengths: f64,
    pub volume_um3: f64,
    pub slab_index: f64,
    /// Polarization / symmetry label, e.g. the exciting dipole axis.
    pub label: String,
    #[serde(skip)]
    pub profile: Option<ModeProfile>,
}

impl ResonantMode {
    /// Builds a mode from a normalized profile.
    pub fn from_profile(
        wavelength_nm: f64,
        q: f64,
        slab_index: f64,
        label: impl Into<String>,
        profile: ModeProfile,
    ) -> crate::Result<Self> {
        let v_nm3 = mode_volume(&profile)?;
        Ok(ResonantMode {
            wavelength_nm,
            q,
            volume_cubic_wavelengths: v_nm3 / (wavelength_nm / slab_index).powi(3),
            volume_um3: v_nm3 * 1e-9,
            slab_index,
            label: label.into(),
            profile: Some(profile),
        })
    }

    /// Mode with a prescribed volume and no stored profile.
    pub fn with_volume(wavelength_nm: f64, q: f64, slab_index: f64, volume_cubic_wavelengths: f64) -> Self {
        let v_nm3 = volume_cubic_wavelengths * (wavelength_nm / slab_index).powi(3);
        ResonantMode {
            wavelength_nm,
            q,
            volume_cubic_wavelengths,
            volume_um3: v_nm3 * 1e-9,
            slab_index,
            label: String::new(),
            profile: None,
        }
    }
}
