//! Heart-rate and respiration-rate estimators operating on filtered phase
//! signals.

pub mod ctf;
pub mod fft;
pub mod music;
pub mod prony;

pub use ctf::{ctf_estimate, CtfDiagnostics, CtfMode, CtfParams};
pub use fft::{improved_fft, magnitude_spectrum};
pub use music::{music_estimate, music_spectrum, MusicParams};
pub use prony::{
    prediction_roots, prediction_roots_strided, prony_estimate, prony_fit, prony_fit_strided, PronyComponent,
    PronyParams,
};

/// Half-width of the exclusion band around twice the respiration rate when
/// picking a heart-rate peak, Hz.
pub const HARMONIC_GUARD_HZ: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumResult {
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
    /// Interior local maxima `(freq, power)`, strongest first; equal powers
    /// keep the lower frequency first.
    pub peaks: Vec<(f64, f64)>,
}

impl SpectrumResult {
    pub fn new(freqs: Vec<f64>, power: Vec<f64>) -> Self {
        let mut peaks: Vec<(f64, f64)> = (1..power.len().saturating_sub(1))
            .filter(|&i| power[i] > power[i - 1] && power[i] >= power[i + 1])
            .map(|i| (freqs[i], power[i]))
            .collect();
        peaks.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.total_cmp(&b.0)));
        SpectrumResult {
            freqs,
            power,
            peaks,
        }
    }

    /// Grid frequency of the largest power within `[low, high]`, lowest
    /// frequency on ties.
    pub fn argmax_in(&self, low: f64, high: f64) -> Option<f64> {
        let mut best: Option<(f64, f64)> = None;
        for (&f, &p) in self.freqs.iter().zip(&self.power) {
            if f < low || f > high {
                continue;
            }
            if best.is_none_or(|(_, bp)| p > bp) {
                best = Some((f, p));
            }
        }
        best.map(|(f, _)| f)
    }

    /// Strongest peak outside the harmonic guard band around `2·rr`, or the
    /// global maximum when the spectrum has no usable interior peak.
    pub(crate) fn pick(&self, rr_hint: Option<f64>) -> Option<f64> {
        let allowed = |f: f64| rr_hint.is_none_or(|rr| !near_harmonic(f, rr));
        self.peaks
            .iter()
            .find(|(f, _)| allowed(*f))
            .map(|(f, _)| *f)
            .or_else(|| {
                let (lo, hi) = (*self.freqs.first()?, *self.freqs.last()?);
                let f = self.argmax_in(lo, hi)?;
                allowed(f).then_some(f)
            })
    }

    pub fn write_csv(&self, path: impl AsRef<std::path::Path>) -> crate::Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["freq_hz", "power"])?;
        for (f, p) in self.freqs.iter().zip(&self.power) {
            w.write_record([format!("{f:.6}"), format!("{p:e}")])?;
        }
        w.flush().map_err(|e| crate::Error::io(path, e))?;
        Ok(())
    }
}

pub(crate) fn near_harmonic(f: f64, rr: f64) -> bool {
    (f - 2.0 * rr).abs() <= HARMONIC_GUARD_HZ
}
