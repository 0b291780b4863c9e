//! Zero-padded FFT peak picking with optional second-harmonic notch.

use rustfft::{num_complex::Complex64, FftPlanner};

use super::SpectrumResult;
use crate::error::{Error, Result};
use crate::filters::{apply_filter, design_notch, BandSpec};
use crate::phasechain::PhaseSignal;

pub const NOTCH_Q: f64 = 10.0;

/// One-sided magnitude spectrum of `x` zero-padded to `pad_factor · len`.
pub fn magnitude_spectrum(x: &[f64], rate: f64, pad_factor: usize) -> Result<SpectrumResult> {
    if pad_factor < 1 {
        return Err(Error::InvalidParameter("pad factor must be >= 1".into()));
    }
    if x.is_empty() {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    let n = x.len() * pad_factor;
    let mut buf: Vec<Complex64> = x.iter().map(|v| Complex64::new(*v, 0.0)).collect();
    buf.resize(n, Complex64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let half = n / 2 + 1;
    let freqs = (0..half).map(|k| k as f64 * rate / n as f64).collect();
    let power = buf[..half].iter().map(|c| c.norm()).collect();
    Ok(SpectrumResult::new(freqs, power))
}

/// Frequency of the largest padded-FFT magnitude inside `band`. When
/// `notch_at` is given, that frequency is first removed with a zero-phase
/// notch.
pub fn improved_fft(
    signal: &PhaseSignal,
    band: &BandSpec,
    pad_factor: usize,
    notch_at: Option<f64>,
) -> Result<(f64, SpectrumResult)> {
    let filtered;
    let x = match notch_at {
        Some(f0) => {
            let notch = design_notch(f0, NOTCH_Q, signal.rate)?;
            filtered = apply_filter(&notch, signal, true)?;
            &filtered.values
        }
        None => &signal.values,
    };
    if x.iter().all(|v| *v == 0.0) {
        return Err(Error::NoEstimate("signal is identically zero".into()));
    }
    let spec = magnitude_spectrum(x, signal.rate, pad_factor)?;
    let f = spec
        .argmax_in(band.low, band.high)
        .ok_or_else(|| Error::NoEstimate(format!("no FFT bin in {}..{} Hz", band.low, band.high)))?;
    Ok((f, spec))
}
