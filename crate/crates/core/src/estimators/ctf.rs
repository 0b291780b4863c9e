//! Coarse-to-fine heart-rate estimation: count valid peak-valley pairs in the
//! time domain, then snap to the nearest FFT peak.

use super::fft::magnitude_spectrum;
use crate::error::{Error, Result};
use crate::filters::BandSpec;
use crate::phasechain::PhaseSignal;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CtfMode {
    /// Discard pairs shorter than a multiple of the 25th-percentile distance.
    Histogram,
    /// Keep pairs inside the dominant mode of a Gaussian kernel density.
    Kde,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CtfParams {
    /// Multiple of the 25th-percentile distance used as histogram threshold.
    pub threshold_multiplier: f64,
    pub band: BandSpec,
    pub pad_factor: usize,
}

impl CtfParams {
    pub fn new(band: BandSpec) -> Self {
        CtfParams {
            threshold_multiplier: 0.5,
            band,
            pad_factor: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CtfDiagnostics {
    /// Peak-to-next-valley distances, samples.
    pub peak_valley_distances: Vec<usize>,
    /// Histogram: minimum kept distance. KDE: lower edge of the kept basin.
    pub threshold: f64,
    pub valid_pairs: usize,
    pub coarse_bpm: f64,
    pub fine_bpm: f64,
}

/// Distances from each local peak to the following valley.
pub fn peak_valley_distances(x: &[f64]) -> Vec<usize> {
    let n = x.len();
    let mut out = Vec::new();
    let mut open_peak: Option<usize> = None;
    for i in 1..n.saturating_sub(1) {
        if x[i] > x[i - 1] && x[i] >= x[i + 1] {
            open_peak = Some(i);
        } else if x[i] < x[i - 1] && x[i] <= x[i + 1] {
            if let Some(p) = open_peak.take() {
                out.push(i - p);
            }
        }
    }
    out
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Range `[lo, hi]` of the basin around the highest kernel-density mode.
fn dominant_basin(d: &[f64]) -> (f64, f64) {
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let sd = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let (dmin, dmax) = (d[0], d[d.len() - 1]);
    if sd == 0.0 {
        return (dmin, dmax);
    }
    let iqr = quantile(d, 0.75) - quantile(d, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    // distances are whole samples; narrower kernels split a single rhythm
    let h = (0.9 * spread * n.powf(-0.2)).max(1.0);

    let step = h / 20.0;
    let start = dmin - 3.0 * h;
    let count = ((dmax - dmin + 6.0 * h) / step).ceil() as usize + 1;
    let grid: Vec<f64> = (0..count).map(|k| start + k as f64 * step).collect();
    let dens: Vec<f64> = grid
        .iter()
        .map(|g| d.iter().map(|v| (-0.5 * ((g - v) / h).powi(2)).exp()).sum())
        .collect();
    let mut mode = 0;
    for (k, v) in dens.iter().enumerate() {
        if *v > dens[mode] {
            mode = k;
        }
    }
    let mut lo = mode;
    while lo > 0 && dens[lo - 1] <= dens[lo] {
        lo -= 1;
    }
    let mut hi = mode;
    while hi + 1 < count && dens[hi + 1] <= dens[hi] {
        hi += 1;
    }
    (grid[lo], grid[hi])
}

pub fn ctf_estimate(
    signal: &PhaseSignal,
    mode: CtfMode,
    params: &CtfParams,
) -> Result<(f64, CtfDiagnostics)> {
    let distances = peak_valley_distances(&signal.values);
    if distances.len() < 2 {
        return Err(Error::NoEstimate(format!(
            "{} peak-valley pairs, need at least 2",
            distances.len()
        )));
    }
    let mut sorted: Vec<f64> = distances.iter().map(|&d| d as f64).collect();
    sorted.sort_by(f64::total_cmp);

    let (threshold, valid_pairs) = match mode {
        CtfMode::Histogram => {
            let t = params.threshold_multiplier * quantile(&sorted, 0.25);
            (t, sorted.iter().filter(|&&d| d >= t).count())
        }
        CtfMode::Kde => {
            let (lo, hi) = dominant_basin(&sorted);
            (lo, sorted.iter().filter(|&&d| d >= lo && d <= hi).count())
        }
    };
    let coarse_bpm = 60.0 * valid_pairs as f64 / signal.duration();

    let spec = magnitude_spectrum(&signal.values, signal.rate, params.pad_factor)?;
    let target = coarse_bpm / 60.0;
    let fine_hz = spec
        .peaks
        .iter()
        .filter(|(f, _)| params.band.contains(*f))
        .map(|(f, _)| *f)
        .min_by(|a, b| (a - target).abs().total_cmp(&(b - target).abs()))
        .ok_or_else(|| Error::NoEstimate("no spectral peak in band".into()))?;
    let fine_bpm = 60.0 * fine_hz;
    Ok((
        fine_bpm,
        CtfDiagnostics {
            peak_valley_distances: distances,
            threshold,
            valid_pairs,
            coarse_bpm,
            fine_bpm,
        },
    ))
}
