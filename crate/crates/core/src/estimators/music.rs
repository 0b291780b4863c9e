//! MUSIC pseudo-spectrum from the lagged-snapshot covariance of a real
//! signal. Each real sinusoid spans two dimensions of the signal subspace.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{near_harmonic, SpectrumResult};
use crate::error::{Error, Result};
use crate::filters::BandSpec;
use crate::phasechain::PhaseSignal;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MusicParams {
    pub lag_dim: usize,
    /// Number of real sinusoids assumed in the signal.
    pub n_sources: usize,
    /// Frequency grid spacing, Hz.
    pub grid_step: f64,
    pub forward_backward: bool,
}

impl MusicParams {
    pub fn respiration() -> Self {
        MusicParams {
            lag_dim: 100,
            n_sources: 1,
            grid_step: 0.001,
            forward_backward: false,
        }
    }

    pub fn heart() -> Self {
        MusicParams {
            n_sources: 2,
            ..MusicParams::respiration()
        }
    }
}

fn covariance(x: &[f64], l: usize, forward_backward: bool) -> DMatrix<f64> {
    let k = x.len() - l + 1;
    let snapshots = DMatrix::from_fn(k, l, |r, c| x[r + c]);
    let mut r = snapshots.tr_mul(&snapshots) / k as f64;
    if forward_backward {
        let flipped = DMatrix::from_fn(l, l, |i, j| r[(l - 1 - i, l - 1 - j)]);
        r = (r + flipped) * 0.5;
    }
    r
}

/// Pseudo-spectrum on `[band.low, band.high]` at `grid_step` spacing.
pub fn music_spectrum(
    signal: &PhaseSignal,
    band: &BandSpec,
    params: &MusicParams,
) -> Result<SpectrumResult> {
    music_with_covariance(signal, band, params).map(|(s, _)| s)
}

fn music_with_covariance(
    signal: &PhaseSignal,
    band: &BandSpec,
    params: &MusicParams,
) -> Result<(SpectrumResult, DMatrix<f64>)> {
    let l = params.lag_dim;
    let p = 2 * params.n_sources;
    if params.n_sources == 0 || l < p + 1 {
        return Err(Error::InvalidParameter(format!(
            "lag dimension {l} too small for {} sources",
            params.n_sources
        )));
    }
    if signal.len() < 2 * l {
        return Err(Error::TooShort {
            needed: 2 * l,
            got: signal.len(),
        });
    }
    if !(params.grid_step > 0.0) || !(band.low < band.high) {
        return Err(Error::InvalidParameter("empty frequency grid".into()));
    }

    let r = covariance(&signal.values, l, params.forward_backward);
    let eig = SymmetricEigen::new(r.clone());
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !lmax.is_finite() || lmax <= f64::MIN_POSITIVE {
        return Err(Error::RankDeficient("covariance matrix is zero".into()));
    }
    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let noise = DMatrix::from_fn(l, l - p, |row, c| eig.eigenvectors[(row, order[c])]);

    let count = ((band.high - band.low) / params.grid_step + 1e-9).floor() as usize + 1;
    let freqs: Vec<f64> = (0..count)
        .map(|k| band.low + k as f64 * params.grid_step)
        .collect();
    let w: Vec<f64> = freqs.iter().map(|f| 2.0 * PI * f / signal.rate).collect();
    let cos = DMatrix::from_fn(count, l, |g, n| (w[g] * n as f64).cos());
    let sin = DMatrix::from_fn(count, l, |g, n| (w[g] * n as f64).sin());
    let pc = cos * &noise;
    let ps = sin * &noise;
    let power = (0..count)
        .map(|g| {
            let d = pc.row(g).norm_squared() + ps.row(g).norm_squared();
            1.0 / d.max(f64::MIN_POSITIVE)
        })
        .collect();
    Ok((SpectrumResult::new(freqs, power), r))
}

/// Signal power `vᴴ R v / L` along the steering vector at `f`.
fn steered_power(r: &DMatrix<f64>, f: f64, rate: f64) -> f64 {
    let l = r.nrows();
    let w = 2.0 * PI * f / rate;
    let c = DVector::from_fn(l, |n, _| (w * n as f64).cos());
    let s = DVector::from_fn(l, |n, _| (w * n as f64).sin());
    (c.dot(&(r * &c)) + s.dot(&(r * &s))) / l as f64
}

/// Frequency of the dominant MUSIC peak in `band`. The pseudo-spectrum
/// locates up to `n_sources` candidate peaks (skipping any near twice
/// `rr_hint`); the candidate carrying the most covariance power wins.
pub fn music_estimate(
    signal: &PhaseSignal,
    band: &BandSpec,
    params: &MusicParams,
    rr_hint: Option<f64>,
) -> Result<(f64, SpectrumResult)> {
    let (spec, r) = music_with_covariance(signal, band, params)?;
    let allowed = |f: f64| rr_hint.is_none_or(|rr| !near_harmonic(f, rr));
    let candidates: Vec<f64> = spec
        .peaks
        .iter()
        .map(|(f, _)| *f)
        .filter(|f| allowed(*f))
        .take(params.n_sources)
        .collect();
    let f = if candidates.is_empty() {
        spec.pick(rr_hint)
    } else {
        let mut best = (candidates[0], steered_power(&r, candidates[0], signal.rate));
        for &f in &candidates[1..] {
            let p = steered_power(&r, f, signal.rate);
            if p > best.1 || (p == best.1 && f < best.0) {
                best = (f, p);
            }
        }
        Some(best.0)
    }
    .ok_or_else(|| Error::NoEstimate("no MUSIC peak outside the harmonic guard".into()))?;
    Ok((f, spec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::FilterFamily;
    use crate::phasechain::PhaseStage;
    use proptest::prelude::*;

    fn tones(parts: &[(f64, f64, f64)], n: usize) -> PhaseSignal {
        let v = (0..n)
            .map(|k| {
                let t = k as f64 / 20.0;
                parts
                    .iter()
                    .map(|(f, a, ph)| a * (2.0 * PI * f * t + ph).cos())
                    .sum()
            })
            .collect();
        PhaseSignal::new(v, 20.0, PhaseStage::Filtered).unwrap()
    }

    #[test]
    fn respiration_peak() {
        let band = BandSpec::respiration(FilterFamily::Butterworth);
        let (f, _) =
            music_estimate(&tones(&[(0.153, 1.0, 0.3)], 600), &band, &MusicParams::respiration(), None)
                .unwrap();
        assert!((f - 0.153).abs() <= 0.001 + 1e-9, "{f}");
        assert!((60.0 * f - 9.21).abs() < 0.07);
    }

    #[test]
    fn resolves_two_heart_band_tones() {
        let band = BandSpec::heart(FilterFamily::Butterworth);
        let x = tones(&[(1.319, 3.0, 0.0), (1.037, 1.0, 1.0)], 600);
        let (f, spec) = music_estimate(&x, &band, &MusicParams::heart(), None).unwrap();
        assert!((f - 1.319).abs() <= 0.001 + 1e-9, "{f}");
        assert!((60.0 * f - 79.1).abs() < 0.1);
        assert!(spec.peaks.iter().any(|(pf, _)| (pf - 1.037).abs() <= 0.001 + 1e-9));
    }

    #[test]
    fn guard_skips_respiration_harmonic() {
        let band = BandSpec::heart(FilterFamily::Butterworth);
        let x = tones(&[(0.7, 1.0, 0.0), (1.2, 1.0, 0.5)], 600);
        let (f, _) = music_estimate(&x, &band, &MusicParams::heart(), Some(0.35)).unwrap();
        assert!((f - 1.2).abs() <= 0.001 + 1e-9, "{f}");
    }

    #[test]
    fn zero_signal_rejected() {
        let band = BandSpec::heart(FilterFamily::Butterworth);
        let z = PhaseSignal::new(vec![0.0; 600], 20.0, PhaseStage::Filtered).unwrap();
        assert!(matches!(
            music_estimate(&z, &band, &MusicParams::heart(), None),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn preconditions() {
        let band = BandSpec::heart(FilterFamily::Butterworth);
        let x = tones(&[(1.0, 1.0, 0.0)], 150);
        assert!(matches!(
            music_estimate(&x, &band, &MusicParams::heart(), None),
            Err(Error::TooShort { .. })
        ));
        let bad = MusicParams {
            lag_dim: 4,
            ..MusicParams::heart()
        };
        assert!(music_estimate(&tones(&[(1.0, 1.0, 0.0)], 600), &band, &bad, None).is_err());
    }

    #[test]
    fn forward_backward_also_resolves() {
        let band = BandSpec::heart(FilterFamily::Butterworth);
        let x = tones(&[(1.319, 3.0, 0.0), (1.037, 1.0, 1.0)], 600);
        let params = MusicParams {
            forward_backward: true,
            ..MusicParams::heart()
        };
        let (f, _) = music_estimate(&x, &band, &params, None).unwrap();
        assert!((f - 1.319).abs() <= 0.001 + 1e-9, "{f}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn argmax_invariant_under_scaling(scale in prop::sample::select(vec![-50.0, -0.01, 0.3, 7.0, 1e4])) {
            let band = BandSpec::heart(FilterFamily::Butterworth);
            let mut x = tones(&[(1.1, 1.0, 0.2), (2.3, 0.5, 0.0)], 400);
            // deterministic broadband component keeps the noise subspace well separated
            for (k, v) in x.values.iter_mut().enumerate() {
                *v += 0.05 * ((k * k) as f64 * 0.7).sin();
            }
            let y = PhaseSignal::new(x.values.iter().map(|v| v * scale).collect(), 20.0, PhaseStage::Filtered).unwrap();
            let params = MusicParams { lag_dim: 40, ..MusicParams::heart() };
            let (fx, sx) = music_estimate(&x, &band, &params, None).unwrap();
            let (fy, sy) = music_estimate(&y, &band, &params, None).unwrap();
            prop_assert_eq!(fx, fy);
            for (a, b) in sx.power.iter().zip(&sy.power) {
                prop_assert!((b / a - 1.0).abs() < 1e-6);
            }
        }

        #[test]
        fn noiseless_tones_have_peaks(f1 in 0.7f64..1.8, gap in 0.2f64..1.5, a2 in 0.3f64..2.0, ph in 0.0f64..6.0) {
            let band = BandSpec::heart(FilterFamily::Butterworth);
            let f2 = f1 + gap;
            let x = tones(&[(f1, 1.0, ph), (f2, a2, 0.0)], 300);
            let params = MusicParams { lag_dim: 40, ..MusicParams::heart() };
            let spec = music_spectrum(&x, &band, &params).unwrap();
            for f in [f1, f2] {
                prop_assert!(spec.peaks.iter().any(|(pf, _)| (pf - f).abs() <= params.grid_step + 1e-9), "{}", f);
            }
        }
    }
}
