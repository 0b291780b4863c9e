//! Prony decomposition into damped sinusoids via forward linear prediction.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::filters::BandSpec;
use crate::phasechain::PhaseSignal;

use super::near_harmonic;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PronyComponent {
    /// Hz, in `[0, rate/2]`.
    pub freq: f64,
    /// `ln |r|` per sample.
    pub damping: f64,
    pub amplitude: f64,
    /// Radians.
    pub phase: f64,
}

impl PronyComponent {
    /// RMS of the component over samples `0..n`.
    pub fn window_rms(&self, rate: f64, n: usize) -> f64 {
        let w = 2.0 * PI * self.freq / rate;
        let sum: f64 = (0..n)
            .map(|i| {
                let v = self.amplitude * (self.damping * i as f64).exp() * (w * i as f64 + self.phase).cos();
                v * v
            })
            .sum();
        (sum / n.max(1) as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PronyParams {
    pub model_order: usize,
    /// Components with `|damping|` above this (per sample) are discarded.
    pub damping_max: f64,
    /// Prediction stride in samples; 0 picks one from the band edge.
    pub stride: usize,
}

impl PronyParams {
    pub fn respiration() -> Self {
        PronyParams {
            model_order: 6,
            damping_max: 0.05,
            stride: 0,
        }
    }

    pub fn heart() -> Self {
        PronyParams {
            model_order: 8,
            damping_max: 0.05,
            stride: 0,
        }
    }

    /// Stride actually used for a band: the largest one whose reduced
    /// Nyquist rate still sits 25% above the band's upper edge.
    pub fn stride_for(&self, band: &BandSpec, rate: f64) -> usize {
        match self.stride {
            0 => ((rate / (2.5 * band.high)).floor() as usize).max(1),
            s => s,
        }
    }
}

const ROOT_IMAG_TOL: f64 = 1e-10;

fn check_input(x: &[f64], m: usize, stride: usize) -> Result<()> {
    if m < 2 {
        return Err(Error::InvalidParameter(format!("model order {m} must be >= 2")));
    }
    if stride == 0 {
        return Err(Error::InvalidParameter("prediction stride must be >= 1".into()));
    }
    let needed = (3 * m).max(m * stride + 2 * m);
    if x.len() < needed {
        return Err(Error::TooShort { needed, got: x.len() });
    }
    Ok(())
}

/// Roots of the order-`m` forward prediction polynomial of `x`.
///
/// The prediction system has rows `[x[n−m], …, x[n−1]]` with targets `x[n]`
/// for `n = m … N−1`; its minimum-norm least-squares solution fills the
/// last row of the companion matrix.
pub fn prediction_roots(x: &[f64], m: usize) -> Result<Vec<Complex64>> {
    prediction_roots_strided(x, m, 1)
}

/// Like [`prediction_roots`], but each sample is predicted from
/// `x[n−m·d], …, x[n−d]`. The roots are those of the `d`-times decimated
/// sequence (`r = z^d`); every one of the `d` polyphase branches contributes
/// equations. Oversampled signals get a far better conditioned system.
pub fn prediction_roots_strided(x: &[f64], m: usize, d: usize) -> Result<Vec<Complex64>> {
    check_input(x, m, d)?;
    let rows = x.len() - m * d;
    let h = DMatrix::from_fn(rows, m, |r, c| x[r + c * d]);
    let target = DVector::from_fn(rows, |r, _| x[r + m * d]);
    let svd = h.svd(true, true);
    let smax = svd.singular_values.max();
    if !(smax > 0.0) || !smax.is_finite() {
        return Err(Error::RankDeficient("prediction matrix is zero".into()));
    }
    let coef = svd
        .solve(&target, 1e-12 * smax)
        .map_err(|e| Error::RankDeficient(e.to_string()))?;

    let mut companion = DMatrix::<f64>::zeros(m, m);
    for i in 0..m - 1 {
        companion[(i, i + 1)] = 1.0;
    }
    for j in 0..m {
        companion[(m - 1, j)] = coef[j];
    }
    let roots: Vec<Complex64> = companion
        .complex_eigenvalues()
        .iter()
        .map(|c| Complex64::new(c.re, c.im))
        .collect();
    if roots.iter().all(|r| r.norm() > 10.0) {
        return Err(Error::IllConditioned(
            "all prediction roots lie far outside the unit circle".into(),
        ));
    }
    Ok(roots)
}

pub fn prony_fit(signal: &PhaseSignal, model_order: usize) -> Result<Vec<PronyComponent>> {
    prony_fit_strided(signal, model_order, 1)
}

/// Prony decomposition with strided prediction (see
/// [`prediction_roots_strided`]). Decimated roots are mapped back with the
/// principal `d`-th root, so components must lie below `rate / (2d)`.
/// Amplitudes and phases are fitted on every sample.
pub fn prony_fit_strided(signal: &PhaseSignal, model_order: usize, stride: usize) -> Result<Vec<PronyComponent>> {
    let x = &signal.values;
    let roots = prediction_roots_strided(x, model_order, stride)?;
    // one representative per conjugate pair, plus real roots, mapped to the
    // full-rate z-plane
    let kept: Vec<Complex64> = roots
        .into_iter()
        .filter(|r| r.norm() > 0.0 && r.im >= -ROOT_IMAG_TOL * r.norm().max(1.0))
        .map(|r| {
            let real = r.im.abs() <= ROOT_IMAG_TOL * r.norm().max(1.0);
            if real && (r.re > 0.0 || stride == 1) {
                Complex64::new(r.re.signum() * r.norm().powf(1.0 / stride as f64), 0.0)
            } else {
                let arg = if real { PI } else { r.arg() };
                Complex64::from_polar(r.norm().powf(1.0 / stride as f64), arg / stride as f64)
            }
        })
        .collect();

    // basis columns: e^{αn}cos(ωn) and, for complex roots, −e^{αn}sin(ωn)
    let n = x.len();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut owners: Vec<(usize, bool)> = Vec::new();
    for (k, r) in kept.iter().enumerate() {
        let (alpha, omega) = (r.norm().ln(), r.arg());
        let cos: Vec<f64> = (0..n)
            .map(|i| (alpha * i as f64).exp() * (omega * i as f64).cos())
            .collect();
        columns.push(cos);
        owners.push((k, false));
        if r.im != 0.0 {
            let sin: Vec<f64> = (0..n)
                .map(|i| -(alpha * i as f64).exp() * (omega * i as f64).sin())
                .collect();
            columns.push(sin);
            owners.push((k, true));
        }
    }
    let scales: Vec<f64> = columns
        .iter()
        .map(|c| c.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE))
        .collect();
    let basis = DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i] / scales[j]);
    let rhs = DVector::from_column_slice(x);
    let svd = basis.svd(true, true);
    let smax = svd.singular_values.max();
    let sol = svd
        .solve(&rhs, 1e-12 * smax)
        .map_err(|e| Error::RankDeficient(e.to_string()))?;

    let mut cs = vec![(0.0, 0.0); kept.len()];
    for (j, (k, is_sin)) in owners.iter().enumerate() {
        let v = sol[j] / scales[j];
        if *is_sin {
            cs[*k].1 = v;
        } else {
            cs[*k].0 = v;
        }
    }
    let mut comps: Vec<PronyComponent> = kept
        .iter()
        .zip(&cs)
        .map(|(r, (c, s))| PronyComponent {
            freq: r.arg().abs() * signal.rate / (2.0 * PI),
            damping: r.norm().ln(),
            amplitude: c.hypot(*s),
            phase: s.atan2(*c),
        })
        .collect();
    let amax = comps.iter().fold(0.0f64, |m, c| m.max(c.amplitude));
    comps.retain(|c| c.amplitude > 1e-10 * amax);
    comps.sort_by(|a, b| {
        b.amplitude
            .total_cmp(&a.amplitude)
            .then(a.freq.total_cmp(&b.freq))
    });
    Ok(comps)
}

/// Evaluates the damped-sinusoid model at sample `n`.
pub fn reconstruct(components: &[PronyComponent], rate: f64, n: usize) -> f64 {
    components
        .iter()
        .map(|c| {
            let w = 2.0 * PI * c.freq / rate;
            c.amplitude * (c.damping * n as f64).exp() * (w * n as f64 + c.phase).cos()
        })
        .sum()
}

/// Frequency of the in-band, weakly damped component carrying the most energy
/// over the window. With `rr_hint`, components near twice that respiration
/// frequency are skipped.
pub fn prony_estimate(
    signal: &PhaseSignal,
    band: &BandSpec,
    params: &PronyParams,
    rr_hint: Option<f64>,
) -> Result<(f64, Vec<PronyComponent>)> {
    let stride = params.stride_for(band, signal.rate);
    let comps = prony_fit_strided(signal, params.model_order, stride)?;
    let n = signal.len();
    let best = comps
        .iter()
        .filter(|c| {
            band.contains(c.freq)
                && c.damping.abs() <= params.damping_max
                && rr_hint.is_none_or(|rr| !near_harmonic(c.freq, rr))
        })
        .map(|c| (c.freq, c.window_rms(signal.rate, n)))
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.total_cmp(&a.0)))
        .map(|(f, _)| f)
        .ok_or_else(|| Error::NoEstimate("no Prony component survives band and damping limits".into()))?;
    Ok((best, comps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::FilterFamily;
    use crate::phasechain::PhaseStage;
    use proptest::prelude::*;

    fn sig(v: Vec<f64>) -> PhaseSignal {
        PhaseSignal::new(v, 20.0, PhaseStage::Filtered).unwrap()
    }

    fn damped(parts: &[(f64, f64, f64, f64)], n: usize) -> PhaseSignal {
        sig((0..n)
            .map(|k| {
                let t = k as f64;
                parts
                    .iter()
                    .map(|(f, a, d, ph)| a * (d * t).exp() * (2.0 * PI * f * t / 20.0 + ph).cos())
                    .sum()
            })
            .collect())
    }

    #[test]
    fn geometric_sequence() {
        let x = sig((0..30).map(|n| 2.0 * 0.9f64.powi(n)).collect());
        let c = prony_fit(&x, 2).unwrap();
        assert_eq!(c.len(), 1, "{c:?}");
        assert_eq!(c[0].freq, 0.0);
        assert!((c[0].damping - 0.9f64.ln()).abs() < 1e-9);
        assert!((c[0].amplitude - 2.0).abs() < 1e-9);
    }

    #[test]
    fn exact_sinusoid() {
        let c = prony_fit(&damped(&[(1.3, 1.0, 0.0, 0.0)], 600), 2).unwrap();
        assert_eq!(c.len(), 1);
        assert!((c[0].freq - 1.3).abs() <= 1e-6);
        assert!(c[0].damping.abs() <= 1e-8);
        assert!((c[0].amplitude - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn two_tones_ordered_by_amplitude() {
        let x = damped(&[(0.25, 1.0, 0.0, 0.4), (1.3, 0.05, 0.0, 1.1)], 600);
        let c = prony_fit(&x, 4).unwrap();
        assert_eq!(c.len(), 2);
        assert!((c[0].freq - 0.25).abs() <= 1e-4);
        assert!((c[1].freq - 1.3).abs() <= 1e-4);
        assert!(c[0].amplitude > c[1].amplitude);
    }

    #[test]
    fn estimate_selection() {
        let band = BandSpec::heart(FilterFamily::Butterworth);
        let x = damped(&[(1.1, 1.0, 0.0, 0.0)], 300);
        let (f, _) = prony_estimate(&x, &band, &PronyParams::heart(), None).unwrap();
        assert!((f - 1.1).abs() < 1e-6);

        // equal-amplitude harmonic at 2·rr is excluded
        let x = damped(&[(0.7, 1.0, 0.0, 0.0), (1.25, 1.0, 0.0, 0.3)], 600);
        let (f, _) = prony_estimate(&x, &band, &PronyParams::heart(), Some(0.35)).unwrap();
        assert!((f - 1.25).abs() < 1e-6, "{f}");

        let out = damped(&[(0.2, 1.0, 0.0, 0.0), (5.0, 1.0, 0.0, 0.0)], 300);
        assert!(matches!(
            prony_estimate(&out, &band, &PronyParams::heart(), None),
            Err(Error::NoEstimate(_))
        ));
    }

    #[test]
    fn strided_prediction_recovers_slow_tones() {
        let x = damped(&[(0.23, 1.0, 0.0, 0.4), (0.46, 0.6, -0.001, 1.0)], 600);
        let c = prony_fit_strided(&x, 4, 11).unwrap();
        assert_eq!(c.len(), 2, "{c:?}");
        assert!((c[0].freq - 0.23).abs() <= 1e-6);
        assert!((c[1].freq - 0.46).abs() <= 1e-6);
        assert!((c[1].damping + 0.001).abs() <= 1e-8);
        assert!((c[1].amplitude - 0.6).abs() <= 1e-6);
        assert!(prony_fit_strided(&x, 4, 0).is_err());
        assert!(matches!(prony_fit_strided(&x, 4, 200), Err(Error::TooShort { .. })));
    }

    #[test]
    fn stride_follows_band_edge() {
        let p = PronyParams::heart();
        assert_eq!(p.stride_for(&BandSpec::heart(FilterFamily::Butterworth), 20.0), 2);
        assert_eq!(p.stride_for(&BandSpec::respiration(FilterFamily::Butterworth), 20.0), 11);
        let fixed = PronyParams { stride: 3, ..p };
        assert_eq!(fixed.stride_for(&BandSpec::heart(FilterFamily::Butterworth), 20.0), 3);
    }

    #[test]
    fn window_rms_of_whole_cycles() {
        let c = PronyComponent {
            freq: 1.0,
            damping: 0.0,
            amplitude: 2.0,
            phase: 0.3,
        };
        assert!((c.window_rms(20.0, 200) - 2.0 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(prony_fit(&sig(vec![0.0; 60]), 4), Err(Error::RankDeficient(_))));
        assert!(matches!(prony_fit(&sig(vec![1.0; 5]), 2), Err(Error::TooShort { .. })));
        assert!(prony_fit(&sig(vec![1.0; 50]), 1).is_err());
        let blowup = sig((0..30).map(|n| 20f64.powi(n) + (-15f64).powi(n)).collect());
        assert!(matches!(prony_fit(&blowup, 2), Err(Error::IllConditioned(_))));
    }

    proptest! {
        #[test]
        fn roots_come_in_conjugate_pairs(x in prop::collection::vec(-1.0f64..1.0, 40..120), m in 2usize..10) {
            let roots = prediction_roots(&x, m).unwrap();
            for r in &roots {
                if r.im.abs() > 1e-9 {
                    prop_assert!(roots.iter().any(|q| (q - r.conj()).norm() <= 1e-9 * r.norm().max(1.0)));
                }
            }
        }

        #[test]
        fn noiseless_reconstruction(
            f1 in 0.1f64..4.0, df in 0.3f64..4.0,
            a1 in 0.2f64..2.0, a2 in 0.2f64..2.0,
            d1 in -0.01f64..0.0, d2 in -0.01f64..0.0,
            p1 in 0.0f64..6.0, p2 in 0.0f64..6.0,
        ) {
            let f2 = f1 + df;
            prop_assume!(f2 < 9.5);
            let x = damped(&[(f1, a1, d1, p1), (f2, a2, d2, p2)], 300);
            let c = prony_fit(&x, 4).unwrap();
            let rms = (x.values.iter().map(|v| v * v).sum::<f64>() / 300.0).sqrt();
            let err = (x.values.iter().enumerate()
                .map(|(n, v)| (v - reconstruct(&c, 20.0, n)).powi(2))
                .sum::<f64>() / 300.0).sqrt();
            prop_assert!(err <= 1e-6 * rms, "{} vs {}", err, rms);
        }

        #[test]
        fn strided_reconstruction(
            f1 in 0.05f64..0.35, df in 0.1f64..0.35,
            a1 in 0.2f64..2.0, a2 in 0.2f64..2.0,
            p1 in 0.0f64..6.0, p2 in 0.0f64..6.0,
            d in 1usize..12,
        ) {
            let x = damped(&[(f1, a1, 0.0, p1), (f1 + df, a2, -0.002, p2)], 600);
            let c = prony_fit_strided(&x, 4, d).unwrap();
            let rms = (x.values.iter().map(|v| v * v).sum::<f64>() / 600.0).sqrt();
            let err = (x.values.iter().enumerate()
                .map(|(n, v)| (v - reconstruct(&c, 20.0, n)).powi(2))
                .sum::<f64>() / 600.0).sqrt();
            prop_assert!(err <= 1e-6 * rms, "{} vs {}", err, rms);
        }
    }
}
