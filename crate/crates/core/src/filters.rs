//! IIR bandpass and notch filters as cascaded second-order sections.
//!
//! Bandpass designs start from a normalized analog lowpass prototype
//! (Butterworth or elliptic), apply the lowpass-to-bandpass transform at
//! prewarped edges and map to the z-plane with the bilinear transform.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::phasechain::{PhaseSignal, PhaseStage};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandKind {
    Heart,
    Respiration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FilterFamily {
    #[default]
    Butterworth,
    Elliptic,
}

impl std::str::FromStr for FilterFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "butterworth" | "butter" => Ok(FilterFamily::Butterworth),
            "elliptic" | "ellip" => Ok(FilterFamily::Elliptic),
            _ => Err(Error::InvalidParameter(format!("unknown filter family '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandSpec {
    pub low: f64,
    pub high: f64,
    pub kind: BandKind,
    pub family: FilterFamily,
    /// Prototype order; the bandpass has twice as many poles.
    pub order: usize,
    /// Passband ripple, dB (elliptic only).
    pub ripple_db: f64,
    /// Stopband attenuation, dB (elliptic only).
    pub stop_atten_db: f64,
}

pub const HEART_BAND: (f64, f64) = (0.6, 4.0);
pub const RESPIRATION_BAND: (f64, f64) = (0.05, 0.7);

impl BandSpec {
    pub fn new(kind: BandKind, low: f64, high: f64, family: FilterFamily) -> Self {
        let order = match family {
            FilterFamily::Butterworth => 4,
            FilterFamily::Elliptic => 5,
        };
        BandSpec {
            low,
            high,
            kind,
            family,
            order,
            ripple_db: 0.5,
            stop_atten_db: 40.0,
        }
    }

    pub fn heart(family: FilterFamily) -> Self {
        BandSpec::new(BandKind::Heart, HEART_BAND.0, HEART_BAND.1, family)
    }

    pub fn respiration(family: FilterFamily) -> Self {
        BandSpec::new(BandKind::Respiration, RESPIRATION_BAND.0, RESPIRATION_BAND.1, family)
    }

    pub fn contains(&self, f: f64) -> bool {
        f >= self.low && f <= self.high
    }

    pub fn validate(&self, rate: f64) -> Result<()> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::InvalidParameter(format!("rate {rate} must be positive")));
        }
        if !(self.low > 0.0 && self.low < self.high && self.high < rate / 2.0) {
            return Err(Error::InvalidParameter(format!(
                "band {}..{} Hz infeasible at {rate} Hz",
                self.low, self.high
            )));
        }
        if !(2..=10).contains(&self.order) {
            return Err(Error::InvalidParameter(format!(
                "filter order {} outside 2..=10",
                self.order
            )));
        }
        if self.family == FilterFamily::Elliptic
            && !(self.ripple_db > 0.0 && self.stop_atten_db > self.ripple_db)
        {
            return Err(Error::InvalidParameter(format!(
                "elliptic ripple {} dB / attenuation {} dB invalid",
                self.ripple_db, self.stop_atten_db
            )));
        }
        Ok(())
    }
}

/// One second-order section `(b0 + b1 z⁻¹ + b2 z⁻²) / (1 + a1 z⁻¹ + a2 z⁻²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    fn response(&self, z1: Complex64) -> Complex64 {
        let z2 = z1 * z1;
        (self.b0 + self.b1 * z1 + self.b2 * z2) / (1.0 + self.a1 * z1 + self.a2 * z2)
    }

    pub fn poles(&self) -> [Complex64; 2] {
        let disc = Complex64::new(self.a1 * self.a1 - 4.0 * self.a2, 0.0).sqrt();
        [(-self.a1 + disc) / 2.0, (-self.a1 - disc) / 2.0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IirCoefficients {
    pub sections: Vec<Biquad>,
    pub gain: f64,
}

impl IirCoefficients {
    /// Frequency response at `f` Hz.
    pub fn response(&self, f: f64, rate: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -2.0 * PI * f / rate);
        self.sections
            .iter()
            .fold(Complex64::new(self.gain, 0.0), |acc, s| acc * s.response(z1))
    }

    pub fn magnitude_db(&self, f: f64, rate: f64) -> f64 {
        20.0 * self.response(f, rate).norm().log10()
    }

    pub fn poles(&self) -> Vec<Complex64> {
        self.sections.iter().flat_map(|s| s.poles()).collect()
    }

    /// Digital filter order.
    pub fn order(&self) -> usize {
        2 * self.sections.len()
    }

    fn check_stable(&self) -> Result<()> {
        let worst = self.poles().iter().map(|p| p.norm()).fold(0.0, f64::max);
        if !(worst < 1.0) {
            return Err(Error::UnstableFilter(worst));
        }
        Ok(())
    }
}

struct Zpk {
    zeros: Vec<Complex64>,
    poles: Vec<Complex64>,
}

fn butterworth_prototype(n: usize) -> Zpk {
    let poles = (0..n)
        .map(|k| {
            let theta = PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
            Complex64::from_polar(1.0, theta)
        })
        .collect();
    Zpk {
        zeros: Vec::new(),
        poles,
    }
}

// Elliptic functions via descending Landen transformations, with the
// argument u normalized so that u = 1 corresponds to the quarter period K.

const LANDEN_STEPS: usize = 7;

fn landen(k: f64) -> Vec<f64> {
    let mut v = Vec::with_capacity(LANDEN_STEPS);
    let mut k = k;
    for _ in 0..LANDEN_STEPS {
        k = (k / (1.0 + (1.0 - k * k).sqrt())).powi(2);
        v.push(k);
    }
    v
}

fn cde(u: Complex64, k: f64) -> Complex64 {
    let v = landen(k);
    let mut w = (u * PI / 2.0).cos();
    for &vn in v.iter().rev() {
        w = (1.0 + vn) * w / (1.0 + vn * w * w);
    }
    w
}

fn sne(u: Complex64, k: f64) -> Complex64 {
    let v = landen(k);
    let mut w = (u * PI / 2.0).sin();
    for &vn in v.iter().rev() {
        w = (1.0 + vn) * w / (1.0 + vn * w * w);
    }
    w
}

fn ellipk(k: f64) -> f64 {
    let (mut a, mut b) = (1.0, (1.0 - k * k).sqrt());
    while (a - b).abs() > 1e-15 * a {
        let an = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = an;
    }
    PI / (2.0 * a)
}

fn srem(x: f64, y: f64) -> f64 {
    x - y * (x / y).round()
}

fn acde(w: Complex64, k: f64) -> Complex64 {
    let v = landen(k);
    let mut w = w;
    for n in 0..v.len() {
        let v1 = if n == 0 { k } else { v[n - 1] };
        w = w / (1.0 + (1.0 - w * w * v1 * v1).sqrt()) * 2.0 / (1.0 + v[n]);
    }
    let u = w.acos() * 2.0 / PI;
    let r = ellipk((1.0 - k * k).sqrt()) / ellipk(k);
    Complex64::new(srem(u.re, 4.0), srem(u.im, 2.0 * r))
}

fn asne(w: Complex64, k: f64) -> Complex64 {
    1.0 - acde(w, k)
}

/// Selectivity modulus `k` for which an order-`n` elliptic filter reaches
/// discrimination modulus `k1`.
fn ellipdeg(n: usize, k1: f64) -> f64 {
    let kp1 = (1.0 - k1 * k1).sqrt();
    let prod: f64 = (1..=n / 2)
        .map(|i| sne(Complex64::new((2 * i - 1) as f64 / n as f64, 0.0), kp1).re)
        .product();
    let kp = kp1.powi(n as i32) * prod.powi(4);
    (1.0 - kp * kp).sqrt()
}

fn elliptic_prototype(n: usize, ripple_db: f64, atten_db: f64) -> Zpk {
    let ep = (10f64.powf(ripple_db / 10.0) - 1.0).sqrt();
    let es = (10f64.powf(atten_db / 10.0) - 1.0).sqrt();
    let k1 = ep / es;
    let k = ellipdeg(n, k1);
    let j = Complex64::i();
    let v0 = -j * asne(j / ep, k1) / n as f64;

    let mut zeros = Vec::new();
    let mut poles = Vec::new();
    for i in 1..=n / 2 {
        let ui = Complex64::new((2 * i - 1) as f64 / n as f64, 0.0);
        let z = j / (k * cde(ui, k));
        zeros.push(z);
        zeros.push(z.conj());
        let p = j * cde(ui - j * v0, k);
        poles.push(p);
        poles.push(p.conj());
    }
    if n % 2 == 1 {
        let p0 = j * sne(j * v0, k);
        poles.push(Complex64::new(p0.re, 0.0));
    }
    Zpk { zeros, poles }
}

/// Lowpass-to-bandpass transform `s → (s² + w0²) / (s·bw)`.
fn lowpass_to_bandpass(proto: Zpk, w0: f64, bw: f64) -> Zpk {
    let map = |r: &Complex64| {
        let half = r * bw / 2.0;
        let d = (half * half - w0 * w0).sqrt();
        [half + d, half - d]
    };
    let mut zeros: Vec<Complex64> = proto.zeros.iter().flat_map(map).collect();
    let poles: Vec<Complex64> = proto.poles.iter().flat_map(map).collect();
    let degree = proto.poles.len() - proto.zeros.len();
    zeros.extend(std::iter::repeat_n(Complex64::new(0.0, 0.0), degree));
    // the remaining `degree` zeros sit at infinity
    Zpk { zeros, poles }
}

fn bilinear(analog: Zpk, fs2: f64) -> Zpk {
    let map = |r: &Complex64| (fs2 + r) / (fs2 - r);
    let mut zeros: Vec<Complex64> = analog.zeros.iter().map(map).collect();
    let poles: Vec<Complex64> = analog.poles.iter().map(map).collect();
    zeros.extend(std::iter::repeat_n(
        Complex64::new(-1.0, 0.0),
        poles.len() - zeros.len(),
    ));
    Zpk { zeros, poles }
}

/// Groups roots into conjugate pairs; leftover real roots are paired in order.
fn conjugate_pairs(roots: &[Complex64]) -> Vec<(Complex64, Complex64)> {
    let tol = 1e-9;
    let mut upper: Vec<Complex64> = roots.iter().copied().filter(|r| r.im > tol).collect();
    let mut reals: Vec<f64> = roots
        .iter()
        .filter(|r| r.im.abs() <= tol)
        .map(|r| r.re)
        .collect();
    upper.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    reals.sort_by(|a, b| b.abs().total_cmp(&a.abs()));
    let mut out: Vec<(Complex64, Complex64)> = upper.into_iter().map(|r| (r, r.conj())).collect();
    for pair in reals.chunks(2) {
        let a = Complex64::new(pair[0], 0.0);
        let b = Complex64::new(*pair.get(1).unwrap_or(&0.0), 0.0);
        out.push((a, b));
    }
    out
}

fn to_sections(digital: Zpk) -> Vec<Biquad> {
    let poles = conjugate_pairs(&digital.poles);
    let mut zeros = conjugate_pairs(&digital.zeros);
    let mut sections = Vec::with_capacity(poles.len());
    for (p1, p2) in poles {
        // give each pole pair the nearest remaining zero pair
        let idx = zeros
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| (a.0 - p1).norm().total_cmp(&(b.0 - p1).norm()))
            .map(|(i, _)| i)
            .expect("bandpass designs have as many zeros as poles");
        let (z1, z2) = zeros.swap_remove(idx);
        sections.push(Biquad {
            b0: 1.0,
            b1: -(z1 + z2).re,
            b2: (z1 * z2).re,
            a1: -(p1 + p2).re,
            a2: (p1 * p2).re,
        });
    }
    sections
}

pub fn design_bandpass(spec: &BandSpec, rate: f64) -> Result<IirCoefficients> {
    spec.validate(rate)?;
    let fs2 = 2.0 * rate;
    let w1 = fs2 * (PI * spec.low / rate).tan();
    let w2 = fs2 * (PI * spec.high / rate).tan();
    let w0 = (w1 * w2).sqrt();
    let proto = match spec.family {
        FilterFamily::Butterworth => butterworth_prototype(spec.order),
        FilterFamily::Elliptic => {
            elliptic_prototype(spec.order, spec.ripple_db, spec.stop_atten_db)
        }
    };
    let digital = bilinear(lowpass_to_bandpass(proto, w0, w2 - w1), fs2);
    let mut sections = to_sections(digital);

    // the prototype's zero frequency lands on the digital center frequency
    let fc = rate / PI * (w0 / fs2).atan();
    let zc = Complex64::from_polar(1.0, -2.0 * PI * fc / rate);
    for s in &mut sections {
        let m = s.response(zc).norm();
        s.b0 /= m;
        s.b1 /= m;
        s.b2 /= m;
    }
    let target = match spec.family {
        FilterFamily::Elliptic if spec.order % 2 == 0 => 10f64.powf(-spec.ripple_db / 20.0),
        _ => 1.0,
    };
    let coef = IirCoefficients {
        sections,
        gain: target,
    };
    coef.check_stable()?;
    Ok(coef)
}

/// Second-order notch with a −3 dB bandwidth of `center / q`.
pub fn design_notch(center: f64, q: f64, rate: f64) -> Result<IirCoefficients> {
    if !(center > 0.0 && center < rate / 2.0) {
        return Err(Error::InvalidParameter(format!(
            "notch center {center} Hz outside (0, {}) Hz",
            rate / 2.0
        )));
    }
    if !(q > 0.0 && q.is_finite()) {
        return Err(Error::InvalidParameter(format!("notch q {q} must be positive")));
    }
    let w0 = 2.0 * PI * center / rate;
    let alpha = w0.sin() / (2.0 * q);
    let a0 = 1.0 + alpha;
    let c = -2.0 * w0.cos() / a0;
    let coef = IirCoefficients {
        sections: vec![Biquad {
            b0: 1.0 / a0,
            b1: c,
            b2: 1.0 / a0,
            a1: c,
            a2: (1.0 - alpha) / a0,
        }],
        gain: 1.0,
    };
    coef.check_stable()?;
    Ok(coef)
}

fn filter_forward(coef: &IirCoefficients, x: &[f64], init: Option<f64>) -> Vec<f64> {
    let mut y: Vec<f64> = x.iter().map(|v| v * coef.gain).collect();
    // steady-state level of the signal entering each section
    let mut level = init.map(|v| v * coef.gain);
    for s in &coef.sections {
        let (mut s1, mut s2) = (0.0, 0.0);
        if let Some(u) = level {
            let dc = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
            let out = dc * u;
            s2 = s.b2 * u - s.a2 * out;
            s1 = s.b1 * u - s.a1 * out + s2;
            level = Some(out);
        }
        for v in y.iter_mut() {
            let xin = *v;
            let out = s.b0 * xin + s1;
            s1 = s.b1 * xin - s.a1 * out + s2;
            s2 = s.b2 * xin - s.a2 * out;
            *v = out;
        }
    }
    y
}

/// Runs the section cascade over `signal`. With `zero_phase` the signal is
/// filtered forward and backward after even (mirror) reflection padding of
/// three times the filter order at each end. Mirroring keeps the padded
/// level at the signal's own, so a band-pass with a low corner near DC is
/// not excited by an artificial offset step.
pub fn apply_filter(
    coef: &IirCoefficients,
    signal: &PhaseSignal,
    zero_phase: bool,
) -> Result<PhaseSignal> {
    let x = &signal.values;
    if !zero_phase {
        return Ok(signal.with_values(filter_forward(coef, x, None), PhaseStage::Filtered));
    }
    let pad = 3 * coef.order();
    let n = x.len();
    if n <= pad {
        return Err(Error::TooShort {
            needed: pad + 1,
            got: n,
        });
    }
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|k| x[k]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|k| x[n - 1 - k]));

    let mut y = filter_forward(coef, &ext, Some(ext[0]));
    y.reverse();
    let first = y[0];
    let mut y = filter_forward(coef, &y, Some(first));
    y.reverse();
    Ok(signal.with_values(y[pad..pad + n].to_vec(), PhaseStage::Filtered))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const FS: f64 = 20.0;

    fn db(coef: &IirCoefficients, f: f64) -> f64 {
        coef.magnitude_db(f, FS)
    }

    fn tone(f: f64, n: usize) -> PhaseSignal {
        let v = (0..n).map(|k| (2.0 * PI * f * k as f64 / FS).sin()).collect();
        PhaseSignal::new(v, FS, PhaseStage::Fused).unwrap()
    }

    #[test]
    fn heart_butterworth_response() {
        let c = design_bandpass(&BandSpec::heart(FilterFamily::Butterworth), FS).unwrap();
        assert_eq!(c.order(), 8);
        assert!(db(&c, 1.3).abs() < 0.1, "{}", db(&c, 1.3));
        assert!(db(&c, 0.3) <= -20.0);
        assert!(db(&c, 0.25) <= -20.0);
        // -3 dB at both edges
        assert!((db(&c, 0.6) + 3.0103).abs() < 1e-6, "{}", db(&c, 0.6));
        assert!((db(&c, 4.0) + 3.0103).abs() < 1e-6, "{}", db(&c, 4.0));
    }

    #[test]
    fn butterworth_passband_is_monotone() {
        let spec = BandSpec::heart(FilterFamily::Butterworth);
        let c = design_bandpass(&spec, FS).unwrap();
        let fc = (0..=4000)
            .map(|k| 0.6 + 3.4 * k as f64 / 4000.0)
            .max_by(|a, b| db(&c, *a).total_cmp(&db(&c, *b)))
            .unwrap();
        assert!(db(&c, fc) <= 0.01);
        let mut prev = f64::NEG_INFINITY;
        let mut f = 0.6;
        while f <= fc {
            let m = db(&c, f);
            assert!(m >= prev - 1e-12, "not monotone at {f}");
            prev = m;
            f += 0.001;
        }
        let mut prev = f64::NEG_INFINITY;
        let mut f = 4.0;
        while f >= fc {
            let m = db(&c, f);
            assert!(m >= prev - 1e-12, "not monotone at {f}");
            prev = m;
            f -= 0.001;
        }
    }

    #[test]
    fn elliptic_meets_ripple_and_stopband() {
        for (spec, order) in [
            (BandSpec::heart(FilterFamily::Elliptic), 5),
            (BandSpec::respiration(FilterFamily::Elliptic), 5),
            (
                BandSpec {
                    order: 4,
                    ..BandSpec::heart(FilterFamily::Elliptic)
                },
                4,
            ),
        ] {
            let c = design_bandpass(&spec, FS).unwrap();
            assert_eq!(c.order(), 2 * order);
            for k in 0..=500 {
                let f = spec.low + (spec.high - spec.low) * k as f64 / 500.0;
                let m = db(&c, f);
                assert!(m <= 1e-6 && m >= -spec.ripple_db - 1e-6, "{spec:?} {f} {m}");
            }
            // well outside the transition bands
            for f in [spec.low / 4.0, (spec.high * 3.0).min(9.9)] {
                assert!(db(&c, f) <= -spec.stop_atten_db + 1e-6, "{f}: {}", db(&c, f));
            }
        }
    }

    #[test]
    fn elliptic_prototype_edges() {
        // prototype magnitude at the passband edge equals the ripple level
        let z = elliptic_prototype(5, 0.5, 40.0);
        let h = |w: f64| {
            let s = Complex64::new(0.0, w);
            let num: Complex64 = z.zeros.iter().map(|r| s - r).product();
            let den: Complex64 = z.poles.iter().map(|r| s - r).product();
            let num0: Complex64 = z.zeros.iter().map(|r| -r).product();
            let den0: Complex64 = z.poles.iter().map(|r| -r).product();
            ((num / den) / (num0 / den0)).norm()
        };
        assert!((20.0 * h(1.0).log10() + 0.5).abs() < 1e-6, "{}", h(1.0));
        assert!(z.poles.iter().all(|p| p.re < 0.0));
    }

    #[test]
    fn band_validation() {
        let bad = BandSpec {
            low: 0.7,
            high: 0.05,
            ..BandSpec::respiration(FilterFamily::Butterworth)
        };
        assert!(design_bandpass(&bad, FS).is_err());
        let nyq = BandSpec {
            high: 10.0,
            ..BandSpec::heart(FilterFamily::Butterworth)
        };
        assert!(design_bandpass(&nyq, FS).is_err());
        let ord = BandSpec {
            order: 11,
            ..BandSpec::heart(FilterFamily::Butterworth)
        };
        assert!(design_bandpass(&ord, FS).is_err());
    }

    #[test]
    fn all_designs_stable() {
        for fam in [FilterFamily::Butterworth, FilterFamily::Elliptic] {
            for order in 2..=10 {
                for base in [BandSpec::heart(fam), BandSpec::respiration(fam)] {
                    let spec = BandSpec { order, ..base };
                    let c = design_bandpass(&spec, FS).unwrap();
                    assert!(c.poles().iter().all(|p| p.norm() < 1.0), "{spec:?}");
                }
            }
        }
    }

    #[test]
    fn notch_response() {
        let n = design_notch(0.6, 10.0, FS).unwrap();
        assert!(n.response(0.6, FS).norm() <= 1e-6);
        assert!(n.response(1.3, FS).norm() >= 0.98);
        assert!(db(&n, 1.3) >= -0.2);
        assert!((n.response(0.0, FS).norm() - 1.0).abs() < 1e-12);
        assert!(design_notch(0.0, 10.0, FS).is_err());
        assert!(design_notch(10.0, 10.0, FS).is_err());
        assert!(design_notch(1.0, 0.0, FS).is_err());
    }

    #[test]
    fn zero_in_zero_out() {
        let c = design_bandpass(&BandSpec::heart(FilterFamily::Elliptic), FS).unwrap();
        let z = PhaseSignal::new(vec![0.0; 200], FS, PhaseStage::Fused).unwrap();
        for zp in [false, true] {
            let y = apply_filter(&c, &z, zp).unwrap();
            assert_eq!(y.len(), 200);
            assert!(y.values.iter().all(|v| *v == 0.0));
            assert_eq!(y.stage, PhaseStage::Filtered);
        }
    }

    #[test]
    fn steady_state_amplitude_matches_design() {
        let c = design_bandpass(&BandSpec::heart(FilterFamily::Butterworth), FS).unwrap();
        let amp = |f: f64, zp: bool| {
            let y = apply_filter(&c, &tone(f, 1200), zp).unwrap();
            y.values[400..800].iter().fold(0.0f64, |m, v| m.max(v.abs()))
        };
        let h13 = c.response(1.3, FS).norm();
        assert!((amp(1.3, false) / h13 - 1.0).abs() < 0.02);
        assert!((amp(1.3, true) / (h13 * h13) - 1.0).abs() < 0.02);
        let h025 = c.response(0.25, FS).norm();
        assert!(amp(0.25, false) <= h025 * 1.02);
    }

    #[test]
    fn zero_phase_has_no_lag() {
        let c = design_bandpass(&BandSpec::heart(FilterFamily::Butterworth), FS).unwrap();
        let x = tone(1.3, 600);
        let y = apply_filter(&c, &x, true).unwrap();
        let xc = |lag: i64| -> f64 {
            (100..500)
                .map(|n| x.values[n] * y.values[(n as i64 + lag) as usize])
                .sum()
        };
        let best = (-7..=7).max_by(|a, b| xc(*a).total_cmp(&xc(*b))).unwrap();
        assert_eq!(best, 0);
    }

    #[test]
    fn zero_phase_needs_padding_room() {
        let c = design_bandpass(&BandSpec::heart(FilterFamily::Butterworth), FS).unwrap();
        let short = tone(1.0, 24);
        assert!(matches!(apply_filter(&c, &short, true), Err(Error::TooShort { .. })));
        assert!(apply_filter(&c, &short, false).is_ok());
    }

    proptest! {
        #[test]
        fn filter_is_linear(
            a in prop::collection::vec(-1.0f64..1.0, 120),
            b in prop::collection::vec(-1.0f64..1.0, 120),
            alpha in -3.0f64..3.0,
            zp in any::<bool>(),
        ) {
            let c = design_bandpass(&BandSpec::heart(FilterFamily::Elliptic), FS).unwrap();
            let sig = |v: Vec<f64>| PhaseSignal::new(v, FS, PhaseStage::Fused).unwrap();
            let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| alpha * x + y).collect();
            let ya = apply_filter(&c, &sig(a), zp).unwrap();
            let yb = apply_filter(&c, &sig(b), zp).unwrap();
            let ym = apply_filter(&c, &sig(mix), zp).unwrap();
            let scale = ym.values.iter().fold(1e-12f64, |m, v| m.max(v.abs()));
            for k in 0..120 {
                let e = ym.values[k] - (alpha * ya.values[k] + yb.values[k]);
                prop_assert!(e.abs() <= 1e-10 * scale.max(1.0));
            }
        }

        #[test]
        fn filter_is_time_invariant(a in prop::collection::vec(-1.0f64..1.0, 80), shift in 1usize..20) {
            let c = design_bandpass(&BandSpec::respiration(FilterFamily::Butterworth), FS).unwrap();
            let sig = |v: Vec<f64>| PhaseSignal::new(v, FS, PhaseStage::Fused).unwrap();
            let mut shifted = vec![0.0; shift];
            shifted.extend_from_slice(&a);
            let y = apply_filter(&c, &sig(a), false).unwrap();
            let ys = apply_filter(&c, &sig(shifted), false).unwrap();
            for k in 0..y.len() {
                prop_assert!((ys.values[k + shift] - y.values[k]).abs() <= 1e-10);
            }
        }
    }
}
