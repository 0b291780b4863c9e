//! From target-bin I/Q samples to a clean phase signal: DC-offset correction,
//! phase extraction, phase differencing, impulse suppression and RX fusion.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Slow-time I/Q samples of one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct IqSeries {
    pub i: Vec<f64>,
    pub q: Vec<f64>,
    /// Sampling rate, Hz.
    pub rate: f64,
}

impl IqSeries {
    pub fn new(i: Vec<f64>, q: Vec<f64>, rate: f64) -> Result<Self> {
        if i.len() != q.len() {
            return Err(Error::LengthMismatch(format!(
                "I has {} samples, Q has {}",
                i.len(),
                q.len()
            )));
        }
        if i.len() < 2 {
            return Err(Error::TooShort {
                needed: 2,
                got: i.len(),
            });
        }
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::InvalidParameter(format!("rate {rate} must be positive")));
        }
        if i.iter().chain(&q).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite I/Q sample".into()));
        }
        Ok(IqSeries { i, q, rate })
    }

    pub fn from_complex(samples: &[Complex64], rate: f64) -> Result<Self> {
        IqSeries::new(
            samples.iter().map(|s| s.re).collect(),
            samples.iter().map(|s| s.im).collect(),
            rate,
        )
    }

    pub fn len(&self) -> usize {
        self.i.len()
    }

    pub fn is_empty(&self) -> bool {
        self.i.is_empty()
    }

    pub fn sample(&self, n: usize) -> Complex64 {
        Complex64::new(self.i[n], self.q[n])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcEstimate {
    pub dc_i: f64,
    pub dc_q: f64,
    /// Constellation radius.
    pub radius: f64,
    pub iterations: usize,
    pub final_objective: f64,
}

impl DcEstimate {
    pub fn zero() -> Self {
        DcEstimate {
            dc_i: 0.0,
            dc_q: 0.0,
            radius: 1.0,
            iterations: 0,
            final_objective: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DcMethod {
    /// Gradient descent on the squared circle residual.
    GradientDescent,
    /// Closed-form Kåsa least-squares circle fit.
    #[default]
    AlgebraicFit,
}

/// Gradient-descent settings for [`DcMethod::GradientDescent`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdParams {
    pub initial_step: f64,
    pub max_iterations: usize,
    /// Stop once the objective's relative decrease falls below this.
    pub rel_tolerance: f64,
}

impl Default for GdParams {
    fn default() -> Self {
        GdParams {
            initial_step: 1e-2,
            max_iterations: 10_000,
            rel_tolerance: 1e-10,
        }
    }
}

/// Centroid and RMS spread of the constellation; the fits run on
/// `(x - cx) / scale` for conditioning.
fn normalization(iq: &IqSeries) -> Result<(f64, f64, f64)> {
    if iq.len() < 3 {
        return Err(Error::DegenerateFit(format!(
            "need at least 3 samples, got {}",
            iq.len()
        )));
    }
    let n = iq.len() as f64;
    let cx = iq.i.iter().sum::<f64>() / n;
    let cy = iq.q.iter().sum::<f64>() / n;
    let spread = (iq
        .i
        .iter()
        .zip(&iq.q)
        .map(|(x, y)| (x - cx).powi(2) + (y - cy).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let magnitude = cx.abs().max(cy.abs()).max(f64::MIN_POSITIVE);
    if !(spread > 1e-12 * magnitude) || spread == 0.0 {
        return Err(Error::DegenerateFit("all samples identical".into()));
    }
    Ok((cx, cy, spread))
}

fn circle_objective(xs: &[(f64, f64)], a: f64, b: f64, r: f64) -> f64 {
    let r2 = r * r;
    xs.iter()
        .map(|(x, y)| {
            let e = (x - a).powi(2) + (y - b).powi(2) - r2;
            e * e
        })
        .sum::<f64>()
        / xs.len() as f64
}

fn fit_algebraic(iq: &IqSeries) -> Result<DcEstimate> {
    let (cx, cy, s) = normalization(iq)?;
    let n = iq.len();
    // x² + y² + D·x + E·y + F = 0 in normalized coordinates
    let mut a = DMatrix::<f64>::zeros(n, 3);
    let mut rhs = DVector::<f64>::zeros(n);
    let mut pts = Vec::with_capacity(n);
    for k in 0..n {
        let x = (iq.i[k] - cx) / s;
        let y = (iq.q[k] - cy) / s;
        a[(k, 0)] = x;
        a[(k, 1)] = y;
        a[(k, 2)] = 1.0;
        rhs[k] = -(x * x + y * y);
        pts.push((x, y));
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-10 * smax) {
        return Err(Error::DegenerateFit("points are collinear".into()));
    }
    let sol = svd
        .solve(&rhs, 0.0)
        .map_err(|e| Error::DegenerateFit(e.to_string()))?;
    let (d, e, f) = (sol[0], sol[1], sol[2]);
    let a0 = -d / 2.0;
    let b0 = -e / 2.0;
    let r2 = a0 * a0 + b0 * b0 - f;
    if !(r2 > 0.0) {
        return Err(Error::DegenerateFit("fitted radius is not positive".into()));
    }
    let r = r2.sqrt();
    Ok(DcEstimate {
        dc_i: cx + s * a0,
        dc_q: cy + s * b0,
        radius: s * r,
        iterations: 0,
        final_objective: circle_objective(&pts, a0, b0, r) * s.powi(4),
    })
}

fn fit_gradient_descent(iq: &IqSeries, params: &GdParams) -> Result<DcEstimate> {
    let (cx, cy, s) = normalization(iq)?;
    let pts: Vec<(f64, f64)> = iq
        .i
        .iter()
        .zip(&iq.q)
        .map(|(x, y)| ((x - cx) / s, (y - cy) / s))
        .collect();
    let n = pts.len() as f64;

    let mut p = [0.0, 0.0, pts.iter().map(|(x, y)| x.hypot(*y)).sum::<f64>() / n];
    let mut j = circle_objective(&pts, p[0], p[1], p[2]);
    let mut step = params.initial_step;

    for iter in 1..=params.max_iterations {
        let mut g = [0.0; 3];
        for (x, y) in &pts {
            let dx = x - p[0];
            let dy = y - p[1];
            let e = dx * dx + dy * dy - p[2] * p[2];
            g[0] -= 4.0 * e * dx;
            g[1] -= 4.0 * e * dy;
            g[2] -= 4.0 * e * p[2];
        }
        for v in &mut g {
            *v /= n;
        }
        let gnorm2 = g.iter().map(|v| v * v).sum::<f64>();
        if gnorm2 == 0.0 || j == 0.0 {
            return Ok(finish_gd(p, j, iter, cx, cy, s));
        }

        // backtracking line search (Armijo), halving on failure
        let mut accepted = None;
        while step > 1e-20 {
            let cand = [p[0] - step * g[0], p[1] - step * g[1], p[2] - step * g[2]];
            let jc = circle_objective(&pts, cand[0], cand[1], cand[2]);
            if jc <= j - 1e-4 * step * gnorm2 {
                accepted = Some((cand, jc));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, jc)) = accepted else {
            return Ok(finish_gd(p, j, iter, cx, cy, s));
        };
        let rel = (j - jc) / j;
        p = cand;
        j = jc;
        if rel < params.rel_tolerance {
            return Ok(finish_gd(p, j, iter, cx, cy, s));
        }
        step *= 2.0;
    }
    Err(Error::NotConverged {
        iterations: params.max_iterations,
        objective: j * s.powi(4),
    })
}

fn finish_gd(p: [f64; 3], j: f64, iterations: usize, cx: f64, cy: f64, s: f64) -> DcEstimate {
    DcEstimate {
        dc_i: cx + s * p[0],
        dc_q: cy + s * p[1],
        radius: s * p[2].abs(),
        iterations,
        final_objective: j * s.powi(4),
    }
}

/// Fits a circle to the I/Q constellation; its center is the DC offset.
pub fn estimate_dc_offset(iq: &IqSeries, method: DcMethod) -> Result<DcEstimate> {
    estimate_dc_offset_with(iq, method, &GdParams::default())
}

pub fn estimate_dc_offset_with(
    iq: &IqSeries,
    method: DcMethod,
    params: &GdParams,
) -> Result<DcEstimate> {
    let est = match method {
        DcMethod::AlgebraicFit => fit_algebraic(iq)?,
        DcMethod::GradientDescent => fit_gradient_descent(iq, params)?,
    };
    if !(est.radius > 0.0) {
        return Err(Error::DegenerateFit("fitted radius is not positive".into()));
    }
    Ok(est)
}

pub fn remove_dc_offset(iq: &IqSeries, dc: &DcEstimate) -> IqSeries {
    IqSeries {
        i: iq.i.iter().map(|v| v - dc.dc_i).collect(),
        q: iq.q.iter().map(|v| v - dc.dc_q).collect(),
        rate: iq.rate,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseStage {
    Raw,
    Unwrapped,
    Differenced,
    Denoised,
    Fused,
    Filtered,
}

/// Real-valued slow-time phase series, rad.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSignal {
    pub values: Vec<f64>,
    pub rate: f64,
    pub stage: PhaseStage,
}

impl PhaseSignal {
    pub fn new(values: Vec<f64>, rate: f64, stage: PhaseStage) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::InvalidParameter(format!("rate {rate} must be positive")));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite phase at index {i}")));
        }
        Ok(PhaseSignal {
            values,
            rate,
            stage,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Duration covered by the samples, s.
    pub fn duration(&self) -> f64 {
        self.values.len() as f64 / self.rate
    }

    pub(crate) fn with_values(&self, values: Vec<f64>, stage: PhaseStage) -> PhaseSignal {
        PhaseSignal {
            values,
            rate: self.rate,
            stage,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhaseMethod {
    #[default]
    ArctanUnwrap,
    Edacm,
}

impl std::str::FromStr for PhaseMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "unwrap" | "arctan" => Ok(PhaseMethod::ArctanUnwrap),
            "edacm" => Ok(PhaseMethod::Edacm),
            _ => Err(Error::InvalidParameter(format!("unknown phase method '{s}'"))),
        }
    }
}

impl std::str::FromStr for DcMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gd" | "gradient-descent" => Ok(DcMethod::GradientDescent),
            "algebraic" | "kasa" => Ok(DcMethod::AlgebraicFit),
            _ => Err(Error::InvalidParameter(format!("unknown DC fit '{s}'"))),
        }
    }
}

pub fn extract_phase(iq: &IqSeries, method: PhaseMethod) -> Result<PhaseSignal> {
    match method {
        PhaseMethod::ArctanUnwrap => phase_arctan_unwrap(iq),
        PhaseMethod::Edacm => phase_edacm(iq),
    }
}

fn check_nonzero(iq: &IqSeries) -> Result<()> {
    match (0..iq.len()).find(|&n| iq.i[n] == 0.0 && iq.q[n] == 0.0) {
        Some(n) => Err(Error::ZeroSample(n)),
        None => Ok(()),
    }
}

fn wrap_to_pi(d: f64) -> f64 {
    d - 2.0 * PI * (d / (2.0 * PI)).round()
}

/// Four-quadrant arctangent followed by sequential unwrapping: every step is
/// shifted by a multiple of 2π so its magnitude is at most π.
pub fn phase_arctan_unwrap(iq: &IqSeries) -> Result<PhaseSignal> {
    check_nonzero(iq)?;
    let mut out = Vec::with_capacity(iq.len());
    let mut prev_raw = iq.q[0].atan2(iq.i[0]);
    out.push(prev_raw);
    for n in 1..iq.len() {
        let raw = iq.q[n].atan2(iq.i[n]);
        let last = out[n - 1];
        out.push(last + wrap_to_pi(raw - prev_raw));
        prev_raw = raw;
    }
    PhaseSignal::new(out, iq.rate, PhaseStage::Unwrapped)
}

/// Extended differentiate-and-cross-multiply demodulation: the phase is the
/// running sum of `(I[k]ΔQ[k] − ΔI[k]Q[k]) / (I[k]² + Q[k]²)`, started from
/// the arctangent of the first sample.
pub fn phase_edacm(iq: &IqSeries) -> Result<PhaseSignal> {
    check_nonzero(iq)?;
    let mut out = Vec::with_capacity(iq.len());
    let mut acc = iq.q[0].atan2(iq.i[0]);
    out.push(acc);
    for k in 1..iq.len() {
        let (i, q) = (iq.i[k], iq.q[k]);
        let di = i - iq.i[k - 1];
        let dq = q - iq.q[k - 1];
        acc += (i * dq - di * q) / (i * i + q * q);
        out.push(acc);
    }
    PhaseSignal::new(out, iq.rate, PhaseStage::Unwrapped)
}

/// First difference; the output is one sample shorter.
pub fn phase_difference(phase: &PhaseSignal) -> Result<PhaseSignal> {
    if phase.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: phase.len(),
        });
    }
    let values = phase.values.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(phase.with_values(values, PhaseStage::Differenced))
}

/// Impulsive-noise filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Denoise {
    /// Centered sliding median over an odd window; the window shrinks
    /// symmetrically at the edges.
    Median(usize),
    /// `y[n] = α·x[n] + (1−α)·y[n−1]`, `y[0] = x[0]`.
    Ewma(f64),
    /// Trailing moving average.
    MovingAverage(usize),
    /// Trailing moving average with linear weights, newest sample heaviest.
    WeightedMovingAverage(usize),
}

impl Default for Denoise {
    fn default() -> Self {
        Denoise::Median(5)
    }
}

impl Denoise {
    /// Parses a method name with the default parameter: median window 5,
    /// EWMA α 0.3, moving-average windows 5.
    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "median" => Ok(Denoise::Median(5)),
            "ewma" => Ok(Denoise::Ewma(0.3)),
            "ma" => Ok(Denoise::MovingAverage(5)),
            "wma" => Ok(Denoise::WeightedMovingAverage(5)),
            _ => Err(Error::InvalidParameter(format!("unknown denoise method '{name}'"))),
        }
    }

    /// Same method with a different window (or α for EWMA).
    pub fn with_param(self, p: f64) -> Self {
        match self {
            Denoise::Median(_) => Denoise::Median(p as usize),
            Denoise::Ewma(_) => Denoise::Ewma(p),
            Denoise::MovingAverage(_) => Denoise::MovingAverage(p as usize),
            Denoise::WeightedMovingAverage(_) => Denoise::WeightedMovingAverage(p as usize),
        }
    }
}

fn median(buf: &mut [f64]) -> f64 {
    buf.sort_by(f64::total_cmp);
    let n = buf.len();
    if n % 2 == 1 {
        buf[n / 2]
    } else {
        0.5 * (buf[n / 2 - 1] + buf[n / 2])
    }
}

pub fn denoise_impulsive(phase: &PhaseSignal, method: Denoise) -> Result<PhaseSignal> {
    let x = &phase.values;
    let n = x.len();
    let values = match method {
        Denoise::Median(w) => {
            if w < 3 || w % 2 == 0 {
                return Err(Error::InvalidParameter(format!(
                    "median window must be odd and >= 3, got {w}"
                )));
            }
            let h = w / 2;
            let mut buf = Vec::with_capacity(w);
            (0..n)
                .map(|i| {
                    let r = h.min(i).min(n - 1 - i);
                    buf.clear();
                    buf.extend_from_slice(&x[i - r..=i + r]);
                    median(&mut buf)
                })
                .collect()
        }
        Denoise::Ewma(alpha) => {
            if !(alpha > 0.0 && alpha <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "EWMA alpha must be in (0, 1], got {alpha}"
                )));
            }
            let mut out = Vec::with_capacity(n);
            for (i, &v) in x.iter().enumerate() {
                let y = if i == 0 {
                    v
                } else {
                    alpha * v + (1.0 - alpha) * out[i - 1]
                };
                out.push(y);
            }
            out
        }
        Denoise::MovingAverage(w) | Denoise::WeightedMovingAverage(w) => {
            if w < 2 {
                return Err(Error::InvalidParameter(format!(
                    "moving-average window must be >= 2, got {w}"
                )));
            }
            let weighted = matches!(method, Denoise::WeightedMovingAverage(_));
            (0..n)
                .map(|i| {
                    let start = (i + 1).saturating_sub(w);
                    let (mut num, mut den) = (0.0, 0.0);
                    for (k, v) in x[start..=i].iter().enumerate() {
                        let wt = if weighted { (k + 1) as f64 } else { 1.0 };
                        num += wt * v;
                        den += wt;
                    }
                    num / den
                })
                .collect()
        }
    };
    Ok(phase.with_values(values, PhaseStage::Denoised))
}

/// Elementwise mean across RX channels.
pub fn fuse_rx_channels(phases: &[PhaseSignal]) -> Result<PhaseSignal> {
    let first = phases
        .first()
        .ok_or_else(|| Error::InvalidParameter("no channels to fuse".into()))?;
    for p in phases {
        if p.len() != first.len() {
            return Err(Error::LengthMismatch(format!(
                "channel lengths {} and {} differ",
                first.len(),
                p.len()
            )));
        }
        if p.rate != first.rate {
            return Err(Error::LengthMismatch(format!(
                "channel rates {} and {} differ",
                first.rate, p.rate
            )));
        }
    }
    let k = phases.len() as f64;
    let values = (0..first.len())
        .map(|n| phases.iter().map(|p| p.values[n]).sum::<f64>() / k)
        .collect();
    Ok(first.with_values(values, PhaseStage::Fused))
}
