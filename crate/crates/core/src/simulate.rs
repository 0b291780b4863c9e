//! Synthetic radar scenes with known vital-sign ground truth.
//!
//! The beat signal is generated directly at IF: every reflector at range `R`
//! contributes `A·exp(j(2π·f_b·k/f_s + 4π(R + r(t))/λ))` over fast-time index
//! `k`, where `r(t)` is the chest displacement (zero for clutter). Chest motion
//! is sampled once per frame at the midpoint of the chirp block.
//!
//! Noise is drawn from one counter-based ChaCha stream per frame, so frames
//! can be produced in any order (or in parallel) with identical results.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::{DataCube, RadarConfig};

/// Chest wall motion: respiration (with harmonics) plus a cardiac sinusoid.
#[derive(Debug, Clone, PartialEq)]
pub struct ChestModel {
    /// Respiration rate, Hz.
    pub resp_rate: f64,
    /// Respiration displacement amplitude, m.
    pub resp_amp: f64,
    /// `(k, c_k)`: harmonic index `k ≥ 2` with amplitude `c_k · resp_amp`.
    pub resp_harmonics: Vec<(u32, f64)>,
    /// Heart rate, Hz.
    pub heart_rate: f64,
    /// Cardiac displacement amplitude, m.
    pub heart_amp: f64,
    pub resp_phase: f64,
    pub heart_phase: f64,
}

impl ChestModel {
    /// Respiration and heartbeat with the default second harmonic at 0.4
    /// relative amplitude.
    pub fn new(resp_rate: f64, resp_amp: f64, heart_rate: f64, heart_amp: f64) -> Self {
        ChestModel {
            resp_rate,
            resp_amp,
            resp_harmonics: vec![(2, 0.4)],
            heart_rate,
            heart_amp,
            resp_phase: 0.0,
            heart_phase: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: String| if ok { Ok(()) } else { Err(Error::InvalidParameter(msg)) };
        check(
            (0.5e-3..=20e-3).contains(&self.resp_amp),
            format!("resp_amp {} m outside [0.5e-3, 20e-3]", self.resp_amp),
        )?;
        check(
            (0.05e-3..=1e-3).contains(&self.heart_amp),
            format!("heart_amp {} m outside [0.05e-3, 1e-3]", self.heart_amp),
        )?;
        check(
            (0.05..=0.7).contains(&self.resp_rate),
            format!("resp_rate {} Hz outside [0.05, 0.7]", self.resp_rate),
        )?;
        check(
            (0.6..=4.0).contains(&self.heart_rate),
            format!("heart_rate {} Hz outside [0.6, 4]", self.heart_rate),
        )?;
        for &(k, c) in &self.resp_harmonics {
            check(k >= 2, format!("harmonic index {k} < 2"))?;
            check(c.is_finite(), format!("harmonic {k} amplitude not finite"))?;
        }
        Ok(())
    }
}

/// Chest displacement `r(t)` in metres.
pub fn chest_displacement(chest: &ChestModel, t: f64) -> f64 {
    let w = 2.0 * PI * chest.resp_rate;
    let mut r = chest.resp_amp * (w * t + chest.resp_phase).sin();
    for &(k, c) in &chest.resp_harmonics {
        r += c * chest.resp_amp * (k as f64 * w * t).sin();
    }
    r + chest.heart_amp * (2.0 * PI * chest.heart_rate * t + chest.heart_phase).sin()
}

/// A static reflector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clutter {
    pub range: f64,
    pub reflectivity: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    /// Nominal target range `R_0`, m.
    pub target_range: f64,
    /// Target return amplitude per ADC sample (before RX gain).
    pub target_amplitude: f64,
    pub chest: ChestModel,
    pub clutter: Vec<Clutter>,
    /// Per-sample SNR relative to the target return; `f64::INFINITY` disables noise.
    pub noise_snr_db: f64,
    /// Static I/Q offset of the target's baseband signal, one per RX channel.
    /// Empty means no offset.
    pub dc_offset: Vec<Complex64>,
    /// Mean rate of impulsive phase spikes, events/s.
    pub impulse_rate: f64,
    /// Spike magnitude, rad. Sign is random per event.
    pub impulse_amp: f64,
    /// Complex gain per RX channel. Empty means unit gain on every channel.
    pub rx_gains: Vec<Complex64>,
}

impl Scene {
    /// A noiseless, clutter-free scene with a unit-amplitude target.
    pub fn new(target_range: f64, chest: ChestModel) -> Self {
        Scene {
            target_range,
            target_amplitude: 1.0,
            chest,
            clutter: Vec::new(),
            noise_snr_db: f64::INFINITY,
            dc_offset: Vec::new(),
            impulse_rate: 0.0,
            impulse_amp: 0.0,
            rx_gains: Vec::new(),
        }
    }

    pub fn validate(&self, config: &RadarConfig) -> Result<()> {
        self.chest.validate()?;
        let max = config.max_range();
        let in_range = |r: f64| r > 0.0 && r < max;
        if !in_range(self.target_range) {
            return Err(Error::InvalidParameter(format!(
                "target range {} m outside unambiguous range (0, {max:.3})",
                self.target_range
            )));
        }
        if !(self.target_amplitude.is_finite() && self.target_amplitude > 0.0) {
            return Err(Error::InvalidParameter("target amplitude must be positive".into()));
        }
        for (i, c) in self.clutter.iter().enumerate() {
            if !in_range(c.range) {
                return Err(Error::InvalidParameter(format!(
                    "clutter range {} m outside unambiguous range",
                    c.range
                )));
            }
            if self.clutter[..i].iter().any(|o| o.range == c.range) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate clutter range {} m",
                    c.range
                )));
            }
        }
        for (name, v) in [("dc_offset", self.dc_offset.len()), ("rx_gains", self.rx_gains.len())] {
            if v != 0 && v != config.rx_count {
                return Err(Error::InvalidParameter(format!(
                    "{name} has {v} entries for {} RX channels",
                    config.rx_count
                )));
            }
        }
        if self.noise_snr_db.is_nan() || self.impulse_rate < 0.0 || !self.impulse_amp.is_finite() {
            return Err(Error::InvalidParameter("invalid noise or impulse parameters".into()));
        }
        Ok(())
    }

    fn rx_gain(&self, rx: usize) -> Complex64 {
        self.rx_gains.get(rx).copied().unwrap_or(Complex64::new(1.0, 0.0))
    }

    fn dc(&self, rx: usize) -> Complex64 {
        self.dc_offset.get(rx).copied().unwrap_or_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthRow {
    pub frame: usize,
    pub t_s: f64,
    pub hr_bpm: f64,
    pub rr_rpm: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub rows: Vec<TruthRow>,
}

impl GroundTruth {
    /// Mean reference rates `(hr_bpm, rr_rpm)` over frames whose time falls in
    /// `[t_start, t_start + duration)`.
    pub fn window_mean(&self, t_start: f64, duration: f64) -> Option<(f64, f64)> {
        let eps = 1e-9;
        let rows: Vec<_> = self
            .rows
            .iter()
            .filter(|r| r.t_s >= t_start - eps && r.t_s < t_start + duration - eps)
            .collect();
        if rows.is_empty() {
            return None;
        }
        let n = rows.len() as f64;
        Some((
            rows.iter().map(|r| r.hr_bpm).sum::<f64>() / n,
            rows.iter().map(|r| r.rr_rpm).sum::<f64>() / n,
        ))
    }
}

pub fn write_truth_csv(truth: &GroundTruth, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["frame", "t_s", "hr_bpm", "rr_rpm"])?;
    for r in &truth.rows {
        w.write_record([
            r.frame.to_string(),
            format!("{:.6}", r.t_s),
            format!("{:.4}", r.hr_bpm),
            format!("{:.4}", r.rr_rpm),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_truth_csv(path: impl AsRef<Path>) -> Result<GroundTruth> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(BufReader::new(file));
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::InvalidParameter(format!("bad truth row {rec:?}")))
        };
        rows.push(TruthRow {
            frame: num(0)? as usize,
            t_s: num(1)?,
            hr_bpm: num(2)?,
            rr_rpm: num(3)?,
        });
    }
    Ok(GroundTruth { rows })
}

/// Produces frames of a scene one at a time.
#[derive(Debug, Clone)]
pub struct FrameSynthesizer {
    scene: Scene,
    config: RadarConfig,
    seed: u64,
    noise_sigma: f64,
    /// Per-frame phase spike, rad.
    spikes: Vec<f64>,
}

impl FrameSynthesizer {
    pub fn new(scene: &Scene, config: &RadarConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        scene.validate(config)?;
        let noise_sigma = if scene.noise_snr_db.is_finite() {
            scene.target_amplitude / 10f64.powf(scene.noise_snr_db / 20.0)
        } else {
            0.0
        };

        let mut spikes = vec![0.0; config.frame_count];
        if scene.impulse_rate > 0.0 && scene.impulse_amp != 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(0);
            let gap = Exp::new(scene.impulse_rate)
                .map_err(|e| Error::InvalidParameter(e.to_string()))?;
            let duration = config.frame_count as f64 * config.frame_period;
            let mut t: f64 = gap.sample(&mut rng);
            while t < duration {
                let frame = ((t / config.frame_period) as usize).min(config.frame_count - 1);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                spikes[frame] += sign * scene.impulse_amp;
                t += gap.sample(&mut rng);
            }
        }

        Ok(FrameSynthesizer {
            scene: scene.clone(),
            config: config.clone(),
            seed,
            noise_sigma,
            spikes,
        })
    }

    pub fn config(&self) -> &RadarConfig {
        &self.config
    }

    /// Sampling instant of a frame: frame start plus half the chirp block.
    pub fn frame_time(&self, frame: usize) -> f64 {
        let c = &self.config;
        frame as f64 * c.frame_period
            + 0.5 * c.chirps_per_frame as f64 * (c.idle_time + c.ramp_end_time)
    }

    /// Noise-free target phase `4π(R_0 + r(t))/λ` at a frame, without spikes.
    pub fn target_phase(&self, frame: usize) -> f64 {
        let r = chest_displacement(&self.scene.chest, self.frame_time(frame));
        4.0 * PI * (self.scene.target_range + r) / self.config.wavelength()
    }

    /// Phase spike injected at a frame, rad.
    pub fn spike(&self, frame: usize) -> f64 {
        self.spikes[frame]
    }

    pub fn ground_truth(&self) -> GroundTruth {
        let chest = &self.scene.chest;
        GroundTruth {
            rows: (0..self.config.frame_count)
                .map(|f| TruthRow {
                    frame: f,
                    t_s: f as f64 * self.config.frame_period,
                    hr_bpm: chest.heart_rate * 60.0,
                    rr_rpm: chest.resp_rate * 60.0,
                })
                .collect(),
        }
    }

    /// Noise-free fast-time chirp for each RX channel, `[rx][sample]`.
    fn clean_chirps(&self, frame: usize) -> Vec<Complex64> {
        let c = &self.config;
        let n = c.adc_samples;
        let lambda = c.wavelength();
        let tone = |range: f64| -> Vec<Complex64> {
            let w = 2.0 * PI * c.beat_frequency(range) / c.sample_rate;
            (0..n).map(|k| Complex64::from_polar(1.0, w * k as f64)).collect()
        };
        let target_tone = tone(self.scene.target_range);
        let phase = self.target_phase(frame) + self.spikes[frame];
        let target = Complex64::from_polar(self.scene.target_amplitude, phase);

        let mut static_part = vec![Complex64::new(0.0, 0.0); n];
        for cl in &self.scene.clutter {
            let rot = cl.reflectivity * Complex64::from_polar(1.0, 4.0 * PI * cl.range / lambda);
            for (s, t) in static_part.iter_mut().zip(tone(cl.range)) {
                *s += rot * t;
            }
        }

        let mut out = Vec::with_capacity(n * c.rx_count);
        for rx in 0..c.rx_count {
            let g = self.scene.rx_gain(rx);
            let dc = self.scene.dc(rx);
            for k in 0..n {
                out.push((g * target + dc) * target_tone[k] + g * static_part[k]);
            }
        }
        out
    }

    /// Writes one frame into `block` (`[rx][chirp][sample]`).
    pub fn fill_frame(&self, frame: usize, block: &mut [Complex64]) {
        let c = &self.config;
        let n = c.adc_samples;
        let clean = self.clean_chirps(frame);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(frame as u64 + 1);
        let s = self.noise_sigma * std::f64::consts::FRAC_1_SQRT_2;
        for rx in 0..c.rx_count {
            let base = &clean[rx * n..(rx + 1) * n];
            for chirp in 0..c.chirps_per_frame {
                let dst = &mut block[(rx * c.chirps_per_frame + chirp) * n..][..n];
                if s > 0.0 {
                    for (d, b) in dst.iter_mut().zip(base) {
                        let re: f64 = rng.sample(StandardNormal);
                        let im: f64 = rng.sample(StandardNormal);
                        *d = b + Complex64::new(s * re, s * im);
                    }
                } else {
                    dst.copy_from_slice(base);
                }
            }
        }
    }

    pub fn frame(&self, frame: usize) -> Vec<Complex64> {
        let mut block = vec![Complex64::new(0.0, 0.0); self.config.samples_per_frame()];
        self.fill_frame(frame, &mut block);
        block
    }

    pub fn cube(&self) -> DataCube {
        let per = self.config.samples_per_frame();
        let mut samples = vec![Complex64::new(0.0, 0.0); self.config.sample_count()];
        samples
            .par_chunks_mut(per)
            .enumerate()
            .for_each(|(f, block)| self.fill_frame(f, block));
        DataCube::new(self.config.clone(), samples).expect("synthesized cube matches config")
    }

    /// Upper bound on the magnitude of any sample component, used to pick an
    /// int16 scale when writing raw files.
    pub fn peak_estimate(&self) -> f64 {
        let gain = (0..self.config.rx_count)
            .map(|rx| self.scene.rx_gain(rx).norm())
            .fold(0.0, f64::max);
        let dc = (0..self.config.rx_count)
            .map(|rx| self.scene.dc(rx).norm())
            .fold(0.0, f64::max);
        let clutter: f64 = self.scene.clutter.iter().map(|c| c.reflectivity.norm()).sum();
        gain * (self.scene.target_amplitude + clutter) + dc + 6.0 * self.noise_sigma
    }
}

pub fn synthesize_cube(
    scene: &Scene,
    config: &RadarConfig,
    seed: u64,
) -> Result<(DataCube, GroundTruth)> {
    let synth = FrameSynthesizer::new(scene, config, seed)?;
    Ok((synth.cube(), synth.ground_truth()))
}
