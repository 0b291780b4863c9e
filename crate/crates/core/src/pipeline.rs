//! End-to-end processing: per-frame range profiles, windowed phase chain,
//! rate estimation, sliding-window streaming and evaluation metrics.

use std::collections::VecDeque;
use std::sync::Arc;

use log::warn;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::estimators::{
    ctf_estimate, improved_fft, music_estimate, prony_estimate, CtfMode, CtfParams, MusicParams,
    PronyParams,
};
use crate::filters::{apply_filter, design_bandpass, BandKind, BandSpec, FilterFamily, IirCoefficients};
use crate::ingest::{DataCube, EstimateRecord, Method, RadarConfig};
use crate::phasechain::{
    denoise_impulsive, estimate_dc_offset, extract_phase, fuse_rx_channels, phase_difference,
    remove_dc_offset, DcMethod, Denoise, PhaseMethod, PhaseSignal,
};
use crate::rangeproc::{extract_bin_signal, remove_clutter, select_target, RangeMap, RangeWindow};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    /// Frames per window (W).
    pub window_frames: usize,
    /// Frames between consecutive window starts (SW).
    pub slide_frames: usize,
}

impl WindowSpec {
    pub fn new(window_frames: usize, slide_frames: usize) -> Result<Self> {
        let spec = WindowSpec {
            window_frames,
            slide_frames,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_frames < 100 {
            return Err(Error::InvalidParameter(format!(
                "window of {} frames is shorter than 100",
                self.window_frames
            )));
        }
        if self.slide_frames == 0 || self.slide_frames > self.window_frames {
            return Err(Error::InvalidParameter(format!(
                "slide {} outside 1..={}",
                self.slide_frames, self.window_frames
            )));
        }
        Ok(())
    }

    /// Number of complete windows over `frames` frames.
    pub fn window_count(&self, frames: usize) -> usize {
        if frames < self.window_frames {
            0
        } else {
            (frames - self.window_frames) / self.slide_frames + 1
        }
    }
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            window_frames: 600,
            slide_frames: 600,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    pub methods: Vec<Method>,
    pub window: WindowSpec,
    /// Chirps averaged per frame; 0 averages all of them.
    pub chirp_avg: usize,
    pub range_window: RangeWindow,
    pub dc_method: DcMethod,
    pub phase_method: PhaseMethod,
    pub denoise: Denoise,
    pub filter_family: FilterFamily,
    pub hr_band: (f64, f64),
    pub rr_band: (f64, f64),
    pub zero_phase: bool,
    pub pad_factor: usize,
    pub ctf_threshold: f64,
    pub music_lag: usize,
    pub music_grid_step: f64,
    pub music_forward_backward: bool,
    pub prony_rr_order: usize,
    pub prony_hr_order: usize,
    pub prony_damping_max: f64,
    /// Prony prediction stride; 0 derives it from each band.
    pub prony_stride: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            methods: Method::ALL.to_vec(),
            window: WindowSpec::default(),
            chirp_avg: 0,
            range_window: RangeWindow::None,
            dc_method: DcMethod::AlgebraicFit,
            phase_method: PhaseMethod::ArctanUnwrap,
            denoise: Denoise::default(),
            filter_family: FilterFamily::Butterworth,
            hr_band: crate::filters::HEART_BAND,
            rr_band: crate::filters::RESPIRATION_BAND,
            zero_phase: true,
            pad_factor: 8,
            ctf_threshold: 0.5,
            music_lag: 100,
            music_grid_step: 0.001,
            music_forward_backward: false,
            prony_rr_order: 6,
            prony_hr_order: 8,
            prony_damping_max: 0.05,
            prony_stride: 0,
        }
    }
}

impl PipelineOptions {
    pub fn hr_spec(&self) -> BandSpec {
        BandSpec::new(BandKind::Heart, self.hr_band.0, self.hr_band.1, self.filter_family)
    }

    pub fn rr_spec(&self) -> BandSpec {
        BandSpec::new(BandKind::Respiration, self.rr_band.0, self.rr_band.1, self.filter_family)
    }

    fn music(&self, heart: bool) -> MusicParams {
        let base = if heart {
            MusicParams::heart()
        } else {
            MusicParams::respiration()
        };
        MusicParams {
            lag_dim: self.music_lag,
            grid_step: self.music_grid_step,
            forward_backward: self.music_forward_backward,
            ..base
        }
    }

    fn prony(&self, heart: bool) -> PronyParams {
        PronyParams {
            model_order: if heart {
                self.prony_hr_order
            } else {
                self.prony_rr_order
            },
            damping_max: self.prony_damping_max,
            stride: self.prony_stride,
        }
    }
}

/// Intermediate signals of one window, kept for inspection.
#[derive(Debug, Clone)]
pub struct WindowStages {
    pub target_bin: usize,
    pub fused: PhaseSignal,
    pub rr_signal: PhaseSignal,
    pub hr_signal: PhaseSignal,
}

/// Turns raw frames into per-frame range profiles.
pub struct FrameProcessor {
    config: RadarConfig,
    chirps: usize,
    taper: Option<Vec<f64>>,
    fft: Arc<dyn Fft<f64>>,
}

impl FrameProcessor {
    pub fn new(config: &RadarConfig, options: &PipelineOptions) -> Result<Self> {
        config.validate()?;
        let chirps = match options.chirp_avg {
            0 => config.chirps_per_frame,
            n if n <= config.chirps_per_frame => n,
            n => {
                return Err(Error::InvalidParameter(format!(
                    "cannot average {n} chirps, frames hold {}",
                    config.chirps_per_frame
                )))
            }
        };
        let n = config.adc_samples;
        let taper = match options.range_window {
            RangeWindow::None => None,
            RangeWindow::Hann => Some(
                (0..n)
                    .map(|k| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos())
                    .collect(),
            ),
        };
        Ok(FrameProcessor {
            config: config.clone(),
            chirps,
            taper,
            fft: FftPlanner::new().plan_fft_forward(n),
        })
    }

    /// Range profiles of one frame (`[rx][chirp][sample]` input), `[rx][bin]` output.
    pub fn profiles(&self, frame: &[Complex64]) -> Result<Vec<Vec<Complex64>>> {
        let c = &self.config;
        if frame.len() != c.samples_per_frame() {
            return Err(Error::LengthMismatch(format!(
                "frame has {} samples, expected {}",
                frame.len(),
                c.samples_per_frame()
            )));
        }
        let n = c.adc_samples;
        let scale = 1.0 / self.chirps as f64;
        (0..c.rx_count)
            .map(|rx| {
                let mut acc = vec![Complex64::new(0.0, 0.0); n];
                for chirp in 0..self.chirps {
                    let start = (rx * c.chirps_per_frame + chirp) * n;
                    for (a, s) in acc.iter_mut().zip(&frame[start..start + n]) {
                        *a += s;
                    }
                }
                for (k, a) in acc.iter_mut().enumerate() {
                    *a *= scale;
                    if let Some(w) = &self.taper {
                        *a *= w[k];
                    }
                }
                self.fft.process(&mut acc);
                Ok(acc)
            })
            .collect()
    }

    /// Range map of every frame of a cube.
    pub fn range_map(&self, cube: &DataCube) -> Result<RangeMap> {
        let frames: Vec<Vec<Vec<Complex64>>> = (0..cube.config().frame_count)
            .into_par_iter()
            .map(|f| self.profiles(cube.frame(f)))
            .collect::<Result<_>>()?;
        self.map_from_profiles(frames.iter())
    }

    /// Range map built frame by frame, so the raw frames never need to be
    /// held in memory together.
    pub fn map_from_frames<I, B>(&self, frames: I) -> Result<RangeMap>
    where
        I: IntoIterator<Item = Result<B>>,
        B: AsRef<[Complex64]>,
    {
        let mut channels = vec![Vec::new(); self.config.rx_count];
        for frame in frames {
            for (ch, p) in channels.iter_mut().zip(self.profiles(frame?.as_ref())?) {
                ch.extend_from_slice(&p);
            }
        }
        RangeMap::from_channels(
            channels,
            self.config.adc_samples,
            self.config.bin_resolution(),
            self.config.frame_period,
        )
    }

    fn map_from_profiles<'a>(
        &self,
        frames: impl Iterator<Item = &'a Vec<Vec<Complex64>>>,
    ) -> Result<RangeMap> {
        let mut channels = vec![Vec::new(); self.config.rx_count];
        for frame in frames {
            for (ch, p) in channels.iter_mut().zip(frame) {
                ch.extend_from_slice(p);
            }
        }
        RangeMap::from_channels(
            channels,
            self.config.adc_samples,
            self.config.bin_resolution(),
            self.config.frame_period,
        )
    }
}

struct Designs {
    hr: IirCoefficients,
    rr: IirCoefficients,
}

fn designs(options: &PipelineOptions, rate: f64) -> Result<Designs> {
    Ok(Designs {
        hr: design_bandpass(&options.hr_spec(), rate)?,
        rr: design_bandpass(&options.rr_spec(), rate)?,
    })
}

/// Phase chain for one window of range profiles.
pub fn window_stages(map: &RangeMap, options: &PipelineOptions, window: usize) -> Result<WindowStages> {
    let rate = 1.0 / map.frame_period;
    let d = designs(options, rate).map_err(|e| e.at_stage("design_filters", window))?;
    window_stages_with(map, options, &d, window)
}

fn window_stages_with(
    map: &RangeMap,
    options: &PipelineOptions,
    d: &Designs,
    window: usize,
) -> Result<WindowStages> {
    let clean = remove_clutter(map);
    let sel = select_target(&clean).map_err(|e| e.at_stage("select_target", window))?;
    let channels = extract_bin_signal(&clean, &sel).map_err(|e| e.at_stage("extract_bin_signal", window))?;
    let phases = channels
        .iter()
        .map(|iq| {
            let dc = estimate_dc_offset(iq, options.dc_method).map_err(|e| e.at_stage("dc_offset", window))?;
            let centered = remove_dc_offset(iq, &dc);
            let phase = extract_phase(&centered, options.phase_method)
                .map_err(|e| e.at_stage("phase_extraction", window))?;
            let diff = phase_difference(&phase).map_err(|e| e.at_stage("phase_difference", window))?;
            denoise_impulsive(&diff, options.denoise).map_err(|e| e.at_stage("denoise", window))
        })
        .collect::<Result<Vec<_>>>()?;
    let fused = fuse_rx_channels(&phases).map_err(|e| e.at_stage("fuse", window))?;
    let rr_signal = apply_filter(&d.rr, &fused, options.zero_phase).map_err(|e| e.at_stage("bandpass_rr", window))?;
    let hr_signal = apply_filter(&d.hr, &fused, options.zero_phase).map_err(|e| e.at_stage("bandpass_hr", window))?;
    Ok(WindowStages {
        target_bin: sel.primary_bin,
        fused,
        rr_signal,
        hr_signal,
    })
}

fn keep(method: Method, what: &str, window: usize, r: Result<f64>) -> Option<f64> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            warn!("window {window}: {method} {what} estimate unavailable: {e}");
            None
        }
    }
}

fn estimate_window(
    stages: &WindowStages,
    options: &PipelineOptions,
    window: usize,
    t_start: f64,
) -> Vec<EstimateRecord> {
    let hr_band = options.hr_spec();
    let rr_band = options.rr_spec();
    let rate = stages.fused.rate;
    let (rr_sig, hr_sig) = (&stages.rr_signal, &stages.hr_signal);

    let rr_fft = keep(
        Method::Fft,
        "RR",
        window,
        improved_fft(rr_sig, &rr_band, options.pad_factor, None).map(|(f, _)| f),
    );

    options
        .methods
        .iter()
        .map(|&method| {
            let (rr, hr) = match method {
                Method::Fft => {
                    let notch = rr_fft.map(|f| 2.0 * f).filter(|f| *f < rate / 2.0);
                    let hr = improved_fft(hr_sig, &hr_band, options.pad_factor, notch).map(|(f, _)| f);
                    (rr_fft, keep(method, "HR", window, hr))
                }
                Method::CtfHistogram | Method::CtfKde => {
                    let mode = if method == Method::CtfHistogram {
                        CtfMode::Histogram
                    } else {
                        CtfMode::Kde
                    };
                    let params = CtfParams {
                        threshold_multiplier: options.ctf_threshold,
                        pad_factor: options.pad_factor,
                        ..CtfParams::new(hr_band)
                    };
                    let hr = ctf_estimate(hr_sig, mode, &params).map(|(bpm, _)| bpm / 60.0);
                    (None, keep(method, "HR", window, hr))
                }
                Method::Music => {
                    let rr = music_estimate(rr_sig, &rr_band, &options.music(false), None).map(|(f, _)| f);
                    let rr = keep(method, "RR", window, rr);
                    let hint = rr.or(rr_fft);
                    let hr = music_estimate(hr_sig, &hr_band, &options.music(true), hint).map(|(f, _)| f);
                    (rr, keep(method, "HR", window, hr))
                }
                Method::Prony => {
                    let rr = prony_estimate(rr_sig, &rr_band, &options.prony(false), None).map(|(f, _)| f);
                    let rr = keep(method, "RR", window, rr);
                    let hint = rr.or(rr_fft);
                    let hr = prony_estimate(hr_sig, &hr_band, &options.prony(true), hint).map(|(f, _)| f);
                    (rr, keep(method, "HR", window, hr))
                }
            };
            EstimateRecord {
                window_index: window,
                t_start,
                method,
                hr_bpm: hr.map(|f| f * 60.0),
                rr_rpm: rr.map(|f| f * 60.0),
            }
        })
        .collect()
}

/// Phase chain and all configured estimators on one window of profiles.
pub fn process_window(
    map: &RangeMap,
    options: &PipelineOptions,
    window: usize,
    t_start: f64,
) -> Result<Vec<EstimateRecord>> {
    let stages = window_stages(map, options, window)?;
    Ok(estimate_window(&stages, options, window, t_start))
}

fn check_options(options: &PipelineOptions) -> Result<()> {
    options.window.validate()?;
    if options.methods.is_empty() {
        return Err(Error::InvalidParameter("no estimation method selected".into()));
    }
    Ok(())
}

/// Runs every window of a precomputed range map, in parallel, preserving
/// window order.
pub fn run_on_map(map: &RangeMap, options: &PipelineOptions) -> Result<Vec<EstimateRecord>> {
    check_options(options)?;
    let spec = options.window;
    let count = spec.window_count(map.frames());
    if count == 0 {
        return Err(Error::TooShort {
            needed: spec.window_frames,
            got: map.frames(),
        });
    }
    let d = designs(options, 1.0 / map.frame_period).map_err(|e| e.at_stage("design_filters", 0))?;
    let per_window: Vec<Vec<EstimateRecord>> = (0..count)
        .into_par_iter()
        .map(|w| {
            let start = w * spec.slide_frames;
            let slice = map.window(start, spec.window_frames)?;
            let stages = window_stages_with(&slice, options, &d, w)?;
            Ok(estimate_window(&stages, options, w, start as f64 * map.frame_period))
        })
        .collect::<Result<_>>()?;
    Ok(per_window.into_iter().flatten().collect())
}

/// Batch processing of a whole cube: one record per (window, method).
pub fn run_pipeline(cube: &DataCube, options: &PipelineOptions) -> Result<Vec<EstimateRecord>> {
    check_options(options)?;
    let fp = FrameProcessor::new(cube.config(), options)?;
    run_on_map(&fp.range_map(cube)?, options)
}

/// Sliding-window processor fed one frame at a time. Emits the records of a
/// window once `W` frames have arrived and then every `SW` frames.
pub struct StreamProcessor {
    frames: FrameProcessor,
    options: PipelineOptions,
    designs: Designs,
    buffer: VecDeque<Vec<Vec<Complex64>>>,
    received: usize,
    next_window: usize,
}

impl StreamProcessor {
    pub fn new(config: &RadarConfig, options: &PipelineOptions) -> Result<Self> {
        check_options(options)?;
        Ok(StreamProcessor {
            frames: FrameProcessor::new(config, options)?,
            designs: designs(options, config.slow_time_rate())?,
            options: options.clone(),
            buffer: VecDeque::with_capacity(options.window.window_frames),
            received: 0,
            next_window: 0,
        })
    }

    pub fn frames_received(&self) -> usize {
        self.received
    }

    pub fn push_frame(&mut self, frame: &[Complex64]) -> Result<Option<Vec<EstimateRecord>>> {
        let profiles = self.frames.profiles(frame)?;
        let spec = self.options.window;
        if self.buffer.len() == spec.window_frames {
            self.buffer.pop_front();
        }
        self.buffer.push_back(profiles);
        self.received += 1;

        let start = self.next_window * spec.slide_frames;
        if self.received != start + spec.window_frames {
            return Ok(None);
        }
        let map = self.frames.map_from_profiles(self.buffer.iter())?;
        let w = self.next_window;
        self.next_window += 1;
        let stages = window_stages_with(&map, &self.options, &self.designs, w)?;
        let t_start = start as f64 * self.frames.config.frame_period;
        Ok(Some(estimate_window(&stages, &self.options, w, t_start)))
    }
}

/// Streams frames from `source` through a [`StreamProcessor`], handing each
/// window's records to `sink` in order. Returns the number of windows.
pub fn stream_windows<I, F>(
    source: I,
    config: &RadarConfig,
    options: &PipelineOptions,
    mut sink: F,
) -> Result<usize>
where
    I: IntoIterator<Item = Result<Vec<Complex64>>>,
    F: FnMut(Vec<EstimateRecord>) -> Result<()>,
{
    let mut sp = StreamProcessor::new(config, options)?;
    let mut windows = 0;
    for frame in source {
        if let Some(records) = sp.push_frame(&frame?)? {
            sink(records)?;
            windows += 1;
        }
    }
    if windows == 0 {
        return Err(Error::TooShort {
            needed: options.window.window_frames,
            got: sp.frames_received(),
        });
    }
    Ok(windows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSummary {
    pub mae: f64,
    pub rmse: f64,
    pub n: usize,
    /// Mean of `estimate − reference`.
    pub mean_bias: f64,
    pub loa_low: f64,
    pub loa_high: f64,
}

/// Error metrics and Bland–Altman limits of agreement (bias ± 1.96σ,
/// population σ of the differences).
pub fn evaluate(estimates: &[f64], references: &[f64]) -> Result<EvalSummary> {
    if estimates.len() != references.len() {
        return Err(Error::LengthMismatch(format!(
            "{} estimates vs {} references",
            estimates.len(),
            references.len()
        )));
    }
    if estimates.is_empty() {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    let n = estimates.len() as f64;
    let diffs: Vec<f64> = estimates.iter().zip(references).map(|(e, r)| e - r).collect();
    let mae = diffs.iter().map(|d| d.abs()).sum::<f64>() / n;
    let rmse = (diffs.iter().map(|d| d * d).sum::<f64>() / n).sqrt();
    let mean_bias = diffs.iter().sum::<f64>() / n;
    let sd = (diffs.iter().map(|d| (d - mean_bias).powi(2)).sum::<f64>() / n).sqrt();
    Ok(EvalSummary {
        mae,
        rmse,
        n: estimates.len(),
        mean_bias,
        loa_low: mean_bias - 1.96 * sd,
        loa_high: mean_bias + 1.96 * sd,
    })
}
