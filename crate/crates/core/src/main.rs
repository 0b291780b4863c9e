use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::info;
use num_complex::Complex64;

use fmcw_vitals::estimators::{magnitude_spectrum, music_spectrum};
use fmcw_vitals::filters::FilterFamily;
use fmcw_vitals::ingest::{
    encode_frame, load_config, read_estimates_csv, write_estimates, ChannelOrder, EstimateRecord,
    FrameReader, IqLayout, IqOrder, Method, RadarConfig,
};
use fmcw_vitals::phasechain::{DcMethod, Denoise, PhaseMethod};
use fmcw_vitals::pipeline::{
    evaluate, stream_windows, window_stages, EvalSummary, FrameProcessor, PipelineOptions,
    StreamProcessor, WindowSpec,
};
use fmcw_vitals::rangeproc::{write_range_map_csv, RangeWindow};
use fmcw_vitals::simulate::{read_truth_csv, write_truth_csv, ChestModel, Clutter, FrameSynthesizer, Scene};
use fmcw_vitals::{svg, Error, Result};

#[derive(Parser)]
#[command(name = "fmcw-vitals", version, about = "FMCW radar heart-rate and respiration-rate extraction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a radar scene: raw cube, config and ground truth
    Simulate(SimulateArgs),
    /// Batch-process a raw cube into per-window estimates
    Process(ProcessArgs),
    /// Process a raw cube frame by frame with sliding windows
    Stream(ProcessArgs),
    /// Compare estimates with ground truth
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Respiration rate, breaths/min
    #[arg(long, default_value_t = 15.0)]
    rr: f64,
    /// Heart rate, beats/min
    #[arg(long, default_value_t = 75.0)]
    hr: f64,
    /// Target range, m
    #[arg(long, default_value_t = 0.9)]
    range: f64,
    /// Per-sample SNR, dB
    #[arg(long, default_value_t = 10.0)]
    snr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory
    #[arg(short, long)]
    output: PathBuf,
    /// Number of frames (default from the radar configuration)
    #[arg(long)]
    frames: Option<usize>,
    /// Chirps per frame (default from the radar configuration)
    #[arg(long)]
    chirps: Option<usize>,
    /// Radar configuration file (default: built-in AWR1642 profile)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Respiration displacement amplitude, mm
    #[arg(long, default_value_t = 3.0)]
    resp_amp: f64,
    /// Cardiac displacement amplitude, mm
    #[arg(long, default_value_t = 0.3)]
    heart_amp: f64,
    /// Relative amplitude of the respiration second harmonic
    #[arg(long, default_value_t = 0.4)]
    harmonic: f64,
    /// Static reflector range, m (repeatable)
    #[arg(long = "clutter")]
    clutter: Vec<f64>,
    /// I/Q DC offset magnitude relative to the target amplitude
    #[arg(long, default_value_t = 0.1)]
    dc: f64,
    /// Impulsive phase spikes per second
    #[arg(long, default_value_t = 0.0)]
    impulse_rate: f64,
    /// Phase spike magnitude, rad
    #[arg(long, default_value_t = 0.5)]
    impulse_amp: f64,
}

#[derive(Args)]
struct LayoutArgs {
    /// Component order within each I/Q pair
    #[arg(long, default_value = "iq", value_parser = ["iq", "qi"])]
    iq_order: String,
    /// RX channel nesting within each chirp
    #[arg(long, default_value = "channel-major", value_parser = ["channel-major", "interleaved"])]
    channel_order: String,
}

impl LayoutArgs {
    fn layout(&self) -> IqLayout {
        IqLayout {
            iq_order: if self.iq_order == "qi" {
                IqOrder::QFirst
            } else {
                IqOrder::IFirst
            },
            channel_order: if self.channel_order == "interleaved" {
                ChannelOrder::SampleInterleaved
            } else {
                ChannelOrder::ChannelMajor
            },
        }
    }
}

fn parse_band(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s
        .split_once([',', ':'])
        .ok_or_else(|| format!("expected LOW,HIGH in Hz, got '{s}'"))?;
    let lo = a.trim().parse::<f64>().map_err(|e| e.to_string())?;
    let hi = b.trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok((lo, hi))
}

#[derive(Args)]
struct ProcessArgs {
    /// Raw cube file
    cube: PathBuf,
    /// Radar configuration (default: config.toml next to the cube)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Estimates CSV (default: estimates.csv next to the cube)
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    layout: LayoutArgs,
    /// Estimation method (repeatable; default all)
    #[arg(long = "method", value_parser = clap::value_parser!(Method))]
    methods: Vec<Method>,
    /// Window length W, frames
    #[arg(long, default_value_t = 600)]
    window_frames: usize,
    /// Window slide SW, frames
    #[arg(long)]
    slide_frames: Option<usize>,
    /// Chirps averaged per frame (0 = all)
    #[arg(long, default_value_t = 0)]
    n_avg: usize,
    /// Fast-time window before the range FFT
    #[arg(long, default_value = "none", value_parser = ["none", "hann"])]
    window: String,
    #[arg(long, default_value = "unwrap", value_parser = clap::value_parser!(PhaseMethod))]
    phase_method: PhaseMethod,
    #[arg(long, default_value = "median", value_parser = ["median", "ewma", "ma", "wma"])]
    denoise: String,
    /// Denoise window length (median/ma/wma) or alpha (ewma)
    #[arg(long)]
    denoise_param: Option<f64>,
    #[arg(long, default_value = "algebraic", value_parser = clap::value_parser!(DcMethod))]
    dc_fit: DcMethod,
    #[arg(long, default_value = "butterworth", value_parser = clap::value_parser!(FilterFamily))]
    filter_family: FilterFamily,
    /// Heart-rate band LOW,HIGH in Hz
    #[arg(long, value_parser = parse_band)]
    hr_band: Option<(f64, f64)>,
    /// Respiration band LOW,HIGH in Hz
    #[arg(long, value_parser = parse_band)]
    rr_band: Option<(f64, f64)>,
    /// MUSIC lag dimension
    #[arg(long, default_value_t = 100)]
    music_order: usize,
    /// Forward-backward averaging of the MUSIC covariance
    #[arg(long)]
    music_fb: bool,
    /// Prony model order for heart rate
    #[arg(long, default_value_t = 8)]
    prony_order: usize,
    /// Prony model order for respiration rate
    #[arg(long, default_value_t = 6)]
    prony_rr_order: usize,
    /// Prony prediction stride in samples (0 = derived from each band)
    #[arg(long, default_value_t = 0)]
    prony_stride: usize,
    /// FFT zero-padding factor
    #[arg(long, default_value_t = 8)]
    pad_factor: usize,
    /// Single forward filter pass instead of zero-phase filtering
    #[arg(long)]
    causal: bool,
    /// Write per-window stage signals and spectra into this directory
    #[arg(long)]
    dump_stages: Option<PathBuf>,
    /// Write range-map magnitudes of the first window to this CSV
    #[arg(long)]
    dump_range_map: Option<PathBuf>,
}

impl ProcessArgs {
    fn options(&self, stream: bool) -> Result<PipelineOptions> {
        let mut denoise = Denoise::from_name(&self.denoise)?;
        if let Some(p) = self.denoise_param {
            denoise = denoise.with_param(p);
        }
        let defaults = PipelineOptions::default();
        let slide = self
            .slide_frames
            .unwrap_or(if stream { 10.min(self.window_frames) } else { self.window_frames });
        Ok(PipelineOptions {
            methods: if self.methods.is_empty() {
                Method::ALL.to_vec()
            } else {
                self.methods.clone()
            },
            window: WindowSpec::new(self.window_frames, slide)?,
            chirp_avg: self.n_avg,
            range_window: if self.window == "hann" {
                RangeWindow::Hann
            } else {
                RangeWindow::None
            },
            dc_method: self.dc_fit,
            phase_method: self.phase_method,
            denoise,
            filter_family: self.filter_family,
            hr_band: self.hr_band.unwrap_or(defaults.hr_band),
            rr_band: self.rr_band.unwrap_or(defaults.rr_band),
            zero_phase: !self.causal,
            pad_factor: self.pad_factor,
            music_lag: self.music_order,
            prony_hr_order: self.prony_order,
            prony_rr_order: self.prony_rr_order,
            prony_stride: self.prony_stride,
            music_forward_backward: self.music_fb,
            ..defaults
        })
    }

    fn cube_dir(&self) -> PathBuf {
        self.cube
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."))
    }

    fn config(&self) -> Result<RadarConfig> {
        let path = self
            .config
            .clone()
            .unwrap_or_else(|| self.cube_dir().join("config.toml"));
        load_config(path)
    }

    fn output(&self) -> PathBuf {
        self.output
            .clone()
            .unwrap_or_else(|| self.cube_dir().join("estimates.csv"))
    }
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    estimates: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Window length used to produce the estimates, frames
    #[arg(long, default_value_t = 600)]
    window_frames: usize,
    /// Summary CSV (method,metric,value); printed to stdout when absent
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// SVG scatter and Bland-Altman plot of heart-rate estimates
    #[arg(long)]
    plot: Option<PathBuf>,
    /// Method shown in the plot (default: first method in the estimates)
    #[arg(long, value_parser = clap::value_parser!(Method))]
    plot_method: Option<Method>,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let base = match &args.config {
        Some(p) => load_config(p)?,
        None => RadarConfig::awr1642(),
    };
    let config = RadarConfig {
        frame_count: args.frames.unwrap_or(base.frame_count),
        chirps_per_frame: args.chirps.unwrap_or(base.chirps_per_frame),
        ..base
    };
    config.validate()?;
    let mut chest = ChestModel::new(args.rr / 60.0, args.resp_amp * 1e-3, args.hr / 60.0, args.heart_amp * 1e-3);
    chest.resp_harmonics = if args.harmonic > 0.0 {
        vec![(2, args.harmonic)]
    } else {
        Vec::new()
    };
    let mut scene = Scene::new(args.range, chest);
    scene.noise_snr_db = args.snr;
    scene.clutter = args
        .clutter
        .iter()
        .map(|&range| Clutter {
            range,
            reflectivity: Complex64::new(3.0, 0.0),
        })
        .collect();
    if args.dc > 0.0 {
        scene.dc_offset = (0..config.rx_count)
            .map(|rx| Complex64::from_polar(args.dc, 0.7 + rx as f64))
            .collect();
    }
    scene.impulse_rate = args.impulse_rate;
    scene.impulse_amp = args.impulse_amp;

    let synth = FrameSynthesizer::new(&scene, &config, args.seed)?;
    create_dir(&args.output)?;
    let scale = 30_000.0 / synth.peak_estimate();
    let cube_path = args.output.join("cube.bin");
    let file = fs::File::create(&cube_path).map_err(|e| Error::io(&cube_path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let mut block = vec![Complex64::new(0.0, 0.0); config.samples_per_frame()];
    for f in 0..config.frame_count {
        synth.fill_frame(f, &mut block);
        let bytes = encode_frame(&block, &config, IqLayout::default(), scale);
        std::io::Write::write_all(&mut w, &bytes).map_err(|e| Error::io(&cube_path, e))?;
    }
    std::io::Write::flush(&mut w).map_err(|e| Error::io(&cube_path, e))?;
    write_file(&args.output.join("config.toml"), &config.to_config_text())?;
    write_truth_csv(&synth.ground_truth(), args.output.join("truth.csv"))?;
    info!(
        "wrote {} frames to {} (int16 scale {scale:.1})",
        config.frame_count,
        cube_path.display()
    );
    Ok(())
}

fn dump_stages(
    dir: &Path,
    map: &fmcw_vitals::rangeproc::RangeMap,
    options: &PipelineOptions,
    window: usize,
) -> Result<()> {
    create_dir(dir)?;
    let st = window_stages(map, options, window)?;
    let path = dir.join(format!("window_{window:04}_stages.csv"));
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["n", "fused", "rr_filtered", "hr_filtered"])?;
    for n in 0..st.fused.len() {
        w.write_record([
            n.to_string(),
            format!("{:.9e}", st.fused.values[n]),
            format!("{:.9e}", st.rr_signal.values[n]),
            format!("{:.9e}", st.hr_signal.values[n]),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    let fft = magnitude_spectrum(&st.hr_signal.values, st.hr_signal.rate, options.pad_factor)?;
    fft.write_csv(dir.join(format!("window_{window:04}_hr_fft.csv")))?;
    let music = fmcw_vitals::estimators::MusicParams {
        lag_dim: options.music_lag,
        ..fmcw_vitals::estimators::MusicParams::heart()
    };
    if let Ok(spec) = music_spectrum(&st.hr_signal, &options.hr_spec(), &music) {
        spec.write_csv(dir.join(format!("window_{window:04}_hr_music.csv")))?;
    }
    Ok(())
}

fn write_records(path: &Path, records: &[EstimateRecord]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_estimates(records, std::io::BufWriter::new(file))
}

fn process(args: &ProcessArgs) -> Result<()> {
    let config = args.config()?;
    let options = args.options(false)?;
    let reader = FrameReader::open(&args.cube, &config, args.layout.layout())?;
    let map = FrameProcessor::new(&config, &options)?.map_from_frames(reader)?;
    if let Some(p) = &args.dump_range_map {
        write_range_map_csv(&map.window(0, options.window.window_frames.min(map.frames()))?, p)?;
    }
    let t0 = Instant::now();
    let records = fmcw_vitals::pipeline::run_on_map(&map, &options)?;
    info!(
        "{} windows processed in {:.3} s",
        options.window.window_count(map.frames()),
        t0.elapsed().as_secs_f64()
    );
    if let Some(dir) = &args.dump_stages {
        for w in 0..options.window.window_count(map.frames()) {
            let slice = map.window(w * options.window.slide_frames, options.window.window_frames)?;
            dump_stages(dir, &slice, &options, w)?;
        }
    }
    let out = args.output();
    write_records(&out, &records)?;
    info!("wrote {} records to {}", records.len(), out.display());
    Ok(())
}

fn stream(args: &ProcessArgs) -> Result<()> {
    let config = args.config()?;
    let options = args.options(true)?;
    let reader = FrameReader::open(&args.cube, &config, args.layout.layout())?;
    // validate options before consuming the file
    StreamProcessor::new(&config, &options)?;
    let mut records = Vec::new();
    let mut last = Instant::now();
    let count = stream_windows(reader, &config, &options, |batch| {
        let w = batch.first().map(|r| r.window_index).unwrap_or(0);
        let t = batch.first().map(|r| r.t_start).unwrap_or(0.0);
        info!(
            "window {w} (t_start {t:.2} s): {:.1} ms since previous update",
            last.elapsed().as_secs_f64() * 1e3
        );
        last = Instant::now();
        records.extend(batch);
        Ok(())
    })?;
    let out = args.output();
    write_records(&out, &records)?;
    info!("{count} windows, {} records written to {}", records.len(), out.display());
    Ok(())
}

fn summary_rows(method: Method, prefix: &str, s: &EvalSummary, rows: &mut Vec<[String; 3]>) {
    for (name, v) in [
        ("mae", s.mae),
        ("rmse", s.rmse),
        ("n", s.n as f64),
        ("mean_bias", s.mean_bias),
        ("loa_low", s.loa_low),
        ("loa_high", s.loa_high),
    ] {
        rows.push([method.to_string(), format!("{prefix}_{name}"), format!("{v:.6}")]);
    }
}

fn evaluate_cmd(args: &EvaluateArgs) -> Result<()> {
    let records = read_estimates_csv(&args.estimates)?;
    let truth = read_truth_csv(&args.truth)?;
    let period = match truth.rows.as_slice() {
        [a, b, ..] => b.t_s - a.t_s,
        _ => return Err(Error::InvalidParameter("ground truth needs at least two rows".into())),
    };
    let duration = args.window_frames as f64 * period;

    let mut methods: Vec<Method> = Vec::new();
    for r in &records {
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    let mut rows: Vec<[String; 3]> = Vec::new();
    let mut plot_data = None;
    for &m in &methods {
        let (mut hr, mut hr_ref, mut rr, mut rr_ref) = (vec![], vec![], vec![], vec![]);
        for r in records.iter().filter(|r| r.method == m) {
            let Some((h, b)) = truth.window_mean(r.t_start, duration) else {
                continue;
            };
            if let Some(v) = r.hr_bpm {
                hr.push(v);
                hr_ref.push(h);
            }
            if let Some(v) = r.rr_rpm {
                rr.push(v);
                rr_ref.push(b);
            }
        }
        if !hr.is_empty() {
            let s = evaluate(&hr, &hr_ref)?;
            summary_rows(m, "hr_bpm", &s, &mut rows);
            if args.plot_method.unwrap_or(methods[0]) == m {
                plot_data = Some((hr.clone(), hr_ref.clone(), s));
            }
        }
        if !rr.is_empty() {
            summary_rows(m, "rr_rpm", &evaluate(&rr, &rr_ref)?, &mut rows);
        }
    }
    if rows.is_empty() {
        return Err(Error::NoEstimate("no estimates overlap the ground truth".into()));
    }

    let mut text = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut text);
        w.write_record(["method", "metric", "value"])?;
        for r in &rows {
            w.write_record(r)?;
        }
        w.flush().map_err(|e| Error::io("<summary>", e))?;
    }
    match &args.output {
        Some(p) => fs::write(p, &text).map_err(|e| Error::io(p, e))?,
        None => print!("{}", String::from_utf8_lossy(&text)),
    }
    if let Some(p) = &args.plot {
        let (e, r, s) = plot_data
            .ok_or_else(|| Error::NoEstimate("no heart-rate estimates for the plot".into()))?;
        write_file(p, &svg::agreement_plot(&e, &r, &s, "BPM"))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Process(a) => process(a),
        Command::Stream(a) => stream(a),
        Command::Evaluate(a) => evaluate_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
