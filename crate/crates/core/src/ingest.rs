//! File boundary: radar configuration, raw I/Q capture files and estimate CSVs.
//!
//! Raw captures are interleaved signed 16-bit little-endian I/Q pairs. The
//! nesting is frame, then chirp, then (depending on [`ChannelOrder`]) either
//! RX channel then fast-time sample, or fast-time sample then RX channel.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::SPEED_OF_LIGHT;

/// Chirp, frame and antenna parameters of a capture.
#[derive(Debug, Clone, PartialEq)]
pub struct RadarConfig {
    /// Chirp start frequency, Hz.
    pub start_freq: f64,
    /// Swept bandwidth, Hz.
    pub bandwidth: f64,
    pub adc_samples: usize,
    /// ADC sample rate, samples/s.
    pub sample_rate: f64,
    /// Ramp end time, s. Used as the chirp duration.
    pub ramp_end_time: f64,
    pub idle_time: f64,
    pub frame_count: usize,
    /// Frame period, s. Its inverse is the slow-time rate.
    pub frame_period: f64,
    pub chirps_per_frame: usize,
    pub tx_count: usize,
    pub rx_count: usize,
}

impl RadarConfig {
    /// AWR1642 configuration: 77 GHz start, 4 GHz sweep, 250 samples at
    /// 6.25 Msps, 1200 frames of 128 chirps every 50 ms, 2 TX / 4 RX.
    pub fn awr1642() -> Self {
        RadarConfig {
            start_freq: 77e9,
            bandwidth: 4e9,
            adc_samples: 250,
            sample_rate: 6.25e6,
            ramp_end_time: 50e-6,
            idle_time: 7e-6,
            frame_count: 1200,
            frame_period: 50e-3,
            chirps_per_frame: 128,
            tx_count: 2,
            rx_count: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("start_freq", self.start_freq),
            ("bandwidth", self.bandwidth),
            ("sample_rate", self.sample_rate),
            ("ramp_end_time", self.ramp_end_time),
            ("frame_period", self.frame_period),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.idle_time.is_finite() && self.idle_time >= 0.0) {
            return Err(Error::Config(format!(
                "idle_time must be non-negative, got {}",
                self.idle_time
            )));
        }
        let counts = [
            ("frame_count", self.frame_count),
            ("chirps_per_frame", self.chirps_per_frame),
            ("tx_count", self.tx_count),
            ("rx_count", self.rx_count),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.adc_samples < 8 {
            return Err(Error::Config(format!(
                "adc_samples must be at least 8, got {}",
                self.adc_samples
            )));
        }
        let sampled = self.adc_samples as f64 / self.sample_rate;
        if sampled > self.ramp_end_time * (1.0 + 1e-9) {
            return Err(Error::Config(format!(
                "adc_samples / sample_rate = {sampled:e} s exceeds ramp_end_time {:e} s",
                self.ramp_end_time
            )));
        }
        Ok(())
    }

    /// Slow-time sampling rate, Hz.
    pub fn slow_time_rate(&self) -> f64 {
        1.0 / self.frame_period
    }

    pub fn chirp_duration(&self) -> f64 {
        self.ramp_end_time
    }

    /// Wavelength at the chirp center frequency, m.
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / (self.start_freq + 0.5 * self.bandwidth)
    }

    /// Width of one range bin, m.
    pub fn bin_resolution(&self) -> f64 {
        self.sample_rate * self.chirp_duration() * SPEED_OF_LIGHT
            / (2.0 * self.bandwidth * self.adc_samples as f64)
    }

    /// Beat frequency of a reflector at `range` metres, Hz.
    pub fn beat_frequency(&self, range: f64) -> f64 {
        2.0 * self.bandwidth * range / (SPEED_OF_LIGHT * self.chirp_duration())
    }

    /// Largest range representable by the complex fast-time FFT, m.
    pub fn max_range(&self) -> f64 {
        self.bin_resolution() * self.adc_samples as f64
    }

    pub fn samples_per_frame(&self) -> usize {
        self.adc_samples * self.chirps_per_frame * self.rx_count
    }

    pub fn sample_count(&self) -> usize {
        self.samples_per_frame() * self.frame_count
    }

    /// Byte size of a raw capture with this configuration.
    pub fn raw_size_bytes(&self) -> u64 {
        self.sample_count() as u64 * 4
    }

    /// Serializes to the key-value text format read by [`parse_config`].
    pub fn to_config_text(&self) -> String {
        format!(
            "start_freq = {:?}\nbandwidth = {:?}\nadc_samples = {}\nsample_rate = {:?}\n\
             ramp_end_time = {:?}\nidle_time = {:?}\nframe_count = {}\nframe_period = {:?}\n\
             chirps_per_frame = {}\ntx_count = {}\nrx_count = {}\n",
            self.start_freq,
            self.bandwidth,
            self.adc_samples,
            self.sample_rate,
            self.ramp_end_time,
            self.idle_time,
            self.frame_count,
            self.frame_period,
            self.chirps_per_frame,
            self.tx_count,
            self.rx_count
        )
    }
}

const CONFIG_KEYS: [&str; 11] = [
    "start_freq",
    "bandwidth",
    "adc_samples",
    "sample_rate",
    "ramp_end_time",
    "idle_time",
    "frame_count",
    "frame_period",
    "chirps_per_frame",
    "tx_count",
    "rx_count",
];

/// Parses `key = value` text (TOML syntax). Unknown keys are logged and ignored.
pub fn parse_config(text: &str) -> Result<RadarConfig> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    for key in table.keys() {
        if !CONFIG_KEYS.contains(&key.as_str()) {
            log::warn!("ignoring unknown config key `{key}`");
        }
    }
    let real = |key: &str| -> Result<f64> {
        match table.get(key) {
            None => Err(Error::Config(format!("missing key `{key}`"))),
            Some(toml::Value::Float(v)) => Ok(*v),
            Some(toml::Value::Integer(v)) => Ok(*v as f64),
            Some(other) => Err(Error::Config(format!(
                "`{key}` must be a number, got {}",
                other.type_str()
            ))),
        }
    };
    let count = |key: &str| -> Result<usize> {
        match table.get(key) {
            None => Err(Error::Config(format!("missing key `{key}`"))),
            Some(toml::Value::Integer(v)) if *v > 0 => Ok(*v as usize),
            Some(toml::Value::Integer(v)) => {
                Err(Error::Config(format!("`{key}` must be positive, got {v}")))
            }
            Some(other) => Err(Error::Config(format!(
                "`{key}` must be an integer count, got {}",
                other.type_str()
            ))),
        }
    };
    let cfg = RadarConfig {
        start_freq: real("start_freq")?,
        bandwidth: real("bandwidth")?,
        adc_samples: count("adc_samples")?,
        sample_rate: real("sample_rate")?,
        ramp_end_time: real("ramp_end_time")?,
        idle_time: real("idle_time")?,
        frame_count: count("frame_count")?,
        frame_period: real("frame_period")?,
        chirps_per_frame: count("chirps_per_frame")?,
        tx_count: count("tx_count")?,
        rx_count: count("rx_count")?,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<RadarConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

/// Complex I/Q samples indexed by (fast-time sample, chirp, frame, RX channel).
///
/// Storage is frame-major: each frame is one contiguous block laid out as
/// `[rx][chirp][sample]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataCube {
    config: RadarConfig,
    samples: Vec<Complex64>,
}

impl DataCube {
    pub fn new(config: RadarConfig, samples: Vec<Complex64>) -> Result<Self> {
        if samples.len() != config.sample_count() {
            return Err(Error::LengthMismatch(format!(
                "cube holds {} samples, config requires {}",
                samples.len(),
                config.sample_count()
            )));
        }
        if let Some(pos) = samples.iter().position(|s| !(s.re.is_finite() && s.im.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "non-finite sample at flat index {pos}"
            )));
        }
        Ok(DataCube { config, samples })
    }

    pub fn zeros(config: RadarConfig) -> Self {
        let n = config.sample_count();
        DataCube {
            config,
            samples: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    /// Builds a cube from per-frame blocks, each `[rx][chirp][sample]`.
    pub fn from_frames(config: RadarConfig, frames: Vec<Vec<Complex64>>) -> Result<Self> {
        let per = config.samples_per_frame();
        if frames.len() != config.frame_count || frames.iter().any(|f| f.len() != per) {
            return Err(Error::LengthMismatch(
                "frame blocks do not match config dimensions".into(),
            ));
        }
        DataCube::new(config, frames.concat())
    }

    pub fn config(&self) -> &RadarConfig {
        &self.config
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    fn index(&self, sample: usize, chirp: usize, frame: usize, rx: usize) -> usize {
        let c = &self.config;
        ((frame * c.rx_count + rx) * c.chirps_per_frame + chirp) * c.adc_samples + sample
    }

    pub fn get(&self, sample: usize, chirp: usize, frame: usize, rx: usize) -> Complex64 {
        self.samples[self.index(sample, chirp, frame, rx)]
    }

    pub fn set(&mut self, sample: usize, chirp: usize, frame: usize, rx: usize, v: Complex64) {
        let i = self.index(sample, chirp, frame, rx);
        self.samples[i] = v;
    }

    /// Fast-time samples of one chirp.
    pub fn chirp(&self, frame: usize, rx: usize, chirp: usize) -> &[Complex64] {
        let start = self.index(0, chirp, frame, rx);
        &self.samples[start..start + self.config.adc_samples]
    }

    /// The `[rx][chirp][sample]` block of one frame.
    pub fn frame(&self, frame: usize) -> &[Complex64] {
        let per = self.config.samples_per_frame();
        &self.samples[frame * per..(frame + 1) * per]
    }

    /// Copy of frames `start..start + count`.
    pub fn frames(&self, start: usize, count: usize) -> Result<DataCube> {
        if count == 0 || start + count > self.config.frame_count {
            return Err(Error::InvalidParameter(format!(
                "frame range {start}..{} outside cube of {} frames",
                start + count,
                self.config.frame_count
            )));
        }
        let per = self.config.samples_per_frame();
        let mut config = self.config.clone();
        config.frame_count = count;
        Ok(DataCube {
            config,
            samples: self.samples[start * per..(start + count) * per].to_vec(),
        })
    }
}

/// Which component of each pair comes first in the file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IqOrder {
    #[default]
    IFirst,
    QFirst,
}

/// Nesting of RX channels and fast-time samples within a chirp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChannelOrder {
    /// All samples of RX0, then all samples of RX1, ...
    #[default]
    ChannelMajor,
    /// Sample 0 of every RX channel, then sample 1, ...
    SampleInterleaved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IqLayout {
    pub iq_order: IqOrder,
    pub channel_order: ChannelOrder,
}

impl IqLayout {
    /// Position of (rx, sample) within the chirp group of the file, in pairs.
    fn pair_offset(&self, cfg: &RadarConfig, rx: usize, sample: usize) -> usize {
        match self.channel_order {
            ChannelOrder::ChannelMajor => rx * cfg.adc_samples + sample,
            ChannelOrder::SampleInterleaved => sample * cfg.rx_count + rx,
        }
    }

    fn decode(&self, a: i16, b: i16) -> Complex64 {
        match self.iq_order {
            IqOrder::IFirst => Complex64::new(a as f64, b as f64),
            IqOrder::QFirst => Complex64::new(b as f64, a as f64),
        }
    }

    fn encode(&self, v: (i16, i16)) -> (i16, i16) {
        match self.iq_order {
            IqOrder::IFirst => v,
            IqOrder::QFirst => (v.1, v.0),
        }
    }
}

/// Decodes one frame of raw bytes into a `[rx][chirp][sample]` block.
pub fn decode_frame(bytes: &[u8], cfg: &RadarConfig, layout: IqLayout) -> Vec<Complex64> {
    let per_chirp_group = cfg.adc_samples * cfg.rx_count;
    let mut out = vec![Complex64::new(0.0, 0.0); cfg.samples_per_frame()];
    for chirp in 0..cfg.chirps_per_frame {
        for rx in 0..cfg.rx_count {
            for s in 0..cfg.adc_samples {
                let pair = chirp * per_chirp_group + layout.pair_offset(cfg, rx, s);
                let b = &bytes[pair * 4..pair * 4 + 4];
                let a = i16::from_le_bytes([b[0], b[1]]);
                let c = i16::from_le_bytes([b[2], b[3]]);
                out[(rx * cfg.chirps_per_frame + chirp) * cfg.adc_samples + s] =
                    layout.decode(a, c);
            }
        }
    }
    out
}

fn quantize(x: f64) -> i16 {
    x.round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

/// Encodes a `[rx][chirp][sample]` block, scaling each component by `scale`
/// and rounding to the nearest int16 (saturating).
pub fn encode_frame(
    block: &[Complex64],
    cfg: &RadarConfig,
    layout: IqLayout,
    scale: f64,
) -> Vec<u8> {
    let per_chirp_group = cfg.adc_samples * cfg.rx_count;
    let mut out = vec![0u8; cfg.samples_per_frame() * 4];
    for chirp in 0..cfg.chirps_per_frame {
        for rx in 0..cfg.rx_count {
            for s in 0..cfg.adc_samples {
                let v = block[(rx * cfg.chirps_per_frame + chirp) * cfg.adc_samples + s];
                let (a, b) = layout.encode((quantize(v.re * scale), quantize(v.im * scale)));
                let pair = chirp * per_chirp_group + layout.pair_offset(cfg, rx, s);
                out[pair * 4..pair * 4 + 2].copy_from_slice(&a.to_le_bytes());
                out[pair * 4 + 2..pair * 4 + 4].copy_from_slice(&b.to_le_bytes());
            }
        }
    }
    out
}

/// Frame-by-frame reader over a raw capture file. The file size is checked
/// against the configuration before the first frame is read.
pub struct FrameReader<R> {
    reader: R,
    config: RadarConfig,
    layout: IqLayout,
    next: usize,
    buf: Vec<u8>,
}

impl FrameReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>, config: &RadarConfig, layout: IqLayout) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let actual = file.metadata().map_err(|e| Error::io(path, e))?.len();
        let expected = config.raw_size_bytes();
        if actual != expected {
            return Err(Error::SizeMismatch { expected, actual });
        }
        Ok(FrameReader {
            reader: BufReader::with_capacity(1 << 20, file),
            config: config.clone(),
            layout,
            next: 0,
            buf: vec![0u8; config.samples_per_frame() * 4],
        })
    }
}

impl<R: Read> Iterator for FrameReader<R> {
    type Item = Result<Vec<Complex64>>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.config.frame_count {
            return None;
        }
        self.next += 1;
        Some(
            self.reader
                .read_exact(&mut self.buf)
                .map(|_| decode_frame(&self.buf, &self.config, self.layout))
                .map_err(|e| Error::io("<raw cube>", e)),
        )
    }
}

pub fn read_iq_cube(
    path: impl AsRef<Path>,
    config: &RadarConfig,
    layout: IqLayout,
) -> Result<DataCube> {
    let reader = FrameReader::open(path, config, layout)?;
    let mut samples = Vec::with_capacity(config.sample_count());
    for frame in reader {
        samples.extend(frame?);
    }
    DataCube::new(config.clone(), samples)
}

/// Writes `cube` in the raw format; see [`encode_frame`] for `scale`.
pub fn write_iq_cube(
    path: impl AsRef<Path>,
    cube: &DataCube,
    layout: IqLayout,
    scale: f64,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for f in 0..cube.config().frame_count {
        let bytes = encode_frame(cube.frame(f), cube.config(), layout, scale);
        w.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Fft,
    CtfHistogram,
    CtfKde,
    Music,
    Prony,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Fft,
        Method::CtfHistogram,
        Method::CtfKde,
        Method::Music,
        Method::Prony,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Fft => "FFT",
            Method::CtfHistogram => "CTF_HIS",
            Method::CtfKde => "CTF_KDE",
            Method::Music => "MUSIC",
            Method::Prony => "PRONY",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "fft" => Ok(Method::Fft),
            "ctf-his" => Ok(Method::CtfHistogram),
            "ctf-kde" => Ok(Method::CtfKde),
            "music" => Ok(Method::Music),
            "prony" => Ok(Method::Prony),
            other => Err(Error::InvalidParameter(format!("unknown method `{other}`"))),
        }
    }
}

/// One rate estimate for one observation window.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRecord {
    pub window_index: usize,
    /// Window start time, s.
    pub t_start: f64,
    pub method: Method,
    pub hr_bpm: Option<f64>,
    pub rr_rpm: Option<f64>,
}

pub const ESTIMATES_HEADER: [&str; 5] = ["window", "t_start_s", "method", "hr_bpm", "rr_rpm"];

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

/// Writes estimates as CSV with header `window,t_start_s,method,hr_bpm,rr_rpm`.
/// Absent rates are empty fields.
pub fn write_estimates<W: Write>(records: &[EstimateRecord], out: W) -> Result<()> {
    if records.is_empty() {
        return Err(Error::InvalidParameter("no estimate records to write".into()));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ESTIMATES_HEADER)?;
    for r in records {
        w.write_record([
            r.window_index.to_string(),
            format!("{:.4}", r.t_start),
            r.method.to_string(),
            fmt_opt(r.hr_bpm),
            fmt_opt(r.rr_rpm),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

pub fn write_estimates_csv(records: &[EstimateRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if records.is_empty() {
        return Err(Error::InvalidParameter("no estimate records to write".into()));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_estimates(records, BufWriter::new(file))
}

pub fn read_estimates_csv(path: impl AsRef<Path>) -> Result<Vec<EstimateRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(BufReader::new(file));
    let parse_f = |s: &str, what: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::InvalidParameter(format!("bad {what} `{s}`")))
    };
    let opt = |s: &str, what: &str| -> Result<Option<f64>> {
        if s.trim().is_empty() {
            Ok(None)
        } else {
            parse_f(s, what).map(Some)
        }
    };
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        if row.len() != 5 {
            return Err(Error::InvalidParameter(format!(
                "estimate row has {} fields, expected 5",
                row.len()
            )));
        }
        out.push(EstimateRecord {
            window_index: row[0]
                .trim()
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad window `{}`", &row[0])))?,
            t_start: parse_f(&row[1], "t_start_s")?,
            method: row[2].parse()?,
            hr_bpm: opt(&row[3], "hr_bpm")?,
            rr_rpm: opt(&row[4], "rr_rpm")?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> RadarConfig {
        RadarConfig {
            adc_samples: 8,
            chirps_per_frame: 2,
            frame_count: 3,
            rx_count: 2,
            ..RadarConfig::awr1642()
        }
    }

    #[test]
    fn table_config_parses_with_20hz_slow_time() {
        let cfg = parse_config(&RadarConfig::awr1642().to_config_text()).unwrap();
        assert_eq!(cfg, RadarConfig::awr1642());
        assert!((cfg.slow_time_rate() - 20.0).abs() < 1e-12);
        assert_eq!(cfg.chirp_duration(), 50e-6);
    }

    #[test]
    fn bin_resolution_matches_formula() {
        let cfg = RadarConfig::awr1642();
        let expected = 6.25e6 * 50e-6 * SPEED_OF_LIGHT / (2.0 * 4e9 * 250.0);
        assert!((cfg.bin_resolution() - expected).abs() < 1e-15);
        assert!((cfg.bin_resolution() - 0.0469).abs() < 1e-3);
        assert_eq!((0.9 / cfg.bin_resolution()).round() as usize, 19);
    }

    #[test]
    fn zero_frame_period_rejected() {
        let text = RadarConfig::awr1642()
            .to_config_text()
            .replace("frame_period = 0.05", "frame_period = 0.0");
        assert!(matches!(parse_config(&text), Err(Error::Config(_))));
    }

    #[test]
    fn too_few_adc_samples_rejected() {
        let text = RadarConfig::awr1642()
            .to_config_text()
            .replace("adc_samples = 250", "adc_samples = 4");
        assert!(matches!(parse_config(&text), Err(Error::Config(_))));
    }

    #[test]
    fn every_non_positive_field_rejected() {
        let base = RadarConfig::awr1642().to_config_text();
        for key in CONFIG_KEYS {
            if key == "idle_time" {
                continue;
            }
            let text: String = base
                .lines()
                .map(|l| {
                    if l.starts_with(&format!("{key} ")) {
                        format!("{key} = 0\n")
                    } else {
                        format!("{l}\n")
                    }
                })
                .collect();
            assert!(parse_config(&text).is_err(), "{key} = 0 accepted");
        }
    }

    #[test]
    fn missing_key_and_unknown_key() {
        let base = RadarConfig::awr1642().to_config_text();
        let missing: String = base
            .lines()
            .filter(|l| !l.starts_with("rx_count"))
            .map(|l| format!("{l}\n"))
            .collect();
        let err = parse_config(&missing).unwrap_err().to_string();
        assert!(err.contains("rx_count"), "{err}");

        let extra = format!("{base}rx_gain_db = 30\n");
        assert!(parse_config(&extra).is_ok());

        let fractional = base.replace("rx_count = 4", "rx_count = 4.5");
        assert!(parse_config(&fractional).is_err());
    }

    #[test]
    fn raw_round_trip_both_layouts() {
        let cfg = small_config();
        let mut cube = DataCube::zeros(cfg.clone());
        let mut k = 0i32;
        for f in 0..cfg.frame_count {
            for rx in 0..cfg.rx_count {
                for c in 0..cfg.chirps_per_frame {
                    for s in 0..cfg.adc_samples {
                        cube.set(s, c, f, rx, Complex64::new(k as f64, -(k as f64) - 1.0));
                        k += 1;
                    }
                }
            }
        }
        let dir = tempfile::tempdir().unwrap();
        for iq_order in [IqOrder::IFirst, IqOrder::QFirst] {
            for channel_order in [ChannelOrder::ChannelMajor, ChannelOrder::SampleInterleaved] {
                let layout = IqLayout {
                    iq_order,
                    channel_order,
                };
                let p = dir.path().join("cube.bin");
                write_iq_cube(&p, &cube, layout, 1.0).unwrap();
                let back = read_iq_cube(&p, &cfg, layout).unwrap();
                assert_eq!(back, cube);
            }
        }
    }

    #[test]
    fn q_first_swaps_components() {
        let cfg = RadarConfig {
            frame_count: 1,
            chirps_per_frame: 1,
            rx_count: 1,
            ..small_config()
        };
        let mut bytes = Vec::new();
        for s in 0..8i16 {
            bytes.extend_from_slice(&s.to_le_bytes());
            bytes.extend_from_slice(&(100 + s).to_le_bytes());
        }
        let layout = IqLayout {
            iq_order: IqOrder::QFirst,
            ..Default::default()
        };
        let frame = decode_frame(&bytes, &cfg, layout);
        assert_eq!(frame[3], Complex64::new(103.0, 3.0));
    }

    #[test]
    fn truncated_file_reports_sizes() {
        let cfg = small_config();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("short.bin");
        let n = cfg.raw_size_bytes() as usize - 4;
        std::fs::write(&p, vec![0u8; n]).unwrap();
        match read_iq_cube(&p, &cfg, IqLayout::default()) {
            Err(Error::SizeMismatch { expected, actual }) => {
                assert_eq!(expected, cfg.raw_size_bytes());
                assert_eq!(actual, n as u64);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn all_zero_file_gives_zero_cube() {
        let cfg = small_config();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("zero.bin");
        std::fs::write(&p, vec![0u8; cfg.raw_size_bytes() as usize]).unwrap();
        let cube = read_iq_cube(&p, &cfg, IqLayout::default()).unwrap();
        assert!(cube.samples().iter().all(|s| s.norm() == 0.0));
        assert_eq!(cube.samples().len(), cfg.sample_count());
    }

    fn record(i: usize, method: Method) -> EstimateRecord {
        EstimateRecord {
            window_index: i,
            t_start: i as f64 * 30.0,
            method,
            hr_bpm: Some(74.4),
            rr_rpm: Some(9.6),
        }
    }

    #[test]
    fn estimates_csv_rows() {
        let mut buf = Vec::new();
        write_estimates(&[record(0, Method::Prony)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "window,t_start_s,method,hr_bpm,rr_rpm\n0,0.0000,PRONY,74.4000,9.6000\n"
        );

        let recs = vec![
            record(0, Method::Fft),
            record(1, Method::Music),
            EstimateRecord {
                hr_bpm: None,
                ..record(2, Method::CtfKde)
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("est.csv");
        write_estimates_csv(&recs, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,"));
        assert!(lines[3].starts_with("2,60.0000,CTF_KDE,,"));
        assert_eq!(read_estimates_csv(&p).unwrap(), recs);
    }

    #[test]
    fn empty_estimates_rejected() {
        assert!(write_estimates(&[], Vec::new()).is_err());
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let r = write_estimates_csv(&[record(0, Method::Fft)], "/nonexistent-dir/x/est.csv");
        assert!(matches!(r, Err(Error::Io { .. })));
    }
}
