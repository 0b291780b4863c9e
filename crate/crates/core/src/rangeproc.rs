//! Range processing: chirp averaging, range FFT, static clutter removal and
//! adaptive target-bin selection.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::ingest::{DataCube, RadarConfig};
use crate::phasechain::IqSeries;

/// Fast-time window applied before the range FFT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RangeWindow {
    #[default]
    None,
    Hann,
}

/// Complex range profiles: one `[bins × frames]` matrix per RX channel.
///
/// Storage is frame-major (`frame * bins + bin`) so frame windows are
/// contiguous slices.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeMap {
    channels: Vec<Vec<Complex64>>,
    bins: usize,
    frames: usize,
    /// Width of a range bin, m.
    pub bin_res: f64,
    /// Seconds between consecutive frames.
    pub frame_period: f64,
}

impl RangeMap {
    pub fn from_channels(
        channels: Vec<Vec<Complex64>>,
        bins: usize,
        bin_res: f64,
        frame_period: f64,
    ) -> Result<Self> {
        if channels.is_empty() || bins == 0 {
            return Err(Error::InvalidParameter("empty range map".into()));
        }
        let len = channels[0].len();
        if len % bins != 0 || channels.iter().any(|c| c.len() != len) {
            return Err(Error::LengthMismatch("range map channel sizes differ".into()));
        }
        Ok(RangeMap {
            frames: len / bins,
            channels,
            bins,
            bin_res,
            frame_period,
        })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn get(&self, channel: usize, bin: usize, frame: usize) -> Complex64 {
        self.channels[channel][frame * self.bins + bin]
    }

    /// Range profile of one frame on one channel.
    pub fn profile(&self, channel: usize, frame: usize) -> &[Complex64] {
        &self.channels[channel][frame * self.bins..(frame + 1) * self.bins]
    }

    /// Slow-time series of one bin on one channel.
    pub fn bin_series(&self, channel: usize, bin: usize) -> Vec<Complex64> {
        (0..self.frames).map(|n| self.get(channel, bin, n)).collect()
    }

    /// Copy of frames `start..start + count`.
    pub fn window(&self, start: usize, count: usize) -> Result<RangeMap> {
        if count == 0 || start + count > self.frames {
            return Err(Error::InvalidParameter(format!(
                "frame window {start}..{} outside map of {} frames",
                start + count,
                self.frames
            )));
        }
        Ok(RangeMap {
            channels: self
                .channels
                .iter()
                .map(|c| c[start * self.bins..(start + count) * self.bins].to_vec())
                .collect(),
            bins: self.bins,
            frames: count,
            bin_res: self.bin_res,
            frame_period: self.frame_period,
        })
    }

    /// Appends the frames of `other` (same geometry).
    pub fn append(&mut self, other: &RangeMap) -> Result<()> {
        if other.bins != self.bins || other.channels.len() != self.channels.len() {
            return Err(Error::LengthMismatch("range map geometry differs".into()));
        }
        for (a, b) in self.channels.iter_mut().zip(&other.channels) {
            a.extend_from_slice(b);
        }
        self.frames += other.frames;
        Ok(())
    }

    /// Range (m) of the center of a bin.
    pub fn bin_range(&self, bin: usize) -> f64 {
        bin as f64 * self.bin_res
    }
}

/// Replaces each frame's chirps by the mean of its first `n_avg` chirps.
pub fn average_chirps(cube: &DataCube, n_avg: usize) -> Result<DataCube> {
    let cfg = cube.config();
    if n_avg == 0 || n_avg > cfg.chirps_per_frame {
        return Err(Error::InvalidParameter(format!(
            "n_avg {n_avg} outside 1..={}",
            cfg.chirps_per_frame
        )));
    }
    let n = cfg.adc_samples;
    let scale = 1.0 / n_avg as f64;
    let mut out = Vec::with_capacity(n * cfg.frame_count * cfg.rx_count);
    for frame in 0..cfg.frame_count {
        for rx in 0..cfg.rx_count {
            let mut acc = vec![Complex64::new(0.0, 0.0); n];
            for chirp in 0..n_avg {
                for (a, s) in acc.iter_mut().zip(cube.chirp(frame, rx, chirp)) {
                    *a += s;
                }
            }
            out.extend(acc.into_iter().map(|a| a * scale));
        }
    }
    let config = RadarConfig {
        chirps_per_frame: 1,
        ..cfg.clone()
    };
    DataCube::new(config, out)
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| 0.5 - 0.5 * (2.0 * PI * k as f64 / n as f64).cos())
        .collect()
}

/// Fast-time FFT of every frame and channel. The cube must hold a single
/// chirp per frame (see [`average_chirps`]).
pub fn range_fft(cube: &DataCube, window: RangeWindow) -> Result<RangeMap> {
    let cfg = cube.config();
    if cfg.chirps_per_frame != 1 {
        return Err(Error::InvalidParameter(format!(
            "range_fft expects one chirp per frame, cube has {}",
            cfg.chirps_per_frame
        )));
    }
    let n = cfg.adc_samples;
    let fft = FftPlanner::new().plan_fft_forward(n);
    let taper = match window {
        RangeWindow::None => None,
        RangeWindow::Hann => Some(hann(n)),
    };
    let mut channels = vec![Vec::with_capacity(n * cfg.frame_count); cfg.rx_count];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for frame in 0..cfg.frame_count {
        for (rx, ch) in channels.iter_mut().enumerate() {
            buf.copy_from_slice(cube.chirp(frame, rx, 0));
            if let Some(w) = &taper {
                for (b, w) in buf.iter_mut().zip(w) {
                    *b *= w;
                }
            }
            fft.process(&mut buf);
            ch.extend_from_slice(&buf);
        }
    }
    RangeMap::from_channels(channels, n, cfg.bin_resolution(), cfg.frame_period)
}

/// Subtracts each bin's slow-time mean, per channel.
pub fn remove_clutter(map: &RangeMap) -> RangeMap {
    let bins = map.bins;
    let m = map.frames as f64;
    let channels = map
        .channels
        .iter()
        .map(|ch| {
            let mut mean = vec![Complex64::new(0.0, 0.0); bins];
            for frame in ch.chunks_exact(bins) {
                for (acc, v) in mean.iter_mut().zip(frame) {
                    *acc += v;
                }
            }
            for v in &mut mean {
                *v /= m;
            }
            let mut out = ch.clone();
            for frame in out.chunks_exact_mut(bins) {
                for (v, mu) in frame.iter_mut().zip(&mean) {
                    *v -= mu;
                }
            }
            out
        })
        .collect();
    RangeMap {
        channels,
        bins,
        frames: map.frames,
        bin_res: map.bin_res,
        frame_period: map.frame_period,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetSelection {
    pub primary_bin: usize,
    pub included_bins: Vec<usize>,
    /// Strongest bin among the primary and its neighbours, per frame.
    pub per_frame_max_bin: Vec<usize>,
    pub averaged: bool,
}

/// Fraction of per-frame maxima that must land on a neighbour bin before the
/// neighbours are averaged in.
pub const NEIGHBOR_FRACTION: f64 = 0.2;

fn argmax_lowest(values: impl IntoIterator<Item = (usize, f64)>) -> Option<(usize, f64)> {
    values.into_iter().fold(None, |best, (i, v)| match best {
        Some((_, bv)) if v <= bv => best,
        _ => Some((i, v)),
    })
}

/// Picks the target bin: the bin with the largest summed magnitude across
/// frames and channels, plus its neighbours when more than 20 % of the
/// per-frame maxima land on them.
pub fn select_target(map: &RangeMap) -> Result<TargetSelection> {
    let bins = map.bins;
    let magnitude = |bin: usize, frame: usize| -> f64 {
        map.channels
            .iter()
            .map(|ch| ch[frame * bins + bin].norm())
            .sum()
    };
    let totals = (0..bins).map(|k| (k, (0..map.frames).map(|n| magnitude(k, n)).sum::<f64>()));
    let (primary, total) = argmax_lowest(totals).ok_or(Error::NoTarget)?;
    if !(total > 0.0) {
        return Err(Error::NoTarget);
    }
    let lo = primary.saturating_sub(1);
    let hi = (primary + 1).min(bins - 1);
    let per_frame_max_bin: Vec<usize> = (0..map.frames)
        .map(|n| {
            argmax_lowest((lo..=hi).map(|k| (k, magnitude(k, n))))
                .map(|(k, _)| k)
                .unwrap_or(primary)
        })
        .collect();
    let on_neighbor = per_frame_max_bin.iter().filter(|&&k| k != primary).count();
    let averaged = on_neighbor as f64 > NEIGHBOR_FRACTION * map.frames as f64;
    let included_bins = if averaged {
        (lo..=hi).collect()
    } else {
        vec![primary]
    };
    Ok(TargetSelection {
        primary_bin: primary,
        included_bins,
        per_frame_max_bin,
        averaged,
    })
}

/// Complex slow-time series of the selected bin(s), one per channel.
pub fn extract_bin_signal(map: &RangeMap, sel: &TargetSelection) -> Result<Vec<IqSeries>> {
    if sel.included_bins.is_empty() || sel.included_bins.iter().any(|&b| b >= map.bins) {
        return Err(Error::InvalidParameter("target selection outside map".into()));
    }
    let rate = 1.0 / map.frame_period;
    let k = sel.included_bins.len() as f64;
    (0..map.channels.len())
        .map(|ch| {
            let series: Vec<Complex64> = (0..map.frames)
                .map(|n| {
                    if sel.included_bins.len() == 1 {
                        map.get(ch, sel.included_bins[0], n)
                    } else {
                        sel.included_bins
                            .iter()
                            .map(|&b| map.get(ch, b, n))
                            .sum::<Complex64>()
                            / k
                    }
                })
                .collect();
            IqSeries::from_complex(&series, rate)
        })
        .collect()
}

/// Writes `bin,frame,<ch0>,<ch1>,...` magnitudes for plotting.
pub fn write_range_map_csv(map: &RangeMap, path: impl AsRef<std::path::Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["bin".to_string(), "frame".to_string()];
    header.extend((0..map.channel_count()).map(|c| format!("rx{c}")));
    w.write_record(&header)?;
    for frame in 0..map.frames {
        for bin in 0..map.bins {
            let mut row = vec![bin.to_string(), frame.to_string()];
            row.extend((0..map.channel_count()).map(|c| format!("{:.6e}", map.get(c, bin, frame).norm())));
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{ChestModel, Clutter, FrameSynthesizer, Scene};

    fn cfg(chirps: usize, frames: usize) -> RadarConfig {
        RadarConfig {
            chirps_per_frame: chirps,
            frame_count: frames,
            rx_count: 2,
            ..RadarConfig::awr1642()
        }
    }

    fn map_from(values: &[Vec<Complex64>]) -> RangeMap {
        // values[frame][bin], single channel
        let bins = values[0].len();
        RangeMap::from_channels(vec![values.concat()], bins, 0.05, 0.05).unwrap()
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn average_one_chirp_is_first_chirp() {
        let synth =
            FrameSynthesizer::new(&noisy_scene(0.9, 10.0), &cfg(4, 3), 5).unwrap();
        let cube = synth.cube();
        let avg = average_chirps(&cube, 1).unwrap();
        for f in 0..3 {
            for rx in 0..2 {
                assert_eq!(avg.chirp(f, rx, 0), cube.chirp(f, rx, 0));
            }
        }
        assert!(average_chirps(&cube, 0).is_err());
        assert!(average_chirps(&cube, 5).is_err());
    }

    #[test]
    fn opposite_chirps_cancel() {
        let config = RadarConfig {
            rx_count: 1,
            ..cfg(2, 1)
        };
        let mut cube = DataCube::zeros(config.clone());
        for s in 0..config.adc_samples {
            let v = Complex64::new(s as f64, 1.0 - s as f64);
            cube.set(s, 0, 0, 0, v);
            cube.set(s, 1, 0, 0, -v);
        }
        let avg = average_chirps(&cube, 2).unwrap();
        assert!(avg.samples().iter().all(|v| v.norm() == 0.0));
    }

    fn noisy_scene(range: f64, snr: f64) -> Scene {
        let mut s = Scene::new(range, ChestModel::new(0.25, 6e-3, 1.25, 0.3e-3));
        s.noise_snr_db = snr;
        s
    }

    #[test]
    fn zero_cube_zero_map_and_no_target() {
        let cube = DataCube::zeros(cfg(1, 4));
        let map = range_fft(&cube, RangeWindow::None).unwrap();
        assert!((0..2).all(|ch| (0..4).all(|f| map.profile(ch, f).iter().all(|v| v.norm() == 0.0))));
        assert!(matches!(select_target(&remove_clutter(&map)), Err(Error::NoTarget)));
    }

    #[test]
    fn delta_gives_flat_spectrum() {
        let mut cube = DataCube::zeros(cfg(1, 1));
        cube.set(0, 0, 0, 0, c(1.0));
        let map = range_fft(&cube, RangeWindow::None).unwrap();
        assert!(map.profile(0, 0).iter().all(|v| (v - c(1.0)).norm() < 1e-12));
    }

    #[test]
    fn range_fft_requires_collapsed_chirps() {
        assert!(range_fft(&DataCube::zeros(cfg(2, 1)), RangeWindow::None).is_err());
    }

    #[test]
    fn tone_peaks_at_its_bin() {
        let config = cfg(1, 3);
        let scene = Scene::new(19.0 * config.bin_resolution(), ChestModel::new(0.25, 6e-3, 1.25, 0.3e-3));
        let cube = FrameSynthesizer::new(&scene, &config, 0).unwrap().cube();
        for window in [RangeWindow::None, RangeWindow::Hann] {
            let map = range_fft(&cube, window).unwrap();
            for f in 0..3 {
                let p = map.profile(0, f);
                let k = (0..p.len()).max_by(|&a, &b| p[a].norm().total_cmp(&p[b].norm())).unwrap();
                assert_eq!(k, 19);
            }
        }
    }

    #[test]
    fn clutter_removal_examples() {
        let map = map_from(&[vec![c(5.0), c(1.0)], vec![c(5.0), c(2.0)], vec![c(5.0), c(3.0)]]);
        let out = remove_clutter(&map);
        assert_eq!(out.bin_series(0, 0), vec![c(0.0); 3]);
        assert_eq!(out.bin_series(0, 1), vec![c(-1.0), c(0.0), c(1.0)]);
    }

    #[test]
    fn single_target_not_averaged() {
        let config = cfg(1, 200);
        let cube = FrameSynthesizer::new(&noisy_scene(0.9, f64::INFINITY), &config, 0)
            .unwrap()
            .cube();
        let sel = select_target(&remove_clutter(&range_fft(&cube, RangeWindow::None).unwrap())).unwrap();
        assert_eq!(sel.primary_bin, 19);
        assert_eq!(sel.included_bins, vec![19]);
        assert!(!sel.averaged);
    }

    #[test]
    fn straddling_target_is_averaged() {
        let config = RadarConfig {
            chirps_per_frame: 4,
            ..cfg(4, 200)
        };
        let range = 19.5 * config.bin_resolution();
        let mut scene = noisy_scene(range, 0.0);
        scene.clutter.push(Clutter {
            range: 2.0,
            reflectivity: c(3.0),
        });
        let cube = FrameSynthesizer::new(&scene, &config, 4).unwrap().cube();
        let avg = average_chirps(&cube, 4).unwrap();
        let sel = select_target(&remove_clutter(&range_fft(&avg, RangeWindow::None).unwrap())).unwrap();
        assert!(sel.averaged, "{sel:?}");
        assert!(sel.primary_bin == 19 || sel.primary_bin == 20);
        assert_eq!(sel.included_bins.len(), 3);
    }

    #[test]
    fn extract_column_and_mean() {
        let frame = |v: [f64; 3]| vec![c(0.0), c(v[0]), c(v[1]), c(v[2])];
        let map = map_from(&[frame([1.0, 2.0, 3.0]), frame([4.0, 4.0, 7.0])]);
        let single = TargetSelection {
            primary_bin: 2,
            included_bins: vec![2],
            per_frame_max_bin: vec![2, 2],
            averaged: false,
        };
        let iq = extract_bin_signal(&map, &single).unwrap();
        assert_eq!(iq[0].i, vec![2.0, 4.0]);
        let avg = TargetSelection {
            included_bins: vec![1, 2, 3],
            averaged: true,
            ..single
        };
        let iq = extract_bin_signal(&map, &avg).unwrap();
        assert_eq!(iq[0].i, vec![2.0, 5.0]);
        assert_eq!(iq[0].q, vec![0.0, 0.0]);
    }

    #[test]
    fn ties_resolve_to_lowest_bin() {
        let map = map_from(&[vec![c(0.0), c(1.0), c(1.0)], vec![c(0.0), c(-1.0), c(-1.0)]]);
        let sel = select_target(&map).unwrap();
        assert_eq!(sel.primary_bin, 1);
        assert_eq!(sel.per_frame_max_bin, vec![1, 1]);
    }
}
