#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fmcw_vitals::ingest::RadarConfig;
use fmcw_vitals::pipeline::{FrameProcessor, PipelineOptions};
use fmcw_vitals::rangeproc::RangeMap;
use fmcw_vitals::simulate::{ChestModel, Clutter, FrameSynthesizer, Scene};

/// AWR1642 profile with fewer chirps and frames so that scenes synthesize quickly.
pub fn small_config(frames: usize) -> RadarConfig {
    RadarConfig {
        frame_count: frames,
        chirps_per_frame: 16,
        ..RadarConfig::awr1642()
    }
}

/// Largest respiration displacement (m) keeping the per-frame phase step of the
/// respiration part, harmonics included, below `max_step` rad.
pub fn resp_amp_limit(config: &RadarConfig, chest: &ChestModel, max_step: f64) -> f64 {
    let k = 4.0 * PI / config.wavelength();
    let w = 2.0 * PI * chest.resp_rate * config.frame_period;
    let spread: f64 = 1.0 + chest.resp_harmonics.iter().map(|&(h, c)| h as f64 * c).sum::<f64>();
    max_step / (k * w * spread)
}

/// Realistic randomized scene: clutter, DC offsets, impulses, RX gain spread.
pub fn random_scene(config: &RadarConfig, seed: u64, snr_db: f64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed ^ seed.wrapping_mul(0x9e37_79b9));
    let (rr_hz, hr_hz) = loop {
        let rr: f64 = rng.random_range(8.0..=30.0) / 60.0;
        let hr: f64 = rng.random_range(50.0..=110.0) / 60.0;
        if (hr - 2.0 * rr).abs() >= 0.15 {
            break (rr, hr);
        }
    };
    let mut chest = ChestModel::new(rr_hz, 3e-3, hr_hz, rng.random_range(0.2e-3..0.5e-3));
    chest.resp_phase = rng.random_range(0.0..2.0 * PI);
    chest.heart_phase = rng.random_range(0.0..2.0 * PI);
    chest.resp_amp = rng
        .random_range(1.5e-3..5e-3_f64)
        .min(resp_amp_limit(config, &chest, 1.2));
    let range = rng.random_range(0.5..1.6);
    let mut scene = Scene::new(range, chest);
    scene.noise_snr_db = snr_db;
    scene.clutter = vec![
        Clutter {
            range: range + rng.random_range(0.6..1.5),
            reflectivity: Complex64::from_polar(rng.random_range(1.0..4.0), rng.random_range(0.0..2.0 * PI)),
        },
        Clutter {
            range: rng.random_range(0.15..0.35),
            reflectivity: Complex64::from_polar(rng.random_range(0.5..2.0), rng.random_range(0.0..2.0 * PI)),
        },
    ];
    scene.dc_offset = (0..config.rx_count)
        .map(|_| Complex64::from_polar(rng.random_range(0.05..0.3), rng.random_range(0.0..2.0 * PI)))
        .collect();
    scene.rx_gains = (0..config.rx_count)
        .map(|_| Complex64::from_polar(rng.random_range(0.8..1.2), rng.random_range(0.0..2.0 * PI)))
        .collect();
    scene.impulse_rate = 0.1;
    scene.impulse_amp = 0.5;
    scene
}

/// Synthesizes a scene frame by frame straight into a range map.
pub fn simulate_map(scene: &Scene, config: &RadarConfig, seed: u64, options: &PipelineOptions) -> RangeMap {
    let synth = FrameSynthesizer::new(scene, config, seed).unwrap();
    let fp = FrameProcessor::new(config, options).unwrap();
    fp.map_from_frames((0..config.frame_count).map(|f| Ok(synth.frame(f))))
        .unwrap()
}
