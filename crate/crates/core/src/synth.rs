//! Parametric synthetic trials.
//!
//! A [`ProfileSet`] holds a static indoor scene (LOS + fixed reflectors) and
//! one [`SyntheticClassProfile`] per interaction. Profiles are data: they are
//! loaded from a versioned TOML file (see `profiles/default.toml`) and
//! hashed for dataset manifests.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{
    apply_channel, assemble_h_matrix, free_space_ref_loss_db, path_loss_db, wavelength,
    MultipathSet, PathComponent, PropagationConfig, SPEED_OF_LIGHT,
};
use crate::domain::{CsiArray, CsiPacket, InteractionLabel, Trial};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, SimRng};

pub const PROFILE_FORMAT_VERSION: u32 = 1;

const DEFAULT_PROFILES: &str = include_str!("../profiles/default.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SteadyPosition {
    Begin,
    End,
}

/// Recorded (steady, active) segment durations in seconds and the steady
/// segment's position for each class.
pub fn timing_table(label: InteractionLabel) -> (f64, f64, SteadyPosition) {
    use InteractionLabel::*;
    use SteadyPosition::*;
    match label {
        SteadyState => (2.0, 0.0, Begin),
        Approaching => (2.0, 3.5, End),
        Departing => (2.0, 3.5, Begin),
        Hugging | KickingLeft | KickingRight | PunchingLeft | PunchingRight => (2.0, 3.0, Begin),
        Handshaking | HighFive | Pushing => (2.0, 4.0, Begin),
        PointingLeft | PointingRight => (2.0, 4.5, Begin),
    }
}

/// Gaussian bump `height * exp(-((u - center) / width)² / 2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: f64,
    pub width: f64,
    pub height: f64,
}

impl Bump {
    fn eval(&self, u: f64) -> f64 {
        let z = (u - self.center) / self.width;
        self.height * (-0.5 * z * z).exp()
    }
}

fn bump_sum(bumps: &[Bump], u: f64) -> f64 {
    bumps.iter().map(|b| b.eval(u)).sum()
}

/// A static scatterer or a body-reflected path. Arrival/departure angles set
/// the per-antenna delay offsets across the uniform linear arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reflector {
    pub amplitude: f64,
    pub delay_ns: f64,
    #[serde(default)]
    pub aoa_deg: f64,
    #[serde(default)]
    pub aod_deg: f64,
}

/// Body-reflected path whose amplitude and phase follow temporal envelopes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyPath {
    pub amplitude: f64,
    pub delay_ns: f64,
    #[serde(default)]
    pub aoa_deg: f64,
    #[serde(default)]
    pub aod_deg: f64,
    /// Relative amplitude change accumulated linearly across the segment.
    #[serde(default)]
    pub amplitude_ramp: f64,
    /// Relative amplitude bumps.
    #[serde(default)]
    pub bumps: Vec<Bump>,
    /// Carrier phase drift across the segment, radians.
    #[serde(default)]
    pub phase_ramp: f64,
    /// Sinusoidal carrier phase oscillation, radians.
    #[serde(default)]
    pub wobble_amplitude: f64,
    #[serde(default)]
    pub wobble_cycles: f64,
}

impl BodyPath {
    /// Relative amplitude gain at envelope time `u`, floored at zero.
    pub fn gain(&self, u: f64) -> f64 {
        (1.0 + self.amplitude_ramp * u + bump_sum(&self.bumps, u)).max(0.0)
    }

    /// Carrier phase excursion at `u`, radians.
    pub fn phase(&self, u: f64) -> f64 {
        self.phase_ramp * u + self.wobble_amplitude * (2.0 * PI * self.wobble_cycles * u).sin()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticClassProfile {
    pub label: InteractionLabel,
    /// Seconds.
    pub steady_duration: f64,
    /// Seconds; zero for the steady-state-only profile.
    pub active_duration: f64,
    pub steady_position: SteadyPosition,
    /// Relative LOS gain modulation (negative heights model blockage).
    #[serde(default)]
    pub los_bumps: Vec<Bump>,
    #[serde(default)]
    pub paths: Vec<BodyPath>,
}

impl SyntheticClassProfile {
    pub fn duration(&self) -> f64 {
        self.steady_duration + self.active_duration
    }

    pub fn validate(&self) -> Result<()> {
        let (steady, active, pos) = timing_table(self.label);
        let ok = |a: f64, b: f64| (a - b).abs() < 1e-9;
        if !ok(self.steady_duration, steady) || !ok(self.active_duration, active) {
            return Err(Error::domain(format!(
                "{}: durations (steady {}, active {}) differ from the recorded timing ({steady}, {active})",
                self.label, self.steady_duration, self.active_duration
            )));
        }
        if self.active_duration > 0.0 && self.steady_position != pos {
            return Err(Error::domain(format!(
                "{}: steady segment must be at the {:?}",
                self.label, pos
            )));
        }
        for b in self.los_bumps.iter().chain(self.paths.iter().flat_map(|p| &p.bumps)) {
            if !(b.width > 0.0) || !b.center.is_finite() || !b.height.is_finite() {
                return Err(Error::domain(format!("{}: invalid bump {b:?}", self.label)));
            }
        }
        for p in &self.paths {
            if !(p.amplitude >= 0.0) || !(p.delay_ns >= 0.0) {
                return Err(Error::domain(format!(
                    "{}: body path amplitude/delay must be non-negative",
                    self.label
                )));
            }
        }
        Ok(())
    }

    /// Envelope time for a packet at `t` seconds and whether it belongs to the
    /// steady segment.
    fn envelope_time(&self, t: f64) -> (f64, bool) {
        if self.active_duration <= 0.0 {
            return (0.0, true);
        }
        match self.steady_position {
            SteadyPosition::Begin if t < self.steady_duration => (0.0, true),
            SteadyPosition::Begin => (((t - self.steady_duration) / self.active_duration).min(1.0), false),
            SteadyPosition::End if t < self.active_duration => (t / self.active_duration, false),
            SteadyPosition::End => (1.0, true),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub los_amplitude: f64,
    pub csi_noise_sigma: f64,
    pub noise_floor_db: f64,
    pub noise_floor_jitter_db: f64,
    pub tx_power_db: f64,
    pub agc_setpoint_db: f64,
    /// Path loss at the reference distance; free-space loss when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_loss_db: Option<f64>,
    /// Antenna spacing in wavelengths.
    pub antenna_spacing: f64,
    #[serde(default)]
    pub reflectors: Vec<Reflector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSet {
    pub version: u32,
    pub scene: Scene,
    #[serde(rename = "profile")]
    pub profiles: Vec<SyntheticClassProfile>,
}

impl ProfileSet {
    pub fn builtin() -> Self {
        Self::from_toml(DEFAULT_PROFILES).expect("built-in profile file is valid")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let set: ProfileSet = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        set.validate()?;
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::from(e).at(path))?;
        Self::from_toml(&text).map_err(|e| e.at(path))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("profile set serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != PROFILE_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "profile file version {} unsupported (expected {PROFILE_FORMAT_VERSION})",
                self.version
            )));
        }
        let s = &self.scene;
        if !(s.los_amplitude >= 0.0) || !(s.csi_noise_sigma >= 0.0) || !(s.antenna_spacing >= 0.0) {
            return Err(Error::domain("scene amplitudes, noise and spacing must be non-negative"));
        }
        for r in &s.reflectors {
            if !(r.amplitude >= 0.0) || !(r.delay_ns >= 0.0) {
                return Err(Error::domain("reflector amplitude/delay must be non-negative"));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for p in &self.profiles {
            p.validate()?;
            if !seen.insert(p.label) {
                return Err(Error::Config(format!("duplicate profile for {}", p.label)));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn get(&self, label: InteractionLabel) -> Option<&SyntheticClassProfile> {
        self.profiles.iter().find(|p| p.label == label)
    }

    /// Keep only the listed classes, in the given order.
    pub fn select(&self, labels: &[InteractionLabel]) -> Result<ProfileSet> {
        let profiles = labels
            .iter()
            .map(|&l| {
                self.get(l)
                    .cloned()
                    .ok_or_else(|| Error::Config(format!("no profile for class {l}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ProfileSet { profiles, ..self.clone() })
    }
}

/// Packet timing for [`synth_trial`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketTiming {
    /// Mean packet rate, Hz.
    pub packet_rate: f64,
    /// Inter-arrival times are `(1 + jitter * U[-1, 1)) / packet_rate`.
    pub jitter: f64,
}

impl PacketTiming {
    pub fn validate(&self) -> Result<()> {
        if !(self.packet_rate > 0.0) {
            return Err(Error::domain(format!("packet rate must be positive, got {}", self.packet_rate)));
        }
        if !(0.0..1.0).contains(&self.jitter) {
            return Err(Error::domain(format!("jitter must lie in [0, 1), got {}", self.jitter)));
        }
        Ok(())
    }
}

fn deg(d: f64) -> f64 {
    d.to_radians()
}

/// Per-antenna delay offset for a path departing at `aod` and arriving at
/// `aoa` on uniform linear arrays.
fn array_delay(tx: usize, rx: usize, aod: f64, aoa: f64, spacing_m: f64) -> f64 {
    (tx as f64 * aod.sin() + rx as f64 * aoa.sin()) * spacing_m / SPEED_OF_LIGHT
}

/// Multipath sets for every (tx, rx) link at envelope time `u`.
fn link_paths(
    profile: &SyntheticClassProfile,
    scene: &Scene,
    config: &PropagationConfig,
    u: f64,
    spacing_m: f64,
) -> Vec<MultipathSet> {
    let d = config.dims;
    let los_gain = (1.0 + bump_sum(&profile.los_bumps, u)).max(0.0);
    let carrier_omega = 2.0 * PI * config.carrier_freq;
    let mut grid = Vec::with_capacity(d.n_tx * d.n_rx);
    for tx in 0..d.n_tx {
        for rx in 0..d.n_rx {
            let mut paths = Vec::with_capacity(scene.reflectors.len() + profile.paths.len());
            for r in &scene.reflectors {
                let delay = r.delay_ns * 1e-9 + array_delay(tx, rx, deg(r.aod_deg), deg(r.aoa_deg), spacing_m);
                paths.push(PathComponent::new(r.amplitude, 0.0, delay.max(0.0)));
            }
            for b in &profile.paths {
                // Phase excursions are realized as path-length changes.
                let delay = b.delay_ns * 1e-9
                    + b.phase(u) / carrier_omega
                    + array_delay(tx, rx, deg(b.aod_deg), deg(b.aoa_deg), spacing_m);
                paths.push(PathComponent::new(b.amplitude * b.gain(u), 0.0, delay.max(0.0)));
            }
            grid.push(MultipathSet {
                paths,
                los_amplitude: scene.los_amplitude * los_gain,
                los_delay: config.los_delay(),
            });
        }
    }
    grid
}

/// Generate one trial. Deterministic in `seed`.
pub fn synth_trial(
    profile: &SyntheticClassProfile,
    scene: &Scene,
    config: &PropagationConfig,
    timing: PacketTiming,
    seed: u64,
) -> Result<Trial> {
    profile.validate()?;
    config.validate()?;
    timing.validate()?;
    let dims = config.dims;
    let spacing_m = scene.antenna_spacing * wavelength(config)?;
    let ref_loss = match scene.ref_loss_db {
        Some(v) => v,
        None => free_space_ref_loss_db(config)?,
    };
    let loss_db = path_loss_db(config, ref_loss)?;

    let mut timing_rng = SimRng::derived(seed, &[0]);
    let mut floor_rng = SimRng::derived(seed, &[1]);
    let total = profile.duration();
    let mean_gap = 1.0 / timing.packet_rate;

    let mut packets = Vec::new();
    let mut t = 0.0;
    let mut index = 0u64;
    while t < total || packets.is_empty() {
        let (u, steady) = profile.envelope_time(t);
        let grid = link_paths(profile, scene, config, u, spacing_m);
        let h = assemble_h_matrix(&grid, config)?;

        // Channel sounding: one pilot per transmit antenna, all others silent.
        let mut csi = CsiArray::zeros(dims);
        for tx in 0..dims.n_tx {
            let mut pilot = vec![Complex64::new(0.0, 0.0); dims.n_tx * dims.n_sc];
            pilot[tx * dims.n_sc..(tx + 1) * dims.n_sc].fill(Complex64::new(1.0, 0.0));
            let noise_seed = derive_seed(seed, &[2, index, tx as u64]);
            let y = apply_channel(&h, &pilot, scene.csi_noise_sigma, noise_seed)?;
            for rx in 0..dims.n_rx {
                for s in 0..dims.n_sc {
                    csi.set(tx, rx, s, y[rx * dims.n_sc + s]);
                }
            }
        }

        let rssi: Vec<f64> = (0..dims.n_rx)
            .map(|rx| {
                let mut p = 0.0;
                for tx in 0..dims.n_tx {
                    for s in 0..dims.n_sc {
                        p += csi.get(tx, rx, s).norm_sqr();
                    }
                }
                let p = (p / (dims.n_tx * dims.n_sc) as f64).max(1e-12);
                (scene.tx_power_db - loss_db + 10.0 * p.log10()).round()
            })
            .collect();
        let mean_rssi = rssi.iter().sum::<f64>() / rssi.len() as f64;
        let agc = (scene.agc_setpoint_db - mean_rssi).clamp(0.0, 60.0);
        let noise = scene.noise_floor_db + scene.noise_floor_jitter_db * floor_rng.gaussian();

        packets.push(CsiPacket {
            timestamp: t,
            noise,
            agc,
            rssi,
            csi,
            label: Some(if steady { InteractionLabel::SteadyState } else { profile.label }),
        });

        let u01 = timing_rng.uniform();
        t += mean_gap * (1.0 + timing.jitter * (2.0 * u01 - 1.0));
        index += 1;
    }

    Ok(Trial {
        pair_id: String::new(),
        trial_id: profile.label.name().to_string(),
        dims,
        packets,
    })
}

/// Dataset-level generation settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetSpec {
    pub pairs: usize,
    pub trials_per_class: usize,
    /// Relative per-pair perturbation of body-path envelope parameters.
    pub pair_variation: f64,
    pub timing: PacketTiming,
    pub seed: u64,
}

pub fn pair_id(pair: usize) -> String {
    format!("p{pair:02}")
}

pub fn trial_id(pair: usize, label: InteractionLabel, trial: usize) -> String {
    format!("p{pair:02}_{}_{trial:02}", label.name())
}

/// Perturb a profile's body-path envelopes for one subject pair, modelling
/// differences in height, build and gesture style.
pub fn perturb_profile(profile: &SyntheticClassProfile, variation: f64, seed: u64) -> SyntheticClassProfile {
    let mut out = profile.clone();
    if variation == 0.0 {
        return out;
    }
    let mut rng = SimRng::new(seed);
    let mut jiggle = |scale: f64| variation * scale * rng.gaussian();
    for b in &mut out.los_bumps {
        b.center += jiggle(0.05);
        b.height *= 1.0 + jiggle(1.0);
    }
    for p in &mut out.paths {
        p.amplitude = (p.amplitude * (1.0 + jiggle(1.0))).max(0.0);
        p.delay_ns = (p.delay_ns + jiggle(3.0)).max(0.0);
        p.aoa_deg += jiggle(10.0);
        p.aod_deg += jiggle(10.0);
        p.phase_ramp *= 1.0 + jiggle(0.5);
        for b in &mut p.bumps {
            b.center += jiggle(0.05);
            b.width = (b.width * (1.0 + jiggle(0.3))).max(1e-3);
            b.height *= 1.0 + jiggle(1.0);
        }
    }
    out
}

/// Generate `pairs × |profiles| × trials_per_class` trials, ordered by pair,
/// then profile, then trial. Trials are generated in parallel on the current
/// rayon pool; each draws from its own derived seed, so the output does not
/// depend on the worker count.
pub fn synth_dataset(
    set: &ProfileSet,
    config: &PropagationConfig,
    spec: &DatasetSpec,
) -> Result<Vec<Trial>> {
    if spec.pairs == 0 || spec.trials_per_class == 0 {
        return Err(Error::domain("pairs and trials per class must be >= 1"));
    }
    if !(spec.pair_variation >= 0.0) {
        return Err(Error::domain("pair variation must be non-negative"));
    }
    set.validate()?;
    spec.timing.validate()?;

    let mut jobs = Vec::new();
    for pair in 0..spec.pairs {
        for (ci, profile) in set.profiles.iter().enumerate() {
            let varied = perturb_profile(
                profile,
                spec.pair_variation,
                derive_seed(spec.seed, &[pair as u64, profile.label.index() as u64, 0xFA11]),
            );
            for trial in 0..spec.trials_per_class {
                jobs.push((pair, ci, trial, varied.clone()));
            }
        }
    }
    jobs.into_par_iter()
        .map(|(pair, _ci, trial, profile)| {
            let seed = derive_seed(spec.seed, &[pair as u64, profile.label.index() as u64, trial as u64]);
            let mut t = synth_trial(&profile, &set.scene, config, spec.timing, seed)?;
            t.pair_id = pair_id(pair);
            t.trial_id = trial_id(pair, profile.label, trial);
            Ok(t)
        })
        .collect()
}
