//! Packet and trial types shared across the pipeline.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_CLASSES: usize = 13;

/// The 13 interaction classes. Discriminants are the class indices used by
/// every file format and by the one-hot layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
#[repr(u8)]
pub enum InteractionLabel {
    SteadyState = 0,
    Approaching = 1,
    Departing = 2,
    Handshaking = 3,
    HighFive = 4,
    Hugging = 5,
    KickingLeft = 6,
    KickingRight = 7,
    PointingLeft = 8,
    PointingRight = 9,
    PunchingLeft = 10,
    PunchingRight = 11,
    Pushing = 12,
}

impl InteractionLabel {
    pub const ALL: [InteractionLabel; NUM_CLASSES] = [
        Self::SteadyState,
        Self::Approaching,
        Self::Departing,
        Self::Handshaking,
        Self::HighFive,
        Self::Hugging,
        Self::KickingLeft,
        Self::KickingRight,
        Self::PointingLeft,
        Self::PointingRight,
        Self::PunchingLeft,
        Self::PunchingRight,
        Self::Pushing,
    ];

    const NAMES: [&'static str; NUM_CLASSES] = [
        "steady-state",
        "approaching",
        "departing",
        "handshaking",
        "high-five",
        "hugging",
        "kicking-left",
        "kicking-right",
        "pointing-left",
        "pointing-right",
        "punching-left",
        "punching-right",
        "pushing",
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        Self::NAMES[self.index()]
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::domain(format!("label index {i} outside [0, {}]", NUM_CLASSES - 1)))
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| Self::ALL[i])
            .ok_or_else(|| Error::domain(format!("unknown interaction label {name:?}")))
    }

    pub fn is_steady(self) -> bool {
        self == Self::SteadyState
    }
}

impl fmt::Display for InteractionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InteractionLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_name(s)
    }
}

impl From<InteractionLabel> for String {
    fn from(l: InteractionLabel) -> String {
        l.name().to_string()
    }
}

impl TryFrom<String> for InteractionLabel {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        Self::from_name(&s)
    }
}

pub fn label_to_index(name: &str) -> Result<usize> {
    InteractionLabel::from_name(name).map(InteractionLabel::index)
}

pub fn index_to_label(i: usize) -> Result<&'static str> {
    InteractionLabel::from_index(i).map(InteractionLabel::name)
}

/// Antenna/subcarrier layout of a CSI array: (NTx, NRx, NSc).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_sc: usize,
}

impl Dims {
    /// The Intel 5300 layout: 2 transmit, 3 receive antennas, 30 subcarriers.
    pub const WIFI_2X3X30: Dims = Dims { n_tx: 2, n_rx: 3, n_sc: 30 };

    pub const fn new(n_tx: usize, n_rx: usize, n_sc: usize) -> Self {
        Self { n_tx, n_rx, n_sc }
    }

    pub fn len(&self) -> usize {
        self.n_tx * self.n_rx * self.n_sc
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major flat offset of (tx, rx, sc).
    #[inline]
    pub fn offset(&self, tx: usize, rx: usize, sc: usize) -> usize {
        (tx * self.n_rx + rx) * self.n_sc + sc
    }

    /// Features per packet: time diff, noise, AGC, one RSSI per receive
    /// antenna, then a magnitude and a phase per CSI element.
    pub fn feature_dim(&self) -> usize {
        3 + self.n_rx + 2 * self.len()
    }
}

impl Default for Dims {
    fn default() -> Self {
        Self::WIFI_2X3X30
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.n_tx, self.n_rx, self.n_sc)
    }
}

/// Complex CSI array, row-major over (tx, rx, subcarrier).
#[derive(Debug, Clone, PartialEq)]
pub struct CsiArray {
    pub dims: Dims,
    pub data: Vec<Complex64>,
}

impl CsiArray {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            data: vec![Complex64::new(0.0, 0.0); dims.len()],
        }
    }

    pub fn from_vec(dims: Dims, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(Error::shape(format!(
                "CSI data length {} does not match dims {dims}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn get(&self, tx: usize, rx: usize, sc: usize) -> Complex64 {
        self.data[self.dims.offset(tx, rx, sc)]
    }

    pub fn set(&mut self, tx: usize, rx: usize, sc: usize, v: Complex64) {
        let o = self.dims.offset(tx, rx, sc);
        self.data[o] = v;
    }
}

/// One received Wi-Fi packet.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiPacket {
    /// Seconds relative to the trial start.
    pub timestamp: f64,
    /// Noise floor, dB.
    pub noise: f64,
    /// Automatic gain control, dB.
    pub agc: f64,
    /// One RSSI reading (dB) per receive antenna.
    pub rssi: Vec<f64>,
    pub csi: CsiArray,
    /// `None` for unlabeled (inference-only) recordings.
    pub label: Option<InteractionLabel>,
}

/// One recording: a steady-state segment plus one interaction segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub pair_id: String,
    pub trial_id: String,
    pub dims: Dims,
    pub packets: Vec<CsiPacket>,
}

impl Trial {
    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    pub fn is_labeled(&self) -> bool {
        self.packets.iter().all(|p| p.label.is_some())
    }

    /// Per-packet labels, if every packet carries one.
    pub fn labels(&self) -> Option<Vec<InteractionLabel>> {
        self.packets.iter().map(|p| p.label).collect()
    }

    /// The trial's interaction class: the first non-steady label, or
    /// steady-state when every packet is steady.
    pub fn class(&self) -> Option<InteractionLabel> {
        let labels = self.labels()?;
        Some(
            labels
                .iter()
                .copied()
                .find(|l| !l.is_steady())
                .unwrap_or(InteractionLabel::SteadyState),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Empty,
    NonMonotoneTimestamp { index: usize },
    CsiShape { index: usize, found: Dims, expected: Dims },
    RssiLength { index: usize, found: usize, expected: usize },
    NonFinite { index: usize, field: &'static str },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => f.write_str("trial has no packets"),
            Violation::NonMonotoneTimestamp { index } => {
                write!(f, "non-monotone timestamp at index {index}")
            }
            Violation::CsiShape { index, found, expected } => {
                write!(f, "csi shape {found} at index {index}, trial declares {expected}")
            }
            Violation::RssiLength { index, found, expected } => {
                write!(f, "rssi length {found} at index {index}, expected {expected}")
            }
            Violation::NonFinite { index, field } => {
                write!(f, "non-finite {field} at index {index}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return f.write_str("ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Check every structural invariant of a trial and report all violations.
pub fn validate_trial(trial: &Trial) -> ValidationReport {
    let mut violations = Vec::new();
    if trial.packets.is_empty() {
        violations.push(Violation::Empty);
    }
    let mut prev_t = f64::NEG_INFINITY;
    for (index, p) in trial.packets.iter().enumerate() {
        if !p.timestamp.is_finite() {
            violations.push(Violation::NonFinite { index, field: "timestamp" });
        } else {
            if p.timestamp < prev_t {
                violations.push(Violation::NonMonotoneTimestamp { index });
            }
            prev_t = p.timestamp;
        }
        if p.csi.dims != trial.dims || p.csi.data.len() != trial.dims.len() {
            violations.push(Violation::CsiShape {
                index,
                found: p.csi.dims,
                expected: trial.dims,
            });
        }
        if p.rssi.len() != trial.dims.n_rx {
            violations.push(Violation::RssiLength {
                index,
                found: p.rssi.len(),
                expected: trial.dims.n_rx,
            });
        }
        if !p.noise.is_finite() || !p.agc.is_finite() || p.rssi.iter().any(|r| !r.is_finite()) {
            violations.push(Violation::NonFinite { index, field: "noise/agc/rssi" });
        }
        if p.csi.data.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            violations.push(Violation::NonFinite { index, field: "csi" });
        }
    }
    ValidationReport { violations }
}
