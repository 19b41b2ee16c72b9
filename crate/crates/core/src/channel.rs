//! Indoor propagation: path loss, Rician small-scale fading, multipath
//! impulse responses and the per-packet MIMO-OFDM channel.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::domain::{CsiArray, Dims};
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Speed of an EM wave in free space, m/s.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropagationConfig {
    /// Hz.
    pub carrier_freq: f64,
    /// Meters.
    pub tx_rx_distance: f64,
    /// Meters.
    pub ref_distance: f64,
    pub path_loss_exponent: f64,
    /// Hz; the OFDM symbol rate 1/T.
    pub subcarrier_spacing: f64,
    pub dims: Dims,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            carrier_freq: 2.4e9,
            tx_rx_distance: 4.3,
            ref_distance: 1.0,
            path_loss_exponent: 2.0,
            // 20 MHz channel / 64-point FFT.
            subcarrier_spacing: 312.5e3,
            dims: Dims::WIFI_2X3X30,
        }
    }
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_freq", self.carrier_freq),
            ("tx_rx_distance", self.tx_rx_distance),
            ("ref_distance", self.ref_distance),
            ("path_loss_exponent", self.path_loss_exponent),
            ("subcarrier_spacing", self.subcarrier_spacing),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(format!("{name} must be positive, got {v}")));
            }
        }
        if self.dims.n_tx == 0 || self.dims.n_rx == 0 || self.dims.n_sc == 0 {
            return Err(Error::domain(format!("dims {} must all be >= 1", self.dims)));
        }
        Ok(())
    }

    /// Absolute frequency of subcarrier `s` (0-based): the reported band is
    /// centered on the carrier, `carrier + (s - (NSc - 1)/2) * spacing`.
    pub fn subcarrier_freq(&self, s: usize) -> f64 {
        let center = (self.dims.n_sc as f64 - 1.0) / 2.0;
        self.carrier_freq + (s as f64 - center) * self.subcarrier_spacing
    }

    /// LOS propagation delay, seconds.
    pub fn los_delay(&self) -> f64 {
        self.tx_rx_distance / SPEED_OF_LIGHT
    }
}

pub fn wavelength(config: &PropagationConfig) -> Result<f64> {
    wavelength_at(config.carrier_freq)
}

/// λ = c / f.
pub fn wavelength_at(freq: f64) -> Result<f64> {
    if !(freq > 0.0) {
        return Err(Error::domain(format!("frequency must be positive, got {freq}")));
    }
    Ok(SPEED_OF_LIGHT / freq)
}

/// Log-distance path loss: `ref_loss_db + 10 n log10(d / d_ref)`.
pub fn path_loss_db(config: &PropagationConfig, ref_loss_db: f64) -> Result<f64> {
    let (d, d_ref) = (config.tx_rx_distance, config.ref_distance);
    if !(d > 0.0) || !(d_ref > 0.0) {
        return Err(Error::domain(format!(
            "distances must be positive (d = {d}, d_ref = {d_ref})"
        )));
    }
    Ok(ref_loss_db + 10.0 * config.path_loss_exponent * (d / d_ref).log10())
}

/// Free-space loss at the reference distance, `20 log10(4π d_ref / λ)`.
pub fn free_space_ref_loss_db(config: &PropagationConfig) -> Result<f64> {
    let lambda = wavelength(config)?;
    Ok(20.0 * (4.0 * PI * config.ref_distance / lambda).log10())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathComponent {
    /// Attenuation α (dimensionless, >= 0).
    pub amplitude: f64,
    /// Phase offset relative to the LOS component, radians.
    #[serde(default)]
    pub phase: f64,
    /// Propagation delay, seconds (>= 0).
    #[serde(default)]
    pub delay: f64,
}

impl PathComponent {
    pub fn new(amplitude: f64, phase: f64, delay: f64) -> Self {
        Self { amplitude, phase, delay }
    }
}

/// A line-of-sight component plus scattered paths.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MultipathSet {
    pub paths: Vec<PathComponent>,
    pub los_amplitude: f64,
    /// Delay of the LOS component, seconds.
    #[serde(default)]
    pub los_delay: f64,
}

impl MultipathSet {
    pub fn new(los_amplitude: f64, paths: Vec<PathComponent>) -> Self {
        Self { paths, los_amplitude, los_delay: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.los_amplitude >= 0.0) || !(self.los_delay >= 0.0) {
            return Err(Error::domain("LOS amplitude and delay must be non-negative"));
        }
        for (k, p) in self.paths.iter().enumerate() {
            if !(p.amplitude >= 0.0) || !(p.delay >= 0.0) {
                return Err(Error::domain(format!(
                    "path {k}: amplitude {} and delay {} must be non-negative",
                    p.amplitude, p.delay
                )));
            }
        }
        Ok(())
    }

    /// In-phase multipath sum M = Σ A_i cos φ_i.
    pub fn in_phase(&self) -> f64 {
        self.paths.iter().map(|p| p.amplitude * p.phase.cos()).sum()
    }

    /// Quadrature multipath sum N = Σ A_i sin φ_i.
    pub fn quadrature(&self) -> f64 {
        self.paths.iter().map(|p| p.amplitude * p.phase.sin()).sum()
    }
}

/// Samples of the Rician received carrier `(M + A_LOS) cos ωt − N sin ωt`.
pub fn rician_received_signal(mp: &MultipathSet, omega: f64, t_samples: &[f64]) -> Result<Vec<f64>> {
    if !(omega > 0.0) {
        return Err(Error::domain(format!("angular frequency must be positive, got {omega}")));
    }
    let a = mp.in_phase() + mp.los_amplitude;
    let n = mp.quadrature();
    Ok(t_samples
        .iter()
        .map(|&t| a * (omega * t).cos() - n * (omega * t).sin())
        .collect())
}

/// Instantaneous received power `(M + A_LOS)² + N²`.
pub fn received_power(mp: &MultipathSet) -> f64 {
    let a = mp.in_phase() + mp.los_amplitude;
    let n = mp.quadrature();
    a * a + n * n
}

/// Mean received power `2σ² + A_LOS²`.
pub fn average_power(mp: &MultipathSet, sigma_sq: f64) -> Result<f64> {
    if !(sigma_sq >= 0.0) {
        return Err(Error::domain(format!("variance must be non-negative, got {sigma_sq}")));
    }
    Ok(2.0 * sigma_sq + mp.los_amplitude * mp.los_amplitude)
}

/// Rician factor `K = A_LOS² / (2σ²)`.
pub fn rician_k(a_los: f64, sigma_sq: f64) -> Result<f64> {
    if !(sigma_sq > 0.0) {
        return Err(Error::domain(format!(
            "Rician factor needs positive scatter variance, got {sigma_sq}"
        )));
    }
    Ok(a_los * a_los / (2.0 * sigma_sq))
}

/// Below this argument the power series is summed directly; the asymptotic
/// expansion only reaches 1e-8 relative accuracy for larger arguments.
const I0_SERIES_LIMIT: f64 = 30.0;

/// Modified Bessel function of the first kind, order zero.
pub fn bessel_i0(x: f64) -> f64 {
    let ax = x.abs();
    if ax < I0_SERIES_LIMIT {
        i0_series(ax)
    } else {
        ax.exp() * i0_asymptotic_scaled(ax)
    }
}

/// Exponentially scaled `e^{-|x|} I0(x)`, finite for every finite x.
pub fn bessel_i0_scaled(x: f64) -> f64 {
    let ax = x.abs();
    if ax < I0_SERIES_LIMIT {
        (-ax).exp() * i0_series(ax)
    } else {
        i0_asymptotic_scaled(ax)
    }
}

fn i0_series(x: f64) -> f64 {
    // Σ ((x/2)^k / k!)², all terms positive.
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        term *= q / (k * k);
        sum += term;
        if term < sum * 1e-17 {
            return sum;
        }
        k += 1.0;
    }
}

fn i0_asymptotic_scaled(x: f64) -> f64 {
    // e^{-x} I0(x) ~ (2πx)^{-1/2} Σ_k [(2k-1)!!]² / (k! (8x)^k), truncated at
    // the smallest term.
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        let kf = k as f64;
        let next = term * (2.0 * kf - 1.0).powi(2) / (kf * 8.0 * x);
        if next >= term {
            break;
        }
        term = next;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum / (2.0 * PI * x).sqrt()
}

/// Rician PDF of received power:
/// `((K+1)/P̄) exp(−K − (K+1)p/P̄) I0(2 √(K(K+1)p/P̄))` for p >= 0, zero below.
pub fn rician_power_pdf(p: f64, k: f64, p_bar: f64) -> Result<f64> {
    if !(p_bar > 0.0) {
        return Err(Error::domain(format!("average power must be positive, got {p_bar}")));
    }
    if !(k >= 0.0) {
        return Err(Error::domain(format!("Rician factor must be non-negative, got {k}")));
    }
    if p < 0.0 {
        return Ok(0.0);
    }
    let z = 2.0 * (k * (k + 1.0) * p / p_bar).sqrt();
    // Fold I0's growth into the exponent to avoid overflow at large K.
    let exponent = -k - (k + 1.0) * p / p_bar + z;
    Ok((k + 1.0) / p_bar * exponent.exp() * bessel_i0_scaled(z))
}

/// Complex taps of one link at one subcarrier: each path contributes
/// `α_k exp(−jωτ_k)` at the delay bin nearest τ_k (ω = 2π f_subcarrier). The
/// LOS component is the zeroth path.
pub fn channel_impulse_element(
    paths: &MultipathSet,
    subcarrier_freq: f64,
    delay_bins: &[f64],
) -> Result<Vec<Complex64>> {
    if delay_bins.iter().any(|&d| !(d >= 0.0)) || delay_bins.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::domain("delay bins must be sorted and non-negative"));
    }
    let mut taps = vec![Complex64::new(0.0, 0.0); delay_bins.len()];
    if taps.is_empty() {
        return Ok(taps);
    }
    let omega = 2.0 * PI * subcarrier_freq;
    let los = PathComponent::new(paths.los_amplitude, 0.0, paths.los_delay);
    for p in std::iter::once(&los).chain(&paths.paths) {
        if p.amplitude == 0.0 {
            continue;
        }
        taps[nearest_bin(delay_bins, p.delay)] += Complex64::from_polar(p.amplitude, -omega * p.delay);
    }
    Ok(taps)
}

fn nearest_bin(bins: &[f64], tau: f64) -> usize {
    let i = bins.partition_point(|&b| b < tau);
    if i == 0 {
        0
    } else if i == bins.len() {
        bins.len() - 1
    } else if tau - bins[i - 1] <= bins[i] - tau {
        i - 1
    } else {
        i
    }
}

/// Frequency response `Σ_k α_k exp(−j 2π f τ_k)` of one link, i.e. the sum of
/// its impulse-response taps at frequency `f`.
pub fn frequency_response(paths: &MultipathSet, freq: f64) -> Complex64 {
    let omega = 2.0 * PI * freq;
    let mut h = Complex64::from_polar(paths.los_amplitude, -omega * paths.los_delay);
    for p in &paths.paths {
        h += Complex64::from_polar(p.amplitude, -omega * p.delay);
    }
    h
}

/// CSI array: element (T, R, S) is link (T, R)'s response at subcarrier S.
/// `per_link` is row-major over (tx, rx).
pub fn assemble_h_matrix(per_link: &[MultipathSet], config: &PropagationConfig) -> Result<CsiArray> {
    let dims = config.dims;
    if per_link.len() != dims.n_tx * dims.n_rx {
        return Err(Error::domain(format!(
            "link grid has {} entries, dims {dims} need {}",
            per_link.len(),
            dims.n_tx * dims.n_rx
        )));
    }
    let freqs: Vec<f64> = (0..dims.n_sc).map(|s| config.subcarrier_freq(s)).collect();
    let mut data = Vec::with_capacity(dims.len());
    for link in per_link {
        data.extend(freqs.iter().map(|&f| frequency_response(link, f)));
    }
    CsiArray::from_vec(dims, data)
}

/// Received symbols `y[R,S] = Σ_T h[T,R,S] x[T,S] + n[R,S]` where n is
/// circularly-symmetric complex Gaussian with per-component std `awgn_sigma`.
/// `x` is row-major (NTx, NSc); the result is row-major (NRx, NSc).
pub fn apply_channel(h: &CsiArray, x: &[Complex64], awgn_sigma: f64, seed: u64) -> Result<Vec<Complex64>> {
    let d = h.dims;
    if x.len() != d.n_tx * d.n_sc || h.data.len() != d.len() {
        return Err(Error::shape(format!(
            "transmit block has {} symbols, H {} needs {}",
            x.len(),
            d,
            d.n_tx * d.n_sc
        )));
    }
    if !(awgn_sigma >= 0.0) {
        return Err(Error::domain(format!("noise std must be non-negative, got {awgn_sigma}")));
    }
    let mut y = vec![Complex64::new(0.0, 0.0); d.n_rx * d.n_sc];
    for tx in 0..d.n_tx {
        let xt = &x[tx * d.n_sc..(tx + 1) * d.n_sc];
        for rx in 0..d.n_rx {
            let hrow = &h.data[d.offset(tx, rx, 0)..d.offset(tx, rx, 0) + d.n_sc];
            let yrow = &mut y[rx * d.n_sc..(rx + 1) * d.n_sc];
            for ((yv, hv), xv) in yrow.iter_mut().zip(hrow).zip(xt) {
                *yv += hv * xv;
            }
        }
    }
    if awgn_sigma > 0.0 {
        let mut rng = SimRng::new(seed);
        for v in &mut y {
            *v += Complex64::new(awgn_sigma * rng.gaussian(), awgn_sigma * rng.gaussian());
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg_with(f: f64) -> PropagationConfig {
        PropagationConfig { carrier_freq: f, ..Default::default() }
    }

    #[test]
    fn wavelength_values() {
        assert_eq!(wavelength(&cfg_with(2.4e9)).unwrap(), 0.125);
        assert_eq!(wavelength(&cfg_with(3e8)).unwrap(), 1.0);
        assert!(matches!(wavelength(&cfg_with(0.0)), Err(Error::Domain(_))));
    }

    #[test]
    fn path_loss_values() {
        let mut c = PropagationConfig { tx_rx_distance: 1.0, ref_distance: 1.0, ..Default::default() };
        assert_eq!(path_loss_db(&c, 40.0).unwrap(), 40.0);
        c.tx_rx_distance = 10.0;
        assert!((path_loss_db(&c, 40.0).unwrap() - 60.0).abs() < 1e-12);
        c.tx_rx_distance = 4.3;
        // 40 + 20 log10(4.3) = 52.669 (computed independently: ln(4.3)/ln(10) = 0.633468...)
        assert!((path_loss_db(&c, 40.0).unwrap() - 52.669_369_111).abs() < 1e-6);
        c.tx_rx_distance = 0.0;
        assert!(path_loss_db(&c, 40.0).is_err());
        c.tx_rx_distance = 1.0;
        c.ref_distance = -1.0;
        assert!(path_loss_db(&c, 40.0).is_err());
    }

    #[test]
    fn received_signal_examples() {
        let mp = MultipathSet::new(1.0, vec![]);
        assert_eq!(rician_received_signal(&mp, 1.0, &[0.0]).unwrap(), vec![1.0]);

        let mp = MultipathSet::new(1.0, vec![PathComponent::new(1.0, PI, 0.0)]);
        assert!(rician_received_signal(&mp, 1.0, &[0.0]).unwrap()[0].abs() < 1e-15);

        let mp = MultipathSet::new(
            0.0,
            vec![PathComponent::new(1.0, PI / 2.0, 0.0), PathComponent::new(1.0, 0.0, 0.0)],
        );
        let omega = 2.0;
        let y = rician_received_signal(&mp, omega, &[0.0, PI / 2.0 / omega]).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-12);
        assert!((y[1] + 1.0).abs() < 1e-12);

        assert!(rician_received_signal(&mp, omega, &[]).unwrap().is_empty());
        assert!(rician_received_signal(&mp, 0.0, &[0.0]).is_err());
    }

    #[test]
    fn power_examples() {
        assert_eq!(received_power(&MultipathSet::new(2.0, vec![])), 4.0);
        assert_eq!(average_power(&MultipathSet::new(0.0, vec![]), 1.0).unwrap(), 2.0);
        let mp = MultipathSet::new(1.0, vec![PathComponent::new(3.0, 0.0, 0.0)]);
        assert_eq!(received_power(&mp), 16.0);
        assert!(average_power(&mp, -0.1).is_err());
    }

    #[test]
    fn rician_k_examples() {
        assert_eq!(rician_k(0.0, 1.0).unwrap(), 0.0);
        assert_eq!(rician_k(2.0, 1.0).unwrap(), 2.0);
        assert!(rician_k(2.0, 0.0).is_err());
    }

    /// Independent oracle: I0(x) = (1/π) ∫_0^π exp(x cos θ) dθ by the
    /// trapezoid rule, which converges geometrically for this periodic integrand.
    fn i0_integral(x: f64) -> f64 {
        let n = 4000;
        let h = PI / n as f64;
        let mut s = 0.5 * (x.exp() + (-x).exp());
        for i in 1..n {
            s += (x * (i as f64 * h).cos()).exp();
        }
        s * h / PI
    }

    fn i0_series_oracle(x: f64, terms: usize) -> f64 {
        let mut sum = 0.0;
        let mut fact = 1.0;
        for k in 0..terms {
            if k > 0 {
                fact *= k as f64;
            }
            sum += ((x / 2.0).powi(k as i32) / fact).powi(2);
        }
        sum
    }

    #[test]
    fn bessel_i0_spot_values() {
        assert_eq!(bessel_i0(0.0), 1.0);
        let oracle = i0_series_oracle(1.0, 30);
        assert!((oracle - 1.266_065_88).abs() < 1e-8);
        assert!((bessel_i0(1.0) - oracle).abs() / oracle < 1e-12);
        assert_eq!(bessel_i0(-1.0), bessel_i0(1.0));
    }

    #[test]
    fn bessel_i0_matches_integral_oracle() {
        for &x in &[0.1, 0.5, 2.0, 3.74, 3.76, 7.5, 15.0, 29.9, 30.1, 45.0, 80.0, 200.0] {
            let want = i0_integral(x);
            let got = bessel_i0(x);
            assert!(((got - want) / want).abs() <= 1e-8, "x = {x}: {got} vs {want}");
            assert_eq!(bessel_i0(-x), got);
            let scaled = bessel_i0_scaled(x);
            assert!(((scaled - want * (-x).exp()) / scaled).abs() <= 1e-8);
        }
    }

    #[test]
    fn pdf_examples() {
        assert!((rician_power_pdf(0.0, 0.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        let want = 0.5 * (-1.0f64).exp();
        assert!((rician_power_pdf(2.0, 0.0, 2.0).unwrap() - want).abs() < 1e-15);
        assert!((want - 0.18394).abs() < 1e-5);
        assert_eq!(rician_power_pdf(-0.5, 1.0, 1.0).unwrap(), 0.0);
        assert!(rician_power_pdf(1.0, 1.0, 0.0).is_err());
        // Large K stays finite.
        assert!(rician_power_pdf(1.0, 500.0, 1.0).unwrap().is_finite());
    }

    #[test]
    fn impulse_element_examples() {
        let bins = [0.0, 1e-9, 2e-9, 3e-9];
        let f = 1e9;
        let zero = MultipathSet::new(0.0, vec![PathComponent::new(0.0, 0.0, 1e-9)]);
        assert!(channel_impulse_element(&zero, f, &bins).unwrap().iter().all(|c| c.norm() == 0.0));

        // ωτ = π at f = 1 GHz means τ = 0.5 ns.
        let bins = [0.0, 0.5e-9, 1.0e-9];
        let half = MultipathSet::new(0.0, vec![PathComponent::new(0.5, 0.0, 0.5e-9)]);
        let taps = channel_impulse_element(&half, f, &bins).unwrap();
        assert!((taps[1] - Complex64::new(-0.5, 0.0)).norm() < 1e-12);
        assert_eq!(taps[0].norm(), 0.0);

        // Phases 0 and π landing in the same bin cancel.
        let pair = MultipathSet::new(
            0.0,
            vec![PathComponent::new(1.0, 0.0, 1.0e-9), PathComponent::new(1.0, 0.0, 0.5e-9)],
        );
        let taps = channel_impulse_element(&pair, f, &[0.0, 0.75e-9]).unwrap();
        assert!(taps[1].norm() < 1e-12);

        assert!(channel_impulse_element(&half, f, &[1e-9, 0.0]).is_err());
    }

    #[test]
    fn taps_sum_to_frequency_response() {
        let mp = MultipathSet {
            paths: vec![PathComponent::new(0.4, 0.0, 23e-9), PathComponent::new(0.2, 0.0, 61e-9)],
            los_amplitude: 1.0,
            los_delay: 14e-9,
        };
        let bins: Vec<f64> = (0..128).map(|i| i as f64 * 1e-9).collect();
        let f = 2.4e9 + 312.5e3 * 3.0;
        let sum: Complex64 = channel_impulse_element(&mp, f, &bins).unwrap().iter().sum();
        assert!((sum - frequency_response(&mp, f)).norm() < 1e-12);
    }

    #[test]
    fn h_matrix_examples() {
        let config = PropagationConfig::default();
        let unit = MultipathSet::new(0.0, vec![PathComponent::new(1.0, 0.0, 0.0)]);
        let grid = vec![unit.clone(); 6];
        let h = assemble_h_matrix(&grid, &config).unwrap();
        assert_eq!(h.dims, Dims::new(2, 3, 30));
        assert!(h.data.iter().all(|c| (c - Complex64::new(1.0, 0.0)).norm() < 1e-15));

        let mut grid = vec![
            MultipathSet::new(0.0, vec![PathComponent::new(0.7, 0.0, 30e-9)]);
            6
        ];
        let before = assemble_h_matrix(&grid, &config).unwrap();
        grid[4] = MultipathSet::default();
        let after = assemble_h_matrix(&grid, &config).unwrap();
        for tx in 0..2 {
            for rx in 0..3 {
                for s in 0..30 {
                    if (tx, rx) == (1, 1) {
                        assert_eq!(after.get(tx, rx, s).norm(), 0.0);
                    } else {
                        assert_eq!(after.get(tx, rx, s), before.get(tx, rx, s));
                    }
                }
            }
        }
        assert!(assemble_h_matrix(&grid[..5], &config).is_err());
    }

    #[test]
    fn subcarriers_symmetric_about_carrier() {
        let c = PropagationConfig::default();
        let lo = c.subcarrier_freq(0);
        let hi = c.subcarrier_freq(29);
        assert!(((lo + hi) / 2.0 - c.carrier_freq).abs() < 1e-3);
        assert!((c.subcarrier_freq(1) - lo - c.subcarrier_spacing).abs() < 1e-3);
    }

    #[test]
    fn apply_channel_identity_and_determinism() {
        let h = CsiArray::from_vec(Dims::new(1, 1, 1), vec![Complex64::new(1.0, 0.0)]).unwrap();
        let y = apply_channel(&h, &[Complex64::new(3.0, 4.0)], 0.0, 0).unwrap();
        assert_eq!(y, vec![Complex64::new(3.0, 4.0)]);

        let h = CsiArray::from_vec(Dims::new(2, 3, 4), vec![Complex64::new(0.5, -0.25); 24]).unwrap();
        let x = vec![Complex64::new(1.0, 1.0); 8];
        let a = apply_channel(&h, &x, 0.1, 99).unwrap();
        let b = apply_channel(&h, &x, 0.1, 99).unwrap();
        let c = apply_channel(&h, &x, 0.1, 100).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(apply_channel(&h, &x[..7], 0.0, 0).is_err());
        assert!(apply_channel(&h, &x, -1.0, 0).is_err());
    }
}
