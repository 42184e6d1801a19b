//! Channel impulse responses: synthesis from path sets, measurement-style
//! preprocessing (coherent averaging, power normalization, sub-sample peak
//! synchronization), file I/O, and synthetic channel ensembles.
//!
//! All downstream analysis consumes [`ChannelImpulseResponse`] values that
//! have been normalized to unit power and synchronized so the main power
//! delay profile peak sits on the sampling grid.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::rng::CounterRng;
use crate::{Complex64, Error, Result};

/// Floor applied to power delay profile entries, in dB.
pub const PDP_FLOOR_DB: f64 = -120.0;

/// Default upsampling factor for sub-sample peak estimation.
pub const DEFAULT_UPSAMPLE: usize = 16;

/// A sampled complex baseband channel impulse response.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelImpulseResponse {
    /// Complex tap amplitudes at symbol spacing.
    pub taps: Vec<Complex64>,
    /// Seconds per tap.
    pub sample_period: f64,
    /// Index of the main power delay profile peak.
    pub peak_index: usize,
    /// Free-text identifier carried through exports.
    pub label: String,
}

impl ChannelImpulseResponse {
    /// Builds a response from raw taps, locating the main peak.
    pub fn new(taps: Vec<Complex64>, sample_period: f64, label: impl Into<String>) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::invalid("channel impulse response has no taps"));
        }
        if !taps.iter().all(|t| t.re.is_finite() && t.im.is_finite()) {
            return Err(Error::invalid("channel taps must be finite"));
        }
        if taps.iter().all(|t| t.norm_sqr() == 0.0) {
            return Err(Error::invalid("channel impulse response is identically zero"));
        }
        if !(sample_period.is_finite() && sample_period > 0.0) {
            return Err(Error::invalid(format!(
                "sample period must be positive, got {sample_period}"
            )));
        }
        let peak_index = argmax_power(&taps);
        Ok(ChannelImpulseResponse {
            taps,
            sample_period,
            peak_index,
            label: label.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// Total tap power `sum |h_l|^2`.
    pub fn total_power(&self) -> f64 {
        self.taps.iter().map(|t| t.norm_sqr()).sum()
    }

    /// Returns a copy scaled to unit total power.
    pub fn normalize(&self) -> Result<Self> {
        let power = self.total_power();
        if power == 0.0 || !power.is_finite() {
            return Err(Error::invalid("cannot normalize an all-zero response"));
        }
        let scale = 1.0 / power.sqrt();
        let mut out = self.clone();
        for t in &mut out.taps {
            *t *= scale;
        }
        Ok(out)
    }

    /// Synchronizes the response so the main peak lies on the sampling grid.
    ///
    /// The peak's sub-sample position is estimated by frequency-domain
    /// upsampling by `upsample_factor` followed by cubic interpolation of the
    /// power delay profile around its maximum; the whole response is then
    /// advanced by the fractional part via a linear phase ramp.
    pub fn sync_to_peak(&self, upsample_factor: usize) -> Result<Self> {
        if upsample_factor < 2 {
            return Err(Error::invalid(format!(
                "upsample factor must be at least 2, got {upsample_factor}"
            )));
        }
        let pos = estimate_peak_position(&self.taps, upsample_factor)?;
        let nearest = pos.round().clamp(0.0, (self.len() - 1) as f64);
        let eps = pos - nearest;
        let taps = fractional_delay(&self.taps, -eps);
        let peak_index = argmax_power(&taps);
        Ok(ChannelImpulseResponse {
            taps,
            sample_period: self.sample_period,
            peak_index,
            label: self.label.clone(),
        })
    }

    /// Power delay profile in dB, floored at [`PDP_FLOOR_DB`].
    pub fn pdp(&self) -> Vec<f64> {
        self.taps
            .iter()
            .map(|t| {
                let p = t.norm_sqr();
                if p > 0.0 {
                    (10.0 * p.log10()).max(PDP_FLOOR_DB)
                } else {
                    PDP_FLOOR_DB
                }
            })
            .collect()
    }
}

fn argmax_power(taps: &[Complex64]) -> usize {
    let mut best = 0;
    let mut best_p = f64::NEG_INFINITY;
    for (i, t) in taps.iter().enumerate() {
        let p = t.norm_sqr();
        if p > best_p {
            best_p = p;
            best = i;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Parametric synthesis
// ---------------------------------------------------------------------------

/// One propagation path of a parametric channel description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    /// Absolute delay in seconds.
    pub delay_s: f64,
    /// Power relative to the strongest path, in dB.
    pub power_db: f64,
    /// Phase in radians.
    pub phase_rad: f64,
}

/// Parametric multipath description on a fixed sampling grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub paths: Vec<PathSpec>,
    pub sample_period: f64,
    pub num_taps: usize,
}

impl PathSet {
    pub fn validate(&self) -> Result<()> {
        if self.paths.is_empty() {
            return Err(Error::invalid("path set has no paths"));
        }
        if !(self.sample_period.is_finite() && self.sample_period > 0.0) {
            return Err(Error::invalid("path set sample period must be positive"));
        }
        if self.num_taps == 0 {
            return Err(Error::invalid("path set grid length must be positive"));
        }
        let references = self.paths.iter().filter(|p| p.power_db == 0.0).count();
        if references != 1 {
            return Err(Error::invalid(format!(
                "exactly one path must have 0 dB power (the reference), found {references}"
            )));
        }
        let horizon = self.num_taps as f64 * self.sample_period;
        for (i, p) in self.paths.iter().enumerate() {
            if !(p.delay_s.is_finite() && p.delay_s >= 0.0 && p.delay_s < horizon) {
                return Err(Error::invalid(format!(
                    "path {i} delay {} s outside grid [0, {horizon}) s",
                    p.delay_s
                )));
            }
        }
        Ok(())
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Synthesizes a band-limited tap vector from a path set.
///
/// Each path contributes an ideal Nyquist (sinc) pulse sampled on the tap
/// grid; the result is not normalized.
pub fn synthesize(spec: &PathSet) -> Result<ChannelImpulseResponse> {
    spec.validate()?;
    let mut taps = vec![Complex64::new(0.0, 0.0); spec.num_taps];
    for path in &spec.paths {
        let amplitude = 10f64.powf(path.power_db / 20.0);
        let rot = Complex64::from_polar(amplitude, path.phase_rad);
        let delay_taps = path.delay_s / spec.sample_period;
        for (l, tap) in taps.iter_mut().enumerate() {
            *tap += rot * sinc(l as f64 - delay_taps);
        }
    }
    ChannelImpulseResponse::new(taps, spec.sample_period, "synthetic")
}

// ---------------------------------------------------------------------------
// Snapshot averaging
// ---------------------------------------------------------------------------

/// A set of repeated sounding snapshots of one stationary channel.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    pub snapshots: Vec<Vec<Complex64>>,
}

impl SnapshotSet {
    pub fn new(snapshots: Vec<Vec<Complex64>>) -> Result<Self> {
        let Some(first) = snapshots.first() else {
            return Err(Error::invalid("snapshot set is empty"));
        };
        if first.is_empty() {
            return Err(Error::invalid("snapshots have zero length"));
        }
        let len = first.len();
        if !snapshots.iter().all(|s| s.len() == len) {
            return Err(Error::invalid("snapshots must all share one length"));
        }
        Ok(SnapshotSet { snapshots })
    }

    pub fn count(&self) -> usize {
        self.snapshots.len()
    }
}

/// Result of phase-coherent snapshot averaging.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherentAverage {
    /// Averaged tap vector.
    pub taps: Vec<Complex64>,
    /// Indices of snapshots whose derotation was skipped because their inner
    /// product with the reference vanished.
    pub skipped: Vec<usize>,
}

/// Averages snapshots after compensating each one's common phase error.
///
/// The common phase of snapshot `i` is estimated against snapshot 0 as
/// `arg <s_i, s_0>`; snapshots with a vanishing inner product are averaged
/// without derotation and reported in `skipped`.
pub fn coherent_average(set: &SnapshotSet) -> CoherentAverage {
    let reference = &set.snapshots[0];
    let len = reference.len();
    let mut acc = vec![Complex64::new(0.0, 0.0); len];
    let mut skipped = Vec::new();
    for (i, snap) in set.snapshots.iter().enumerate() {
        let inner: Complex64 = snap
            .iter()
            .zip(reference)
            .map(|(a, b)| a * b.conj())
            .sum();
        let rot = if inner.norm_sqr() > 0.0 {
            Complex64::from_polar(1.0, -inner.arg())
        } else {
            skipped.push(i);
            Complex64::new(1.0, 0.0)
        };
        for (a, s) in acc.iter_mut().zip(snap) {
            *a += rot * s;
        }
    }
    let scale = 1.0 / set.count() as f64;
    for a in &mut acc {
        *a *= scale;
    }
    CoherentAverage { taps: acc, skipped }
}

// ---------------------------------------------------------------------------
// Sub-sample peak estimation and fractional shifting
// ---------------------------------------------------------------------------

fn fft_size(len: usize) -> usize {
    (4 * len).next_power_of_two().max(16)
}

/// Applies a fractional delay (in samples) via a frequency-domain linear
/// phase ramp over the zero-padded response.
///
/// Positive `delay_samples` moves the response to later taps. The output has
/// the input's length; the padding suppresses circular wrap-around.
pub fn fractional_delay(taps: &[Complex64], delay_samples: f64) -> Vec<Complex64> {
    let len = taps.len();
    let m = fft_size(len);
    let mut buf = vec![Complex64::new(0.0, 0.0); m];
    buf[..len].copy_from_slice(taps);

    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(m).process(&mut buf);

    let half = m / 2;
    for (k, value) in buf.iter_mut().enumerate() {
        if k == half {
            // Nyquist bin: symmetric split keeps real inputs real.
            *value *= (PI * delay_samples).cos();
        } else {
            let signed = if k < half { k as f64 } else { k as f64 - m as f64 };
            let phase = -2.0 * PI * signed / m as f64 * delay_samples;
            *value *= Complex64::from_polar(1.0, phase);
        }
    }

    planner.plan_fft_inverse(m).process(&mut buf);
    let scale = 1.0 / m as f64;
    buf.truncate(len);
    for v in &mut buf {
        *v *= scale;
    }
    buf
}

/// Estimates the continuous position (in samples) of the main power delay
/// profile peak.
///
/// The taps are upsampled by `upsample_factor` through discrete-frequency
/// zero padding, and the squared magnitude around the grid maximum is refined
/// by cubic interpolation.
pub fn estimate_peak_position(taps: &[Complex64], upsample_factor: usize) -> Result<f64> {
    if upsample_factor < 2 {
        return Err(Error::invalid(format!(
            "upsample factor must be at least 2, got {upsample_factor}"
        )));
    }
    if taps.is_empty() || taps.iter().all(|t| t.norm_sqr() == 0.0) {
        return Err(Error::invalid("cannot locate the peak of an all-zero response"));
    }
    let len = taps.len();
    let m0 = fft_size(len);
    let m_up = m0 * upsample_factor;

    let mut spectrum = vec![Complex64::new(0.0, 0.0); m0];
    spectrum[..len].copy_from_slice(taps);
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(m0).process(&mut spectrum);

    // Zero-pad the spectrum in the middle, splitting the Nyquist bin.
    let half = m0 / 2;
    let mut padded = vec![Complex64::new(0.0, 0.0); m_up];
    padded[..half].copy_from_slice(&spectrum[..half]);
    padded[half] = spectrum[half] * 0.5;
    padded[m_up - half] = spectrum[half] * 0.5;
    padded[m_up - half + 1..].copy_from_slice(&spectrum[half + 1..]);

    planner.plan_fft_inverse(m_up).process(&mut padded);
    let scale = 1.0 / m0 as f64;
    let power: Vec<f64> = padded.iter().map(|v| (v * scale).norm_sqr()).collect();

    // Restrict the search to the original support.
    let search = len * upsample_factor;
    let mut m = 0;
    let mut best = f64::NEG_INFINITY;
    for (i, &p) in power.iter().enumerate().take(search) {
        if p > best {
            best = p;
            m = i;
        }
    }

    let at = |i: isize| power[i.rem_euclid(m_up as isize) as usize];
    let mi = m as isize;
    // Four-point stencil whose central interval brackets the continuous peak.
    let start = if at(mi + 1) >= at(mi - 1) { mi - 1 } else { mi - 2 };
    let y = [at(start), at(start + 1), at(start + 2), at(start + 3)];
    let refined = start as f64 + cubic_peak(&y);
    Ok(refined / upsample_factor as f64)
}

/// Position of the maximum of the interpolating cubic through
/// `(0, y0) .. (3, y3)`, restricted to the central interval [1, 2].
fn cubic_peak(y: &[f64; 4]) -> f64 {
    let d1 = y[1] - y[0];
    let d2 = y[2] - 2.0 * y[1] + y[0];
    let d3 = y[3] - 3.0 * y[2] + 3.0 * y[1] - y[0];
    // p(u) = y0 + d1 u + d2 u(u-1)/2 + d3 u(u-1)(u-2)/6
    let value = |u: f64| {
        y[0] + d1 * u + d2 * u * (u - 1.0) / 2.0 + d3 * u * (u - 1.0) * (u - 2.0) / 6.0
    };
    // p'(u) = A u^2 + B u + C
    let a = d3 / 2.0;
    let b = d2 - d3;
    let c = d1 - d2 / 2.0 + d3 / 3.0;

    let mut best_u = 1.0;
    let mut best_v = value(1.0);
    let mut consider = |u: f64| {
        if (1.0..=2.0).contains(&u) {
            let v = value(u);
            if v > best_v {
                best_v = v;
                best_u = u;
            }
        }
    };
    consider(2.0);
    if a.abs() < 1e-300 {
        if b.abs() > 0.0 {
            consider(-c / b);
        }
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let root = disc.sqrt();
            consider((-b + root) / (2.0 * a));
            consider((-b - root) / (2.0 * a));
        }
    }
    best_u
}

// ---------------------------------------------------------------------------
// File I/O
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CirFile {
    format_version: u32,
    label: String,
    sample_rate_hz: f64,
    taps: Vec<[f64; 2]>,
}

/// Stores a response as a version-1 JSON document.
pub fn store_cir(cir: &ChannelImpulseResponse, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = CirFile {
        format_version: 1,
        label: cir.label.clone(),
        sample_rate_hz: 1.0 / cir.sample_period,
        taps: cir.taps.iter().map(|t| [t.re, t.im]).collect(),
    };
    let body = serde_json::to_string_pretty(&file).expect("cir serialization cannot fail");
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Loads a response stored by [`store_cir`].
pub fn load_cir(path: impl AsRef<Path>) -> Result<ChannelImpulseResponse> {
    let path = path.as_ref();
    let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: CirFile =
        serde_json::from_str(&body).map_err(|e| Error::parse(path, e.to_string()))?;
    if file.format_version != 1 {
        return Err(Error::parse(
            path,
            format!("unsupported format_version {}", file.format_version),
        ));
    }
    if !(file.sample_rate_hz.is_finite() && file.sample_rate_hz > 0.0) {
        return Err(Error::parse(
            path,
            format!("sample_rate_hz must be positive, got {}", file.sample_rate_hz),
        ));
    }
    let taps: Vec<Complex64> = file
        .taps
        .iter()
        .map(|[re, im]| Complex64::new(*re, *im))
        .collect();
    ChannelImpulseResponse::new(taps, 1.0 / file.sample_rate_hz, file.label)
        .map_err(|e| Error::parse(path, e.to_string()))
}

/// Writes the power delay profile as CSV with header
/// `tap_index,delay_ns,power_db`.
pub fn export_pdp_csv(cir: &ChannelImpulseResponse, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("tap_index,delay_ns,power_db\n");
    for (l, p) in cir.pdp().iter().enumerate() {
        let delay_ns = l as f64 * cir.sample_period * 1e9;
        out.push_str(&format!("{l},{delay_ns},{p}\n"));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Synthetic ensembles
// ---------------------------------------------------------------------------

/// Named synthetic channel families mirroring qualitatively distinct
/// measured channel types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PresetName {
    /// Line of sight plus only weak (below -30 dB) background paths.
    Red,
    /// Line of sight plus one strong path about two taps away.
    Green,
    /// Line of sight plus intermediate paths near +2 and +30 taps.
    Blue,
    /// Equal mixture of the other three.
    Mixed,
}

impl FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "red" => Ok(PresetName::Red),
            "green" => Ok(PresetName::Green),
            "blue" => Ok(PresetName::Blue),
            "mixed" => Ok(PresetName::Mixed),
            other => Err(Error::invalid(format!(
                "unknown preset '{other}' (expected red, green, blue, or mixed)"
            ))),
        }
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PresetName::Red => "red",
            PresetName::Green => "green",
            PresetName::Blue => "blue",
            PresetName::Mixed => "mixed",
        };
        f.write_str(s)
    }
}

/// Distribution parameters for the synthetic ensembles.
///
/// All delays are in taps and drawn with continuous values; powers are in dB
/// relative to the line-of-sight path. The defaults approximate the
/// qualitative structure of the three measured channel families.
#[derive(Debug, Clone)]
pub struct PresetParams {
    pub num_taps: usize,
    pub sample_period: f64,
    pub upsample_factor: usize,
    /// Line-of-sight delay range, leaving room for precursor side lobes.
    pub los_delay_taps: (f64, f64),
    /// Background path count range (inclusive).
    pub background_paths: (u64, u64),
    /// Background delay offsets from the line of sight.
    pub background_delay_taps: (f64, f64),
    pub background_power_db: (f64, f64),
    /// Strong near reflection (green and blue).
    pub near_offset_taps: (f64, f64),
    pub near_power_db: (f64, f64),
    /// Far reflection (blue).
    pub far_offset_taps: (f64, f64),
    pub far_power_db: (f64, f64),
}

impl Default for PresetParams {
    fn default() -> Self {
        PresetParams {
            num_taps: 64,
            sample_period: 0.25e-9,
            upsample_factor: DEFAULT_UPSAMPLE,
            los_delay_taps: (2.0, 3.0),
            background_paths: (3, 6),
            background_delay_taps: (1.0, 40.0),
            background_power_db: (-45.0, -34.0),
            near_offset_taps: (1.5, 2.5),
            near_power_db: (-15.0, -3.0),
            far_offset_taps: (29.0, 31.0),
            far_power_db: (-30.0, -18.0),
        }
    }
}

/// Generates a deterministic ensemble of preprocessed synthetic channels.
///
/// Channels are synthesized, peak-synchronized, and normalized to unit
/// power; the result depends only on `(name, count, seed)`.
pub fn preset_ensemble(
    name: PresetName,
    count: usize,
    seed: u64,
) -> Result<Vec<ChannelImpulseResponse>> {
    preset_ensemble_with(&PresetParams::default(), name, count, seed)
}

/// [`preset_ensemble`] with explicit distribution parameters.
pub fn preset_ensemble_with(
    params: &PresetParams,
    name: PresetName,
    count: usize,
    seed: u64,
) -> Result<Vec<ChannelImpulseResponse>> {
    if count == 0 {
        return Err(Error::invalid("ensemble count must be at least 1"));
    }
    (0..count)
        .map(|i| {
            let kind = match name {
                PresetName::Mixed => match i % 3 {
                    0 => PresetName::Red,
                    1 => PresetName::Green,
                    _ => PresetName::Blue,
                },
                other => other,
            };
            let mut rng = CounterRng::substream(seed, &[preset_tag(name), i as u64]);
            let spec = draw_path_set(params, kind, &mut rng)?;
            let cir = synthesize(&spec)?
                .sync_to_peak(params.upsample_factor)?
                .normalize()?;
            Ok(ChannelImpulseResponse {
                label: format!("{kind}_{i:03}"),
                ..cir
            })
        })
        .collect()
}

fn preset_tag(name: PresetName) -> u64 {
    match name {
        PresetName::Red => 0xC1A0_0001,
        PresetName::Green => 0xC1A0_0002,
        PresetName::Blue => 0xC1A0_0003,
        PresetName::Mixed => 0xC1A0_0004,
    }
}

fn draw_path_set(params: &PresetParams, kind: PresetName, rng: &mut CounterRng) -> Result<PathSet> {
    let t = params.sample_period;
    let los = rng.uniform_in(params.los_delay_taps.0, params.los_delay_taps.1);
    let mut paths = vec![PathSpec {
        delay_s: los * t,
        power_db: 0.0,
        phase_rad: 0.0,
    }];

    let (lo, hi) = params.background_paths;
    let n_background = lo + rng.below(hi - lo + 1);
    for _ in 0..n_background {
        let offset = rng.uniform_in(params.background_delay_taps.0, params.background_delay_taps.1);
        paths.push(PathSpec {
            delay_s: (los + offset) * t,
            power_db: rng.uniform_in(params.background_power_db.0, params.background_power_db.1),
            phase_rad: rng.uniform_in(0.0, 2.0 * PI),
        });
    }

    if matches!(kind, PresetName::Green | PresetName::Blue) {
        let offset = rng.uniform_in(params.near_offset_taps.0, params.near_offset_taps.1);
        paths.push(PathSpec {
            delay_s: (los + offset) * t,
            power_db: rng.uniform_in(params.near_power_db.0, params.near_power_db.1),
            phase_rad: rng.uniform_in(0.0, 2.0 * PI),
        });
    }
    if kind == PresetName::Blue {
        let offset = rng.uniform_in(params.far_offset_taps.0, params.far_offset_taps.1);
        paths.push(PathSpec {
            delay_s: (los + offset) * t,
            power_db: rng.uniform_in(params.far_power_db.0, params.far_power_db.1),
            phase_rad: rng.uniform_in(0.0, 2.0 * PI),
        });
    }

    let spec = PathSet {
        paths,
        sample_period: t,
        num_taps: params.num_taps,
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_path(delay_taps: f64, num_taps: usize) -> PathSet {
        PathSet {
            paths: vec![PathSpec {
                delay_s: delay_taps * 0.25e-9,
                power_db: 0.0,
                phase_rad: 0.0,
            }],
            sample_period: 0.25e-9,
            num_taps,
        }
    }

    #[test]
    fn synthesize_integer_delay_is_unit_impulse() {
        let cir = synthesize(&single_path(0.0, 8)).unwrap();
        assert!((cir.taps[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        for l in 1..8 {
            assert!(cir.taps[l].norm() < 1e-15, "tap {l} = {}", cir.taps[l]);
        }
    }

    #[test]
    fn synthesize_half_sample_delay_matches_sinc_values() {
        let cir = synthesize(&single_path(0.5, 8)).unwrap();
        let two_over_pi = 2.0 / PI;
        assert!((cir.taps[0].re - two_over_pi).abs() < 1e-12);
        assert!((cir.taps[1].re - two_over_pi).abs() < 1e-12);
        assert!((cir.taps[2].re + 2.0 / (3.0 * PI)).abs() < 1e-12);
    }

    #[test]
    fn synthesize_two_paths() {
        let spec = PathSet {
            paths: vec![
                PathSpec { delay_s: 0.0, power_db: 0.0, phase_rad: 0.0 },
                PathSpec { delay_s: 2.0 * 0.25e-9, power_db: -10.0, phase_rad: 0.0 },
            ],
            sample_period: 0.25e-9,
            num_taps: 8,
        };
        let cir = synthesize(&spec).unwrap();
        assert!((cir.taps[0].re - 1.0).abs() < 1e-12);
        assert!((cir.taps[2].re - 10f64.powf(-0.5)).abs() < 1e-12);
        assert!(cir.taps[1].norm() < 1e-12);
    }

    #[test]
    fn synthesize_rejects_delay_outside_grid() {
        let err = synthesize(&single_path(9.0, 8)).unwrap_err();
        assert!(err.to_string().contains("outside grid"), "{err}");
    }

    #[test]
    fn path_set_requires_exactly_one_reference() {
        let mut spec = single_path(0.0, 8);
        spec.paths.push(PathSpec { delay_s: 1e-9, power_db: 0.0, phase_rad: 0.0 });
        assert!(spec.validate().is_err());
    }

    #[test]
    fn normalize_unit_power() {
        let cir =
            ChannelImpulseResponse::new(vec![Complex64::new(2.0, 0.0)], 1e-9, "t").unwrap();
        let n = cir.normalize().unwrap();
        assert!((n.taps[0].re - 1.0).abs() < 1e-15);

        let cir = ChannelImpulseResponse::new(
            vec![Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)],
            1e-9,
            "t",
        )
        .unwrap();
        let n = cir.normalize().unwrap();
        let expected = 1.0 / 2f64.sqrt();
        assert!((n.taps[0].re - expected).abs() < 1e-15);
        assert!((n.taps[1].re - expected).abs() < 1e-15);
    }

    #[test]
    fn normalize_is_idempotent() {
        let mut rng = CounterRng::new(5);
        let taps: Vec<Complex64> = (0..12).map(|_| rng.complex_gaussian(1.0)).collect();
        let cir = ChannelImpulseResponse::new(taps, 1e-9, "t").unwrap();
        let once = cir.normalize().unwrap();
        let twice = once.normalize().unwrap();
        assert!((once.total_power() - 1.0).abs() < 1e-12);
        for (a, b) in once.taps.iter().zip(&twice.taps) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn normalize_rejects_all_zero() {
        let cir = ChannelImpulseResponse::new(vec![Complex64::new(1.0, 0.0)], 1e-9, "t").unwrap();
        let mut zeroed = cir;
        zeroed.taps[0] = Complex64::new(0.0, 0.0);
        assert!(zeroed.normalize().is_err());
    }

    #[test]
    fn coherent_average_identity_for_single_snapshot() {
        let snap = vec![Complex64::new(0.3, -0.7), Complex64::new(1.0, 0.2)];
        let set = SnapshotSet::new(vec![snap.clone()]).unwrap();
        let avg = coherent_average(&set);
        for (a, b) in avg.taps.iter().zip(&snap) {
            assert!((a - b).norm() < 1e-15);
        }
        assert!(avg.skipped.is_empty());
    }

    #[test]
    fn coherent_average_removes_common_phase() {
        let mut rng = CounterRng::new(11);
        let h: Vec<Complex64> = (0..16).map(|_| rng.complex_gaussian(1.0)).collect();
        let rotated: Vec<Complex64> = h
            .iter()
            .map(|t| t * Complex64::from_polar(1.0, PI / 3.0))
            .collect();
        let set = SnapshotSet::new(vec![h.clone(), rotated]).unwrap();
        let avg = coherent_average(&set);
        for (a, b) in avg.taps.iter().zip(&h) {
            assert!((a - b).norm() < 1e-12, "|{a} - {b}|");
        }
    }

    #[test]
    fn coherent_average_gain_over_noisy_snapshots() {
        // 500 noisy phase-rotated copies: residual noise power ~ sigma^2 / 500.
        let mut rng = CounterRng::new(17);
        let len = 16;
        let h: Vec<Complex64> = (0..len).map(|_| rng.complex_gaussian(1.0)).collect();
        let sigma_sq = 0.01;
        let count = 500;
        let snaps: Vec<Vec<Complex64>> = (0..count)
            .map(|_| {
                let rot = Complex64::from_polar(1.0, rng.uniform_in(0.0, 2.0 * PI));
                h.iter().map(|t| rot * t + rng.complex_gaussian(sigma_sq)).collect()
            })
            .collect();
        let avg = coherent_average(&SnapshotSet::new(snaps).unwrap());
        // Align the global phase before measuring the residual.
        let inner: Complex64 = avg.taps.iter().zip(&h).map(|(a, b)| a * b.conj()).sum();
        let align = Complex64::from_polar(1.0, -inner.arg());
        let residual: f64 = avg
            .taps
            .iter()
            .zip(&h)
            .map(|(a, b)| (align * a - b).norm_sqr())
            .sum();
        let expected = sigma_sq * len as f64 / count as f64;
        assert!(
            residual < 3.0 * expected && residual > expected / 5.0,
            "residual {residual}, expected about {expected}"
        );
    }

    #[test]
    fn coherent_average_skips_orthogonal_snapshot() {
        let set = SnapshotSet::new(vec![
            vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
            vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
        ])
        .unwrap();
        let avg = coherent_average(&set);
        assert_eq!(avg.skipped, vec![1]);
    }

    #[test]
    fn sync_already_aligned_is_identity() {
        let cir = synthesize(&single_path(3.0, 16)).unwrap();
        let synced = cir.sync_to_peak(16).unwrap();
        assert_eq!(synced.peak_index, 3);
        for (a, b) in synced.taps.iter().zip(&cir.taps) {
            assert!((a - b).norm() < 1e-9, "|{a} - {b}|");
        }
    }

    #[test]
    fn sync_fractional_single_path() {
        let cir = synthesize(&single_path(3.3, 32)).unwrap();
        let synced = cir.sync_to_peak(16).unwrap();
        assert_eq!(synced.peak_index, 3);
        let pos = estimate_peak_position(&synced.taps, 16).unwrap();
        assert!(
            (pos - pos.round()).abs() < 0.05,
            "residual fractional offset {}",
            pos - pos.round()
        );
    }

    #[test]
    fn sync_round_trip_recovers_shift() {
        let upsample = 16;
        let base = synthesize(&single_path(8.0, 32)).unwrap();
        let mut rng = CounterRng::new(23);
        for _ in 0..20 {
            let eps = rng.uniform_in(-0.499, 0.499);
            let shifted = fractional_delay(&base.taps, eps);
            let pos = estimate_peak_position(&shifted, upsample).unwrap();
            let recovered = pos - pos.round() + (pos.round() - 8.0);
            assert!(
                (recovered - eps).abs() < 1.0 / (2.0 * upsample as f64),
                "eps {eps}, recovered {recovered}"
            );
        }
    }

    #[test]
    fn pdp_values() {
        let cir = ChannelImpulseResponse::new(
            vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
            1e-9,
            "t",
        )
        .unwrap();
        let pdp = cir.pdp();
        assert!((pdp[0] - 0.0).abs() < 1e-12);
        assert!((pdp[1] - PDP_FLOOR_DB).abs() < 1e-12);

        let half = 1.0 / 2f64.sqrt();
        let cir = ChannelImpulseResponse::new(
            vec![Complex64::new(half, 0.0), Complex64::new(half, 0.0)],
            1e-9,
            "t",
        )
        .unwrap();
        let pdp = cir.pdp();
        for p in pdp {
            assert!((p - (-3.0102999566398121)).abs() < 1e-10, "{p}");
        }
    }

    #[test]
    fn store_load_round_trip_is_bitwise() {
        let dir = std::env::temp_dir().join("linkeval_cir_roundtrip");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("ch.json");

        let mut rng = CounterRng::new(31);
        let taps: Vec<Complex64> = (0..9).map(|_| rng.complex_gaussian(1.0)).collect();
        let cir = ChannelImpulseResponse::new(taps, 0.25e-9, "roundtrip").unwrap();
        store_cir(&cir, &path).unwrap();
        let loaded = load_cir(&path).unwrap();
        assert_eq!(loaded.label, "roundtrip");
        assert_eq!(loaded.taps.len(), cir.taps.len());
        for (a, b) in loaded.taps.iter().zip(&cir.taps) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
        assert_eq!(loaded.sample_period.to_bits(), cir.sample_period.to_bits());
    }

    #[test]
    fn load_rejects_missing_sample_rate() {
        let dir = std::env::temp_dir().join("linkeval_cir_badfile");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.json");
        std::fs::write(
            &path,
            r#"{"format_version": 1, "label": "x", "taps": [[1.0, 0.0]]}"#,
        )
        .unwrap();
        let err = load_cir(&path).unwrap_err();
        assert!(err.to_string().contains("sample_rate_hz"), "{err}");
    }

    #[test]
    fn load_hand_written_file() {
        let dir = std::env::temp_dir().join("linkeval_cir_hand");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("hand.json");
        std::fs::write(
            &path,
            r#"{
              "format_version": 1,
              "label": "hand",
              "sample_rate_hz": 4e9,
              "taps": [[1.0, 0.0], [0.0, -0.5], [0.25, 0.0]]
            }"#,
        )
        .unwrap();
        let cir = load_cir(&path).unwrap();
        assert_eq!(cir.taps.len(), 3);
        assert_eq!(cir.taps[1], Complex64::new(0.0, -0.5));
        assert_eq!(cir.peak_index, 0);
        assert!((cir.sample_period - 0.25e-9).abs() < 1e-24);
    }

    #[test]
    fn preset_is_deterministic() {
        let a = preset_ensemble(PresetName::Mixed, 6, 99).unwrap();
        let b = preset_ensemble(PresetName::Mixed, 6, 99).unwrap();
        assert_eq!(a, b);
        let c = preset_ensemble(PresetName::Mixed, 6, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn preset_channels_are_normalized_and_synced() {
        for cir in preset_ensemble(PresetName::Mixed, 9, 3).unwrap() {
            assert!((cir.total_power() - 1.0).abs() < 1e-12, "{}", cir.label);
            let pos = estimate_peak_position(&cir.taps, 16).unwrap();
            assert!(
                (pos - cir.peak_index as f64).abs() < 0.05,
                "{}: peak at {pos}, index {}",
                cir.label,
                cir.peak_index
            );
        }
    }

    #[test]
    fn red_preset_background_stays_below_threshold() {
        for cir in preset_ensemble(PresetName::Red, 20, 12345).unwrap() {
            let pdp = cir.pdp();
            let peak_db = pdp[cir.peak_index];
            for (l, p) in pdp.iter().enumerate() {
                if l.abs_diff(cir.peak_index) >= 2 {
                    assert!(
                        p - peak_db < -30.0,
                        "{}: tap {l} at {} dB relative",
                        cir.label,
                        p - peak_db
                    );
                }
            }
        }
    }

    #[test]
    fn green_preset_has_near_secondary_peak() {
        for cir in preset_ensemble(PresetName::Green, 100, 7).unwrap() {
            let pdp = cir.pdp();
            let peak = cir.peak_index;
            let found = (peak + 1..=peak + 3).any(|l| {
                l + 1 < pdp.len() && pdp[l] >= pdp[l - 1] - 1e-12 && pdp[l] >= pdp[l + 1] - 1e-12
            });
            assert!(found, "{}: no secondary local maximum in +1..+3", cir.label);
        }
    }

    #[test]
    fn blue_preset_has_near_and_far_components() {
        for cir in preset_ensemble(PresetName::Blue, 10, 2).unwrap() {
            let pdp = cir.pdp();
            let peak = cir.peak_index;
            let near = (peak + 1..=peak + 3).map(|l| pdp[l]).fold(f64::MIN, f64::max);
            let far = (peak + 28..=peak + 32)
                .filter(|&l| l < pdp.len())
                .map(|l| pdp[l])
                .fold(f64::MIN, f64::max);
            assert!(near - pdp[peak] > -20.0, "{}: near at {near}", cir.label);
            assert!(far - pdp[peak] > -35.0, "{}: far at {far}", cir.label);
        }
    }

    #[test]
    fn unknown_preset_name_is_rejected() {
        assert!("purple".parse::<PresetName>().is_err());
    }
}
