//! Ray-traced optical channel: line of sight plus first- and second-order
//! diffuse reflections, binned in time.
//!
//! A [`ChannelModel`] owns the scene and lazily builds, per light unit, the
//! power landing on every first-bounce element and the time-resolved power
//! re-emitted by every second-bounce element. Both depend only on the
//! transmitter, so a detector's impulse response is a cheap gather over the
//! cached fields. Work is split per element and each element is summed
//! sequentially, which keeps results bit-identical for any worker count.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::scene::{Color, LightUnit, Photodetector, Receiver, Scene};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// 0.05 ns bins put the Nyquist frequency at 10 GHz.
pub const DEFAULT_BIN_WIDTH: f64 = 0.05e-9;

/// Line-of-sight gain from a Lambertian emitter of order `order` to `pd`.
pub fn los_gain(tx: Vec3, tx_normal: Vec3, order: f64, pd: &Photodetector) -> f64 {
    let v = pd.position - tx;
    let d2 = v.norm_squared();
    if d2 == 0.0 {
        return 0.0;
    }
    let d = d2.sqrt();
    let cos_emit = v.dot(tx_normal) / d;
    let cos_inc = -v.dot(pd.normal) / d;
    if cos_emit <= 0.0 || cos_inc < pd.cos_fov() - 1e-12 {
        return 0.0;
    }
    (order + 1.0) * pd.area * cos_emit.powf(order) * cos_inc / (2.0 * PI * d2)
}

/// Gain from a first-order Lambertian surface patch at `center` to `pd`,
/// per unit power leaving the patch; zero outside the field of view.
#[inline]
fn patch_to_detector(center: Vec3, normal: Vec3, pd: &Photodetector, cos_fov: f64) -> Option<(f64, f64)> {
    let v = pd.position - center;
    let d2 = v.norm_squared();
    let out = v.dot(normal);
    if out <= 0.0 || d2 == 0.0 {
        return None;
    }
    let d = d2.sqrt();
    let inc = -v.dot(pd.normal);
    if inc < (cos_fov - 1e-12) * d {
        return None;
    }
    Some((out * inc * pd.area / (PI * d2 * d2), d))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PathOrder {
    LineOfSight,
    FirstReflection,
    SecondReflection,
}

/// Time-binned channel gain for one transmitter and one photodetector, per
/// watt emitted by each LD of the transmitter, split by reflection order.
#[derive(Clone, Debug, PartialEq)]
pub struct ImpulseResponse {
    bin_width: f64,
    /// Absolute index (time / bin width) of the first stored bin.
    start_bin: usize,
    los: Vec<f64>,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl ImpulseResponse {
    pub fn empty(bin_width: f64) -> Self {
        ImpulseResponse {
            bin_width,
            start_bin: 0,
            los: Vec::new(),
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    /// Builds a response from absolute-time samples `(seconds, gain)`.
    pub fn from_samples(bin_width: f64, order: PathOrder, samples: &[(f64, f64)]) -> Self {
        let mut acc = Accumulator::new(bin_width);
        for &(t, g) in samples {
            acc.deposit(order, t, g);
        }
        acc.finish()
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn len(&self) -> usize {
        self.los.len()
    }

    pub fn is_empty(&self) -> bool {
        self.los.is_empty()
    }

    pub fn start_bin(&self) -> usize {
        self.start_bin
    }

    /// Start time of the first nonzero bin.
    pub fn origin_time(&self) -> f64 {
        self.start_bin as f64 * self.bin_width
    }

    pub fn component(&self, order: PathOrder) -> &[f64] {
        match order {
            PathOrder::LineOfSight => &self.los,
            PathOrder::FirstReflection => &self.first,
            PathOrder::SecondReflection => &self.second,
        }
    }

    /// All orders summed, bin by bin.
    pub fn combined(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| self.los[i] + self.first[i] + self.second[i])
            .collect()
    }

    pub fn gain(&self, order: PathOrder) -> f64 {
        self.component(order).iter().sum()
    }

    pub fn total_gain(&self) -> f64 {
        self.combined().iter().sum()
    }

    /// Two-column `time_s,gain` text.
    pub fn to_delimited(&self) -> String {
        let mut s = String::from("time_s,gain\n");
        for (i, g) in self.combined().iter().enumerate() {
            let _ = writeln!(s, "{:.6e},{:.9e}", (self.start_bin + i) as f64 * self.bin_width, g);
        }
        s
    }
}

/// Grows on demand; trims leading and trailing empty bins on finish.
#[derive(Debug)]
struct Accumulator {
    bin_width: f64,
    los: Vec<f64>,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl Accumulator {
    fn new(bin_width: f64) -> Self {
        Accumulator {
            bin_width,
            los: Vec::new(),
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    #[inline]
    fn ensure(&mut self, idx: usize) {
        if idx >= self.los.len() {
            let n = idx + 1;
            self.los.resize(n, 0.0);
            self.first.resize(n, 0.0);
            self.second.resize(n, 0.0);
        }
    }

    #[inline]
    fn deposit_bin(&mut self, order: PathOrder, idx: usize, g: f64) {
        self.ensure(idx);
        match order {
            PathOrder::LineOfSight => self.los[idx] += g,
            PathOrder::FirstReflection => self.first[idx] += g,
            PathOrder::SecondReflection => self.second[idx] += g,
        }
    }

    #[inline]
    fn deposit(&mut self, order: PathOrder, t: f64, g: f64) {
        self.deposit_bin(order, (t / self.bin_width) as usize, g);
    }

    fn finish(self) -> ImpulseResponse {
        let nz = |i: &usize| self.los[*i] != 0.0 || self.first[*i] != 0.0 || self.second[*i] != 0.0;
        let n = self.los.len();
        let Some(lo) = (0..n).find(nz) else {
            return ImpulseResponse::empty(self.bin_width);
        };
        let hi = (0..n).rev().find(nz).unwrap() + 1;
        ImpulseResponse {
            bin_width: self.bin_width,
            start_bin: lo,
            los: self.los[lo..hi].to_vec(),
            first: self.first[lo..hi].to_vec(),
            second: self.second[lo..hi].to_vec(),
        }
    }
}

/// Per-order gain totals without time resolution.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GainBreakdown {
    pub los: f64,
    pub first: f64,
    pub second: f64,
}

impl GainBreakdown {
    pub fn total(&self) -> f64 {
        self.los + self.first + self.second
    }
}

/// Power landing on the lit first-bounce elements, already scaled by their
/// reflectance, per LD (stride = emitters per unit).
#[derive(Debug)]
struct FirstBounceField {
    centers: Vec<Vec3>,
    normals: Vec<Vec3>,
    emitters: usize,
    power: Vec<f64>,
    time: Vec<f64>,
    total: Vec<f64>,
}

/// Reflected power leaving one second-bounce element, binned by the time it
/// leaves.
#[derive(Debug, Clone)]
struct SecondBounceCell {
    start_bin: usize,
    hist: Vec<f64>,
    total: f64,
}

#[derive(Debug)]
struct UnitField {
    first: FirstBounceField,
    second: Vec<SecondBounceCell>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub bin_width: f64,
    /// Reflection orders to trace (0, 1 or 2).
    pub max_reflections: u8,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            bin_width: DEFAULT_BIN_WIDTH,
            max_reflections: 2,
        }
    }
}

/// Scene plus lazily traced per-unit reflection fields.
pub struct ChannelModel {
    scene: Scene,
    config: ChannelConfig,
    fields: Vec<OnceLock<UnitField>>,
}

impl ChannelModel {
    pub fn new(scene: Scene, config: ChannelConfig) -> Result<Self> {
        if !(config.bin_width > 0.0) {
            return Err(Error::InvalidConfig(format!("bin width must be positive, got {}", config.bin_width)));
        }
        if config.max_reflections > 2 {
            return Err(Error::InvalidConfig("at most two reflection orders are traced".into()));
        }
        let fields = (0..scene.units.len()).map(|_| OnceLock::new()).collect();
        Ok(ChannelModel { scene, config, fields })
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn bin_width(&self) -> f64 {
        self.config.bin_width
    }

    /// Traces every unit's reflection fields up front.
    pub fn prepare_all(&self) {
        for u in &self.scene.units {
            self.field(u.id);
        }
    }

    fn field(&self, unit_id: usize) -> &UnitField {
        self.fields[unit_id - 1].get_or_init(|| self.trace_unit(self.scene.unit(unit_id)))
    }

    fn trace_unit(&self, unit: &LightUnit) -> UnitField {
        let n_emit = unit.emitters.len();
        let order = unit.lambertian_order;
        let mut first = FirstBounceField {
            centers: Vec::new(),
            normals: Vec::new(),
            emitters: n_emit,
            power: Vec::new(),
            time: Vec::new(),
            total: Vec::new(),
        };
        if self.config.max_reflections >= 1 {
            for el in &self.scene.fine_elements {
                if el.reflectance == 0.0 {
                    continue;
                }
                let mut lit = false;
                let mut p = Vec::with_capacity(n_emit);
                let mut t = Vec::with_capacity(n_emit);
                for &ld in &unit.emitters {
                    let v = el.center - ld;
                    let d2 = v.norm_squared();
                    let d = d2.sqrt();
                    let cos_emit = v.dot(LightUnit::NORMAL) / d;
                    let cos_inc = -v.dot(el.normal) / d;
                    let g = if cos_emit > 0.0 && cos_inc > 0.0 {
                        (order + 1.0) * el.area * cos_emit.powf(order) * cos_inc / (2.0 * PI * d2)
                    } else {
                        0.0
                    };
                    lit |= g > 0.0;
                    p.push(g * el.reflectance);
                    t.push(d / SPEED_OF_LIGHT);
                }
                if lit {
                    first.centers.push(el.center);
                    first.normals.push(el.normal);
                    first.total.push(p.iter().sum());
                    first.power.extend(p);
                    first.time.extend(t);
                }
            }
        }

        let second = if self.config.max_reflections >= 2 {
            let room = &self.scene.room;
            let diag = (room.width.powi(2) + room.length.powi(2) + room.height.powi(2)).sqrt();
            let t_max = first.time.iter().copied().fold(0.0, f64::max) + diag / SPEED_OF_LIGHT;
            let n_bins = (t_max / self.config.bin_width) as usize + 2;
            let bw = self.config.bin_width;
            let first = &first;
            self.scene
                .coarse_elements
                .par_iter()
                .map_init(
                    || vec![0.0f64; n_bins],
                    |hist, el| {
                        if el.reflectance == 0.0 {
                            return SecondBounceCell {
                                start_bin: 0,
                                hist: Vec::new(),
                                total: 0.0,
                            };
                        }
                        let (mut lo, mut hi) = (usize::MAX, 0usize);
                        let scale = el.area * el.reflectance / PI;
                        for i in 0..first.centers.len() {
                            let v = el.center - first.centers[i];
                            let out = v.dot(first.normals[i]);
                            if out <= 0.0 {
                                continue;
                            }
                            let inc = -v.dot(el.normal);
                            if inc <= 0.0 {
                                continue;
                            }
                            let d2 = v.norm_squared();
                            let g = out * inc * scale / (d2 * d2);
                            let dt = d2.sqrt() / SPEED_OF_LIGHT;
                            let base = i * first.emitters;
                            for k in 0..first.emitters {
                                let b = ((first.time[base + k] + dt) / bw) as usize;
                                hist[b] += first.power[base + k] * g;
                                lo = lo.min(b);
                                hi = hi.max(b);
                            }
                        }
                        if lo > hi {
                            return SecondBounceCell {
                                start_bin: 0,
                                hist: Vec::new(),
                                total: 0.0,
                            };
                        }
                        let cell_hist: Vec<f64> = hist[lo..=hi].to_vec();
                        hist[lo..=hi].iter_mut().for_each(|v| *v = 0.0);
                        SecondBounceCell {
                            start_bin: lo,
                            total: cell_hist.iter().sum(),
                            hist: cell_hist,
                        }
                    },
                )
                .collect()
        } else {
            Vec::new()
        };
        UnitField { first, second }
    }

    /// Impulse response from light unit `unit_id` (1-based) to `pd`.
    pub fn impulse_response(&self, unit_id: usize, pd: &Photodetector) -> ImpulseResponse {
        let unit = self.scene.unit(unit_id);
        let mut acc = Accumulator::new(self.config.bin_width);
        for &ld in &unit.emitters {
            let g = los_gain(ld, LightUnit::NORMAL, unit.lambertian_order, pd);
            if g > 0.0 {
                acc.deposit(PathOrder::LineOfSight, ld.distance(pd.position) / SPEED_OF_LIGHT, g);
            }
        }
        if self.config.max_reflections == 0 {
            return acc.finish();
        }
        let field = self.field(unit_id);
        let cos_fov = pd.cos_fov();
        let f = &field.first;
        for i in 0..f.centers.len() {
            let Some((g, d)) = patch_to_detector(f.centers[i], f.normals[i], pd, cos_fov) else {
                continue;
            };
            let dt = d / SPEED_OF_LIGHT;
            let base = i * f.emitters;
            for k in 0..f.emitters {
                acc.deposit(PathOrder::FirstReflection, f.time[base + k] + dt, f.power[base + k] * g);
            }
        }
        let bw = self.config.bin_width;
        for (el, cell) in self.scene.coarse_elements.iter().zip(&field.second) {
            if cell.hist.is_empty() {
                continue;
            }
            let Some((g, d)) = patch_to_detector(el.center, el.normal, pd, cos_fov) else {
                continue;
            };
            // Bin centers shifted by the flight time to the detector.
            let shift = (0.5 + d / SPEED_OF_LIGHT / bw).floor() as usize;
            let base = cell.start_bin + shift;
            acc.ensure(base + cell.hist.len());
            for (j, &p) in cell.hist.iter().enumerate() {
                acc.deposit_bin(PathOrder::SecondReflection, base + j, p * g);
            }
        }
        acc.finish()
    }

    /// Total gain per order without building the time profile.
    pub fn gain(&self, unit_id: usize, pd: &Photodetector) -> GainBreakdown {
        let unit = self.scene.unit(unit_id);
        let mut out = GainBreakdown::default();
        for &ld in &unit.emitters {
            out.los += los_gain(ld, LightUnit::NORMAL, unit.lambertian_order, pd);
        }
        if self.config.max_reflections == 0 {
            return out;
        }
        let field = self.field(unit_id);
        let cos_fov = pd.cos_fov();
        let f = &field.first;
        for i in 0..f.centers.len() {
            if let Some((g, _)) = patch_to_detector(f.centers[i], f.normals[i], pd, cos_fov) {
                out.first += f.total[i] * g;
            }
        }
        for (el, cell) in self.scene.coarse_elements.iter().zip(&field.second) {
            if cell.total == 0.0 {
                continue;
            }
            if let Some((g, _)) = patch_to_detector(el.center, el.normal, pd, cos_fov) {
                out.second += cell.total * g;
            }
        }
        out
    }

    /// True when at least one LD of the unit reaches `pd` directly.
    pub fn los_visible(&self, unit_id: usize, pd: &Photodetector) -> bool {
        let unit = self.scene.unit(unit_id);
        unit.emitters
            .iter()
            .any(|&ld| los_gain(ld, LightUnit::NORMAL, unit.lambertian_order, pd) > 0.0)
    }

    /// Received optical power on each face's photodetector of `color`.
    pub fn receive_power(&self, unit_id: usize, receiver: &Receiver, color: Color) -> Vec<f64> {
        let tx = self.scene.unit(unit_id).power[color];
        (0..receiver.face_count())
            .map(|f| tx * self.gain(unit_id, &receiver.photodetector(f, color)).total())
            .collect()
    }
}

/// Free-standing form of [`ChannelModel::impulse_response`].
pub fn trace_impulse_response(model: &ChannelModel, unit_id: usize, pd: &Photodetector) -> ImpulseResponse {
    model.impulse_response(unit_id, pd)
}

// ---------------------------------------------------------------------------
// Frequency domain
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThreeDbCriterion {
    /// Magnitude drops to 1/√2 of DC.
    #[default]
    Sqrt2,
    /// Magnitude drops to 1/2 of DC.
    Half,
}

impl ThreeDbCriterion {
    pub fn ratio(self) -> f64 {
        match self {
            ThreeDbCriterion::Sqrt2 => std::f64::consts::FRAC_1_SQRT_2,
            ThreeDbCriterion::Half => 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bandwidth {
    Hz(f64),
    /// No crossing below the Nyquist frequency of the binning.
    Flat,
}

impl Bandwidth {
    pub fn hz(self) -> Option<f64> {
        match self {
            Bandwidth::Hz(f) => Some(f),
            Bandwidth::Flat => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyResponse {
    pub frequencies: Vec<f64>,
    /// Normalized to 1 at DC.
    pub magnitude: Vec<f64>,
}

impl FrequencyResponse {
    pub fn to_delimited(&self) -> String {
        let mut s = String::from("frequency_hz,magnitude\n");
        for (f, m) in self.frequencies.iter().zip(&self.magnitude) {
            let _ = writeln!(s, "{f:.6e},{m:.9e}");
        }
        s
    }
}

/// |H(f)| / H(0) of the binned response.
pub fn magnitude_at(taps: &[f64], bin_width: f64, f: f64) -> f64 {
    let dc: f64 = taps.iter().sum();
    let w = 2.0 * PI * f * bin_width;
    let (mut re, mut im) = (0.0, 0.0);
    for (j, &h) in taps.iter().enumerate() {
        if h == 0.0 {
            continue;
        }
        let (s, c) = (w * j as f64).sin_cos();
        re += h * c;
        im -= h * s;
    }
    (re * re + im * im).sqrt() / dc
}

pub fn frequency_response(ir: &ImpulseResponse, f_max: f64, points: usize) -> Result<FrequencyResponse> {
    let taps = ir.combined();
    if taps.iter().sum::<f64>() <= 0.0 {
        return Err(Error::ZeroEnergy);
    }
    let points = points.max(2);
    let frequencies: Vec<f64> = (0..points).map(|i| f_max * i as f64 / (points - 1) as f64).collect();
    let magnitude = frequencies
        .iter()
        .map(|&f| magnitude_at(&taps, ir.bin_width(), f))
        .collect();
    Ok(FrequencyResponse { frequencies, magnitude })
}

/// Lowest frequency where the normalized magnitude response falls to the
/// criterion's ratio.
pub fn three_db_bandwidth(ir: &ImpulseResponse, criterion: ThreeDbCriterion) -> Result<Bandwidth> {
    let taps = ir.combined();
    if !(taps.iter().sum::<f64>() > 0.0) {
        return Err(Error::ZeroEnergy);
    }
    let bw = ir.bin_width();
    let nyquist = 0.5 / bw;
    let target = criterion.ratio();
    const STEPS: usize = 4000;
    let mut prev = 0.0;
    for i in 1..=STEPS {
        let f = nyquist * i as f64 / STEPS as f64;
        if magnitude_at(&taps, bw, f) <= target {
            let (mut lo, mut hi) = (prev, f);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if magnitude_at(&taps, bw, mid) <= target {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(Bandwidth::Hz(0.5 * (lo + hi)));
        }
        prev = f;
    }
    Ok(Bandwidth::Flat)
}
