//! SCM tone identification: the tone plan, the receiver noise model, Monte
//! Carlo estimation of desired/undesired tone currents, the likelihood-ratio
//! threshold and the resulting decision probabilities.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::channel::ChannelModel;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::scene::{Color, ReceiverKind, COMMUNICATION_FLOOR};

/// Elementary charge, C.
pub const ELECTRON_CHARGE: f64 = 1.602_176_634e-19;

/// Upper-tail probability of the standard normal distribution.
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TonePlan {
    pub first_tone: f64,
    pub spacing: f64,
    pub tones: usize,
    pub bpf_bandwidth: f64,
}

impl Default for TonePlan {
    fn default() -> Self {
        TonePlan {
            first_tone: 500e6,
            spacing: 60e6,
            tones: 12,
            bpf_bandwidth: 4e6,
        }
    }
}

impl TonePlan {
    /// Tone frequency of unit `id` (1-based).
    pub fn tone_for_unit(&self, id: usize) -> f64 {
        self.first_tone + self.spacing * (id - 1) as f64
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (1..=self.tones).map(|i| self.tone_for_unit(i)).collect()
    }

    /// Every BPF passband lies below `channel_bandwidth`.
    pub fn fits_below(&self, channel_bandwidth: f64) -> bool {
        self.tone_for_unit(self.tones) + 0.5 * self.bpf_bandwidth < channel_bandwidth
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    /// Preamplifier input noise current density, A/√Hz.
    pub preamp_density: f64,
    /// Background photocurrent per photodetector, A.
    pub background_current: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            preamp_density: 4.5e-12,
            background_current: 100e-6,
        }
    }
}

/// Components of the receiver noise, each a standard deviation in amps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseBreakdown {
    pub background: f64,
    pub signal_shot: f64,
    pub preamp: f64,
}

impl NoiseBreakdown {
    pub fn total(&self) -> f64 {
        (self.background.powi(2) + self.signal_shot.powi(2) + self.preamp.powi(2)).sqrt()
    }
}

pub fn noise_breakdown(
    model: &NoiseModel,
    responsivity: f64,
    received_power: f64,
    bandwidth: f64,
) -> Result<NoiseBreakdown> {
    if received_power < 0.0 {
        return Err(Error::NegativePower(received_power));
    }
    if !(bandwidth > 0.0) {
        return Err(Error::InvalidConfig(format!("noise bandwidth must be positive, got {bandwidth}")));
    }
    Ok(NoiseBreakdown {
        background: (2.0 * ELECTRON_CHARGE * model.background_current * bandwidth).sqrt(),
        signal_shot: (2.0 * ELECTRON_CHARGE * responsivity * received_power * bandwidth).sqrt(),
        preamp: model.preamp_density * bandwidth.sqrt(),
    })
}

/// Root-sum-square of background shot, signal shot and preamplifier noise.
pub fn total_noise_sigma(model: &NoiseModel, responsivity: f64, received_power: f64, bandwidth: f64) -> Result<f64> {
    Ok(noise_breakdown(model, responsivity, received_power, bandwidth)?.total())
}

/// Amplitude of the tone photocurrent; its square is the tone's electrical
/// power.
pub fn tone_current(responsivity: f64, received_power: f64) -> f64 {
    responsivity * received_power / 2.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToneCurrentDistributions {
    pub m_ds: f64,
    pub sigma_ds: f64,
    pub m_us: f64,
    pub sigma_us: f64,
}

impl ToneCurrentDistributions {
    fn var_h2(&self, sigma_t: f64) -> f64 {
        self.sigma_ds.powi(2) + sigma_t.powi(2)
    }

    fn var_h1(&self, sigma_t: f64) -> f64 {
        self.sigma_us.powi(2) + sigma_t.powi(2)
    }

    /// Density of the BPF output when the tone is the undesired one.
    pub fn likelihood_h1(&self, sigma_t: f64, z: f64) -> f64 {
        gaussian_pdf(z, self.m_us, self.var_h1(sigma_t))
    }

    /// Density of the BPF output when the tone is the desired one.
    pub fn likelihood_h2(&self, sigma_t: f64, z: f64) -> f64 {
        gaussian_pdf(z, self.m_ds, self.var_h2(sigma_t))
    }
}

fn gaussian_pdf(z: f64, mean: f64, var: f64) -> f64 {
    (-(z - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Likelihood-ratio threshold between the undesired (H1) and desired (H2)
/// tone hypotheses.
///
/// For unequal variances the equal-likelihood condition is a quadratic in
/// `z`; the root returned is the boundary of the H2 region that faces the
/// H1 mean, which lies between the two means for any separable pair.
pub fn optimal_threshold(d: &ToneCurrentDistributions, sigma_t: f64) -> Result<f64> {
    if !(d.m_ds > d.m_us) {
        return Err(Error::NotSeparable {
            m_ds: d.m_ds,
            m_us: d.m_us,
        });
    }
    let (md, mu) = (d.m_ds, d.m_us);
    let vd = d.var_h2(sigma_t);
    let vu = d.var_h1(sigma_t);
    let diff = d.sigma_ds.powi(2) - d.sigma_us.powi(2);
    if diff.abs() < 1e-12 * sigma_t.powi(2) || diff == 0.0 {
        return Ok(0.5 * (md + mu));
    }
    // (vu - vd) z^2 - 2 (vu md - vd mu) z + (vu md^2 - vd mu^2) + vd vu ln(vd / vu) = 0
    // Solved in the offset variable x = z - mu to keep cancellation small.
    let delta = md - mu;
    let a = vu - vd;
    let b = -2.0 * vu * delta;
    let c = vu * delta * delta + vd * vu * (vd / vu).ln();
    let disc = (b * b - 4.0 * a * c).max(0.0);
    let sq = disc.sqrt();
    // Numerically stable pair of roots.
    let q = -0.5 * (b + b.signum() * sq);
    let (r1, r2) = (q / a, c / q);
    let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
    // vu > vd: H2 wins inside [lo, hi] -> lower root.
    // vd > vu: H2 wins outside [lo, hi] -> upper root.
    let x = if a > 0.0 { lo } else { hi };
    Ok(mu + x)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionModel {
    pub distributions: ToneCurrentDistributions,
    pub sigma_t: f64,
    pub threshold: f64,
    pub pc_ds: f64,
    pub pf_us: f64,
    pub pc_us: f64,
    pub pc_d: f64,
    pub pwd: f64,
    pub units: usize,
}

pub fn detection_probabilities(
    d: &ToneCurrentDistributions,
    sigma_t: f64,
    threshold: f64,
    units: usize,
) -> DetectionModel {
    let units = units.max(1);
    let pc_ds = upper_tail(threshold, d.m_ds, d.var_h2(sigma_t));
    let pf_us = upper_tail(threshold, d.m_us, d.var_h1(sigma_t));
    let pc_us = 1.0 - pf_us;
    let others = (units - 1) as f64;
    let pc_d = pc_ds * pc_us.powf(others);
    // 1 - pc_d without cancellation when pc_d is close to 1.
    let pwd = -(pc_ds.ln() + others * (-pf_us).ln_1p()).exp_m1();
    DetectionModel {
        distributions: *d,
        sigma_t,
        threshold,
        pc_ds,
        pf_us,
        pc_us,
        pc_d,
        pwd,
        units,
    }
}

fn upper_tail(threshold: f64, mean: f64, var: f64) -> f64 {
    if var == 0.0 {
        return if threshold < mean {
            1.0
        } else if threshold == mean {
            0.5
        } else {
            0.0
        };
    }
    q_function((threshold - mean) / var.sqrt())
}

impl DetectionModel {
    /// Flat `key = value` block.
    pub fn to_key_values(&self) -> String {
        let d = &self.distributions;
        let mut s = String::new();
        for (k, v) in [
            ("m_ds", d.m_ds),
            ("sigma_ds", d.sigma_ds),
            ("m_us", d.m_us),
            ("sigma_us", d.sigma_us),
            ("sigma_t", self.sigma_t),
            ("opt_th", self.threshold),
            ("pc_ds", self.pc_ds),
            ("pf_us", self.pf_us),
            ("pc_us", self.pc_us),
            ("pc_d", self.pc_d),
            ("pwd", self.pwd),
        ] {
            let _ = writeln!(s, "{k} = {v:.9e}");
        }
        let _ = writeln!(s, "units = {}", self.units);
        s
    }
}

// ---------------------------------------------------------------------------
// Monte Carlo estimation of the tone-current distributions
// ---------------------------------------------------------------------------

/// Positions by how many units reach the receiver directly.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CaseCounts {
    pub no_los: usize,
    pub one: usize,
    pub two: usize,
    pub three_or_more: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToneSamples {
    /// Desired (strongest LOS unit) tone currents at case-two positions.
    pub desired: Vec<f64>,
    /// Tone currents of the other LOS unit at the same positions.
    pub undesired: Vec<f64>,
    pub counts: CaseCounts,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn from_samples(samples: &[f64], bins: usize) -> Histogram {
        let bins = bins.max(1);
        let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if samples.is_empty() {
            return Histogram {
                edges: vec![0.0, 1.0],
                counts: vec![0],
            };
        }
        let width = if hi > lo { (hi - lo) / bins as f64 } else { lo.abs().max(1e-30) * 1e-6 };
        let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0u64; bins];
        for &s in samples {
            let i = (((s - lo) / width) as usize).min(bins - 1);
            counts[i] += 1;
        }
        Histogram { edges, counts }
    }

    /// `lower_edge,upper_edge,count` rows.
    pub fn to_delimited(&self) -> String {
        let mut s = String::from("lower,upper,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            let _ = writeln!(s, "{:.9e},{:.9e},{}", self.edges[i], self.edges[i + 1], c);
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistributionEstimate {
    pub distributions: ToneCurrentDistributions,
    pub samples: ToneSamples,
    pub desired_histogram: Histogram,
    pub undesired_histogram: Histogram,
}

/// Uniform receiver positions on the communication floor. Draw `i` comes
/// from its own ChaCha stream, so any subset can be regenerated in isolation.
pub fn random_positions(width: f64, length: f64, n: usize, seed: u64) -> Vec<Vec3> {
    (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let x: f64 = rng.gen();
            let y: f64 = rng.gen();
            Vec3::new(x * width, y * length, COMMUNICATION_FLOOR)
        })
        .collect()
}

/// Green tone currents seen at each position, grouped by LOS case.
pub fn tone_samples_at(model: &ChannelModel, kind: ReceiverKind, positions: &[Vec3]) -> Result<ToneSamples> {
    let scene = model.scene();
    let mut out = ToneSamples {
        desired: Vec::new(),
        undesired: Vec::new(),
        counts: CaseCounts::default(),
    };
    for &p in positions {
        let rx = scene.receiver(kind, p)?;
        let pds: Vec<_> = (0..rx.face_count()).map(|f| rx.photodetector(f, Color::Green)).collect();
        let visible: Vec<usize> = scene
            .units
            .iter()
            .filter(|u| pds.iter().any(|pd| model.los_visible(u.id, pd)))
            .map(|u| u.id)
            .collect();
        match visible.len() {
            0 => out.counts.no_los += 1,
            1 => out.counts.one += 1,
            2 => {
                out.counts.two += 1;
                let r_g = rx.responsivity[Color::Green];
                let current = |id: usize| {
                    let best = model
                        .receive_power(id, &rx, Color::Green)
                        .into_iter()
                        .fold(0.0, f64::max);
                    tone_current(r_g, best)
                };
                let (a, b) = (current(visible[0]), current(visible[1]));
                // Ties go to the lower unit id.
                let (desired, undesired) = if b > a { (b, a) } else { (a, b) };
                out.desired.push(desired);
                out.undesired.push(undesired);
            }
            _ => out.counts.three_or_more += 1,
        }
    }
    Ok(out)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Gaussian fit (sample mean and standard deviation) of case-two tone
/// currents.
pub fn fit_distributions(samples: ToneSamples, histogram_bins: usize) -> Result<DistributionEstimate> {
    let c = samples.counts;
    if samples.desired.len() < 2 {
        return Err(Error::TooFewSamples {
            total: c.no_los + c.one + c.two + c.three_or_more,
            no_los: c.no_los,
            case_one: c.one,
            case_two: c.two,
            case_three: c.three_or_more,
        });
    }
    let (m_ds, sigma_ds) = mean_std(&samples.desired);
    let (m_us, sigma_us) = mean_std(&samples.undesired);
    Ok(DistributionEstimate {
        distributions: ToneCurrentDistributions {
            m_ds,
            sigma_ds,
            m_us,
            sigma_us,
        },
        desired_histogram: Histogram::from_samples(&samples.desired, histogram_bins),
        undesired_histogram: Histogram::from_samples(&samples.undesired, histogram_bins),
        samples,
    })
}

pub fn estimate_distributions(
    model: &ChannelModel,
    kind: ReceiverKind,
    n_positions: usize,
    seed: u64,
    histogram_bins: usize,
) -> Result<DistributionEstimate> {
    if n_positions < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 positions, got {n_positions}")));
    }
    let room = &model.scene().room;
    let positions = random_positions(room.width, room.length, n_positions, seed);
    fit_distributions(tone_samples_at(model, kind, &positions)?, histogram_bins)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preamp_only_noise() {
        let m = NoiseModel {
            preamp_density: 4.5e-12,
            background_current: 0.0,
        };
        let s = total_noise_sigma(&m, 0.3, 0.0, 4e6).unwrap();
        assert!((s - 9.0e-9).abs() < 1e-20);
    }

    #[test]
    fn signal_shot_noise() {
        let m = NoiseModel {
            preamp_density: 0.0,
            background_current: 0.0,
        };
        // R * Pr = 3e-4 A
        let s = total_noise_sigma(&m, 0.3, 1e-3, 4e6).unwrap();
        assert!((s - 1.961e-8).abs() < 1e-11, "{s}");
    }

    #[test]
    fn all_noise_terms_combine() {
        let m = NoiseModel {
            preamp_density: 4.5e-12,
            background_current: 100e-6,
        };
        let s = total_noise_sigma(&m, 0.4, 2e-6, 5e8).unwrap();
        let q = 1.602_176_634e-19;
        let want = (2.0 * q * 100e-6 * 5e8 + 2.0 * q * 0.4 * 2e-6 * 5e8 + 4.5e-12f64.powi(2) * 5e8).sqrt();
        assert!((s - want).abs() / want < 1e-14);
        assert!(matches!(total_noise_sigma(&m, 0.3, -1.0, 4e6), Err(Error::NegativePower(_))));
    }

    #[test]
    fn tone_current_cases() {
        assert!((tone_current(0.3, 1e-3) - 1.5e-4).abs() < 1e-18);
        assert_eq!(tone_current(0.3, 0.0), 0.0);
    }

    #[test]
    fn tone_plan_layout() {
        let p = TonePlan::default();
        let f = p.frequencies();
        assert_eq!(f.len(), 12);
        assert_eq!(f[0], 500e6);
        assert_eq!(f[11], 1160e6);
        assert!(f.windows(2).all(|w| (w[1] - w[0] - 60e6).abs() < 1e-3));
        assert!(p.fits_below(1.23e9));
        assert!(!p.fits_below(1.1e9));
    }

    #[test]
    fn equal_variance_threshold_is_midpoint() {
        let d = ToneCurrentDistributions {
            m_ds: 10.0,
            sigma_ds: 1.5,
            m_us: 3.0,
            sigma_us: 1.5,
        };
        assert_eq!(optimal_threshold(&d, 0.7).unwrap(), 6.5);
    }

    #[test]
    fn inseparable_means_rejected() {
        let d = ToneCurrentDistributions {
            m_ds: 1.0,
            sigma_ds: 1.0,
            m_us: 1.0,
            sigma_us: 0.5,
        };
        assert!(matches!(optimal_threshold(&d, 0.1), Err(Error::NotSeparable { .. })));
    }

    #[test]
    fn threshold_matches_frozen_intersection() {
        // Frozen from a 40-digit bisection of f(z|H2) - f(z|H1) on [2, 10].
        let d = ToneCurrentDistributions {
            m_ds: 10.0,
            sigma_ds: 1.0,
            m_us: 2.0,
            sigma_us: 0.5,
        };
        let th = optimal_threshold(&d, 0.2).unwrap();
        let l1 = d.likelihood_h1(0.2, th);
        let l2 = d.likelihood_h2(0.2, th);
        assert!((l1 - l2).abs() <= 1e-9 * l1.max(l2));
        assert!((th - 4.808271556433568).abs() < 1e-12, "{th}");
    }

    #[test]
    fn threshold_at_mean_gives_half() {
        let d = ToneCurrentDistributions {
            m_ds: 5.0,
            sigma_ds: 1.0,
            m_us: 1.0,
            sigma_us: 0.3,
        };
        let m = detection_probabilities(&d, 0.1, 5.0, 12);
        assert!((m.pc_ds - 0.5).abs() < 1e-15);
    }

    #[test]
    fn composition_of_probabilities() {
        // Pc_ds = 0.99, Pc_us = 0.999, M = 2 -> 0.98901
        assert!((0.99f64 * 0.999 - 0.98901).abs() < 1e-15);
        let d = ToneCurrentDistributions {
            m_ds: 8.0,
            sigma_ds: 1.0,
            m_us: 2.0,
            sigma_us: 0.5,
        };
        let th = optimal_threshold(&d, 0.3).unwrap();
        let m = detection_probabilities(&d, 0.3, th, 2);
        assert!((m.pc_d - m.pc_ds * m.pc_us).abs() < 1e-15);
        assert!((m.pwd - (1.0 - m.pc_d)).abs() < 1e-15);
        let one = detection_probabilities(&d, 0.3, th, 1);
        assert!((one.pwd - (1.0 - one.pc_ds)).abs() < 1e-15);
    }

    #[test]
    fn large_desired_mean_threshold_limits() {
        let (sds, sus, mus) = (1.0, 0.5, 2.0);
        let m_ds = 1e4 * 2.0;
        let d = ToneCurrentDistributions {
            m_ds,
            sigma_ds: sds,
            m_us: mus,
            sigma_us: sus,
        };
        // Unequal spreads: the crossing tends to m_ds * s_us / (s_ds + s_us).
        let th = optimal_threshold(&d, 0.0).unwrap();
        assert!((th / m_ds - sus / (sds + sus)).abs() < 0.01, "{}", th / m_ds);
        // Receiver noise dominating both spreads brings it to m_ds / 2.
        let th = optimal_threshold(&d, 100.0).unwrap();
        assert!((th / m_ds - 0.5).abs() < 0.01, "{}", th / m_ds);
    }

    #[test]
    fn histogram_counts_everything() {
        let xs = [1.0, 2.0, 2.5, 3.0, 4.0];
        let h = Histogram::from_samples(&xs, 3);
        assert_eq!(h.counts.iter().sum::<u64>(), 5);
        assert_eq!(h.edges.len(), 4);
        assert_eq!(h.edges[0], 1.0);
        assert!((h.edges[3] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn positions_are_reproducible_and_inside() {
        let a = random_positions(4.0, 8.0, 50, 7);
        let b = random_positions(4.0, 8.0, 50, 7);
        assert_eq!(a, b);
        assert!(a.iter().all(|p| (0.0..4.0).contains(&p.x) && (0.0..8.0).contains(&p.y) && p.z == 1.0));
        let c = random_positions(4.0, 8.0, 50, 8);
        assert_ne!(a, c);
        // Prefix stability: draw i does not depend on n.
        assert_eq!(&random_positions(4.0, 8.0, 10, 7)[..], &a[..10]);
    }
}
