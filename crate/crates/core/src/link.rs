//! Data-channel evaluation: in-slot and spill-over received power, SINR with
//! co-channel interference, OOK bit error rate and the highest bit rate that
//! keeps the target error rate.

use statrs::function::erf::erfc_inv;

use crate::allocation::{scale_cci, Assignment, UserCci};
use crate::channel::{ChannelModel, ImpulseResponse};
use crate::error::Result;
use crate::scene::{Color, PerColor, Receiver};
use crate::scm::{q_function, total_noise_sigma, NoiseModel};

pub const TARGET_BER: f64 = 1e-6;

/// Relative width at which the rate bisection stops.
pub const RATE_TOLERANCE: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EyePowers {
    /// Power arriving within one bit period of the first arrival, W.
    pub ps1: f64,
    /// Power arriving later, W.
    pub ps0: f64,
    pub bit_rate: f64,
}

impl EyePowers {
    pub fn total(&self) -> f64 {
        self.ps1 + self.ps0
    }

    /// Eye opening, floored at zero.
    pub fn swing(&self) -> f64 {
        (self.ps1 - self.ps0).max(0.0)
    }
}

/// Splits `tx_power` times the response into bins starting before
/// `t0 + 1/bit_rate` and bins starting at or after it.
pub fn eye_powers(ir: &ImpulseResponse, tx_power: f64, bit_rate: f64) -> EyePowers {
    assert!(bit_rate > 0.0, "bit rate must be positive");
    let taps = ir.combined();
    let slot_bins = (1.0 / bit_rate) / ir.bin_width();
    let inside = (slot_bins.ceil() as usize).min(taps.len());
    let ps1: f64 = taps[..inside].iter().sum();
    let ps0: f64 = taps[inside..].iter().sum();
    EyePowers {
        ps1: tx_power * ps1,
        ps0: tx_power * ps0,
        bit_rate,
    }
}

pub fn sinr(responsivity: f64, eye: &EyePowers, sigma_td: f64, interference: f64) -> f64 {
    (responsivity * eye.swing()).powi(2) / (sigma_td * sigma_td + interference)
}

/// OOK bit error rate, Q(√SINR).
pub fn ber(sinr: f64) -> f64 {
    q_function(sinr.max(0.0).sqrt())
}

/// Inverse of the standard normal upper tail.
pub fn q_inverse(p: f64) -> f64 {
    std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

/// SINR at which `ber` equals `target`.
pub fn sinr_for_ber(target: f64) -> f64 {
    q_inverse(target).powi(2)
}

pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Everything about one color channel except the bit rate.
#[derive(Clone, Copy, Debug)]
pub struct ChannelBudget<'a> {
    pub ir: &'a ImpulseResponse,
    pub tx_power: f64,
    pub responsivity: f64,
    pub sigma_td: f64,
    pub interference: f64,
}

impl ChannelBudget<'_> {
    pub fn sinr_at(&self, bit_rate: f64) -> f64 {
        let eye = eye_powers(self.ir, self.tx_power, bit_rate);
        sinr(self.responsivity, &eye, self.sigma_td, self.interference)
    }

    /// SINR when the bit period covers the whole response.
    pub fn sinr_limit(&self) -> f64 {
        let total = self.tx_power * self.ir.total_gain();
        (self.responsivity * total).powi(2) / (self.sigma_td * self.sigma_td + self.interference)
    }
}

/// Largest bit rate in (0, `cap`] whose SINR reaches the target-BER
/// threshold, or 0 when none does. The returned rate always satisfies the
/// threshold; it lies within `RATE_TOLERANCE` of the boundary.
pub fn max_data_rate(budget: &ChannelBudget, cap: f64) -> f64 {
    let threshold = sinr_for_ber(TARGET_BER);
    if budget.ir.is_empty() || budget.sinr_limit() < threshold {
        return 0.0;
    }
    if budget.sinr_at(cap) >= threshold {
        return cap;
    }
    // Below this rate the whole response sits inside one slot.
    let span = budget.ir.len() as f64 * budget.ir.bin_width();
    let mut lo = (1.0 / span).min(cap);
    if budget.sinr_at(lo) < threshold {
        return 0.0;
    }
    let mut hi = cap;
    while (hi - lo) > RATE_TOLERANCE * lo {
        let mid = 0.5 * (lo + hi);
        if budget.sinr_at(mid) >= threshold {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ColorLink {
    pub face: usize,
    /// SINR at the reported rate, or the long-slot limit when the rate is 0.
    pub sinr: f64,
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UserLink {
    pub user: usize,
    pub assignment: Assignment,
    pub colors: PerColor<ColorLink>,
}

impl UserLink {
    pub fn unserved(user: usize) -> Self {
        UserLink {
            user,
            assignment: Assignment::Unserved,
            colors: PerColor::from_fn(|_| ColorLink {
                face: 0,
                sinr: 0.0,
                rate: 0.0,
            }),
        }
    }

    pub fn aggregate(&self) -> f64 {
        self.colors.iter().map(|(_, c)| c.rate).sum()
    }
}

/// Per-color rates for a served user; each color uses the face with the
/// highest rate, then the highest SINR.
pub fn evaluate_link(
    model: &ChannelModel,
    receiver: &Receiver,
    unit_id: usize,
    cci: &UserCci,
    noise: &NoiseModel,
) -> Result<PerColor<ColorLink>> {
    let unit = model.scene().unit(unit_id);
    // Face geometry is shared by the four colors.
    let responses: Vec<ImpulseResponse> = (0..receiver.face_count())
        .map(|f| model.impulse_response(unit_id, &receiver.photodetector(f, Color::Green)))
        .collect();
    let mut out = PerColor::from_fn(|_| ColorLink {
        face: 0,
        sinr: 0.0,
        rate: 0.0,
    });
    for color in Color::ALL {
        let r = receiver.responsivity[color];
        let mut best: Option<ColorLink> = None;
        for (face, ir) in responses.iter().enumerate() {
            if ir.is_empty() {
                continue;
            }
            let tx_power = unit.power[color];
            let received = tx_power * ir.total_gain();
            let budget = ChannelBudget {
                ir,
                tx_power,
                responsivity: r,
                sigma_td: total_noise_sigma(noise, r, received, receiver.bandwidth)?,
                interference: scale_cci(cci.face_green[face], color, &receiver.responsivity, &unit.power),
            };
            let rate = max_data_rate(&budget, receiver.bandwidth);
            let s = if rate > 0.0 { budget.sinr_at(rate) } else { budget.sinr_limit() };
            let cand = ColorLink { face, sinr: s, rate };
            let better = match best {
                None => true,
                Some(b) => cand.rate > b.rate || (cand.rate == b.rate && cand.sinr > b.sinr),
            };
            if better {
                best = Some(cand);
            }
        }
        if let Some(b) = best {
            out[color] = b;
        }
    }
    Ok(out)
}
