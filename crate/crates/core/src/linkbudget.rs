//! OOK link budget: eye powers, noise variance, SNR, BER and the
//! achievable-rate solver.
//!
//! ```text
//! BER      = Q(sqrt(SNR))
//! SNR      = (R (Ps1 - Ps0))^2 / sigma_t^2
//! sigma_t^2 = sigma_pr^2 + sigma_bn^2 + sigma_sig^2
//! ```
//!
//! Noise is integrated over `B = min(factor * bit_rate, receiver_bandwidth)`.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::optics::{impulse_response, ImpulseResponse, OpticsError, TransmitterBranch, WfovReceiver};
use crate::scenario::Scenario;

pub const ELEMENTARY_CHARGE_C: f64 = 1.602_176_634e-19;

/// Reported in place of `-inf` dB when the eye is fully closed.
pub const SNR_DB_FLOOR: f64 = -999.0;

/// Lowest rate the achievable-rate search considers.
pub const MIN_SEARCH_RATE_HZ: f64 = 1e6;

/// Relative bracket width at which the rate bisection stops.
pub const RATE_REL_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinkBudgetError {
    #[error("SNR {0} is negative")]
    NegativeSnr(f64),
    #[error("total noise variance must be positive, got {0}")]
    ZeroVariance(f64),
    #[error("logic-1 power {ps1} W below logic-0 power {ps0} W")]
    ClosedEye { ps1: f64, ps0: f64 },
    #[error("impulse response has no bins")]
    EmptyResponse,
    #[error("bit rate {0} Hz must be positive")]
    InvalidBitRate(f64),
    #[error("target BER {0} outside (0, 0.5)")]
    InvalidTarget(f64),
    #[error("invalid noise parameters: {0}")]
    InvalidNoise(String),
    #[error(transparent)]
    Optics(#[from] OpticsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseParams {
    pub preamp_current_density_a_per_rthz: f64,
    /// Hard ceiling on the noise bandwidth.
    pub receiver_bandwidth_hz: f64,
    /// Ambient optical power on the detector.
    pub background_power_w: f64,
    /// Noise bandwidth as a multiple of the bit rate.
    pub noise_bandwidth_factor: f64,
}

impl Default for NoiseParams {
    /// 4.47 pA/sqrt(Hz) preamplifier on a 5 GHz receiver in a dark room.
    fn default() -> Self {
        NoiseParams {
            preamp_current_density_a_per_rthz: 4.47e-12,
            receiver_bandwidth_hz: 5e9,
            background_power_w: 0.0,
            noise_bandwidth_factor: 0.7,
        }
    }
}

impl NoiseParams {
    pub fn check(&self) -> Result<(), LinkBudgetError> {
        let fields = [
            ("preamp_current_density_a_per_rthz", self.preamp_current_density_a_per_rthz),
            ("receiver_bandwidth_hz", self.receiver_bandwidth_hz),
            ("background_power_w", self.background_power_w),
        ];
        for (name, v) in fields {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(LinkBudgetError::InvalidNoise(format!("{name} = {v} must be >= 0")));
            }
        }
        let f = self.noise_bandwidth_factor;
        if !(f > 0.0 && f <= 1.5) {
            return Err(LinkBudgetError::InvalidNoise(format!(
                "noise_bandwidth_factor = {f} outside (0, 1.5]"
            )));
        }
        Ok(())
    }

    pub fn noise_bandwidth_hz(&self, bit_rate_hz: f64) -> f64 {
        (self.noise_bandwidth_factor * bit_rate_hz).min(self.receiver_bandwidth_hz)
    }

    /// Highest bit rate whose noise bandwidth is not capped by the receiver.
    pub fn ceiling_rate_hz(&self) -> f64 {
        self.receiver_bandwidth_hz / self.noise_bandwidth_factor
    }
}

/// Mean-square noise currents (A^2) for one decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseVariance {
    pub bandwidth_hz: f64,
    pub preamp_a2: f64,
    pub background_a2: f64,
    pub signal_a2: f64,
}

impl NoiseVariance {
    pub fn total(&self) -> f64 {
        self.preamp_a2 + self.background_a2 + self.signal_a2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub bit_rate_hz: f64,
    pub ps1_w: f64,
    pub ps0_w: f64,
    pub responsivity_a_per_w: f64,
    pub noise_bandwidth_hz: f64,
    pub sigma2_preamp_a2: f64,
    pub sigma2_background_a2: f64,
    pub sigma2_signal_a2: f64,
    pub snr_linear: f64,
    /// `10 log10(snr_linear)`, or [`SNR_DB_FLOOR`] when `snr_linear` is 0.
    pub snr_db: f64,
    pub ber: f64,
}

impl LinkBudget {
    pub fn sigma2_total_a2(&self) -> f64 {
        self.sigma2_preamp_a2 + self.sigma2_background_a2 + self.sigma2_signal_a2
    }

    pub fn snr_is_floored(&self) -> bool {
        self.snr_linear == 0.0
    }
}

/// Gaussian tail probability, `0.5 erfc(x / sqrt 2)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

pub fn ber_from_snr(snr_linear: f64) -> Result<f64, LinkBudgetError> {
    if snr_linear.is_nan() || snr_linear < 0.0 {
        return Err(LinkBudgetError::NegativeSnr(snr_linear));
    }
    Ok(q_function(snr_linear.sqrt()))
}

/// Linear SNR at which `ber_from_snr` equals `target_ber`.
pub fn required_snr(target_ber: f64) -> Result<f64, LinkBudgetError> {
    if !(target_ber > 0.0 && target_ber < 0.5) {
        return Err(LinkBudgetError::InvalidTarget(target_ber));
    }
    // Q(x) is strictly decreasing; Q(40) is far below any representable target
    let (mut lo, mut hi) = (0.0_f64, 40.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if q_function(mid) > target_ber {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = 0.5 * (lo + hi);
    Ok(x * x)
}

/// Worst-case eye powers for OOK at `bit_rate_hz`.
///
/// The response is convolved with a unit rectangular pulse of one bit period
/// `T`. The sampling instant is the (earliest) maximum of the result.
/// `ps1` is that maximum: an isolated one between zeros. `ps0` is the sum of
/// the result at every other multiple of `T` from the sampling instant: an
/// isolated zero between ones.
pub fn eye_powers(ir: &ImpulseResponse, bit_rate_hz: f64) -> Result<(f64, f64), LinkBudgetError> {
    if !(bit_rate_hz > 0.0 && bit_rate_hz.is_finite()) {
        return Err(LinkBudgetError::InvalidBitRate(bit_rate_hz));
    }
    let bins = &ir.bins;
    if bins.is_empty() {
        return Err(LinkBudgetError::EmptyResponse);
    }
    let n = bins.len();

    // pulse length in bins; snap to an integer when within rounding of one
    let mut len = 1.0 / bit_rate_hz / ir.bin_width_s;
    if (len - len.round()).abs() < 1e-9 * len.max(1.0) {
        len = len.round();
    }

    // Bins i with lo < i <= hi, clipped to the response.
    let span = |lo: f64, hi: f64| -> f64 {
        if hi < 0.0 {
            return 0.0;
        }
        let first = (lo + 1.0).max(0.0) as usize;
        let last = (hi as usize).min(n - 1);
        if first > last {
            return 0.0;
        }
        bins[first..=last].iter().fold(0.0, |a, p| a + p)
    };

    // y at integer sample position s sums bins in (s - len, s]
    let mut sample = 0usize;
    let mut ps1 = f64::NEG_INFINITY;
    for s in 0..n {
        let y = span((s as f64 - len).floor(), s as f64);
        if y > ps1 {
            ps1 = y;
            sample = s;
        }
    }

    // Neighbouring windows share the edges floor(s0 + k len), so they tile
    // the time axis without gaps or overlap.
    let s0 = sample as f64;
    let edge = |k: i64| (s0 + k as f64 * len).floor();
    let k_before = (s0 / len).ceil() as i64 + 1;
    let k_after = ((n as f64 - s0) / len).ceil() as i64 + 1;
    let mut ps0 = 0.0;
    for k in -k_before..=k_after {
        if k == 0 {
            continue;
        }
        ps0 += span(edge(k - 1), edge(k));
    }
    Ok((ps1, ps0))
}

pub fn noise_variance(
    received_signal_power_w: f64,
    params: &NoiseParams,
    bit_rate_hz: f64,
    responsivity_a_per_w: f64,
) -> NoiseVariance {
    let b = params.noise_bandwidth_hz(bit_rate_hz);
    let density = params.preamp_current_density_a_per_rthz;
    let shot = 2.0 * ELEMENTARY_CHARGE_C * responsivity_a_per_w;
    NoiseVariance {
        bandwidth_hz: b,
        preamp_a2: density * density * b,
        background_a2: shot * params.background_power_w * b,
        signal_a2: shot * received_signal_power_w * b,
    }
}

/// `(R (ps1 - ps0))^2 / sigma_t2` as linear and dB values.
pub fn snr(
    ps1_w: f64,
    ps0_w: f64,
    sigma_t2_a2: f64,
    responsivity_a_per_w: f64,
) -> Result<(f64, f64), LinkBudgetError> {
    if sigma_t2_a2.is_nan() || sigma_t2_a2 <= 0.0 {
        return Err(LinkBudgetError::ZeroVariance(sigma_t2_a2));
    }
    if ps1_w < ps0_w {
        return Err(LinkBudgetError::ClosedEye { ps1: ps1_w, ps0: ps0_w });
    }
    let swing = responsivity_a_per_w * (ps1_w - ps0_w);
    let lin = swing * swing / sigma_t2_a2;
    Ok((lin, snr_to_db(lin)))
}

fn snr_to_db(lin: f64) -> f64 {
    if lin > 0.0 {
        10.0 * lin.log10()
    } else {
        SNR_DB_FLOOR
    }
}

/// Link budget at one bit rate from an already computed channel response.
///
/// Signal shot noise is evaluated at `ps1`. A closed eye (`ps0 > ps1`)
/// reports SNR 0 and BER 0.5.
pub fn budget_from_response(
    ir: &ImpulseResponse,
    receiver: &WfovReceiver,
    noise: &NoiseParams,
    bit_rate_hz: f64,
) -> Result<LinkBudget, LinkBudgetError> {
    noise.check()?;
    let (ps1, ps0) = eye_powers(ir, bit_rate_hz)?;
    let r = receiver.responsivity_a_per_w;
    let var = noise_variance(ps1, noise, bit_rate_hz, r);
    let (snr_linear, snr_db) = if ps1 >= ps0 {
        snr(ps1, ps0, var.total(), r)?
    } else {
        (0.0, SNR_DB_FLOOR)
    };
    Ok(LinkBudget {
        bit_rate_hz,
        ps1_w: ps1,
        ps0_w: ps0,
        responsivity_a_per_w: r,
        noise_bandwidth_hz: var.bandwidth_hz,
        sigma2_preamp_a2: var.preamp_a2,
        sigma2_background_a2: var.background_a2,
        sigma2_signal_a2: var.signal_a2,
        snr_linear,
        snr_db,
        ber: ber_from_snr(snr_linear)?,
    })
}

/// Full pipeline for one branch -> receiver link of `scene`.
pub fn evaluate_link(
    scene: &Scenario,
    branch: &TransmitterBranch,
    receiver: &WfovReceiver,
    bit_rate_hz: f64,
) -> Result<LinkBudget, LinkBudgetError> {
    let ir = impulse_response(&scene.environment(), branch, receiver, &scene.sim.channel())?;
    budget_from_response(&ir, receiver, &scene.noise, bit_rate_hz)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateStatus {
    /// Even the bandwidth-limited ceiling meets the target.
    Ceiling,
    /// Found by bisection inside the search bracket.
    Bisected,
    /// No rate in the bracket meets the target.
    NoService,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSolution {
    pub rate_hz: f64,
    pub status: RateStatus,
}

/// Largest bit rate in `[1 MHz, ceiling]` whose BER meets `target_ber`.
pub fn rate_from_response(
    ir: &ImpulseResponse,
    receiver: &WfovReceiver,
    noise: &NoiseParams,
    target_ber: f64,
) -> Result<RateSolution, LinkBudgetError> {
    if !(target_ber > 0.0 && target_ber < 0.5) {
        return Err(LinkBudgetError::InvalidTarget(target_ber));
    }
    noise.check()?;
    let ber_at = |rate: f64| budget_from_response(ir, receiver, noise, rate).map(|b| b.ber);

    let ceiling = noise.ceiling_rate_hz();
    if ceiling.is_finite() && ber_at(ceiling)? <= target_ber {
        return Ok(RateSolution { rate_hz: ceiling, status: RateStatus::Ceiling });
    }
    if ceiling.is_nan() || ceiling <= MIN_SEARCH_RATE_HZ || ber_at(MIN_SEARCH_RATE_HZ)? > target_ber {
        return Ok(RateSolution { rate_hz: 0.0, status: RateStatus::NoService });
    }

    // invariant: ber(lo) <= target < ber(hi)
    let (mut lo, mut hi) = (MIN_SEARCH_RATE_HZ, ceiling);
    while hi - lo > RATE_REL_TOLERANCE * lo {
        let mid = 0.5 * (lo + hi);
        if ber_at(mid)? <= target_ber {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(RateSolution { rate_hz: lo, status: RateStatus::Bisected })
}

pub fn achievable_rate(
    scene: &Scenario,
    branch: &TransmitterBranch,
    receiver: &WfovReceiver,
    target_ber: f64,
) -> Result<RateSolution, LinkBudgetError> {
    if !(target_ber > 0.0 && target_ber < 0.5) {
        return Err(LinkBudgetError::InvalidTarget(target_ber));
    }
    let ir = impulse_response(&scene.environment(), branch, receiver, &scene.sim.channel())?;
    rate_from_response(&ir, receiver, &scene.noise, target_ber)
}
