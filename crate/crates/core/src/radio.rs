//! Channel model: pathloss, SINR, and per-TTI achievable rates.
//!
//! Long (large-packet) transmissions use the Shannon rate; short-packet
//! transmissions use the finite-blocklength rate with the channel-dispersion
//! penalty. All functions are pure; fading state is owned by the caller.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::real::Real;

/// OFDM symbols carried by one resource block in one TTI
/// (12 subcarriers x 14 symbols).
pub const SYMBOLS_PER_RB: u32 = 168;

#[derive(Debug, Error, PartialEq)]
pub enum RadioError {
    #[error("distance must be at least 1 m, got {0}")]
    DistanceTooSmall(f64),
    #[error("probability must lie strictly inside (0, 1), got {0}")]
    ProbabilityOutOfRange(f64),
    #[error("invalid channel parameter {name}: {value}")]
    InvalidParam { name: &'static str, value: f64 },
}

/// Deterministic distance-based attenuation model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathlossModel {
    /// Macro-cell log-distance model: `PL(dB) = 128.1 + 37.6 log10(d_km)`.
    UrbanMacro,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FadingModel {
    None,
    /// Unit-mean Rayleigh power fading, redrawn i.i.d. each TTI.
    RayleighPerTti,
}

/// Static radio parameters shared by every link in a scenario.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelParams<R: Real> {
    pub tx_power_w: R,
    pub rb_bandwidth_hz: R,
    pub num_rbs: u32,
    pub noise_psd_w_hz: R,
    pub tti_s: R,
    pub pathloss: PathlossModel,
    pub shadowing_stddev_db: R,
    pub fading: FadingModel,
}

impl<R: Real> ChannelParams<R> {
    #[allow(clippy::too_many_arguments)] // one argument per physical parameter
    pub fn new(
        tx_power_w: R,
        rb_bandwidth_hz: R,
        num_rbs: u32,
        noise_psd_w_hz: R,
        tti_s: R,
        pathloss: PathlossModel,
        shadowing_stddev_db: R,
        fading: FadingModel,
    ) -> Result<Self, RadioError> {
        let check = |name: &'static str, v: R, ok: bool| -> Result<(), RadioError> {
            if ok {
                Ok(())
            } else {
                Err(RadioError::InvalidParam { name, value: v.to_f64_lossy() })
            }
        };
        check("tx_power_w", tx_power_w, tx_power_w > R::zero())?;
        check("rb_bandwidth_hz", rb_bandwidth_hz, rb_bandwidth_hz > R::zero())?;
        check("num_rbs", R::of(num_rbs as f64), num_rbs >= 1)?;
        check("noise_psd_w_hz", noise_psd_w_hz, noise_psd_w_hz > R::zero())?;
        check("tti_s", tti_s, tti_s > R::zero())?;
        check(
            "shadowing_stddev_db",
            shadowing_stddev_db,
            shadowing_stddev_db >= R::zero(),
        )?;
        Ok(Self {
            tx_power_w,
            rb_bandwidth_hz,
            num_rbs,
            noise_psd_w_hz,
            tti_s,
            pathloss,
            shadowing_stddev_db,
            fading,
        })
    }

    /// Total system bandwidth in Hz; the SINR noise term is taken over the
    /// whole band, consistent with equal power allocation across it.
    #[inline]
    pub fn total_bandwidth_hz(&self) -> R {
        self.rb_bandwidth_hz * R::of(self.num_rbs as f64)
    }
}

/// Per-UE link state for the current TTI.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkState<R: Real> {
    pub ue_id: crate::UeId,
    pub distance_m: R,
    /// Log-normal shadowing in dB, fixed per UE for a whole episode.
    pub shadowing_db: R,
    /// Linear power fading gain, redrawn each TTI.
    pub fading_gain: R,
    /// Linear SINR for the current TTI.
    pub sinr: R,
}

impl<R: Real> LinkState<R> {
    pub fn new(
        ue_id: crate::UeId,
        distance_m: R,
        shadowing_db: R,
        params: &ChannelParams<R>,
    ) -> Result<Self, RadioError> {
        let mut link = Self { ue_id, distance_m, shadowing_db, fading_gain: R::one(), sinr: R::zero() };
        link.update_fading(R::one(), params)?;
        Ok(link)
    }

    /// Installs this TTI's fading gain and recomputes the SINR.
    pub fn update_fading(&mut self, fading_gain: R, params: &ChannelParams<R>) -> Result<(), RadioError> {
        debug_assert!(fading_gain >= R::zero());
        self.fading_gain = fading_gain;
        let pl_db = pathloss_db(params.pathloss, self.distance_m)?;
        let atten_db = pl_db + self.shadowing_db;
        let gain = R::of(10.0f64.powf(-(atten_db.to_f64_lossy()) / 10.0)) * fading_gain;
        self.sinr = sinr(gain, params);
        Ok(())
    }
}

/// Short-packet (finite-blocklength) transmission parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShortPacketParams<R: Real> {
    /// Decoding error probability epsilon.
    pub error_prob: R,
    /// Codeword blocklength in symbols.
    pub blocklength: u32,
}

impl<R: Real> ShortPacketParams<R> {
    pub fn new(error_prob: R, blocklength: u32) -> Result<Self, RadioError> {
        if error_prob <= R::zero() || error_prob >= R::one() {
            return Err(RadioError::ProbabilityOutOfRange(error_prob.to_f64_lossy()));
        }
        if blocklength < 1 {
            return Err(RadioError::InvalidParam { name: "blocklength", value: blocklength as f64 });
        }
        Ok(Self { error_prob, blocklength })
    }

    /// Blocklength tied to an allocation: `rbs` RBs for one TTI.
    pub fn for_allocation(error_prob: R, rbs: u32) -> Result<Self, RadioError> {
        Self::new(error_prob, rbs.max(1) * SYMBOLS_PER_RB)
    }
}

/// Distance-based pathloss in dB. Requires `distance_m >= 1`.
pub fn pathloss_db<R: Real>(model: PathlossModel, distance_m: R) -> Result<R, RadioError> {
    let d = distance_m.to_f64_lossy();
    if !(d >= 1.0) {
        return Err(RadioError::DistanceTooSmall(d));
    }
    match model {
        PathlossModel::UrbanMacro => Ok(R::of(128.1 + 37.6 * (d / 1000.0).log10())),
    }
}

/// Linear SINR under equal power allocation over the whole band:
/// `P * H / (B_total * N0)`.
#[inline]
pub fn sinr<R: Real>(channel_gain: R, params: &ChannelParams<R>) -> R {
    params.tx_power_w * channel_gain / (params.total_bandwidth_hz() * params.noise_psd_w_hz)
}

/// Gaussian Q-function `Q(x) = P(N(0,1) > x) = erfc(x / sqrt(2)) / 2`.
pub fn q_function<R: Real>(x: R) -> R {
    R::of(0.5 * erfc(x.to_f64_lossy() / core::f64::consts::SQRT_2))
}

/// Inverse of the Gaussian Q-function.
///
/// Returns `x` with `Q(x) = p`, accurate to well below 1e-9 in `Q(x)`.
/// Uses a safeguarded Newton iteration on the `erfc`-based forward function;
/// `p = 0.5` maps to exactly 0 and `p > 0.5` is resolved by symmetry.
pub fn inverse_q<R: Real>(p: R) -> Result<R, RadioError> {
    let p64 = p.to_f64_lossy();
    if !(p64 > 0.0 && p64 < 1.0) {
        return Err(RadioError::ProbabilityOutOfRange(p64));
    }
    Ok(R::of(inverse_q_f64(p64)))
}

fn inverse_q_f64(p: f64) -> f64 {
    use core::cmp::Ordering;
    match p.partial_cmp(&0.5).expect("validated probability") {
        Ordering::Equal => 0.0,
        Ordering::Greater => -inverse_q_f64(1.0 - p),
        Ordering::Less => {
            let q = |x: f64| 0.5 * erfc(x / core::f64::consts::SQRT_2);
            let phi = |x: f64| (-0.5 * x * x).exp() / (core::f64::consts::TAU).sqrt();
            // Q(x) <= exp(-x^2/2)/2, so this start bounds the root from above.
            let mut hi = (-2.0 * p.ln()).sqrt();
            let mut lo = 0.0;
            let mut x = hi;
            for _ in 0..200 {
                let f = q(x) - p;
                if f > 0.0 {
                    lo = x;
                } else {
                    hi = x;
                }
                let d = phi(x);
                let mut next = if d > 0.0 { x + f / d } else { 0.5 * (lo + hi) };
                if !(next > lo && next < hi) {
                    next = 0.5 * (lo + hi);
                }
                if (next - x).abs() <= 1e-15 * x.abs().max(1.0) {
                    return next;
                }
                x = next;
            }
            x
        }
    }
}

/// Complementary error function, evaluated in f64.
///
/// Power series below 2, Lentz continued fraction above; both converge to
/// near machine precision on their ranges.
pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x < 2.0 { 1.0 - erf_series(x) } else { erfc_continued_fraction(x) }
}

fn erf_series(x: f64) -> f64 {
    let mut term = x;
    let mut sum = x;
    let mut n = 1.0;
    loop {
        term *= -x * x / n;
        let add = term / (2.0 * n + 1.0);
        sum += add;
        if add.abs() <= 1e-17 * sum.abs() {
            break;
        }
        n += 1.0;
    }
    sum * core::f64::consts::FRAC_2_SQRT_PI
}

fn erfc_continued_fraction(x: f64) -> f64 {
    // erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
    // evaluated with the modified Lentz algorithm.
    const TINY: f64 = 1e-300;
    let mut f = x.max(TINY);
    let mut c = f;
    let mut d = 0.0;
    let mut n = 1.0;
    for _ in 0..300 {
        let a = n / 2.0;
        d = x + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = x + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
        n += 1.0;
    }
    (-x * x).exp() / (core::f64::consts::PI).sqrt() / f
}

/// Channel dispersion `C = 1 - 1/(1 + sinr)^2`, in `[0, 1)`.
///
/// Mathematically always below 1; the clamp keeps the invariant where
/// rounding would land exactly on 1 at very large SINR.
#[inline]
pub fn channel_dispersion<R: Real>(sinr: R) -> R {
    debug_assert!(sinr >= R::zero());
    let one_plus = R::one() + sinr;
    (R::one() - R::one() / (one_plus * one_plus)).min(R::one() - R::epsilon())
}

/// Shannon rate in bits per TTI for `rbs` resource blocks.
#[inline]
pub fn rate_long<R: Real>(rbs: u32, sinr: R, params: &ChannelParams<R>) -> R {
    if rbs == 0 {
        return R::zero();
    }
    let bw = params.rb_bandwidth_hz * R::of(rbs as f64);
    params.tti_s * bw * (R::one() + sinr).log2()
}

/// Finite-blocklength rate in bits per TTI for `rbs` resource blocks,
/// clamped below at zero.
pub fn rate_short<R: Real>(
    rbs: u32,
    sinr: R,
    sp: &ShortPacketParams<R>,
    params: &ChannelParams<R>,
) -> R {
    let q_inv = R::of(inverse_q_f64(sp.error_prob.to_f64_lossy()));
    rate_short_with_qinv(rbs, sinr, sp.blocklength, q_inv, params)
}

/// Hot-path variant of [`rate_short`] for callers that have already
/// evaluated `inverse_q(error_prob)` once per slice.
pub fn rate_short_with_qinv<R: Real>(
    rbs: u32,
    sinr: R,
    blocklength: u32,
    q_inv_eps: R,
    params: &ChannelParams<R>,
) -> R {
    if rbs == 0 {
        return R::zero();
    }
    let dispersion = channel_dispersion(sinr);
    let penalty = (dispersion / R::of(blocklength as f64)).sqrt() * q_inv_eps * R::E().log2();
    let spectral = (R::one() + sinr).log2() - penalty;
    if spectral <= R::zero() {
        return R::zero();
    }
    let bw = params.rb_bandwidth_hz * R::of(rbs as f64);
    params.tti_s * bw * spectral
}
