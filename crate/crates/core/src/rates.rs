//! Achievable secure rates, in bits per channel use, and the secrecy cost.
//!
//! Every formula compares what the legitimate receivers collect against what
//! leaks to the eavesdroppers. With no eavesdropper present the leakage is
//! zero. Rates are clamped at zero; the unclamped value is kept in
//! [`RateReport::raw_rate`].

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::beamforming::{zf_residual, zf_tolerance, BeamformingVector, SerialLayout};
use crate::channel::{amp_gain, power_gain, ChannelParams};
use crate::error::{Error, Result};
use crate::geometry::Placement;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Wiretap,
    WiretapColluding,
    ParallelZf,
    ParallelGeneral,
    SerialZf,
    SerialGeneral,
    SerialColludingZf,
    SerialColludingGeneral,
}

impl Scheme {
    pub const ALL: [Scheme; 8] = [
        Scheme::Wiretap,
        Scheme::WiretapColluding,
        Scheme::ParallelZf,
        Scheme::ParallelGeneral,
        Scheme::SerialZf,
        Scheme::SerialGeneral,
        Scheme::SerialColludingZf,
        Scheme::SerialColludingGeneral,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Wiretap => "wiretap",
            Scheme::WiretapColluding => "wiretap-colluding",
            Scheme::ParallelZf => "parallel-zf",
            Scheme::ParallelGeneral => "parallel-general",
            Scheme::SerialZf => "serial-zf",
            Scheme::SerialGeneral => "serial-general",
            Scheme::SerialColludingZf => "serial-colluding-zf",
            Scheme::SerialColludingGeneral => "serial-colluding-general",
        }
    }

    pub fn is_colluding(&self) -> bool {
        matches!(
            self,
            Scheme::WiretapColluding | Scheme::SerialColludingZf | Scheme::SerialColludingGeneral
        )
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config("scheme", format!("unknown scheme {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub scheme: Scheme,
    /// `max(0, raw_rate)`.
    pub rate_bits: f64,
    pub raw_rate: f64,
    pub broadcast_term: Option<f64>,
    pub multiaccess_term: Option<f64>,
    /// Legitimate node index of the bottleneck receiver.
    pub limiting_receiver: Option<usize>,
    /// Eavesdropper index of the worst eavesdropper (absent when colluding
    /// or when there is none).
    pub limiting_eavesdropper: Option<usize>,
}

impl RateReport {
    fn new(scheme: Scheme, raw_rate: f64) -> Self {
        RateReport {
            scheme,
            rate_bits: raw_rate.max(0.0),
            raw_rate,
            broadcast_term: None,
            multiaccess_term: None,
            limiting_receiver: None,
            limiting_eavesdropper: None,
        }
    }
}

/// `log₂((N^e/N^l) (N^l + signal) / (N^e + leak))`.
fn zf_log(signal: f64, leak: f64, params: &ChannelParams) -> f64 {
    ((params.noise_eav / params.noise_legit) * (params.noise_legit + signal) / (params.noise_eav + leak)).log2()
}

/// Index and value of the largest entry, `None` for an empty slice.
fn argmax(values: impl IntoIterator<Item = f64>) -> Option<(usize, f64)> {
    values
        .into_iter()
        .enumerate()
        .fold(None, |best, (i, v)| match best {
            Some((_, b)) if b >= v => best,
            _ => Some((i, v)),
        })
}

/// Eavesdropper leakage seen by the wiretap code: the strongest single
/// eavesdropper, or the sum over all of them when they collude.
fn leak_power(eav_power: &[f64], colluding: bool) -> (f64, Option<usize>) {
    if colluding {
        (eav_power.iter().sum(), None)
    } else {
        match argmax(eav_power.iter().copied()) {
            Some((j, v)) => (v, Some(j)),
            None => (0.0, None),
        }
    }
}

/// Wyner wiretap coding at the source with amplitude gains `h_dest` and
/// `h_eavs` and source power `p1`.
pub fn wiretap_rate(h_dest: f64, h_eavs: &[f64], p1: f64, params: &ChannelParams, colluding: bool) -> RateReport {
    let eav_power: Vec<f64> = h_eavs.iter().map(|h| h * h * p1).collect();
    let (leak, j) = leak_power(&eav_power, colluding);
    let scheme = if colluding {
        Scheme::WiretapColluding
    } else {
        Scheme::Wiretap
    };
    let mut r = RateReport::new(scheme, zf_log(h_dest * h_dest * p1, leak, params));
    r.limiting_eavesdropper = j;
    r
}

/// Wiretap rate between the placement's source and destination.
pub fn direct_wiretap_rate(placement: &Placement, p1: f64, params: &ChannelParams, colluding: bool) -> RateReport {
    let s = placement.source_point();
    let h_dest = amp_gain(&s, &placement.dest_point(), params.alpha);
    let h_eavs: Vec<f64> = placement.eav.iter().map(|e| amp_gain(&s, e, params.alpha)).collect();
    let mut r = wiretap_rate(h_dest, &h_eavs, p1, params, colluding);
    r.limiting_receiver = Some(placement.dest);
    r
}

/// Relays whose link from the source beats the destination link and every
/// scaled eavesdropper link.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaySelection {
    /// Qualifying legitimate nodes, nearest to the source first.
    pub relays: Vec<usize>,
    /// Weakest qualifying relay.
    pub i_star: Option<usize>,
}

impl RelaySelection {
    /// Transmitter set: source first, then the relays.
    pub fn transmitters(&self, source: usize) -> Vec<usize> {
        std::iter::once(source).chain(self.relays.iter().copied()).collect()
    }
}

/// Tests `|h_{1i}|² ≥ max((N^l/N^e) |h_{1j}|² ∀j, |h_{1,dest}|²)` for every
/// candidate (all legitimate nodes except source and destination when
/// `candidates` is `None`). Ties count as qualifying.
pub fn select_parallel_relays(
    placement: &Placement,
    params: &ChannelParams,
    candidates: Option<&[usize]>,
) -> RelaySelection {
    let s = placement.source_point();
    let a = params.alpha;
    let eav_max = placement
        .eav
        .iter()
        .map(|e| power_gain(&s, e, a))
        .fold(0.0, f64::max);
    let threshold = (params.noise_legit / params.noise_eav * eav_max).max(power_gain(&s, &placement.dest_point(), a));
    let all: Vec<usize>;
    let pool = match candidates {
        Some(c) => c,
        None => {
            all = (0..placement.n_l()).collect();
            &all
        }
    };
    let mut relays: Vec<(usize, f64)> = pool
        .iter()
        .filter(|&&i| i != placement.source && i != placement.dest)
        .map(|&i| (i, power_gain(&s, &placement.legit[i], a)))
        .filter(|&(_, g)| g >= threshold)
        .collect();
    relays.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    RelaySelection {
        i_star: relays.last().map(|r| r.0),
        relays: relays.into_iter().map(|r| r.0).collect(),
    }
}

/// Gains from the transmitters to every eavesdropper, `n_e × |T|`.
pub fn eav_matrix(placement: &Placement, tx: &[usize], alpha: f64) -> DMatrix<f64> {
    DMatrix::from_fn(placement.n_e(), tx.len(), |j, i| {
        amp_gain(&placement.legit[tx[i]], &placement.eav[j], alpha)
    })
}

/// Gains from the transmitters to one legitimate node.
pub fn gain_vector(placement: &Placement, tx: &[usize], rx: usize, alpha: f64) -> DVector<f64> {
    let r = placement.legit[rx];
    DVector::from_iterator(tx.len(), tx.iter().map(|&t| amp_gain(&placement.legit[t], &r, alpha)))
}

struct ParallelTerms {
    /// `|h_{1i}|² p1` per relay.
    relay_power: Vec<f64>,
    /// Power at the destination: direct link plus coherent beam.
    dest_power: f64,
    /// `|h_{1j}|² p1` per eavesdropper.
    eav_fresh: Vec<f64>,
}

fn parallel_terms(
    placement: &Placement,
    tx: &[usize],
    b: &DVector<f64>,
    p1: f64,
    p_u: f64,
    params: &ChannelParams,
) -> Result<ParallelTerms> {
    if tx.first() != Some(&placement.source) {
        return Err(Error::Contract("transmitter set must start with the source".into()));
    }
    if b.len() != tx.len() {
        return Err(Error::Contract(format!(
            "beamforming vector has {} entries for {} transmitters",
            b.len(),
            tx.len()
        )));
    }
    let a = params.alpha;
    let s = placement.source_point();
    let coherent = gain_vector(placement, tx, placement.dest, a).dot(b);
    Ok(ParallelTerms {
        relay_power: tx[1..]
            .iter()
            .map(|&i| power_gain(&s, &placement.legit[i], a) * p1)
            .collect(),
        dest_power: power_gain(&s, &placement.dest_point(), a) * p1 + coherent * coherent * p_u,
        eav_fresh: placement.eav.iter().map(|e| power_gain(&s, e, a) * p1).collect(),
    })
}

/// Parallel decode-and-forward with zero forcing: the minimum of the
/// broadcast term (weakest relay decoding the source) and the multi-access
/// term (destination combining the direct link and the coherent beam), both
/// penalized by the strongest eavesdropper's view of the source.
///
/// `tx` is the source followed by the relays. Fails with
/// [`Error::Contract`] when `b` does not null the eavesdroppers.
pub fn parallel_zf_rate(
    placement: &Placement,
    tx: &[usize],
    b: &BeamformingVector,
    p1: f64,
    p_u: f64,
    params: &ChannelParams,
) -> Result<RateReport> {
    let h_e = eav_matrix(placement, tx, params.alpha);
    let residual = zf_residual(&h_e, &b.coeffs);
    if residual > zf_tolerance(&h_e, &b.coeffs) {
        return Err(Error::Contract(format!("zero-forcing residual {residual:e}")));
    }
    let t = parallel_terms(placement, tx, &b.coeffs, p1, p_u, params)?;
    let (leak, j) = leak_power(&t.eav_fresh, false);
    let weakest = t
        .relay_power
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1));
    let broadcast = weakest.map(|(_, &p)| zf_log(p, leak, params));
    let multiaccess = zf_log(t.dest_power, leak, params);

    let mut r = match broadcast {
        Some(bc) if bc < multiaccess => {
            let mut r = RateReport::new(Scheme::ParallelZf, bc);
            r.limiting_receiver = weakest.map(|(k, _)| tx[k + 1]);
            r
        }
        _ => {
            let mut r = RateReport::new(Scheme::ParallelZf, multiaccess);
            r.limiting_receiver = Some(placement.dest);
            r
        }
    };
    r.broadcast_term = broadcast;
    r.multiaccess_term = Some(multiaccess);
    r.limiting_eavesdropper = j;
    Ok(r)
}

/// Parallel decode-and-forward for an arbitrary beam `b`: the legitimate
/// rate minus the leakage of the strongest eavesdropper, who also hears the
/// cooperative beam.
pub fn parallel_general_rate(
    placement: &Placement,
    tx: &[usize],
    b: &DVector<f64>,
    p1: f64,
    p_u: f64,
    params: &ChannelParams,
) -> Result<RateReport> {
    let t = parallel_terms(placement, tx, b, p1, p_u, params)?;
    let nl = params.noise_legit;
    let beam_leak = eav_matrix(placement, tx, params.alpha) * b;
    let leak = argmax(
        t.eav_fresh
            .iter()
            .zip(beam_leak.iter())
            .map(|(f, c)| (1.0 + (f + c * c * p_u) / params.noise_eav).log2()),
    );
    let (j, leak_bits) = leak.map_or((None, 0.0), |(j, v)| (Some(j), v));

    let weakest = t
        .relay_power
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1));
    let broadcast = weakest.map(|(_, &p)| (1.0 + p / nl).log2() - leak_bits);
    let multiaccess = (1.0 + t.dest_power / nl).log2() - leak_bits;

    let mut r = match broadcast {
        Some(bc) if bc < multiaccess => {
            let mut r = RateReport::new(Scheme::ParallelGeneral, bc);
            r.limiting_receiver = weakest.map(|(k, _)| tx[k + 1]);
            r
        }
        _ => {
            let mut r = RateReport::new(Scheme::ParallelGeneral, multiaccess);
            r.limiting_receiver = Some(placement.dest);
            r
        }
    };
    r.broadcast_term = broadcast;
    r.multiaccess_term = Some(multiaccess);
    r.limiting_eavesdropper = j;
    Ok(r)
}

/// One active serial transmission stage.
#[derive(Debug, Clone, PartialEq)]
pub struct SerialStage {
    /// 1-based position in the layout order; the stage uses the first `q` nodes.
    pub q: usize,
    /// Coefficients over the first `q` ordered nodes, entry `q` equal to 1.
    pub coeffs: DVector<f64>,
    pub power: f64,
}

impl SerialStage {
    pub fn new(q: usize, b: &BeamformingVector, power: f64) -> Self {
        SerialStage {
            q,
            coeffs: b.coeffs.clone(),
            power,
        }
    }
}

fn check_stages(layout: &SerialLayout, stages: &[SerialStage]) -> Result<()> {
    let first = stages
        .first()
        .ok_or_else(|| Error::Contract("no serial stage".into()))?;
    if first.q != 1 {
        return Err(Error::Contract("first serial stage must be the source alone".into()));
    }
    for w in stages.windows(2) {
        if w[1].q <= w[0].q {
            return Err(Error::Contract("serial stages must be strictly increasing".into()));
        }
    }
    for s in stages {
        if s.q > layout.order.len() || s.coeffs.len() != s.q {
            return Err(Error::Contract(format!(
                "stage q = {} with {} coefficients over {} ordered nodes",
                s.q,
                s.coeffs.len(),
                layout.order.len()
            )));
        }
        if s.coeffs[s.q - 1] != 1.0 {
            return Err(Error::Contract(format!("stage {} does not carry a unit entry", s.q)));
        }
    }
    Ok(())
}

/// Per receiver (legit index), the coherent power collected from every
/// active stage at or before its position, and from the latest one alone.
/// Receivers are the ordered nodes after the source, then the destination.
fn serial_received(placement: &Placement, layout: &SerialLayout, stages: &[SerialStage], alpha: f64) -> Vec<(usize, f64, f64)> {
    let order = &layout.order;
    let receivers = order[1..].iter().copied().chain(std::iter::once(layout.dest));
    let mut gains = Vec::with_capacity(order.len());
    receivers
        .enumerate()
        .map(|(idx, rx)| {
            // Receiver at 1-based position idx + 2 hears stages with q ≤ idx + 1.
            let limit = idx + 1;
            let r = placement.legit[rx];
            gains.clear();
            gains.extend(order[..limit].iter().map(|&k| amp_gain(&placement.legit[k], &r, alpha)));
            let mut total = 0.0;
            let mut latest = 0.0;
            for s in stages.iter().take_while(|s| s.q <= limit) {
                let c: f64 = gains[..s.q].iter().zip(s.coeffs.iter()).map(|(g, b)| g * b).sum();
                latest = c * c * s.power;
                total += latest;
            }
            (rx, total, latest)
        })
        .collect()
}

fn source_eav_power(placement: &Placement, p1: f64, alpha: f64) -> Vec<f64> {
    let s = placement.source_point();
    placement.eav.iter().map(|e| power_gain(&s, e, alpha) * p1).collect()
}

fn serial_min(
    received: impl Iterator<Item = (usize, f64)>,
    leak: f64,
    params: &ChannelParams,
) -> (f64, Option<usize>) {
    received
        .map(|(rx, sig)| (zf_log(sig, leak, params), rx))
        .fold((f64::INFINITY, None), |best, (v, rx)| {
            if v < best.0 {
                (v, Some(rx))
            } else {
                best
            }
        })
}

/// Serial decode-and-forward with zero forcing: every ordered receiver and
/// the destination must decode from the coherent sum of all earlier active
/// stages, while only the source's fresh signal leaks.
pub fn serial_zf_rate(
    placement: &Placement,
    layout: &SerialLayout,
    stages: &[SerialStage],
    params: &ChannelParams,
    colluding: bool,
) -> Result<RateReport> {
    check_stages(layout, stages)?;
    for s in &stages[1..] {
        let h_e = eav_matrix(placement, &layout.order[..s.q], params.alpha);
        let residual = zf_residual(&h_e, &s.coeffs);
        if residual > zf_tolerance(&h_e, &s.coeffs) {
            return Err(Error::Contract(format!("stage {} zero-forcing residual {residual:e}", s.q)));
        }
    }
    let eav = source_eav_power(placement, stages[0].power, params.alpha);
    let (leak, j) = leak_power(&eav, colluding);
    let received = serial_received(placement, layout, stages, params.alpha);
    let (raw, rx) = serial_min(received.iter().map(|r| (r.0, r.1)), leak, params);
    let scheme = if colluding {
        Scheme::SerialColludingZf
    } else {
        Scheme::SerialZf
    };
    let mut r = RateReport::new(scheme, raw);
    r.limiting_receiver = rx;
    r.limiting_eavesdropper = j;
    Ok(r)
}

/// Serial decode-and-forward for arbitrary stage vectors: the eavesdroppers
/// also hear every cooperative stage.
pub fn serial_general_rate(
    placement: &Placement,
    layout: &SerialLayout,
    stages: &[SerialStage],
    params: &ChannelParams,
    colluding: bool,
) -> Result<RateReport> {
    check_stages(layout, stages)?;
    let a = params.alpha;
    let mut eav_power = vec![0.0; placement.n_e()];
    for s in stages {
        let beam = eav_matrix(placement, &layout.order[..s.q], a) * &s.coeffs;
        for (acc, c) in eav_power.iter_mut().zip(beam.iter()) {
            *acc += c * c * s.power;
        }
    }
    let (leak, j) = leak_power(&eav_power, colluding);
    let leak_bits = (1.0 + leak / params.noise_eav).log2();
    let received = serial_received(placement, layout, stages, a);
    let (legit, rx) = received
        .iter()
        .map(|&(rx, sig, _)| ((1.0 + sig / params.noise_legit).log2(), rx))
        .fold((f64::INFINITY, None), |best, (v, rx)| {
            if v < best.0 {
                (v, Some(rx))
            } else {
                best
            }
        });
    let scheme = if colluding {
        Scheme::SerialColludingGeneral
    } else {
        Scheme::SerialGeneral
    };
    let mut r = RateReport::new(scheme, legit - leak_bits);
    r.limiting_receiver = rx;
    r.limiting_eavesdropper = j;
    Ok(r)
}

/// Per-stage lower bound on the serial zero-forcing rate: each receiver
/// keeps only the latest active stage it hears.
pub fn serial_stage_lower_bound(
    placement: &Placement,
    layout: &SerialLayout,
    stages: &[SerialStage],
    params: &ChannelParams,
    colluding: bool,
) -> Result<f64> {
    check_stages(layout, stages)?;
    let eav = source_eav_power(placement, stages[0].power, params.alpha);
    let (leak, _) = leak_power(&eav, colluding);
    let received = serial_received(placement, layout, stages, params.alpha);
    Ok(serial_min(received.iter().map(|r| (r.0, r.2)), leak, params).0)
}

/// Total power per secure bit; infinite when the rate is zero.
pub fn secrecy_cost(p_tot: f64, rate_bits: f64) -> f64 {
    if rate_bits > 0.0 {
        p_tot / rate_bits
    } else {
        f64::INFINITY
    }
}
