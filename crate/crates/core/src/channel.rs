//! Static path-loss channel: `h = d^{-α/2}`, real and positive.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::{Placement, Point, MIN_NODE_DISTANCE};

/// Physical parameters shared by every scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    /// Path-loss exponent.
    pub alpha: f64,
    /// Noise power at legitimate receivers, `N^l`.
    pub noise_legit: f64,
    /// Noise power at eavesdroppers, `N^e`.
    pub noise_eav: f64,
    /// Total transmit power budget of the network.
    pub p_tot: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            alpha: 2.0,
            noise_legit: 1.0,
            noise_eav: 1.0,
            p_tot: 1.0,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 2.0) || !self.alpha.is_finite() {
            return Err(Error::config("alpha", format!("must be >= 2, got {}", self.alpha)));
        }
        for (field, v) in [
            ("noise_legit", self.noise_legit),
            ("noise_eav", self.noise_eav),
            ("p_tot", self.p_tot),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(field, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Amplitude gain at distance `d`.
pub fn gain(distance: f64, alpha: f64) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(Error::Domain(format!("gain at distance {distance}")));
    }
    Ok(distance.powf(-alpha / 2.0))
}

/// Squared gain `|h|² = d^{-α}` between two points, without validation.
/// The placement guard keeps distances away from zero.
#[inline]
pub(crate) fn power_gain(a: &Point, b: &Point, alpha: f64) -> f64 {
    let d2 = (a.x - b.x).powi(2) + (a.y - b.y).powi(2);
    if alpha == 2.0 {
        d2.recip()
    } else {
        d2.powf(-alpha / 2.0)
    }
}

/// Amplitude gain between two points, without validation.
#[inline]
pub(crate) fn amp_gain(a: &Point, b: &Point, alpha: f64) -> f64 {
    let d2 = (a.x - b.x).powi(2) + (a.y - b.y).powi(2);
    if alpha == 2.0 {
        d2.sqrt().recip()
    } else {
        d2.powf(-alpha / 4.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RxKind {
    Legit,
    Eav,
}

/// Gains from a transmitter set (columns) to a receiver set (rows).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    pub entries: DMatrix<f64>,
    pub row_ids: Vec<usize>,
    pub col_ids: Vec<usize>,
}

/// Entry `(j, i)` is the gain from legitimate transmitter `tx_ids[i]` to
/// receiver `rx_ids[j]`, the latter indexing `placement.legit` or
/// `placement.eav` according to `rx_kind`.
pub fn build_channel_matrix(
    placement: &Placement,
    tx_ids: &[usize],
    rx_ids: &[usize],
    rx_kind: RxKind,
    alpha: f64,
) -> Result<ChannelMatrix> {
    let rx_pool = match rx_kind {
        RxKind::Legit => &placement.legit,
        RxKind::Eav => &placement.eav,
    };
    let mut entries = DMatrix::zeros(rx_ids.len(), tx_ids.len());
    for (j, &r) in rx_ids.iter().enumerate() {
        let rp = rx_pool
            .get(r)
            .ok_or_else(|| Error::Domain(format!("receiver index {r} out of range")))?;
        for (i, &t) in tx_ids.iter().enumerate() {
            let tp = placement
                .legit
                .get(t)
                .ok_or_else(|| Error::Domain(format!("transmitter index {t} out of range")))?;
            let d = tp.distance(rp);
            if d < MIN_NODE_DISTANCE {
                return Err(Error::Coincident(d));
            }
            entries[(j, i)] = gain(d, alpha)?;
        }
    }
    Ok(ChannelMatrix {
        entries,
        row_ids: rx_ids.to_vec(),
        col_ids: tx_ids.to_vec(),
    })
}
