//! Zero-forcing beamforming over real channel matrices.
//!
//! Null spaces come from an SVD with the singular-value cutoff
//! [`DEFAULT_REL_TOL`]` · σ_max`. For wide matrices only the row space is
//! stored and projections use `P x = x − V_r V_rᵀ x`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::ClusterPlan;

/// Relative singular-value cutoff for numerical rank.
pub const DEFAULT_REL_TOL: f64 = 1e-10;

/// Threshold below which a projection or normalizer is treated as zero.
pub const DEGENERATE_EPS: f64 = 1e-12;

/// Orthonormal basis of `{x : Hx = 0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct NullSpaceBasis {
    /// Columns span the null space; `cols × dim`.
    pub basis: DMatrix<f64>,
    pub dim: usize,
    /// Absolute singular-value cutoff that was applied.
    pub tol: f64,
}

fn cutoff(singular_values: &DVector<f64>, rel_tol: f64) -> f64 {
    rel_tol * singular_values.iter().cloned().fold(0.0, f64::max)
}

/// Explicit null-space basis of `h`, with the cutoff `rel_tol · σ_max`.
///
/// `h` is zero-padded to a square so that the full right singular basis is
/// available even when `h` is wide.
pub fn null_space_basis(h: &DMatrix<f64>, rel_tol: f64) -> NullSpaceBasis {
    let n = h.ncols();
    let m = h.nrows().max(n);
    let mut padded = DMatrix::zeros(m, n);
    padded.rows_mut(0, h.nrows()).copy_from(h);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let tol = cutoff(&svd.singular_values, rel_tol);
    let null_rows: Vec<usize> = (0..n)
        .filter(|&i| svd.singular_values[i] <= tol)
        .collect();
    let mut basis = DMatrix::zeros(n, null_rows.len());
    for (c, &i) in null_rows.iter().enumerate() {
        basis.set_column(c, &v_t.row(i).transpose());
    }
    NullSpaceBasis {
        dim: null_rows.len(),
        basis,
        tol,
    }
}

/// Projector onto the null space of a matrix, kept as a row-space basis.
#[derive(Debug, Clone)]
pub struct NullSpace {
    /// Orthonormal row-space basis, `cols × rank`.
    row_basis: DMatrix<f64>,
    cols: usize,
}

impl NullSpace {
    pub fn of(h: &DMatrix<f64>) -> Self {
        Self::with_tol(h, DEFAULT_REL_TOL)
    }

    pub fn with_tol(h: &DMatrix<f64>, rel_tol: f64) -> Self {
        let cols = h.ncols();
        if h.nrows() == 0 || cols == 0 {
            return NullSpace {
                row_basis: DMatrix::zeros(cols, 0),
                cols,
            };
        }
        if h.nrows() >= cols {
            let svd = h.clone().svd(false, true);
            let v_t = svd.v_t.expect("v_t requested");
            let tol = cutoff(&svd.singular_values, rel_tol);
            let keep: Vec<usize> = (0..svd.singular_values.len())
                .filter(|&i| svd.singular_values[i] > tol)
                .collect();
            let mut row_basis = DMatrix::zeros(cols, keep.len());
            for (c, &i) in keep.iter().enumerate() {
                row_basis.set_column(c, &v_t.row(i).transpose());
            }
            return NullSpace { row_basis, cols };
        }
        // Wide case: Hᵀ = QR, R = U Σ Wᵀ, so H = W Σ (QU)ᵀ and the right
        // singular vectors are the columns of QU. Householder QR keeps them
        // orthonormal to rounding even when H is badly conditioned.
        let qr = h.transpose().qr();
        let q = qr.q();
        let svd = qr.r().svd(true, false);
        let u = svd.u.expect("u requested");
        let tol = cutoff(&svd.singular_values, rel_tol);
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&i| svd.singular_values[i] > tol)
            .collect();
        let mut u_keep = DMatrix::zeros(u.nrows(), keep.len());
        for (c, &i) in keep.iter().enumerate() {
            u_keep.set_column(c, &u.column(i));
        }
        NullSpace {
            row_basis: q * u_keep,
            cols,
        }
    }

    pub fn rank(&self) -> usize {
        self.row_basis.ncols()
    }

    pub fn dim(&self) -> usize {
        self.cols - self.rank()
    }

    /// `P x`, with a second pass when most of `x` was removed, since
    /// cancellation then leaves rounding noise in the row space.
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        if self.rank() == 0 {
            return x.clone();
        }
        let once = x - &self.row_basis * (self.row_basis.transpose() * x);
        self.refine(once, x.norm())
    }

    fn refine(&self, v: DVector<f64>, before: f64) -> DVector<f64> {
        if v.norm() < 0.5 * before {
            &v - &self.row_basis * (self.row_basis.transpose() * &v)
        } else {
            v
        }
    }

    /// `P e_k` for the 0-based unit vector `e_k`.
    fn project_unit(&self, k: usize) -> DVector<f64> {
        let mut v = -(&self.row_basis * self.row_basis.row(k).transpose());
        v[k] += 1.0;
        self.refine(v, 1.0)
    }
}

/// Beamforming coefficients over an ordered transmitter set.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformingVector {
    pub coeffs: DVector<f64>,
    pub norm_sq: f64,
    /// `max_j |h_jᵀ B|` over the eavesdropper rows it was built against.
    pub zf_residual: f64,
}

impl BeamformingVector {
    pub fn new(coeffs: DVector<f64>, h_e: &DMatrix<f64>) -> Self {
        let zf_residual = zf_residual(h_e, &coeffs);
        BeamformingVector {
            norm_sq: coeffs.norm_squared(),
            coeffs,
            zf_residual,
        }
    }

    /// The source alone: `B₁ = [1]`.
    pub fn source_only() -> Self {
        BeamformingVector {
            coeffs: DVector::from_element(1, 1.0),
            norm_sq: 1.0,
            zf_residual: 0.0,
        }
    }

    /// Residual bound `1e-9 · (1 + max_j ‖h_j‖ ‖B‖)`.
    pub fn zf_tolerance(&self, h_e: &DMatrix<f64>) -> f64 {
        zf_tolerance(h_e, &self.coeffs)
    }

    pub fn is_zero_forcing(&self, h_e: &DMatrix<f64>) -> bool {
        self.zf_residual <= self.zf_tolerance(h_e)
    }
}

pub fn zf_residual(h_e: &DMatrix<f64>, b: &DVector<f64>) -> f64 {
    if h_e.nrows() == 0 {
        return 0.0;
    }
    (h_e * b).amax()
}

pub fn zf_tolerance(h_e: &DMatrix<f64>, b: &DVector<f64>) -> f64 {
    let row_norm = h_e
        .row_iter()
        .map(|r| r.norm())
        .fold(0.0, f64::max);
    1e-9 * (1.0 + row_norm * b.norm())
}

/// Unit-norm vector in the null space of `h_e` maximizing `|h_destᵀ B|`:
/// the normalized projection of `h_dest`.
pub fn parallel_zf_vector(h_e: &DMatrix<f64>, h_dest: &DVector<f64>) -> Result<BeamformingVector> {
    if h_dest.len() != h_e.ncols() {
        return Err(Error::Contract(format!(
            "h_dest has {} entries for {} transmitters",
            h_dest.len(),
            h_e.ncols()
        )));
    }
    let ns = NullSpace::of(h_e);
    if ns.dim() == 0 {
        return Err(Error::Infeasible(format!(
            "{} transmitters cannot null {} eavesdroppers",
            h_e.ncols(),
            h_e.nrows()
        )));
    }
    let proj = ns.project(h_dest);
    let norm = proj.norm();
    if norm < DEGENERATE_EPS {
        return Err(Error::Degenerate("destination gain orthogonal to null space".into()));
    }
    Ok(BeamformingVector::new(proj / norm, h_e))
}

/// Null-space vector over the first `q` ordered transmitters with entry `q`
/// (1-based) fixed to 1, steered toward `h_target`.
///
/// Writing `B_min` for the minimum-norm feasible point, the result is
/// `B_min + s R g/‖g‖`, where `g` is the component of the projected target
/// orthogonal to the affine slice normal and `R = √99 ‖B_min‖`, so that
/// `‖B‖ = 10 ‖B_min‖`. When the target has no such component, `B = B_min`.
pub fn serial_zf_vector(h_e_q: &DMatrix<f64>, h_target: &DVector<f64>, q: usize) -> Result<BeamformingVector> {
    if q == 0 || q != h_e_q.ncols() || h_target.len() != q {
        return Err(Error::Contract(format!(
            "serial stage q = {q} with {} columns and target of length {}",
            h_e_q.ncols(),
            h_target.len()
        )));
    }
    let ns = NullSpace::of(h_e_q);
    if ns.dim() == 0 {
        return Err(Error::Infeasible(format!(
            "stage {q} cannot null {} eavesdroppers",
            h_e_q.nrows()
        )));
    }
    let k = q - 1;
    let pe = ns.project_unit(k);
    let a = pe[k];
    if a < DEGENERATE_EPS {
        return Err(Error::Degenerate(format!(
            "no null-space vector with nonzero entry {q}"
        )));
    }
    let b_min = &pe / a;
    let ph = ns.project(h_target);
    let mut g = &ph - &pe * (ph[k] / a);
    if ns.dim() == 1 {
        // Anything left in g is rounding noise.
        g.fill(0.0);
    } else {
        g = ns.project(&g);
        let gk = g[k];
        g -= &pe * (gk / a);
    }
    let g_norm = g.norm();
    let mut b = if g_norm <= DEGENERATE_EPS * (1.0 + ph.norm()) {
        b_min
    } else {
        let s = if h_target.dot(&b_min) >= 0.0 { 1.0 } else { -1.0 };
        let radius = 99f64.sqrt() * b_min.norm();
        &b_min + g * (s * radius / g_norm)
    };
    b[k] = 1.0;
    Ok(BeamformingVector::new(b, h_e_q))
}

/// Source power and cooperative powers.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    pub p1: f64,
    /// `[p_u]` for the parallel scheme; one power per active stage for the
    /// serial scheme (the first equals `p1`).
    pub cooperative: Vec<f64>,
    pub total_used: f64,
}

/// Fixed `p1`, the remainder spent on the cooperative beam.
pub fn allocate_power_parallel(p_tot: f64, p1: f64, b: &BeamformingVector) -> Result<PowerAllocation> {
    if !(p1 > 0.0) || p1 >= p_tot {
        return Err(Error::config("p1", format!("need 0 < p1 < p_tot, got p1 = {p1}, p_tot = {p_tot}")));
    }
    if !(b.norm_sq > 0.0) {
        return Err(Error::Degenerate("zero beamforming vector".into()));
    }
    let p_u = (p_tot - p1) / b.norm_sq;
    Ok(PowerAllocation {
        p1,
        cooperative: vec![p_u],
        total_used: p1 + b.norm_sq * p_u,
    })
}

/// Equal power `P̄ = p_tot / Σ_c ‖B_c‖²` on every active stage, the first
/// stage being the source alone.
pub fn allocate_power_serial(p_tot: f64, stages: &[BeamformingVector]) -> Result<PowerAllocation> {
    if stages.is_empty() {
        return Err(Error::Contract("no active serial stage".into()));
    }
    let total_norm: f64 = stages.iter().map(|b| b.norm_sq).sum();
    let p = p_tot / total_norm;
    Ok(PowerAllocation {
        p1: p,
        cooperative: vec![p; stages.len()],
        total_used: total_norm * p,
    })
}

/// Ordered serial transmitters derived from a cluster plan.
///
/// `order` holds the source and then cluster members in chain order,
/// truncated to `1 + K·block` nodes where `block = max(n_e, 1)`. Active stage
/// positions (1-based) are `1, 1 + block, 1 + 2·block, …, order.len()`; the
/// last stage transmits to the destination.
#[derive(Debug, Clone, PartialEq)]
pub struct SerialLayout {
    pub order: Vec<usize>,
    pub dest: usize,
    pub block: usize,
}

impl SerialLayout {
    pub fn new(mut order: Vec<usize>, dest: usize, n_e: usize) -> Self {
        let block = n_e.max(1);
        let stages = order.len().saturating_sub(1) / block;
        order.truncate(1 + stages * block);
        SerialLayout { order, dest, block }
    }

    pub fn from_plan(plan: &ClusterPlan, n_e: usize) -> Self {
        Self::new(plan.node_order.clone(), plan.dest, n_e)
    }

    /// 1-based active positions.
    pub fn active_positions(&self) -> Vec<usize> {
        (0..self.order.len()).step_by(self.block).map(|i| i + 1).collect()
    }

    /// Receivers addressed by the stage at position `q`: the next block of
    /// ordered nodes, or the destination after the last stage.
    pub fn stage_receivers(&self, q: usize) -> Vec<usize> {
        if q >= self.order.len() {
            vec![self.dest]
        } else {
            self.order[q..(q + self.block).min(self.order.len())].to_vec()
        }
    }
}
