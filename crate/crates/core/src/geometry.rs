//! Node placement on the unit square and the square constructions used by
//! the relaying schemes.
//!
//! All squares are axis aligned. Side lengths are computed from realized
//! node counts, with natural logarithms. A square that pokes out of the unit
//! square is effectively clipped: nodes only ever live inside `[0, 1]²`.

use std::collections::HashMap;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};

/// Placements with two nodes closer than this are rejected and resampled.
pub const MIN_NODE_DISTANCE: f64 = 1e-6;

/// A position in the unit square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn in_unit_square(&self) -> bool {
        (0.0..=1.0).contains(&self.x) && (0.0..=1.0).contains(&self.y)
    }
}

/// Legitimate nodes and eavesdroppers with a designated source/destination pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub legit: Vec<Point>,
    pub eav: Vec<Point>,
    pub source: usize,
    pub dest: usize,
}

impl Placement {
    pub fn new(legit: Vec<Point>, eav: Vec<Point>, source: usize, dest: usize) -> Result<Self> {
        if source >= legit.len() || dest >= legit.len() {
            return Err(Error::Domain(format!(
                "source {source} / destination {dest} out of range for {} legitimate nodes",
                legit.len()
            )));
        }
        if source == dest {
            return Err(Error::Domain("source and destination coincide".into()));
        }
        if let Some(p) = legit.iter().chain(&eav).find(|p| !p.in_unit_square()) {
            return Err(Error::Domain(format!(
                "point ({}, {}) outside the unit square",
                p.x, p.y
            )));
        }
        Ok(Placement {
            legit,
            eav,
            source,
            dest,
        })
    }

    /// Draws both point processes, then a uniformly random source and a
    /// distinct uniformly random destination. Placements that violate the
    /// minimum-distance guard are redrawn from the same generator.
    ///
    /// `lambda_eav` may be zero (no adversary). Fewer than two legitimate
    /// nodes is reported as [`Error::Infeasible`].
    pub fn sample<R: Rng + ?Sized>(lambda_legit: f64, lambda_eav: f64, rng: &mut R) -> Result<Self> {
        if !(lambda_eav >= 0.0) {
            return Err(Error::config("lambda_eav", "must be non-negative"));
        }
        loop {
            let legit = sample_ppp_with(lambda_legit, rng)?;
            let eav = if lambda_eav > 0.0 {
                sample_ppp_with(lambda_eav, rng)?
            } else {
                Vec::new()
            };
            if legit.len() < 2 {
                return Err(Error::Infeasible(format!(
                    "only {} legitimate node(s) drawn",
                    legit.len()
                )));
            }
            let mut all = legit.clone();
            all.extend_from_slice(&eav);
            if min_pairwise_distance(&all) < MIN_NODE_DISTANCE {
                continue;
            }
            let pair = index::sample(rng, legit.len(), 2);
            return Placement::new(legit, eav, pair.index(0), pair.index(1));
        }
    }

    pub fn n_l(&self) -> usize {
        self.legit.len()
    }

    pub fn n_e(&self) -> usize {
        self.eav.len()
    }

    pub fn source_point(&self) -> Point {
        self.legit[self.source]
    }

    pub fn dest_point(&self) -> Point {
        self.legit[self.dest]
    }
}

/// Smallest distance between any two points, `f64::INFINITY` for fewer than two.
pub fn min_pairwise_distance(points: &[Point]) -> f64 {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].x.total_cmp(&points[b].x));
    let mut best = f64::INFINITY;
    for (i, &a) in order.iter().enumerate() {
        for &b in &order[i + 1..] {
            if points[b].x - points[a].x >= best {
                break;
            }
            best = best.min(points[a].distance(&points[b]));
        }
    }
    best
}

/// Poisson point process of the given intensity on the unit square.
pub fn sample_ppp(intensity: f64, seed: u64) -> Result<Vec<Point>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_ppp_with(intensity, &mut rng)
}

pub fn sample_ppp_with<R: Rng + ?Sized>(intensity: f64, rng: &mut R) -> Result<Vec<Point>> {
    if !(intensity > 0.0) || !intensity.is_finite() {
        return Err(Error::config("intensity", format!("must be positive, got {intensity}")));
    }
    let count = Poisson::new(intensity)
        .map_err(|e| Error::config("intensity", e.to_string()))?
        .sample(rng) as usize;
    Ok((0..count)
        .map(|_| Point::new(rng.random::<f64>(), rng.random::<f64>()))
        .collect())
}

/// Closed axis-aligned square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Square {
    pub center: Point,
    pub side: f64,
}

impl Square {
    pub fn contains(&self, p: &Point) -> bool {
        let h = self.side / 2.0;
        (p.x - self.center.x).abs() <= h && (p.y - self.center.y).abs() <= h
    }

    /// Area of the intersection with the unit square.
    pub fn clipped_area(&self) -> f64 {
        let h = self.side / 2.0;
        let span = |c: f64| ((c + h).min(1.0) - (c - h).max(0.0)).max(0.0);
        span(self.center.x) * span(self.center.y)
    }
}

/// Inner (relaying or cluster) square and outer eavesdropper-free square,
/// both centered at the source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquarePair {
    pub inner_side: f64,
    pub outer_side: f64,
    pub center: Point,
}

impl SquarePair {
    fn new(center: Point, inner: f64, outer: f64) -> Self {
        let inner_side = inner.min(1.0);
        // (ln n_e)^{γ/2} < 1 for n_e = 2; the outer square never shrinks below the inner one.
        let outer_side = outer.min(1.0).max(inner_side);
        SquarePair {
            inner_side,
            outer_side,
            center,
        }
    }

    pub fn inner(&self) -> Square {
        Square {
            center: self.center,
            side: self.inner_side,
        }
    }

    pub fn outer(&self) -> Square {
        Square {
            center: self.center,
            side: self.outer_side,
        }
    }
}

fn check_square_args(units: usize, n_l: usize, n_e: usize, gamma: f64) -> Result<()> {
    if n_e < 2 {
        return Err(Error::Domain(format!(
            "n_e = {n_e}: log n_e must be positive (need n_e >= 2)"
        )));
    }
    if units == 0 || n_l == 0 {
        return Err(Error::Domain("node counts must be positive".into()));
    }
    if !(gamma > 0.0) {
        return Err(Error::config("gamma", "must be positive"));
    }
    Ok(())
}

/// Side lengths `(d_inner, d_outer)` before clipping: `d = sqrt(units / n_l)`
/// and `d_e = d (ln n_e)^{γ/2}`, scaled by `n_e^{1/α}` for colluding eavesdroppers.
pub fn square_sides(
    units: usize,
    n_l: usize,
    n_e: usize,
    gamma: f64,
    colluding_alpha: Option<f64>,
) -> Result<(f64, f64)> {
    check_square_args(units, n_l, n_e, gamma)?;
    let inner = (units as f64 / n_l as f64).sqrt();
    let mut outer = inner * (n_e as f64).ln().powf(gamma / 2.0);
    if let Some(alpha) = colluding_alpha {
        outer *= (n_e as f64).powf(1.0 / alpha);
    }
    Ok((inner, outer))
}

/// Relaying square of side `sqrt(n_r/n_l)` and eavesdropper-free square of
/// side `sqrt(n_r/n_l) (ln n_e)^{γ/2}` around the source.
pub fn make_parallel_squares(
    placement: &Placement,
    n_r: usize,
    n_l: usize,
    n_e: usize,
    gamma: f64,
) -> Result<SquarePair> {
    let (inner, outer) = square_sides(n_r, n_l, n_e, gamma, None)?;
    Ok(SquarePair::new(placement.source_point(), inner, outer))
}

/// Cluster square of side `sqrt(n_c/n_l)` and the eavesdropper-free square;
/// with `colluding = true` the outer side gains the factor `n_e^{1/α}`.
pub fn make_cluster_squares(
    placement: &Placement,
    n_c: usize,
    n_l: usize,
    n_e: usize,
    gamma: f64,
    alpha: f64,
    colluding: bool,
) -> Result<SquarePair> {
    let (inner, outer) = square_sides(n_c, n_l, n_e, gamma, colluding.then_some(alpha))?;
    Ok(SquarePair::new(placement.source_point(), inner, outer))
}

/// One cluster of the serial chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub square: Square,
    /// Lattice cell relative to the source cluster.
    pub cell: (i64, i64),
    /// Legitimate nodes inside the square, source and destination excluded,
    /// ascending distance to the source.
    pub members: Vec<usize>,
}

/// Chain of side-sharing cluster squares from the source to the destination.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterPlan {
    pub clusters: Vec<Cluster>,
    /// Source first, then the members of each cluster in chain order.
    pub node_order: Vec<usize>,
    pub dest: usize,
    pub n_c: usize,
    pub c_max: usize,
    /// Clusters holding fewer than `n_c` legitimate nodes (the source counts
    /// toward the first cluster).
    pub short_clusters: Vec<usize>,
}

impl ClusterPlan {
    pub fn is_full(&self) -> bool {
        self.short_clusters.is_empty()
    }
}

/// Builds an L-shaped chain (horizontal, then vertical) of squares of side
/// `d_c` on the lattice anchored at the source's square, ending in the square
/// that holds the destination.
///
/// A node on an edge shared by two chain squares belongs to the lower-indexed
/// one. Clusters with fewer than `n_c` nodes are flagged, not rejected.
pub fn plan_clusters(placement: &Placement, d_c: f64, n_c: usize) -> Result<ClusterPlan> {
    if !(d_c > 0.0) {
        return Err(Error::Domain(format!("cluster side must be positive, got {d_c}")));
    }
    let src = placement.source_point();
    let dst = placement.dest_point();
    let first = Square {
        center: src,
        side: d_c,
    };
    if first.contains(&dst) {
        return Err(Error::DirectPath);
    }

    let x0 = src.x - d_c / 2.0;
    let y0 = src.y - d_c / 2.0;
    let cell_of = |p: &Point| {
        (
            ((p.x - x0) / d_c).floor() as i64,
            ((p.y - y0) / d_c).floor() as i64,
        )
    };
    let (cx, cy) = cell_of(&dst);

    let mut cells = Vec::new();
    let sx = cx.signum();
    for i in 0..=cx.abs() {
        cells.push((i * sx, 0));
    }
    let sy = cy.signum();
    for j in 1..=cy.abs() {
        cells.push((cx, j * sy));
    }
    let index: HashMap<(i64, i64), usize> = cells.iter().enumerate().map(|(k, &c)| (c, k)).collect();
    let square_of = |(i, j): (i64, i64)| Square {
        center: Point::new(x0 + (i as f64 + 0.5) * d_c, y0 + (j as f64 + 0.5) * d_c),
        side: d_c,
    };

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); cells.len()];
    for (node, p) in placement.legit.iter().enumerate() {
        if node == placement.source || node == placement.dest {
            continue;
        }
        let (i, j) = cell_of(p);
        // Points on a cell boundary also lie in the neighbour below/left.
        let owner = [(i, j), (i - 1, j), (i, j - 1), (i - 1, j - 1)]
            .into_iter()
            .filter_map(|c| index.get(&c).copied())
            .filter(|&k| square_of(cells[k]).contains(p))
            .min();
        if let Some(k) = owner {
            members[k].push(node);
        }
    }
    for m in &mut members {
        m.sort_by(|&a, &b| {
            let da = placement.legit[a].distance(&src);
            let db = placement.legit[b].distance(&src);
            da.total_cmp(&db).then(a.cmp(&b))
        });
    }

    let mut node_order = vec![placement.source];
    let mut short_clusters = Vec::new();
    let clusters: Vec<Cluster> = cells
        .iter()
        .zip(members)
        .enumerate()
        .map(|(k, (&cell, members))| {
            let count = members.len() + usize::from(k == 0);
            if count < n_c {
                short_clusters.push(k);
            }
            node_order.extend_from_slice(&members);
            Cluster {
                square: square_of(cell),
                cell,
                members,
            }
        })
        .collect();

    Ok(ClusterPlan {
        c_max: clusters.len(),
        clusters,
        node_order,
        dest: placement.dest,
        n_c,
        short_clusters,
    })
}

/// Outcome of checking a placement against a square pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeasibilityRecord {
    /// Legitimate nodes in the inner square, source excluded.
    pub relays_in_inner: usize,
    pub enough_relays: bool,
    pub eavs_in_outer: usize,
    pub eav_free: bool,
}

pub fn feasibility_check(
    placement: &Placement,
    squares: &SquarePair,
    required_relays: usize,
) -> FeasibilityRecord {
    let inner = squares.inner();
    let outer = squares.outer();
    let relays_in_inner = placement
        .legit
        .iter()
        .enumerate()
        .filter(|&(i, p)| i != placement.source && inner.contains(p))
        .count();
    let eavs_in_outer = placement.eav.iter().filter(|p| outer.contains(p)).count();
    FeasibilityRecord {
        relays_in_inner,
        enough_relays: relays_in_inner >= required_relays,
        eavs_in_outer,
        eav_free: eavs_in_outer == 0,
    }
}

/// Chernoff-style bound `Pr(X >= x) <= e^{-λ} (eλ)^x / x^x` for a Poisson
/// variable with mean `λ`, valid for `x > λ`. Evaluated in log space.
pub fn poisson_tail_bound(lambda: f64, x: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("lambda must be positive, got {lambda}")));
    }
    if !(x > lambda) {
        return Err(Error::Domain(format!("bound needs x > lambda, got x = {x}, lambda = {lambda}")));
    }
    Ok((-lambda + x * (1.0 + lambda.ln() - x.ln())).exp())
}

/// Exact `Pr(X >= x)` for a Poisson variable by direct summation of the pmf
/// from `ceil(x)` upward.
pub fn poisson_upper_tail(lambda: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let start = x.ceil() as u64;
    let ln_lambda = lambda.ln();
    // ln pmf(start) via a running log-factorial.
    let mut ln_pmf = -lambda + (1..=start).map(|k| ln_lambda - (k as f64).ln()).sum::<f64>();
    let mut total = 0.0;
    let mut k = start;
    loop {
        let term = ln_pmf.exp();
        total += term;
        k += 1;
        ln_pmf += ln_lambda - (k as f64).ln();
        if (k as f64) > lambda && term < total * 1e-17 {
            break;
        }
    }
    total.min(1.0)
}
