//! Scaling-law schedules and the Monte-Carlo harness.
//!
//! A trial samples a network, builds the regime's squares, and evaluates
//! either the direct wiretap branch or the cooperative zero-forcing scheme.
//! Geometric infeasibility is reported in the [`TrialOutcome`], never as an
//! error.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::beamforming::{
    allocate_power_parallel, allocate_power_serial, parallel_zf_vector, serial_zf_vector, BeamformingVector,
    SerialLayout,
};
use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::geometry::{
    feasibility_check, make_cluster_squares, make_parallel_squares, plan_clusters, FeasibilityRecord, Placement,
    SquarePair,
};
use crate::rates::{
    direct_wiretap_rate, eav_matrix, gain_vector, parallel_zf_rate, secrecy_cost, select_parallel_relays,
    serial_zf_rate, RateReport, SerialStage,
};

/// Environment variable capping the number of worker threads (0 = automatic).
pub const THREADS_ENV: &str = "SECSIM_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegimeKind {
    Parallel,
    Serial,
    SerialColluding,
}

impl RegimeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RegimeKind::Parallel => "parallel",
            RegimeKind::Serial => "serial",
            RegimeKind::SerialColluding => "serial-colluding",
        }
    }
}

impl fmt::Display for RegimeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RegimeKind {
    type Err = Error;

    /// Accepts the regime names and the matching zero-forcing scheme names.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "parallel" | "parallel-zf" => Ok(RegimeKind::Parallel),
            "serial" | "serial-zf" => Ok(RegimeKind::Serial),
            "serial-colluding" | "serial-colluding-zf" => Ok(RegimeKind::SerialColluding),
            _ => Err(Error::config(
                "scheme",
                format!("{s:?} is not one of parallel-zf, serial-zf, serial-colluding-zf"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regime {
    pub kind: RegimeKind,
    pub gamma: f64,
    /// Only used by the parallel regime.
    pub delta: f64,
    pub alpha: f64,
}

impl Regime {
    pub fn new(kind: RegimeKind, gamma: f64, delta: f64, alpha: f64) -> Result<Self> {
        let r = Regime {
            kind,
            gamma,
            delta,
            alpha,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::config("gamma", format!("must be positive, got {}", self.gamma)));
        }
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(Error::config("delta", format!("must be positive, got {}", self.delta)));
        }
        if !(self.alpha >= 2.0) || !self.alpha.is_finite() {
            return Err(Error::config("alpha", format!("must be >= 2, got {}", self.alpha)));
        }
        Ok(())
    }

    /// Left-hand side of the regime's scaling condition at `n_e`.
    pub fn scaling_lhs(&self, n_e: f64) -> f64 {
        let l = n_e.ln();
        match self.kind {
            RegimeKind::Parallel => {
                let e = self.alpha / 2.0 + 1.0;
                n_e.powf(e) * l.powf(self.gamma + self.delta * e)
            }
            RegimeKind::Serial => n_e * n_e * l.powf(self.gamma),
            RegimeKind::SerialColluding => n_e.powf(2.0 + 2.0 / self.alpha) * l.powf(self.gamma),
        }
    }
}

/// Network parameters shared by every trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkConfig {
    pub channel: ChannelParams,
    pub lambda_legit: f64,
    /// Zero means no eavesdropper.
    pub lambda_eav: f64,
    /// Parallel scheme: source power as a fraction of `p_tot`.
    pub p1_fraction: f64,
    /// When set, a trial only reports a rate if the square conditions hold
    /// (enough nodes in the inner square or full clusters, and no
    /// eavesdropper in the outer square). Otherwise they are recorded only.
    pub strict_geometry: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            channel: ChannelParams::default(),
            lambda_legit: 1000.0,
            lambda_eav: 5.0,
            p1_fraction: 0.5,
            strict_geometry: false,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        if !(self.lambda_legit > 0.0) || !self.lambda_legit.is_finite() {
            return Err(Error::config("lambda_legit", format!("must be positive, got {}", self.lambda_legit)));
        }
        if !(self.lambda_eav >= 0.0) || !self.lambda_eav.is_finite() {
            return Err(Error::config("lambda_eav", format!("must be non-negative, got {}", self.lambda_eav)));
        }
        if !(self.p1_fraction > 0.0 && self.p1_fraction < 1.0) {
            return Err(Error::config("p1_fraction", format!("must lie in (0, 1), got {}", self.p1_fraction)));
        }
        Ok(())
    }
}

/// Largest `n_e ≥ 2` with `f(n_e) ≤ n_l / ln n_l`.
pub fn schedule_ne(n_l: usize, regime: &Regime) -> usize {
    schedule_ne_with_slack(n_l, regime, f64::ln)
}

/// Like [`schedule_ne`] with a custom divergent divisor `slack(n_l)`.
pub fn schedule_ne_with_slack(n_l: usize, regime: &Regime, slack: impl Fn(f64) -> f64) -> usize {
    let n = n_l as f64;
    let bound = n / slack(n);
    let mut n_e = 2;
    while regime.scaling_lhs((n_e + 1) as f64) <= bound {
        n_e += 1;
    }
    n_e
}

/// `⌊n_l / (n_e (ln n_e)^{γ+δ})⌋`, raised to `n_e` when smaller; the flag
/// reports whether that floor applied.
pub fn schedule_nr(n_l: usize, n_e: usize, gamma: f64, delta: f64) -> (usize, bool) {
    let ne = n_e.max(2) as f64;
    let raw = (n_l as f64 / (ne * ne.ln().powf(gamma + delta))).floor() as usize;
    if raw < n_e {
        (n_e, true)
    } else {
        (raw, false)
    }
}

/// Everything recorded about one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub n_l: usize,
    pub n_e: usize,
    pub squares: Option<SquarePair>,
    pub feasibility: FeasibilityRecord,
    /// Destination inside the inner square: wiretap coding from the source.
    pub direct: bool,
    /// Absent when the trial is infeasible.
    pub rate: Option<RateReport>,
    /// Why the rate is absent.
    pub reason: Option<String>,
}

impl TrialOutcome {
    pub fn is_feasible(&self) -> bool {
        self.rate.is_some()
    }

    fn infeasible(placement: Option<&Placement>, reason: impl Into<String>) -> Self {
        TrialOutcome {
            n_l: placement.map_or(0, Placement::n_l),
            n_e: placement.map_or(0, Placement::n_e),
            squares: None,
            feasibility: FeasibilityRecord {
                relays_in_inner: 0,
                enough_relays: false,
                eavs_in_outer: 0,
                eav_free: false,
            },
            direct: false,
            rate: None,
            reason: Some(reason.into()),
        }
    }
}

/// Runs one trial, fully determined by `seed`.
pub fn run_trial(config: &NetworkConfig, regime: &Regime, seed: u64) -> Result<TrialOutcome> {
    config.validate()?;
    regime.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let placement = match Placement::sample(config.lambda_legit, config.lambda_eav, &mut rng) {
        Ok(p) => p,
        Err(Error::Infeasible(msg)) => return Ok(TrialOutcome::infeasible(None, msg)),
        Err(e) => return Err(e),
    };
    Ok(evaluate_placement(config, regime, &placement))
}

/// Trial pipeline on a given placement.
pub fn evaluate_placement(config: &NetworkConfig, regime: &Regime, placement: &Placement) -> TrialOutcome {
    let params = ChannelParams {
        alpha: regime.alpha,
        ..config.channel
    };
    match regime.kind {
        RegimeKind::Parallel => parallel_trial(config, regime, &params, placement),
        RegimeKind::Serial => serial_trial(config, regime, &params, placement, false),
        RegimeKind::SerialColluding => serial_trial(config, regime, &params, placement, true),
    }
}

fn finish(
    config: &NetworkConfig,
    placement: &Placement,
    squares: SquarePair,
    feasibility: FeasibilityRecord,
    direct: bool,
    rate: Result<RateReport>,
) -> TrialOutcome {
    let (rate, reason) = match rate {
        Ok(r) if config.strict_geometry && !(feasibility.eav_free && (direct || feasibility.enough_relays)) => {
            drop(r);
            (None, Some("geometry conditions not met".to_string()))
        }
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    TrialOutcome {
        n_l: placement.n_l(),
        n_e: placement.n_e(),
        squares: Some(squares),
        feasibility,
        direct,
        rate,
        reason,
    }
}

fn parallel_trial(config: &NetworkConfig, regime: &Regime, params: &ChannelParams, placement: &Placement) -> TrialOutcome {
    let n_l = placement.n_l();
    let n_e = placement.n_e();
    let ne_eff = n_e.max(2);
    let (n_r, _) = schedule_nr(n_l, ne_eff, regime.gamma, regime.delta);
    let squares = match make_parallel_squares(placement, n_r, n_l, ne_eff, regime.gamma) {
        Ok(s) => s,
        Err(e) => return TrialOutcome::infeasible(Some(placement), e.to_string()),
    };
    let feasibility = feasibility_check(placement, &squares, n_r);
    let inner = squares.inner();
    let direct = inner.contains(&placement.dest_point());
    let rate = if direct {
        Ok(direct_wiretap_rate(placement, params.p_tot, params, false))
    } else {
        parallel_cooperative(config, params, placement, &inner, n_r)
    };
    finish(config, placement, squares, feasibility, direct, rate)
}

fn parallel_cooperative(
    config: &NetworkConfig,
    params: &ChannelParams,
    placement: &Placement,
    inner: &crate::geometry::Square,
    n_r: usize,
) -> Result<RateReport> {
    let in_square: Vec<usize> = (0..placement.n_l())
        .filter(|&i| inner.contains(&placement.legit[i]))
        .collect();
    let mut sel = select_parallel_relays(placement, params, Some(&in_square));
    sel.relays.truncate(n_r);
    if sel.relays.len() < placement.n_e() {
        return Err(Error::Infeasible(format!(
            "{} qualifying relays for {} eavesdroppers",
            sel.relays.len(),
            placement.n_e()
        )));
    }
    let tx = sel.transmitters(placement.source);
    let h_e = eav_matrix(placement, &tx, params.alpha);
    let h_d = gain_vector(placement, &tx, placement.dest, params.alpha);
    let b = parallel_zf_vector(&h_e, &h_d)?;
    let alloc = allocate_power_parallel(params.p_tot, config.p1_fraction * params.p_tot, &b)?;
    parallel_zf_rate(placement, &tx, &b, alloc.p1, alloc.cooperative[0], params)
}

fn serial_trial(
    config: &NetworkConfig,
    regime: &Regime,
    params: &ChannelParams,
    placement: &Placement,
    colluding: bool,
) -> TrialOutcome {
    let n_l = placement.n_l();
    let n_e = placement.n_e();
    let n_c = n_e.max(1) + 1;
    let squares = match make_cluster_squares(placement, n_c, n_l, n_e.max(2), regime.gamma, regime.alpha, colluding) {
        Ok(s) => s,
        Err(e) => return TrialOutcome::infeasible(Some(placement), e.to_string()),
    };
    let mut feasibility = feasibility_check(placement, &squares, n_c - 1);
    let direct = squares.inner().contains(&placement.dest_point());
    if direct {
        let rate = Ok(direct_wiretap_rate(placement, params.p_tot, params, colluding));
        return finish(config, placement, squares, feasibility, direct, rate);
    }
    let plan = match plan_clusters(placement, squares.inner_side, n_c) {
        Ok(p) => p,
        Err(e) => return finish(config, placement, squares, feasibility, direct, Err(e)),
    };
    feasibility.enough_relays = plan.is_full();
    let layout = SerialLayout::from_plan(&plan, n_e);
    let rate = serial_stages(placement, &layout, params)
        .and_then(|stages| serial_zf_rate(placement, &layout, &stages, params, colluding));
    finish(config, placement, squares, feasibility, direct, rate)
}

/// Zero-forcing vectors and equal power for every active stage of `layout`.
pub fn serial_stages(placement: &Placement, layout: &SerialLayout, params: &ChannelParams) -> Result<Vec<SerialStage>> {
    let a = params.alpha;
    let mut vectors = vec![BeamformingVector::source_only()];
    let positions = layout.active_positions();
    for &q in &positions[1..] {
        let tx = &layout.order[..q];
        let h_e = eav_matrix(placement, tx, a);
        let target = layout
            .stage_receivers(q)
            .into_iter()
            .fold(DVector::zeros(q), |acc, r| acc + gain_vector(placement, tx, r, a));
        vectors.push(serial_zf_vector(&h_e, &target, q)?);
    }
    let alloc = allocate_power_serial(params.p_tot, &vectors)?;
    Ok(positions
        .iter()
        .zip(&vectors)
        .zip(&alloc.cooperative)
        .map(|((&q, b), &p)| SerialStage::new(q, b, p))
        .collect())
}

/// Seed of trial `trial` at sweep point `point`, independent of execution order.
pub fn trial_seed(master_seed: u64, point: usize, trial: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(((point as u64) << 32) | trial as u64);
    rng.next_u64()
}

/// One data row of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n_l_target: usize,
    pub n_e_sched: usize,
    pub trial: usize,
    pub outcome: TrialOutcome,
    pub cost: f64,
}

/// Per-point summary over the feasible trials.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub n_l_target: usize,
    pub n_e_sched: usize,
    pub trials: usize,
    pub feasible: usize,
    pub feasible_fraction: f64,
    pub eav_free_fraction: f64,
    pub median_rate: f64,
    pub q1_rate: f64,
    pub q3_rate: f64,
    pub median_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub regime: Regime,
    pub rows: Vec<SweepRow>,
    pub aggregates: Vec<Aggregate>,
}

/// Sample quantile with linear interpolation between order statistics
/// (`h = (n − 1) p`). NaN for an empty sample.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi || sorted[lo] == sorted[hi] {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

/// Summarizes the rows of one sweep point.
pub fn aggregate(n_l_target: usize, n_e_sched: usize, rows: &[SweepRow]) -> Aggregate {
    let mut rates: Vec<f64> = rows
        .iter()
        .filter_map(|r| r.outcome.rate.as_ref().map(|x| x.rate_bits))
        .collect();
    rates.sort_by(f64::total_cmp);
    let costs: Vec<f64> = rows
        .iter()
        .filter(|r| r.outcome.is_feasible())
        .map(|r| r.cost)
        .collect();
    let trials = rows.len();
    let eav_free = rows.iter().filter(|r| r.outcome.feasibility.eav_free).count();
    Aggregate {
        n_l_target,
        n_e_sched,
        trials,
        feasible: rates.len(),
        feasible_fraction: rates.len() as f64 / trials as f64,
        eav_free_fraction: eav_free as f64 / trials as f64,
        median_rate: quantile(&rates, 0.5),
        q1_rate: quantile(&rates, 0.25),
        q3_rate: quantile(&rates, 0.75),
        median_cost: median(&costs),
    }
}

/// Runs `f` inside a pool sized by [`THREADS_ENV`], or the global pool.
pub fn with_thread_cap<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    let cap = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(0);
    if cap == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(cap).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// For each `n_l` in the list: schedule `n_e`, set the intensities to
/// `(n_l, n_e)` and run `trials` independent trials.
pub fn sweep(
    n_l_list: &[usize],
    regime: &Regime,
    trials: usize,
    config: &NetworkConfig,
    master_seed: u64,
) -> Result<SweepResult> {
    if trials == 0 {
        return Err(Error::config("trials", "must be at least 1"));
    }
    if let Some(&bad) = n_l_list.iter().find(|&&n| n < 100) {
        return Err(Error::config("n_l_list", format!("entries must be >= 100, got {bad}")));
    }
    regime.validate()?;
    let points: Vec<(usize, usize, NetworkConfig)> = n_l_list
        .iter()
        .map(|&n_l| {
            let n_e = schedule_ne(n_l, regime);
            let cfg = NetworkConfig {
                lambda_legit: n_l as f64,
                lambda_eav: n_e as f64,
                ..*config
            };
            (n_l, n_e, cfg)
        })
        .collect();
    for (_, _, cfg) in &points {
        cfg.validate()?;
    }
    let tasks: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..trials).map(move |t| (p, t)))
        .collect();
    let outcomes: Vec<Result<TrialOutcome>> = with_thread_cap(|| {
        tasks
            .par_iter()
            .map(|&(p, t)| run_trial(&points[p].2, regime, trial_seed(master_seed, p, t)))
            .collect()
    });

    let mut rows = Vec::with_capacity(tasks.len());
    for (&(p, t), outcome) in tasks.iter().zip(outcomes) {
        let outcome = outcome?;
        let cost = outcome
            .rate
            .as_ref()
            .map_or(f64::NAN, |r| secrecy_cost(config.channel.p_tot, r.rate_bits));
        rows.push(SweepRow {
            n_l_target: points[p].0,
            n_e_sched: points[p].1,
            trial: t,
            outcome,
            cost,
        });
    }
    let aggregates = points
        .iter()
        .enumerate()
        .map(|(p, &(n_l, n_e, _))| aggregate(n_l, n_e, &rows[p * trials..(p + 1) * trials]))
        .collect();
    Ok(SweepResult {
        regime: *regime,
        rows,
        aggregates,
    })
}

/// Empirical square-condition probabilities with analytic references.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityEstimate {
    pub n_l: usize,
    pub n_e: usize,
    pub trials: usize,
    pub required: usize,
    pub p_enough_relays: f64,
    pub se_enough_relays: f64,
    pub p_eav_free: f64,
    pub se_eav_free: f64,
    /// `exp(−λ_e min(d_e, 1)²)` with sides from the intensities.
    pub analytic_eav_free: f64,
    /// Mean over trials of `exp(−λ_e |S_e ∩ [0,1]²|)` for the realized squares.
    pub analytic_eav_free_clipped: f64,
}

fn binomial_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Estimates the probability that the inner square holds enough nodes and
/// that the outer square is eavesdropper free, at intensities `(n_l, n_e)`.
///
/// The parallel regime requires `n_r` nodes in the relaying square; the
/// serial regimes require `n_c − 1` besides the source in its cluster square.
pub fn feasibility_probability(
    n_l: f64,
    n_e: f64,
    regime: &Regime,
    trials: usize,
    master_seed: u64,
) -> Result<FeasibilityEstimate> {
    if trials == 0 {
        return Err(Error::config("trials", "must be at least 1"));
    }
    regime.validate()?;
    if !(n_l > 0.0) {
        return Err(Error::config("lambda_legit", format!("must be positive, got {n_l}")));
    }
    if !(n_e >= 0.0) {
        return Err(Error::config("lambda_eav", format!("must be non-negative, got {n_e}")));
    }
    let nl_i = n_l.round() as usize;
    let ne_i = n_e.round() as usize;
    let requirement = |ne: usize, nl: usize| -> (usize, usize) {
        match regime.kind {
            RegimeKind::Parallel => {
                let n_r = schedule_nr(nl, ne.max(2), regime.gamma, regime.delta).0;
                (n_r, n_r)
            }
            _ => {
                let n_c = ne.max(1) + 1;
                (n_c, n_c - 1)
            }
        }
    };
    let sides = |ne: usize, nl: usize| -> Result<SquarePair> {
        let center = crate::geometry::Point::new(0.5, 0.5);
        let (units, _) = requirement(ne, nl);
        let colluding = (regime.kind == RegimeKind::SerialColluding).then_some(regime.alpha);
        let (inner, outer) = crate::geometry::square_sides(units, nl.max(1), ne.max(2), regime.gamma, colluding)?;
        let inner = inner.min(1.0);
        Ok(SquarePair {
            inner_side: inner,
            outer_side: outer.min(1.0).max(inner),
            center,
        })
    };
    let reference = sides(ne_i, nl_i)?;
    let analytic = (-n_e * reference.outer_side.powi(2)).exp();

    let results: Vec<Result<Option<(bool, bool, f64)>>> = with_thread_cap(|| {
        (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(master_seed, 0, t));
                let placement = match Placement::sample(n_l, n_e, &mut rng) {
                    Ok(p) => p,
                    Err(Error::Infeasible(_)) => return Ok(None),
                    Err(e) => return Err(e),
                };
                let (_, required) = requirement(placement.n_e(), placement.n_l());
                let squares = match regime.kind {
                    RegimeKind::Parallel => make_parallel_squares(
                        &placement,
                        required,
                        placement.n_l(),
                        placement.n_e().max(2),
                        regime.gamma,
                    )?,
                    kind => make_cluster_squares(
                        &placement,
                        required + 1,
                        placement.n_l(),
                        placement.n_e().max(2),
                        regime.gamma,
                        regime.alpha,
                        kind == RegimeKind::SerialColluding,
                    )?,
                };
                let rec = feasibility_check(&placement, &squares, required);
                let void = (-n_e * squares.outer().clipped_area()).exp();
                Ok(Some((rec.enough_relays, rec.eav_free, void)))
            })
            .collect()
    });

    let mut enough = 0usize;
    let mut free = 0usize;
    let mut void_sum = 0.0;
    for r in results {
        match r? {
            Some((e, f, v)) => {
                enough += usize::from(e);
                free += usize::from(f);
                void_sum += v;
            }
            // Fewer than two legitimate nodes: nothing to relay, but no eavesdropper can be nearer either.
            None => {
                free += 1;
                void_sum += 1.0;
            }
        }
    }
    let p_enough = enough as f64 / trials as f64;
    let p_free = free as f64 / trials as f64;
    Ok(FeasibilityEstimate {
        n_l: nl_i,
        n_e: ne_i,
        trials,
        required: requirement(ne_i, nl_i).1,
        p_enough_relays: p_enough,
        se_enough_relays: binomial_se(p_enough, trials),
        p_eav_free: p_free,
        se_eav_free: binomial_se(p_free, trials),
        analytic_eav_free: analytic,
        analytic_eav_free_clipped: void_sum / trials as f64,
    })
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use proptest::prelude::*;

    fn regime(kind: RegimeKind) -> Regime {
        Regime::new(kind, 1.0, 1.0, 2.0).unwrap()
    }

    /// Integer search oracle independent of the incremental loop.
    fn brute_schedule(n_l: f64, f: impl Fn(f64) -> f64) -> usize {
        (2..100_000usize)
            .filter(|&n| f(n as f64) <= n_l / n_l.ln())
            .max()
            .unwrap_or(2)
    }

    #[test]
    fn schedule_examples() {
        assert_eq!(schedule_ne(10_000, &regime(RegimeKind::Parallel)), 9);
        assert_eq!(schedule_ne(10_000, &regime(RegimeKind::Serial)), 19);
        assert_eq!(schedule_ne(100, &regime(RegimeKind::Parallel)), 3);
        assert_eq!(schedule_ne(20, &regime(RegimeKind::Parallel)), 2);
        for (n_l, par, ser, col) in [(1_000usize, 5, 8, 4), (10_000, 9, 19, 8), (100_000, 18, 47, 14)] {
            let nf = n_l as f64;
            assert_eq!(brute_schedule(nf, |n| n * n * n.ln().powi(3)), par);
            assert_eq!(brute_schedule(nf, |n| n * n * n.ln()), ser);
            assert_eq!(brute_schedule(nf, |n| n.powi(3) * n.ln()), col);
            assert_eq!(schedule_ne(n_l, &regime(RegimeKind::Parallel)), par);
            assert_eq!(schedule_ne(n_l, &regime(RegimeKind::Serial)), ser);
            assert_eq!(schedule_ne(n_l, &regime(RegimeKind::SerialColluding)), col);
        }
    }

    #[test]
    fn schedule_nr_examples() {
        assert_eq!(schedule_nr(10_000, 9, 1.0, 1.0), (230, false));
        assert_eq!(schedule_nr(100, 20, 1.0, 1.0), (20, true));
        assert_eq!(schedule_nr(10_000, 2, 1e-12, 1e-12), (5000, false));
    }

    #[test]
    fn no_eavesdroppers_parallel_rate_exists() {
        let config = NetworkConfig {
            lambda_legit: 300.0,
            lambda_eav: 0.0,
            ..Default::default()
        };
        let r = regime(RegimeKind::Parallel);
        for seed in 0..20 {
            let out = run_trial(&config, &r, seed).unwrap();
            assert!(out.feasibility.eav_free);
            if out.direct || !out.feasibility.enough_relays {
                continue;
            }
            let rate = out.rate.expect("rate without adversary");
            assert!(rate.rate_bits > 0.0);
        }
    }

    #[test]
    fn trial_is_deterministic() {
        let config = NetworkConfig::default();
        for kind in [RegimeKind::Parallel, RegimeKind::Serial, RegimeKind::SerialColluding] {
            let a = run_trial(&config, &regime(kind), 42).unwrap();
            let b = run_trial(&config, &regime(kind), 42).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn pipeline_composition_matches_manual() {
        let config = NetworkConfig {
            lambda_legit: 50.0,
            lambda_eav: 2.0,
            ..Default::default()
        };
        let r = regime(RegimeKind::Parallel);
        let mut checked = 0;
        for seed in 0..200u64 {
            let out = run_trial(&config, &r, seed).unwrap();
            let Some(rate) = out.rate.clone() else { continue };
            if out.direct {
                continue;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = Placement::sample(50.0, 2.0, &mut rng).unwrap();
            let (n_r, _) = schedule_nr(p.n_l(), p.n_e().max(2), 1.0, 1.0);
            let sq = make_parallel_squares(&p, n_r, p.n_l(), p.n_e().max(2), 1.0).unwrap();
            let inner = sq.inner();
            let cands: Vec<usize> = (0..p.n_l()).filter(|&i| inner.contains(&p.legit[i])).collect();
            let mut sel = select_parallel_relays(&p, &config.channel, Some(&cands));
            sel.relays.truncate(n_r);
            let tx = sel.transmitters(p.source);
            let b = parallel_zf_vector(&eav_matrix(&p, &tx, 2.0), &gain_vector(&p, &tx, p.dest, 2.0)).unwrap();
            let alloc = allocate_power_parallel(1.0, 0.5, &b).unwrap();
            let manual = parallel_zf_rate(&p, &tx, &b, alloc.p1, alloc.cooperative[0], &config.channel).unwrap();
            assert_eq!(manual, rate);
            checked += 1;
        }
        assert!(checked > 0);
    }

    #[test]
    fn direct_branch_is_wiretap() {
        let config = NetworkConfig::default();
        let r = regime(RegimeKind::Parallel);
        let p = Placement::new(
            vec![Point::new(0.5, 0.5), Point::new(0.51, 0.5), Point::new(0.1, 0.1)],
            vec![Point::new(0.9, 0.9)],
            0,
            1,
        )
        .unwrap();
        let out = evaluate_placement(&config, &r, &p);
        assert!(out.direct);
        let w = direct_wiretap_rate(&p, config.channel.p_tot, &config.channel, false);
        assert_eq!(out.rate.unwrap(), w);
    }

    #[test]
    fn sweep_single_row_and_determinism() {
        let config = NetworkConfig::default();
        let r = regime(RegimeKind::Serial);
        let s = sweep(&[200], &r, 1, &config, 3).unwrap();
        assert_eq!(s.rows.len(), 1);
        assert_eq!(s.aggregates.len(), 1);
        let a = sweep(&[200, 400], &r, 4, &config, 9).unwrap();
        let b = sweep(&[200, 400], &r, 4, &config, 9).unwrap();
        assert_eq!(a, b);
        assert!(sweep(&[200], &r, 0, &config, 3).is_err());
    }

    #[test]
    fn trial_seeds_are_order_independent() {
        let seeds: Vec<u64> = (0..5).map(|t| trial_seed(7, 1, t)).collect();
        let rev: Vec<u64> = (0..5).rev().map(|t| trial_seed(7, 1, t)).collect();
        assert_eq!(seeds, rev.into_iter().rev().collect::<Vec<_>>());
        assert_ne!(trial_seed(7, 0, 1), trial_seed(7, 1, 0));
    }

    #[test]
    fn feasibility_trivial_cases() {
        let r = regime(RegimeKind::Parallel);
        let est = feasibility_probability(500.0, 0.0, &r, 100, 1).unwrap();
        assert_eq!(est.p_eav_free, 1.0);
        assert_eq!(est.analytic_eav_free, 1.0);
    }

    #[test]
    fn quantiles_and_spearman() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert!(quantile(&[], 0.5).is_nan());
        assert_eq!(median(&[3.0, f64::INFINITY, 1.0]), 3.0);
        assert!((spearman(&[1.0, 2.0, 3.0], &[0.1, 0.5, 0.9]) - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        let bad = NetworkConfig {
            p1_fraction: 1.0,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config { field: "p1_fraction", .. })));
        assert!(matches!(Regime::new(RegimeKind::Serial, 0.0, 1.0, 2.0), Err(Error::Config { field: "gamma", .. })));
        assert_eq!("serial-colluding-zf".parse::<RegimeKind>().unwrap(), RegimeKind::SerialColluding);
    }

    proptest! {
        #[test]
        fn colluding_tolerates_fewer(n_l in 100usize..2_000_000, gamma in 0.2f64..3.0, alpha in 2.0f64..6.0) {
            let s = Regime::new(RegimeKind::Serial, gamma, 1.0, alpha).unwrap();
            let c = Regime::new(RegimeKind::SerialColluding, gamma, 1.0, alpha).unwrap();
            prop_assert!(schedule_ne(n_l, &c) <= schedule_ne(n_l, &s));
        }

        #[test]
        fn schedule_is_maximal(n_l in 100usize..1_000_000) {
            let r = regime(RegimeKind::Parallel);
            let n_e = schedule_ne(n_l, &r);
            let bound = n_l as f64 / (n_l as f64).ln();
            prop_assert!(n_e == 2 || r.scaling_lhs(n_e as f64) <= bound);
            prop_assert!(r.scaling_lhs((n_e + 1) as f64) > bound);
        }

        #[test]
        fn nr_never_below_ne(n_l in 100usize..100_000, n_e in 2usize..200) {
            let (n_r, bind) = schedule_nr(n_l, n_e, 1.0, 1.0);
            prop_assert!(n_r >= n_e);
            prop_assert_eq!(bind, n_r == n_e && (n_l as f64 / (n_e as f64 * (n_e as f64).ln().powi(2))).floor() < n_e as f64);
        }
    }
}
