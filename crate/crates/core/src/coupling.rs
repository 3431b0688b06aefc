//! Coalescing joint constructions for overshoot chains and the
//! total-variation rate curves they certify.
//!
//! The basic construction draws two (or `n`) variables from prescribed laws
//! so that they coincide with probability at least the common part of the
//! laws. The epoch construction synchronizes two renewal chains at the
//! reference chain's renewals: whenever the lagging chain's age is below the
//! threshold, a coupled draw of (residual law, fresh law) is attempted; each
//! epoch succeeds with probability at least `p0 * kappa`, where
//! `p0 = 1 - M/theta` comes from the overshoot-mean bound `M` via Markov's
//! inequality and `kappa` lower-bounds the common part. A successful epoch
//! merges the chains; the recorded coalescence times yield the constant of
//! the polynomial total-variation bound `K / t^(k-1)`.

use crate::error::{Error, Result};
use crate::gendist::{common_part_kappa, DistributionView, MassAt};
use crate::hist::{empirical_tv, tv_sigma, BinSpec, Histogram};
use crate::quad::MonotoneTable;
use crate::renewal::{simulate_path_from_age, RenewalPolicy};
use crate::stats::Running;
use crate::stream::{unit, Executor, Stream};
use serde::Serialize;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Direction of the residual common-part scan over ages in `(0, theta]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum KappaMode {
    /// Infimum over the age grid: a per-epoch guarantee valid for every age
    /// below the threshold. Default.
    Infimum,
    /// Supremum over the age grid, for reproducing the optimistic reading.
    Supremum,
}

/// Parameters of the epoch construction.
#[derive(Debug, Clone, Serialize)]
pub struct CouplingConfig {
    /// Age threshold for attempting a coupled draw.
    pub theta: f64,
    /// Uniform overshoot-mean bound `M` feeding `p0 = 1 - M/theta`.
    pub overshoot_bound: f64,
    pub kappa_mode: KappaMode,
    /// Polynomial rate order `k >= 2`; the rate function is `t^(k-1)`.
    pub rate_order: u32,
    /// Epoch cap per run; runs hitting it are censored, never spun forever.
    pub max_epochs: usize,
    /// Quadrature tolerance for common parts.
    pub tol: f64,
}

pub const DEFAULT_MAX_EPOCHS: usize = 10_000;

impl CouplingConfig {
    pub fn new(theta: f64, overshoot_bound: f64, rate_order: u32) -> Result<Self> {
        if !(overshoot_bound > 0.0) || !theta.is_finite() || theta <= overshoot_bound {
            return Err(Error::domain(format!(
                "need threshold > overshoot bound > 0, got theta {theta}, M {overshoot_bound}"
            )));
        }
        if rate_order < 2 {
            return Err(Error::domain("rate order must be >= 2"));
        }
        Ok(CouplingConfig {
            theta,
            overshoot_bound,
            kappa_mode: KappaMode::Infimum,
            rate_order,
            max_epochs: DEFAULT_MAX_EPOCHS,
            tol: 1e-8,
        })
    }

    /// Defaults for an iid law: `M` is its classical overshoot bound and
    /// `theta = 4 M`, so `p0 = 3/4`.
    pub fn for_iid(view: &DistributionView, rate_order: u32) -> Result<Self> {
        let m = crate::lorden::classical_bound(view)?
            .expect_finite("classical overshoot bound")?;
        CouplingConfig::new(4.0 * m, m, rate_order)
    }

    /// Defaults for an envelope-constrained policy: `M` is the generalized
    /// bound and `theta = 4 M`.
    pub fn for_envelope(envelope: &crate::renewal::Envelope, rate_order: u32) -> Result<Self> {
        let m = crate::lorden::generalized_bound(envelope)?
            .expect_report("coupling configuration")?
            .generalized_bound;
        CouplingConfig::new(4.0 * m, m, rate_order)
    }

    /// Markov-inequality success floor for the threshold event.
    pub fn p0(&self) -> f64 {
        1.0 - self.overshoot_bound / self.theta
    }
}

// ---------------------------------------------------------------------------
// Basic coupler
// ---------------------------------------------------------------------------

const TABLE_CELLS: usize = 2048;
const TABLE_REFINE: usize = 4;

/// Joint sampler for `n >= 2` laws built on the common-part decomposition.
///
/// Tables hold the sub-distribution function of the pointwise-minimum density
/// (with shared atoms as jumps) and, per law, the complement `F_i - Phi_min`.
/// Inverses resolve jump steps to atom locations.
pub struct Coupler {
    views: Vec<DistributionView>,
    kappa: f64,
    phi_min: Option<MonotoneTable>,
    psi: Vec<MonotoneTable>,
    identical: bool,
}

impl Coupler {
    pub fn pair(a: &DistributionView, b: &DistributionView, tol: f64) -> Result<Self> {
        Coupler::new(vec![a.clone(), b.clone()], tol)
    }

    pub fn new(views: Vec<DistributionView>, tol: f64) -> Result<Self> {
        if views.len() < 2 {
            return Err(Error::domain("coupler needs at least two laws"));
        }
        for v in &views {
            if !v.spec().is_proper() {
                return Err(Error::domain(
                    "coupler requires proper distributions".to_string(),
                ));
            }
        }
        // identical specs share everything: kappa = 1, one common draw
        if views.windows(2).all(|w| w[0].spec() == w[1].spec()) {
            return Ok(Coupler {
                views,
                kappa: 1.0,
                phi_min: None,
                psi: vec![],
                identical: true,
            });
        }

        // table horizon: all tails below tolerance
        let mut horizon: f64 = 1.0;
        while views
            .iter()
            .map(|v| v.survival(horizon))
            .fold(0.0, f64::max)
            > 0.5 * tol
            && horizon < 1e6
        {
            horizon *= 2.0;
        }

        // node set: uniform cells plus kinks and atoms of every law
        let mut nodes: Vec<f64> = (0..=TABLE_CELLS)
            .map(|i| horizon * i as f64 / TABLE_CELLS as f64)
            .collect();
        for v in &views {
            nodes.extend(v.spec().breakpoints().iter().filter(|b| **b < horizon));
            nodes.extend(
                v.spec()
                    .atoms()
                    .iter()
                    .map(|a| a.location)
                    .filter(|l| *l < horizon),
            );
        }
        nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        nodes.dedup();

        let min_density = |s: f64| -> f64 {
            views
                .iter()
                .map(|v| {
                    let d = v.density(s);
                    if d.is_finite() {
                        d
                    } else {
                        v.density(s + 1e-12 * (1.0 + s))
                    }
                })
                .fold(f64::INFINITY, f64::min)
        };

        // shared atoms: a location present in every law, contributing min mass
        let shared_mass = |s: f64| -> f64 {
            let mut min_mass = f64::INFINITY;
            for v in &views {
                match v.mass_at(s) {
                    MassAt::PointMass(m) => min_mass = min_mass.min(m),
                    MassAt::Density(_) => return 0.0,
                }
            }
            min_mass
        };

        let n_nodes = nodes.len();
        let mut phi_lo = vec![0.0; n_nodes];
        let mut phi_hi = vec![0.0; n_nodes];
        let mut acc = 0.0;
        for i in 0..n_nodes {
            if i > 0 {
                // composite Simpson on the smooth cell
                let (a, b) = (nodes[i - 1], nodes[i]);
                let h = (b - a) / (2 * TABLE_REFINE) as f64;
                let mut cell = 0.0;
                if h > 0.0 {
                    for k in 0..TABLE_REFINE {
                        let x0 = a + 2.0 * k as f64 * h;
                        cell += h / 3.0
                            * (min_density(x0)
                                + 4.0 * min_density(x0 + h)
                                + min_density(x0 + 2.0 * h));
                    }
                }
                acc += cell;
            }
            phi_lo[i] = acc;
            acc += shared_mass(nodes[i]);
            phi_hi[i] = acc;
        }
        let phi_min = MonotoneTable {
            xs: nodes.clone(),
            lo: phi_lo,
            hi: phi_hi,
        };
        let kappa = phi_min.total().clamp(0.0, 1.0);

        // per-law complements Psi_i = F_i - Phi_min, cumulative-max clamped
        let mut psi = Vec::with_capacity(views.len());
        for v in &views {
            let mut lo = vec![0.0; n_nodes];
            let mut hi = vec![0.0; n_nodes];
            let mut run_max = 0.0f64;
            for (i, &x) in nodes.iter().enumerate() {
                let f_left = 1.0 - v.survival_left(x);
                let f_right = 1.0 - v.survival(x);
                run_max = run_max.max(f_left - phi_min.lo[i]).max(0.0);
                lo[i] = run_max;
                run_max = run_max.max(f_right - phi_min.hi[i]);
                hi[i] = run_max;
            }
            psi.push(MonotoneTable {
                xs: nodes.clone(),
                lo,
                hi,
            });
        }

        Ok(Coupler {
            views,
            kappa,
            phi_min: Some(phi_min),
            psi,
            identical: false,
        })
    }

    /// Guaranteed coincidence probability (the common part of the laws).
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Draw one joint realization; `coincided` reports whether the common
    /// branch was taken (with zero common part the draws are independent).
    pub fn draw(&self, rng: &mut Stream) -> Result<(Vec<f64>, bool)> {
        let select = unit(rng);
        let common = unit(rng);
        let split = unit(rng);

        if self.identical {
            // one inverse-hazard draw shared by all laws
            let x = self.views[0].spec().level_crossing(-(1.0 - common).ln())?;
            return Ok((vec![x; self.views.len()], true));
        }
        if self.kappa > 0.0 && select < self.kappa {
            let x = self.phi_min.as_ref().unwrap().invert(self.kappa * common);
            return Ok((vec![x; self.views.len()], true));
        }
        if self.kappa == 0.0 {
            // degenerate: independent draws, never reported as coincident
            let mut out = Vec::with_capacity(self.views.len());
            let mut first = self.views[0].spec().level_crossing(-(1.0 - common).ln())?;
            out.push(first);
            for v in &self.views[1..] {
                first = v.spec().level_crossing(-(1.0 - split).ln())?;
                out.push(first);
            }
            return Ok((out, false));
        }
        let level = (1.0 - self.kappa) * split;
        let out: Vec<f64> = self.psi.iter().map(|t| t.invert(level)).collect();
        Ok((out, false))
    }
}

/// One coupled draw from a pair of laws.
pub fn couple_pair(
    a: &DistributionView,
    b: &DistributionView,
    tol: f64,
    rng: &mut Stream,
) -> Result<(f64, f64, bool)> {
    let c = Coupler::pair(a, b, tol)?;
    let (xs, hit) = c.draw(rng)?;
    Ok((xs[0], xs[1], hit))
}

/// One coupled draw from `n` laws; `all_coincided` is the common-branch flag.
pub fn couple_n(
    views: &[DistributionView],
    tol: f64,
    rng: &mut Stream,
) -> Result<(Vec<f64>, bool)> {
    Coupler::new(views.to_vec(), tol)?.draw(rng)
}

// ---------------------------------------------------------------------------
// Residual common part
// ---------------------------------------------------------------------------

/// Common part of the residual law at age `u` and the fresh law, scanned over
/// a grid of ages in `(0, theta]`. The infimum mode yields the per-epoch
/// guarantee used by the construction; the supremum mode reproduces the
/// optimistic single-age value.
pub fn residual_kappa(
    view: &DistributionView,
    theta: f64,
    mode: KappaMode,
    tol: f64,
    age_points: usize,
) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::domain(format!("threshold {theta} must be positive")));
    }
    if age_points == 0 {
        return Err(Error::domain("need at least one age point"));
    }
    let mut best = match mode {
        KappaMode::Infimum => f64::INFINITY,
        KappaMode::Supremum => f64::NEG_INFINITY,
    };
    for j in 1..=age_points {
        let u = theta * j as f64 / age_points as f64;
        let residual = view.conditioned(u)?;
        let k = common_part_kappa(&residual, view, tol)?;
        best = match mode {
            KappaMode::Infimum => best.min(k),
            KappaMode::Supremum => best.max(k),
        };
    }
    Ok(best.clamp(0.0, 1.0))
}

// ---------------------------------------------------------------------------
// Epoch construction
// ---------------------------------------------------------------------------

/// Per-chain state: which period it is in, the realized history feeding the
/// policy, and the age inside the current period.
#[derive(Debug, Clone)]
struct Chain {
    period: usize,
    history: Vec<f64>,
    age: f64,
}

impl Chain {
    fn new(age: f64) -> Self {
        Chain {
            period: 0,
            history: Vec::new(),
            age,
        }
    }

    fn view(&self, policy: &RenewalPolicy) -> Result<DistributionView> {
        Ok(policy.period_view(self.period, &self.history)?.into_owned())
    }

    /// Complete the current period with total length `xi`.
    fn complete(&mut self, xi: f64) {
        self.history.push(xi);
        self.period += 1;
        self.age = 0.0;
    }

    /// Walk fresh periods from a renewal at `from` until passing `limit`;
    /// afterwards the age equals `limit` minus the last renewal.
    fn advance_to(
        &mut self,
        policy: &RenewalPolicy,
        from: f64,
        limit: f64,
        rng: &mut Stream,
    ) -> Result<()> {
        let mut t = from;
        loop {
            let x = self.view(policy)?.sample(rng)?;
            if t + x <= limit {
                self.complete(x);
                t += x;
            } else {
                // period in progress at the epoch; its drawn excess is
                // discarded and re-randomized later through the residual law
                self.age = limit - t;
                return Ok(());
            }
        }
    }
}

/// Outcome of one run of the epoch construction.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CouplingRun {
    /// Coalescence time (censor time when `censored`).
    pub tau: f64,
    pub epochs: usize,
    /// Epochs at which the age was below the threshold and a coupled draw
    /// was attempted.
    pub attempts: usize,
    /// Attempts whose draws coincided.
    pub successes: usize,
    pub censored: bool,
}

/// Run the epoch construction once for two chains with initial ages `b1`,
/// `b2`. Marginal laws are preserved throughout; after a success the chains
/// are identical by construction.
pub fn successful_coupling(
    policy: &RenewalPolicy,
    b1: f64,
    b2: f64,
    cfg: &CouplingConfig,
    rng: &mut Stream,
) -> Result<CouplingRun> {
    if b1 < 0.0 || b2 < 0.0 {
        return Err(Error::domain("initial ages must be nonnegative"));
    }
    if b1 == b2 {
        return Ok(CouplingRun {
            tau: 0.0,
            epochs: 0,
            attempts: 0,
            successes: 0,
            censored: false,
        });
    }
    let one = Chain::new(b1);
    let two = Chain::new(b2);

    // first synchronization at the larger of the two first residual times
    let r1 = one.view(policy)?.conditioned(b1)?.sample(rng)?;
    let r2 = two.view(policy)?.conditioned(b2)?.sample(rng)?;
    if r1 == r2 {
        return Ok(CouplingRun {
            tau: r1,
            epochs: 0,
            attempts: 0,
            successes: 1,
            censored: false,
        });
    }
    let sync = r1.max(r2);
    let (mut reference, mut lagging) = if r1 > r2 { (one, two) } else { (two, one) };
    let (r_ref, r_lag) = (r1.max(r2), r1.min(r2));
    let age_ref = reference.age;
    reference.complete(age_ref + r_ref);
    let age_lag = lagging.age;
    lagging.complete(age_lag + r_lag);
    lagging.advance_to(policy, r_lag, sync, rng)?;

    let mut now = sync;
    let mut epochs = 0usize;
    let mut attempts = 0usize;
    let mut successes = 0usize;

    loop {
        if epochs >= cfg.max_epochs {
            return Ok(CouplingRun {
                tau: now,
                epochs,
                attempts,
                successes,
                censored: true,
            });
        }
        let u = lagging.age;
        let fresh = reference.view(policy)?;
        let residual = lagging.view(policy)?.conditioned(u)?;

        let (x_lag, x_ref, coincided) = if u < cfg.theta {
            attempts += 1;
            let coupler = Coupler::new(vec![residual, fresh], cfg.tol)?;
            let (xs, hit) = coupler.draw(rng)?;
            (xs[0], xs[1], hit || xs[0] == xs[1])
        } else {
            let a = residual.sample(rng)?;
            let b = fresh.sample(rng)?;
            (a, b, a == b)
        };

        if coincided {
            if u < cfg.theta {
                successes += 1;
            }
            return Ok(CouplingRun {
                tau: now + x_ref,
                epochs: epochs + 1,
                attempts,
                successes,
                censored: false,
            });
        }

        // advance to the reference chain's renewal
        reference.complete(x_ref);
        if x_lag <= x_ref {
            lagging.complete(u + x_lag);
            lagging.advance_to(policy, x_lag, x_ref, rng)?;
        } else {
            lagging.age = u + x_ref;
        }
        now += x_ref;
        epochs += 1;
    }
}

// ---------------------------------------------------------------------------
// Batches, rate constants, experiments
// ---------------------------------------------------------------------------

/// Estimated rate constant `K` of the polynomial bound `K / t^(k-1)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RateConstant {
    pub order: u32,
    pub k_hat: f64,
    pub half_width_3s: f64,
    pub n: usize,
}

impl RateConstant {
    pub fn bound_at(&self, t: f64) -> f64 {
        if t <= 0.0 {
            f64::INFINITY
        } else {
            self.k_hat / t.powi(self.order as i32 - 1)
        }
    }

    pub fn curve(&self, times: &[f64]) -> Vec<(f64, f64)> {
        times.iter().map(|&t| (t, self.bound_at(t))).collect()
    }
}

/// `K_hat` as the sample mean of `tau^(k-1)` with a 3-sigma half-width.
pub fn rate_constant(tau_samples: &[f64], order: u32) -> Result<RateConstant> {
    if order < 2 {
        return Err(Error::domain("rate order must be >= 2"));
    }
    if tau_samples.is_empty() {
        return Err(Error::domain("no coalescence samples"));
    }
    let mut acc = Running::default();
    for &tau in tau_samples {
        acc.push(tau.powi(order as i32 - 1));
    }
    Ok(RateConstant {
        order,
        k_hat: acc.mean(),
        half_width_3s: acc.half_width_3s(),
        n: tau_samples.len(),
    })
}

/// Aggregate of a batch of coupling runs.
#[derive(Debug, Clone, Serialize)]
pub struct CouplingResult {
    pub tau_samples: Vec<f64>,
    pub censored: usize,
    /// Pooled fraction of coupled attempts that coincided.
    pub epoch_success_estimate: f64,
    pub mean_epochs: f64,
    pub rate: RateConstant,
    pub p0: f64,
    /// Residual common-part reference for iid policies (the guarantee is
    /// `p0 * kappa`); absent for history-dependent policies.
    pub kappa_reference: Option<f64>,
}

impl CouplingResult {
    /// Empirical survival of the coalescence time; censored runs count as
    /// still uncoupled.
    pub fn tail_probability(&self, t: f64) -> f64 {
        let n = self.tau_samples.len() + self.censored;
        if n == 0 {
            return 0.0;
        }
        let over = self.tau_samples.iter().filter(|&&tau| tau > t).count() + self.censored;
        over as f64 / n as f64
    }

    pub fn bound_curve(&self, times: &[f64]) -> Vec<(f64, f64)> {
        self.rate.curve(times)
    }
}

/// Run the epoch construction `n_runs` times in parallel substreams.
pub fn run_coupling_batch(
    policy: &RenewalPolicy,
    b1: f64,
    b2: f64,
    cfg: &CouplingConfig,
    n_runs: usize,
    exec: &Executor,
    seed: u64,
    phase: u64,
) -> Result<CouplingResult> {
    if n_runs == 0 {
        return Err(Error::domain("need at least one run"));
    }
    let kappa_reference = match policy {
        RenewalPolicy::Iid(view) => {
            let k = residual_kappa(view, cfg.theta, cfg.kappa_mode, cfg.tol, 32)?;
            if cfg.p0() * k == 0.0 {
                return Err(Error::CouplingInapplicable);
            }
            Some(k)
        }
        _ => None,
    };

    let batch = exec.run(n_runs, seed, phase, |_, rng| {
        successful_coupling(policy, b1, b2, cfg, rng)
    });
    let mut tau_samples = Vec::with_capacity(n_runs);
    let mut censored = 0usize;
    let mut attempts = 0usize;
    let mut successes = 0usize;
    let mut epochs = 0usize;
    for run in batch.items {
        let run = run?;
        attempts += run.attempts;
        successes += run.successes;
        epochs += run.epochs;
        if run.censored {
            censored += 1;
        } else {
            tau_samples.push(run.tau);
        }
    }
    let rate = rate_constant(&tau_samples, cfg.rate_order)?;
    Ok(CouplingResult {
        censored,
        epoch_success_estimate: if attempts == 0 {
            1.0
        } else {
            successes as f64 / attempts as f64
        },
        mean_epochs: epochs as f64 / n_runs as f64,
        rate,
        p0: cfg.p0(),
        kappa_reference,
        tau_samples,
    })
}

/// One probe time of a convergence experiment.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConvergenceRow {
    pub t: f64,
    pub tv: f64,
    pub sigma: f64,
    pub bound: f64,
    /// Set when `tv - 3 sigma > bound`.
    pub breached: bool,
}

/// Empirical total-variation decay of two overshoot laws against the coupled
/// rate bound.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    pub rate: RateConstant,
    pub censored: usize,
    pub epoch_success_estimate: f64,
}

impl ConvergenceTable {
    pub fn any_breach(&self) -> bool {
        self.rows.iter().any(|r| r.breached)
    }
}

/// Estimate the overshoot-law total variation between chains started at ages
/// `b1` and `b2` at each probe time, overlaid with the coupled bound curve.
/// Uses phases `phase .. phase+3`.
#[allow(clippy::too_many_arguments)]
pub fn convergence_experiment(
    policy: &RenewalPolicy,
    b1: f64,
    b2: f64,
    times: &[f64],
    n_paths: usize,
    bins: usize,
    cfg: &CouplingConfig,
    n_runs: usize,
    exec: &Executor,
    seed: u64,
    phase: u64,
) -> Result<ConvergenceTable> {
    if times.is_empty() {
        return Err(Error::domain("no probe times"));
    }
    let coupling = run_coupling_batch(policy, b1, b2, cfg, n_runs, exec, seed, phase)?;

    let horizon = times.iter().copied().fold(0.0, f64::max).max(1e-9);
    let observe = |age: f64, subphase: u64| -> Result<Vec<Vec<f64>>> {
        let batch = exec.run(n_paths, seed, phase + subphase, |_, rng| -> Result<Vec<f64>> {
            let path = simulate_path_from_age(policy, age, horizon, rng)?;
            times.iter().map(|&t| path.overshoot_at(t)).collect()
        });
        batch.items.into_iter().collect()
    };
    let obs1 = observe(b1, 1)?;
    let obs2 = observe(b2, 2)?;

    let mut rows = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        let spec = BinSpec::for_overshoot(t, &[b1, b2], bins)?;
        let mut h1 = Histogram::new(spec.clone());
        let mut h2 = Histogram::new(spec);
        for o in &obs1 {
            h1.observe(o[k]);
        }
        for o in &obs2 {
            h2.observe(o[k]);
        }
        let tv = empirical_tv(&h1, &h2)?;
        let sigma = tv_sigma(&h1, &h2);
        let bound = coupling.rate.bound_at(t);
        rows.push(ConvergenceRow {
            t,
            tv,
            sigma,
            bound,
            breached: tv - 3.0 * sigma > bound,
        });
    }
    Ok(ConvergenceTable {
        rows,
        rate: coupling.rate,
        censored: coupling.censored,
        epoch_success_estimate: coupling.epoch_success_estimate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gendist::HazardSpec;
    use crate::stream::substream;

    fn exp_view(rate: f64) -> DistributionView {
        DistributionView::new(HazardSpec::exponential(rate).unwrap()).unwrap()
    }

    #[test]
    fn identical_laws_always_coincide() {
        let v = exp_view(1.0);
        let c = Coupler::pair(&v, &v, 1e-8).unwrap();
        assert_eq!(c.kappa(), 1.0);
        let mut rng = substream(1, 20, 0);
        for _ in 0..100 {
            let (xs, hit) = c.draw(&mut rng).unwrap();
            assert!(hit);
            assert_eq!(xs[0], xs[1]);
        }
    }

    #[test]
    fn disjoint_supports_never_coincide() {
        let a = DistributionView::new(HazardSpec::uniform(1.0).unwrap()).unwrap();
        let b = DistributionView::new(HazardSpec::uniform(1.0).unwrap().delayed(2.0).unwrap())
            .unwrap();
        let c = Coupler::pair(&a, &b, 1e-8).unwrap();
        assert!(c.kappa() < 1e-6);
        let mut rng = substream(2, 21, 0);
        for _ in 0..200 {
            let (xs, hit) = c.draw(&mut rng).unwrap();
            assert!(!hit);
            assert!(xs[0] <= 1.0 && xs[1] >= 2.0);
        }
    }

    #[test]
    fn pair_coincidence_frequency_matches_kappa() {
        let c = Coupler::pair(&exp_view(1.0), &exp_view(2.0), 1e-8).unwrap();
        assert!((c.kappa() - 0.75).abs() < 1e-4, "kappa {}", c.kappa());
        let mut rng = substream(3, 22, 0);
        let n = 20_000;
        let mut hits = 0;
        for _ in 0..n {
            if c.draw(&mut rng).unwrap().1 {
                hits += 1;
            }
        }
        let freq = hits as f64 / n as f64;
        assert!((freq - 0.75).abs() < 0.01, "freq {freq}");
    }

    #[test]
    fn triple_coupler_all_coincide_for_identical() {
        let v = exp_view(1.0);
        let c = Coupler::new(vec![v.clone(), v.clone(), v], 1e-8).unwrap();
        let mut rng = substream(4, 23, 0);
        let (xs, hit) = c.draw(&mut rng).unwrap();
        assert!(hit);
        assert!(xs.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn residual_kappa_memoryless_is_one() {
        let k = residual_kappa(&exp_view(1.3), 5.0, KappaMode::Infimum, 1e-8, 16).unwrap();
        assert!((k - 1.0).abs() < 1e-6);
        let k = residual_kappa(&exp_view(1.3), 5.0, KappaMode::Supremum, 1e-8, 16).unwrap();
        assert!((k - 1.0).abs() < 1e-6);
    }

    #[test]
    fn residual_kappa_uniform_scan() {
        // residual of uniform [0,1] at age u has common part 1 - u
        let v = DistributionView::new(HazardSpec::uniform(1.0).unwrap()).unwrap();
        let inf = residual_kappa(&v, 0.5, KappaMode::Infimum, 1e-8, 100).unwrap();
        assert!((inf - 0.5).abs() < 2e-3, "inf {inf}");
        let sup = residual_kappa(&v, 0.5, KappaMode::Supremum, 1e-8, 100).unwrap();
        assert!(sup > 0.99, "sup {sup}");
    }

    #[test]
    fn residual_kappa_beyond_support_errors() {
        let v = DistributionView::new(HazardSpec::uniform(1.0).unwrap()).unwrap();
        assert!(matches!(
            residual_kappa(&v, 1.5, KappaMode::Infimum, 1e-8, 8),
            Err(Error::ThresholdBeyondSupport { .. })
        ));
    }

    #[test]
    fn equal_ages_coalesce_immediately() {
        let policy = RenewalPolicy::iid(exp_view(1.0)).unwrap();
        let cfg = CouplingConfig::for_iid(&exp_view(1.0), 3).unwrap();
        let mut rng = substream(5, 24, 0);
        let run = successful_coupling(&policy, 1.5, 1.5, &cfg, &mut rng).unwrap();
        assert_eq!(run.tau, 0.0);
        assert!(!run.censored);
    }

    #[test]
    fn memoryless_coupling_coalesces_fast() {
        let policy = RenewalPolicy::iid(exp_view(1.0)).unwrap();
        let cfg = CouplingConfig::new(8.0, 2.0, 3).unwrap();
        for i in 0..50 {
            let mut rng = substream(6, 25, i);
            let run = successful_coupling(&policy, 0.0, 5.0, &cfg, &mut rng).unwrap();
            assert!(!run.censored);
            assert!(run.tau > 0.0);
        }
    }

    #[test]
    fn rate_constant_small_samples() {
        let r = rate_constant(&[1.0, 2.0, 3.0], 2).unwrap();
        assert!((r.k_hat - 2.0).abs() < 1e-12);
        let r = rate_constant(&[1.0, 2.0, 3.0], 3).unwrap();
        assert!((r.k_hat - 14.0 / 3.0).abs() < 1e-12);
        let r = rate_constant(&[0.0, 0.0], 4).unwrap();
        assert_eq!(r.k_hat, 0.0);
        assert_eq!(r.bound_at(2.0), 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(CouplingConfig::new(1.0, 2.0, 3).is_err()); // theta <= M
        assert!(CouplingConfig::new(4.0, 2.0, 1).is_err()); // order < 2
        let cfg = CouplingConfig::new(8.0, 2.0, 3).unwrap();
        assert!((cfg.p0() - 0.75).abs() < 1e-12);
    }
}
