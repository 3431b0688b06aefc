//! Application systems: a two-element repairable pair with state-dependent
//! failure/repair rates, and a multi-flow event process whose per-flow
//! intensities depend on the full clock vector.
//!
//! Both simulators are exact event-driven constructions. Candidate events are
//! proposed from a combined majorant rate and accepted by thinning, with the
//! majorant recomputed at every proposal; built-in rules guarantee their
//! majorant over the stretch (constant, decaying-in-own-age, bounded
//! indicator), custom rules declare one and are checked at every evaluation.

use crate::error::{Error, Result};
use crate::lorden::generalized_bound;
use crate::renewal::{Envelope, RenewalPolicy};
use crate::stats::Running;
use crate::stream::{exp1, unit, Executor, Stream};
use crate::coupling::{run_coupling_batch, CouplingConfig, RateConstant};
use serde::Serialize;
use std::collections::BTreeMap;
use std::sync::Arc;

// ---------------------------------------------------------------------------
// Rate rules
// ---------------------------------------------------------------------------

/// State-dependent intensity of one clock, evaluated on the full elapsed
/// vector. `own` is the index of the clock the rule drives.
#[derive(Clone)]
pub enum RateRule {
    /// Constant rate.
    Constant { rate: f64 },
    /// `c / (1 + own elapsed)`: decaying in the rule's own age.
    ParetoOwn { c: f64 },
    /// `base + boost` while `elapsed[other] < threshold`, else `base`.
    IndicatorOther {
        base: f64,
        boost: f64,
        other: usize,
        threshold: f64,
    },
    /// Arbitrary rule with a caller-guaranteed global majorant.
    Custom {
        f: Arc<dyn Fn(usize, &[f64]) -> f64 + Send + Sync>,
        majorant: f64,
    },
}

impl std::fmt::Debug for RateRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RateRule::Constant { rate } => write!(f, "Constant({rate})"),
            RateRule::ParetoOwn { c } => write!(f, "ParetoOwn({c})"),
            RateRule::IndicatorOther {
                base,
                boost,
                other,
                threshold,
            } => write!(f, "IndicatorOther({base}+{boost}, z[{other}]<{threshold})"),
            RateRule::Custom { majorant, .. } => write!(f, "Custom(majorant {majorant})"),
        }
    }
}

impl RateRule {
    pub fn validate(&self, clocks: usize) -> Result<()> {
        match self {
            RateRule::Constant { rate } => {
                if !(rate.is_finite() && *rate >= 0.0) {
                    return Err(Error::invalid_spec(format!("constant rate {rate}")));
                }
            }
            RateRule::ParetoOwn { c } => {
                if !(c.is_finite() && *c > 0.0) {
                    return Err(Error::invalid_spec(format!("decay constant {c}")));
                }
            }
            RateRule::IndicatorOther {
                base,
                boost,
                other,
                threshold,
            } => {
                if !(base.is_finite() && *base >= 0.0 && boost.is_finite() && *base + *boost >= 0.0)
                {
                    return Err(Error::invalid_spec(format!(
                        "indicator rates base {base}, boost {boost}"
                    )));
                }
                if *other >= clocks || !threshold.is_finite() {
                    return Err(Error::invalid_spec(format!(
                        "indicator refers to clock {other} of {clocks}"
                    )));
                }
            }
            RateRule::Custom { majorant, .. } => {
                if !(majorant.is_finite() && *majorant > 0.0) {
                    return Err(Error::invalid_spec(format!("majorant {majorant}")));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, own: usize, elapsed: &[f64]) -> f64 {
        match self {
            RateRule::Constant { rate } => *rate,
            RateRule::ParetoOwn { c } => c / (1.0 + elapsed[own]),
            RateRule::IndicatorOther {
                base,
                boost,
                other,
                threshold,
            } => {
                if elapsed[*other] < *threshold {
                    base + boost
                } else {
                    *base
                }
            }
            RateRule::Custom { f, .. } => f(own, elapsed),
        }
    }

    /// Upper bound on the rate from the given state until the next event.
    /// Between events all clocks only grow, so decaying-in-own-age and
    /// leave-only indicators stay below their value at the stretch start.
    pub fn majorant(&self, own: usize, elapsed: &[f64]) -> f64 {
        match self {
            RateRule::Constant { rate } => *rate,
            RateRule::ParetoOwn { c } => c / (1.0 + elapsed[own]),
            RateRule::IndicatorOther { base, boost, .. } => base + boost.max(0.0),
            RateRule::Custom { majorant, .. } => *majorant,
        }
    }
}

fn checked_rate(rule: &RateRule, own: usize, elapsed: &[f64], majorant: f64) -> Result<f64> {
    let r = rule.eval(own, elapsed);
    if !r.is_finite() || r < 0.0 {
        return Err(Error::InvalidRate {
            rate: r,
            state: format!("clock {own}, elapsed {elapsed:?}"),
        });
    }
    if r > majorant * (1.0 + 1e-9) + 1e-12 {
        return Err(Error::MajorantTooSmall {
            rate: r,
            majorant,
            state: format!("clock {own}, elapsed {elapsed:?}"),
        });
    }
    Ok(r)
}

// ---------------------------------------------------------------------------
// Two-element repairable system
// ---------------------------------------------------------------------------

/// Operating mode of one element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Mode {
    Operational,
    Repair,
}

impl Mode {
    fn flipped(self) -> Mode {
        match self {
            Mode::Operational => Mode::Repair,
            Mode::Repair => Mode::Operational,
        }
    }
}

/// Full system state: per element, its mode and the time since its last
/// mode change.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ReliabilityState {
    pub modes: [Mode; 2],
    pub elapsed: [f64; 2],
}

impl ReliabilityState {
    pub fn fresh_operational() -> Self {
        ReliabilityState {
            modes: [Mode::Operational; 2],
            elapsed: [0.0; 2],
        }
    }

    pub fn fresh_repair() -> Self {
        ReliabilityState {
            modes: [Mode::Repair; 2],
            elapsed: [0.0; 2],
        }
    }
}

/// Failure rates (while operational) and repair rates (while under repair)
/// for both elements.
#[derive(Debug, Clone)]
pub struct ReliabilityRules {
    pub failure: [RateRule; 2],
    pub repair: [RateRule; 2],
}

impl ReliabilityRules {
    pub fn validate(&self) -> Result<()> {
        for r in self.failure.iter().chain(self.repair.iter()) {
            r.validate(2)?;
        }
        Ok(())
    }

    fn active(&self, k: usize, mode: Mode) -> &RateRule {
        match mode {
            Mode::Operational => &self.failure[k],
            Mode::Repair => &self.repair[k],
        }
    }
}

/// One mode transition.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TransitionEvent {
    pub time: f64,
    pub element: usize,
    pub to: Mode,
}

/// Full event trajectory with per-element operational-time tallies.
#[derive(Debug, Clone, Serialize)]
pub struct ReliabilityTrajectory {
    pub initial: ReliabilityState,
    pub events: Vec<TransitionEvent>,
    pub horizon: f64,
    pub operational_time: [f64; 2],
}

impl ReliabilityTrajectory {
    /// Fraction of `[0, horizon]` the element spent operational.
    pub fn availability(&self, element: usize) -> f64 {
        self.operational_time[element] / self.horizon
    }
}

struct ReliabilityEngine<'a> {
    rules: &'a ReliabilityRules,
    state: ReliabilityState,
    time: f64,
    operational: [f64; 2],
}

impl<'a> ReliabilityEngine<'a> {
    fn new(rules: &'a ReliabilityRules, initial: ReliabilityState) -> Self {
        ReliabilityEngine {
            rules,
            state: initial,
            time: 0.0,
            operational: [0.0; 2],
        }
    }

    fn credit(&mut self, dt: f64, horizon: f64) {
        let span = (horizon - self.time).min(dt).max(0.0);
        for k in 0..2 {
            if self.state.modes[k] == Mode::Operational {
                self.operational[k] += span;
            }
        }
    }

    /// Advance to the next accepted transition, or to the horizon.
    /// Visits every probe in between via `on_probe`.
    fn step(
        &mut self,
        horizon: f64,
        rng: &mut Stream,
        mut on_probe: impl FnMut(f64, &ReliabilityState),
        probes: &[f64],
        probe_ptr: &mut usize,
    ) -> Result<Option<TransitionEvent>> {
        loop {
            let m: [f64; 2] = [
                self.rules
                    .active(0, self.state.modes[0])
                    .majorant(0, &self.state.elapsed),
                self.rules
                    .active(1, self.state.modes[1])
                    .majorant(1, &self.state.elapsed),
            ];
            let m_total = m[0] + m[1];
            let dt = if m_total > 0.0 {
                exp1(rng) / m_total
            } else {
                f64::INFINITY
            };
            let next = self.time + dt;

            // visit probes inside (time, min(next, horizon)]
            while *probe_ptr < probes.len() && probes[*probe_ptr] <= next.min(horizon) {
                let p = probes[*probe_ptr];
                let mut st = self.state;
                st.elapsed[0] += p - self.time;
                st.elapsed[1] += p - self.time;
                on_probe(p, &st);
                *probe_ptr += 1;
            }

            if next >= horizon {
                self.credit(horizon - self.time, horizon);
                let span = horizon - self.time;
                self.state.elapsed[0] += span;
                self.state.elapsed[1] += span;
                self.time = horizon;
                return Ok(None);
            }

            self.credit(dt, horizon);
            self.state.elapsed[0] += dt;
            self.state.elapsed[1] += dt;
            self.time = next;

            let r0 = checked_rate(
                self.rules.active(0, self.state.modes[0]),
                0,
                &self.state.elapsed,
                m[0],
            )?;
            let r1 = checked_rate(
                self.rules.active(1, self.state.modes[1]),
                1,
                &self.state.elapsed,
                m[1],
            )?;
            let total = r0 + r1;
            if unit(rng) * m_total < total {
                let k = if unit(rng) * total < r0 { 0 } else { 1 };
                self.state.modes[k] = self.state.modes[k].flipped();
                self.state.elapsed[k] = 0.0;
                return Ok(Some(TransitionEvent {
                    time: self.time,
                    element: k,
                    to: self.state.modes[k],
                }));
            }
        }
    }
}

/// Exact event-driven simulation of the two-element system.
pub fn simulate_reliability(
    rules: &ReliabilityRules,
    initial: ReliabilityState,
    horizon: f64,
    rng: &mut Stream,
) -> Result<ReliabilityTrajectory> {
    if !(horizon > 0.0) {
        return Err(Error::domain(format!("horizon {horizon} must be positive")));
    }
    rules.validate()?;
    let mut engine = ReliabilityEngine::new(rules, initial);
    let mut events = Vec::new();
    let mut ptr = 0usize;
    while let Some(ev) = engine.step(horizon, rng, |_, _| {}, &[], &mut ptr)? {
        events.push(ev);
    }
    Ok(ReliabilityTrajectory {
        initial,
        events,
        horizon,
        operational_time: engine.operational,
    })
}

/// Memory-light variant: record only the states at the probe times plus the
/// operational-time tallies.
pub fn simulate_reliability_probed(
    rules: &ReliabilityRules,
    initial: ReliabilityState,
    horizon: f64,
    probes: &[f64],
    rng: &mut Stream,
) -> Result<(Vec<ReliabilityState>, [f64; 2])> {
    rules.validate()?;
    let mut engine = ReliabilityEngine::new(rules, initial);
    let mut states = Vec::with_capacity(probes.len());
    let mut ptr = 0usize;
    while engine
        .step(horizon, rng, |_, st| states.push(*st), probes, &mut ptr)?
        .is_some()
    {}
    Ok((states, engine.operational))
}

// ---------------------------------------------------------------------------
// Envelope audit of a trajectory
// ---------------------------------------------------------------------------

/// One point where a realized rate escaped the envelope.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AuditViolation {
    pub time: f64,
    pub element: usize,
    pub elapsed: f64,
    pub rate: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Replay a trajectory and compare every realized rate (on a dense grid plus
/// at event times) with the envelope at the element's own elapsed time.
pub fn envelope_audit(
    trajectory: &ReliabilityTrajectory,
    rules: &ReliabilityRules,
    envelope: &Envelope,
    grid_step: f64,
) -> Result<Vec<AuditViolation>> {
    if !(grid_step > 0.0) {
        return Err(Error::domain("audit grid step must be positive"));
    }
    const SLACK: f64 = 1e-9;
    let mut out = Vec::new();
    let mut modes = trajectory.initial.modes;
    // element clock origins: time when the current period started
    let mut origin = [
        -trajectory.initial.elapsed[0],
        -trajectory.initial.elapsed[1],
    ];
    let check = |t: f64, modes: &[Mode; 2], origin: &[f64; 2], out: &mut Vec<AuditViolation>| {
        let elapsed = [t - origin[0], t - origin[1]];
        for k in 0..2 {
            let rate = rules.active(k, modes[k]).eval(k, &elapsed);
            let lo = envelope.lower().continuous_rate(elapsed[k]);
            let hi = envelope.upper().continuous_rate(elapsed[k]);
            if rate + SLACK < lo || (rate > hi + SLACK && hi.is_finite()) {
                out.push(AuditViolation {
                    time: t,
                    element: k,
                    elapsed: elapsed[k],
                    rate,
                    lower: lo,
                    upper: hi,
                });
            }
        }
    };

    let mut t = 0.0;
    for ev in &trajectory.events {
        while t < ev.time {
            check(t, &modes, &origin, &mut out);
            t += grid_step;
        }
        check(ev.time, &modes, &origin, &mut out);
        modes[ev.element] = ev.to;
        origin[ev.element] = ev.time;
    }
    while t <= trajectory.horizon {
        check(t, &modes, &origin, &mut out);
        t += grid_step;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Ergodicity experiment
// ---------------------------------------------------------------------------

/// One probe time of the state-distribution comparison.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StateTvRow {
    pub t: f64,
    pub tv: f64,
    pub sigma: f64,
    pub bound: f64,
    pub breached: bool,
}

/// Total-variation decay of the system state law from two initial states,
/// with the coupling-derived polynomial bound of the embedded chains.
#[derive(Debug, Clone, Serialize)]
pub struct ReliabilityErgodicity {
    pub rows: Vec<StateTvRow>,
    pub rate: RateConstant,
    pub n_paths: usize,
    pub pilot_audit_violations: usize,
}

impl ReliabilityErgodicity {
    pub fn any_breach(&self) -> bool {
        self.rows.iter().any(|r| r.breached)
    }
}

/// Sparse joint histogram over (mode pair, clock bin pair).
fn state_key(st: &ReliabilityState, cap: f64, bins: usize) -> (u8, u8, u32, u32) {
    let code = |m: Mode| -> u8 {
        match m {
            Mode::Operational => 0,
            Mode::Repair => 1,
        }
    };
    let bin = |x: f64| -> u32 {
        let w = cap / bins as f64;
        ((x / w).floor() as u32).min(bins as u32 - 1)
    };
    (
        code(st.modes[0]),
        code(st.modes[1]),
        bin(st.elapsed[0]),
        bin(st.elapsed[1]),
    )
}

fn sparse_tv(
    a: &BTreeMap<(u8, u8, u32, u32), u64>,
    b: &BTreeMap<(u8, u8, u32, u32), u64>,
    na: f64,
    nb: f64,
) -> (f64, f64) {
    let mut keys: Vec<_> = a.keys().chain(b.keys()).collect();
    keys.sort();
    keys.dedup();
    let mut l1 = 0.0;
    let mut var = 0.0;
    for k in keys {
        let p = *a.get(k).unwrap_or(&0) as f64 / na;
        let q = *b.get(k).unwrap_or(&0) as f64 / nb;
        l1 += (p - q).abs();
        var += p * (1.0 - p) / na + q * (1.0 - q) / nb;
    }
    (0.5 * l1, 0.5 * var.sqrt())
}

/// Compare the state laws from `init1` and `init2` at each probe time.
///
/// A pilot batch is audited against the envelope first; any violation aborts.
/// The bound curve comes from the epoch construction applied to the envelope's
/// heavy law (the slowest renewals the envelope admits), with `K` estimated
/// from `n_runs` coalescence times. Uses phases `phase .. phase+4`.
#[allow(clippy::too_many_arguments)]
pub fn reliability_ergodicity_experiment(
    rules: &ReliabilityRules,
    init1: ReliabilityState,
    init2: ReliabilityState,
    times: &[f64],
    n_paths: usize,
    envelope: &Envelope,
    clock_bins: usize,
    n_runs: usize,
    exec: &Executor,
    seed: u64,
    phase: u64,
) -> Result<ReliabilityErgodicity> {
    if times.is_empty() {
        return Err(Error::domain("no probe times"));
    }
    let mut probes = times.to_vec();
    probes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let horizon = *probes.last().unwrap();

    // pilot audit
    let pilot = exec.run(8, seed, phase, |i, rng| -> Result<usize> {
        let init = if i % 2 == 0 { init1 } else { init2 };
        let traj = simulate_reliability(rules, init, horizon.min(50.0), rng)?;
        Ok(envelope_audit(&traj, rules, envelope, 0.05)?.len())
    });
    let mut pilot_violations = 0usize;
    for p in pilot.items {
        pilot_violations += p?;
    }
    if pilot_violations > 0 {
        return Err(Error::domain(format!(
            "envelope audit failed on pilot runs: {pilot_violations} violations"
        )));
    }

    // coupled rate constant from the heavy envelope law
    let heavy_policy = RenewalPolicy::iid(envelope.heavy_law().clone())?;
    let cfg = CouplingConfig::for_envelope(envelope, envelope.moment_order())?;
    let coupling = run_coupling_batch(
        &heavy_policy,
        0.0,
        cfg.theta,
        &cfg,
        n_runs,
        exec,
        seed,
        phase + 1,
    )?;

    // clock cap: 1% survival quantile of the heavy law
    let heavy = envelope.heavy_law();
    let mut cap: f64 = 1.0;
    while heavy.survival(cap) > 0.01 && cap < 1e4 {
        cap *= 1.5;
    }

    let collect = |init: ReliabilityState, subphase: u64| {
        exec.run(n_paths, seed, phase + subphase, |_, rng| -> Result<Vec<ReliabilityState>> {
            Ok(simulate_reliability_probed(rules, init, horizon, &probes, rng)?.0)
        })
    };
    let batch1 = collect(init1, 2);
    let batch2 = collect(init2, 3);

    let mut hists1: Vec<BTreeMap<(u8, u8, u32, u32), u64>> =
        probes.iter().map(|_| BTreeMap::new()).collect();
    let mut hists2 = hists1.clone();
    for item in batch1.items {
        for (k, st) in item?.iter().enumerate() {
            *hists1[k].entry(state_key(st, cap, clock_bins)).or_insert(0) += 1;
        }
    }
    for item in batch2.items {
        for (k, st) in item?.iter().enumerate() {
            *hists2[k].entry(state_key(st, cap, clock_bins)).or_insert(0) += 1;
        }
    }

    let rows = probes
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let (tv, sigma) = sparse_tv(&hists1[k], &hists2[k], n_paths as f64, n_paths as f64);
            let bound = coupling.rate.bound_at(t);
            StateTvRow {
                t,
                tv,
                sigma,
                bound,
                breached: tv - 3.0 * sigma > bound,
            }
        })
        .collect();
    Ok(ReliabilityErgodicity {
        rows,
        rate: coupling.rate,
        n_paths,
        pilot_audit_violations: 0,
    })
}

// ---------------------------------------------------------------------------
// Multi-flow modulated event process
// ---------------------------------------------------------------------------

/// Flow intensities over the elapsed-time vector `z` (one clock per flow).
#[derive(Debug, Clone)]
pub struct MmppSpec {
    pub rules: Vec<RateRule>,
}

impl MmppSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rules.is_empty() {
            return Err(Error::invalid_spec("need at least one flow".to_string()));
        }
        for r in &self.rules {
            r.validate(self.rules.len())?;
        }
        Ok(())
    }
}

/// Per-path, per-flow statistics from one simulation pass.
#[derive(Debug, Clone)]
pub struct MmppPathStats {
    pub counts: Vec<u64>,
    /// `waits[k][j]`: forward waiting time of flow `k` at probe `j`
    /// (`None` when no event arrived before the horizon).
    pub waits: Vec<Vec<Option<f64>>>,
}

/// Event-driven simulation reporting counts and forward waiting times.
pub fn simulate_mmpp_probed(
    spec: &MmppSpec,
    horizon: f64,
    probes: &[f64],
    rng: &mut Stream,
) -> Result<MmppPathStats> {
    if !(horizon > 0.0) {
        return Err(Error::domain(format!("horizon {horizon} must be positive")));
    }
    spec.validate()?;
    let n = spec.rules.len();
    let mut elapsed = vec![0.0f64; n];
    let mut counts = vec![0u64; n];
    let mut waits: Vec<Vec<Option<f64>>> = vec![vec![None; probes.len()]; n];
    let mut probe_ptr = vec![0usize; n];
    let mut t = 0.0;
    let mut majorants = vec![0.0f64; n];
    loop {
        let mut m_total = 0.0;
        for k in 0..n {
            majorants[k] = spec.rules[k].majorant(k, &elapsed);
            m_total += majorants[k];
        }
        if m_total <= 0.0 {
            break;
        }
        let dt = exp1(rng) / m_total;
        if t + dt > horizon {
            break;
        }
        t += dt;
        for z in elapsed.iter_mut() {
            *z += dt;
        }
        let mut total = 0.0;
        let mut rates = vec![0.0f64; n];
        for k in 0..n {
            rates[k] = checked_rate(&spec.rules[k], k, &elapsed, majorants[k])?;
            total += rates[k];
        }
        if unit(rng) * m_total < total {
            // accepted: attribute to a flow
            let mut pick = unit(rng) * total;
            let mut flow = n - 1;
            for (k, r) in rates.iter().enumerate() {
                if pick < *r {
                    flow = k;
                    break;
                }
                pick -= r;
            }
            counts[flow] += 1;
            while probe_ptr[flow] < probes.len() && probes[probe_ptr[flow]] < t {
                waits[flow][probe_ptr[flow]] = Some(t - probes[probe_ptr[flow]]);
                probe_ptr[flow] += 1;
            }
            elapsed[flow] = 0.0;
        }
    }
    Ok(MmppPathStats { counts, waits })
}

/// Aggregated per-flow report of a batch of simulations.
#[derive(Debug, Clone, Serialize)]
pub struct FlowReport {
    pub flow: usize,
    pub mean_event_count: f64,
    pub mean_inter_event: f64,
    pub mean_waiting: f64,
    pub waiting_half_width: f64,
    /// Waiting-time bound from the flow's envelope, when supplied.
    pub bound: Option<f64>,
    /// Set when the waiting estimate exceeds the bound by more than 3 sigma.
    pub breached: bool,
    /// Probe observations with no event before the horizon (excluded).
    pub missing_waits: u64,
}

/// Batch experiment over `n` paths. Uses phase `phase`.
#[derive(Debug, Clone, Serialize)]
pub struct MmppReport {
    pub flows: Vec<FlowReport>,
    pub n_paths: usize,
    pub horizon: f64,
}

impl MmppReport {
    pub fn any_breach(&self) -> bool {
        self.flows.iter().any(|f| f.breached)
    }
}

#[allow(clippy::too_many_arguments)]
pub fn mmpp_experiment(
    spec: &MmppSpec,
    envelopes: &[Option<Envelope>],
    horizon: f64,
    probes: &[f64],
    n_paths: usize,
    exec: &Executor,
    seed: u64,
    phase: u64,
) -> Result<MmppReport> {
    spec.validate()?;
    let n_flows = spec.rules.len();
    if envelopes.len() != n_flows {
        return Err(Error::domain(format!(
            "{} envelopes for {n_flows} flows",
            envelopes.len()
        )));
    }
    let batch = exec.run(n_paths, seed, phase, |_, rng| {
        simulate_mmpp_probed(spec, horizon, probes, rng)
    });

    let mut count_acc: Vec<Running> = (0..n_flows).map(|_| Running::default()).collect();
    let mut wait_acc: Vec<Running> = (0..n_flows).map(|_| Running::default()).collect();
    let mut missing = vec![0u64; n_flows];
    for item in batch.items {
        let stats = item?;
        for k in 0..n_flows {
            count_acc[k].push(stats.counts[k] as f64);
            for w in &stats.waits[k] {
                match w {
                    Some(w) => wait_acc[k].push(*w),
                    None => missing[k] += 1,
                }
            }
        }
    }

    let mut flows = Vec::with_capacity(n_flows);
    for k in 0..n_flows {
        let bound = match &envelopes[k] {
            Some(env) => Some(
                generalized_bound(env)?
                    .expect_report("flow waiting bound")?
                    .generalized_bound,
            ),
            None => None,
        };
        let mean_count = count_acc[k].mean();
        let mean_wait = wait_acc[k].mean();
        let hw = wait_acc[k].half_width_3s();
        flows.push(FlowReport {
            flow: k,
            mean_event_count: mean_count,
            mean_inter_event: if mean_count > 0.0 {
                horizon / mean_count
            } else {
                f64::INFINITY
            },
            mean_waiting: mean_wait,
            waiting_half_width: hw,
            bound,
            breached: bound.is_some_and(|b| mean_wait - hw > b),
            missing_waits: missing[k],
        });
    }
    Ok(MmppReport {
        flows,
        n_paths,
        horizon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gendist::HazardSpec;
    use crate::stream::substream;

    fn constant_rules(a: f64, b: f64) -> ReliabilityRules {
        ReliabilityRules {
            failure: [RateRule::Constant { rate: a }, RateRule::Constant { rate: a }],
            repair: [RateRule::Constant { rate: b }, RateRule::Constant { rate: b }],
        }
    }

    #[test]
    fn constant_rate_availability_matches_two_state_chain() {
        // rates 1/1: stationary availability 1/2
        let rules = constant_rules(1.0, 1.0);
        let mut acc = 0.0;
        let runs = 8;
        for i in 0..runs {
            let mut rng = substream(31, 40, i);
            let traj = simulate_reliability(
                &rules,
                ReliabilityState::fresh_operational(),
                5_000.0,
                &mut rng,
            )
            .unwrap();
            acc += traj.availability(0) + traj.availability(1);
        }
        let avail = acc / (2 * runs) as f64;
        assert!((avail - 0.5).abs() < 0.01, "availability {avail}");
    }

    #[test]
    fn fast_repair_keeps_availability_high() {
        let rules = constant_rules(0.01, 100.0);
        let mut rng = substream(32, 41, 0);
        let traj = simulate_reliability(
            &rules,
            ReliabilityState::fresh_operational(),
            10_000.0,
            &mut rng,
        )
        .unwrap();
        assert!(traj.availability(0) >= 0.999);
        assert!(traj.availability(1) >= 0.999);
    }

    #[test]
    fn availability_complementarity_is_exact() {
        let rules = constant_rules(1.0, 2.0);
        let mut rng = substream(33, 42, 0);
        let traj = simulate_reliability(
            &rules,
            ReliabilityState::fresh_operational(),
            500.0,
            &mut rng,
        )
        .unwrap();
        // events strictly increase and alternate modes per element
        let mut last = 0.0;
        let mut modes = [Mode::Operational; 2];
        for ev in &traj.events {
            assert!(ev.time > last);
            last = ev.time;
            assert_eq!(ev.to, modes[ev.element].flipped());
            modes[ev.element] = ev.to;
        }
        for k in 0..2 {
            let op = traj.availability(k);
            assert!((0.0..=1.0).contains(&op));
        }
    }

    #[test]
    fn audit_accepts_rates_inside_envelope() {
        let rules = constant_rules(1.0, 1.0);
        let env = Envelope::new(
            HazardSpec::exponential(0.5).unwrap(),
            HazardSpec::exponential(2.0).unwrap(),
            0.0,
            2,
        )
        .unwrap();
        let mut rng = substream(34, 43, 0);
        let traj =
            simulate_reliability(&rules, ReliabilityState::fresh_operational(), 50.0, &mut rng)
                .unwrap();
        let v = envelope_audit(&traj, &rules, &env, 0.1).unwrap();
        assert!(v.is_empty());
    }

    #[test]
    fn audit_reports_injected_spike() {
        // rate 10 against an upper intensity of 2
        let rules = ReliabilityRules {
            failure: [
                RateRule::Constant { rate: 10.0 },
                RateRule::Constant { rate: 1.0 },
            ],
            repair: [
                RateRule::Constant { rate: 1.0 },
                RateRule::Constant { rate: 1.0 },
            ],
        };
        let env = Envelope::new(
            HazardSpec::exponential(0.5).unwrap(),
            HazardSpec::exponential(2.0).unwrap(),
            0.0,
            2,
        )
        .unwrap();
        let mut rng = substream(35, 44, 0);
        let traj =
            simulate_reliability(&rules, ReliabilityState::fresh_operational(), 20.0, &mut rng)
                .unwrap();
        let v = envelope_audit(&traj, &rules, &env, 0.1).unwrap();
        assert!(!v.is_empty());
        assert!(v.iter().any(|x| x.rate == 10.0 && x.element == 0));
    }

    #[test]
    fn decaying_rates_stay_inside_their_envelope() {
        // failure/repair c/(1+x) with c = 3 against [3/(1+s), constant 3]
        let rules = ReliabilityRules {
            failure: [RateRule::ParetoOwn { c: 3.0 }, RateRule::ParetoOwn { c: 3.0 }],
            repair: [RateRule::ParetoOwn { c: 3.0 }, RateRule::ParetoOwn { c: 3.0 }],
        };
        let env = Envelope::new(
            HazardSpec::pareto(3.0).unwrap(),
            HazardSpec::exponential(3.0).unwrap(),
            0.0,
            2,
        )
        .unwrap();
        let mut rng = substream(36, 45, 0);
        let traj =
            simulate_reliability(&rules, ReliabilityState::fresh_repair(), 100.0, &mut rng)
                .unwrap();
        assert!(traj.events.len() > 50);
        let v = envelope_audit(&traj, &rules, &env, 0.05).unwrap();
        assert!(v.is_empty(), "violations: {:?}", &v[..v.len().min(3)]);
    }

    #[test]
    fn single_constant_flow_is_poisson() {
        let spec = MmppSpec {
            rules: vec![RateRule::Constant { rate: 2.0 }],
        };
        let mut total = 0u64;
        let runs = 20;
        for i in 0..runs {
            let mut rng = substream(37, 46, i);
            let stats = simulate_mmpp_probed(&spec, 1000.0, &[], &mut rng).unwrap();
            total += stats.counts[0];
        }
        let mean = total as f64 / runs as f64;
        assert!((mean - 2000.0).abs() < 20.0, "mean count {mean}");
    }

    #[test]
    fn modulated_flow_symmetry() {
        let spec = MmppSpec {
            rules: vec![
                RateRule::IndicatorOther {
                    base: 1.0,
                    boost: 0.5,
                    other: 1,
                    threshold: 1.0,
                },
                RateRule::Constant { rate: 1.0 },
            ],
        };
        let swapped = MmppSpec {
            rules: vec![
                RateRule::Constant { rate: 1.0 },
                RateRule::IndicatorOther {
                    base: 1.0,
                    boost: 0.5,
                    other: 0,
                    threshold: 1.0,
                },
            ],
        };
        let mut c1 = [0u64; 2];
        let mut c2 = [0u64; 2];
        for i in 0..10 {
            let mut rng = substream(38, 47, i);
            let s = simulate_mmpp_probed(&spec, 2000.0, &[], &mut rng).unwrap();
            c1[0] += s.counts[0];
            c1[1] += s.counts[1];
            let mut rng = substream(38, 47, i);
            let s = simulate_mmpp_probed(&swapped, 2000.0, &[], &mut rng).unwrap();
            c2[0] += s.counts[0];
            c2[1] += s.counts[1];
        }
        // modulated flow of each spec should behave like its mirror
        let rel = |a: u64, b: u64| (a as f64 - b as f64).abs() / a as f64;
        assert!(rel(c1[0], c2[1]) < 0.05, "{c1:?} vs {c2:?}");
        assert!(rel(c1[1], c2[0]) < 0.05, "{c1:?} vs {c2:?}");
    }

    #[test]
    fn custom_rule_majorant_violation_is_reported() {
        let spec = MmppSpec {
            rules: vec![RateRule::Custom {
                f: Arc::new(|_, z: &[f64]| 1.0 + z[0]),
                majorant: 1.0,
            }],
        };
        let mut rng = substream(39, 48, 0);
        let r = simulate_mmpp_probed(&spec, 100.0, &[], &mut rng);
        assert!(matches!(r, Err(Error::MajorantTooSmall { .. })));
    }
}
