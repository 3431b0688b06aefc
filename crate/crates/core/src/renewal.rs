//! Renewal and quasi-renewal process simulation plus renewal-function
//! numerics.
//!
//! A policy emits the hazard of each successive period. The iid policy reuses
//! one law; the minimum-composition policy builds period `i` as the
//! composition of a fixed base hazard with a modulator-supplied extra hazard,
//! which keeps every period sandwiched between the envelope laws; custom
//! rules are audited against their envelope on a sampled grid instead.

use crate::error::{Error, Result};
use crate::gendist::{DistributionView, HazardSpec, Moment};
use crate::hist::{BinSpec, Histogram};
use crate::quad;
use crate::stream::{Executor, Stream};
use serde::Serialize;
use std::borrow::Cow;
use std::sync::Arc;

// ---------------------------------------------------------------------------
// Envelope
// ---------------------------------------------------------------------------

/// Uniform intensity envelope `(lower, upper)` for quasi-renewal periods.
///
/// `lower` generates the heavy law (slow renewals), `upper` the light law.
/// Constraints checked at construction:
/// * both intensities are atom-free,
/// * `lower <= upper` pointwise on a dense grid,
/// * the lower intensity integrates to infinity (certified analytically;
///   tabulated hazards certify through their constant extrapolation),
/// * the heavy law has a finite moment of order `moment_order`,
/// * the lower intensity is positive on the check grid beyond `delay`.
#[derive(Debug, Clone)]
pub struct Envelope {
    lower: HazardSpec,
    upper: HazardSpec,
    delay: f64,
    moment_order: u32,
    heavy: DistributionView,
    light: DistributionView,
}

/// Check grid over `[0, horizon]` including the specs' own breakpoints.
fn dense_grid(specs: &[&HazardSpec], points: usize) -> Vec<f64> {
    let mut horizon: f64 = 1.0;
    for spec in specs {
        let end = spec.support_end();
        if end.is_finite() {
            horizon = horizon.max(end);
        } else {
            // reach well into the tail of each law
            let mut x: f64 = 1.0;
            while spec.cumulative_hazard_left(x) < 20.0 && x < 1e5 {
                x *= 2.0;
            }
            horizon = horizon.max(x);
        }
        for b in spec.breakpoints() {
            horizon = horizon.max(b.min(1e5));
        }
    }
    let mut grid: Vec<f64> = (0..=points)
        .map(|i| horizon * i as f64 / points as f64)
        .collect();
    for spec in specs {
        grid.extend(spec.breakpoints().iter().filter(|b| b.is_finite()));
    }
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();
    grid
}

impl Envelope {
    pub fn new(lower: HazardSpec, upper: HazardSpec, delay: f64, moment_order: u32) -> Result<Self> {
        if moment_order < 2 {
            return Err(Error::domain("envelope moment order must be >= 2"));
        }
        if !(delay.is_finite() && delay >= 0.0) {
            return Err(Error::domain(format!("delay horizon {delay} must be >= 0")));
        }
        if lower.has_atoms() || upper.has_atoms() {
            return Err(Error::invalid_spec(
                "envelope intensities must be atom-free".to_string(),
            ));
        }
        if !lower.is_proper() || !lower.divergence_certified() {
            return Err(Error::invalid_spec(
                "lower intensity must have divergent integral".to_string(),
            ));
        }
        const SLACK: f64 = 1e-9;
        let grid = dense_grid(&[&lower, &upper], 512);
        for &s in &grid {
            let lo = lower.continuous_rate(s);
            let hi = upper.continuous_rate(s);
            if lo > hi + SLACK && hi.is_finite() {
                return Err(Error::invalid_spec(format!(
                    "lower intensity {lo} exceeds upper intensity {hi} at s = {s}"
                )));
            }
            if s > delay && lo <= 0.0 {
                return Err(Error::invalid_spec(format!(
                    "lower intensity vanishes at s = {s} beyond the delay horizon {delay}"
                )));
            }
        }
        let heavy = DistributionView::new(lower.clone())?;
        let light = DistributionView::new(upper.clone())?;
        if heavy.moment(moment_order)?.is_divergent() {
            return Err(Error::invalid_spec(format!(
                "heavy law has divergent moment of order {moment_order}"
            )));
        }
        Ok(Envelope {
            lower,
            upper,
            delay,
            moment_order,
            heavy,
            light,
        })
    }

    pub fn lower(&self) -> &HazardSpec {
        &self.lower
    }

    pub fn upper(&self) -> &HazardSpec {
        &self.upper
    }

    pub fn delay(&self) -> f64 {
        self.delay
    }

    pub fn moment_order(&self) -> u32 {
        self.moment_order
    }

    /// Law generated by the lower intensity (stochastically largest periods).
    pub fn heavy_law(&self) -> &DistributionView {
        &self.heavy
    }

    /// Law generated by the upper intensity (stochastically smallest periods).
    pub fn light_law(&self) -> &DistributionView {
        &self.light
    }

    /// Slack hazard budget `upper - lower` available to modulators at `s`.
    pub fn slack_at(&self, s: f64) -> f64 {
        self.upper.continuous_rate(s) - self.lower.continuous_rate(s)
    }
}

// ---------------------------------------------------------------------------
// Policies
// ---------------------------------------------------------------------------

/// Deterministic rule producing a period's extra (or full) hazard from the
/// period index and the realized inter-event history.
pub trait PeriodRule: Send + Sync {
    fn hazard(&self, period: usize, history: &[f64]) -> HazardSpec;
}

impl<F> PeriodRule for F
where
    F: Fn(usize, &[f64]) -> HazardSpec + Send + Sync,
{
    fn hazard(&self, period: usize, history: &[f64]) -> HazardSpec {
        self(period, history)
    }
}

/// Modulator for minimum-composition policies: the extra hazard added on top
/// of the base in period `i`.
#[derive(Clone)]
pub enum Modulator {
    /// No extra hazard: the policy degenerates to iid periods of the base law.
    None,
    /// Alternate between two extra hazards by period parity.
    Alternating(HazardSpec, HazardSpec),
    /// Cycle through a fixed list of extra hazards.
    Cycle(Vec<HazardSpec>),
    /// Arbitrary history-dependent rule (audited, not statically checked).
    Rule(Arc<dyn PeriodRule>),
}

impl std::fmt::Debug for Modulator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Modulator::None => write!(f, "Modulator::None"),
            Modulator::Alternating(..) => write!(f, "Modulator::Alternating"),
            Modulator::Cycle(v) => write!(f, "Modulator::Cycle({})", v.len()),
            Modulator::Rule(_) => write!(f, "Modulator::Rule"),
        }
    }
}

impl Modulator {
    fn hazard(&self, period: usize, history: &[f64]) -> HazardSpec {
        match self {
            Modulator::None => HazardSpec::zero(),
            Modulator::Alternating(even, odd) => {
                if period % 2 == 0 {
                    even.clone()
                } else {
                    odd.clone()
                }
            }
            Modulator::Cycle(list) => list[period % list.len()].clone(),
            Modulator::Rule(rule) => rule.hazard(period, history),
        }
    }

    fn static_specs(&self) -> Option<Vec<&HazardSpec>> {
        match self {
            Modulator::None => Some(vec![]),
            Modulator::Alternating(a, b) => Some(vec![a, b]),
            Modulator::Cycle(list) => Some(list.iter().collect()),
            Modulator::Rule(_) => None,
        }
    }
}

/// Rule emitting the hazard of each renewal period.
#[derive(Clone)]
pub enum RenewalPolicy {
    /// Independent identically distributed periods.
    Iid(DistributionView),
    /// Period `i` is `min(base period, modulator period)`: hazards add.
    MinComposition {
        base: HazardSpec,
        modulator: Modulator,
        envelope: Envelope,
    },
    /// The rule emits the full period hazard; sandwiched only by audit.
    Custom {
        rule: Arc<dyn PeriodRule>,
        envelope: Envelope,
    },
}

impl std::fmt::Debug for RenewalPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RenewalPolicy::Iid(v) => write!(f, "RenewalPolicy::Iid({:?})", v.spec()),
            RenewalPolicy::MinComposition { base, modulator, .. } => {
                write!(f, "RenewalPolicy::MinComposition({base:?}, {modulator:?})")
            }
            RenewalPolicy::Custom { .. } => write!(f, "RenewalPolicy::Custom"),
        }
    }
}

fn reject_zero_atom(spec: &HazardSpec) -> Result<()> {
    if spec.atoms().first().is_some_and(|a| a.location == 0.0) {
        return Err(Error::invalid_spec(
            "atom at time zero would create zero-length periods".to_string(),
        ));
    }
    Ok(())
}

impl RenewalPolicy {
    pub fn iid(view: DistributionView) -> Result<Self> {
        reject_zero_atom(view.spec())?;
        Ok(RenewalPolicy::Iid(view))
    }

    /// Build a minimum-composition policy; statically-known modulators are
    /// checked against the envelope's slack budget on a dense grid.
    pub fn min_composition(
        base: HazardSpec,
        modulator: Modulator,
        envelope: Envelope,
    ) -> Result<Self> {
        reject_zero_atom(&base)?;
        if let Some(specs) = modulator.static_specs() {
            const SLACK: f64 = 1e-9;
            for extra in specs {
                let grid = dense_grid(&[&base, extra, envelope.upper()], 256);
                for &s in &grid {
                    let mu = extra.continuous_rate(s);
                    let budget = envelope.slack_at(s);
                    if mu > budget + SLACK && budget.is_finite() {
                        return Err(Error::invalid_spec(format!(
                            "modulator hazard {mu} exceeds envelope slack {budget} at s = {s}"
                        )));
                    }
                }
            }
        }
        Ok(RenewalPolicy::MinComposition {
            base,
            modulator,
            envelope,
        })
    }

    pub fn custom(rule: Arc<dyn PeriodRule>, envelope: Envelope) -> Self {
        RenewalPolicy::Custom { rule, envelope }
    }

    pub fn envelope(&self) -> Option<&Envelope> {
        match self {
            RenewalPolicy::Iid(_) => None,
            RenewalPolicy::MinComposition { envelope, .. }
            | RenewalPolicy::Custom { envelope, .. } => Some(envelope),
        }
    }

    /// The law of period `period` given the realized history.
    pub fn period_view(&self, period: usize, history: &[f64]) -> Result<Cow<'_, DistributionView>> {
        match self {
            RenewalPolicy::Iid(view) => Ok(Cow::Borrowed(view)),
            RenewalPolicy::MinComposition {
                base, modulator, ..
            } => {
                let extra = modulator.hazard(period, history);
                reject_zero_atom(&extra)?;
                let spec = base.min_compose(&extra);
                Ok(Cow::Owned(DistributionView::new(spec)?))
            }
            RenewalPolicy::Custom { rule, .. } => {
                let spec = rule.hazard(period, history);
                reject_zero_atom(&spec)?;
                Ok(Cow::Owned(DistributionView::new(spec)?))
            }
        }
    }

    /// Sampled envelope audit of the realized period hazards along a given
    /// history: every reported triple violates `lower <= rate <= upper`.
    pub fn audit_periods(
        &self,
        periods: usize,
        history: &[f64],
        grid: &[f64],
    ) -> Result<Vec<PolicyAuditViolation>> {
        let Some(envelope) = self.envelope() else {
            return Ok(vec![]);
        };
        const SLACK: f64 = 1e-9;
        let mut out = Vec::new();
        for period in 0..periods {
            let hist = &history[..period.min(history.len())];
            let view = self.period_view(period, hist)?;
            for &s in grid {
                let rate = view.spec().continuous_rate(s);
                let lo = envelope.lower().continuous_rate(s);
                let hi = envelope.upper().continuous_rate(s);
                if rate + SLACK < lo || (rate > hi + SLACK && hi.is_finite()) {
                    out.push(PolicyAuditViolation {
                        period,
                        s,
                        rate,
                        lower: lo,
                        upper: hi,
                    });
                }
            }
        }
        Ok(out)
    }
}

/// One sampled envelope violation of a policy's realized hazard.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PolicyAuditViolation {
    pub period: usize,
    pub s: f64,
    pub rate: f64,
    pub lower: f64,
    pub upper: f64,
}

// ---------------------------------------------------------------------------
// Paths
// ---------------------------------------------------------------------------

/// One realized trajectory: event times plus the period lengths behind them.
///
/// Exactly one event strictly beyond the horizon is retained so that forward
/// recurrence queries are total on `[0, horizon]`. When the path starts at a
/// positive initial age, the first period began `initial_age` before time 0
/// and `event_times[i] + initial_age = sum of inter_times[0..=i]`.
#[derive(Debug, Clone, Serialize)]
pub struct PathRecord {
    initial_age: f64,
    event_times: Vec<f64>,
    inter_times: Vec<f64>,
    horizon: f64,
}

impl PathRecord {
    pub fn event_times(&self) -> &[f64] {
        &self.event_times
    }

    pub fn inter_times(&self) -> &[f64] {
        &self.inter_times
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn initial_age(&self) -> f64 {
        self.initial_age
    }

    /// Number of events in `[0, t]`.
    pub fn count_up_to(&self, t: f64) -> usize {
        self.event_times.partition_point(|&e| e <= t)
    }

    fn check_probe(&self, t: f64) -> Result<()> {
        if t < 0.0 || t > self.horizon || t.is_nan() {
            return Err(Error::domain(format!(
                "probe time {t} outside [0, {}]",
                self.horizon
            )));
        }
        Ok(())
    }

    /// Backward recurrence time: elapsed time since the last event at or
    /// before `t` (zero exactly at events), counting the initial age.
    pub fn overshoot_at(&self, t: f64) -> Result<f64> {
        self.check_probe(t)?;
        match self.count_up_to(t) {
            0 => Ok(t + self.initial_age),
            k => Ok(t - self.event_times[k - 1]),
        }
    }

    /// Forward recurrence time: remaining time to the first event after `t`.
    pub fn undershoot_at(&self, t: f64) -> Result<f64> {
        self.check_probe(t)?;
        let k = self.count_up_to(t);
        match self.event_times.get(k) {
            Some(&e) => Ok(e - t),
            None => Err(Error::HorizonExhausted { t }),
        }
    }

    /// Length of the renewal period containing `t` (the one ending strictly
    /// after `t`); equals overshoot plus undershoot at `t` exactly.
    pub fn containing_inter_time(&self, t: f64) -> Result<f64> {
        self.check_probe(t)?;
        let k = self.count_up_to(t);
        self.inter_times
            .get(k)
            .copied()
            .ok_or(Error::HorizonExhausted { t })
    }
}

/// Simulate a path from a fresh start (age zero at time zero).
pub fn simulate_path(policy: &RenewalPolicy, horizon: f64, rng: &mut Stream) -> Result<PathRecord> {
    simulate_path_from_age(policy, 0.0, horizon, rng)
}

/// Simulate a path whose first period began `age` before time zero.
pub fn simulate_path_from_age(
    policy: &RenewalPolicy,
    age: f64,
    horizon: f64,
    rng: &mut Stream,
) -> Result<PathRecord> {
    if !(horizon > 0.0) {
        return Err(Error::domain(format!("horizon {horizon} must be positive")));
    }
    if !(age >= 0.0) {
        return Err(Error::domain(format!("initial age {age} must be >= 0")));
    }
    let mut event_times = Vec::new();
    let mut inter_times: Vec<f64> = Vec::new();
    let mut t = 0.0;
    let mut period = 0usize;
    loop {
        let view = policy.period_view(period, &inter_times)?;
        let (xi, event) = if period == 0 && age > 0.0 {
            let residual = view.conditioned(age)?.sample(rng)?;
            (age + residual, residual)
        } else {
            let xi = view.sample(rng)?;
            (xi, t + xi)
        };
        event_times.push(event);
        inter_times.push(xi);
        t = event;
        period += 1;
        if event > horizon {
            break;
        }
    }
    Ok(PathRecord {
        initial_age: age,
        event_times,
        inter_times,
        horizon,
    })
}

// ---------------------------------------------------------------------------
// Renewal function numerics
// ---------------------------------------------------------------------------

/// Discretized renewal function `H` on a uniform grid.
#[derive(Debug, Clone, Serialize)]
pub struct RenewalGrid {
    pub step: f64,
    pub values: Vec<f64>,
    /// Atoms snapped to grid nodes: `(location, snap distance)`.
    pub snaps: Vec<(f64, f64)>,
}

impl RenewalGrid {
    pub fn s_max(&self) -> f64 {
        self.step * (self.values.len() - 1) as f64
    }

    /// Linear interpolation of `H(s)`, clamped to the grid.
    pub fn at(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return self.values[0];
        }
        let x = s / self.step;
        let i = (x.floor() as usize).min(self.values.len() - 2);
        let frac = (x - i as f64).min(1.0);
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }
}

/// Measure increments of a mixed CDF on a uniform grid: the continuous part
/// assigned per interval, atoms snapped to their nearest node.
struct GridMeasure {
    /// `cont[j-1]`: continuous mass on `(s_{j-1}, s_j]`.
    cont: Vec<f64>,
    /// `(node index >= 1, mass)` per snapped atom.
    atoms: Vec<(usize, f64)>,
    snaps: Vec<(f64, f64)>,
    last_support_index: usize,
}

fn grid_measure(view: &DistributionView, step: f64, m: usize) -> GridMeasure {
    let mut cdf = Vec::with_capacity(m + 1);
    for j in 0..=m {
        cdf.push(view.cdf(j as f64 * step));
    }
    let mut cont: Vec<f64> = (1..=m).map(|j| cdf[j] - cdf[j - 1]).collect();
    let mut atoms = Vec::new();
    let mut snaps = Vec::new();
    let s_max = step * m as f64;
    for a in view.spec().atoms() {
        if a.location > s_max || a.location <= 0.0 {
            continue;
        }
        let mass = view.survival_left(a.location) * a.q;
        let node = ((a.location / step).round() as usize).clamp(1, m);
        let interval = ((a.location / step).ceil() as usize).clamp(1, m);
        cont[interval - 1] = (cont[interval - 1] - mass).max(0.0);
        atoms.push((node, mass));
        snaps.push((a.location, (a.location - node as f64 * step).abs()));
    }
    let support = view.spec().support_end();
    let last_support_index = if support.is_finite() {
        (((support / step).ceil() as usize) + 1).min(m)
    } else {
        m
    };
    GridMeasure {
        cont,
        atoms,
        snaps,
        last_support_index,
    }
}

/// Solve the renewal equation `H = F + F * H` on a uniform grid by trapezoid
/// convolution with atom-exact point terms.
pub fn renewal_function(view: &DistributionView, s_max: f64, step: f64) -> Result<RenewalGrid> {
    if !(step > 0.0) || s_max < step {
        return Err(Error::domain(format!(
            "need 0 < step <= s_max, got step {step}, s_max {s_max}"
        )));
    }
    let mean = view.moment(1)?.expect_finite("mean inter-event time")?;
    if mean <= step {
        return Err(Error::GridTooCoarse { step, mean });
    }
    let m = (s_max / step).ceil() as usize;
    let measure = grid_measure(view, step, m);

    let mut h = vec![0.0f64; m + 1];
    h[0] = view.cdf(0.0);
    for i in 1..=m {
        let mut rhs = view.cdf(i as f64 * step);
        let j_hi = i.min(measure.last_support_index);
        // continuous increments, trapezoid in H; the j = 1 term carries H_i
        for j in 1..=j_hi {
            let w = measure.cont[j - 1];
            if w == 0.0 {
                continue;
            }
            if j == 1 {
                rhs += 0.5 * w * h[i - 1];
            } else {
                rhs += 0.5 * w * (h[i - j] + h[i - j + 1]);
            }
        }
        for &(k, mass) in &measure.atoms {
            if k <= i {
                rhs += mass * h[i - k];
            }
        }
        h[i] = (rhs / (1.0 - 0.5 * measure.cont[0])).max(h[i - 1]);
    }
    Ok(RenewalGrid {
        step,
        values: h,
        snaps: measure.snaps,
    })
}

/// CDFs of the `k`-fold sums, `k = 1..=n`, on a uniform grid, computed by the
/// same trapezoid-plus-atoms convolution kernel as the renewal function.
pub fn convolve_cdf_n(
    view: &DistributionView,
    n: usize,
    s_max: f64,
    step: f64,
) -> Result<Vec<Vec<f64>>> {
    if n == 0 || !(step > 0.0) || s_max < step {
        return Err(Error::domain("need n >= 1 and 0 < step <= s_max".to_string()));
    }
    let m = (s_max / step).ceil() as usize;
    let measure = grid_measure(view, step, m);
    let first: Vec<f64> = (0..=m).map(|j| view.cdf(j as f64 * step)).collect();
    let mut all = vec![first];
    for _ in 1..n {
        let prev = all.last().unwrap();
        let mut next = vec![0.0f64; m + 1];
        for i in 1..=m {
            let mut acc = 0.0;
            let j_hi = i.min(measure.last_support_index);
            for j in 1..=j_hi {
                let w = measure.cont[j - 1];
                if w != 0.0 {
                    acc += 0.5 * w * (prev[i - j] + prev[i - j + 1]);
                }
            }
            for &(k, mass) in &measure.atoms {
                if k <= i {
                    acc += mass * prev[i - k];
                }
            }
            next[i] = acc.min(1.0);
        }
        all.push(next);
    }
    Ok(all)
}

/// CDF of the stationary overshoot law, `mean^{-1} * integral_0^s S(u) du`.
/// Divergent marker when the mean is infinite.
pub fn stationary_overshoot_cdf(view: &DistributionView, s: f64) -> Result<Moment> {
    if s < 0.0 || s.is_nan() {
        return Err(Error::domain(format!("negative time {s}")));
    }
    let mean = match view.moment(1)? {
        Moment::Divergent => return Ok(Moment::Divergent),
        Moment::Finite { value, .. } => value,
    };
    let hi = s.min(view.spec().support_end());
    let r = quad::integrate(
        |u| view.survival(u),
        0.0,
        hi,
        view.tol(),
        &view.spec().breakpoints(),
    );
    Ok(Moment::Finite {
        value: (r.value / mean).clamp(0.0, 1.0),
        achieved_tol: r.error_estimate / mean,
        horizon: s,
    })
}

// ---------------------------------------------------------------------------
// Key renewal limit check
// ---------------------------------------------------------------------------

/// Nonnegative integrable function tabulated on a grid; linear interpolation
/// inside `[first, last]` and zero outside.
#[derive(Debug, Clone)]
pub struct GridFunction {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl GridFunction {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(Error::domain(
                "grid function needs matching xs/ys with at least two points".to_string(),
            ));
        }
        for w in xs.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::domain("grid abscissae must increase".to_string()));
            }
        }
        if ys.iter().any(|y| !y.is_finite() || *y < 0.0) {
            return Err(Error::domain(
                "grid ordinates must be finite and nonnegative".to_string(),
            ));
        }
        Ok(GridFunction { xs, ys })
    }

    /// Indicator of `[lo, hi]`.
    pub fn indicator(lo: f64, hi: f64) -> Result<Self> {
        GridFunction::new(vec![lo, hi], vec![1.0, 1.0])
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (first, last) = (self.xs[0], *self.xs.last().unwrap());
        if x < first || x > last {
            return 0.0;
        }
        let i = self.xs.partition_point(|&k| k <= x).max(1) - 1;
        if i + 1 >= self.xs.len() {
            return *self.ys.last().unwrap();
        }
        let t = (x - self.xs[i]) / (self.xs[i + 1] - self.xs[i]);
        self.ys[i] + t * (self.ys[i + 1] - self.ys[i])
    }

    /// Trapezoid integral over the support.
    pub fn integral(&self) -> f64 {
        self.xs
            .windows(2)
            .zip(self.ys.windows(2))
            .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
            .sum()
    }
}

/// Two sides of the key renewal limit at `t_max`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SmithCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
}

/// Compare `integral R(t_max - s) dH(s)` against `mean^{-1} integral R`.
pub fn smith_limit_check(
    r: &GridFunction,
    view: &DistributionView,
    t_max: f64,
    step: f64,
) -> Result<SmithCheck> {
    let mean = view.moment(1)?.expect_finite("mean inter-event time")?;
    let grid = renewal_function(view, t_max, step)?;
    let mut lhs = 0.0;
    for i in 1..grid.values.len() {
        let dh = grid.values[i] - grid.values[i - 1];
        if dh != 0.0 {
            let s0 = (i - 1) as f64 * step;
            let s1 = i as f64 * step;
            lhs += 0.5 * (r.eval(t_max - s0) + r.eval(t_max - s1)) * dh;
        }
    }
    let rhs = r.integral() / mean;
    Ok(SmithCheck {
        lhs,
        rhs,
        gap: (lhs - rhs).abs(),
    })
}

// ---------------------------------------------------------------------------
// Monte Carlo overshoot law
// ---------------------------------------------------------------------------

/// Histogram of the overshoot at probe time `t` over `n` independent paths.
pub fn empirical_overshoot_distribution(
    policy: &RenewalPolicy,
    t: f64,
    n: usize,
    spec: BinSpec,
    exec: &Executor,
    seed: u64,
    phase: u64,
) -> Result<Histogram> {
    empirical_overshoot_from_age(policy, 0.0, t, n, spec, exec, seed, phase)
}

/// Same as [`empirical_overshoot_distribution`] but from an initial age.
#[allow(clippy::too_many_arguments)]
pub fn empirical_overshoot_from_age(
    policy: &RenewalPolicy,
    age: f64,
    t: f64,
    n: usize,
    spec: BinSpec,
    exec: &Executor,
    seed: u64,
    phase: u64,
) -> Result<Histogram> {
    if n == 0 {
        return Err(Error::domain("need at least one path"));
    }
    let batch = exec.run(n, seed, phase, |_, rng| -> Result<f64> {
        if t == 0.0 {
            return Ok(age);
        }
        let path = simulate_path_from_age(policy, age, t, rng)?;
        path.overshoot_at(t)
    });
    let mut hist = Histogram::new(spec);
    for obs in batch.items {
        hist.observe(obs?);
    }
    Ok(hist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::substream;

    fn exp_policy(rate: f64) -> RenewalPolicy {
        RenewalPolicy::iid(DistributionView::new(HazardSpec::exponential(rate).unwrap()).unwrap())
            .unwrap()
    }

    #[test]
    fn path_invariants_hold() {
        let policy = exp_policy(1.0);
        let mut rng = substream(3, 10, 0);
        let path = simulate_path(&policy, 25.0, &mut rng).unwrap();
        let events = path.event_times();
        assert!(events.windows(2).all(|w| w[1] > w[0]));
        assert!(path.inter_times().iter().all(|&x| x > 0.0));
        // prefix sums reproduce event times
        let mut acc = 0.0;
        for (e, x) in events.iter().zip(path.inter_times()) {
            acc += x;
            assert!((acc - e).abs() < 1e-9);
        }
        // exactly one retained event beyond the horizon
        assert_eq!(events.iter().filter(|&&e| e > 25.0).count(), 1);
    }

    #[test]
    fn overshoot_undershoot_basics() {
        // deterministic-looking spacing via a narrow uniform family
        let path = PathRecord {
            initial_age: 0.0,
            event_times: vec![1.0, 2.0, 3.0],
            inter_times: vec![1.0, 1.0, 1.0],
            horizon: 2.6,
        };
        assert_eq!(path.overshoot_at(2.5).unwrap(), 0.5);
        assert_eq!(path.undershoot_at(2.5).unwrap(), 0.5);
        assert_eq!(path.overshoot_at(0.7).unwrap(), 0.7);
        assert_eq!(path.overshoot_at(2.0).unwrap(), 0.0);
        assert!(
            (path.overshoot_at(2.5).unwrap() + path.undershoot_at(2.5).unwrap()
                - path.containing_inter_time(2.5).unwrap())
            .abs()
                < 1e-12
        );
    }

    #[test]
    fn undershoot_errors_when_horizon_exhausted() {
        let path = PathRecord {
            initial_age: 0.0,
            event_times: vec![1.0],
            inter_times: vec![1.0],
            horizon: 3.0,
        };
        assert!(matches!(
            path.undershoot_at(2.0),
            Err(Error::HorizonExhausted { .. })
        ));
    }

    #[test]
    fn near_deterministic_spacing_counts_ten_events() {
        // uniform on [0.999, 1.001]; probing mid-gap makes the count exact
        let spec = HazardSpec::uniform(0.002).unwrap().delayed(0.999).unwrap();
        let policy = RenewalPolicy::iid(DistributionView::new(spec).unwrap()).unwrap();
        for k in 0..20 {
            let mut rng = substream(9, 11, k);
            let path = simulate_path(&policy, 10.5, &mut rng).unwrap();
            assert_eq!(path.count_up_to(10.5), 10);
        }
    }

    #[test]
    fn renewal_function_poisson_is_linear() {
        let v = DistributionView::new(HazardSpec::exponential(1.0).unwrap()).unwrap();
        let grid = renewal_function(&v, 10.0, 1e-2).unwrap();
        assert!((grid.at(10.0) - 10.0).abs() < 0.01);
        assert!(grid.values.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(grid.values[0], 0.0);
    }

    #[test]
    fn renewal_function_counts_near_deterministic_multiples() {
        // near-point-mass at 1: H(2.5) counts the multiples 1 and 2
        let spec = HazardSpec::uniform(0.002).unwrap().delayed(0.999).unwrap();
        let v = DistributionView::new(spec).unwrap();
        let grid = renewal_function(&v, 2.5, 1e-3).unwrap();
        assert!((grid.at(2.5) - 2.0).abs() < 0.02, "H(2.5) = {}", grid.at(2.5));
    }

    #[test]
    fn renewal_function_rejects_coarse_grid() {
        let v = DistributionView::new(HazardSpec::exponential(1.0).unwrap()).unwrap();
        assert!(matches!(
            renewal_function(&v, 10.0, 2.0),
            Err(Error::GridTooCoarse { .. })
        ));
    }

    #[test]
    fn stationary_overshoot_matches_closed_forms() {
        let exp = DistributionView::new(HazardSpec::exponential(1.5).unwrap()).unwrap();
        let got = stationary_overshoot_cdf(&exp, 2.0).unwrap().value().unwrap();
        assert!((got - (1.0 - (-3.0f64).exp())).abs() < 1e-6);

        // uniform [0,1]: 2s - s^2 by direct integration of (1-u)/mean
        let uni = DistributionView::new(HazardSpec::uniform(1.0).unwrap()).unwrap();
        let got = stationary_overshoot_cdf(&uni, 0.5).unwrap().value().unwrap();
        assert!((got - 0.75).abs() < 1e-6);

        // normalization at large s
        let got = stationary_overshoot_cdf(&exp, 100.0).unwrap().value().unwrap();
        assert!((got - 1.0).abs() < 1e-9);
    }

    #[test]
    fn stationary_overshoot_divergent_mean_is_marked() {
        let v = DistributionView::new(HazardSpec::pareto(0.5).unwrap()).unwrap();
        assert!(stationary_overshoot_cdf(&v, 1.0).unwrap().is_divergent());
    }

    #[test]
    fn smith_check_poisson_indicator() {
        let v = DistributionView::new(HazardSpec::exponential(1.0).unwrap()).unwrap();
        let r = GridFunction::indicator(0.0, 1.0).unwrap();
        let c = smith_limit_check(&r, &v, 50.0, 1e-2).unwrap();
        assert!((c.rhs - 1.0).abs() < 1e-9);
        assert!(c.gap <= 0.01, "gap {}", c.gap);
    }

    #[test]
    fn smith_check_zero_function() {
        let v = DistributionView::new(HazardSpec::exponential(1.0).unwrap()).unwrap();
        let r = GridFunction::new(vec![0.0, 1.0], vec![0.0, 0.0]).unwrap();
        let c = smith_limit_check(&r, &v, 10.0, 1e-2).unwrap();
        assert_eq!(c.lhs, 0.0);
        assert_eq!(c.rhs, 0.0);
    }

    #[test]
    fn min_composition_zero_modulator_matches_iid() {
        let phi = HazardSpec::exponential(1.0).unwrap();
        let q = HazardSpec::exponential(2.0).unwrap();
        let env = Envelope::new(phi.clone(), q, 0.0, 3).unwrap();
        let policy = RenewalPolicy::min_composition(phi, Modulator::None, env).unwrap();
        let view = policy.period_view(0, &[]).unwrap();
        let iid = DistributionView::new(HazardSpec::exponential(1.0).unwrap()).unwrap();
        for s in [0.1, 0.5, 1.0, 3.0] {
            assert!((view.cdf(s) - iid.cdf(s)).abs() < 1e-12);
        }
    }

    #[test]
    fn min_composition_rejects_oversized_modulator() {
        let phi = HazardSpec::exponential(1.0).unwrap();
        let q = HazardSpec::exponential(2.0).unwrap();
        let env = Envelope::new(phi.clone(), q, 0.0, 3).unwrap();
        let too_big = Modulator::Alternating(HazardSpec::zero(), HazardSpec::exponential(1.5).unwrap());
        assert!(RenewalPolicy::min_composition(phi, too_big, env).is_err());
    }

    #[test]
    fn envelope_validation_rejects_crossed_intensities() {
        let phi = HazardSpec::exponential(2.0).unwrap();
        let q = HazardSpec::exponential(1.0).unwrap();
        assert!(Envelope::new(phi, q, 0.0, 2).is_err());
    }

    #[test]
    fn envelope_supports_delayed_lower_intensity() {
        let phi = HazardSpec::exponential(1.0).unwrap().delayed(0.5).unwrap();
        let q = HazardSpec::exponential(2.0).unwrap();
        let env = Envelope::new(phi, q, 0.5, 2).unwrap();
        assert!((env.heavy_law().moment(1).unwrap().value().unwrap() - 1.5).abs() < 1e-6);
    }

    #[test]
    fn overshoot_at_zero_time_is_unit_mass_at_zero() {
        let policy = exp_policy(1.0);
        let exec = Executor::new(1);
        let spec = BinSpec::for_overshoot(0.0, &[0.0], 10).unwrap();
        let h =
            empirical_overshoot_distribution(&policy, 0.0, 1000, spec, &exec, 5, 12).unwrap();
        assert!((h.atom_masses()[0] - 1.0).abs() < 1e-12);
    }
}
