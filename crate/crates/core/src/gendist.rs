//! Mixed nonnegative distributions represented through their hazard.
//!
//! A law is specified by a continuous hazard (a sum of analytic family
//! terms and/or a tabulated grid) plus a finite list of atoms. An atom at
//! location `a` is parameterized by its conditional jump `q = P(X = a | X >= a)`
//! in `(0, 1)`; its contribution to the cumulative hazard is the weight
//! `-ln(1 - q)`, so that
//!
//! ```text
//! S(s) = exp(-Lambda(s)),   F(s) = 1 - S(s),
//! Lambda(s) = integral of the continuous hazard over [0, s]
//!           + sum of weights of atoms at locations <= s.
//! ```
//!
//! This reconstructs any mixed law exactly and keeps hazards additive under
//! minimum composition: `min(X, Y)` has the sum of the hazards of `X` and `Y`.

use crate::error::{Error, Result};
use crate::quad;
use crate::stream::exp1;
use rand::Rng;
use serde::Serialize;

/// Horizon cap for tail certification; beyond it moments are reported divergent.
pub const MOMENT_HORIZON_CAP: f64 = 1e6;

/// Default quadrature tolerance.
pub const DEFAULT_TOL: f64 = 1e-8;

/// Absolute time tolerance for bisection inverses.
const INVERSE_TOL: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Atoms
// ---------------------------------------------------------------------------

/// A point mass described by its conditional jump probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Atom {
    pub location: f64,
    pub q: f64,
}

impl Atom {
    pub fn new(location: f64, q: f64) -> Result<Self> {
        if !location.is_finite() || location < 0.0 {
            return Err(Error::invalid_spec(format!(
                "atom location must be a finite nonnegative time, got {location}"
            )));
        }
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::invalid_spec(format!(
                "atom conditional jump must lie in (0,1), got {q}"
            )));
        }
        Ok(Atom { location, q })
    }

    /// Hazard weight `-ln(1 - q)`; derived, never stored.
    pub fn weight(&self) -> f64 {
        -(1.0 - self.q).ln()
    }
}

// ---------------------------------------------------------------------------
// Continuous hazard terms
// ---------------------------------------------------------------------------

/// One additive term of the continuous hazard.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ContinuousHazard {
    /// Constant rate: the exponential law.
    Constant { rate: f64 },
    /// Weibull hazard `(shape/scale) * (s/scale)^(shape-1)`.
    Weibull { shape: f64, scale: f64 },
    /// Hazard `1/(width - s)` on `[0, width)`: the uniform law on `[0, width]`.
    Uniform { width: f64 },
    /// Hazard `shape/(1 + s)`: Pareto-type survival `(1 + s)^(-shape)`.
    Pareto { shape: f64 },
    /// Zero on `[0, delay)`, then the inner term shifted right.
    Delayed {
        delay: f64,
        inner: Box<ContinuousHazard>,
    },
    /// The inner term conditioned on survival to `age`: `h(s) = inner(age + s)`.
    Aged {
        age: f64,
        inner: Box<ContinuousHazard>,
    },
    /// Tabulated rates with linear interpolation between strictly increasing
    /// knots starting at 0 and constant extrapolation beyond the last knot.
    Grid { knots: Vec<f64>, rates: Vec<f64> },
}

impl ContinuousHazard {
    pub fn validate(&self) -> Result<()> {
        use ContinuousHazard::*;
        match self {
            Constant { rate } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    return Err(Error::invalid_spec(format!("constant rate {rate} <= 0")));
                }
            }
            Weibull { shape, scale } => {
                if !(shape.is_finite() && *shape > 0.0 && scale.is_finite() && *scale > 0.0) {
                    return Err(Error::invalid_spec(format!(
                        "weibull needs shape > 0 and scale > 0, got {shape}, {scale}"
                    )));
                }
            }
            Uniform { width } => {
                if !(width.is_finite() && *width > 0.0) {
                    return Err(Error::invalid_spec(format!("uniform width {width} <= 0")));
                }
            }
            Pareto { shape } => {
                if !(shape.is_finite() && *shape > 0.0) {
                    return Err(Error::invalid_spec(format!("pareto shape {shape} <= 0")));
                }
            }
            Delayed { delay, inner } => {
                if !(delay.is_finite() && *delay >= 0.0) {
                    return Err(Error::invalid_spec(format!("delay {delay} < 0")));
                }
                inner.validate()?;
            }
            Aged { age, inner } => {
                if !(age.is_finite() && *age >= 0.0) {
                    return Err(Error::invalid_spec(format!("age {age} < 0")));
                }
                inner.validate()?;
            }
            Grid { knots, rates } => {
                if knots.len() != rates.len() || knots.len() < 2 {
                    return Err(Error::invalid_spec(
                        "grid needs matching knots/rates with at least two entries".to_string(),
                    ));
                }
                if knots[0] != 0.0 {
                    return Err(Error::invalid_spec("grid must start at s = 0".to_string()));
                }
                for w in knots.windows(2) {
                    if !(w[1] > w[0]) {
                        return Err(Error::invalid_spec(
                            "grid knots must be strictly increasing".to_string(),
                        ));
                    }
                }
                if rates.iter().any(|r| !r.is_finite() || *r < 0.0) {
                    return Err(Error::invalid_spec(
                        "grid rates must be finite and nonnegative".to_string(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Hazard value at `s >= 0`. Infinite at and beyond a finite support end.
    pub fn rate(&self, s: f64) -> f64 {
        use ContinuousHazard::*;
        match self {
            Constant { rate } => *rate,
            Weibull { shape, scale } => {
                if *shape == 1.0 {
                    1.0 / scale
                } else if s <= 0.0 {
                    if *shape < 1.0 {
                        f64::INFINITY
                    } else {
                        0.0
                    }
                } else {
                    (shape / scale) * (s / scale).powf(shape - 1.0)
                }
            }
            Uniform { width } => {
                if s < *width {
                    1.0 / (width - s)
                } else {
                    f64::INFINITY
                }
            }
            Pareto { shape } => shape / (1.0 + s),
            Delayed { delay, inner } => {
                if s < *delay {
                    0.0
                } else {
                    inner.rate(s - delay)
                }
            }
            Aged { age, inner } => inner.rate(age + s),
            Grid { knots, rates } => {
                let m = knots.len();
                if s >= knots[m - 1] {
                    return rates[m - 1];
                }
                let i = knots.partition_point(|&k| k <= s).max(1) - 1;
                let t = (s - knots[i]) / (knots[i + 1] - knots[i]);
                rates[i] + t * (rates[i + 1] - rates[i])
            }
        }
    }

    /// Cumulative hazard over `[0, s]`, exact per family (trapezoid-exact on
    /// grids since the rate is piecewise linear).
    pub fn cum(&self, s: f64) -> f64 {
        use ContinuousHazard::*;
        if s <= 0.0 {
            return 0.0;
        }
        match self {
            Constant { rate } => rate * s,
            Weibull { shape, scale } => (s / scale).powf(*shape),
            Uniform { width } => {
                if s < *width {
                    -(1.0 - s / width).ln()
                } else {
                    f64::INFINITY
                }
            }
            Pareto { shape } => shape * s.ln_1p(),
            Delayed { delay, inner } => {
                if s <= *delay {
                    0.0
                } else {
                    inner.cum(s - delay)
                }
            }
            Aged { age, inner } => inner.cum(age + s) - inner.cum(*age),
            Grid { knots, rates } => {
                let m = knots.len();
                let mut acc = 0.0;
                for i in 1..m {
                    if s <= knots[i] {
                        let r = self.rate(s);
                        return acc + (s - knots[i - 1]) * 0.5 * (rates[i - 1] + r);
                    }
                    acc += (knots[i] - knots[i - 1]) * 0.5 * (rates[i - 1] + rates[i]);
                }
                acc + (s - knots[m - 1]) * rates[m - 1]
            }
        }
    }

    /// Total cumulative hazard over `[0, infinity)`.
    pub fn total(&self) -> f64 {
        use ContinuousHazard::*;
        match self {
            Constant { .. } | Weibull { .. } | Uniform { .. } | Pareto { .. } => f64::INFINITY,
            Delayed { inner, .. } => inner.total(),
            Aged { age, inner } => {
                let t = inner.total();
                if t.is_finite() {
                    t - inner.cum(*age)
                } else {
                    f64::INFINITY
                }
            }
            Grid { knots, rates } => {
                let m = knots.len();
                if rates[m - 1] > 0.0 {
                    f64::INFINITY
                } else {
                    self.cum(knots[m - 1])
                }
            }
        }
    }

    /// Smallest `s` at which the cumulative hazard becomes infinite.
    pub fn support_end(&self) -> f64 {
        use ContinuousHazard::*;
        match self {
            Uniform { width } => *width,
            Delayed { delay, inner } => delay + inner.support_end(),
            Aged { age, inner } => (inner.support_end() - age).max(0.0),
            _ => f64::INFINITY,
        }
    }

    /// Whether the divergence of the integral is analytically certain.
    /// Grids only certify when the terminal rate is positive.
    pub fn diverges_certified(&self) -> bool {
        use ContinuousHazard::*;
        match self {
            Constant { .. } | Weibull { .. } | Uniform { .. } | Pareto { .. } => true,
            Delayed { inner, .. } | Aged { inner, .. } => inner.diverges_certified(),
            Grid { rates, .. } => *rates.last().unwrap() > 0.0,
        }
    }

    /// Closed-form inverse of `cum` where available: smallest `s` with
    /// `cum(s) >= v`. Grids fall back to bisection.
    pub fn inverse_cum(&self, v: f64) -> f64 {
        use ContinuousHazard::*;
        if v <= 0.0 {
            return 0.0;
        }
        match self {
            Constant { rate } => v / rate,
            Weibull { shape, scale } => scale * v.powf(1.0 / shape),
            Uniform { width } => width * (-(-v).exp_m1()),
            Pareto { shape } => (v / shape).exp_m1(),
            Delayed { delay, inner } => delay + inner.inverse_cum(v),
            Aged { age, inner } => (inner.inverse_cum(v + inner.cum(*age)) - age).max(0.0),
            Grid { .. } => bisect_inverse(|s| self.cum(s), v, self.support_end()),
        }
    }

    /// The term conditioned on survival to `age`.
    pub fn aged(&self, extra: f64) -> ContinuousHazard {
        use ContinuousHazard::*;
        if extra <= 0.0 {
            return self.clone();
        }
        match self {
            Constant { rate } => Constant { rate: *rate },
            Uniform { width } => Uniform {
                width: width - extra,
            },
            Aged { age, inner } => Aged {
                age: age + extra,
                inner: inner.clone(),
            },
            Delayed { delay, inner } => {
                if extra < *delay {
                    Delayed {
                        delay: delay - extra,
                        inner: inner.clone(),
                    }
                } else {
                    inner.aged(extra - delay)
                }
            }
            other => Aged {
                age: extra,
                inner: Box::new(other.clone()),
            },
        }
    }

    /// Kink locations of the rate, for quadrature panels.
    fn push_breakpoints(&self, shift: f64, out: &mut Vec<f64>) {
        use ContinuousHazard::*;
        match self {
            Delayed { delay, inner } => {
                out.push(shift + delay);
                inner.push_breakpoints(shift + delay, out);
            }
            Aged { age, inner } => {
                let mut tmp = Vec::new();
                inner.push_breakpoints(0.0, &mut tmp);
                for b in tmp {
                    if b > *age {
                        out.push(shift + b - age);
                    }
                }
            }
            Grid { knots, .. } => out.extend(knots.iter().map(|k| shift + k)),
            Uniform { width } => out.push(shift + width),
            _ => {}
        }
    }

    /// Certified lower bound on the rate over `[x, infinity)`, used by tail
    /// certificates. Zero when no positive floor exists.
    fn rate_floor_from(&self, x: f64) -> f64 {
        use ContinuousHazard::*;
        match self {
            Constant { rate } => *rate,
            Weibull { shape, .. } => {
                if *shape >= 1.0 {
                    self.rate(x)
                } else {
                    0.0
                }
            }
            Uniform { .. } => 0.0, // finite support handled elsewhere
            Pareto { .. } => 0.0,
            Delayed { delay, inner } => {
                if x >= *delay {
                    inner.rate_floor_from(x - delay)
                } else {
                    0.0
                }
            }
            Aged { age, inner } => inner.rate_floor_from(age + x),
            Grid { knots, rates } => {
                let mut floor = self.rate(x);
                for (k, r) in knots.iter().zip(rates.iter()) {
                    if *k >= x {
                        floor = floor.min(*r);
                    }
                }
                floor.min(*rates.last().unwrap())
            }
        }
    }

    /// Rigorous upper bound on `l * integral_x^inf u^(l-1) S(u)/S(x) du` for
    /// this term's own survival `S`. Infinite when no certificate exists at `x`.
    fn ratio_tail_bound(&self, l: u32, x: f64) -> f64 {
        use ContinuousHazard::*;
        match self {
            Pareto { shape } => {
                let l_f = l as f64;
                if *shape > l_f {
                    l_f * (1.0 + x).powi(l as i32) / (shape - l_f)
                } else {
                    f64::INFINITY
                }
            }
            Weibull { shape, scale } if *shape < 1.0 => {
                // substitute w = (u/scale)^shape: the tail becomes an upper
                // incomplete gamma, bounded by z^(a-1) e^(-z) * z/(z-a+1).
                let a = l as f64 / shape;
                let z = (x / scale).powf(*shape);
                if z <= (a - 1.0).max(0.0) {
                    return f64::INFINITY;
                }
                let gamma_up_bound = if a <= 1.0 {
                    z.powf(a - 1.0) * (-z).exp()
                } else {
                    z.powf(a - 1.0) * (-z).exp() * z / (z - a + 1.0)
                };
                (l as f64) * scale.powi(l as i32) / shape * z.exp() * gamma_up_bound
            }
            Uniform { width } => {
                if x >= *width {
                    0.0
                } else {
                    width.powi(l as i32) - x.powi(l as i32)
                }
            }
            Delayed { delay, inner } => {
                if x <= *delay {
                    return f64::INFINITY;
                }
                let y = x - delay;
                let two = 2f64.powi(l as i32 - 1);
                let a = inner.ratio_tail_bound(l, y);
                let b = inner.ratio_tail_bound(1, y);
                two * (a + l as f64 * delay.powi(l as i32 - 1) * b)
            }
            Aged { age, inner } => inner.ratio_tail_bound(l, age + x),
            _ => {
                let floor = self.rate_floor_from(x);
                if floor > 0.0 {
                    exp_floor_tail(l, x, floor)
                } else {
                    f64::INFINITY
                }
            }
        }
    }
}

/// Exact value of `l * integral_0^inf (x+v)^(l-1) e^(-rate v) dv`.
fn exp_floor_tail(l: u32, x: f64, rate: f64) -> f64 {
    let p = l - 1;
    let mut sum = 0.0;
    let mut binom = 1.0; // C(p, j)
    let mut fact = 1.0; // j!
    for j in 0..=p {
        if j > 0 {
            binom *= (p - j + 1) as f64 / j as f64;
            fact *= j as f64;
        }
        sum += binom * x.powi((p - j) as i32) * fact / rate.powi(j as i32 + 1);
    }
    l as f64 * sum
}

/// Monotone bisection for `f(s) >= v`, absolute tolerance 1e-12.
fn bisect_inverse(f: impl Fn(f64) -> f64, v: f64, support_end: f64) -> f64 {
    let mut hi = if support_end.is_finite() {
        support_end
    } else {
        let mut h = 1.0;
        while f(h) < v && h < 1e12 {
            h *= 2.0;
        }
        h
    };
    let mut lo = 0.0;
    while hi - lo > INVERSE_TOL {
        let mid = 0.5 * (lo + hi);
        if f(mid) >= v {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

// ---------------------------------------------------------------------------
// HazardSpec
// ---------------------------------------------------------------------------

/// A mixed distribution: additive continuous hazard terms plus atoms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HazardSpec {
    parts: Vec<ContinuousHazard>,
    atoms: Vec<Atom>,
}

impl HazardSpec {
    pub fn new(parts: Vec<ContinuousHazard>, atoms: Vec<Atom>) -> Result<Self> {
        for p in &parts {
            p.validate()?;
        }
        for w in atoms.windows(2) {
            if !(w[1].location > w[0].location) {
                return Err(Error::invalid_spec(
                    "atom locations must be strictly increasing".to_string(),
                ));
            }
        }
        for a in &atoms {
            Atom::new(a.location, a.q)?;
        }
        Ok(HazardSpec { parts, atoms })
    }

    /// Zero hazard (only meaningful together with atoms).
    pub fn zero() -> Self {
        HazardSpec {
            parts: vec![],
            atoms: vec![],
        }
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        HazardSpec::new(vec![ContinuousHazard::Constant { rate }], vec![])
    }

    pub fn weibull(shape: f64, scale: f64) -> Result<Self> {
        HazardSpec::new(vec![ContinuousHazard::Weibull { shape, scale }], vec![])
    }

    pub fn uniform(width: f64) -> Result<Self> {
        HazardSpec::new(vec![ContinuousHazard::Uniform { width }], vec![])
    }

    pub fn pareto(shape: f64) -> Result<Self> {
        HazardSpec::new(vec![ContinuousHazard::Pareto { shape }], vec![])
    }

    pub fn grid(knots: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        HazardSpec::new(vec![ContinuousHazard::Grid { knots, rates }], vec![])
    }

    /// Shift the whole continuous hazard right by `delay` (zero before it).
    pub fn delayed(self, delay: f64) -> Result<Self> {
        let parts = self
            .parts
            .into_iter()
            .map(|p| ContinuousHazard::Delayed {
                delay,
                inner: Box::new(p),
            })
            .collect();
        HazardSpec::new(parts, self.atoms)
    }

    pub fn with_atoms(mut self, atoms: Vec<Atom>) -> Result<Self> {
        self.atoms = atoms;
        HazardSpec::new(self.parts, self.atoms)
    }

    pub fn parts(&self) -> &[ContinuousHazard] {
        &self.parts
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn has_atoms(&self) -> bool {
        !self.atoms.is_empty()
    }

    /// Continuous hazard value at `s`.
    pub fn continuous_rate(&self, s: f64) -> f64 {
        self.parts.iter().map(|p| p.rate(s)).sum()
    }

    pub fn continuous_cum(&self, s: f64) -> f64 {
        self.parts.iter().map(|p| p.cum(s)).sum()
    }

    pub fn continuous_total(&self) -> f64 {
        self.parts.iter().map(|p| p.total()).sum()
    }

    /// Cumulative hazard including atom weights at locations `<= s`
    /// (right-continuous).
    pub fn cumulative_hazard(&self, s: f64) -> Result<f64> {
        if s < 0.0 || s.is_nan() {
            return Err(Error::domain(format!("negative time {s}")));
        }
        let w: f64 = self
            .atoms
            .iter()
            .filter(|a| a.location <= s)
            .map(Atom::weight)
            .sum();
        Ok(self.continuous_cum(s) + w)
    }

    /// Cumulative hazard just before `s` (atoms strictly below `s`).
    pub fn cumulative_hazard_left(&self, s: f64) -> f64 {
        let w: f64 = self
            .atoms
            .iter()
            .filter(|a| a.location < s)
            .map(Atom::weight)
            .sum();
        self.continuous_cum(s) + w
    }

    /// Smallest `s` where survival vanishes.
    pub fn support_end(&self) -> f64 {
        self.parts
            .iter()
            .map(|p| p.support_end())
            .fold(f64::INFINITY, f64::min)
    }

    /// Total hazard mass; the law is proper iff this is infinite.
    pub fn total_hazard(&self) -> f64 {
        let w: f64 = self.atoms.iter().map(Atom::weight).sum();
        self.continuous_total() + w
    }

    pub fn is_proper(&self) -> bool {
        self.total_hazard().is_infinite()
    }

    /// Whether `integral of hazard = infinity` is analytically certified.
    pub fn divergence_certified(&self) -> bool {
        self.parts.iter().any(|p| p.diverges_certified())
    }

    /// Quadrature panel boundaries: rate kinks, atoms, support end.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for p in &self.parts {
            p.push_breakpoints(0.0, &mut out);
        }
        out.extend(self.atoms.iter().map(|a| a.location));
        let end = self.support_end();
        if end.is_finite() {
            out.push(end);
        }
        out.retain(|b| b.is_finite() && *b > 0.0);
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out.dedup();
        out
    }

    /// Smallest `s` with continuous cumulative hazard `>= v`.
    pub fn continuous_inverse(&self, v: f64) -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        match self.parts.len() {
            0 => f64::INFINITY,
            1 => self.parts[0].inverse_cum(v),
            _ => bisect_inverse(|s| self.continuous_cum(s), v, self.support_end()),
        }
    }

    /// Hazards add under minimum composition; coincident atoms combine their
    /// conditional jumps as `1 - (1-q1)(1-q2)`.
    pub fn min_compose(&self, other: &HazardSpec) -> HazardSpec {
        let mut constant = 0.0;
        let mut parts = Vec::new();
        for p in self.parts.iter().chain(other.parts.iter()) {
            match p {
                ContinuousHazard::Constant { rate } => constant += rate,
                other => parts.push(other.clone()),
            }
        }
        if constant > 0.0 {
            parts.insert(0, ContinuousHazard::Constant { rate: constant });
        }

        let mut atoms = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.atoms.len() || j < other.atoms.len() {
            let take_left = match (self.atoms.get(i), other.atoms.get(j)) {
                (Some(a), Some(b)) => {
                    if a.location == b.location {
                        atoms.push(Atom {
                            location: a.location,
                            q: 1.0 - (1.0 - a.q) * (1.0 - b.q),
                        });
                        i += 1;
                        j += 1;
                        continue;
                    }
                    a.location < b.location
                }
                (Some(_), None) => true,
                (None, Some(_)) => false,
                (None, None) => unreachable!(),
            };
            if take_left {
                atoms.push(self.atoms[i]);
                i += 1;
            } else {
                atoms.push(other.atoms[j]);
                j += 1;
            }
        }
        HazardSpec { parts, atoms }
    }

    /// The law conditioned on survival to `age`: continuous terms shift left,
    /// atoms at or before `age` drop out, conditional jumps are unchanged.
    pub fn aged(&self, age: f64) -> Result<HazardSpec> {
        if age < 0.0 || age.is_nan() {
            return Err(Error::domain(format!("negative age {age}")));
        }
        if age >= self.support_end() {
            return Err(Error::ThresholdBeyondSupport { age });
        }
        let parts = self.parts.iter().map(|p| p.aged(age)).collect();
        let atoms = self
            .atoms
            .iter()
            .filter(|a| a.location > age)
            .map(|a| Atom {
                location: a.location - age,
                q: a.q,
            })
            .collect();
        Ok(HazardSpec { parts, atoms })
    }

    /// Smallest `s` with full cumulative hazard (atoms included) `>= level`.
    /// Crossings inside an atom's weight interval resolve to the atom location.
    pub(crate) fn level_crossing(&self, level: f64) -> Result<f64> {
        let mut weight_before = 0.0;
        for atom in &self.atoms {
            let just_before = self.continuous_cum(atom.location) + weight_before;
            if level <= just_before {
                return Ok(self.continuous_inverse(level - weight_before));
            }
            let w = atom.weight();
            if level <= just_before + w {
                return Ok(atom.location);
            }
            weight_before += w;
        }
        let target = level - weight_before;
        let total = self.continuous_total();
        if target > total {
            return Err(Error::ImproperDistribution);
        }
        Ok(self.continuous_inverse(target))
    }
}

// ---------------------------------------------------------------------------
// Moments
// ---------------------------------------------------------------------------

/// A moment value, or a divergence marker when the tail cannot be certified
/// below tolerance within the horizon cap (or is certifiably infinite).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Moment {
    Finite {
        value: f64,
        achieved_tol: f64,
        horizon: f64,
    },
    Divergent,
}

impl Moment {
    pub fn value(&self) -> Option<f64> {
        match self {
            Moment::Finite { value, .. } => Some(*value),
            Moment::Divergent => None,
        }
    }

    pub fn is_divergent(&self) -> bool {
        matches!(self, Moment::Divergent)
    }

    pub fn expect_finite(&self, what: &str) -> Result<f64> {
        self.value()
            .ok_or_else(|| Error::domain(format!("{what} is divergent")))
    }
}

// ---------------------------------------------------------------------------
// DistributionView
// ---------------------------------------------------------------------------

/// Density value or point mass reported by [`DistributionView::mass_at`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum MassAt {
    Density(f64),
    PointMass(f64),
}

/// CDF/survival/density evaluation at one time.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Evaluation {
    pub cdf: f64,
    pub survival: f64,
    pub mass: MassAt,
}

/// Evaluation facade over a [`HazardSpec`]: CDF, survival, density, moments,
/// sampling, residual laws. Immutable and shareable across workers.
#[derive(Debug, Clone)]
pub struct DistributionView {
    spec: HazardSpec,
    tol: f64,
    atom_mass: f64,
}

impl DistributionView {
    pub fn new(spec: HazardSpec) -> Result<Self> {
        Self::with_tol(spec, DEFAULT_TOL)
    }

    pub fn with_tol(spec: HazardSpec, tol: f64) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(Error::domain(format!("tolerance {tol} <= 0")));
        }
        let mut atom_mass = 0.0;
        let mut weight_before = 0.0;
        for a in spec.atoms() {
            let surv_left = (-(spec.continuous_cum(a.location) + weight_before)).exp();
            atom_mass += surv_left * a.q;
            weight_before += a.weight();
        }
        Ok(DistributionView {
            spec,
            tol,
            atom_mass,
        })
    }

    pub fn spec(&self) -> &HazardSpec {
        &self.spec
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Total probability carried by atoms.
    pub fn atom_mass(&self) -> f64 {
        self.atom_mass
    }

    pub fn survival(&self, s: f64) -> f64 {
        if s < 0.0 {
            return 1.0;
        }
        (-self.spec.cumulative_hazard(s).unwrap_or(f64::INFINITY)).exp()
    }

    pub fn survival_left(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 1.0;
        }
        (-self.spec.cumulative_hazard_left(s)).exp()
    }

    pub fn cdf(&self, s: f64) -> f64 {
        1.0 - self.survival(s)
    }

    /// Point mass of the atom at `s` (exact match), else the a.e. density.
    pub fn mass_at(&self, s: f64) -> MassAt {
        if let Some(a) = self.spec.atoms().iter().find(|a| a.location == s) {
            return MassAt::PointMass(self.survival_left(s) * a.q);
        }
        MassAt::Density(self.spec.continuous_rate(s) * self.survival(s))
    }

    /// Continuous density `h(s) S(s)`; zero where survival vanishes.
    pub fn density(&self, s: f64) -> f64 {
        let surv = self.survival(s);
        if surv == 0.0 {
            return 0.0;
        }
        self.spec.continuous_rate(s) * surv
    }

    pub fn evaluate(&self, s: f64) -> Result<Evaluation> {
        if s < 0.0 || s.is_nan() {
            return Err(Error::domain(format!("negative time {s}")));
        }
        Ok(Evaluation {
            cdf: self.cdf(s),
            survival: self.survival(s),
            mass: self.mass_at(s),
        })
    }

    /// `E X^order` as `order * integral x^(order-1) S(x) dx` by adaptive
    /// quadrature with a certified truncation tail.
    pub fn moment(&self, order: u32) -> Result<Moment> {
        self.moment_with_tol(order, self.tol)
    }

    pub fn moment_with_tol(&self, order: u32, tol: f64) -> Result<Moment> {
        if order == 0 {
            return Err(Error::domain("moment order must be >= 1".to_string()));
        }
        if !(tol > 0.0) {
            return Err(Error::domain(format!("tolerance {tol} <= 0")));
        }
        if !self.spec.is_proper() {
            return Ok(Moment::Divergent);
        }
        // certified divergence: every part Pareto-like with total shape <= order
        let pareto_shapes: Option<f64> = self
            .spec
            .parts()
            .iter()
            .map(|p| match p {
                ContinuousHazard::Pareto { shape } => Some(*shape),
                ContinuousHazard::Aged { inner, .. } => match inner.as_ref() {
                    ContinuousHazard::Pareto { shape } => Some(*shape),
                    _ => None,
                },
                _ => None,
            })
            .sum();
        if let Some(total_shape) = pareto_shapes {
            if !self.spec.parts().is_empty() && total_shape <= order as f64 {
                return Ok(Moment::Divergent);
            }
        }

        let support = self.spec.support_end();
        let (horizon, tail) = if support.is_finite() {
            (support, 0.0)
        } else {
            let last_break = self
                .spec
                .breakpoints()
                .last()
                .copied()
                .unwrap_or(0.0)
                .max(1.0);
            let mut x = last_break;
            let mut found = None;
            while x <= MOMENT_HORIZON_CAP {
                let tb = self.tail_bound(order, x);
                if tb < 0.5 * tol {
                    found = Some((x, tb));
                    break;
                }
                x *= 2.0;
            }
            match found {
                Some(pair) => pair,
                None => return Ok(Moment::Divergent),
            }
        };

        let l = order as f64;
        let integrand = |x: f64| {
            if order == 1 {
                self.survival(x)
            } else {
                l * x.powi(order as i32 - 1) * self.survival(x)
            }
        };
        let r = quad::integrate(integrand, 0.0, horizon, 0.5 * tol, &self.spec.breakpoints());
        Ok(Moment::Finite {
            value: r.value,
            achieved_tol: r.error_estimate + tail,
            horizon,
        })
    }

    fn tail_bound(&self, order: u32, x: f64) -> f64 {
        let best = self
            .spec
            .parts()
            .iter()
            .map(|p| p.ratio_tail_bound(order, x))
            .fold(f64::INFINITY, f64::min);
        self.survival(x) * best
    }

    /// Inverse cumulative-hazard sampling: draw a standard exponential level
    /// and return the first time the hazard accumulates past it. Crossings
    /// inside an atom's weight return the atom location exactly.
    pub fn sample(&self, rng: &mut impl Rng) -> Result<f64> {
        self.spec.level_crossing(exp1(rng))
    }

    /// Residual-life view at `age` (condition on survival to `age`).
    pub fn conditioned(&self, age: f64) -> Result<DistributionView> {
        DistributionView::with_tol(self.spec.aged(age)?, self.tol)
    }

    /// First moment shorthand.
    pub fn mean(&self) -> Result<Moment> {
        self.moment(1)
    }
}

// ---------------------------------------------------------------------------
// Common part and stochastic order
// ---------------------------------------------------------------------------

/// Evaluate a density defensively at panel endpoints: integrable hazard
/// singularities (Weibull shape < 1 at 0, uniform at its width) evaluate to
/// infinity exactly on the boundary; nudge inward.
fn guarded_density(v: &DistributionView, s: f64) -> f64 {
    let d = v.density(s);
    if d.is_finite() {
        d
    } else {
        v.density(s + 1e-12 * (1.0 + s.abs()))
    }
}

/// Common part of two laws: `integral min(f1, f2)` plus shared-atom mass.
/// This is the guaranteed coincidence probability in the coupling lemma.
pub fn common_part_kappa(a: &DistributionView, b: &DistributionView, tol: f64) -> Result<f64> {
    common_part_kappa_n(&[a.clone(), b.clone()], tol)
}

/// Common part of `n >= 2` laws: `integral min_i f_i` plus atoms shared by all.
pub fn common_part_kappa_n(views: &[DistributionView], tol: f64) -> Result<f64> {
    if views.len() < 2 {
        return Err(Error::domain("common part needs at least two laws".to_string()));
    }
    for v in views {
        if !v.spec().is_proper() {
            return Err(Error::domain(
                "common part requires proper distributions".to_string(),
            ));
        }
    }
    // truncation where the smallest survival is negligible
    let mut horizon = 1.0;
    while views
        .iter()
        .map(|v| v.survival(horizon))
        .fold(f64::INFINITY, f64::min)
        > 0.5 * tol
        && horizon < MOMENT_HORIZON_CAP
    {
        horizon *= 2.0;
    }

    let mut breaks: Vec<f64> = Vec::new();
    for v in views {
        breaks.extend(v.spec().breakpoints());
    }

    let integrand = |s: f64| {
        views
            .iter()
            .map(|v| guarded_density(v, s))
            .fold(f64::INFINITY, f64::min)
    };
    let r = quad::integrate(integrand, 0.0, horizon, tol, &breaks);

    // atoms present in every law at the same location contribute min mass
    let mut shared = 0.0;
    for a in views[0].spec().atoms() {
        let mut min_mass = match views[0].mass_at(a.location) {
            MassAt::PointMass(m) => m,
            MassAt::Density(_) => continue,
        };
        let mut all = true;
        for v in &views[1..] {
            match v.mass_at(a.location) {
                MassAt::PointMass(m) => min_mass = min_mass.min(m),
                MassAt::Density(_) => {
                    all = false;
                    break;
                }
            }
        }
        if all {
            shared += min_mass;
        }
    }

    Ok((r.value + shared).clamp(0.0, 1.0))
}

/// First violation of the CDF sandwich `upper >= middle >= lower` on a grid.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OrderViolation {
    pub s: f64,
    pub dominant_cdf: f64,
    pub middle_cdf: f64,
    pub dominated_cdf: f64,
}

/// Result of [`stochastic_order_check`].
#[derive(Debug, Clone, Serialize)]
pub struct OrderCheck {
    pub ordered: bool,
    pub violation: Option<OrderViolation>,
}

/// Check the stochastic ordering of three laws on a grid: the `dominant`
/// CDF (from the upper intensity) must dominate `middle`, which must
/// dominate `dominated` (from the lower intensity) at every grid point.
pub fn stochastic_order_check(
    dominant: &DistributionView,
    middle: &DistributionView,
    dominated: &DistributionView,
    grid: &[f64],
) -> Result<OrderCheck> {
    if grid.is_empty() {
        return Err(Error::domain("empty ordering grid".to_string()));
    }
    const SLACK: f64 = 1e-12;
    for &s in grid {
        let g = dominant.cdf(s);
        let f = middle.cdf(s);
        let p = dominated.cdf(s);
        if g < f - SLACK || f < p - SLACK {
            return Ok(OrderCheck {
                ordered: false,
                violation: Some(OrderViolation {
                    s,
                    dominant_cdf: g,
                    middle_cdf: f,
                    dominated_cdf: p,
                }),
            });
        }
    }
    Ok(OrderCheck {
        ordered: true,
        violation: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::substream;

    fn view(spec: HazardSpec) -> DistributionView {
        DistributionView::new(spec).unwrap()
    }

    fn exp_view(rate: f64) -> DistributionView {
        view(HazardSpec::exponential(rate).unwrap())
    }

    fn atom_only(location: f64, q: f64) -> DistributionView {
        view(
            HazardSpec::zero()
                .with_atoms(vec![Atom::new(location, q).unwrap()])
                .unwrap(),
        )
    }

    #[test]
    fn cumulative_hazard_exponential() {
        let spec = HazardSpec::exponential(2.0).unwrap();
        assert!((spec.cumulative_hazard(1.0).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(spec.cumulative_hazard(0.0).unwrap(), 0.0);
        assert!(spec.cumulative_hazard(-0.1).is_err());
    }

    #[test]
    fn cumulative_hazard_single_atom() {
        // weight of a q = 0.3 atom is -ln(0.7)
        let spec = HazardSpec::zero()
            .with_atoms(vec![Atom::new(1.0, 0.3).unwrap()])
            .unwrap();
        let lam = spec.cumulative_hazard(1.0).unwrap();
        assert!((lam - 0.356675).abs() < 1e-6);
        assert!((lam - -(0.7f64.ln())).abs() < 1e-12);
        assert_eq!(spec.cumulative_hazard(0.999).unwrap(), 0.0);
    }

    #[test]
    fn evaluate_exponential() {
        let v = exp_view(2.0);
        let e = v.evaluate(1.0).unwrap();
        assert!((e.cdf - 0.8646647167633873).abs() < 1e-12);
        assert!((e.survival - (1.0 - 0.8646647167633873)).abs() < 1e-12);
        match e.mass {
            MassAt::Density(d) => assert!((d - 2.0 * e.survival).abs() < 1e-12),
            _ => panic!("expected a density"),
        }
    }

    #[test]
    fn evaluate_atom_point_mass() {
        let v = atom_only(1.0, 0.3);
        match v.evaluate(1.0).unwrap().mass {
            MassAt::PointMass(m) => assert!((m - 0.3).abs() < 1e-12),
            _ => panic!("expected a point mass"),
        }
    }

    #[test]
    fn evaluate_uniform_midpoint() {
        let v = view(HazardSpec::uniform(1.0).unwrap());
        assert!((v.cdf(0.5) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn moment_exponential_second() {
        let m = exp_view(1.0).moment(2).unwrap();
        let value = m.value().unwrap();
        assert!((value - 2.0).abs() < 1e-7);
    }

    #[test]
    fn moment_uniform_mean() {
        let m = view(HazardSpec::uniform(1.0).unwrap()).moment(1).unwrap();
        assert!((m.value().unwrap() - 0.5).abs() < 1e-8);
    }

    #[test]
    fn moment_weibull_mean_is_gamma_three_halves() {
        // Gamma(1.5) evaluated independently
        let oracle = 0.886226925452758_f64;
        let m = view(HazardSpec::weibull(2.0, 1.0).unwrap()).moment(1).unwrap();
        assert!((m.value().unwrap() - oracle).abs() < 1e-7);
    }

    #[test]
    fn moment_divergent_for_heavy_pareto() {
        // second moment of Pareto survival (1+x)^-1.5 diverges
        let m = view(HazardSpec::pareto(1.5).unwrap()).moment(2).unwrap();
        assert!(m.is_divergent());
    }

    #[test]
    fn moment_divergent_for_improper_spec() {
        let m = atom_only(1.0, 0.3).moment(1).unwrap();
        assert!(m.is_divergent());
    }

    #[test]
    fn sample_exponential_closed_form() {
        let v = exp_view(2.0);
        let mut r1 = substream(11, 0, 0);
        let mut r2 = substream(11, 0, 0);
        let x = v.sample(&mut r1).unwrap();
        let e = exp1(&mut r2);
        assert!((x - e / 2.0).abs() < 1e-12);
    }

    #[test]
    fn sample_mean_matches_law_of_large_numbers() {
        let v = exp_view(1.0);
        let mut rng = substream(42, 1, 0);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += v.sample(&mut rng).unwrap();
        }
        let mean = sum / n as f64;
        assert!((0.99..=1.01).contains(&mean), "mean {mean}");
    }

    #[test]
    fn sample_atom_hits_location_exactly() {
        let v = atom_only(1.0, 0.3);
        let mut rng = substream(7, 2, 0);
        let n = 100_000;
        let mut hits = 0u32;
        for _ in 0..n {
            match v.sample(&mut rng) {
                Ok(x) => {
                    assert_eq!(x, 1.0);
                    hits += 1;
                }
                Err(Error::ImproperDistribution) => {}
                Err(e) => panic!("unexpected: {e}"),
            }
        }
        let frac = hits as f64 / n as f64;
        assert!((frac - 0.3).abs() < 0.005, "fraction {frac}");
    }

    #[test]
    fn min_compose_exponentials_adds_rates() {
        let a = HazardSpec::exponential(2.0).unwrap();
        let b = HazardSpec::exponential(3.0).unwrap();
        let c = a.min_compose(&b);
        assert_eq!(c.parts().len(), 1);
        assert!((c.cumulative_hazard(1.7).unwrap() - 5.0 * 1.7).abs() < 1e-12);
    }

    #[test]
    fn min_compose_merges_coincident_atoms() {
        let a = HazardSpec::zero()
            .with_atoms(vec![Atom::new(1.0, 0.5).unwrap()])
            .unwrap();
        let c = a.min_compose(&a.clone());
        assert_eq!(c.atoms().len(), 1);
        assert!((c.atoms()[0].q - 0.75).abs() < 1e-12);
    }

    #[test]
    fn min_compose_hazard_additivity() {
        let a = HazardSpec::exponential(1.0).unwrap();
        let b = HazardSpec::zero()
            .with_atoms(vec![Atom::new(2.0, 0.3).unwrap()])
            .unwrap();
        let c = a.min_compose(&b);
        let expected = 3.0 + -(0.7f64.ln());
        assert!((c.cumulative_hazard(3.0).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn kappa_identical_laws_is_one() {
        let v = exp_view(1.0);
        let k = common_part_kappa(&v, &v, 1e-8).unwrap();
        assert!((k - 1.0).abs() < 1e-6);
    }

    #[test]
    fn kappa_exp1_exp2() {
        // closed form: 1/2 + 1/4
        let k = common_part_kappa(&exp_view(1.0), &exp_view(2.0), 1e-8).unwrap();
        assert!((k - 0.75).abs() < 1e-6);
    }

    #[test]
    fn kappa_disjoint_supports_is_zero() {
        let a = view(HazardSpec::uniform(1.0).unwrap());
        let b = view(HazardSpec::uniform(1.0).unwrap().delayed(2.0).unwrap());
        let k = common_part_kappa(&a, &b, 1e-8).unwrap();
        assert!(k.abs() < 1e-9);
    }

    #[test]
    fn kappa_is_symmetric() {
        let a = exp_view(1.0);
        let b = view(HazardSpec::weibull(2.0, 1.0).unwrap());
        let k1 = common_part_kappa(&a, &b, 1e-8).unwrap();
        let k2 = common_part_kappa(&b, &a, 1e-8).unwrap();
        assert!((k1 - k2).abs() < 1e-9);
    }

    #[test]
    fn order_check_rate_ordered_exponentials() {
        let grid: Vec<f64> = (0..=100).map(|i| i as f64 * 0.1).collect();
        let ok = stochastic_order_check(&exp_view(2.0), &exp_view(1.5), &exp_view(1.0), &grid)
            .unwrap();
        assert!(ok.ordered);

        let bad = stochastic_order_check(&exp_view(1.0), &exp_view(2.0), &exp_view(0.5), &grid)
            .unwrap();
        assert!(!bad.ordered);
        let v = bad.violation.unwrap();
        assert!(v.s > 0.0 && v.middle_cdf > v.dominant_cdf);

        let eq = stochastic_order_check(&exp_view(1.0), &exp_view(1.0), &exp_view(1.0), &grid)
            .unwrap();
        assert!(eq.ordered);
    }

    #[test]
    fn conditioned_view_is_residual_law() {
        // memoryless: residual of an exponential is the same law
        let v = exp_view(1.5);
        let r = v.conditioned(2.0).unwrap();
        assert!((r.cdf(1.0) - v.cdf(1.0)).abs() < 1e-12);
        // uniform: residual at age u is uniform on [0, 1-u]
        let u = view(HazardSpec::uniform(1.0).unwrap());
        let r = u.conditioned(0.25).unwrap();
        assert!((r.cdf(0.375) - 0.5).abs() < 1e-12);
        assert!(u.conditioned(1.0).is_err());
    }

    #[test]
    fn aged_drops_passed_atoms_keeps_conditional_jumps() {
        let spec = HazardSpec::exponential(1.0)
            .unwrap()
            .with_atoms(vec![Atom::new(1.0, 0.2).unwrap(), Atom::new(3.0, 0.4).unwrap()])
            .unwrap();
        let aged = spec.aged(2.0).unwrap();
        assert_eq!(aged.atoms().len(), 1);
        assert_eq!(aged.atoms()[0].location, 1.0);
        assert_eq!(aged.atoms()[0].q, 0.4);
    }

    #[test]
    fn delayed_exponential_moments() {
        // X = 0.5 + Exp(1): mean 1.5, second moment 3.25
        let spec = HazardSpec::exponential(1.0).unwrap().delayed(0.5).unwrap();
        let v = view(spec);
        assert!((v.moment(1).unwrap().value().unwrap() - 1.5).abs() < 1e-7);
        assert!((v.moment(2).unwrap().value().unwrap() - 3.25).abs() < 1e-6);
    }

    #[test]
    fn grid_hazard_matches_constant() {
        let g = view(HazardSpec::grid(vec![0.0, 1.0, 2.0], vec![2.0, 2.0, 2.0]).unwrap());
        let e = exp_view(2.0);
        for s in [0.3, 1.0, 1.7, 5.0] {
            assert!((g.cdf(s) - e.cdf(s)).abs() < 1e-12, "s = {s}");
        }
        let m = g.moment(1).unwrap().value().unwrap();
        assert!((m - 0.5).abs() < 1e-7);
    }

    #[test]
    fn improper_grid_moment_diverges() {
        // terminal rate zero: survival plateaus above zero
        let g = view(HazardSpec::grid(vec![0.0, 1.0], vec![1.0, 0.0]).unwrap());
        assert!(g.moment(1).unwrap().is_divergent());
    }
}
