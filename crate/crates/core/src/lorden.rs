//! Overshoot and undershoot expectation bounds from period-law moments, and
//! their Monte Carlo verification.
//!
//! Conventions: the envelope's lower intensity generates the heavy law
//! (called `phi` here), the upper intensity the light law (`g`). The
//! first-order bound is
//!
//! ```text
//! bound = mu_phi + m2_phi / (2 mu_g)
//! ```
//!
//! and the order-`l` variant is `m_l(phi) + m_{l+1}(phi) / ((l+1) mu_g)`.
//! With equal intensities both reduce to the classical iid bound
//! `E xi^2 / E xi`.

use crate::error::{Error, Result};
use crate::gendist::{DistributionView, Moment};
use crate::renewal::{simulate_path, Envelope, RenewalPolicy};
use crate::stats::Running;
use crate::stream::Executor;
use serde::Serialize;

/// Classical uniform overshoot bound `E xi^2 / E xi` for an iid law.
/// Divergent marker when the second moment diverges.
pub fn classical_bound(view: &DistributionView) -> Result<Moment> {
    let m1 = view.moment(1)?;
    let m2 = view.moment(2)?;
    match (m1, m2) {
        (
            Moment::Finite {
                value: m1,
                achieved_tol: t1,
                horizon: h1,
            },
            Moment::Finite {
                value: m2,
                achieved_tol: t2,
                horizon: h2,
            },
        ) => Ok(Moment::Finite {
            value: m2 / m1,
            achieved_tol: (t1 + t2) / m1,
            horizon: h1.max(h2),
        }),
        _ => Ok(Moment::Divergent),
    }
}

/// Limit of the expected overshoot, `E xi^2 / (2 E xi)`.
pub fn asymptotic_mean_overshoot(view: &DistributionView) -> Result<Moment> {
    Ok(match classical_bound(view)? {
        Moment::Finite {
            value,
            achieved_tol,
            horizon,
        } => Moment::Finite {
            value: 0.5 * value,
            achieved_tol: 0.5 * achieved_tol,
            horizon,
        },
        Moment::Divergent => Moment::Divergent,
    })
}

/// Moments of the envelope laws and the bounds they imply.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub mu_phi: f64,
    pub m2_phi: f64,
    pub mu_g: f64,
    pub generalized_bound: f64,
    /// `(order, bound)` for every order `1..=moment_order - 1` whose moments
    /// are finite.
    pub moment_bounds: Vec<(u32, f64)>,
    pub quadrature_tol: f64,
}

/// Bound computation outcome: a full report, or a divergence marker naming
/// the first moment that failed.
#[derive(Debug, Clone, Serialize)]
pub enum BoundOutcome {
    Report(BoundReport),
    Divergent { which: String },
}

impl BoundOutcome {
    pub fn report(&self) -> Option<&BoundReport> {
        match self {
            BoundOutcome::Report(r) => Some(r),
            BoundOutcome::Divergent { .. } => None,
        }
    }

    pub fn expect_report(&self, what: &str) -> Result<&BoundReport> {
        self.report()
            .ok_or_else(|| Error::domain(format!("{what}: bound moments divergent")))
    }
}

/// Uniform bound on the expected overshoot/undershoot of any policy held by
/// the envelope: heavy-law mean plus its second moment over twice the
/// light-law mean.
pub fn generalized_bound(envelope: &Envelope) -> Result<BoundOutcome> {
    let phi = envelope.heavy_law();
    let g = envelope.light_law();
    let mu_phi = match phi.moment(1)? {
        Moment::Finite { value, .. } => value,
        Moment::Divergent => {
            return Ok(BoundOutcome::Divergent {
                which: "heavy-law mean".to_string(),
            })
        }
    };
    let m2_phi = match phi.moment(2)? {
        Moment::Finite { value, .. } => value,
        Moment::Divergent => {
            return Ok(BoundOutcome::Divergent {
                which: "heavy-law second moment".to_string(),
            })
        }
    };
    let mu_g = match g.moment(1)? {
        Moment::Finite { value, .. } => value,
        Moment::Divergent => {
            return Ok(BoundOutcome::Divergent {
                which: "light-law mean".to_string(),
            })
        }
    };
    let mut moment_bounds = Vec::new();
    for order in 1..envelope.moment_order() {
        if let Some(b) = moment_bound_value(envelope, order)? {
            moment_bounds.push((order, b));
        }
    }
    Ok(BoundOutcome::Report(BoundReport {
        mu_phi,
        m2_phi,
        mu_g,
        generalized_bound: mu_phi + m2_phi / (2.0 * mu_g),
        moment_bounds,
        quadrature_tol: phi.tol(),
    }))
}

fn moment_bound_value(envelope: &Envelope, order: u32) -> Result<Option<f64>> {
    let phi = envelope.heavy_law();
    let g = envelope.light_law();
    let (Some(ml), Some(ml1), Some(mu_g)) = (
        phi.moment(order)?.value(),
        phi.moment(order + 1)?.value(),
        g.moment(1)?.value(),
    ) else {
        return Ok(None);
    };
    Ok(Some(ml + ml1 / ((order + 1) as f64 * mu_g)))
}

/// Order-`order` overshoot moment bound,
/// `m_order(phi) + m_{order+1}(phi) / ((order+1) mu_g)`.
///
/// `order` must lie in `1..=moment_order - 1`.
pub fn moment_bound(envelope: &Envelope, order: u32) -> Result<Moment> {
    if order == 0 || order > envelope.moment_order() - 1 {
        return Err(Error::domain(format!(
            "moment bound order {order} outside 1..={}",
            envelope.moment_order() - 1
        )));
    }
    Ok(match moment_bound_value(envelope, order)? {
        Some(value) => Moment::Finite {
            value,
            achieved_tol: envelope.heavy_law().tol(),
            horizon: f64::INFINITY,
        },
        None => Moment::Divergent,
    })
}

/// One probe time of a Monte Carlo bound verification.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct VerificationRow {
    pub t: f64,
    pub mean_overshoot: f64,
    pub mean_undershoot: f64,
    pub bound: f64,
    pub margin_overshoot: f64,
    pub margin_undershoot: f64,
    /// 3-sigma half-width of the overshoot (first) and undershoot (second) means.
    pub half_width_overshoot: f64,
    pub half_width_undershoot: f64,
    /// Set when an estimate exceeds the bound by more than 3 sigma.
    pub breached: bool,
}

/// Monte Carlo verification table for a set of probe times.
#[derive(Debug, Clone, Serialize)]
pub struct VerificationTable {
    pub rows: Vec<VerificationRow>,
    pub n_paths: usize,
    pub bound: f64,
}

impl VerificationTable {
    pub fn any_breach(&self) -> bool {
        self.rows.iter().any(|r| r.breached)
    }
}

/// Estimate `E B_t` and `E W_t` at each probe time over `n` paths and compare
/// them with the envelope bound; breaches are flagged, never fatal.
pub fn verify_bounds_mc(
    policy: &RenewalPolicy,
    envelope: &Envelope,
    times: &[f64],
    n: usize,
    exec: &Executor,
    seed: u64,
    phase: u64,
) -> Result<VerificationTable> {
    if times.is_empty() {
        return Err(Error::domain("no probe times"));
    }
    if n < 1000 {
        return Err(Error::domain("need at least 1000 paths"));
    }
    let bound = generalized_bound(envelope)?
        .expect_report("verification")?
        .generalized_bound;
    let horizon = times.iter().copied().fold(0.0, f64::max).max(1e-9);

    let batch = exec.run(n, seed, phase, |_, rng| -> Result<Vec<(f64, f64)>> {
        let path = simulate_path(policy, horizon, rng)?;
        times
            .iter()
            .map(|&t| Ok((path.overshoot_at(t)?, path.undershoot_at(t)?)))
            .collect()
    });

    let mut over: Vec<Running> = times.iter().map(|_| Running::default()).collect();
    let mut under: Vec<Running> = times.iter().map(|_| Running::default()).collect();
    for item in batch.items {
        for (k, (b, w)) in item?.into_iter().enumerate() {
            over[k].push(b);
            under[k].push(w);
        }
    }

    let rows = times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let mb = over[k].mean();
            let mw = under[k].mean();
            let hb = over[k].half_width_3s();
            let hw = under[k].half_width_3s();
            VerificationRow {
                t,
                mean_overshoot: mb,
                mean_undershoot: mw,
                bound,
                margin_overshoot: bound - mb,
                margin_undershoot: bound - mw,
                half_width_overshoot: hb,
                half_width_undershoot: hw,
                breached: (mb - hb > bound) || (mw - hw > bound),
            }
        })
        .collect();
    Ok(VerificationTable {
        rows,
        n_paths: n,
        bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gendist::HazardSpec;

    fn view(spec: HazardSpec) -> DistributionView {
        DistributionView::new(spec).unwrap()
    }

    #[test]
    fn classical_bound_closed_forms() {
        let b = classical_bound(&view(HazardSpec::exponential(2.0).unwrap())).unwrap();
        assert!((b.value().unwrap() - 1.0).abs() < 1e-7);

        let b = classical_bound(&view(HazardSpec::uniform(1.0).unwrap())).unwrap();
        assert!((b.value().unwrap() - 2.0 / 3.0).abs() < 1e-7);

        // Weibull(2, 1): Gamma(2)/Gamma(1.5) = 2/sqrt(pi)
        let b = classical_bound(&view(HazardSpec::weibull(2.0, 1.0).unwrap())).unwrap();
        assert!((b.value().unwrap() - 1.1283791670955126).abs() < 1e-6);
    }

    #[test]
    fn classical_bound_divergent_marker() {
        let b = classical_bound(&view(HazardSpec::pareto(1.5).unwrap())).unwrap();
        assert!(b.is_divergent());
    }

    #[test]
    fn asymptotic_overshoot_closed_forms() {
        let a = asymptotic_mean_overshoot(&view(HazardSpec::exponential(1.0).unwrap())).unwrap();
        assert!((a.value().unwrap() - 1.0).abs() < 1e-7);
        let a = asymptotic_mean_overshoot(&view(HazardSpec::uniform(1.0).unwrap())).unwrap();
        assert!((a.value().unwrap() - 1.0 / 3.0).abs() < 1e-7);
        let a = asymptotic_mean_overshoot(&view(HazardSpec::weibull(2.0, 1.0).unwrap())).unwrap();
        assert!((a.value().unwrap() - 0.5641895835477563).abs() < 1e-6);
    }

    fn envelope(lower_rate: f64, upper_rate: f64) -> Envelope {
        Envelope::new(
            HazardSpec::exponential(lower_rate).unwrap(),
            HazardSpec::exponential(upper_rate).unwrap(),
            0.0,
            4,
        )
        .unwrap()
    }

    #[test]
    fn generalized_bound_collapses_to_classical() {
        let out = generalized_bound(&envelope(1.0, 1.0)).unwrap();
        let r = out.report().unwrap();
        assert!((r.generalized_bound - 2.0).abs() < 1e-6);
    }

    #[test]
    fn generalized_bound_with_wider_envelope() {
        // mu_phi = 1, m2_phi = 2, mu_g = 0.5
        let out = generalized_bound(&envelope(1.0, 2.0)).unwrap();
        let r = out.report().unwrap();
        assert!((r.generalized_bound - 3.0).abs() < 1e-6);
    }

    #[test]
    fn generalized_bound_with_delayed_lower() {
        // lower zero on [0, 0.5] then rate 1: mu = 1.5, m2 = 3.25, mu_g = 0.5
        let lower = HazardSpec::exponential(1.0).unwrap().delayed(0.5).unwrap();
        let env = Envelope::new(lower, HazardSpec::exponential(2.0).unwrap(), 0.5, 3).unwrap();
        let out = generalized_bound(&env).unwrap();
        let r = out.report().unwrap();
        assert!((r.generalized_bound - 4.75).abs() < 1e-5, "{}", r.generalized_bound);
    }

    #[test]
    fn moment_bound_values() {
        let env = envelope(1.0, 1.0);
        let b1 = moment_bound(&env, 1).unwrap().value().unwrap();
        assert!((b1 - 2.0).abs() < 1e-6);
        // order 2: m2 + m3 / (3 mu_g) = 2 + 6/3
        let b2 = moment_bound(&env, 2).unwrap().value().unwrap();
        assert!((b2 - 4.0).abs() < 1e-5);

        let env = envelope(1.0, 2.0);
        let b2 = moment_bound(&env, 2).unwrap().value().unwrap();
        assert!((b2 - 6.0).abs() < 1e-5);
    }

    #[test]
    fn moment_bound_order_must_stay_below_envelope_order() {
        let env = envelope(1.0, 1.0);
        assert!(moment_bound(&env, 0).is_err());
        assert!(moment_bound(&env, 4).is_err());
    }

    #[test]
    fn moment_bound_at_order_one_equals_generalized() {
        for (lo, hi) in [(1.0, 1.0), (1.0, 2.0), (0.7, 1.3)] {
            let env = envelope(lo, hi);
            let g = generalized_bound(&env)
                .unwrap()
                .report()
                .unwrap()
                .generalized_bound;
            let b = moment_bound(&env, 1).unwrap().value().unwrap();
            assert!((g - b).abs() < 1e-12);
        }
    }
}
