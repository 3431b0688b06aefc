//! Adaptive Simpson quadrature with explicit panel boundaries.
//!
//! Integrands built from mixed distributions have kinks and jumps at atom
//! locations, delay horizons and grid knots. Callers pass those points as
//! breakpoints; every breakpoint becomes a panel boundary so the adaptive
//! recursion only ever sees smooth pieces.

/// Result of a quadrature call: the value and an error estimate from the
/// Richardson extrapolation of the last accepted subdivisions.
#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub error_estimate: f64,
}

const MAX_DEPTH: u32 = 48;

fn simpson(a: f64, fa: f64, b: f64, fb: f64, fm: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    err_acc: &mut f64,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, fa, m, fm, flm);
    let right = simpson(m, fm, b, fb, frm);
    let delta = left + right - whole;
    if depth >= MAX_DEPTH || delta.abs() <= 15.0 * tol || (b - a) < 1e-14 * (1.0 + m.abs()) {
        *err_acc += delta.abs() / 15.0;
        return left + right + delta / 15.0;
    }
    adaptive(f, a, fa, m, fm, flm, left, 0.5 * tol, depth + 1, err_acc)
        + adaptive(f, m, fm, b, fb, frm, right, 0.5 * tol, depth + 1, err_acc)
}

fn integrate_panel(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, err_acc: &mut f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, fa, b, fb, fm);
    adaptive(f, a, fa, b, fb, fm, whole, tol, 0, err_acc)
}

/// Integrate `f` over `[a, b]` to absolute tolerance `tol`.
///
/// `breakpoints` inside `(a, b)` split the domain into panels that are
/// integrated independently, each with a proportional share of `tol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, breakpoints: &[f64]) -> QuadResult {
    if b <= a {
        return QuadResult {
            value: 0.0,
            error_estimate: 0.0,
        };
    }
    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&x| x > a && x < b && x.is_finite())
        .collect();
    cuts.push(a);
    cuts.push(b);
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup();

    let total = b - a;
    let fref = &f as &dyn Fn(f64) -> f64;
    let mut value = 0.0;
    let mut err = 0.0;
    for w in cuts.windows(2) {
        let share = tol * ((w[1] - w[0]) / total).max(1e-3);
        value += integrate_panel(fref, w[0], w[1], share, &mut err);
    }
    QuadResult {
        value,
        error_estimate: err,
    }
}

/// Piecewise-linear table of a monotone function, with explicit jumps.
///
/// Used to invert cumulative quantities (sub-distribution functions of the
/// common part, residual components) where atoms create flat steps in the
/// inverse. `lo[i]` and `hi[i]` are the values just before and at `xs[i]`;
/// `hi[i] > lo[i]` records a jump at `xs[i]`.
#[derive(Debug, Clone)]
pub struct MonotoneTable {
    pub xs: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl MonotoneTable {
    pub fn total(&self) -> f64 {
        *self.hi.last().unwrap_or(&0.0)
    }

    /// Smallest `x` with `value(x) >= v`, resolving jumps to their location.
    pub fn invert(&self, v: f64) -> f64 {
        let n = self.xs.len();
        if n == 0 || v <= 0.0 {
            return self.xs.first().copied().unwrap_or(0.0);
        }
        let v = v.min(self.total());
        // binary search for first node with hi >= v
        let mut lo = 0usize;
        let mut hi = n - 1;
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.hi[mid] >= v {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        let i = lo;
        if v >= self.lo[i] || i == 0 {
            // inside the jump at xs[i] (or at/before the very first node)
            return self.xs[i];
        }
        // linear segment between xs[i-1] (value hi[i-1]) and xs[i] (value lo[i])
        let (x0, x1) = (self.xs[i - 1], self.xs[i]);
        let (v0, v1) = (self.hi[i - 1], self.lo[i]);
        if v1 <= v0 {
            return x1;
        }
        x0 + (x1 - x0) * (v - v0) / (v1 - v0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        // Simpson is exact on cubics.
        let r = integrate(|x| x * x * x - 2.0 * x + 1.0, 0.0, 2.0, 1e-10, &[]);
        assert!((r.value - (4.0 - 4.0 + 2.0)).abs() < 1e-12);
    }

    #[test]
    fn exponential_tail() {
        let r = integrate(|x| (-x).exp(), 0.0, 40.0, 1e-10, &[]);
        assert!((r.value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn breakpoint_kink() {
        // |x - 1| has a kink; breakpoint makes the panels smooth.
        let r = integrate(|x| (x - 1.0).abs(), 0.0, 2.0, 1e-12, &[1.0]);
        assert!((r.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn monotone_table_inverts_jumps() {
        let t = MonotoneTable {
            xs: vec![0.0, 1.0, 2.0],
            lo: vec![0.0, 0.4, 0.9],
            hi: vec![0.0, 0.7, 0.9],
        };
        assert!((t.invert(0.2) - 0.5).abs() < 1e-12);
        assert_eq!(t.invert(0.55), 1.0); // inside the jump
        assert!((t.invert(0.8) - 1.5).abs() < 1e-12);
    }
}
