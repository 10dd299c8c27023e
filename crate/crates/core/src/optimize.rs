//! Global maximization of a smooth univariate objective on `[0, 1]`.
//!
//! A uniform grid locates the best bracket, golden-section search refines
//! it, and when a derivative is available a sign-change bisection on the
//! derivative polishes the maximizer to near machine precision. Ties among
//! grid points resolve to the smallest argument.

pub const DEFAULT_GRID: usize = 1024;
pub const DEFAULT_TOL: f64 = 1e-10;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum {
    pub arg: f64,
    pub value: f64,
}

fn tie_tolerance(best: f64) -> f64 {
    1e-12 * best.abs().max(1.0)
}

/// Maximizes `f` over `[0, 1]`. `df`, when given, must be the derivative of
/// `f`; it is only used for the final polish.
pub fn maximize_unit<F, G>(mut f: F, mut df: Option<G>, grid: usize, tol: f64) -> Maximum
where
    F: FnMut(f64) -> f64,
    G: FnMut(f64) -> f64,
{
    let grid = grid.max(3);
    let step = 1.0 / (grid - 1) as f64;
    let values: Vec<f64> = (0..grid).map(|i| f(i as f64 * step)).collect();
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tie = tie_tolerance(best);
    let idx = values
        .iter()
        .position(|&v| v >= best - tie)
        .expect("grid is non-empty");
    let on_grid = Maximum {
        arg: idx as f64 * step,
        value: values[idx],
    };

    let lo = idx.saturating_sub(1) as f64 * step;
    let hi = ((idx + 1).min(grid - 1)) as f64 * step;

    if let Some(df) = df.as_mut() {
        if let Some(root) = derivative_root(df, lo, hi) {
            let value = f(root);
            if value >= on_grid.value - tie {
                return Maximum { arg: root, value };
            }
        }
    }

    let refined = golden_section(&mut f, lo, hi, tol);
    if refined.value > on_grid.value + tie {
        refined
    } else {
        on_grid
    }
}

/// Bisects on the sign of `df` when it falls strictly from positive to
/// negative across `[lo, hi]`.
fn derivative_root<G: FnMut(f64) -> f64>(df: &mut G, lo: f64, hi: f64) -> Option<f64> {
    let (mut a, mut b) = (lo, hi);
    if !(df(a) > 0.0 && df(b) < 0.0) {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let d = df(mid);
        if d > 0.0 {
            a = mid;
        } else if d < 0.0 {
            b = mid;
        } else {
            return Some(mid);
        }
    }
    Some(0.5 * (a + b))
}

pub fn golden_section<F: FnMut(f64) -> f64>(f: &mut F, lo: f64, hi: f64, tol: f64) -> Maximum {
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let candidates = [(a, f(a)), (c, fc), (d, fd), (b, f(b))];
    let (arg, value) = candidates
        .into_iter()
        .fold((f64::NAN, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    Maximum { arg, value }
}
