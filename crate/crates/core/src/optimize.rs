//! One-dimensional root finding and maximization used by the solvers.

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Bisection for a root of `f` on `[lo, hi]` where `f(lo)` and `f(hi)` have
/// opposite signs. Stops once the bracket is narrower than `tol`, the
/// bracket can no longer be split in floating point, or `max_iter` halvings
/// have been performed. Returns the midpoint of the final bracket and whether
/// the tolerance was met.
pub fn bisect(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64, max_iter: usize) -> (f64, bool) {
    let lo_positive = f(lo) > 0.0;
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid <= lo || mid >= hi {
            return (mid, true);
        }
        let v = f(mid);
        if v == 0.0 {
            return (mid, true);
        }
        if (v > 0.0) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi), hi - lo <= tol)
}

/// Golden-section search for the maximum of a unimodal `f` on `[lo, hi]`.
/// Returns the final bracket.
pub fn golden_section_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
        if x1 >= x2 {
            break;
        }
    }
    (lo, hi)
}

/// Maximizer of a unimodal `f` on `[lo, hi]`: a coarse scan to locate the
/// peak cell, then golden section inside it.
pub fn maximize_unimodal(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> f64 {
    if hi <= lo {
        return lo;
    }
    const SCAN: usize = 64;
    let step = (hi - lo) / SCAN as f64;
    let at = |i: usize| if i == SCAN { hi } else { lo + step * i as f64 };
    let (best, _) =
        (0..=SCAN)
            .map(|i| (i, f(at(i))))
            .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let a = at(best.saturating_sub(1));
    let b = at((best + 1).min(SCAN));
    let (l, h) = golden_section_max(&f, a, b, tol);
    let mid = 0.5 * (l + h);
    // the scan endpoints may beat the interior when the peak sits on the boundary
    [mid, a, b, at(best)]
        .into_iter()
        .map(|x| (x, f(x)))
        .fold((mid, f64::NEG_INFINITY), |acc, c| if c.1 > acc.1 { c } else { acc })
        .0
}

/// `count` equispaced points covering `[lo, hi]` including both endpoints.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (count - 1) as f64;
            (0..count).map(|i| if i == count - 1 { hi } else { lo + step * i as f64 }).collect()
        }
    }
}
