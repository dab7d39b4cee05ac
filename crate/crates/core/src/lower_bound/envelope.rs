//! The two-constraint linear program behind finite question banks.
//!
//! Primal: `min sum t_i` subject to `sum a_i t_i >= 1`, `sum b_i t_i >= 1`,
//! `t >= 0`. Dual: `max y1 + y2` subject to `a_i y1 + b_i y2 <= 1`, `y >= 0`.
//!
//! The dual feasible region is the part of the positive quadrant under the
//! lower envelope of the lines `a_i y1 + b_i y2 = 1`. The envelope is built
//! with a monotone hull sweep after sorting by `b`, and the dual optimum is
//! found by walking its vertices; the primal plan is recovered from the (at
//! most two) lines active at the optimal vertex.

use serde::Serialize;

use crate::error::{Error, Result};

/// Levels whose separation falls below this value are dropped from the LP.
pub const MIN_SEPARATION: f64 = 1e-14;

/// Vertex of the lower envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopePoint {
    pub y1: f64,
    pub y2: f64,
    /// Input index of the line running from this vertex to the next one; the
    /// final vertex (on the `y1` axis) carries the line that ends there.
    pub line_index: usize,
}

/// Optimal primal/dual pair of the two-constraint LP.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpSolution {
    /// Common optimal value `sum t = y1 + y2`.
    pub value: f64,
    pub y1: f64,
    pub y2: f64,
    /// `(input index, t)` for the one or two levels in the primal plan,
    /// in input order.
    pub plan: Vec<(usize, f64)>,
}

fn intersect(l: (f64, f64), m: (f64, f64)) -> (f64, f64) {
    let det = l.0 * m.1 - m.0 * l.1;
    ((m.1 - l.1) / det, (l.0 - m.0) / det)
}

/// Vertices of the lower envelope of `{a_i y1 + b_i y2 = 1}` restricted to
/// the positive quadrant, from `(0, 1/b_max)` to `(1/a_max, 0)`.
///
/// Lines may be given in any order; lines that never touch the envelope do
/// not appear. `y1` strictly increases and `y2` strictly decreases along the
/// output.
pub fn lower_envelope(lines: &[(f64, f64)]) -> Result<Vec<EnvelopePoint>> {
    if let Some(&(a, b)) = lines.iter().find(|(a, b)| !(*a > 0.0 && *b > 0.0 && a.is_finite() && b.is_finite())) {
        return Err(Error::InvalidConstraint(format!("coefficients must be positive and finite, got ({a}, {b})")));
    }
    if lines.is_empty() {
        return Err(Error::InfeasibleSeparation);
    }
    let mut order: Vec<usize> = (0..lines.len()).collect();
    // lowest intercept 1/b first; among equal b the larger a dominates
    order.sort_by(|&i, &j| lines[j].1.total_cmp(&lines[i].1).then(lines[j].0.total_cmp(&lines[i].0)));

    // stack of (line index, y1 where it becomes active)
    let mut hull: Vec<(usize, f64)> = Vec::with_capacity(lines.len());
    for &i in &order {
        let cur = lines[i];
        if let Some(&(top, _)) = hull.last() {
            let t = lines[top];
            // a later line with a flatter or equal slope a/b never dips below the top
            if cur.0 * t.1 <= t.0 * cur.1 {
                continue;
            }
        }
        loop {
            let Some(&(top, start)) = hull.last() else {
                hull.push((i, 0.0));
                break;
            };
            let (y1, _) = intersect(lines[top], cur);
            if y1 <= start && hull.len() > 1 {
                hull.pop();
                continue;
            }
            hull.push((i, y1.max(0.0)));
            break;
        }
    }

    let first = hull[0].0;
    let mut points = vec![EnvelopePoint { y1: 0.0, y2: 1.0 / lines[first].1, line_index: first }];
    let mut active = first;
    for w in hull.windows(2) {
        let (prev, next) = (w[0].0, w[1].0);
        let (y1, y2) = intersect(lines[prev], lines[next]);
        // the envelope leaves the quadrant before reaching this breakpoint
        if y2 <= 0.0 {
            break;
        }
        points.push(EnvelopePoint { y1, y2, line_index: next });
        active = next;
    }
    points.push(EnvelopePoint { y1: 1.0 / lines[active].0, y2: 0.0, line_index: active });
    Ok(points)
}

/// Solves the LP for coefficients `a` (first constraint) and `b` (second).
///
/// The first vertex attaining the maximum of `y1 + y2` wins, so ties on a
/// flat envelope edge resolve to the vertex with the smallest `y1`. All
/// coefficients must be positive.
pub fn solve_two_constraint_lp(a: &[f64], b: &[f64]) -> Result<LpSolution> {
    if a.len() != b.len() {
        return Err(Error::InvalidConstraint(format!("length mismatch: {} vs {}", a.len(), b.len())));
    }
    let lines: Vec<(f64, f64)> = a.iter().copied().zip(b.iter().copied()).collect();
    let env = lower_envelope(&lines)?;
    let mut best = 0;
    for (k, pt) in env.iter().enumerate() {
        if pt.y1 + pt.y2 > env[best].y1 + env[best].y2 {
            best = k;
        }
    }
    let pt = env[best];
    let plan = if best == 0 {
        let i = pt.line_index;
        vec![(i, 1.0 / lines[i].1)]
    } else if best == env.len() - 1 {
        let i = pt.line_index;
        vec![(i, 1.0 / lines[i].0)]
    } else {
        let (i, j) = (env[best - 1].line_index, pt.line_index);
        let (li, lj) = (lines[i], lines[j]);
        let det = li.0 * lj.1 - lj.0 * li.1;
        let ti = ((lj.1 - lj.0) / det).max(0.0);
        let tj = ((li.0 - li.1) / det).max(0.0);
        let mut plan: Vec<(usize, f64)> = [(i, ti), (j, tj)].into_iter().filter(|&(_, t)| t > 0.0).collect();
        plan.sort_by_key(|&(k, _)| k);
        plan
    };
    Ok(LpSolution { value: pt.y1 + pt.y2, y1: pt.y1, y2: pt.y2, plan })
}
