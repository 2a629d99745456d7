//! Evaluation: optimal assignment, mean localization error, count-based false-alarm and
//! missed-detection rates, and OSPA.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Point;

/// OSPA cutoff distance in meters.
pub const DEFAULT_OSPA_CUTOFF: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matching {
    /// `(pred index, true index)`, sorted by prediction index.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_pred: Vec<usize>,
    pub unmatched_true: Vec<usize>,
    /// `sum min(cutoff, d)^2` over the pairs.
    pub cost: f64,
}

/// Minimum-cost assignment for a rows <= cols matrix (shortest augmenting path with
/// potentials). Returns the column assigned to each row.
fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return vec![];
    }
    let m = cost[0].len();
    debug_assert!(n <= m);
    // 1-based internals; column 0 is the virtual start
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    for j in 1..=m {
        if owner[j] > 0 {
            assign[owner[j] - 1] = j - 1;
        }
    }
    assign
}

/// Pairs `min(|pred|, |truth|)` points minimizing `sum min(cutoff, d)^2`.
pub fn optimal_assignment(pred: &[Point], truth: &[Point], cutoff: f64) -> Result<Matching> {
    if !(cutoff > 0.0) {
        return Err(Error::invalid("assignment cutoff must be positive"));
    }
    let cost_of = |p: &Point, t: &Point| p.distance(t).min(cutoff).powi(2);
    let transpose = pred.len() > truth.len();
    let (rows, cols) = if transpose { (truth, pred) } else { (pred, truth) };
    let matrix: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| cols.iter().map(|c| if transpose { cost_of(c, r) } else { cost_of(r, c) }).collect())
        .collect();
    let assign = hungarian(&matrix);
    let mut pairs: Vec<(usize, usize)> = assign
        .iter()
        .enumerate()
        .map(|(r, &c)| if transpose { (c, r) } else { (r, c) })
        .collect();
    pairs.sort_unstable();
    let cost = pairs.iter().map(|&(p, t)| cost_of(&pred[p], &truth[t])).sum();
    let unmatched_pred = (0..pred.len()).filter(|i| !pairs.iter().any(|p| p.0 == *i)).collect();
    let unmatched_true = (0..truth.len()).filter(|i| !pairs.iter().any(|p| p.1 == *i)).collect();
    Ok(Matching {
        pairs,
        unmatched_pred,
        unmatched_true,
        cost,
    })
}

/// Mean distance over optimally matched pairs; `None` when nothing can be matched.
pub fn mle(pred: &[Point], truth: &[Point]) -> Option<f64> {
    let m = optimal_assignment(pred, truth, f64::INFINITY).expect("infinite cutoff is valid");
    if m.pairs.is_empty() {
        return None;
    }
    let total: f64 = m.pairs.iter().map(|&(p, t)| pred[p].distance(&truth[t])).sum();
    Some(total / m.pairs.len() as f64)
}

/// Count-based rates: `far = max(0, M^ - M) / M^`, `mdr = max(0, M - M^) / M`.
pub fn far_mdr(m_hat: usize, m: usize) -> (f64, f64) {
    let far = if m_hat == 0 {
        0.0
    } else {
        m_hat.saturating_sub(m) as f64 / m_hat as f64
    };
    let mdr = if m == 0 {
        0.0
    } else {
        m.saturating_sub(m_hat) as f64 / m as f64
    };
    (far, mdr)
}

/// Distance-gated rates: a prediction only counts as a detection when its optimal
/// partner lies within `gate` meters. For sensitivity analysis.
pub fn far_mdr_gated(pred: &[Point], truth: &[Point], gate: f64) -> Result<(f64, f64)> {
    let m = optimal_assignment(pred, truth, f64::INFINITY)?;
    let hits = m
        .pairs
        .iter()
        .filter(|&&(p, t)| pred[p].distance(&truth[t]) <= gate)
        .count();
    let rate = |n: usize| if n == 0 { 0.0 } else { (n - hits) as f64 / n as f64 };
    Ok((rate(pred.len()), rate(truth.len())))
}

/// OSPA with order 2 and cutoff `g`.
///
/// `sqrt((sum over optimal pairs of min(g, d)^2 + g^2 (n - m)) / n)` with
/// `n = max(|pred|, |truth|)` and `m = min(...)`. Both empty gives 0.
pub fn ospa(pred: &[Point], truth: &[Point], g: f64) -> Result<f64> {
    if !(g > 0.0) {
        return Err(Error::invalid("OSPA cutoff must be positive"));
    }
    let n = pred.len().max(truth.len());
    if n == 0 {
        return Ok(0.0);
    }
    let m = pred.len().min(truth.len());
    let matching = optimal_assignment(pred, truth, g)?;
    let total = matching.cost + g * g * (n - m) as f64;
    Ok((total / n as f64).sqrt().min(g))
}

/// Metrics for one scenario (and interval, when sampling was involved).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEval {
    pub scenario_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interval_s: Option<f64>,
    pub m: usize,
    pub m_hat: usize,
    pub mle: Option<f64>,
    pub far: f64,
    pub mdr: f64,
    pub ospa: f64,
    pub merged: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ScenarioEval {
    pub fn evaluate(
        scenario_id: impl Into<String>,
        interval_s: Option<f64>,
        pred: &[Point],
        truth: &[Point],
        merged: usize,
        g: f64,
    ) -> Result<Self> {
        let (far, mdr) = far_mdr(pred.len(), truth.len());
        Ok(ScenarioEval {
            scenario_id: scenario_id.into(),
            interval_s,
            m: truth.len(),
            m_hat: pred.len(),
            mle: mle(pred, truth),
            far,
            mdr,
            ospa: ospa(pred, truth, g)?,
            merged,
            error: None,
        })
    }

    /// A scenario that could not be processed; excluded from aggregates.
    pub fn failed(scenario_id: impl Into<String>, interval_s: Option<f64>, m: usize, error: String) -> Self {
        ScenarioEval {
            scenario_id: scenario_id.into(),
            interval_s,
            m,
            m_hat: 0,
            mle: None,
            far: 0.0,
            mdr: 0.0,
            ospa: 0.0,
            merged: 0,
            error: Some(error),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Mean of per-scenario mLE over scenarios where it is defined.
    pub mle: Option<f64>,
    /// Micro-averaged rates, from summed counts.
    pub far: f64,
    pub mdr: f64,
    /// Macro-averaged rates, mean of per-scenario values.
    pub far_macro: f64,
    pub mdr_macro: f64,
    pub ospa: Option<f64>,
    pub total_true: usize,
    pub total_pred: usize,
    pub scenarios: usize,
    pub failed: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_scenario: Vec<ScenarioEval>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn aggregate(evals: &[ScenarioEval]) -> Result<EvalReport> {
    if evals.is_empty() {
        return Err(Error::Empty("nothing to aggregate"));
    }
    let ok: Vec<&ScenarioEval> = evals.iter().filter(|e| e.error.is_none()).collect();
    let total_true: usize = ok.iter().map(|e| e.m).sum();
    let total_pred: usize = ok.iter().map(|e| e.m_hat).sum();
    let excess: usize = ok.iter().map(|e| e.m_hat.saturating_sub(e.m)).sum();
    let missed: usize = ok.iter().map(|e| e.m.saturating_sub(e.m_hat)).sum();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(EvalReport {
        mle: mean(ok.iter().filter_map(|e| e.mle)),
        far: ratio(excess, total_pred),
        mdr: ratio(missed, total_true),
        far_macro: mean(ok.iter().map(|e| e.far)).unwrap_or(0.0),
        mdr_macro: mean(ok.iter().map(|e| e.mdr)).unwrap_or(0.0),
        ospa: mean(ok.iter().map(|e| e.ospa)),
        total_true,
        total_pred,
        scenarios: evals.len(),
        failed: evals.len() - ok.len(),
        per_scenario: evals.to_vec(),
    })
}

/// Aligned text table, one row per method.
pub fn format_table(rows: &[(String, &EvalReport)]) -> String {
    let header = ["Method", "mLE (m)", "FAR (%)", "MDR (%)", "OSPA (m)"];
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3}"));
    let body: Vec<[String; 5]> = rows
        .iter()
        .map(|(name, r)| {
            [
                name.clone(),
                opt(r.mle),
                format!("{:.3}", 100.0 * r.far),
                format!("{:.3}", 100.0 * r.mdr),
                opt(r.ospa),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[&str]| {
        for (k, (cell, w)) in cells.iter().zip(widths).enumerate() {
            if k == 0 {
                let _ = write!(out, "{cell:<w$}");
            } else {
                let _ = write!(out, "  {cell:>w$}");
            }
        }
        out.push('\n');
    };
    line(&mut out, &header);
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    line(&mut out, &rule.iter().map(String::as_str).collect::<Vec<_>>());
    for row in &body {
        line(&mut out, &row.iter().map(String::as_str).collect::<Vec<_>>());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(v: &[(f64, f64)]) -> Vec<Point> {
        v.iter().map(|&(x, y)| Point::new(x, y)).collect()
    }

    #[test]
    fn identity_matching() {
        let a = pts(&[(0.0, 0.0), (5.0, 1.0), (9.0, 9.0)]);
        let m = optimal_assignment(&a, &a, 20.0).unwrap();
        assert_eq!(m.pairs, vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(m.cost, 0.0);
        assert!(m.unmatched_pred.is_empty() && m.unmatched_true.is_empty());
    }

    #[test]
    fn crossing_assignment_when_cheaper() {
        let truth = pts(&[(0.0, 0.0), (10.0, 0.0)]);
        let swapped = pts(&[(10.0, 0.5), (0.0, 0.5)]);
        assert_eq!(optimal_assignment(&swapped, &truth, 20.0).unwrap().pairs, vec![(0, 1), (1, 0)]);
        let straight = pts(&[(0.5, 0.0), (9.5, 0.0)]);
        assert_eq!(optimal_assignment(&straight, &truth, 20.0).unwrap().pairs, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn rectangular_and_empty() {
        let truth = pts(&[(0.0, 0.0), (10.0, 10.0), (3.0, 3.0)]);
        let pred = pts(&[(9.0, 9.0)]);
        let m = optimal_assignment(&pred, &truth, f64::INFINITY).unwrap();
        assert_eq!(m.pairs, vec![(0, 1)]);
        assert_eq!(m.unmatched_true, vec![0, 2]);
        let m = optimal_assignment(&truth, &pred, f64::INFINITY).unwrap();
        assert_eq!(m.pairs, vec![(1, 0)]);
        assert_eq!(m.unmatched_pred, vec![0, 2]);
        assert_eq!(optimal_assignment(&[], &truth, 1.0).unwrap().pairs, vec![]);
        assert!(optimal_assignment(&[], &truth, 0.0).is_err());
    }

    #[test]
    fn mle_examples() {
        assert_eq!(mle(&pts(&[(3.0, 4.0)]), &pts(&[(0.0, 0.0)])), Some(5.0));
        let a = pts(&[(1.0, 2.0), (7.0, 7.0)]);
        assert_eq!(mle(&a, &a), Some(0.0));
        assert_eq!(mle(&[], &a), None);
    }

    #[test]
    fn far_mdr_examples() {
        let (far, mdr) = far_mdr(6, 5);
        assert!((far - 1.0 / 6.0).abs() < 1e-15 && mdr == 0.0);
        assert_eq!(far_mdr(4, 5), (0.0, 0.2));
        assert_eq!(far_mdr(5, 5), (0.0, 0.0));
        assert_eq!(far_mdr(0, 3), (0.0, 1.0));
    }

    #[test]
    fn gated_rates() {
        let truth = pts(&[(0.0, 0.0), (50.0, 50.0)]);
        let pred = pts(&[(0.5, 0.0), (90.0, 90.0)]);
        assert_eq!(far_mdr_gated(&pred, &truth, 20.0).unwrap(), (0.5, 0.5));
        assert_eq!(far_mdr(pred.len(), truth.len()), (0.0, 0.0));
    }

    #[test]
    fn ospa_examples() {
        let a = pts(&[(1.0, 1.0), (4.0, 8.0)]);
        assert_eq!(ospa(&a, &a, 20.0).unwrap(), 0.0);
        let v = ospa(&pts(&[(0.0, 0.0)]), &pts(&[(0.0, 0.0), (10.0, 10.0)]), 20.0).unwrap();
        assert!((v - 200f64.sqrt()).abs() < 1e-12);
        assert!((v - 14.1421).abs() < 1e-4);
        assert_eq!(ospa(&pts(&[(0.0, 0.0)]), &pts(&[(50.0, 0.0)]), 20.0).unwrap(), 20.0);
        assert_eq!(ospa(&[], &[], 20.0).unwrap(), 0.0);
        assert_eq!(ospa(&[], &a, 20.0).unwrap(), 20.0);
        assert!(ospa(&a, &a, 0.0).is_err());
    }

    fn scenario(id: &str, m_hat: usize, m: usize) -> ScenarioEval {
        let truth: Vec<Point> = (0..m).map(|k| Point::new(10.0 * k as f64, 0.0)).collect();
        let pred: Vec<Point> = (0..m_hat).map(|k| Point::new(10.0 * k as f64, 1.0)).collect();
        ScenarioEval::evaluate(id, None, &pred, &truth, 0, 20.0).unwrap()
    }

    #[test]
    fn aggregate_single_is_itself() {
        let e = scenario("a", 3, 3);
        let r = aggregate(std::slice::from_ref(&e)).unwrap();
        assert_eq!(r.mle, e.mle);
        assert_eq!(r.ospa, Some(e.ospa));
        assert_eq!((r.far, r.mdr), (e.far, e.mdr));
        assert_eq!((r.far_macro, r.mdr_macro), (e.far, e.mdr));
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn micro_and_macro_averages() {
        let r = aggregate(&[scenario("a", 6, 5), scenario("b", 5, 5)]).unwrap();
        assert!((r.far - 1.0 / 11.0).abs() < 1e-15);
        assert!((r.far_macro - 1.0 / 12.0).abs() < 1e-15);
        assert_ne!(r.far, r.far_macro);

        // unbalanced: a big scenario with misses and a small perfect one
        let r = aggregate(&[scenario("a", 3, 7), scenario("b", 1, 1)]).unwrap();
        assert!((r.mdr - 4.0 / 8.0).abs() < 1e-15);
        assert!((r.mdr_macro - (4.0 / 7.0) / 2.0).abs() < 1e-15);

        let failed = ScenarioEval::failed("c", None, 3, "boom".into());
        let r = aggregate(&[scenario("a", 2, 2), failed]).unwrap();
        assert_eq!((r.scenarios, r.failed, r.total_true), (2, 1, 2));
    }

    #[test]
    fn table_layout() {
        let r = aggregate(&[scenario("a", 2, 3)]).unwrap();
        let t = format_table(&[("oracle+center-of-mass".into(), &r)]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("Method"));
        assert!(lines[2].contains("33.333"));
        assert_eq!(lines[0].len(), lines[2].len());
    }

    fn permutations(n: usize, k: usize) -> Vec<Vec<usize>> {
        // all injective maps from 0..k into 0..n
        if k == 0 {
            return vec![vec![]];
        }
        let mut out = vec![];
        for head in permutations(n, k - 1) {
            for j in 0..n {
                if !head.contains(&j) {
                    let mut v = head.clone();
                    v.push(j);
                    out.push(v);
                }
            }
        }
        out
    }

    fn brute_cost(pred: &[Point], truth: &[Point], c: f64) -> f64 {
        let (small, big) = if pred.len() <= truth.len() { (pred, truth) } else { (truth, pred) };
        permutations(big.len(), small.len())
            .iter()
            .map(|perm| {
                perm.iter()
                    .enumerate()
                    .map(|(i, &j)| small[i].distance(&big[j]).min(c).powi(2))
                    .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn point_set(max: usize) -> impl Strategy<Value = Vec<Point>> {
        proptest::collection::vec((0.0f64..60.0, 0.0f64..60.0), 0..=max)
            .prop_map(|v| v.into_iter().map(|(x, y)| Point::new(x, y)).collect())
    }

    proptest! {
        #[test]
        fn assignment_matches_brute_force(a in point_set(6), b in point_set(6), c in 1.0f64..80.0) {
            let m = optimal_assignment(&a, &b, c).unwrap();
            prop_assert_eq!(m.pairs.len(), a.len().min(b.len()));
            let want = if a.is_empty() || b.is_empty() { 0.0 } else { brute_cost(&a, &b, c) };
            prop_assert!((m.cost - want).abs() < 1e-9);
        }

        #[test]
        fn ospa_is_symmetric_and_bounded(a in point_set(6), b in point_set(6)) {
            let ab = ospa(&a, &b, 20.0).unwrap();
            let ba = ospa(&b, &a, 20.0).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!((0.0..=20.0).contains(&ab));
            prop_assert_eq!(ospa(&a, &a, 20.0).unwrap(), 0.0);
        }

        #[test]
        fn ospa_triangle_inequality(
            abc in (0usize..=4).prop_flat_map(|n| {
                let set = move || proptest::collection::vec((0.0f64..60.0, 0.0f64..60.0), n)
                    .prop_map(|v| v.into_iter().map(|(x, y)| Point::new(x, y)).collect::<Vec<_>>());
                (set(), set(), set())
            }),
        ) {
            let (a, b, c) = abc;
            let ab = ospa(&a, &b, 20.0).unwrap();
            let bc = ospa(&b, &c, 20.0).unwrap();
            let ac = ospa(&a, &c, 20.0).unwrap();
            prop_assert!(ac <= ab + bc + 1e-9);
        }

        #[test]
        fn ospa_cardinality_only(a in point_set(6), extra in point_set(6)) {
            prop_assume!(!a.is_empty() || !extra.is_empty());
            let mut b = a.clone();
            b.extend(extra.iter().copied());
            let (n, m) = (b.len() as f64, a.len() as f64);
            let v = ospa(&a, &b, 20.0).unwrap();
            prop_assert!((v - 20.0 * ((n - m) / n).sqrt()).abs() < 1e-9);
        }

        #[test]
        fn mle_is_permutation_invariant(a in point_set(6), b in point_set(6), rot in 0usize..6) {
            let mut a2 = a.clone();
            let k = if a2.is_empty() { 0 } else { rot % a2.len() };
            a2.rotate_left(k);
            let mut b2 = b.clone();
            b2.reverse();
            match (mle(&a, &b), mle(&a2, &b2)) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-9),
                (x, y) => prop_assert_eq!(x, y),
            }
        }

        #[test]
        fn at_most_one_rate_nonzero(m_hat in 0usize..20, m in 1usize..20) {
            let (far, mdr) = far_mdr(m_hat, m);
            prop_assert!(far == 0.0 || mdr == 0.0);
            prop_assert!((0.0..=1.0).contains(&far) && (0.0..=1.0).contains(&mdr));
        }
    }
}
