//! Maximal box: the closed hyperrectangle containing the most positive points
//! while containing at most `budget` negative points.
//!
//! The solver is a best-first branch and bound. A node is identified with its
//! tentative box, the bounding box of the positives still admissible at that
//! node; since every branching restriction is an axis-aligned half-space, the
//! positives inside the tentative box are exactly the admissible ones, so the
//! node bound (the admissible count) is attained whenever the tentative box is
//! feasible.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MaxBoxError {
    #[error("no positive points")]
    NoPositives,
    #[error("point {index} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("points must have at least one dimension")]
    ZeroDimension,
    #[error("negative budget {0}")]
    NegativeBudget(i64),
    #[error("no box with at most {0} negatives contains any positive point")]
    Infeasible(usize),
    #[error("brute force limited to {max_points} positives and {max_dim} dimensions, got {points} and {dim}")]
    OracleLimit {
        max_points: usize,
        max_dim: usize,
        points: usize,
        dim: usize,
    },
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("malformed points file: {0}")]
    Malformed(String),
}

/// Convert a user-supplied budget, rejecting negative values.
pub fn budget_from_i64(budget: i64) -> Result<usize, MaxBoxError> {
    usize::try_from(budget).map_err(|_| MaxBoxError::NegativeBudget(budget))
}

/// Closed hyperrectangle `{x : lower <= x <= upper}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperBox {
    pub dimension_names: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl HyperBox {
    pub fn new(
        dimension_names: Vec<String>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self, MaxBoxError> {
        if lower.len() != upper.len() || lower.len() != dimension_names.len() {
            return Err(MaxBoxError::InvalidBox(
                "bounds and names must have equal length".into(),
            ));
        }
        if let Some(k) = (0..lower.len()).find(|&k| !(lower[k] <= upper[k])) {
            return Err(MaxBoxError::InvalidBox(format!(
                "lower bound exceeds upper bound in `{}`",
                dimension_names[k]
            )));
        }
        Ok(Self {
            dimension_names,
            lower,
            upper,
        })
    }

    /// Componentwise bounding box of a nonempty point set.
    pub fn bounding(dimension_names: Vec<String>, points: &[Vec<f64>]) -> Option<Self> {
        let first = points.first()?;
        let mut lower = first.clone();
        let mut upper = first.clone();
        for p in &points[1..] {
            for k in 0..lower.len() {
                lower[k] = lower[k].min(p[k]);
                upper[k] = upper[k].max(p[k]);
            }
        }
        Some(Self {
            dimension_names,
            lower,
            upper,
        })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Closed-interval membership in every coordinate.
    pub fn contains(&self, x: &[f64]) -> bool {
        box_contains(&self.lower, &self.upper, x)
    }

    pub fn count_inside(&self, points: &[Vec<f64>]) -> usize {
        points.iter().filter(|p| self.contains(p)).count()
    }
}

fn box_contains(lower: &[f64], upper: &[f64], x: &[f64]) -> bool {
    debug_assert_eq!(lower.len(), x.len());
    x.iter()
        .zip(lower.iter().zip(upper))
        .all(|(&v, (&l, &u))| l <= v && v <= u)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxResult {
    pub bx: HyperBox,
    pub cardinality: usize,
    pub negatives_inside: usize,
    pub nodes_explored: usize,
    pub proven_optimal: bool,
}

/// JSON form of a solved box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BoxRecord {
    pub dimension_names: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub cardinality: usize,
}

impl From<&BoxResult> for BoxRecord {
    fn from(r: &BoxResult) -> Self {
        Self {
            dimension_names: r.bx.dimension_names.clone(),
            lower: r.bx.lower.clone(),
            upper: r.bx.upper.clone(),
            cardinality: r.cardinality,
        }
    }
}

impl BoxRecord {
    pub fn to_box(&self) -> Result<HyperBox, MaxBoxError> {
        HyperBox::new(
            self.dimension_names.clone(),
            self.lower.clone(),
            self.upper.clone(),
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct MaxBoxOptions {
    /// Names for the box dimensions; defaults to `x1..xp`.
    pub dimension_names: Option<Vec<String>>,
    /// Stop after this many nodes; the result is then not proven optimal.
    pub node_limit: Option<usize>,
}

fn check_dims(positives: &[Vec<f64>], negatives: &[Vec<f64>]) -> Result<usize, MaxBoxError> {
    let p = positives.first().ok_or(MaxBoxError::NoPositives)?.len();
    if p == 0 {
        return Err(MaxBoxError::ZeroDimension);
    }
    for (index, x) in positives.iter().chain(negatives).enumerate() {
        if x.len() != p {
            return Err(MaxBoxError::DimensionMismatch {
                index,
                expected: p,
                found: x.len(),
            });
        }
    }
    Ok(p)
}

fn default_names(p: usize, names: Option<&Vec<String>>) -> Vec<String> {
    match names {
        Some(n) => n.clone(),
        None => (1..=p).map(|k| format!("x{k}")).collect(),
    }
}

/// Lexicographic order on the concatenation `(lower, upper)`.
fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

struct Incumbent {
    lower: Vec<f64>,
    upper: Vec<f64>,
    cardinality: usize,
}

impl Incumbent {
    fn improves(&self, cardinality: usize, lower: &[f64], upper: &[f64]) -> bool {
        match cardinality.cmp(&self.cardinality) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => match lex_cmp(lower, &self.lower) {
                Ordering::Less => true,
                Ordering::Greater => false,
                Ordering::Equal => lex_cmp(upper, &self.upper) == Ordering::Less,
            },
        }
    }

    /// Every box in a subtree lies inside the node's tentative box, so its
    /// lower corner dominates the node's lower corner componentwise.
    fn dominates_subtree(&self, bound: usize, lower: &[f64]) -> bool {
        bound < self.cardinality
            || (bound == self.cardinality && lex_cmp(lower, &self.lower) == Ordering::Greater)
    }
}

struct Node {
    bound: usize,
    id: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Negatives already allowed inside, each consuming one unit of budget.
    forced: Vec<u32>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.bound == other.bound && self.id == other.id
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .cmp(&other.bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}

fn node_key(lower: &[f64], upper: &[f64], forced: &[u32]) -> Vec<u64> {
    lower
        .iter()
        .chain(upper)
        .map(|v| v.to_bits())
        .chain(forced.iter().map(|&f| f as u64 | 1 << 63))
        .collect()
}

/// Bounding box and count of the points in `idx` selected by `keep`.
fn restricted_bbox(
    positives: &[Vec<f64>],
    idx: &[u32],
    p: usize,
    keep: impl Fn(&[f64]) -> bool,
) -> Option<(Vec<f64>, Vec<f64>, usize)> {
    let mut lower = vec![f64::INFINITY; p];
    let mut upper = vec![f64::NEG_INFINITY; p];
    let mut count = 0;
    for &i in idx {
        let x = &positives[i as usize];
        if keep(x) {
            count += 1;
            for k in 0..p {
                lower[k] = lower[k].min(x[k]);
                upper[k] = upper[k].max(x[k]);
            }
        }
    }
    (count > 0).then_some((lower, upper, count))
}

/// Normalized distance from `v` to the nearest face of the box.
fn interior_margin(lower: &[f64], upper: &[f64], v: &[f64]) -> f64 {
    (0..v.len())
        .map(|k| {
            let width = upper[k] - lower[k];
            if width > 0.0 {
                (v[k] - lower[k]).min(upper[k] - v[k]) / width
            } else {
                0.0
            }
        })
        .fold(f64::INFINITY, f64::min)
}

/// Branch-and-bound solver for the maximal box with a hard negative budget.
pub fn maximal_box(
    positives: &[Vec<f64>],
    negatives: &[Vec<f64>],
    budget: usize,
) -> Result<BoxResult, MaxBoxError> {
    maximal_box_with(positives, negatives, budget, &MaxBoxOptions::default())
}

pub fn maximal_box_with(
    positives: &[Vec<f64>],
    negatives: &[Vec<f64>],
    budget: usize,
    opts: &MaxBoxOptions,
) -> Result<BoxResult, MaxBoxError> {
    let p = check_dims(positives, negatives)?;
    let names = default_names(p, opts.dimension_names.as_ref());
    let all: Vec<u32> = (0..positives.len() as u32).collect();
    let (lower, upper, count) =
        restricted_bbox(positives, &all, p, |_| true).expect("positives nonempty");

    let mut heap = BinaryHeap::new();
    let mut seen = HashSet::new();
    seen.insert(node_key(&lower, &upper, &[]));
    heap.push(Node {
        bound: count,
        id: 0,
        lower,
        upper,
        forced: Vec::new(),
    });
    let mut next_id = 1;
    let mut best: Option<Incumbent> = None;
    let mut explored = 0;
    let mut exhausted = true;

    while let Some(node) = heap.pop() {
        if best
            .as_ref()
            .is_some_and(|b| b.dominates_subtree(node.bound, &node.lower))
        {
            continue;
        }
        if opts.node_limit.is_some_and(|lim| explored >= lim) {
            exhausted = false;
            break;
        }
        explored += 1;

        let inside: Vec<u32> = (0..negatives.len() as u32)
            .filter(|&j| box_contains(&node.lower, &node.upper, &negatives[j as usize]))
            .collect();
        if inside.len() <= budget {
            let better = best
                .as_ref()
                .is_none_or(|b| b.improves(node.bound, &node.lower, &node.upper));
            if better {
                best = Some(Incumbent {
                    lower: node.lower,
                    upper: node.upper,
                    cardinality: node.bound,
                });
            }
            continue;
        }

        // Too many negatives: branch on the most interior one not yet allowed in.
        let branch_on = inside
            .iter()
            .copied()
            .filter(|j| node.forced.binary_search(j).is_err())
            .map(|j| {
                (
                    j,
                    interior_margin(&node.lower, &node.upper, &negatives[j as usize]),
                )
            })
            .fold(None, |acc: Option<(u32, f64)>, (j, m)| match acc {
                Some((_, best_m)) if best_m >= m => acc,
                _ => Some((j, m)),
            })
            .map(|(j, _)| j)
            .expect("more negatives inside than budget implies an unforced one");
        let v = &negatives[branch_on as usize];

        let admissible: Vec<u32> = (0..positives.len() as u32)
            .filter(|&i| box_contains(&node.lower, &node.upper, &positives[i as usize]))
            .collect();

        let mut children = Vec::with_capacity(2 * p + 1);
        for k in 0..p {
            let below = restricted_bbox(positives, &admissible, p, |x| x[k] < v[k]);
            let above = restricted_bbox(positives, &admissible, p, |x| x[k] > v[k]);
            for (lo, hi, bound) in below.into_iter().chain(above) {
                children.push((lo, hi, bound, node.forced.clone()));
            }
        }
        if node.forced.len() < budget {
            let mut forced = node.forced.clone();
            let pos = forced.binary_search(&branch_on).unwrap_err();
            forced.insert(pos, branch_on);
            children.push((node.lower.clone(), node.upper.clone(), node.bound, forced));
        }

        for (lower, upper, bound, forced) in children {
            if best
                .as_ref()
                .is_some_and(|b| b.dominates_subtree(bound, &lower))
            {
                continue;
            }
            if !seen.insert(node_key(&lower, &upper, &forced)) {
                continue;
            }
            heap.push(Node {
                bound,
                id: next_id,
                lower,
                upper,
                forced,
            });
            next_id += 1;
        }
    }

    let best = best.ok_or(MaxBoxError::Infeasible(budget))?;
    let bx = HyperBox {
        dimension_names: names,
        lower: best.lower,
        upper: best.upper,
    };
    Ok(BoxResult {
        cardinality: bx.count_inside(positives),
        negatives_inside: bx.count_inside(negatives),
        bx,
        nodes_explored: explored,
        proven_optimal: exhausted,
    })
}

pub const ORACLE_MAX_POINTS: usize = 60;
pub const ORACLE_MAX_DIM: usize = 3;

/// Exhaustive search over boxes whose bounds are positive-point coordinates.
///
/// Every lower/upper pair is enumerated in all but the last dimension. In the
/// last dimension, for each lower bound only the widest upper bound that
/// keeps the negative count within budget is evaluated; narrower ones contain
/// a subset of its positives.
pub fn brute_force_max_box(
    positives: &[Vec<f64>],
    negatives: &[Vec<f64>],
    budget: usize,
) -> Result<BoxResult, MaxBoxError> {
    let p = check_dims(positives, negatives)?;
    if positives.len() > ORACLE_MAX_POINTS || p > ORACLE_MAX_DIM {
        return Err(MaxBoxError::OracleLimit {
            max_points: ORACLE_MAX_POINTS,
            max_dim: ORACLE_MAX_DIM,
            points: positives.len(),
            dim: p,
        });
    }
    let candidates: Vec<Vec<f64>> = (0..p)
        .map(|k| {
            let mut c: Vec<f64> = positives.iter().map(|x| x[k]).collect();
            c.sort_by(f64::total_cmp);
            c.dedup();
            c
        })
        .collect();

    let last = p - 1;
    let mut pos: Vec<&[f64]> = positives.iter().map(Vec::as_slice).collect();
    let mut neg: Vec<&[f64]> = negatives.iter().map(Vec::as_slice).collect();
    pos.sort_by(|a, b| a[last].total_cmp(&b[last]));
    neg.sort_by(|a, b| a[last].total_cmp(&b[last]));

    let mut search = BruteSearch {
        candidates: &candidates,
        budget,
        lower: vec![0.0; p],
        upper: vec![0.0; p],
        best: None,
        evaluated: 0,
    };
    search.recurse(0, &pos, &neg);

    let best = search.best.ok_or(MaxBoxError::Infeasible(budget))?;
    let inside: Vec<Vec<f64>> = positives
        .iter()
        .filter(|x| box_contains(&best.lower, &best.upper, x))
        .cloned()
        .collect();
    let bx = HyperBox::bounding(default_names(p, None), &inside).expect("nonempty optimum");
    Ok(BoxResult {
        cardinality: inside.len(),
        negatives_inside: bx.count_inside(negatives),
        bx,
        nodes_explored: search.evaluated,
        proven_optimal: true,
    })
}

struct BruteSearch<'a> {
    candidates: &'a [Vec<f64>],
    budget: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    best: Option<Incumbent>,
    evaluated: usize,
}

impl BruteSearch<'_> {
    fn offer(&mut self, cardinality: usize) {
        self.evaluated += 1;
        if cardinality == 0 {
            return;
        }
        let better = self
            .best
            .as_ref()
            .is_none_or(|b| b.improves(cardinality, &self.lower, &self.upper));
        if better {
            self.best = Some(Incumbent {
                lower: self.lower.clone(),
                upper: self.upper.clone(),
                cardinality,
            });
        }
    }

    fn recurse(&mut self, k: usize, pos: &[&[f64]], neg: &[&[f64]]) {
        let cands = &self.candidates[k];
        let last = k + 1 == self.lower.len();
        for (a, &lo) in cands.iter().enumerate() {
            if last {
                // Negatives at or above `lo`, sorted; the (budget+1)-th caps `hi`.
                let cap = neg
                    .iter()
                    .map(|x| x[k])
                    .filter(|&v| v >= lo)
                    .nth(self.budget);
                let Some(hi) = cands[a..]
                    .iter()
                    .copied()
                    .take_while(|&h| cap.is_none_or(|c| h < c))
                    .last()
                else {
                    continue;
                };
                self.lower[k] = lo;
                self.upper[k] = hi;
                let count = pos.iter().filter(|x| lo <= x[k] && x[k] <= hi).count();
                self.offer(count);
            } else {
                for &hi in &cands[a..] {
                    let p2: Vec<&[f64]> = pos
                        .iter()
                        .copied()
                        .filter(|x| lo <= x[k] && x[k] <= hi)
                        .collect();
                    if p2.is_empty() {
                        continue;
                    }
                    let n2: Vec<&[f64]> = neg
                        .iter()
                        .copied()
                        .filter(|x| lo <= x[k] && x[k] <= hi)
                        .collect();
                    self.lower[k] = lo;
                    self.upper[k] = hi;
                    self.recurse(k + 1, &p2, &n2);
                }
            }
        }
    }
}

/// Labeled points read from CSV: every column other than `label`, `id` and
/// `arm` is a dimension; `label` is 1 for positive and 0 for negative.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPoints {
    pub dimension_names: Vec<String>,
    pub positives: Vec<Vec<f64>>,
    pub negatives: Vec<Vec<f64>>,
}

pub fn read_points_csv<R: io::Read>(reader: R) -> Result<LabeledPoints, MaxBoxError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| MaxBoxError::Malformed(e.to_string()))?
        .clone();
    let label_col = headers
        .iter()
        .position(|h| h == "label")
        .ok_or_else(|| MaxBoxError::Malformed("missing `label` column".into()))?;
    let dims: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| !matches!(*h, "label" | "id" | "arm"))
        .map(|(i, h)| (i, h.to_string()))
        .collect();
    let mut out = LabeledPoints {
        dimension_names: dims.iter().map(|(_, n)| n.clone()).collect(),
        positives: Vec::new(),
        negatives: Vec::new(),
    };
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| MaxBoxError::Malformed(e.to_string()))?;
        let x = dims
            .iter()
            .map(|(i, n)| {
                rec.get(*i)
                    .unwrap_or("")
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| MaxBoxError::Malformed(format!("row {}: bad `{n}`", row + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        match rec.get(label_col).map(str::trim) {
            Some("1") => out.positives.push(x),
            Some("0") => out.negatives.push(x),
            other => {
                return Err(MaxBoxError::Malformed(format!(
                    "row {}: label must be 0 or 1, got {:?}",
                    row + 1,
                    other.unwrap_or("")
                )))
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(v: &[&[f64]]) -> Vec<Vec<f64>> {
        v.iter().map(|x| x.to_vec()).collect()
    }

    #[test]
    fn diagonal_with_blocking_negative() {
        let pos = pts(&[&[0.0, 0.0], &[1.0, 1.0], &[2.0, 2.0]]);
        let neg = pts(&[&[1.5, 0.5]]);
        let r = maximal_box(&pos, &neg, 0).unwrap();
        assert_eq!(r.cardinality, 2);
        assert_eq!(r.negatives_inside, 0);
        assert!(r.proven_optimal);
        assert_eq!(brute_force_max_box(&pos, &neg, 0).unwrap().cardinality, 2);

        let r1 = maximal_box(&pos, &neg, 1).unwrap();
        assert_eq!(r1.cardinality, 3);
        assert_eq!(r1.negatives_inside, 1);
    }

    #[test]
    fn no_negatives_gives_bounding_box() {
        let pos = pts(&[&[3.0, -1.0], &[1.0, 4.0], &[2.0, 0.0]]);
        for c in 0..3 {
            let r = maximal_box(&pos, &[], c).unwrap();
            assert_eq!(r.cardinality, 3);
            assert_eq!(r.bx.lower, vec![1.0, -1.0]);
            assert_eq!(r.bx.upper, vec![3.0, 4.0]);
        }
    }

    #[test]
    fn one_dimensional_oracle_cases() {
        let pos = pts(&[&[1.0], &[2.0], &[3.0]]);
        let r = brute_force_max_box(&pos, &pts(&[&[2.5]]), 0).unwrap();
        assert_eq!(r.cardinality, 2);
        assert_eq!((r.bx.lower[0], r.bx.upper[0]), (1.0, 2.0));
        let r = maximal_box(&pos, &pts(&[&[2.5]]), 0).unwrap();
        assert_eq!((r.bx.lower[0], r.bx.upper[0]), (1.0, 2.0));

        let r = brute_force_max_box(&pos, &[], 0).unwrap();
        assert_eq!((r.bx.lower[0], r.bx.upper[0], r.cardinality), (1.0, 3.0, 3));
    }

    #[test]
    fn negative_on_boundary_counts_inside() {
        let pos = pts(&[&[0.0], &[1.0], &[2.0]]);
        let neg = pts(&[&[2.0]]);
        let r = maximal_box(&pos, &neg, 0).unwrap();
        assert_eq!(r.cardinality, 2);
        assert_eq!(r.bx.upper, vec![1.0]);
    }

    #[test]
    fn coincident_negatives_make_it_infeasible() {
        let pos = pts(&[&[1.0, 1.0]]);
        let neg = pts(&[&[1.0, 1.0]]);
        assert_eq!(maximal_box(&pos, &neg, 0), Err(MaxBoxError::Infeasible(0)));
        assert_eq!(maximal_box(&pos, &neg, 1).unwrap().cardinality, 1);
    }

    #[test]
    fn input_errors() {
        assert_eq!(maximal_box(&[], &[], 0), Err(MaxBoxError::NoPositives));
        assert_eq!(budget_from_i64(-1), Err(MaxBoxError::NegativeBudget(-1)));
        assert_eq!(budget_from_i64(2), Ok(2));
        let err = maximal_box(&pts(&[&[1.0, 2.0]]), &pts(&[&[1.0]]), 0).unwrap_err();
        assert!(matches!(err, MaxBoxError::DimensionMismatch { .. }));
        let many: Vec<Vec<f64>> = (0..61).map(|i| vec![i as f64]).collect();
        assert!(matches!(
            brute_force_max_box(&many, &[], 0),
            Err(MaxBoxError::OracleLimit { .. })
        ));
    }

    #[test]
    fn contains_is_closed() {
        let b = HyperBox::new(vec!["a".into(), "b".into()], vec![0.0, 0.0], vec![1.0, 2.0]).unwrap();
        assert!(b.contains(&[1.0, 2.0]));
        assert!(b.contains(&[0.5, 0.0]));
        assert!(!b.contains(&[0.5, 2.1]));
        let pt = HyperBox::new(vec!["a".into()], vec![3.0], vec![3.0]).unwrap();
        assert!(pt.contains(&[3.0]));
        assert!(HyperBox::new(vec!["a".into()], vec![1.0], vec![0.0]).is_err());
    }

    #[test]
    fn node_limit_marks_result_unproven() {
        let pos: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, (i * 7 % 30) as f64]).collect();
        let neg: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 * 3.0 + 0.5, 15.5]).collect();
        let opts = MaxBoxOptions {
            node_limit: Some(1),
            ..Default::default()
        };
        match maximal_box_with(&pos, &neg, 0, &opts) {
            Ok(r) => assert!(!r.proven_optimal),
            Err(e) => assert_eq!(e, MaxBoxError::Infeasible(0)),
        }
    }

    #[test]
    fn reads_points_csv() {
        let text = "id,a,b,label\n1,0.5,2,1\n2,1.5,3,0\n";
        let lp = read_points_csv(text.as_bytes()).unwrap();
        assert_eq!(lp.dimension_names, vec!["a", "b"]);
        assert_eq!(lp.positives, vec![vec![0.5, 2.0]]);
        assert_eq!(lp.negatives, vec![vec![1.5, 3.0]]);
        assert!(read_points_csv("a,label\n1,2\n".as_bytes()).is_err());
    }

    fn instance(max_pos: usize, max_neg: usize, dim: usize) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let point = proptest::collection::vec(0u8..8, dim)
            .prop_map(|v| v.into_iter().map(f64::from).collect::<Vec<f64>>());
        (
            proptest::collection::vec(point.clone(), 1..max_pos),
            proptest::collection::vec(point, 0..max_neg),
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn matches_brute_force((pos, neg) in instance(14, 8, 2), c in 0usize..3) {
            let neg: Vec<Vec<f64>> = neg.into_iter().filter(|n| !pos.contains(n)).collect();
            let fast = maximal_box(&pos, &neg, c).unwrap();
            let slow = brute_force_max_box(&pos, &neg, c).unwrap();
            prop_assert_eq!(fast.cardinality, slow.cardinality);
            prop_assert!(fast.bx.count_inside(&neg) <= c);
            prop_assert_eq!(fast.cardinality, fast.bx.count_inside(&pos));
            // Bounds sit on positive coordinates.
            for k in 0..2 {
                prop_assert!(pos.iter().any(|x| x[k] == fast.bx.lower[k]));
                prop_assert!(pos.iter().any(|x| x[k] == fast.bx.upper[k]));
            }
        }

        #[test]
        fn budget_is_monotone((pos, neg) in instance(12, 8, 2)) {
            let neg: Vec<Vec<f64>> = neg.into_iter().filter(|n| !pos.contains(n)).collect();
            let cards: Vec<usize> = (0..3).map(|c| maximal_box(&pos, &neg, c).unwrap().cardinality).collect();
            prop_assert!(cards.windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn constant_extra_dimension_changes_nothing((pos, neg) in instance(12, 6, 2), c in 0usize..2) {
            let neg: Vec<Vec<f64>> = neg.into_iter().filter(|n| !pos.contains(n)).collect();
            let lift = |v: &Vec<Vec<f64>>| v.iter().map(|x| { let mut y = x.clone(); y.push(4.0); y }).collect::<Vec<_>>();
            let base = maximal_box(&pos, &neg, c).unwrap();
            let lifted = maximal_box(&lift(&pos), &lift(&neg), c).unwrap();
            prop_assert_eq!(base.cardinality, lifted.cardinality);
            prop_assert_eq!(&base.bx.lower[..], &lifted.bx.lower[..2]);
        }

        #[test]
        fn deterministic((pos, neg) in instance(14, 8, 2)) {
            let neg: Vec<Vec<f64>> = neg.into_iter().filter(|n| !pos.contains(n)).collect();
            let a = maximal_box(&pos, &neg, 1).unwrap();
            let b = maximal_box(&pos, &neg, 1).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
