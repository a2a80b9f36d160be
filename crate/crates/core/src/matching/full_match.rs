//! Optimal restricted full matching.
//!
//! With nonnegative distances, a minimum-cost edge cover of the bipartite
//! treated/control graph in which every treated unit has degree at most
//! `max_controls` and every control at most `max_treated` can always be
//! pruned to a forest of stars of equal cost: an edge joining two vertices of
//! degree two or more can be dropped without uncovering anyone. Stars are
//! exactly the strata of a full matching, and the edge cost is the sum of
//! many-side to one-side distances. The edge cover is a min-cost circulation
//! with unit lower bounds on the units, solved here as a min-cost max-flow
//! after the usual lower-bound reduction.

use std::collections::{BTreeMap, BTreeSet};

use super::flow::MinCostFlow;
use super::{DistanceMatrix, MatchingError, Result, Stratification, Stratum};

pub struct FullMatch {
    pub stratification: Stratification,
    /// Objective accumulated by the flow solver.
    pub flow_objective: f64,
}

/// Solve full matching with at most `max_treated` treated and at most
/// `max_controls` controls per stratum. `exact_keys`, when given, is indexed
/// by dataset position and forbids strata mixing key values.
pub fn full_match(
    dm: &DistanceMatrix,
    exact_keys: Option<&[String]>,
    max_treated: usize,
    max_controls: usize,
) -> Result<FullMatch> {
    if max_treated == 0 || max_controls == 0 {
        return Err(MatchingError::InvalidRatio {
            max_treated,
            max_controls,
        });
    }
    let nt = dm.n_treated();
    let nc = dm.n_control();
    if nt == 0 || nc == 0 {
        return Err(MatchingError::EmptyArm);
    }
    let mut dm = dm.clone();
    if let Some(keys) = exact_keys {
        check_key_levels(&dm, keys)?;
        dm.forbid_across(keys);
    }

    let source = nt + nc;
    let sink = source + 1;
    let super_source = source + 2;
    let super_sink = source + 3;
    let mut g = MinCostFlow::new(nt + nc + 4);

    for t in 0..nt {
        g.add_arc(super_source, t, 1, 0.0);
        if max_controls > 1 {
            g.add_arc(source, t, (max_controls - 1) as i64, 0.0);
        }
    }
    let mut pair_arcs = Vec::new();
    for t in 0..nt {
        for c in 0..nc {
            if let Some(d) = dm.get(t, c) {
                pair_arcs.push((t, c, g.add_arc(t, nt + c, 1, d)));
            }
        }
    }
    for c in 0..nc {
        g.add_arc(nt + c, super_sink, 1, 0.0);
        if max_treated > 1 {
            g.add_arc(nt + c, sink, (max_treated - 1) as i64, 0.0);
        }
    }
    g.add_arc(source, super_sink, nt as i64, 0.0);
    g.add_arc(super_source, sink, nc as i64, 0.0);
    g.add_arc(sink, source, (nt * max_controls + nc * max_treated) as i64, 0.0);

    let (flow, flow_objective) = g.run(super_source, super_sink);
    if flow < (nt + nc) as i64 {
        return Err(MatchingError::Infeasible {
            max_treated,
            max_controls,
        });
    }

    let mut edges: BTreeSet<(usize, usize)> = pair_arcs
        .iter()
        .filter(|&&(_, _, arc)| g.flow(arc) > 0)
        .map(|&(t, c, _)| (t, c))
        .collect();
    prune_to_stars(&mut edges, nt, nc);

    let stratification = strata_from_edges(&dm, &edges, exact_keys, max_treated, max_controls);
    Ok(FullMatch {
        stratification,
        flow_objective,
    })
}

fn check_key_levels(dm: &DistanceMatrix, keys: &[String]) -> Result<()> {
    let mut levels: BTreeMap<&str, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (row, &pos) in dm.treated.iter().enumerate() {
        levels.entry(keys[pos].as_str()).or_default().0.push(row);
    }
    for (col, &pos) in dm.control.iter().enumerate() {
        levels.entry(keys[pos].as_str()).or_default().1.push(col);
    }
    for (level, (t, c)) in levels {
        if t.is_empty() || c.is_empty() {
            let units = t
                .iter()
                .map(|&r| dm.treated_ids[r].clone())
                .chain(c.iter().map(|&r| dm.control_ids[r].clone()))
                .collect();
            return Err(MatchingError::SingleArmKey {
                level: level.to_string(),
                units,
            });
        }
    }
    Ok(())
}

/// Drop edges whose endpoints both have degree two or more. The remaining
/// components are stars and every unit stays covered.
fn prune_to_stars(edges: &mut BTreeSet<(usize, usize)>, nt: usize, nc: usize) {
    let mut deg_t = vec![0usize; nt];
    let mut deg_c = vec![0usize; nc];
    for &(t, c) in edges.iter() {
        deg_t[t] += 1;
        deg_c[c] += 1;
    }
    let redundant: Vec<(usize, usize)> = edges.iter().copied().collect();
    for (t, c) in redundant {
        if deg_t[t] >= 2 && deg_c[c] >= 2 {
            edges.remove(&(t, c));
            deg_t[t] -= 1;
            deg_c[c] -= 1;
        }
    }
}

fn strata_from_edges(
    dm: &DistanceMatrix,
    edges: &BTreeSet<(usize, usize)>,
    exact_keys: Option<&[String]>,
    max_treated: usize,
    max_controls: usize,
) -> Stratification {
    let nt = dm.n_treated();
    let nc = dm.n_control();
    // Union-find over rows then columns.
    let mut parent: Vec<usize> = (0..nt + nc).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for &(t, c) in edges {
        let a = find(&mut parent, t);
        let b = find(&mut parent, nt + c);
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for node in 0..nt + nc {
        let root = find(&mut parent, node);
        let pos = if node < nt {
            dm.treated[node]
        } else {
            dm.control[node - nt]
        };
        groups.entry(root).or_default().push(pos);
    }
    let treated: BTreeSet<usize> = dm.treated.iter().copied().collect();
    let mut strata: Vec<Stratum> = groups
        .into_values()
        .map(|mut members| {
            members.sort_unstable();
            let m = members.iter().filter(|p| treated.contains(p)).count();
            let key = exact_keys
                .map(|k| k[members[0]].clone())
                .unwrap_or_default();
            Stratum::new(members, m, key)
        })
        .collect();
    strata.sort_by_key(|s| s.members[0]);
    Stratification {
        strata,
        max_treated,
        max_controls,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dm(nt: usize, nc: usize, d: &[f64]) -> DistanceMatrix {
        DistanceMatrix::from_entries(
            (0..nt).collect(),
            (nt..nt + nc).collect(),
            d.iter().map(|&x| Some(x)).collect(),
        )
    }

    #[test]
    fn one_treated_two_controls() {
        let m = dm(1, 2, &[1.5, 2.0]);
        let fm = full_match(&m, None, 7, 7).unwrap();
        let s = &fm.stratification;
        assert_eq!(s.strata.len(), 1);
        assert_eq!(s.strata[0].members, vec![0, 1, 2]);
        assert_eq!(s.objective(&m), 3.5);
        assert_eq!(fm.flow_objective, 3.5);
    }

    #[test]
    fn perfect_pairing() {
        let m = dm(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let fm = full_match(&m, None, 7, 7).unwrap();
        assert_eq!(fm.stratification.strata.len(), 2);
        assert_eq!(fm.stratification.objective(&m), 0.0);
        for s in &fm.stratification.strata {
            assert_eq!((s.size, s.treated), (2, 1));
        }
    }

    #[test]
    fn ratio_caps_force_a_split() {
        // One treated, three controls: needs max_controls >= 3.
        let m = dm(1, 3, &[1.0, 1.0, 1.0]);
        assert!(matches!(
            full_match(&m, None, 2, 2),
            Err(MatchingError::Infeasible { .. })
        ));
        assert!(full_match(&m, None, 1, 3).is_ok());
    }

    #[test]
    fn exact_keys_separate_strata() {
        let m = dm(2, 2, &[0.0, 5.0, 5.0, 0.0]);
        let keys: Vec<String> = ["a", "b", "b", "a"].iter().map(|s| s.to_string()).collect();
        let fm = full_match(&m, Some(&keys), 7, 7).unwrap();
        for s in &fm.stratification.strata {
            assert!(s.members.iter().all(|&p| keys[p] == s.key));
        }
        assert_eq!(fm.stratification.objective(&m), 10.0);

        let lonely: Vec<String> = ["a", "a", "c", "a"].iter().map(|s| s.to_string()).collect();
        match full_match(&m, Some(&lonely), 7, 7) {
            Err(MatchingError::SingleArmKey { level, units }) => {
                assert_eq!(level, "c");
                assert_eq!(units, vec!["c2".to_string()]);
            }
            Err(e) => panic!("unexpected {e}"),
            Ok(_) => panic!("single-arm key level should be rejected"),
        }
    }

    #[test]
    fn zero_cost_ties_still_yield_stars() {
        let m = dm(3, 3, &[0.0; 9]);
        let fm = full_match(&m, None, 3, 3).unwrap();
        fm.stratification.validate().unwrap();
        assert_eq!(fm.stratification.objective(&m), 0.0);
    }
}
