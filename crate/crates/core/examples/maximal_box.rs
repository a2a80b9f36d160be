//! Largest box of supported points on a small 2-D scatter, with and without
//! a budget of tolerated negatives.
//!
//! ```bash
//! cargo run --example maximal_box
//! ```

use studypop::maxbox::{brute_force_max_box, maximal_box};

fn main() {
    // A 6x6 lattice of positives with three flagged points near the corner.
    let mut positives = Vec::new();
    for i in 0..6 {
        for j in 0..6 {
            positives.push(vec![i as f64, j as f64]);
        }
    }
    let negatives = vec![vec![4.5, 4.5], vec![5.5, 0.5], vec![0.5, 5.5]];

    for budget in 0..=2 {
        let r = maximal_box(&positives, &negatives, budget).expect("valid instance");
        let check = brute_force_max_box(&positives, &negatives, budget).expect("small instance");
        println!(
            "budget {budget}: {} positives in [{:?}, {:?}] with {} negatives, {} nodes (brute force: {})",
            r.cardinality, r.bx.lower, r.bx.upper, r.negatives_inside, r.nodes_explored, check.cardinality
        );
        assert_eq!(r.cardinality, check.cardinality);
    }
}
