//! Newton fit of a logistic model on a handful of points, compared with
//! the fitted probabilities it implies.
//!
//! ```bash
//! cargo run --example logistic_fit
//! ```

use studypop::propensity::{fit_logistic_matrix, FitOptions};

fn main() {
    let x: Vec<Vec<f64>> = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0]
        .iter()
        .map(|&v| vec![v])
        .collect();
    let y = [false, false, true, false, false, true, false, true, true, true];
    let model = fit_logistic_matrix(&x, &y, &["dose".to_string()], &FitOptions::default()).expect("fit");
    println!(
        "intercept {:.6}, slope {:.6}, {} iterations",
        model.intercept, model.coefficients[0], model.iterations
    );
    for (xi, yi) in x.iter().zip(y) {
        println!("  dose {:.1}  treated {}  score {:.4}", xi[0], u8::from(yi), model.predict(xi).expect("1-D"));
    }
}
