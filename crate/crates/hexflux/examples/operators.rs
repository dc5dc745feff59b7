//! Build the 1D SBP operators for every supported degree and print their
//! defining residuals: polynomial-differentiation accuracy, the SBP identity
//! `Q + Q^T = E`, and positivity of the quadrature norm.
//!
//! ```bash
//! cargo run --release --example operators
//! ```

use hexflux::sbp::Operator1d;

fn main() {
    println!(
        "{:>3} {:>14} {:>14} {:>14} {:>14}",
        "p", "accuracy", "sbp", "min weight", "sum(w) - 2"
    );
    for p in 1..=13 {
        let op = Operator1d::new(p);
        let min_w = op.weights.iter().cloned().fold(f64::INFINITY, f64::min);
        let sum_w: f64 = op.weights.iter().sum();
        println!(
            "{:>3} {:>14.3e} {:>14.3e} {:>14.3e} {:>14.3e}",
            p,
            op.exactness_residual(),
            op.sbp_residual(),
            min_w,
            (sum_w - 2.0).abs()
        );
    }
    println!();
    println!("Nodes for p = 3 (LGL includes the endpoints):");
    let op = Operator1d::new(3);
    println!("  {:?}", op.nodes);
}
