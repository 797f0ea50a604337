//! Simple fixed point away from resonance, the pair solver at k = −1/2,
//! and the quadratic dichotomy.

use hillmsa::eigensolve::{practical_bracket, quadratic_dichotomy, solve_pair, solve_simple, PairOptions, SimpleOptions};
use hillmsa::lattice::Lattice;
use hillmsa::operator::{Hamiltonian, OperatorSpec};
use hillmsa::potential::{fold, Generator};

fn main() {
    let lat = Lattice::from_strs(&["1"]).expect("valid frequency");
    let c = Generator::SingleCosine {
        n: vec![1],
        amplitude: (-1.0f64).exp(),
        kappa0: 1.0,
        alpha0: 1.0,
    }
    .build()
    .expect("valid generator");
    let folded = fold(&c, &lat);

    let labels = lat.ball_labels(12.0);
    let ham = Hamiltonian::new(&lat, &folded, OperatorSpec::raw(0.05, 0.2));
    let p = solve_simple(&ham.assemble(&labels), &labels, 0, 1, &SimpleOptions::default()).expect("converges");
    println!("k = 0.2: E = {:.12} after {} iterations, v(0) = {:.12}", p.e, p.iterations, ham.v(0));

    let mut pair_labels = labels.clone();
    pair_labels.push(13);
    let h = ham.with_k(-0.5).assemble(&pair_labels);
    let bracket = practical_bracket(&h, &pair_labels, 0, 1).expect("labels present");
    let b = solve_pair(&h, &pair_labels, 0, 1, bracket, &PairOptions::default()).expect("two roots");
    println!("k = −1/2: E⁻ = {:.12}, E⁺ = {:.12}, gap {:.6e}", b.e_minus, b.e_plus, b.e_plus - b.e_minus);

    let q = quadratic_dichotomy(1.0, 0.0, 0.3, 1.05).expect("admissible tuple");
    println!("dichotomy: {:?}, λ = {:.4}", q.case, q.lambda);
}
