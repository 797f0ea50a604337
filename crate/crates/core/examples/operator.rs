//! Assembling H_{ε,k} on a ball and comparing its spectrum with ε = 0.

use hillmsa::lattice::Lattice;
use hillmsa::oracle::dense_spectrum;
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
    let labels = lat.ball_labels(6.0);
    for eps in [0.0, 0.05] {
        let h = Hamiltonian::new(&lat, &folded, OperatorSpec::raw(eps, 0.3)).assemble(&labels);
        let spec = dense_spectrum(&h).expect("Hermitian");
        let low: Vec<String> = spec.values.iter().take(4).map(|v| format!("{v:.6}")).collect();
        println!("ε = {eps}: lowest eigenvalues {}", low.join(", "));
    }
}
