//! The quotient lattice of ω = (1/2, 1/3): labels, norms, ξ, and a ball.

use hillmsa::lattice::Lattice;

fn main() {
    let lat = Lattice::from_strs(&["1/2", "1/3"]).expect("valid frequencies");
    println!("ν = {}, ξ unit = {}", lat.nu(), lat.xi_unit());
    println!("{:>6} {:>6} {:>10}", "label", "|n|", "ξ(n)");
    for label in lat.ball_labels(3.0) {
        println!("{label:>6} {:>6} {:>10.4}", lat.norm_of_label(label), lat.xi_f64(label));
    }
    let d = lat.check_diophantine(0.5, 3.0, 6.0);
    println!("Diophantine on B(6): satisfied = {}, period condition = {}", d.satisfied, d.period_condition);
}
