//! Seeded random-phase potential, folded onto the quotient lattice.

use hillmsa::lattice::Lattice;
use hillmsa::potential::{fold, Generator};

fn main() {
    let gen = Generator::RandomPhase {
        nu: 1,
        kappa0: 0.8,
        alpha0: 1.0,
        seed: 11,
        support_radius: 6,
        scale: 1.0,
    };
    let c = gen.build().expect("valid generator");
    c.validate().expect("decay bound holds");
    let lat = Lattice::from_strs(&["1/3"]).expect("valid frequency");
    let folded = fold(&c, &lat);
    println!("{} Fourier modes, {} folded labels", c.entries.len(), folded.len());
    println!("conjugate symmetry defect {:e}", folded.conjugate_defect());
    for x in [0.0, 0.25, 0.5, 1.0, 2.0] {
        println!("U({x}) = {:+.6}", folded.eval(x).expect("real potential"));
    }
}
