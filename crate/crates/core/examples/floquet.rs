//! The monodromy discriminant of −y″ + εU y = E y, its bands, and the
//! first gap against the dual computation.

use hillmsa::band::BandSetup;
use hillmsa::lattice::Lattice;
use hillmsa::operator::{OperatorSpec, TWO_PI_SQ};
use hillmsa::oracle::Floquet;
use hillmsa::potential::{fold, Generator};
use hillmsa::scales::{ScaleSchedule, ScheduleConfig};

fn main() {
    let lattice = Lattice::from_strs(&["1"]).expect("valid frequency");
    let c = Generator::SingleCosine {
        n: vec![1],
        amplitude: (-1.0f64).exp(),
        kappa0: 1.0,
        alpha0: 1.0,
    }
    .build()
    .expect("valid generator");
    let folded = fold(&c, &lattice);
    let eps = 0.05;
    let fl = Floquet::new(&lattice, &folded, eps);
    let grid: Vec<f64> = (0..=3000).map(|i| -0.5 + 0.005 * i as f64).collect();
    let data = fl.scan(&grid).expect("integrable");
    for (lo, hi) in data.bands.iter().take(3) {
        println!("band [{lo:.8}, {hi:.8}]");
    }
    let setup = BandSetup {
        lattice: lattice.clone(),
        folded: folded.clone(),
        spec: OperatorSpec::raw(eps, 0.0),
        schedule: ScaleSchedule::build(&ScheduleConfig::practical(0.5, 2.1, 3)).expect("feasible"),
        truncation_r: 12.0,
        kappa0: 1.0,
        alpha0: 1.0,
        pair_factor: 4.0,
    };
    let g = setup.gap_edges(1).expect("first gap");
    println!("dual gap  [{:.10}, {:.10}] near (2π)²/4 = {:.6}", g.e_minus, g.e_plus, TWO_PI_SQ / 4.0);
    println!("widths: dual {:.10e}, Floquet {:.10e}", g.width, g.floquet_width.unwrap_or(0.0));
}
