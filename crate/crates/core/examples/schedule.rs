//! A practical scale schedule and the resonance profile of a few momenta.

use hillmsa::lattice::Lattice;
use hillmsa::scales::{resonance_profile, ScaleSchedule, ScheduleConfig};

fn main() {
    let sch = ScaleSchedule::build(&ScheduleConfig::practical(0.5, 2.1, 3)).expect("feasible");
    for u in 1..=sch.s_max {
        println!("s = {u}: R = {:.3}, log δ₀ = {:.3}", sch.r(u), sch.log_delta(u));
    }
    println!("recurrence defect {:e}", sch.recurrence_defect());
    let lat = Lattice::from_strs(&["1"]).expect("valid frequency");
    for k in [0.1, 0.49, 0.4999, -0.9999] {
        let p = resonance_profile(k, &sch, &lat, 12.0);
        println!("k = {k}: ℛ(k) = {:?}", p.r_of_k());
    }
}
