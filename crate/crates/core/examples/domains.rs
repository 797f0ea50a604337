//! Level sets at a non-resonant k, then 𝒮- and T-symmetrized domains.

use hillmsa::domains::{build_level_sets, build_level_sets_with, symmetrize_s, symmetrize_t};
use hillmsa::lattice::Lattice;
use hillmsa::operator::TWO_PI_SQ;
use hillmsa::scales::{ScaleSchedule, ScheduleConfig};

fn main() {
    let lat = Lattice::from_strs(&["1"]).expect("valid frequency");
    let sch = ScaleSchedule::build(&ScheduleConfig::practical(0.5, 2.5, 2)).expect("feasible");

    let ls = build_level_sets(0.21, 2, &sch, &lat, TWO_PI_SQ).expect("non-resonant k");
    println!("Λ⁽²⁾(0) at k = 0.21: {} points, nesting ok = {}", ls.domain.len(), ls.nesting_audit().passed());

    let small = build_level_sets(0.001, 2, &sch, &lat, TWO_PI_SQ).expect("non-resonant k");
    let d = symmetrize_s(&small, &sch, &lat).expect("small k");
    println!("𝒮-symmetric domain: {} points, invariant = {}", d.len(), d.is_invariant(|m| -m));

    let n0 = -1;
    let near = build_level_sets_with(0.5 + 1e-4, 2, &sch, &lat, TWO_PI_SQ, Some(n0)).expect("pair window");
    let t = symmetrize_t(&near, n0, &sch, &lat).expect("resonant k");
    println!("T-symmetric domain about n₀ = {n0}: {} points, invariant = {}", t.len(), t.is_invariant(|m| n0 - m));
}
