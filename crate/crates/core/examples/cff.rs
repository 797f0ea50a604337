//! Level-one continued-fraction function and its two branches over x.

use std::sync::Arc;

use hillmsa::eigensolve::{cff_branch_solve, cff_build, func, BranchHypotheses, CffNode};

fn main() {
    let (g, theta) = (0.3, 0.1);
    let f1 = CffNode::leaf(func(move |_, _| g + theta));
    let f2 = CffNode::leaf(func(move |_, _| g - theta));
    let coupling = func(move |x: f64, _| (x * theta).powi(2));
    let (f, _) = cff_build(&f1, &f2, coupling, &[(0.0, g), (0.4, g + 0.05)]).expect("admissible");
    let root = move |x: f64| (theta * theta + (x * theta).powi(2)).sqrt();
    let hyp = BranchHypotheses {
        g_minus: Arc::new(move |x| g - root(x)),
        g_plus: Arc::new(move |x| g + root(x)),
        rho: 0.5,
    };
    let xs: Vec<f64> = (0..11).map(|i| -0.5 + 0.1 * i as f64).collect();
    let sol = cff_branch_solve(&f, &xs, &|_| (g - 0.5, g + 0.5), Some(&hyp)).expect("two branches");
    println!("{:>6} {:>12} {:>12}", "x", "ζ⁻", "ζ⁺");
    for p in &sol.points {
        println!("{:>6.2} {:>12.8} {:>12.8}", p.x, p.zeta_minus, p.zeta_plus);
    }
    println!("continuity ratio {:.4}", sol.continuity_ratio);
}
