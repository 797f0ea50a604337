//! Block inversion through the Schur complement, and Q, G for a pair.

use hillmsa::schur::{dense_resolvent, q_g_functions, random_hermitian, schur_block_inverse};

fn main() {
    let h = random_hermitian(24, 5);
    let e = 3.7;
    let split: Vec<usize> = (0..10).collect();
    let a = schur_block_inverse(&h, &split, e).expect("regular blocks");
    let b = dense_resolvent(&h, e).expect("E off the spectrum");
    let err = (a - &b).iter().fold(0.0f64, |m, z| m.max(z.norm()));
    println!("max |Schur − dense| = {err:e}");

    let qg = q_g_functions(&h, &[0, 1], e).expect("punctured block regular");
    let (g01, g10) = qg.g.expect("two principal points");
    println!("Q = ({:.6}, {:.6}), G = {g01:.6}, conj check {:e}", qg.q[0], qg.q[1], (g01 - g10.conj()).norm());
}
