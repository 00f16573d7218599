//! Spherical harmonics against associated Legendre polynomials.

mod support;

use c3dgs::render::sh::{eval_sh, sh_basis};
use c3dgs::scene::SH_COEFFS;
use support::scenes::{rng, uniform, unit3};

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// `P_l^m(x)` for `m ≥ 0`, without the Condon–Shortley phase.
fn legendre(l: u32, m: u32, x: f64) -> f64 {
    let s = (1.0 - x * x).max(0.0).sqrt();
    let mut pmm = 1.0;
    for i in 0..m {
        pmm *= (2 * i + 1) as f64 * s;
    }
    if l == m {
        return pmm;
    }
    let mut prev = pmm;
    let mut cur = x * (2 * m + 1) as f64 * pmm;
    for ll in m + 2..=l {
        let next = ((2 * ll - 1) as f64 * x * cur - (ll + m - 1) as f64 * prev) / (ll - m) as f64;
        prev = cur;
        cur = next;
    }
    cur
}

/// Real orthonormal `Y_l^m` with the Condon–Shortley phase, from polar angles.
fn real_sh(l: u32, m: i32, dir: &[f64; 3]) -> f64 {
    let theta = dir[2].clamp(-1.0, 1.0).acos();
    let phi = dir[1].atan2(dir[0]);
    let am = m.unsigned_abs();
    let k = ((2 * l + 1) as f64 / (4.0 * std::f64::consts::PI) * factorial(l - am) / factorial(l + am)).sqrt();
    let p = legendre(l, am, theta.cos());
    let phase = if am % 2 == 1 { -1.0 } else { 1.0 };
    match m.signum() {
        0 => k * p,
        1 => phase * std::f64::consts::SQRT_2 * k * p * (am as f64 * phi).cos(),
        _ => phase * std::f64::consts::SQRT_2 * k * p * (am as f64 * phi).sin(),
    }
}

fn oracle_basis(dir: &[f64; 3]) -> Vec<f64> {
    (0..4u32).flat_map(|l| (-(l as i32)..=l as i32).map(move |m| real_sh(l, m, dir))).collect()
}

#[test]
fn basis_matches_legendre_construction() {
    let mut r = rng(17);
    let mut worst = 0.0f64;
    for _ in 0..2000 {
        let d = unit3(&mut r);
        for (a, b) in sh_basis(&d).iter().zip(oracle_basis(&d)) {
            worst = worst.max((a - b).abs());
        }
    }
    println!("worst basis error {worst:.2e}");
    assert!(worst < 1e-12, "worst basis error {worst}");
}

#[test]
fn eval_matches_oracle_sum() {
    let mut r = rng(18);
    for _ in 0..1000 {
        let h: [f64; SH_COEFFS] = std::array::from_fn(|_| uniform(&mut r, -1.0, 1.0));
        let d = unit3(&mut r);
        let basis = oracle_basis(&d);
        let rgb = eval_sh(&h, &d);
        for c in 0..3 {
            let want = (0.5 + (0..16).map(|k| h[3 * k + c] * basis[k]).sum::<f64>()).max(0.0);
            assert!((rgb[c] - want).abs() < 1e-6, "channel {c}: {} vs {want}", rgb[c]);
        }
    }
}

#[test]
fn basis_is_orthonormal_on_the_sphere() {
    // Fibonacci-sphere quadrature of ∫ Y_i Y_j.
    let n = 200_000;
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let mut gram = [[0.0; 16]; 16];
    for i in 0..n {
        let z = 1.0 - (2 * i + 1) as f64 / n as f64;
        let s = (1.0 - z * z).sqrt();
        let a = golden * i as f64;
        let y = sh_basis(&[s * a.cos(), s * a.sin(), z]);
        for p in 0..16 {
            for q in 0..16 {
                gram[p][q] += y[p] * y[q];
            }
        }
    }
    let w = 4.0 * std::f64::consts::PI / n as f64;
    for (p, row) in gram.iter().enumerate() {
        for (q, g) in row.iter().enumerate() {
            let want = if p == q { 1.0 } else { 0.0 };
            assert!((g * w - want).abs() < 1e-3, "gram[{p}][{q}] = {}", g * w);
        }
    }
}
