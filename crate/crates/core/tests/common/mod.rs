//! Expectation oracles that share no code with the library's moment formulas.

#![allow(dead_code)]

use levykit::chaos::TestFunction;
use nalgebra::DMatrix;

/// Gauss–Hermite rule for the standard normal (Golub–Welsch on the monic Hermite Jacobi matrix).
pub fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
    let jac = DMatrix::from_fn(n, n, |i, j| if i + 1 == j || j + 1 == i { (i.max(j) as f64).sqrt() } else { 0.0 });
    let eig = jac.symmetric_eigen();
    (0..n).map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2))).collect()
}

/// `E h(N)` for `N ~ Poisson(a)` by summing the mass function until the tail is negligible.
pub fn poisson_enumerate(a: f64, h: impl Fn(f64) -> f64) -> f64 {
    let mut p = (-a).exp();
    let mut total = 0.0;
    let mut k = 0usize;
    let cap = (a + 40.0 * a.sqrt() + 60.0) as usize;
    while k <= cap {
        total += p * h(k as f64);
        k += 1;
        p *= a / k as f64;
    }
    total
}

pub fn gaussian_power(p: u32) -> f64 {
    gauss_hermite(24).iter().map(|(x, w)| w * x.powi(p as i32)).sum()
}

pub fn poisson_power(p: u32, a: f64) -> f64 {
    poisson_enumerate(a, |k| k.powi(p as i32))
}

/// `E F` monomial by monomial, using independence of the coordinates.
pub fn oracle_expectation(f: &TestFunction<f64>, intensities: &[f64]) -> f64 {
    f.poly
        .terms()
        .map(|(e, c)| {
            let g: f64 = e[..f.r].iter().map(|&p| gaussian_power(p)).product();
            let n: f64 = e[f.r..].iter().zip(intensities).map(|(&p, &a)| poisson_power(p, a)).product();
            c * g * n
        })
        .sum()
}

/// `E[h(g, N)]` on the full product grid (quadrature × enumeration), for non-polynomial checks.
pub fn grid_expectation(r: usize, intensities: &[f64], h: impl Fn(&[f64], &[f64]) -> f64) -> f64 {
    let nodes = gauss_hermite(10);
    let caps: Vec<usize> = intensities.iter().map(|a| (a + 12.0 * a.sqrt() + 15.0) as usize).collect();
    let mut total = 0.0;
    let mut gi = vec![0usize; r];
    loop {
        let g: Vec<f64> = gi.iter().map(|&i| nodes[i].0).collect();
        let wg: f64 = gi.iter().map(|&i| nodes[i].1).product();
        let mut ni = vec![0usize; intensities.len()];
        loop {
            let n: Vec<f64> = ni.iter().map(|&k| k as f64).collect();
            let wn: f64 = ni
                .iter()
                .zip(intensities)
                .map(|(&k, &a)| (-a).exp() * a.powi(k as i32) / (1..=k).map(|v| v as f64).product::<f64>())
                .product();
            total += wg * wn * h(&g, &n);
            if !bump(&mut ni, &caps) {
                break;
            }
        }
        if !bump(&mut gi, &vec![nodes.len() - 1; r]) {
            break;
        }
    }
    total
}

fn bump(idx: &mut [usize], caps: &[usize]) -> bool {
    for (i, c) in idx.iter_mut().zip(caps) {
        if *i < *c {
            *i += 1;
            return true;
        }
        *i = 0;
    }
    false
}
