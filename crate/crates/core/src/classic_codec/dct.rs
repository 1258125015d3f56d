//! Orthonormal 8x8 type-II DCT.

use crate::scalar::{lit, Scalar};

pub type Block8<T> = [[T; 8]; 8];

fn basis<T: Scalar>() -> Block8<T> {
    let mut c = [[T::zero(); 8]; 8];
    for (u, row) in c.iter_mut().enumerate() {
        let alpha = if u == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
        for (x, v) in row.iter_mut().enumerate() {
            *v = lit(alpha * (((2 * x + 1) * u) as f64 * std::f64::consts::PI / 16.0).cos());
        }
    }
    c
}

/// `F = C X Cᵀ`.
pub fn dct8_forward<T: Scalar>(block: &Block8<T>) -> Block8<T> {
    let c = basis::<T>();
    let mut tmp = [[T::zero(); 8]; 8];
    for u in 0..8 {
        for x in 0..8 {
            tmp[u][x] = (0..8).map(|y| c[u][y] * block[y][x]).sum();
        }
    }
    let mut out = [[T::zero(); 8]; 8];
    for u in 0..8 {
        for v in 0..8 {
            out[u][v] = (0..8).map(|x| tmp[u][x] * c[v][x]).sum();
        }
    }
    out
}

/// `X = Cᵀ F C`.
pub fn dct8_inverse<T: Scalar>(coeffs: &Block8<T>) -> Block8<T> {
    let c = basis::<T>();
    let mut tmp = [[T::zero(); 8]; 8];
    for y in 0..8 {
        for v in 0..8 {
            tmp[y][v] = (0..8).map(|u| c[u][y] * coeffs[u][v]).sum();
        }
    }
    let mut out = [[T::zero(); 8]; 8];
    for y in 0..8 {
        for x in 0..8 {
            out[y][x] = (0..8).map(|v| tmp[y][v] * c[v][x]).sum();
        }
    }
    out
}
