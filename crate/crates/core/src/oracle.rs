//! Exhaustive maximization of `xᵀAx` over `{-1, +1}ⁿ` for small `n`.

use crate::error::{Error, Result};
use crate::instance::ProblemInstance;
use crate::rounding::{signed_value, SignVector};

pub const DEFAULT_N_LIMIT: usize = 24;

/// Leading free signs fixed per parallel block.
const BLOCK_BITS: usize = 6;

/// Values closer than this (relative to `Σ|A_ij|`) count as ties.
const TIE_TOL: f64 = 1e-10;

/// Bit `n-1-i` set means `x_i = -1`, so integer order is lexicographic order
/// with `+1` before `-1`.
fn mask_to_signs(mask: u32, n: usize) -> Vec<i8> {
    (0..n)
        .map(|i| if mask >> (n - 1 - i) & 1 == 1 { -1 } else { 1 })
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct Best {
    value: f64,
    mask: u32,
}

impl Best {
    fn offer(&mut self, value: f64, mask: u32, tol: f64) {
        if value > self.value + tol || (value >= self.value - tol && mask < self.mask) {
            self.value = value;
            self.mask = mask;
        }
    }
}

/// Gray-code walk over the `inner` trailing free signs with the leading ones fixed by `prefix`.
fn search_block(inst: &ProblemInstance, prefix: u32, inner: usize, tol: f64) -> Best {
    let n = inst.n();
    let start = prefix << inner;
    let mut x: Vec<f64> = mask_to_signs(start, n)
        .into_iter()
        .map(f64::from)
        .collect();
    let mut h: Vec<f64> = (0..n)
        .map(|j| inst.column(j).iter().zip(&x).map(|(a, xi)| a * xi).sum())
        .collect();
    let mut value: f64 = h.iter().zip(&x).map(|(hj, xj)| hj * xj).sum();
    let mut best = Best {
        value,
        mask: start,
    };
    let mut gray = 0u32;
    for step in 1u64..(1u64 << inner) {
        let bit = step.trailing_zeros() as usize;
        gray ^= 1 << bit;
        let i = n - 1 - bit;
        let xi = x[i];
        let col = inst.column(i);
        value -= 4.0 * xi * (h[i] - col[i] * xi);
        for (hj, &aji) in h.iter_mut().zip(col) {
            *hj -= 2.0 * xi * aji;
        }
        x[i] = -xi;
        best.offer(value, start | gray, tol);
    }
    best
}

/// Exact maximizer with `x_0 = +1`; ties go to the lexicographically smallest
/// sign pattern (`+1` ordered before `-1`).
pub fn brute_force_max(inst: &ProblemInstance, n_limit: usize) -> Result<SignVector> {
    let n = inst.n();
    if n > n_limit || n > 31 {
        return Err(Error::TooLarge {
            n,
            limit: n_limit.min(31),
        });
    }
    let free = n - 1;
    let lead = free.min(BLOCK_BITS);
    let inner = free - lead;
    let tol = TIE_TOL * inst.abs_sum().max(f64::MIN_POSITIVE);
    let blocks = crate::par::map_indexed(1 << lead, |p| search_block(inst, p as u32, inner, tol));
    let mut best = blocks[0];
    for b in &blocks[1..] {
        best.offer(b.value, b.mask, tol);
    }
    let x = mask_to_signs(best.mask, n);
    let value = signed_value(inst, &x);
    Ok(SignVector { x, value })
}
