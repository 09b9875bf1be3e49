//! Brute-force distributional oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use hsa_core::field::{Fe, PrimeField};
use hsa_core::matrix::Matrix;
use hsa_core::security::LinearView;

/// `H` in base `q` of the joint image of `rows` over every `x` in `F_q^n`.
fn entropy(q: u64, n: usize, rows: &[&[Fe]]) -> f64 {
    let total = q.pow(n as u32);
    let mut counts: HashMap<Vec<u64>, u64> = HashMap::new();
    let mut x = vec![0u64; n];
    for _ in 0..total {
        let img: Vec<u64> = rows
            .iter()
            .map(|r| r.iter().zip(&x).map(|(a, b)| a.value() * b).sum::<u64>() % q)
            .collect();
        *counts.entry(img).or_default() += 1;
        // odometer increment
        for d in x.iter_mut() {
            *d += 1;
            if *d < q {
                break;
            }
            *d = 0;
        }
    }
    let t = total as f64;
    -counts.values().map(|&c| {
        let p = c as f64 / t;
        p * p.ln()
    }).sum::<f64>()
        / (q as f64).ln()
}

/// `I(A; B | C)` from the joint distribution of uniform secrets.
pub fn brute_cond_mi(q: u64, a: &Matrix, b: &Matrix, c: &Matrix) -> f64 {
    let n = a.cols();
    let rows = |ms: &[&Matrix]| -> Vec<Vec<Fe>> {
        ms.iter().flat_map(|m| m.row_iter().map(|r| r.to_vec())).collect()
    };
    let h = |ms: &[&Matrix]| {
        let r = rows(ms);
        let refs: Vec<&[Fe]> = r.iter().map(Vec::as_slice).collect();
        entropy(q, n, &refs)
    };
    h(&[a, c]) + h(&[b, c]) - h(&[a, b, c]) - h(&[c])
}

pub fn brute_view_mi(q: u64, a: &LinearView, b: &LinearView, c: &LinearView) -> f64 {
    brute_cond_mi(q, &a.matrix, &b.matrix, &c.matrix)
}

/// Plain determinant by cofactor expansion; independent of elimination.
pub fn det(field: &PrimeField, m: &Matrix) -> Fe {
    let n = m.rows();
    if n == 1 {
        return m.get(0, 0);
    }
    let mut total = Fe::ZERO;
    for c in 0..n {
        let keep: Vec<usize> = (0..n).filter(|&j| j != c).collect();
        let minor = m.select_rows(&(1..n).collect::<Vec<_>>()).select_columns(&keep);
        let term = field.mul(m.get(0, c), det(field, &minor));
        total = if c % 2 == 0 { field.add(total, term) } else { field.sub(total, term) };
    }
    total
}
