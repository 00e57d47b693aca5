//! Mask distances and overlap baselines.

use serde::{Deserialize, Serialize};

use crate::edt::edt;
use crate::error::{Error, Result};
use crate::tensor::{Field2, Mask2};

fn same_dims(a: &Mask2, b: &Mask2) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::shape(format!(
            "mask dims {:?} and {:?} differ",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

/// Σ over pixels of `m_p` of the distance to the nearest pixel of `m_c`.
///
/// When `m_c` is empty every term is the frame diagonal.
pub fn one_way_dst(m_p: &Mask2, m_c: &Mask2) -> Result<f64> {
    same_dims(m_p, m_c)?;
    edt(m_c).masked_sum(m_p)
}

/// `one_way_dst` with a precomputed transform of `m_c`.
pub fn one_way_dst_with(m_p: &Mask2, edt_c: &Field2) -> Result<f64> {
    edt_c.masked_sum(m_p)
}

/// Two-way distance of one image: `dst(p, c) + dst(c, p)`.
pub fn two_way_dst(m_p: &Mask2, m_c: &Mask2) -> Result<f64> {
    Ok(one_way_dst(m_p, m_c)? + one_way_dst(m_c, m_p)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineMetrics {
    pub jaccard: f64,
    pub nmi: f64,
    pub ari: f64,
}

fn comb2(n: f64) -> f64 {
    n * (n - 1.0) / 2.0
}

/// Jaccard index, plus NMI and adjusted Rand treating each mask as a
/// foreground/background partition of the pixels.
///
/// NMI uses natural logarithms and the arithmetic mean of the two entropies.
pub fn baseline_metrics(a: &Mask2, b: &Mask2) -> Result<BaselineMetrics> {
    same_dims(a, b)?;
    let mut table = [[0u64; 2]; 2];
    for (x, y) in a.bits().iter().zip(b.bits()) {
        table[usize::from(*x)][usize::from(*y)] += 1;
    }
    let inter = table[1][1] as f64;
    let union = (table[1][1] + table[1][0] + table[0][1]) as f64;
    let jaccard = if union == 0.0 { 1.0 } else { inter / union };

    let n = a.bits().len() as f64;
    let rows: Vec<f64> = table.iter().map(|r| (r[0] + r[1]) as f64).collect();
    let cols: Vec<f64> = (0..2).map(|j| (table[0][j] + table[1][j]) as f64).collect();
    let entropy = |v: &[f64]| -> f64 {
        v.iter()
            .filter(|c| **c > 0.0)
            .map(|c| {
                let p = c / n;
                -p * p.ln()
            })
            .sum()
    };
    let (hu, hv) = (entropy(&rows), entropy(&cols));
    let mut mi = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let nij = table[i][j] as f64;
            if nij > 0.0 {
                mi += nij / n * (n * nij / (rows[i] * cols[j])).ln();
            }
        }
    }
    let nmi = if hu == 0.0 && hv == 0.0 {
        1.0
    } else {
        (mi / ((hu + hv) / 2.0)).max(0.0)
    };

    let index: f64 = table.iter().flatten().map(|&c| comb2(c as f64)).sum();
    let sum_a: f64 = rows.iter().map(|&c| comb2(c)).sum();
    let sum_b: f64 = cols.iter().map(|&c| comb2(c)).sum();
    let expected = sum_a * sum_b / comb2(n);
    let max_index = (sum_a + sum_b) / 2.0;
    let ari = if max_index == expected {
        1.0
    } else {
        (index - expected) / (max_index - expected)
    };
    Ok(BaselineMetrics { jaccard, nmi, ari })
}

/// Maps a score in `[0, 1]` to `[-1, 1]` via `2q - 1`.
pub fn normalize_tcav(q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::invalid(format!("score {q} outside [0, 1]")));
    }
    Ok(2.0 * q - 1.0)
}
