//! Partition agreement metrics: adjusted Rand index and (adjusted) mutual information.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Dense contingency table between two labelings.
#[derive(Debug, Clone)]
pub struct Contingency {
    pub table: Vec<Vec<usize>>,
    pub row_sums: Vec<usize>,
    pub col_sums: Vec<usize>,
    pub n: usize,
}

impl Contingency {
    pub fn new(a: &[usize], b: &[usize]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::Dimension(format!(
                "label vectors differ in length ({} vs {})",
                a.len(),
                b.len()
            )));
        }
        let ia = index_labels(a);
        let ib = index_labels(b);
        let (ra, rb) = (ia.iter().max().map_or(0, |m| m + 1), ib.iter().max().map_or(0, |m| m + 1));
        let mut table = vec![vec![0usize; rb]; ra];
        for (&x, &y) in ia.iter().zip(&ib) {
            table[x][y] += 1;
        }
        let row_sums = table.iter().map(|r| r.iter().sum()).collect();
        let col_sums = (0..rb).map(|j| table.iter().map(|r| r[j]).sum()).collect();
        Ok(Self {
            table,
            row_sums,
            col_sums,
            n: a.len(),
        })
    }

    /// Mutual information in nats.
    pub fn mutual_information(&self) -> f64 {
        let n = self.n as f64;
        let mut mi = 0.0;
        for (i, row) in self.table.iter().enumerate() {
            for (j, &nij) in row.iter().enumerate() {
                if nij > 0 {
                    let nij = nij as f64;
                    mi += nij / n * (n * nij / (self.row_sums[i] as f64 * self.col_sums[j] as f64)).ln();
                }
            }
        }
        mi.max(0.0)
    }

    pub fn row_entropy(&self) -> f64 {
        entropy(&self.row_sums, self.n)
    }

    pub fn col_entropy(&self) -> f64 {
        entropy(&self.col_sums, self.n)
    }
}

/// Map arbitrary labels to 0..r in order of first appearance.
fn index_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

/// Shannon entropy (nats) of a count vector.
pub fn entropy(counts: &[usize], n: usize) -> f64 {
    let n = n as f64;
    -counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

fn comb2(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index (Hubert-Arabie).
pub fn ari(a: &[usize], b: &[usize]) -> Result<f64> {
    let ct = Contingency::new(a, b)?;
    let index: f64 = ct.table.iter().flatten().map(|&x| comb2(x)).sum();
    let sa: f64 = ct.row_sums.iter().map(|&x| comb2(x)).sum();
    let sb: f64 = ct.col_sums.iter().map(|&x| comb2(x)).sum();
    let total = comb2(ct.n);
    let expected = if total > 0.0 { sa * sb / total } else { 0.0 };
    let max = 0.5 * (sa + sb);
    if (max - expected).abs() < f64::EPSILON * max.max(1.0) {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Normalized mutual information with arithmetic-mean normalization.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    let ct = Contingency::new(a, b)?;
    let (ha, hb) = (ct.row_entropy(), ct.col_entropy());
    if ha == 0.0 && hb == 0.0 {
        return Ok(1.0);
    }
    let denom = 0.5 * (ha + hb);
    Ok((ct.mutual_information() / denom).clamp(0.0, 1.0))
}

/// Expected mutual information under the hypergeometric permutation model.
pub fn expected_mutual_information(ct: &Contingency) -> f64 {
    let n = ct.n;
    let nf = n as f64;
    let lg = |x: usize| ln_gamma(x as f64 + 1.0);
    let lg_n = lg(n);
    let mut emi = 0.0;
    for &ai in &ct.row_sums {
        for &bj in &ct.col_sums {
            let lo = (ai + bj).saturating_sub(n).max(1);
            let hi = ai.min(bj);
            if lo > hi {
                continue;
            }
            let fixed = lg(ai) + lg(bj) + lg(n - ai) + lg(n - bj) - lg_n;
            for nij in lo..=hi {
                let nijf = nij as f64;
                let term = nijf / nf * (nf * nijf / (ai as f64 * bj as f64)).ln();
                let log_p = fixed - lg(nij) - lg(ai - nij) - lg(bj - nij) - lg(n + nij - ai - bj);
                emi += term * log_p.exp();
            }
        }
    }
    emi
}

/// Adjusted mutual information (arithmetic normalization). Can be negative when
/// agreement is below chance.
pub fn ami(a: &[usize], b: &[usize]) -> Result<f64> {
    let ct = Contingency::new(a, b)?;
    let (ha, hb) = (ct.row_entropy(), ct.col_entropy());
    let mi = ct.mutual_information();
    let emi = expected_mutual_information(&ct);
    let denom = 0.5 * (ha + hb) - emi;
    if denom.abs() < 1e-15 {
        return Ok(1.0);
    }
    Ok((mi - emi) / denom)
}

/// The three agreement scores together.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ari: f64,
    pub nmi: f64,
    pub ami: f64,
}

impl MetricsReport {
    pub fn compute(a: &[usize], b: &[usize]) -> Result<Self> {
        Ok(Self {
            ari: ari(a, b)?,
            nmi: nmi(a, b)?,
            ami: ami(a, b)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Rand-index ingredients by explicit enumeration of pairs.
    fn brute_ari(a: &[usize], b: &[usize]) -> f64 {
        let n = a.len();
        let (mut both, mut in_a, mut in_b) = (0.0, 0.0, 0.0);
        for i in 0..n {
            for j in (i + 1)..n {
                let sa = a[i] == a[j];
                let sb = b[i] == b[j];
                if sa && sb {
                    both += 1.0;
                }
                if sa {
                    in_a += 1.0;
                }
                if sb {
                    in_b += 1.0;
                }
            }
        }
        let total = (n * (n - 1) / 2) as f64;
        let expected = in_a * in_b / total;
        (both - expected) / (0.5 * (in_a + in_b) - expected)
    }

    #[test]
    fn ari_reference_values() {
        assert_eq!(ari(&[1, 1, 2, 2], &[1, 1, 2, 2]).unwrap(), 1.0);
        assert_eq!(ari(&[1, 1, 2, 2], &[7, 7, 3, 3]).unwrap(), 1.0);
        assert!((ari(&[1, 1, 2, 2], &[1, 2, 1, 2]).unwrap() + 0.5).abs() < 1e-12);
        assert!((brute_ari(&[1, 1, 2, 2], &[1, 2, 1, 2]) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn ari_against_trivial_partition_is_zero() {
        assert_eq!(ari(&[0, 0, 1, 1, 2], &[0, 0, 0, 0, 0]).unwrap(), 0.0);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(ari(&[0, 1], &[0]), Err(Error::Dimension(_))));
        assert!(nmi(&[0, 1], &[0]).is_err());
        assert!(ami(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn information_measures_identical_and_independent() {
        let a = [0, 0, 1, 1, 2, 2];
        assert!((nmi(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!((ami(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let x = [0, 0, 1, 1];
        let y = [0, 1, 0, 1];
        assert!(nmi(&x, &y).unwrap().abs() < 1e-12);
        // below-chance agreement gives a negative AMI
        assert!(ami(&x, &y).unwrap() < 0.0);
    }

    proptest! {
        #[test]
        fn ari_matches_pair_enumeration(a in prop::collection::vec(0usize..4, 6..30), seed in 0usize..1000) {
            let b: Vec<usize> = a.iter().enumerate().map(|(i, &x)| (x + (i * 7 + seed) % 3) % 4).collect();
            let fast = ari(&a, &b).unwrap();
            let slow = brute_ari(&a, &b);
            if slow.is_finite() {
                prop_assert!((fast - slow).abs() < 1e-10);
            }
        }

        #[test]
        fn metrics_invariant_to_relabeling(a in prop::collection::vec(0usize..4, 5..25), b in prop::collection::vec(0usize..3, 25)) {
            let b = &b[..a.len()];
            let relabeled: Vec<usize> = a.iter().map(|&x| 10 - x).collect();
            let r1 = MetricsReport::compute(&a, b).unwrap();
            let r2 = MetricsReport::compute(&relabeled, b).unwrap();
            prop_assert!((r1.ari - r2.ari).abs() < 1e-12);
            prop_assert!((r1.nmi - r2.nmi).abs() < 1e-12);
            prop_assert!((r1.ami - r2.ami).abs() < 1e-12);
            prop_assert!(r1.ari <= 1.0 + 1e-12);
            prop_assert!((0.0..=1.0).contains(&r1.nmi));
        }
    }
}
