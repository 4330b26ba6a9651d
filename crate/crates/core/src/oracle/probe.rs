//! Finite search over rearrangements of two risks for a pairing whose sum
//! has larger maximal correlation than the two parts taken separately.
//!
//! For equal-weight samples of size `n`, a rearrangement pair `(X̃, Ỹ)` only
//! matters through the pairing `j ↦ τ(j)` of rows of `A` with rows of `B`;
//! the alignment with the source is optimized inside the assignment.
//! Exhaustive mode therefore enumerates the `n!` pairings.

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::error::{Error, Result};
use super::assignment::{max_corr_rows, next_permutation};
use crate::sampling::stream_rng;

pub const PROBE_MAX: usize = 9;
pub const PROBE_EXHAUSTIVE_MAX: usize = 7;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeCertificate {
    /// Row of `B` paired with each row of `A`.
    pub pairing: Vec<usize>,
    /// Source row matched to each row of the paired sum.
    pub source_assignment: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeResult {
    pub best_found: f64,
    pub rho_a: f64,
    pub rho_b: f64,
    pub sum_of_parts: f64,
    pub certificate: ProbeCertificate,
    pub evaluated: usize,
    /// Largest `ρ(X̃+Ỹ) - ρ(X) - ρ(Y)` seen; positive values refute
    /// subadditivity.
    pub max_violation: f64,
    pub exhaustive: bool,
}

fn check_rows(name: &'static str, rows: &[Vec<f64>], n: usize, d: usize) -> Result<()> {
    if rows.len() != n {
        return Err(Error::param(name, format!("expected {n} rows, got {}", rows.len())));
    }
    for r in rows {
        if r.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: r.len(),
            });
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::param(name, "contains non-finite values"));
        }
    }
    Ok(())
}

fn rho(source: &[&[f64]], rows: &[Vec<f64>]) -> Result<(f64, Vec<usize>)> {
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let r = max_corr_rows(source, &refs)?;
    let mut assign = vec![0; rows.len()];
    for (j, k, _) in r.coupling.entries {
        assign[k] = j;
    }
    Ok((r.value, assign))
}

/// `trials == 0` requests exhaustive enumeration; otherwise `trials`
/// pairings are drawn uniformly at random from `seed`.
pub fn structure_neutrality_probe(
    source: &[Vec<f64>],
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    trials: usize,
    seed: u64,
) -> Result<ProbeResult> {
    let n = source.len();
    if n == 0 {
        return Err(Error::Empty("source"));
    }
    if n > PROBE_MAX {
        return Err(Error::TooLarge(format!("probe size {n} exceeds {PROBE_MAX}")));
    }
    let exhaustive = trials == 0;
    if exhaustive && n > PROBE_EXHAUSTIVE_MAX {
        return Err(Error::TooLarge(format!(
            "exhaustive probe limited to n <= {PROBE_EXHAUSTIVE_MAX}; pass a trial count"
        )));
    }
    let d = source[0].len();
    check_rows("source", source, n, d)?;
    check_rows("target_a", a, n, d)?;
    check_rows("target_b", b, n, d)?;
    let src: Vec<&[f64]> = source.iter().map(Vec::as_slice).collect();
    let (rho_a, _) = rho(&src, a)?;
    let (rho_b, _) = rho(&src, b)?;
    let sum_of_parts = rho_a + rho_b;

    let mut sum = vec![vec![0.0; d]; n];
    let mut evaluate = |pairing: &[usize]| -> Result<(f64, Vec<usize>)> {
        for (j, row) in sum.iter_mut().enumerate() {
            for (i, v) in row.iter_mut().enumerate() {
                *v = a[j][i] + b[pairing[j]][i];
            }
        }
        rho(&src, &sum)
    };

    let mut pairing: Vec<usize> = (0..n).collect();
    let (mut best_found, assign) = evaluate(&pairing)?;
    let mut certificate = ProbeCertificate {
        pairing: pairing.clone(),
        source_assignment: assign,
    };
    let mut evaluated = 1;
    let mut consider = |value: f64, pairing: &[usize], assign: Vec<usize>| {
        if value > best_found {
            best_found = value;
            certificate = ProbeCertificate {
                pairing: pairing.to_vec(),
                source_assignment: assign,
            };
        }
    };
    if exhaustive {
        while next_permutation(&mut pairing) {
            let (v, assign) = evaluate(&pairing)?;
            consider(v, &pairing, assign);
            evaluated += 1;
        }
    } else {
        let mut rng = stream_rng(seed, 0);
        for _ in 1..trials {
            pairing.shuffle(&mut rng);
            let (v, assign) = evaluate(&pairing)?;
            consider(v, &pairing, assign);
            evaluated += 1;
        }
    }
    Ok(ProbeResult {
        best_found,
        rho_a,
        rho_b,
        sum_of_parts,
        certificate,
        evaluated,
        max_violation: best_found - sum_of_parts,
        exhaustive,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_rows(rng: &mut rand_chacha::ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
            .collect()
    }

    #[test]
    fn constant_second_risk() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let src = random_rows(&mut rng, 5, 2);
        let a = random_rows(&mut rng, 5, 2);
        let b = vec![vec![0.3, -0.7]; 5];
        let r = structure_neutrality_probe(&src, &a, &b, 0, 0).unwrap();
        assert_eq!(r.evaluated, 120);
        assert!((r.best_found - r.sum_of_parts).abs() < 1e-12);
    }

    #[test]
    fn one_dimensional_exhaustive() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let src = random_rows(&mut rng, 4, 1);
            let a = random_rows(&mut rng, 4, 1);
            let b = random_rows(&mut rng, 4, 1);
            let r = structure_neutrality_probe(&src, &a, &b, 0, 0).unwrap();
            assert!((r.best_found - r.sum_of_parts).abs() < 1e-12);
            assert!(r.max_violation < 1e-12);
        }
    }

    #[test]
    fn two_dimensional_exhaustive() {
        let src: Vec<Vec<f64>> = [0.1, 0.3, 0.5, 0.7, 0.9]
            .iter()
            .zip([0.5, 0.9, 0.1, 0.7, 0.3])
            .map(|(&x, y)| vec![x, y])
            .collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let a = random_rows(&mut rng, 5, 2);
        let b = random_rows(&mut rng, 5, 2);
        let r = structure_neutrality_probe(&src, &a, &b, 0, 0).unwrap();
        assert!((r.best_found - r.sum_of_parts).abs() < 1e-10);
    }

    #[test]
    fn sampling_mode_is_seeded() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let src = random_rows(&mut rng, 9, 2);
        let a = random_rows(&mut rng, 9, 2);
        let b = random_rows(&mut rng, 9, 2);
        assert!(structure_neutrality_probe(&src, &a, &b, 0, 0).is_err());
        let r1 = structure_neutrality_probe(&src, &a, &b, 30, 4).unwrap();
        let r2 = structure_neutrality_probe(&src, &a, &b, 30, 4).unwrap();
        assert_eq!(r1.evaluated, 30);
        assert_eq!(r1.best_found, r2.best_found);
        assert_eq!(r1.certificate, r2.certificate);
        assert!(r1.max_violation < 1e-12);
    }

    #[test]
    fn rejects_oversized_and_ragged() {
        let rows = vec![vec![0.0]; 10];
        assert!(matches!(
            structure_neutrality_probe(&rows, &rows, &rows, 5, 0),
            Err(Error::TooLarge(_))
        ));
        let src = vec![vec![0.0], vec![1.0]];
        let bad = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert!(structure_neutrality_probe(&src, &src, &bad, 0, 0).is_err());
    }
}
