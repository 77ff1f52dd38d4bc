//! Rank-sum and two-proportion significance tests.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::factorial::ln_factorial;

use super::AnalysisError;

/// Below this many observations on either side the rank-sum test enumerates
/// the permutation distribution instead of using the normal approximation.
const EXACT_BELOW: usize = 8;

/// Expected cell count under which the proportion test switches to the
/// conditional hypergeometric test.
const MIN_EXPECTED: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U statistic of the first sample.
    pub u: f64,
    pub p_two_sided: f64,
    pub method: TestMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProportionTest {
    pub p_two_sided: f64,
    pub method: TestMethod,
}

/// Midranks (1-based) of the pooled sample, doubled so that ties stay integral.
fn doubled_midranks(pooled: &[f64]) -> (Vec<u64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&i, &j| pooled[i].total_cmp(&pooled[j]));
    let mut ranks = vec![0u64; pooled.len()];
    let mut tie_sizes = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && pooled[order[end]] == pooled[order[start]] {
            end += 1;
        }
        // Ranks start+1 ..= end share the doubled midrank start + 1 + end.
        let doubled = (start + 1 + end) as u64;
        for &idx in &order[start..end] {
            ranks[idx] = doubled;
        }
        tie_sizes.push(end - start);
        start = end;
    }
    (ranks, tie_sizes)
}

/// Two-sided Mann-Whitney U test with midrank ties.
///
/// Uses exact enumeration of all labelings of the pooled midranks when either
/// side has fewer than 8 observations, and the tie-corrected normal
/// approximation with continuity correction otherwise.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney, AnalysisError> {
    if a.is_empty() || b.is_empty() {
        return Err(AnalysisError::EmptySample);
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    if pooled.iter().any(|v| !v.is_finite()) {
        return Err(AnalysisError::NonFinite {
            label: "mann_whitney_u".into(),
            index: pooled.iter().position(|v| !v.is_finite()).unwrap_or(0),
        });
    }
    let (na, nb) = (a.len(), b.len());
    let (ranks, ties) = doubled_midranks(&pooled);
    let doubled_rank_sum: u64 = ranks[..na].iter().sum();
    // 2U = 2R - na(na+1)
    let doubled_u = doubled_rank_sum as i64 - (na * (na + 1)) as i64;
    let u = doubled_u as f64 / 2.0;

    if na < EXACT_BELOW || nb < EXACT_BELOW {
        let p = exact_p(&ranks, na, doubled_u);
        return Ok(MannWhitney {
            u,
            p_two_sided: p,
            method: TestMethod::Exact,
        });
    }

    let n = (na + nb) as f64;
    let mean = na as f64 * nb as f64 / 2.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (n * (n - 1.0));
    let var = na as f64 * nb as f64 / 12.0 * ((n + 1.0) - tie_term);
    let p = if var <= 0.0 {
        1.0
    } else {
        let dev = ((u - mean).abs() - 0.5).max(0.0);
        let z = dev / var.sqrt();
        erfc(z / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
    };
    Ok(MannWhitney {
        u,
        p_two_sided: p,
        method: TestMethod::NormalApprox,
    })
}

/// P(|U - mu| >= |u - mu|) over all C(n, na) equally likely assignments of
/// the pooled doubled ranks to the first sample.
fn exact_p(doubled_ranks: &[u64], na: usize, doubled_u: i64) -> f64 {
    let max_sum: u64 = doubled_ranks.iter().sum();
    let width = max_sum as usize + 1;
    // ways[k][s]: number of k-subsets of the ranks seen so far with sum s.
    let mut ways = vec![vec![0f64; width]; na + 1];
    ways[0][0] = 1.0;
    for &r in doubled_ranks {
        let r = r as usize;
        for k in (1..=na).rev() {
            let (lower, upper) = ways.split_at_mut(k);
            let prev = &lower[k - 1];
            let cur = &mut upper[0];
            for s in (r..width).rev() {
                if prev[s - r] != 0.0 {
                    cur[s] += prev[s - r];
                }
            }
        }
    }
    let nb = doubled_ranks.len() - na;
    // Doubled deviations from the null mean: 2U - na*nb.
    let offset = (na * (na + 1)) as i64;
    let center = (na * nb) as i64;
    let observed = (doubled_u - center).abs();
    let (mut extreme, mut total) = (0f64, 0f64);
    for (s, &count) in ways[na].iter().enumerate() {
        if count == 0.0 {
            continue;
        }
        total += count;
        let dev = (s as i64 - offset - center).abs();
        if dev >= observed {
            extreme += count;
        }
    }
    (extreme / total).clamp(0.0, 1.0)
}

/// Two-sided comparison of two binomial proportions `k1/n1` and `k2/n2`.
///
/// Uses the pooled z-test unless some expected cell of the 2x2 table is below
/// 5 or some observed cell is empty, in which case the conditional
/// hypergeometric (Fisher) test is used.
pub fn two_proportion_test(k1: u64, n1: u64, k2: u64, n2: u64) -> Result<ProportionTest, AnalysisError> {
    for (k, n) in [(k1, n1), (k2, n2)] {
        if n == 0 {
            return Err(AnalysisError::EmptySample);
        }
        if k > n {
            return Err(AnalysisError::Domain { k, n });
        }
    }
    let successes = k1 + k2;
    let total = n1 + n2;
    if successes == 0 || successes == total {
        return Ok(ProportionTest {
            p_two_sided: 1.0,
            method: TestMethod::Exact,
        });
    }
    let pooled = successes as f64 / total as f64;
    let expected = [
        n1 as f64 * pooled,
        n1 as f64 * (1.0 - pooled),
        n2 as f64 * pooled,
        n2 as f64 * (1.0 - pooled),
    ];
    let observed = [k1, n1 - k1, k2, n2 - k2];
    if expected.iter().any(|&e| e < MIN_EXPECTED) || observed.contains(&0) {
        return Ok(ProportionTest {
            p_two_sided: fisher_exact(k1, n1, k2, n2),
            method: TestMethod::Exact,
        });
    }
    let se = (pooled * (1.0 - pooled) * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt();
    let z = (k1 as f64 / n1 as f64 - k2 as f64 / n2 as f64) / se;
    Ok(ProportionTest {
        p_two_sided: erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0),
        method: TestMethod::NormalApprox,
    })
}

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

fn fisher_exact(k1: u64, n1: u64, k2: u64, n2: u64) -> f64 {
    let m = k1 + k2;
    let total = n1 + n2;
    let ln_denominator = ln_choose(total, m);
    let prob = |x: u64| (ln_choose(n1, x) + ln_choose(n2, m - x) - ln_denominator).exp();
    let observed = prob(k1);
    let lo = m.saturating_sub(n2);
    let hi = m.min(n1);
    let p: f64 = (lo..=hi).map(prob).filter(|&q| q <= observed * (1.0 + 1e-7)).sum();
    p.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_three_by_three() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r.u, 0.0);
        assert_eq!(r.method, TestMethod::Exact);
        assert!((r.p_two_sided - 0.1).abs() < 1e-12);
    }

    #[test]
    fn identical_samples_give_unit_p() {
        let a = [3.0, 1.0, 4.0, 1.0, 5.0];
        let r = mann_whitney_u(&a, &a).unwrap();
        assert_eq!(r.p_two_sided, 1.0);
        assert_eq!(r.u, 12.5);
    }

    #[test]
    fn empty_sample_is_error() {
        assert!(matches!(mann_whitney_u(&[], &[1.0]), Err(AnalysisError::EmptySample)));
    }

    #[test]
    fn large_shifted_samples_are_significant() {
        let a: Vec<f64> = (0..100).map(|i| 5.0 + (i % 3) as f64).collect();
        let b: Vec<f64> = (0..100).map(|i| 6.0 + (i % 3) as f64).collect();
        let r = mann_whitney_u(&a, &b).unwrap();
        assert_eq!(r.method, TestMethod::NormalApprox);
        assert!(r.p_two_sided < 0.001);
    }

    #[test]
    fn equal_proportions() {
        let r = two_proportion_test(50, 100, 50, 100).unwrap();
        assert_eq!(r.p_two_sided, 1.0);
        assert_eq!(r.method, TestMethod::NormalApprox);
    }

    #[test]
    fn empty_cell_uses_hypergeometric() {
        let r = two_proportion_test(0, 10, 10, 10).unwrap();
        assert_eq!(r.method, TestMethod::Exact);
        // Only the two extreme tables are as unlikely as the observed one.
        let expected = 2.0 / 184_756.0;
        assert!((r.p_two_sided - expected).abs() < 1e-12);
    }

    #[test]
    fn k_above_n_is_domain_error() {
        assert!(matches!(
            two_proportion_test(11, 10, 1, 10),
            Err(AnalysisError::Domain { k: 11, n: 10 })
        ));
    }
}
