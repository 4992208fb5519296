//! Small numerical kernels shared by the solvers: log-sum-exp, binomial and
//! Poisson-binomial pmfs, and the expected log-share sums that appear in the
//! toll expectations.

/// `log Σ exp(x)` with max subtraction. Returns `-inf` for an empty input or
/// when every term is `-inf`.
pub fn log_sum_exp<I>(terms: I) -> f64
where
    I: IntoIterator<Item = f64>,
    I::IntoIter: Clone,
{
    let iter = terms.into_iter();
    let max = iter.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = iter.map(|x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Sums `terms` in order of increasing magnitude.
pub fn sum_by_magnitude(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    terms.into_iter().sum()
}

/// `ln(n!) − ln(√(2πn) (n/e)^n)` at small integers.
const STIRLING_ERROR: [f64; 16] = [
    0.0,
    0.08106146679532725821967026,
    0.04134069595540929409382208,
    0.02767792568499833914878929,
    0.02079067210376509311152277,
    0.01664469118982119216319487,
    0.01387612882307074799874573,
    0.01189670994589177009505572,
    0.01041126526197209649747857,
    0.009255462182712732917728637,
    0.008330563433362871256469319,
    0.007573675487951840794972024,
    0.006942840107209529865664153,
    0.006408994188004207068439631,
    0.005951370112758847735624416,
    0.00555473355196280137103869,
];

/// Error of Stirling's approximation to `ln(n!)`.
fn stirling_error(n: usize) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n < STIRLING_ERROR.len() {
        return STIRLING_ERROR[n];
    }
    let x = n as f64;
    let xx = x * x;
    if n > 500 {
        (S0 - S1 / xx) / x
    } else if n > 80 {
        (S0 - (S1 - S2 / xx) / xx) / x
    } else if n > 35 {
        (S0 - (S1 - (S2 - S3 / xx) / xx) / xx) / x
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / xx) / xx) / xx) / xx) / x
    }
}

/// Deviance term `x ln(x/m) + m − x`, without cancellation when `x ≈ m`.
fn deviance(x: f64, m: f64) -> f64 {
    if (x - m).abs() < 0.1 * (x + m) {
        let mut v = (x - m) / (x + m);
        let mut s = (x - m) * v;
        let mut ej = 2.0 * x * v;
        v *= v;
        for j in 1..1000 {
            ej *= v;
            let next = s + ej / (2 * j + 1) as f64;
            if next == s {
                return next;
            }
            s = next;
        }
        s
    } else {
        x * (x / m).ln() + m - x
    }
}

/// Binomial(n, p) pmf over `0..=n` by the saddle-point expansion, accurate to
/// a few ulps relative at every `k` (plain `exp(ln C + k ln p + …)` loses
/// digits to the size of `ln n!`).
pub fn binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    let mut pmf = vec![0.0; n + 1];
    if p <= 0.0 {
        pmf[0] = 1.0;
        return pmf;
    }
    if p >= 1.0 {
        pmf[n] = 1.0;
        return pmf;
    }
    let terms = BinomialTerms::new(n);
    for (k, slot) in pmf.iter_mut().enumerate() {
        *slot = terms.pmf(k, p);
    }
    pmf
}

/// `p`-independent parts of the saddle-point binomial pmf at fixed `n`.
#[derive(Debug, Clone)]
struct BinomialTerms {
    n: usize,
    /// `stirling(n) − stirling(k) − stirling(n−k) − ½ ln(2π k (n−k)/n)` for
    /// `0 < k < n`.
    constant: Vec<f64>,
}

impl BinomialTerms {
    fn new(n: usize) -> Self {
        let nf = n as f64;
        let constant = (0..=n)
            .map(|k| {
                if k == 0 || k == n {
                    return 0.0;
                }
                let kf = k as f64;
                let lf = (2.0 * std::f64::consts::PI).ln() + kf.ln() + (-kf / nf).ln_1p();
                stirling_error(n) - stirling_error(k) - stirling_error(n - k) - 0.5 * lf
            })
            .collect();
        Self { n, constant }
    }

    /// Requires `0 < p < 1`.
    fn pmf(&self, k: usize, p: f64) -> f64 {
        if self.n == 0 {
            return 1.0;
        }
        let n = self.n as f64;
        let q = 1.0 - p;
        if k == 0 {
            let lc = if p < 0.1 { -deviance(n, n * q) - n * p } else { n * (-p).ln_1p() };
            return lc.exp();
        }
        if k == self.n {
            let lc = if q < 0.1 { -deviance(n, n * p) - n * q } else { n * p.ln() };
            return lc.exp();
        }
        let kf = k as f64;
        (self.constant[k] - deviance(kf, n * p) - deviance(n - kf, n * q)).exp()
    }
}

/// Poisson-binomial pmf of a sum of independent Bernoulli(p_m) variables, by
/// sequential convolution. O(M²) for M probabilities.
pub fn poisson_binomial_pmf(probs: &[f64]) -> Vec<f64> {
    let mut pmf = Vec::with_capacity(probs.len() + 1);
    pmf.push(1.0);
    for &p in probs {
        let q = 1.0 - p;
        pmf.push(0.0);
        for k in (1..pmf.len()).rev() {
            pmf[k] = pmf[k] * q + pmf[k - 1] * p;
        }
        pmf[0] *= q;
    }
    pmf
}

/// `Σ_k log((k+1)/N) · pmf[k]`: the expected log share of a link that carries
/// one tagged player plus `k` others, out of `N` players in total.
pub fn expected_log_share(pmf: &[f64], n_players: usize) -> f64 {
    let n = n_players as f64;
    let terms = pmf
        .iter()
        .enumerate()
        .filter(|(_, &w)| w != 0.0)
        .map(|(k, &w)| ((k + 1) as f64 / n).ln() * w)
        .collect();
    sum_by_magnitude(terms)
}

/// Expected log share when the `N - 1` other players each land on the link
/// independently with probability `p`.
pub fn binomial_log_share(n_players: usize, p: f64) -> f64 {
    assert!(n_players >= 1, "player count must be at least 1");
    expected_log_share(&binomial_pmf(n_players - 1, p), n_players)
}

/// Precomputed binomial weights for repeated evaluation of
/// [`binomial_log_share`] at a fixed player count.
#[derive(Debug, Clone)]
pub struct LogShareKernel {
    players: usize,
    terms: BinomialTerms,
    log_share: Vec<f64>,
}

impl LogShareKernel {
    pub fn new(players: usize) -> Self {
        assert!(players >= 1, "player count must be at least 1");
        let others = players - 1;
        Self {
            players,
            terms: BinomialTerms::new(others),
            log_share: (0..=others)
                .map(|k| ((k + 1) as f64 / players as f64).ln())
                .collect(),
        }
    }

    pub fn players(&self) -> usize {
        self.players
    }

    /// `Σ_k log((k+1)/N) Bin(N−1, k; p)`.
    pub fn eval(&self, p: f64) -> f64 {
        let others = self.players - 1;
        if p <= 0.0 {
            return self.log_share[0];
        }
        if p >= 1.0 {
            return self.log_share[others];
        }
        let terms = (0..=others)
            .filter_map(|k| {
                let w = self.terms.pmf(k, p);
                (w != 0.0).then(|| w * self.log_share[k])
            })
            .collect();
        sum_by_magnitude(terms)
    }
}

/// Shannon entropy (nats) of a probability vector.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lse_matches_direct_sum_in_safe_range() {
        let xs = [-1.0, 0.5, 2.0];
        let direct = xs.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(xs) - direct).abs() < 1e-15);
    }

    #[test]
    fn lse_survives_extreme_magnitudes() {
        let v = log_sum_exp([-1e6, -1e6 - 1.0]);
        assert!((v - (-1e6 + (1.0 + (-1.0f64).exp()).ln())).abs() < 1e-9);
        assert_eq!(log_sum_exp(Vec::<f64>::new()), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp([f64::NEG_INFINITY, 0.0]), 0.0);
    }

    #[test]
    fn binomial_pmf_small_case() {
        let pmf = binomial_pmf(3, 0.25);
        let want = [27.0 / 64.0, 27.0 / 64.0, 9.0 / 64.0, 1.0 / 64.0];
        for (a, b) in pmf.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn stirling_error_is_continuous_across_the_table_edge() {
        // ln(16!) − ln(√(32π) (16/e)^16), 16! = 20922789888000
        let exact = 20922789888000f64.ln() - 16.5 * 16f64.ln() + 16.0 - (2.0 * std::f64::consts::PI).sqrt().ln();
        assert!((stirling_error(16) - exact).abs() < 1e-13);
    }

    #[test]
    fn binomial_pmf_matches_exact_binomial_coefficients() {
        // C(50, k) is exact in f64 up to 2^53; p = 1/2 makes the weights exact
        let n = 50;
        let mut c = 1.0f64;
        let pmf = binomial_pmf(n, 0.5);
        for k in 0..=n {
            let exact = c / 2f64.powi(n as i32);
            // exp(x) carries relative error of order |x| ulp
            let tol = 8.0 * f64::EPSILON * (1.0 + exact.ln().abs());
            assert!((pmf[k] - exact).abs() <= tol * exact, "k={k}: {} vs {exact}", pmf[k]);
            c = c * (n - k) as f64 / (k + 1) as f64;
        }
    }

    #[test]
    fn binomial_pmf_degenerate_endpoints() {
        assert_eq!(binomial_pmf(4, 0.0), vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(binomial_pmf(4, 1.0), vec![0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(binomial_pmf(0, 0.3), vec![1.0]);
    }

    #[test]
    fn binomial_pmf_large_n_is_normalized() {
        let pmf = binomial_pmf(100_000, 0.09);
        let total: f64 = pmf.iter().sum();
        assert!((total - 1.0).abs() < 1e-9, "{total}");
        assert!(pmf.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn poisson_binomial_two_term_expansion() {
        let (p1, p2) = (0.3, 0.8);
        let pmf = poisson_binomial_pmf(&[p1, p2]);
        let want = [(1.0 - p1) * (1.0 - p2), p1 * (1.0 - p2) + p2 * (1.0 - p1), p1 * p2];
        for (a, b) in pmf.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn expected_log_share_single_player() {
        assert_eq!(binomial_log_share(1, 0.4), 0.0);
        // every other player surely on the link: log(N/N)
        assert!(binomial_log_share(50, 1.0).abs() < 1e-15);
        assert!((binomial_log_share(50, 0.0) - (1.0f64 / 50.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn kernel_matches_one_off_sum() {
        for n in [1, 2, 7, 200, 3000] {
            let kernel = LogShareKernel::new(n);
            for p in [0.0, 1e-6, 0.09, 0.5, 0.97, 1.0] {
                let a = kernel.eval(p);
                let b = binomial_log_share(n, p);
                assert!((a - b).abs() <= 1e-13, "n={n} p={p}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn entropy_of_uniform() {
        let p = [0.25; 4];
        assert!((entropy(&p) - 4f64.ln()).abs() < 1e-15);
        assert_eq!(entropy(&[1.0, 0.0]), 0.0);
    }
}
