//! Exact symmetric Nash equilibrium of the `N`-player single-stage route
//! game, and the mean-field equilibrium of the same game.
//!
//! Each route cost `f^j(q)` (see [`SingleStageGame::route_cost`]) is
//! continuous and strictly increasing in the share `q` of other players on
//! the route. A symmetric equilibrium is a point of the simplex with a
//! multiplier `λ` such that `f^j(q^j) = λ` on used routes and
//! `f^j(0) ≥ λ` on unused ones. Inverting each `f^j` (clamped to `[0, 1]`)
//! gives shares `g^j(λ)`, and the equilibrium is found by bisecting `λ`
//! until the shares sum to one.

use crate::fictitious_play::SingleStageGame;

/// Inner tolerance `|f^j(q) − λ|` for route inversion.
pub const INNER_TOL: f64 = 1e-12;
/// Outer tolerance `|Σ_j g^j(λ) − 1|`.
pub const OUTER_TOL: f64 = 1e-10;

/// `f_N^j(q)`.
pub fn f_route(game: &SingleStageGame, route: usize, q: f64) -> f64 {
    game.route_cost(route, q)
}

/// Share `g^j(λ)` of route `j`: 0 below `f^j(0)`, 1 above `f^j(1)`, the
/// bisection root of `f^j(q) = λ` in between.
pub fn g_route(game: &SingleStageGame, route: usize, lambda: f64) -> f64 {
    if lambda <= f_route(game, route, 0.0) {
        return 0.0;
    }
    if lambda >= f_route(game, route, 1.0) {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let value = f_route(game, route, mid);
        if (value - lambda).abs() <= INNER_TOL {
            return mid;
        }
        if value < lambda {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // interval exhausted at machine resolution
    let (flo, fhi) = (f_route(game, route, lo), f_route(game, route, hi));
    if (flo - lambda).abs() <= (fhi - lambda).abs() {
        lo
    } else {
        hi
    }
}

fn total_share(game: &SingleStageGame, lambda: f64) -> f64 {
    (0..game.routes()).map(|j| g_route(game, j, lambda)).sum()
}

/// Smallest `λ` in `[lo, hi]` with `pred(λ)`, assuming `pred` is monotone
/// and holds at `hi`.
fn bisect_threshold(mut lo: f64, mut hi: f64, pred: impl Fn(f64) -> bool) -> f64 {
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return hi;
        }
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
}

/// Symmetric equilibrium `Q^{(N)*}` with its KKT certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    pub q: Vec<f64>,
    /// Common cost of the used routes.
    pub lambda: f64,
    /// `|f^j(q^j) − λ|` on used routes, `max(0, λ − f^j(0))` on unused.
    pub residuals: Vec<f64>,
    pub active: Vec<bool>,
}

impl EquilibriumResult {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }
}

/// KKT residuals of a candidate point and multiplier.
pub fn kkt_residuals(game: &SingleStageGame, q: &[f64], lambda: f64) -> Vec<f64> {
    q.iter()
        .enumerate()
        .map(|(j, &qj)| {
            if qj > 0.0 {
                (f_route(game, j, qj) - lambda).abs()
            } else {
                (lambda - f_route(game, j, 0.0)).max(0.0)
            }
        })
        .collect()
}

/// Outer bisection on `λ` for `Σ_j g^j(λ) = 1`.
///
/// If the total share is flat at 1 over an interval of `λ` (one route takes
/// everybody), the shares are the same throughout it and the midpoint is
/// used to evaluate them. The reported `λ` is the mean of `f^j(q^j)` over
/// the used routes, which is the multiplier the KKT conditions pin down.
pub fn solve_symmetric_ne(game: &SingleStageGame) -> EquilibriumResult {
    let routes = game.routes();
    let at_zero = (0..routes).map(|j| f_route(game, j, 0.0));
    let at_one = (0..routes).map(|j| f_route(game, j, 1.0));
    let lo = at_zero.fold(f64::INFINITY, f64::min) - 1.0;
    let hi = at_one.fold(f64::NEG_INFINITY, f64::max) + 1.0;

    let lower = bisect_threshold(lo, hi, |l| total_share(game, l) >= 1.0 - OUTER_TOL);
    let upper = bisect_threshold(lower, hi, |l| total_share(game, l) > 1.0 + OUTER_TOL);
    let mid = 0.5 * (lower + upper);

    let mut q: Vec<f64> = (0..routes).map(|j| g_route(game, j, mid)).collect();
    let total: f64 = q.iter().sum();
    for x in &mut q {
        *x /= total;
    }
    let active: Vec<bool> = q.iter().map(|&x| x > 0.0).collect();
    let used: Vec<f64> = (0..routes)
        .filter(|&j| active[j])
        .map(|j| f_route(game, j, q[j]))
        .collect();
    let lambda = used.iter().sum::<f64>() / used.len() as f64;
    let residuals = kkt_residuals(game, &q, lambda);
    EquilibriumResult {
        q,
        lambda,
        residuals,
        active,
    }
}

/// Mean-field equilibrium of the route game:
/// `Q*^j ∝ R^j exp(−C^j/α)`, normalized with max subtraction.
pub fn solve_single_stage_mfe(game: &SingleStageGame) -> Vec<f64> {
    let logits: Vec<f64> = game
        .costs()
        .iter()
        .zip(game.reference())
        .map(|(c, r)| r.ln() - c / game.alpha())
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn route_cost_endpoints() {
        let game = SingleStageGame::three_routes(200);
        for j in 0..3 {
            let c = game.costs()[j];
            let r = 1.0f64 / 3.0;
            assert!((f_route(&game, j, 0.0) - (c + (1.0 / (200.0 * r)).ln())).abs() < 1e-14);
            assert!((f_route(&game, j, 1.0) - (c - r.ln())).abs() < 1e-14);
        }
    }

    #[test]
    fn g_boundaries_and_round_trip() {
        let game = SingleStageGame::three_routes(200);
        for j in 0..3 {
            assert_eq!(g_route(&game, j, f_route(&game, j, 0.0)), 0.0);
            assert_eq!(g_route(&game, j, f_route(&game, j, 1.0)), 1.0);
            let q = g_route(&game, j, f_route(&game, j, 0.3));
            assert!((q - 0.3).abs() <= 1e-10, "{q}");
        }
    }

    #[test]
    fn symmetric_game_has_uniform_equilibrium() {
        for n in [1, 2, 5, 40, 300] {
            let game = SingleStageGame::new(vec![0.7; 4], vec![0.25; 4], 0.5, n).unwrap();
            let eq = solve_symmetric_ne(&game);
            for &x in &eq.q {
                assert!((x - 0.25).abs() < 1e-9, "n={n}: {:?}", eq.q);
            }
            assert!(eq.max_residual() <= 1e-8);
        }
    }

    #[test]
    fn dominant_route_takes_everyone() {
        // f^0(1) = 0 - log 0.5 < f^1(0) = 50 + log(1/(2 * 0.5))
        let game = SingleStageGame::new(vec![0.0, 50.0], vec![0.5, 0.5], 1.0, 2).unwrap();
        let eq = solve_symmetric_ne(&game);
        assert_eq!(eq.q, vec![1.0, 0.0]);
        assert_eq!(eq.active, vec![true, false]);
        assert!(eq.max_residual() <= 1e-12);
        assert!((eq.lambda - 2f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn mfe_closed_form() {
        let game = SingleStageGame::three_routes(10);
        let q = solve_single_stage_mfe(&game);
        for (a, b) in q.iter().zip([0.245, 0.665, 0.090]) {
            assert!((a - b).abs() < 5e-4);
        }
        let flat = SingleStageGame::new(vec![4.0; 3], vec![0.2, 0.3, 0.5], 0.3, 10).unwrap();
        let q = solve_single_stage_mfe(&flat);
        for (a, b) in q.iter().zip([0.2, 0.3, 0.5]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn mfe_survives_huge_costs() {
        let game = SingleStageGame::new(vec![1e6, 1e6 + 1.0], vec![0.5, 0.5], 0.01, 10).unwrap();
        let q = solve_single_stage_mfe(&game);
        assert!(q.iter().all(|x| x.is_finite()));
        assert!((q[0] - 1.0).abs() < 1e-15);
    }
}
