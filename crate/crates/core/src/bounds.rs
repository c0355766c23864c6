//! The minimal Stackelberg-action frequency `F*` and its variants.
//!
//! `F*` minimises `q·α1(a*) + (1-q)·α2(a*)` over two incentive-compatible
//! profiles `(α1, b1)`, `(α2, b2)` and a weight `q`, subject to the mixture
//! paying at least the Stackelberg payoff. The program is bilinear, but with
//! `x = q·α1` and `y = (1-q)·α2` it becomes one LP per reply pair `(b1, b2)`:
//! best-reply conditions are homogeneous in `α`, so they survive the scaling.

use crate::game::{MixedAction, StageGame};
use crate::lp::{LinearProgram, LpError, Relation};
use crate::polytope::{self, Row};
use crate::stage::{self, StageError, DEFAULT_TOL};
use serde::Serialize;
use thiserror::Error;

/// Grid enumerations above this many tuples are refused.
pub const GRID_TUPLE_LIMIT: u128 = 100_000_000;
const MASS_EPS: f64 = 1e-12;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum BoundsError {
    #[error("Stackelberg action or reply is not unique")]
    NotUniqueStackelberg,
    #[error("game is not monotone-supermodular under its action orders")]
    NotMonotoneSupermodular,
    #[error(transparent)]
    Stage(#[from] StageError),
    #[error("epsilon must be finite and nonnegative, got {0}")]
    BadEpsilon(f64),
    #[error("epsilons must be sorted ascending")]
    UnsortedEpsilons,
    #[error("grid resolution must be at least 1")]
    BadResolution,
    #[error("grid enumeration needs {0} tuples, above the limit")]
    GridTooLarge(u128),
    #[error("no feasible profile pair; this indicates a solver bug: {0}")]
    Internal(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lp,
    Prop1,
    Grid,
}

/// The optimising profile pair and mixing weight.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqWitness {
    pub alpha1: MixedAction,
    pub b1: usize,
    pub alpha2: MixedAction,
    pub b2: usize,
    pub q: f64,
    /// One component carries zero mass; its profile duplicates the other.
    pub degenerate: bool,
}

impl FreqWitness {
    /// Marginal over player 1's actions, `q·α1 + (1-q)·α2`.
    pub fn marginal(&self) -> Vec<f64> {
        self.alpha1
            .probs()
            .iter()
            .zip(self.alpha2.probs())
            .map(|(a, b)| self.q * a + (1.0 - self.q) * b)
            .collect()
    }

    pub fn payoff(&self, game: &StageGame) -> f64 {
        self.q * game.u1_mixed(self.alpha1.probs(), self.b1)
            + (1.0 - self.q) * game.u1_mixed(self.alpha2.probs(), self.b2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreqBoundResult {
    pub value: f64,
    pub witness: FreqWitness,
    pub method: Method,
}

/// A polytope of mixed actions on which `b` is a best reply, given by its
/// vertices. Used both for the pieces of `Γ*` and for the single lowest pair.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaStarPiece {
    pub b: usize,
    /// Replies tied with `b` throughout the piece (includes `b`).
    pub tied: Vec<usize>,
    pub vertices: Vec<Vec<f64>>,
}

fn require_unique(game: &StageGame) -> Result<stage::StackelbergResult, BoundsError> {
    let st = stage::stackelberg(game, DEFAULT_TOL);
    if !st.is_unique() {
        return Err(BoundsError::NotUniqueStackelberg);
    }
    Ok(st)
}

fn check_epsilon(eps: f64) -> Result<(), BoundsError> {
    if !eps.is_finite() || eps < 0.0 {
        return Err(BoundsError::BadEpsilon(eps));
    }
    Ok(())
}

/// Split an LP solution `(x, y)` back into `(α1, q, α2)`.
fn witness_from_scaled(x: &[f64], b1: usize, y: &[f64], b2: usize) -> FreqWitness {
    let q: f64 = x.iter().sum();
    let r: f64 = y.iter().sum();
    if q <= MASS_EPS {
        let a = MixedAction::from_approx(y.to_vec());
        return FreqWitness {
            alpha1: a.clone(),
            b1: b2,
            alpha2: a,
            b2,
            q: 0.0,
            degenerate: true,
        };
    }
    if r <= MASS_EPS {
        let a = MixedAction::from_approx(x.to_vec());
        return FreqWitness {
            alpha1: a.clone(),
            b1,
            alpha2: a,
            b2: b1,
            q: 1.0,
            degenerate: true,
        };
    }
    FreqWitness {
        alpha1: MixedAction::from_approx(x.to_vec()),
        b1,
        alpha2: MixedAction::from_approx(y.to_vec()),
        b2,
        q: q / (q + r),
        degenerate: false,
    }
}

fn clamp_unit(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// `F*(u1, u2)` and its relaxations, solved exactly.
///
/// With `epsilon > 0` the payoff floor drops to `u1(a*, b*) - epsilon`; with
/// `equality` the payoff constraint binds (`F**`).
pub fn fstar(
    game: &StageGame,
    epsilon: f64,
    equality: bool,
) -> Result<FreqBoundResult, BoundsError> {
    check_epsilon(epsilon)?;
    let st = require_unique(game)?;
    let n = game.n1();
    let target = st.v_star - epsilon;
    let mut best: Option<(f64, FreqWitness)> = None;
    for b1 in 0..game.n2() {
        for b2 in 0..game.n2() {
            let mut lp = LinearProgram::new(2 * n);
            let mut obj = vec![0.0; 2 * n];
            obj[st.a_star] = 1.0;
            obj[n + st.a_star] = 1.0;
            lp.minimize(obj);
            lp.add(vec![1.0; 2 * n], Relation::Eq, 1.0);
            for (offset, b) in [(0, b1), (n, b2)] {
                for other in (0..game.n2()).filter(|&o| o != b) {
                    let mut c = vec![0.0; 2 * n];
                    for a in 0..n {
                        c[offset + a] = game.u2(a, b) - game.u2(a, other);
                    }
                    lp.add(c, Relation::Ge, 0.0);
                }
            }
            let mut pay = vec![0.0; 2 * n];
            for a in 0..n {
                pay[a] = game.u1(a, b1);
                pay[n + a] = game.u1(a, b2);
            }
            let rel = if equality { Relation::Eq } else { Relation::Ge };
            lp.add(pay, rel, target);
            let sol = match lp.solve() {
                Ok(s) => s,
                Err(LpError::Infeasible) => continue,
                Err(e) => return Err(BoundsError::Internal(e.to_string())),
            };
            let value = clamp_unit(sol.x[st.a_star] + sol.x[n + st.a_star]);
            if best.as_ref().is_none_or(|(v, _)| value < v - MASS_EPS) {
                let w = witness_from_scaled(&sol.x[..n], b1, &sol.x[n..], b2);
                best = Some((value, w));
            }
        }
    }
    let (value, witness) =
        best.ok_or_else(|| BoundsError::Internal("every reply pair infeasible".into()))?;
    Ok(FreqBoundResult {
        value,
        witness,
        method: Method::Lp,
    })
}

/// Pieces of `Γ*`: mixed actions with at least two best replies, paired with
/// the tied reply that is best for player 1.
///
/// For each tied set `S` that occurs as the exact best-reply set somewhere,
/// and each `b` in `S`, the region where `b` is player 1's favourite within
/// `S` is a polytope; nonempty ones are returned with their vertices.
pub fn gamma_star(game: &StageGame) -> Vec<GammaStarPiece> {
    let n1 = game.n1();
    let n2 = game.n2();
    let mut pieces = Vec::new();
    for mask in 1usize..(1 << n2) {
        if mask.count_ones() < 2 {
            continue;
        }
        let tied: Vec<usize> = (0..n2).filter(|i| mask & (1 << i) != 0).collect();
        if !exactly_tied_somewhere(game, &tied) {
            continue;
        }
        let (sum, nonneg) = polytope::simplex_rows(n1);
        let s0 = tied[0];
        let mut eqs = vec![sum];
        for &s in &tied[1..] {
            eqs.push(Row::new(
                (0..n1).map(|a| game.u2(a, s) - game.u2(a, s0)).collect(),
                0.0,
            ));
        }
        let mut base = nonneg;
        for other in (0..n2).filter(|o| !tied.contains(o)) {
            base.push(Row::new(
                (0..n1)
                    .map(|a| game.u2(a, s0) - game.u2(a, other))
                    .collect(),
                0.0,
            ));
        }
        for &b in &tied {
            let mut ineqs = base.clone();
            for &s in tied.iter().filter(|&&s| s != b) {
                ineqs.push(Row::new(
                    (0..n1).map(|a| game.u1(a, b) - game.u1(a, s)).collect(),
                    0.0,
                ));
            }
            let vertices = polytope::vertices(n1, &eqs, &ineqs, 1e-9);
            if !vertices.is_empty() {
                pieces.push(GammaStarPiece {
                    b,
                    tied: tied.clone(),
                    vertices,
                });
            }
        }
    }
    pieces
}

/// Is there an `α` whose best-reply set is exactly `tied`?
fn exactly_tied_somewhere(game: &StageGame, tied: &[usize]) -> bool {
    let n1 = game.n1();
    let outside: Vec<usize> = (0..game.n2()).filter(|o| !tied.contains(o)).collect();
    // variables: alpha, t ; maximise t
    let mut lp = LinearProgram::new(n1 + 1);
    let mut obj = vec![0.0; n1 + 1];
    obj[n1] = 1.0;
    lp.maximize(obj);
    let mut sum = vec![1.0; n1 + 1];
    sum[n1] = 0.0;
    lp.add(sum, Relation::Eq, 1.0);
    let s0 = tied[0];
    for &s in &tied[1..] {
        let mut c: Vec<f64> = (0..n1).map(|a| game.u2(a, s) - game.u2(a, s0)).collect();
        c.push(0.0);
        lp.add(c, Relation::Eq, 0.0);
    }
    if outside.is_empty() {
        return lp.feasible_point().is_ok();
    }
    // cap t so the LP stays bounded
    let mut cap = vec![0.0; n1 + 1];
    cap[n1] = 1.0;
    lp.add(cap, Relation::Le, 1.0);
    for &o in &outside {
        let mut c: Vec<f64> = (0..n1).map(|a| game.u2(a, s0) - game.u2(a, o)).collect();
        c.push(-1.0);
        lp.add(c, Relation::Ge, 0.0);
    }
    matches!(lp.solve(), Ok(s) if s.x[n1] > DEFAULT_TOL)
}

/// `F*` via the reduced program for monotone-supermodular games: each profile
/// is drawn from a `Γ*` piece or is the lowest pair `(a_low, b_low)`.
pub fn fstar_prop1(game: &StageGame) -> Result<FreqBoundResult, BoundsError> {
    if !stage::is_monotone_supermodular(game)? {
        return Err(BoundsError::NotMonotoneSupermodular);
    }
    let st = require_unique(game)?;
    let (a_low, b_low) = stage::lowest_pair(game, DEFAULT_TOL)?;
    let n1 = game.n1();
    let mut pieces = gamma_star(game);
    let mut low = vec![0.0; n1];
    low[a_low] = 1.0;
    pieces.push(GammaStarPiece {
        b: b_low,
        tied: vec![b_low],
        vertices: vec![low],
    });

    let mut best: Option<(f64, FreqWitness)> = None;
    for p1 in &pieces {
        for p2 in &pieces {
            let k1 = p1.vertices.len();
            let k = k1 + p2.vertices.len();
            let verts: Vec<(&Vec<f64>, usize)> = p1
                .vertices
                .iter()
                .map(|v| (v, p1.b))
                .chain(p2.vertices.iter().map(|v| (v, p2.b)))
                .collect();
            let mut lp = LinearProgram::new(k);
            lp.minimize(verts.iter().map(|(v, _)| v[st.a_star]).collect());
            lp.add(vec![1.0; k], Relation::Eq, 1.0);
            lp.add(
                verts.iter().map(|(v, b)| game.u1_mixed(v, *b)).collect(),
                Relation::Ge,
                st.v_star,
            );
            let sol = match lp.solve() {
                Ok(s) => s,
                Err(LpError::Infeasible) => continue,
                Err(e) => return Err(BoundsError::Internal(e.to_string())),
            };
            let value = clamp_unit(sol.objective);
            if best.as_ref().is_none_or(|(v, _)| value < v - MASS_EPS) {
                let mut x = vec![0.0; n1];
                let mut y = vec![0.0; n1];
                for (j, (v, _)) in verts.iter().enumerate() {
                    let target = if j < k1 { &mut x } else { &mut y };
                    for a in 0..n1 {
                        target[a] += sol.x[j] * v[a];
                    }
                }
                best = Some((value, witness_from_scaled(&x, p1.b, &y, p2.b)));
            }
        }
    }
    let (value, witness) =
        best.ok_or_else(|| BoundsError::Internal("no feasible piece pair".into()))?;
    Ok(FreqBoundResult {
        value,
        witness,
        method: Method::Prop1,
    })
}

/// All points of the simplex over `n` coordinates with denominator `res`.
fn simplex_grid(n: usize, res: usize) -> Vec<Vec<f64>> {
    fn rec(n: usize, left: usize, res: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if cur.len() == n - 1 {
            cur.push(left);
            out.push(cur.iter().map(|&k| k as f64 / res as f64).collect());
            cur.pop();
            return;
        }
        for k in 0..=left {
            cur.push(k);
            rec(n, left - k, res, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, res, res, &mut Vec::with_capacity(n), &mut out);
    out
}

fn binomial(n: u128, k: u128) -> u128 {
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

/// Exhaustive search over grid-valued `α1, α2, q` and all reply pairs.
/// Restricting to the grid can only raise the value, so this bounds `F*`
/// from above.
pub fn fstar_grid(game: &StageGame, resolution: usize) -> Result<FreqBoundResult, BoundsError> {
    if resolution == 0 {
        return Err(BoundsError::BadResolution);
    }
    let st = require_unique(game)?;
    let n1 = game.n1();
    let points = binomial((resolution + n1 - 1) as u128, (n1 - 1) as u128);
    // every point has at most n2 replies
    let worst = (points * game.n2() as u128).pow(2) * (resolution as u128 + 1);
    if worst > GRID_TUPLE_LIMIT {
        return Err(BoundsError::GridTooLarge(worst));
    }
    struct Profile {
        alpha: Vec<f64>,
        b: usize,
        mass: f64,
        payoff: f64,
    }
    let mut profiles = Vec::new();
    for alpha in simplex_grid(n1, resolution) {
        for b in stage::best_replies_p2(game, &alpha, DEFAULT_TOL) {
            profiles.push(Profile {
                mass: alpha[st.a_star],
                payoff: game.u1_mixed(&alpha, b),
                alpha: alpha.clone(),
                b,
            });
        }
    }
    let floor = st.v_star - DEFAULT_TOL;
    let mut best: Option<(f64, usize, usize, f64)> = None;
    for (i, p1) in profiles.iter().enumerate() {
        for (j, p2) in profiles.iter().enumerate() {
            for k in 0..=resolution {
                let q = k as f64 / resolution as f64;
                if q * p1.payoff + (1.0 - q) * p2.payoff < floor {
                    continue;
                }
                let v = q * p1.mass + (1.0 - q) * p2.mass;
                if best.is_none_or(|(bv, ..)| v < bv - MASS_EPS) {
                    best = Some((v, i, j, q));
                }
            }
        }
    }
    let (value, i, j, q) =
        best.ok_or_else(|| BoundsError::Internal("Stackelberg vertex missing from grid".into()))?;
    let (p1, p2) = (&profiles[i], &profiles[j]);
    Ok(FreqBoundResult {
        value: clamp_unit(value),
        witness: FreqWitness {
            alpha1: MixedAction::from_approx(p1.alpha.clone()),
            b1: p1.b,
            alpha2: MixedAction::from_approx(p2.alpha.clone()),
            b2: p2.b,
            q,
            degenerate: q == 0.0 || q == 1.0,
        },
        method: Method::Grid,
    })
}

/// Value of the grid search; an upper bound on `F*`.
pub fn fstar_grid_oracle(game: &StageGame, resolution: usize) -> Result<f64, BoundsError> {
    fstar_grid(game, resolution).map(|r| r.value)
}

/// `F(u1, u2, ε)` at each epsilon.
pub fn f_epsilon_curve(game: &StageGame, epsilons: &[f64]) -> Result<Vec<(f64, f64)>, BoundsError> {
    for &e in epsilons {
        check_epsilon(e)?;
    }
    if epsilons.windows(2).any(|w| w[1] < w[0]) {
        return Err(BoundsError::UnsortedEpsilons);
    }
    epsilons
        .iter()
        .map(|&e| fstar(game, e, false).map(|r| (e, r.value)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::load_game;

    fn product_choice() -> StageGame {
        load_game(
            r#"{"actions1":["H","L"],"actions2":["h","l"],
            "u1":[[0.6,-0.2],[1,0]],"u2":[[1.5,1],[-0.5,0]],
            "order1":["H","L"],"order2":["h","l"]}"#,
        )
        .unwrap()
    }

    fn three_by_two() -> StageGame {
        load_game(
            r#"{"actions1":["H","M","L"],"actions2":["T","N"],
            "u1":[[1,0],[0,3],[0,0]],"u2":[[1,0],[3,0],[0,3]]}"#,
        )
        .unwrap()
    }

    #[test]
    fn product_choice_value_and_witness() {
        let g = product_choice();
        let r = fstar(&g, 0.0, false).unwrap();
        assert!((r.value - 0.375).abs() < 1e-12);
        let w = &r.witness;
        assert_eq!((w.b1, w.b2), (0, 1));
        assert!((w.q - 0.75).abs() < 1e-12);
        assert!((w.alpha1.prob(0) - 0.5).abs() < 1e-12);
        assert!((w.alpha2.prob(1) - 1.0).abs() < 1e-12);
        assert!((w.marginal()[0] - r.value).abs() < 1e-12);
        assert!(w.payoff(&g) >= 0.6 - 1e-9);
    }

    #[test]
    fn three_by_two_value_is_zero() {
        let r = fstar(&three_by_two(), 0.0, false).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn equality_variant_matches() {
        for g in [product_choice(), three_by_two()] {
            let a = fstar(&g, 0.0, false).unwrap().value;
            let b = fstar(&g, 0.0, true).unwrap().value;
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn rejects_non_unique_stackelberg_and_bad_epsilon() {
        let g = StageGame::new(
            vec!["a".into(), "b".into()],
            vec!["x".into(), "y".into()],
            vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        )
        .unwrap();
        assert_eq!(
            fstar(&g, 0.0, false),
            Err(BoundsError::NotUniqueStackelberg)
        );
        assert_eq!(
            fstar(&product_choice(), -0.1, false),
            Err(BoundsError::BadEpsilon(-0.1))
        );
    }

    #[test]
    fn gamma_star_product_choice_is_a_single_point() {
        let pieces = gamma_star(&product_choice());
        assert_eq!(pieces.len(), 1);
        assert_eq!(pieces[0].b, 0);
        assert_eq!(pieces[0].vertices.len(), 1);
        assert!((pieces[0].vertices[0][0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn gamma_star_empty_under_dominance() {
        let g = StageGame::new(
            vec!["a".into(), "b".into()],
            vec!["x".into(), "y".into()],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![2.0, 0.0], vec![1.0, 0.0]],
        )
        .unwrap();
        assert!(gamma_star(&g).is_empty());
    }

    #[test]
    fn prop1_agrees_on_product_choice() {
        let r = fstar_prop1(&product_choice()).unwrap();
        assert!((r.value - 0.375).abs() < 1e-12);
        assert_eq!(r.method, Method::Prop1);
        assert!(matches!(
            fstar_prop1(&three_by_two()),
            Err(BoundsError::Stage(StageError::MissingOrder { player: 1 }))
        ));
    }

    #[test]
    fn grid_oracle_examples() {
        let g = product_choice();
        assert!((fstar_grid_oracle(&g, 20).unwrap() - 0.375).abs() < 1e-12);
        assert!(fstar_grid_oracle(&g, 1).unwrap() >= 0.375);
        assert_eq!(fstar_grid_oracle(&three_by_two(), 10).unwrap(), 0.0);
        assert_eq!(fstar_grid_oracle(&g, 0), Err(BoundsError::BadResolution));
        assert!(matches!(
            fstar_grid_oracle(&g, 100_000),
            Err(BoundsError::GridTooLarge(_))
        ));
    }

    #[test]
    fn simplex_grid_counts() {
        assert_eq!(simplex_grid(3, 4).len(), binomial(6, 2) as usize);
        assert!(simplex_grid(3, 4)
            .iter()
            .all(|p| (p.iter().sum::<f64>() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn epsilon_curve_examples() {
        let g = product_choice();
        let c = f_epsilon_curve(&g, &[0.0, 0.01, 0.1]).unwrap();
        assert!((c[0].1 - 0.375).abs() < 1e-12);
        assert!(c[1].1 <= c[0].1 && c[2].1 <= c[1].1);
        // the floor drops below min u1: any profile avoiding H will do
        let c = f_epsilon_curve(&g, &[0.8]).unwrap();
        assert_eq!(c[0].1, 0.0);
        assert_eq!(
            f_epsilon_curve(&g, &[0.1, 0.0]),
            Err(BoundsError::UnsortedEpsilons)
        );
    }
}
