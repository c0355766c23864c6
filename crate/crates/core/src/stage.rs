//! Stage-game structure: myopic best replies, the pure Stackelberg action,
//! the minmax value over rationalizable replies, the folk-theorem cap and
//! the standing assumptions every bound relies on.

use crate::game::StageGame;
use crate::lp::{LinearProgram, Relation};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default absolute tolerance on payoff comparisons.
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum StageError {
    #[error("game has no action order for player {player}")]
    MissingOrder { player: u8 },
}

/// Player 2's best replies to `alpha`: every `b` within `tol` of the best.
pub fn best_replies_p2(game: &StageGame, alpha: &[f64], tol: f64) -> Vec<usize> {
    let vals: Vec<f64> = (0..game.n2()).map(|b| game.u2_mixed(alpha, b)).collect();
    let best = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..game.n2()).filter(|&b| vals[b] >= best - tol).collect()
}

/// Player 1's pure best replies to a pure column.
pub fn best_replies_p1(game: &StageGame, b: usize, tol: f64) -> Vec<usize> {
    let best = (0..game.n1())
        .map(|a| game.u1(a, b))
        .fold(f64::NEG_INFINITY, f64::max);
    (0..game.n1())
        .filter(|&a| game.u1(a, b) >= best - tol)
        .collect()
}

/// The set of `alpha` for which `b` is a best reply, as homogeneous
/// halfspaces `h·alpha >= 0` intersected with the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct BrPolytope {
    pub b: usize,
    pub halfspaces: Vec<Vec<f64>>,
}

impl BrPolytope {
    pub fn new(game: &StageGame, b: usize) -> Self {
        let halfspaces = (0..game.n2())
            .filter(|&other| other != b)
            .map(|other| {
                (0..game.n1())
                    .map(|a| game.u2(a, b) - game.u2(a, other))
                    .collect()
            })
            .collect();
        Self { b, halfspaces }
    }

    pub fn contains(&self, alpha: &[f64], tol: f64) -> bool {
        self.halfspaces
            .iter()
            .all(|h| h.iter().zip(alpha).map(|(x, y)| x * y).sum::<f64>() >= -tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StackelbergResult {
    pub a_star: usize,
    pub b_star: usize,
    pub v_star: f64,
    /// Exactly one action attains the Stackelberg value.
    pub unique_action: bool,
    /// Player 2 has a single best reply to `a_star`.
    pub unique_reply: bool,
}

impl StackelbergResult {
    pub fn is_unique(&self) -> bool {
        self.unique_action && self.unique_reply
    }
}

/// Pure Stackelberg action by enumeration: `argmax_a min_{b in BR2(a)} u1(a, b)`.
/// Non-uniqueness is flagged, and the first maximiser is returned.
pub fn stackelberg(game: &StageGame, tol: f64) -> StackelbergResult {
    let n1 = game.n1();
    let mut worst = Vec::with_capacity(n1);
    let mut worst_reply = Vec::with_capacity(n1);
    for a in 0..n1 {
        let br = best_replies_p2(game, &pure(n1, a), tol);
        let (b, v) =
            br.iter()
                .map(|&b| (b, game.u1(a, b)))
                .fold((usize::MAX, f64::INFINITY), |acc, x| {
                    if x.1 < acc.1 {
                        x
                    } else {
                        acc
                    }
                });
        worst.push(v);
        worst_reply.push(b);
    }
    let best = worst.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let a_star = worst.iter().position(|&v| v == best).expect("nonempty");
    let ties = worst.iter().filter(|&&v| v >= best - tol).count();
    let br_star = best_replies_p2(game, &pure(n1, a_star), tol);
    StackelbergResult {
        a_star,
        b_star: worst_reply[a_star],
        v_star: best,
        unique_action: ties == 1,
        unique_reply: br_star.len() == 1,
    }
}

fn pure(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

fn subset(mask: usize, n: usize) -> Vec<usize> {
    (0..n).filter(|i| mask & (1 << i) != 0).collect()
}

/// Largest `t` such that some `alpha` supported on `rows` puts at least `t`
/// on each of them while every column of `cols` is a best reply.
/// `None` if no such `alpha` exists at all.
fn support_margin(game: &StageGame, rows: &[usize], cols: &[usize]) -> Option<f64> {
    let k = rows.len();
    // variables: alpha restricted to rows, then t
    let mut lp = LinearProgram::new(k + 1);
    let mut obj = vec![0.0; k + 1];
    obj[k] = 1.0;
    lp.maximize(obj);
    let mut sum = vec![1.0; k + 1];
    sum[k] = 0.0;
    lp.add(sum, Relation::Eq, 1.0);
    for (i, _) in rows.iter().enumerate() {
        let mut c = vec![0.0; k + 1];
        c[i] = 1.0;
        c[k] = -1.0;
        lp.add(c, Relation::Ge, 0.0);
    }
    for &s in cols {
        for other in 0..game.n2() {
            if other == s {
                continue;
            }
            let mut c: Vec<f64> = rows
                .iter()
                .map(|&a| game.u2(a, s) - game.u2(a, other))
                .collect();
            c.push(0.0);
            lp.add(c, Relation::Ge, 0.0);
        }
    }
    lp.solve().ok().map(|s| s.x[k])
}

/// Can every column in `cols` be a best reply to one common `alpha`?
pub fn jointly_best_replied(game: &StageGame, cols: &[usize]) -> bool {
    let all: Vec<usize> = (0..game.n1()).collect();
    support_margin(game, &all, cols).is_some()
}

/// Player 1's minmax value when player 2 is restricted to mixtures whose
/// support is jointly best-replied to some `alpha`.
pub fn minmax_p1(game: &StageGame) -> f64 {
    let n2 = game.n2();
    let shift = game.min_u1() - 1.0;
    let mut best = f64::INFINITY;
    for mask in 1..(1usize << n2) {
        let cols = subset(mask, n2);
        if !jointly_best_replied(game, &cols) {
            continue;
        }
        // min v st sum_s beta_s u1(a, s) <= v for all a; v = w + shift
        let k = cols.len();
        let mut lp = LinearProgram::new(k + 1);
        let mut obj = vec![0.0; k + 1];
        obj[k] = 1.0;
        lp.minimize(obj);
        let mut sum = vec![1.0; k + 1];
        sum[k] = 0.0;
        lp.add(sum, Relation::Eq, 1.0);
        for a in 0..game.n1() {
            let mut c: Vec<f64> = cols.iter().map(|&s| game.u1(a, s)).collect();
            c.push(-1.0);
            lp.add(c, Relation::Le, shift);
        }
        let sol = lp
            .solve()
            .expect("minmax LP over a simplex is bounded and feasible");
        best = best.min(sol.objective + shift);
    }
    best
}

/// Folk-theorem cap `max min_{a in supp(alpha)} u1(a, beta)` over pairs with
/// `supp(beta)` inside `BR2(alpha)`.
///
/// Support pairs `(T, S)` are enumerated; `T` must be realisable as the exact
/// support of some `alpha`, which is checked by maximising the smallest weight
/// on `T`.
pub fn vbar_p1(game: &StageGame) -> f64 {
    let n1 = game.n1();
    let n2 = game.n2();
    let shift = game.min_u1() - 1.0;
    let mut best = f64::NEG_INFINITY;
    for tmask in 1..(1usize << n1) {
        let rows = subset(tmask, n1);
        for smask in 1..(1usize << n2) {
            let cols = subset(smask, n2);
            match support_margin(game, &rows, &cols) {
                Some(t) if t > DEFAULT_TOL => {}
                _ => continue,
            }
            let k = cols.len();
            let mut lp = LinearProgram::new(k + 1);
            let mut obj = vec![0.0; k + 1];
            obj[k] = 1.0;
            lp.maximize(obj);
            let mut sum = vec![1.0; k + 1];
            sum[k] = 0.0;
            lp.add(sum, Relation::Eq, 1.0);
            for &a in &rows {
                let mut c: Vec<f64> = cols.iter().map(|&s| -game.u1(a, s)).collect();
                c.push(1.0);
                lp.add(c, Relation::Le, -shift);
            }
            let sol = lp.solve().expect("vbar LP is bounded");
            best = best.max(sol.x[k] + shift);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub a1_unique_stackelberg: bool,
    pub a1_unique_reply: bool,
    pub a2_not_best_reply: bool,
    pub a2_above_minmax: bool,
    pub minmax: f64,
    pub vbar: f64,
}

impl AssumptionReport {
    pub fn all_hold(&self) -> bool {
        self.a1_unique_stackelberg
            && self.a1_unique_reply
            && self.a2_not_best_reply
            && self.a2_above_minmax
    }
}

pub fn check_assumptions(game: &StageGame, tol: f64) -> AssumptionReport {
    let st = stackelberg(game, tol);
    let minmax = minmax_p1(game);
    let vbar = vbar_p1(game);
    let br1 = best_replies_p1(game, st.b_star, tol);
    AssumptionReport {
        a1_unique_stackelberg: st.unique_action,
        a1_unique_reply: st.unique_reply,
        a2_not_best_reply: !br1.contains(&st.a_star),
        a2_above_minmax: st.v_star > minmax + tol,
        minmax,
        vbar,
    }
}

/// `u1` strictly decreasing in player 1's order and `u2` with strictly
/// increasing differences under both orders.
pub fn is_monotone_supermodular(game: &StageGame) -> Result<bool, StageError> {
    let o1 = game
        .order1()
        .ok_or(StageError::MissingOrder { player: 1 })?;
    let o2 = game
        .order2()
        .ok_or(StageError::MissingOrder { player: 2 })?;
    // order lists run from highest to lowest
    for w in o1.windows(2) {
        let (hi, lo) = (w[0], w[1]);
        if (0..game.n2()).any(|b| game.u1(hi, b) >= game.u1(lo, b)) {
            return Ok(false);
        }
    }
    for i in 0..o1.len() {
        for j in (i + 1)..o1.len() {
            let (hi, lo) = (o1[i], o1[j]);
            for k in 0..o2.len() {
                for l in (k + 1)..o2.len() {
                    let (bh, bl) = (o2[k], o2[l]);
                    let dh = game.u2(hi, bh) - game.u2(lo, bh);
                    let dl = game.u2(hi, bl) - game.u2(lo, bl);
                    if dh <= dl {
                        return Ok(false);
                    }
                }
            }
        }
    }
    Ok(true)
}

/// Lowest action in player 1's order, and player 2's best reply to it that
/// is best for player 1 (first in action order on ties).
pub fn lowest_pair(game: &StageGame, tol: f64) -> Result<(usize, usize), StageError> {
    let o1 = game
        .order1()
        .ok_or(StageError::MissingOrder { player: 1 })?;
    let a_low = *o1.last().expect("orders cover at least two actions");
    let br = best_replies_p2(game, &pure(game.n1(), a_low), tol);
    let mut b_low = br[0];
    for &b in &br[1..] {
        if game.u1(a_low, b) > game.u1(a_low, b_low) {
            b_low = b;
        }
    }
    Ok((a_low, b_low))
}
