//! Membership in the set of attainable action frequencies.
//!
//! A marginal `α*` is attainable when it is the average of incentive-compatible
//! profiles `(α, b)` whose average payoff is exactly the Stackelberg payoff.
//! Each section of `Γ` over a fixed `b` is convex and `u1` is linear in `α`, so
//! one conditional mixed action per reply suffices and the test is an LP in
//! `x_b = w_b·α_b`.

use crate::game::{MixedAction, StageGame};
use crate::lp::{LinearProgram, LpError, Relation};
use crate::stage::{self, DEFAULT_TOL};
use thiserror::Error;

/// Replies carrying less mass than this are dropped from a witness.
const WEIGHT_EPS: f64 = 1e-12;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum SetsError {
    #[error("Stackelberg action or reply is not unique")]
    NotUniqueStackelberg,
    #[error("target has {found} entries but player 1 has {expected} actions")]
    TargetLength { expected: usize, found: usize },
    #[error("epsilon must be finite and nonnegative, got {0}")]
    BadEpsilon(f64),
    #[error("LP solver failed: {0}")]
    Solver(String),
}

/// One component of a decomposition: mass `weight` on `(alpha, reply)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WitnessComponent {
    pub reply: usize,
    pub weight: f64,
    pub alpha: MixedAction,
}

/// A decomposition of the target into incentive-compatible profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct SetAWitness {
    pub components: Vec<WitnessComponent>,
    pub target: MixedAction,
    pub payoff: f64,
}

impl SetAWitness {
    /// `Σ_b w_b·α_b`, which reproduces the target.
    pub fn marginal(&self) -> Vec<f64> {
        let n = self.target.len();
        let mut out = vec![0.0; n];
        for c in &self.components {
            for (o, p) in out.iter_mut().zip(c.alpha.probs()) {
                *o += c.weight * p;
            }
        }
        out
    }

    /// Average player-1 payoff recomputed from the components.
    pub fn recompute_payoff(&self, game: &StageGame) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * game.u1_mixed(c.alpha.probs(), c.reply))
            .sum()
    }

    /// Expected player-1 payoff from a draw `(α_b, b)`, as `(weight, payoff)`.
    pub fn payoffs(&self, game: &StageGame) -> Vec<(f64, f64)> {
        self.components
            .iter()
            .map(|c| (c.weight, game.u1_mixed(c.alpha.probs(), c.reply)))
            .collect()
    }
}

/// Decide whether `target` is attainable, with payoff within `epsilon` of the
/// Stackelberg payoff. Non-membership is `Ok(None)`.
#[allow(non_snake_case)]
pub fn in_set_A(
    game: &StageGame,
    target: &MixedAction,
    epsilon: f64,
) -> Result<Option<SetAWitness>, SetsError> {
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(SetsError::BadEpsilon(epsilon));
    }
    let n1 = game.n1();
    let n2 = game.n2();
    if target.len() != n1 {
        return Err(SetsError::TargetLength {
            expected: n1,
            found: target.len(),
        });
    }
    let st = stage::stackelberg(game, DEFAULT_TOL);
    if !st.is_unique() {
        return Err(SetsError::NotUniqueStackelberg);
    }
    let nv = n1 * n2;
    let idx = |b: usize, a: usize| b * n1 + a;
    let mut lp = LinearProgram::new(nv);
    // Minimising total payoff deviation is not needed; any feasible point will do.
    lp.minimize(vec![0.0; nv]);
    for a in 0..n1 {
        let mut c = vec![0.0; nv];
        for b in 0..n2 {
            c[idx(b, a)] = 1.0;
        }
        lp.add(c, Relation::Eq, target.prob(a));
    }
    for b in 0..n2 {
        for other in (0..n2).filter(|&o| o != b) {
            let mut c = vec![0.0; nv];
            for a in 0..n1 {
                c[idx(b, a)] = game.u2(a, b) - game.u2(a, other);
            }
            lp.add(c, Relation::Ge, 0.0);
        }
    }
    let mut pay = vec![0.0; nv];
    for b in 0..n2 {
        for a in 0..n1 {
            pay[idx(b, a)] = game.u1(a, b);
        }
    }
    let slack = epsilon + DEFAULT_TOL;
    lp.add(pay.clone(), Relation::Le, st.v_star + slack);
    lp.add(pay, Relation::Ge, st.v_star - slack);
    let sol = match lp.solve() {
        Ok(s) => s,
        Err(LpError::Infeasible) => return Ok(None),
        Err(e) => return Err(SetsError::Solver(e.to_string())),
    };
    let mut components = Vec::new();
    for b in 0..n2 {
        let x = &sol.x[idx(b, 0)..idx(b, 0) + n1];
        let w: f64 = x.iter().sum();
        if w > WEIGHT_EPS {
            components.push(WitnessComponent {
                reply: b,
                weight: w,
                alpha: MixedAction::from_approx(x.to_vec()),
            });
        }
    }
    let total: f64 = components.iter().map(|c| c.weight).sum();
    for c in &mut components {
        c.weight /= total;
    }
    let mut witness = SetAWitness {
        components,
        target: target.clone(),
        payoff: 0.0,
    };
    witness.payoff = witness.recompute_payoff(game);
    Ok(Some(witness))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::fstar;
    use crate::game::load_game;

    fn product_choice() -> StageGame {
        load_game(
            r#"{"actions1":["H","L"],"actions2":["h","l"],
            "u1":[[0.6,-0.2],[1,0]],"u2":[[1.5,1],[-0.5,0]]}"#,
        )
        .unwrap()
    }

    fn check_invariants(g: &StageGame, w: &SetAWitness, eps: f64) {
        let total: f64 = w.components.iter().map(|c| c.weight).sum();
        assert!((total - 1.0).abs() < 1e-9);
        for (m, t) in w.marginal().iter().zip(w.target.probs()) {
            assert!((m - t).abs() < 1e-9);
        }
        for c in &w.components {
            assert!(stage::best_replies_p2(g, c.alpha.probs(), 1e-7).contains(&c.reply));
        }
        // the LP allows 1e-9 of slack on top of eps
        assert!((w.payoff - 0.6).abs() <= eps + 2e-9);
    }

    #[test]
    fn stackelberg_point_is_member() {
        let g = product_choice();
        let w = in_set_A(&g, &MixedAction::pure(2, 0), 0.0)
            .unwrap()
            .unwrap();
        check_invariants(&g, &w, 0.0);
        assert_eq!(w.components.len(), 1);
        assert_eq!(w.components[0].reply, 0);
        assert!((w.payoff - 0.6).abs() < 1e-12);
    }

    #[test]
    fn pure_low_action_is_not_member() {
        let g = product_choice();
        assert_eq!(in_set_A(&g, &MixedAction::pure(2, 1), 0.0).unwrap(), None);
    }

    #[test]
    fn lp_minimiser_is_member() {
        let g = product_choice();
        let t = MixedAction::parse(g.actions1(), "H:0.375,L:0.625").unwrap();
        let w = in_set_A(&g, &t, 0.0).unwrap().unwrap();
        check_invariants(&g, &w, 0.0);
        // decompositions are not unique here; both replies must carry mass
        assert_eq!(w.components.len(), 2);
    }

    #[test]
    fn fstar_witness_marginal_is_member() {
        let g = product_choice();
        let r = fstar(&g, 0.0, true).unwrap();
        let t = MixedAction::from_approx(r.witness.marginal());
        assert!(in_set_A(&g, &t, 0.0).unwrap().is_some());
    }

    #[test]
    fn relaxation_admits_more() {
        let g = product_choice();
        let t = MixedAction::parse(g.actions1(), "H:0.3,L:0.7").unwrap();
        assert_eq!(in_set_A(&g, &t, 0.0).unwrap(), None);
        // best decomposition pays 0.48, so 0.1 is not enough but 0.15 is
        assert_eq!(in_set_A(&g, &t, 0.1).unwrap(), None);
        let w = in_set_A(&g, &t, 0.15).unwrap().unwrap();
        check_invariants(&g, &w, 0.15);
    }

    #[test]
    fn validates_inputs() {
        let g = product_choice();
        assert_eq!(
            in_set_A(&g, &MixedAction::pure(3, 0), 0.0),
            Err(SetsError::TargetLength {
                expected: 2,
                found: 3
            })
        );
        assert!(matches!(
            in_set_A(&g, &MixedAction::pure(2, 0), f64::NAN),
            Err(SetsError::BadEpsilon(_))
        ));
    }
}
