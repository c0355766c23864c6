//! Finite two-player stage games and mixed actions.
//!
//! A [`StageGame`] is a payoff bimatrix with labelled actions. Player 1 picks
//! rows, player 2 picks columns. Payoffs are kept exactly as written in the
//! game file; nothing is rescaled.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use thiserror::Error;

/// Tolerance on the total mass of a mixed action.
pub const MIX_SUM_TOL: f64 = 1e-12;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum GameError {
    #[error("malformed game document: {0}")]
    Malformed(String),
    #[error("player {player} needs at least two actions, found {found}")]
    TooFewActions { player: u8, found: usize },
    #[error("dimension mismatch in {matrix}: {detail}")]
    DimensionMismatch {
        matrix: &'static str,
        detail: String,
    },
    #[error("duplicate action label `{0}`")]
    DuplicateLabel(String),
    #[error("non-finite payoff in {matrix} at ({row}, {col})")]
    NonFinitePayoff {
        matrix: &'static str,
        row: usize,
        col: usize,
    },
    #[error("order{player} is not a permutation of the player's actions")]
    BadOrder { player: u8 },
    #[error("unknown action label `{0}`")]
    UnknownAction(String),
    #[error("invalid mixed action: {0}")]
    InvalidMix(String),
}

/// On-disk layout of a game file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
struct GameFile {
    actions1: Vec<String>,
    actions2: Vec<String>,
    u1: Vec<Vec<f64>>,
    u2: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    order1: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    order2: Option<Vec<String>>,
}

/// A validated finite stage game `(u1, u2)`.
///
/// Orders, when present, are stored as action indices listed from the
/// highest-ranked action down.
#[derive(Debug, Clone, PartialEq)]
pub struct StageGame {
    actions1: Vec<String>,
    actions2: Vec<String>,
    u1: Vec<Vec<f64>>,
    u2: Vec<Vec<f64>>,
    order1: Option<Vec<usize>>,
    order2: Option<Vec<usize>>,
}

impl StageGame {
    pub fn new(
        actions1: Vec<String>,
        actions2: Vec<String>,
        u1: Vec<Vec<f64>>,
        u2: Vec<Vec<f64>>,
    ) -> Result<Self, GameError> {
        check_labels(1, &actions1)?;
        check_labels(2, &actions2)?;
        check_matrix("u1", &u1, actions1.len(), actions2.len())?;
        check_matrix("u2", &u2, actions1.len(), actions2.len())?;
        Ok(Self {
            actions1,
            actions2,
            u1,
            u2,
            order1: None,
            order2: None,
        })
    }

    /// Attach action orders, most-preferred-by-convention first.
    pub fn with_orders(mut self, order1: &[&str], order2: &[&str]) -> Result<Self, GameError> {
        let o1: Vec<String> = order1.iter().map(|s| s.to_string()).collect();
        let o2: Vec<String> = order2.iter().map(|s| s.to_string()).collect();
        self.order1 = Some(resolve_order(1, &self.actions1, &o1)?);
        self.order2 = Some(resolve_order(2, &self.actions2, &o2)?);
        Ok(self)
    }

    pub fn n1(&self) -> usize {
        self.actions1.len()
    }

    pub fn n2(&self) -> usize {
        self.actions2.len()
    }

    pub fn actions1(&self) -> &[String] {
        &self.actions1
    }

    pub fn actions2(&self) -> &[String] {
        &self.actions2
    }

    #[inline]
    pub fn u1(&self, a: usize, b: usize) -> f64 {
        self.u1[a][b]
    }

    #[inline]
    pub fn u2(&self, a: usize, b: usize) -> f64 {
        self.u2[a][b]
    }

    pub fn order1(&self) -> Option<&[usize]> {
        self.order1.as_deref()
    }

    pub fn order2(&self) -> Option<&[usize]> {
        self.order2.as_deref()
    }

    pub fn action1_index(&self, label: &str) -> Result<usize, GameError> {
        self.actions1
            .iter()
            .position(|s| s == label)
            .ok_or_else(|| GameError::UnknownAction(label.to_string()))
    }

    pub fn action2_index(&self, label: &str) -> Result<usize, GameError> {
        self.actions2
            .iter()
            .position(|s| s == label)
            .ok_or_else(|| GameError::UnknownAction(label.to_string()))
    }

    /// Largest player-1 payoff over all pure profiles.
    pub fn max_u1(&self) -> f64 {
        self.u1
            .iter()
            .flatten()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_u1(&self) -> f64 {
        self.u1
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Player-1 payoff of a mixed row against a pure column.
    pub fn u1_mixed(&self, alpha: &[f64], b: usize) -> f64 {
        alpha
            .iter()
            .enumerate()
            .map(|(a, p)| p * self.u1[a][b])
            .sum()
    }

    /// Player-2 payoff of a mixed row against a pure column.
    pub fn u2_mixed(&self, alpha: &[f64], b: usize) -> f64 {
        alpha
            .iter()
            .enumerate()
            .map(|(a, p)| p * self.u2[a][b])
            .sum()
    }

    /// Expected payoffs `(u1(alpha, beta), u2(alpha, beta))`.
    pub fn expected_payoffs(&self, alpha: &MixedAction, beta: &MixedAction) -> (f64, f64) {
        debug_assert_eq!(alpha.len(), self.n1());
        debug_assert_eq!(beta.len(), self.n2());
        let mut v1 = 0.0;
        let mut v2 = 0.0;
        for (a, pa) in alpha.probs().iter().enumerate() {
            if *pa == 0.0 {
                continue;
            }
            for (b, pb) in beta.probs().iter().enumerate() {
                let w = pa * pb;
                v1 += w * self.u1[a][b];
                v2 += w * self.u2[a][b];
            }
        }
        (v1, v2)
    }

    /// Labelled variant of [`expected_payoffs`](Self::expected_payoffs).
    pub fn expected_payoffs_labeled(
        &self,
        alpha: &IndexMap<String, f64>,
        beta: &IndexMap<String, f64>,
    ) -> Result<(f64, f64), GameError> {
        let alpha = MixedAction::from_labeled(&self.actions1, alpha)?;
        let beta = MixedAction::from_labeled(&self.actions2, beta)?;
        Ok(self.expected_payoffs(&alpha, &beta))
    }

    /// Serialize to the game-file JSON layout.
    pub fn to_json(&self) -> String {
        let file = GameFile {
            actions1: self.actions1.clone(),
            actions2: self.actions2.clone(),
            u1: self.u1.clone(),
            u2: self.u2.clone(),
            order1: self
                .order1
                .as_ref()
                .map(|o| o.iter().map(|&i| self.actions1[i].clone()).collect()),
            order2: self
                .order2
                .as_ref()
                .map(|o| o.iter().map(|&i| self.actions2[i].clone()).collect()),
        };
        serde_json::to_string_pretty(&file).expect("game file serializes")
    }
}

/// Parse and validate a game file.
pub fn load_game(text: &str) -> Result<StageGame, GameError> {
    let file: GameFile =
        serde_json::from_str(text).map_err(|e| GameError::Malformed(e.to_string()))?;
    let mut game = StageGame::new(file.actions1, file.actions2, file.u1, file.u2)?;
    if let Some(o) = file.order1 {
        game.order1 = Some(resolve_order(1, &game.actions1, &o)?);
    }
    if let Some(o) = file.order2 {
        game.order2 = Some(resolve_order(2, &game.actions2, &o)?);
    }
    Ok(game)
}

/// Inverse of [`load_game`].
pub fn emit_game(game: &StageGame) -> String {
    game.to_json()
}

fn check_labels(player: u8, labels: &[String]) -> Result<(), GameError> {
    if labels.len() < 2 {
        return Err(GameError::TooFewActions {
            player,
            found: labels.len(),
        });
    }
    let mut seen = HashSet::new();
    for l in labels {
        if !seen.insert(l.as_str()) {
            return Err(GameError::DuplicateLabel(l.clone()));
        }
    }
    Ok(())
}

fn check_matrix(
    name: &'static str,
    m: &[Vec<f64>],
    rows: usize,
    cols: usize,
) -> Result<(), GameError> {
    if m.len() != rows {
        return Err(GameError::DimensionMismatch {
            matrix: name,
            detail: format!("{} rows for {} player-1 actions", m.len(), rows),
        });
    }
    for (i, row) in m.iter().enumerate() {
        if row.len() != cols {
            return Err(GameError::DimensionMismatch {
                matrix: name,
                detail: format!(
                    "row {} has {} entries for {} player-2 actions",
                    i,
                    row.len(),
                    cols
                ),
            });
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(GameError::NonFinitePayoff {
                matrix: name,
                row: i,
                col: j,
            });
        }
    }
    Ok(())
}

fn resolve_order(
    player: u8,
    actions: &[String],
    order: &[String],
) -> Result<Vec<usize>, GameError> {
    if order.len() != actions.len() {
        return Err(GameError::BadOrder { player });
    }
    let mut idx = Vec::with_capacity(order.len());
    let mut seen = vec![false; actions.len()];
    for label in order {
        let i = actions
            .iter()
            .position(|a| a == label)
            .ok_or(GameError::BadOrder { player })?;
        if seen[i] {
            return Err(GameError::BadOrder { player });
        }
        seen[i] = true;
        idx.push(i);
    }
    Ok(idx)
}

/// A probability vector over one player's actions, indexed like the game's
/// action list.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedAction(Vec<f64>);

impl MixedAction {
    pub fn new(probs: Vec<f64>) -> Result<Self, GameError> {
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(GameError::InvalidMix(format!(
                "weights must be finite and nonnegative: {probs:?}"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > MIX_SUM_TOL {
            return Err(GameError::InvalidMix(format!("weights sum to {total}")));
        }
        Ok(Self(probs))
    }

    /// Normalize a nonnegative vector that is a probability vector up to
    /// floating point noise (LP output). Tiny negatives are clipped.
    pub fn from_approx(mut probs: Vec<f64>) -> Self {
        for p in probs.iter_mut() {
            if *p < 0.0 {
                *p = 0.0;
            }
        }
        let total: f64 = probs.iter().sum();
        debug_assert!(total > 0.0);
        for p in probs.iter_mut() {
            *p /= total;
        }
        Self(probs)
    }

    pub fn pure(n: usize, i: usize) -> Self {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        Self(v)
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn prob(&self, i: usize) -> f64 {
        self.0[i]
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|&i| self.0[i] > 0.0).collect()
    }

    /// Build from a label map; labels not mentioned get probability zero.
    pub fn from_labeled(
        labels: &[String],
        weights: &IndexMap<String, f64>,
    ) -> Result<Self, GameError> {
        let mut v = vec![0.0; labels.len()];
        for (k, p) in weights {
            let i = labels
                .iter()
                .position(|l| l == k)
                .ok_or_else(|| GameError::UnknownAction(k.clone()))?;
            v[i] += *p;
        }
        Self::new(v)
    }

    /// Parse the CLI form `label:prob,label:prob`.
    pub fn parse(labels: &[String], text: &str) -> Result<Self, GameError> {
        let mut map = IndexMap::new();
        for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (label, prob) = part.rsplit_once(':').ok_or_else(|| {
                GameError::InvalidMix(format!("expected label:prob, got `{part}`"))
            })?;
            let p: f64 = prob
                .trim()
                .parse()
                .map_err(|_| GameError::InvalidMix(format!("bad probability `{prob}`")))?;
            if map.insert(label.trim().to_string(), p).is_some() {
                return Err(GameError::InvalidMix(format!("label `{label}` repeated")));
            }
        }
        Self::from_labeled(labels, &map)
    }

    /// Label map restricted to the support, in action order.
    pub fn labeled(&self, labels: &[String]) -> IndexMap<String, f64> {
        labels
            .iter()
            .zip(&self.0)
            .filter(|(_, p)| **p > 0.0)
            .map(|(l, p)| (l.clone(), *p))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn product_choice_text() -> &'static str {
        r#"{"actions1":["H","L"],"actions2":["h","l"],
            "u1":[[0.6,-0.2],[1,0]],"u2":[[1.5,1],[-0.5,0]],
            "order1":["H","L"],"order2":["h","l"]}"#
    }

    #[test]
    fn loads_product_choice() {
        let g = load_game(product_choice_text()).unwrap();
        assert_eq!(g.n1(), 2);
        assert_eq!(g.u1(0, 0), 0.6);
        assert_eq!(g.u1(0, 1), -0.2);
        assert_eq!(g.u1(1, 0), 1.0);
        assert_eq!(g.order1(), Some(&[0usize, 1][..]));
    }

    #[test]
    fn rejects_row_count_mismatch() {
        let text = r#"{"actions1":["a","b","c"],"actions2":["x","y"],
            "u1":[[0,0],[0,0]],"u2":[[0,0],[0,0]]}"#;
        assert!(matches!(
            load_game(text),
            Err(GameError::DimensionMismatch { matrix: "u1", .. })
        ));
    }

    #[test]
    fn rejects_duplicate_labels_and_bad_orders() {
        let dup = r#"{"actions1":["a","a"],"actions2":["x","y"],
            "u1":[[0,0],[0,0]],"u2":[[0,0],[0,0]]}"#;
        assert_eq!(load_game(dup), Err(GameError::DuplicateLabel("a".into())));
        let bad = r#"{"actions1":["a","b"],"actions2":["x","y"],
            "u1":[[0,0],[0,0]],"u2":[[0,0],[0,0]],"order1":["a","a"]}"#;
        assert_eq!(load_game(bad), Err(GameError::BadOrder { player: 1 }));
        assert!(matches!(
            load_game("{not json"),
            Err(GameError::Malformed(_))
        ));
    }

    #[test]
    fn rejects_single_action() {
        let text = r#"{"actions1":["a"],"actions2":["x","y"],"u1":[[0,0]],"u2":[[0,0]]}"#;
        assert!(matches!(
            load_game(text),
            Err(GameError::TooFewActions { player: 1, .. })
        ));
    }

    #[test]
    fn non_finite_payoff_rejected() {
        let g = StageGame::new(
            vec!["a".into(), "b".into()],
            vec!["x".into(), "y".into()],
            vec![vec![0.0, f64::NAN], vec![0.0, 0.0]],
            vec![vec![0.0, 0.0], vec![0.0, 0.0]],
        );
        assert_eq!(
            g,
            Err(GameError::NonFinitePayoff {
                matrix: "u1",
                row: 0,
                col: 1
            })
        );
    }

    #[test]
    fn expected_payoffs_examples() {
        let g = load_game(product_choice_text()).unwrap();
        let (v1, v2) = g.expected_payoffs(&MixedAction::pure(2, 0), &MixedAction::pure(2, 0));
        assert_eq!((v1, v2), (0.6, 1.5));
        let half = MixedAction::new(vec![0.5, 0.5]).unwrap();
        let (v1, _) = g.expected_payoffs(&half, &MixedAction::pure(2, 0));
        assert!((v1 - 0.8).abs() < 1e-15);
    }

    #[test]
    fn labeled_payoffs_reject_unknown_labels() {
        let g = load_game(product_choice_text()).unwrap();
        let mut alpha = IndexMap::new();
        alpha.insert("X".to_string(), 1.0);
        let mut beta = IndexMap::new();
        beta.insert("h".to_string(), 1.0);
        assert_eq!(
            g.expected_payoffs_labeled(&alpha, &beta),
            Err(GameError::UnknownAction("X".into()))
        );
    }

    #[test]
    fn parse_cli_mix() {
        let labels = vec!["H".to_string(), "L".to_string()];
        let m = MixedAction::parse(&labels, "H:0.375,L:0.625").unwrap();
        assert_eq!(m.probs(), &[0.375, 0.625]);
        assert!(MixedAction::parse(&labels, "H:0.5").is_err());
        assert!(MixedAction::parse(&labels, "Q:1").is_err());
        assert!(MixedAction::parse(&labels, "H:-0.5,L:1.5").is_err());
    }

    #[test]
    fn emit_then_load_is_identity() {
        let g = load_game(product_choice_text()).unwrap();
        assert_eq!(load_game(&emit_game(&g)).unwrap(), g);
    }
}
