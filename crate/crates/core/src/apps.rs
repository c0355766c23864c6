//! Closed-form minimal frequencies for standard reputation applications.
//!
//! Each variant builds its stage game from a handful of scalars, and
//! [`closed_form_fstar`] gives the minimal Stackelberg-action frequency in
//! closed form, which serves as an independent check on the LP.

use crate::game::{GameError, StageGame};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum AppError {
    #[error("parameter {name} = {value} outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("subsidy {subsidy} makes entry strictly dominant (needs < {limit})")]
    SubsidyTooLarge { subsidy: f64, limit: f64 },
    #[error(transparent)]
    Game(#[from] GameError),
}

/// An application and its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
pub enum AppParams {
    /// Two-product quality choice: effort costs `ch`/`cl`, consumers buy high
    /// only above effort probability `gamma`.
    Product2 { gamma: f64, ch: f64, cl: f64 },
    /// Three products with demand thresholds `g2 < g1`, intermediate price
    /// `p` and effort cost `c`.
    Product3 { g1: f64, g2: f64, p: f64, c: f64 },
    /// Entry deterrence with an optional entry subsidy.
    Entry {
        gamma: f64,
        co: f64,
        ci: f64,
        subsidy: f64,
    },
    /// Capital taxation: normal rate `tau`, investment cost `c`.
    Fiscal { tau: f64, c: f64 },
}

fn open_unit(name: &'static str, value: f64) -> Result<(), AppError> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(AppError::OutOfRange {
            name,
            value,
            range: "(0, 1)",
        })
    }
}

impl AppParams {
    pub fn validate(&self) -> Result<(), AppError> {
        match *self {
            AppParams::Product2 { gamma, ch, cl } => {
                open_unit("gamma", gamma)?;
                open_unit("ch", ch)?;
                open_unit("cl", cl)
            }
            AppParams::Product3 { g1, g2, p, c } => {
                open_unit("g1", g1)?;
                open_unit("p", p)?;
                open_unit("c", c)?;
                if g2 > 0.0 && g2 < g1 {
                    Ok(())
                } else {
                    Err(AppError::OutOfRange {
                        name: "g2",
                        value: g2,
                        range: "(0, g1)",
                    })
                }
            }
            AppParams::Entry {
                gamma,
                co,
                ci,
                subsidy,
            } => {
                open_unit("gamma", gamma)?;
                open_unit("co", co)?;
                if !(ci > 0.0 && ci.is_finite()) {
                    return Err(AppError::OutOfRange {
                        name: "ci",
                        value: ci,
                        range: "(0, inf)",
                    });
                }
                if !(subsidy >= 0.0 && subsidy.is_finite()) {
                    return Err(AppError::OutOfRange {
                        name: "subsidy",
                        value: subsidy,
                        range: "[0, inf)",
                    });
                }
                Ok(())
            }
            AppParams::Fiscal { tau, c } => {
                open_unit("tau", tau)?;
                if c > 0.0 && c < 1.0 - tau {
                    Ok(())
                } else {
                    Err(AppError::OutOfRange {
                        name: "c",
                        value: c,
                        range: "(0, 1 - tau)",
                    })
                }
            }
        }
    }
}

/// Minimal discounted frequency of the Stackelberg action.
pub fn closed_form_fstar(params: &AppParams) -> Result<f64, AppError> {
    params.validate()?;
    Ok(match *params {
        AppParams::Product2 { gamma, ch, .. } => gamma * (1.0 - ch) / (1.0 - gamma * ch),
        AppParams::Product3 { g1, g2, p, c } => {
            if p <= g2 / g1 {
                g1 * (1.0 - c) / (1.0 - g1 * c)
            } else if c >= (1.0 - p) / (1.0 - g2) {
                g2 * (1.0 - c) / (p - g2 * c)
            } else {
                let k = c * (g1 - g2);
                (g1 * (1.0 - p) - k) / ((1.0 - p) - k)
            }
        }
        AppParams::Entry {
            gamma, co, subsidy, ..
        } => {
            let g = gamma + subsidy;
            if g >= 1.0 {
                return Err(AppError::SubsidyTooLarge {
                    subsidy,
                    limit: 1.0 - gamma,
                });
            }
            (1.0 - co) * g / (1.0 - co * g)
        }
        AppParams::Fiscal { tau, c } => tau / (1.0 - tau) * c / (1.0 - c),
    })
}

/// Largest discounted frequency of the non-Stackelberg action(s), `1 − F*`.
pub fn closed_form_complement(params: &AppParams) -> Result<f64, AppError> {
    closed_form_fstar(params).map(|f| 1.0 - f)
}

/// The stage game of an application, with its natural action orders.
///
/// For three products only the demand thresholds matter; the consumer
/// payoffs used are `u2(·,l) = 0`, `u2(α,m) = α(H) − g2` and
/// `u2(α,h) − u2(α,m) = α(H) − g1`.
pub fn build_stage_game(params: &AppParams) -> Result<StageGame, AppError> {
    params.validate()?;
    let labels = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let game = match *params {
        AppParams::Product2 { gamma, ch, cl } => StageGame::new(
            labels(&["H", "L"]),
            labels(&["h", "l"]),
            vec![vec![1.0 - ch, -cl], vec![1.0, 0.0]],
            vec![vec![2.0 - gamma, 1.0], vec![-gamma, 0.0]],
        )?
        .with_orders(&["H", "L"], &["h", "l"])?,
        AppParams::Product3 { g1, g2, p, c } => StageGame::new(
            labels(&["H", "L"]),
            labels(&["h", "m", "l"]),
            vec![vec![1.0 - c, p - c, -c], vec![1.0, p, 0.0]],
            vec![vec![2.0 - g1 - g2, 1.0 - g2, 0.0], vec![-g1 - g2, -g2, 0.0]],
        )?
        .with_orders(&["H", "L"], &["h", "m", "l"])?,
        AppParams::Entry {
            gamma,
            co,
            ci,
            subsidy,
        } => StageGame::new(
            labels(&["F", "A"]),
            labels(&["O", "I"]),
            vec![vec![1.0 - co, -ci], vec![1.0, 0.0]],
            vec![
                vec![0.0, -(1.0 - gamma) + subsidy],
                vec![0.0, gamma + subsidy],
            ],
        )?
        .with_orders(&["F", "A"], &["O", "I"])?,
        AppParams::Fiscal { tau, c } => StageGame::new(
            labels(&["Normal", "Expropriate"]),
            labels(&["Invest", "NotInvest"]),
            vec![vec![tau, 0.0], vec![1.0, 0.0]],
            vec![vec![1.0 - tau - c, 0.0], vec![-c, 0.0]],
        )?
        .with_orders(&["Normal", "Expropriate"], &["Invest", "NotInvest"])?,
    };
    Ok(game)
}

/// The nine interior grid values `0.1, ..., 0.9`.
pub fn unit_grid() -> Vec<f64> {
    (1..=9).map(|k| k as f64 / 10.0).collect()
}

/// Parameter grid for one variant: every scalar on [`unit_grid`], keeping
/// only valid combinations. Fiscal has two scalars, so it uses a finer
/// 27-point axis to keep the grid of comparable size.
pub fn parameter_grid(variant: &str) -> Vec<AppParams> {
    let g = unit_grid();
    let mut out = Vec::new();
    match variant {
        "product2" => {
            for &gamma in &g {
                for &ch in &g {
                    for &cl in &g {
                        out.push(AppParams::Product2 { gamma, ch, cl });
                    }
                }
            }
        }
        "product3" => {
            for &g1 in &g {
                for &g2 in g.iter().filter(|&&x| x < g1) {
                    for &p in &g {
                        for &c in &g {
                            out.push(AppParams::Product3 { g1, g2, p, c });
                        }
                    }
                }
            }
        }
        "entry" => {
            for &gamma in &g {
                for &co in &g {
                    for &ci in &g {
                        out.push(AppParams::Entry {
                            gamma,
                            co,
                            ci,
                            subsidy: 0.0,
                        });
                    }
                }
            }
        }
        "fiscal" => {
            // Compare on integer steps: c = 1 - tau in floating point can
            // land on either side of the boundary.
            for i in 1..28u32 {
                for j in (1..28u32).filter(|j| i + j < 28) {
                    out.push(AppParams::Fiscal {
                        tau: f64::from(i) / 28.0,
                        c: f64::from(j) / 28.0,
                    });
                }
            }
        }
        _ => {}
    }
    out
}
