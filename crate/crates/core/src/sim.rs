//! On-path simulation of a block equilibrium attaining a target frequency.
//!
//! Play starts in a preparation phase on `(α′, b*)` and, once `a′` realises,
//! moves to a normal phase made of blocks. A block opens with `T1` periods of
//! `(α′, b*)`. If `a′` realised in every one of them, an absorbing subphase
//! mixes between `(α′, b*)` and the target's decomposition until a stopping
//! rule fires or `T̄2` periods pass. Finally a compensation subphase plays
//! `(a′, b′)` until the block's discounted excess over the Stackelberg payoff
//! is used up, with a public lottery in the last period that makes the
//! block's expected discounted average exactly the Stackelberg payoff.
//!
//! Accounting is done on the unnormalised excess
//! `E = Σ_k δ^k (u1(a_k, b_k) − u*)` measured from the block's first period.

use crate::concentration::{self, ConcentrationError, FiniteDist};
use crate::game::{MixedAction, StageGame};
use crate::rng;
use crate::sets::{self, SetAWitness, SetsError};
use crate::stage::{self, DEFAULT_TOL};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Paths stop once the remaining discounted weight `δ^t` drops below this.
pub const RESIDUAL_WEIGHT: f64 = 1e-8;
/// Maximum tolerated error in a block's expected discounted average.
pub const ACCOUNTING_TOL: f64 = 1e-6;
/// Fewest replications [`estimate`] accepts.
pub const MIN_SIM_REPS: usize = 100;
/// Margin subtracted from the largest admissible weight on `a′`.
pub const ALPHA_BACKOFF: f64 = 1e-3;
const MERGE_TOL: f64 = 1e-12;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum SimError {
    #[error("Stackelberg action or reply is not unique")]
    NotUniqueStackelberg,
    #[error("no action beats the Stackelberg payoff against the Stackelberg reply")]
    NoProfitableDeviation,
    #[error("every best reply to {action} pays at least the Stackelberg payoff")]
    NoPunishingReply { action: String },
    #[error("target is not an attainable frequency")]
    NotAttainable,
    #[error("eps1 must lie in (0, 1), got {0}")]
    BadEps1(f64),
    #[error("delta must lie in (0, 1), got {0}")]
    BadDelta(f64),
    #[error("review length T2 rounds to zero for eps1 = {0}")]
    DegenerateReview(f64),
    #[error("delta {delta} too small for the block construction: {reason}")]
    DeltaTooSmall { delta: f64, reason: String },
    #[error("parameters were derived for delta {expected}, not {found}")]
    DeltaMismatch { expected: f64, found: f64 },
    #[error("need at least {min} replications, got {found}")]
    TooFewReps { min: usize, found: usize },
    #[error("target has {found} entries but player 1 has {expected} actions")]
    TargetLength { expected: usize, found: usize },
    #[error("block accounting drifted by {0:e}")]
    AccountingDrift(f64),
    #[error(transparent)]
    Sets(#[from] SetsError),
    #[error("{which}: {source}")]
    Concentration {
        which: &'static str,
        source: ConcentrationError,
    },
}

/// Which upper drift the absorbing subphase's second stopping rule uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Z2Variant {
    /// Stage payoff minus the subphase's expected payoff plus `ε1`.
    #[default]
    Drift,
    /// Stage payoff minus `ε1`, taken literally.
    Literal,
}

impl std::str::FromStr for Z2Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "drift" => Ok(Self::Drift),
            "literal" => Ok(Self::Literal),
            other => Err(format!(
                "unknown Z2 variant {other:?} (expected drift or literal)"
            )),
        }
    }
}

/// Parameters of the block construction.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub a_prime: usize,
    pub b_prime: usize,
    /// Mixed action on `{a*, a′}` with `b*` the unique strict best reply.
    pub alpha_prime: MixedAction,
    pub witness: SetAWitness,
    pub eps1: f64,
    pub c: f64,
    pub t1: usize,
    pub t2_bar: usize,
    pub delta_bar: f64,
    pub r1_star: f64,
    pub r2_star: f64,
    pub z1: FiniteDist,
    pub z2: FiniteDist,
    pub z2_variant: Z2Variant,
    /// Per-period payoff the upper stopping rule measures against.
    pub upper_target: f64,
    /// Probability `(a′, b*)` realises in an opening period.
    pub p: f64,
    /// Largest absolute stage payoff of player 1.
    pub m_bar: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Construction {
    Blocks(Box<BlockParams>),
    /// Target `δ_{a*}`: play `(a*, b*)` forever.
    AlwaysStackelberg,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    pub target: MixedAction,
    pub a_star: usize,
    pub b_star: usize,
    pub u_star: f64,
    pub delta: f64,
    pub construction: Construction,
}

impl SimParams {
    pub fn blocks(&self) -> Option<&BlockParams> {
        match &self.construction {
            Construction::Blocks(b) => Some(b),
            Construction::AlwaysStackelberg => None,
        }
    }

    /// Whether `delta` clears the asymptotic threshold `δ̄`; reported, not
    /// enforced.
    pub fn delta_meets_bar(&self) -> bool {
        self.blocks().is_none_or(|b| self.delta >= b.delta_bar)
    }
}

/// Largest weight on `a_prime` (mixed with `a_star`) keeping `b_star` the
/// strict unique best reply, found by bisection.
fn max_weight_keeping_reply(game: &StageGame, a_star: usize, a_prime: usize, b_star: usize) -> f64 {
    let strict = |w: f64| {
        let mut alpha = vec![0.0; game.n1()];
        alpha[a_star] = 1.0 - w;
        alpha[a_prime] = w;
        let ub = game.u2_mixed(&alpha, b_star);
        (0..game.n2())
            .filter(|&b| b != b_star)
            .all(|b| ub > game.u2_mixed(&alpha, b) + DEFAULT_TOL)
    };
    if strict(1.0) {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if strict(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

fn dist(which: &'static str, pairs: &[(f64, f64)]) -> Result<(FiniteDist, f64), SimError> {
    let wrap = |source| SimError::Concentration { which, source };
    let d = FiniteDist::merged(pairs, MERGE_TOL).map_err(wrap)?;
    let r = concentration::r_star(&d).map_err(wrap)?;
    Ok((d, r))
}

/// Check that `delta` leaves room for the block construction: the opening
/// periods must bank enough excess to absorb a lower breach, and the
/// continuation value after a worst-case opening and review must stay above
/// the compensation payoff.
fn check_structural_delta(
    game: &StageGame,
    u_star: f64,
    b: &BlockParams,
    b_star: usize,
    delta: f64,
) -> Result<(), SimError> {
    let too_small = |reason: String| SimError::DeltaTooSmall { delta, reason };
    let t1 = b.t1 as i32;
    let gain = game.u1(b.a_prime, b_star) - u_star;
    let banked = gain * (1.0 - delta.powi(t1)) / (1.0 - delta);
    let worst_review = delta.powi(t1) * (b.c + u_star - game.min_u1());
    if banked < worst_review {
        return Err(too_small(format!(
            "opening excess {banked:.4} cannot cover a worst-case review loss {worst_review:.4}"
        )));
    }
    let dk = delta.powi(t1 + b.t2_bar as i32);
    let comp_loss = u_star - game.u1(b.a_prime, b.b_prime);
    if dk * comp_loss < (1.0 - dk) * (b.m_bar - u_star) {
        return Err(too_small(
            "continuation after opening and review falls below the compensation payoff".into(),
        ));
    }
    Ok(())
}

/// Derive construction parameters for `target`.
///
/// A target equal to `δ_{a*}` selects the trivial always-Stackelberg
/// construction.
pub fn derive_params(
    game: &StageGame,
    target: &MixedAction,
    eps1: f64,
    delta: f64,
    z2_variant: Z2Variant,
) -> Result<SimParams, SimError> {
    if !(eps1 > 0.0 && eps1 < 1.0) {
        return Err(SimError::BadEps1(eps1));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(SimError::BadDelta(delta));
    }
    if target.len() != game.n1() {
        return Err(SimError::TargetLength {
            expected: game.n1(),
            found: target.len(),
        });
    }
    let t2 = ((1.0 - eps1).ln() / delta.ln()).ceil();
    if t2.is_nan() || t2 < 1.0 {
        return Err(SimError::DegenerateReview(eps1));
    }
    let st = stage::stackelberg(game, DEFAULT_TOL);
    if !st.is_unique() {
        return Err(SimError::NotUniqueStackelberg);
    }
    let (a_star, b_star, u_star) = (st.a_star, st.b_star, st.v_star);
    let base = |construction| SimParams {
        target: target.clone(),
        a_star,
        b_star,
        u_star,
        delta,
        construction,
    };
    if target.prob(a_star) >= 1.0 - 1e-12 {
        return Ok(base(Construction::AlwaysStackelberg));
    }

    let a_prime = (0..game.n1())
        .filter(|&a| game.u1(a, b_star) > u_star + DEFAULT_TOL)
        .max_by(|&x, &y| {
            game.u1(x, b_star)
                .total_cmp(&game.u1(y, b_star))
                .then(y.cmp(&x))
        })
        .ok_or(SimError::NoProfitableDeviation)?;
    let b_prime = stage::best_replies_p2(
        game,
        MixedAction::pure(game.n1(), a_prime).probs(),
        DEFAULT_TOL,
    )
    .into_iter()
    .min_by(|&x, &y| {
        game.u1(a_prime, x)
            .total_cmp(&game.u1(a_prime, y))
            .then(x.cmp(&y))
    })
    .expect("best-reply set is never empty");
    if game.u1(a_prime, b_prime) >= u_star - DEFAULT_TOL {
        return Err(SimError::NoPunishingReply {
            action: game.actions1()[a_prime].clone(),
        });
    }
    let w_max = max_weight_keeping_reply(game, a_star, a_prime, b_star);
    let w = if w_max > 2.0 * ALPHA_BACKOFF {
        w_max - ALPHA_BACKOFF
    } else {
        w_max / 2.0
    };
    let mut ap = vec![0.0; game.n1()];
    ap[a_star] = 1.0 - w;
    ap[a_prime] = w;
    let alpha_prime = MixedAction::from_approx(ap);

    let witness = sets::in_set_A(game, target, 0.0)?.ok_or(SimError::NotAttainable)?;

    let u_alpha_prime = game.u1_mixed(alpha_prime.probs(), b_star);
    let upper_target = match z2_variant {
        Z2Variant::Drift => eps1 * u_alpha_prime + (1.0 - eps1) * witness.payoff + eps1,
        Z2Variant::Literal => eps1,
    };
    // Realised stage payoffs of the absorbing subphase with their probabilities.
    let mut outcomes: Vec<(f64, f64)> = Vec::new();
    for (a, &pa) in alpha_prime.probs().iter().enumerate() {
        outcomes.push((game.u1(a, b_star), eps1 * pa));
    }
    for comp in &witness.components {
        for (a, &pa) in comp.alpha.probs().iter().enumerate() {
            outcomes.push((game.u1(a, comp.reply), (1.0 - eps1) * comp.weight * pa));
        }
    }
    let z1_pairs: Vec<(f64, f64)> = outcomes.iter().map(|&(u, p)| (u_star - u, p)).collect();
    let z2_pairs: Vec<(f64, f64)> = outcomes
        .iter()
        .map(|&(u, p)| (u - upper_target, p))
        .collect();
    let (z1, r1_star) = dist("Z1", &z1_pairs)?;
    let (z2, r2_star) = dist("Z2", &z2_pairs)?;

    let c = -eps1.ln() / r1_star.min(r2_star);
    let m_bar = (0..game.n1())
        .flat_map(|a| (0..game.n2()).map(move |b| (a, b)))
        .map(|(a, b)| game.u1(a, b).abs())
        .fold(0.0, f64::max);
    let gain = game.u1(a_prime, b_star) - u_star;
    let t1 = ((m_bar + c) / gain).ceil() as usize;
    let delta_bar = (1.0 - eps1.powi(3))
        .powf(1.0 / t1 as f64)
        .max(1.0 - eps1 * eps1);
    let blocks = BlockParams {
        a_prime,
        b_prime,
        p: alpha_prime.prob(a_prime),
        alpha_prime,
        witness,
        eps1,
        c,
        t1,
        t2_bar: t2 as usize,
        delta_bar,
        r1_star,
        r2_star,
        z1,
        z2,
        z2_variant,
        upper_target,
        m_bar,
    };
    check_structural_delta(game, u_star, &blocks, b_star, delta)?;
    Ok(base(Construction::Blocks(Box::new(blocks))))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Preparation,
    Opening,
    Absorbing,
    Compensation,
    Stackelberg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AbsorbingEnd {
    /// Cumulative shortfall below the Stackelberg payoff exceeded `c`.
    LowerBreach,
    /// Cumulative excess over the upper target exceeded `c`.
    UpperBreach,
    /// Ran the full `T̄2` periods.
    Completed,
    /// The path was truncated mid-subphase.
    Truncated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodRecord {
    pub a: usize,
    pub b: usize,
    pub phase: Phase,
    /// `(1−δ)δ^t`.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockRecord {
    pub start: usize,
    pub len: usize,
    pub absorbing: Option<(usize, AbsorbingEnd)>,
    pub compensation: usize,
    /// `(1−δ)·|expected excess|` at the block's end.
    pub accounting_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathRecord {
    pub periods: Vec<PeriodRecord>,
    /// Completed blocks only.
    pub blocks: Vec<BlockRecord>,
    pub preparation: usize,
}

/// Receives the events of one simulated path.
trait Sink {
    fn period(&mut self, a: usize, b: usize, phase: Phase, weight: f64);
    fn block(&mut self, block: BlockRecord);
    fn preparation(&mut self, len: usize);
}

impl Sink for PathRecord {
    fn period(&mut self, a: usize, b: usize, phase: Phase, weight: f64) {
        self.periods.push(PeriodRecord {
            a,
            b,
            phase,
            weight,
        });
    }
    fn block(&mut self, block: BlockRecord) {
        self.blocks.push(block);
    }
    fn preparation(&mut self, len: usize) {
        self.preparation = len;
    }
}

/// Per-path totals, enough for frequency and phase statistics.
#[derive(Debug, Clone, Default)]
struct PathTotals {
    freq: Vec<f64>,
    payoff: f64,
    preparation: usize,
    blocks: usize,
    absorbing_entries: usize,
    absorbing_periods: usize,
    lower_breaches: usize,
    upper_breaches: usize,
    completed_reviews: usize,
    compensation_periods: usize,
    max_accounting_error: f64,
    u1: Vec<Vec<f64>>,
}

impl Sink for PathTotals {
    fn period(&mut self, a: usize, b: usize, _phase: Phase, weight: f64) {
        self.freq[a] += weight;
        self.payoff += weight * self.u1[a][b];
    }
    fn block(&mut self, block: BlockRecord) {
        self.blocks += 1;
        if let Some((len, end)) = block.absorbing {
            self.absorbing_entries += 1;
            self.absorbing_periods += len;
            match end {
                AbsorbingEnd::LowerBreach => self.lower_breaches += 1,
                AbsorbingEnd::UpperBreach => self.upper_breaches += 1,
                AbsorbingEnd::Completed => self.completed_reviews += 1,
                AbsorbingEnd::Truncated => {}
            }
        }
        self.compensation_periods += block.compensation;
        self.max_accounting_error = self.max_accounting_error.max(block.accounting_error);
    }
    fn preparation(&mut self, len: usize) {
        self.preparation = len;
    }
}

fn draw(alpha: &MixedAction, rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in alpha.probs().iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding: fall back to the last action with mass
    alpha.probs().iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// The discount clock of one path.
struct Clock<'a, S: Sink> {
    t: usize,
    weight: f64,
    delta: f64,
    sink: &'a mut S,
}

impl<S: Sink> Clock<'_, S> {
    /// Record a period; false once the residual weight is exhausted.
    fn play(&mut self, a: usize, b: usize, phase: Phase) -> bool {
        self.sink
            .period(a, b, phase, (1.0 - self.delta) * self.weight);
        self.t += 1;
        self.weight *= self.delta;
        self.weight >= RESIDUAL_WEIGHT
    }
}

/// Outcome of one absorbing subphase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbsorbingTrial {
    pub periods: usize,
    pub end: AbsorbingEnd,
    /// `Σ_j δ^j (u_j − u*)` over the subphase.
    pub excess: f64,
}

/// Play one absorbing subphase, feeding each realised profile to `play`,
/// which returns false to truncate.
fn absorbing<F: FnMut(usize, usize) -> bool>(
    game: &StageGame,
    params: &SimParams,
    bp: &BlockParams,
    rng: &mut ChaCha8Rng,
    mut play: F,
) -> AbsorbingTrial {
    let delta = params.delta;
    let (mut lower, mut upper, mut excess, mut d) = (0.0, 0.0, 0.0, 1.0);
    for j in 0..bp.t2_bar {
        let (a, b) = if rng.gen::<f64>() < bp.eps1 {
            (draw(&bp.alpha_prime, rng), params.b_star)
        } else {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let comps = &bp.witness.components;
            let comp = comps
                .iter()
                .find(|c| {
                    acc += c.weight;
                    u < acc
                })
                .unwrap_or(&comps[comps.len() - 1]);
            (draw(&comp.alpha, rng), comp.reply)
        };
        let u = game.u1(a, b);
        lower += d * (params.u_star - u);
        upper += d * (u - bp.upper_target);
        excess += d * (u - params.u_star);
        d *= delta;
        let keep_going = play(a, b);
        let end = if lower > bp.c {
            Some(AbsorbingEnd::LowerBreach)
        } else if upper > bp.c {
            Some(AbsorbingEnd::UpperBreach)
        } else if !keep_going {
            Some(AbsorbingEnd::Truncated)
        } else {
            None
        };
        if let Some(end) = end {
            return AbsorbingTrial {
                periods: j + 1,
                end,
                excess,
            };
        }
    }
    AbsorbingTrial {
        periods: bp.t2_bar,
        end: AbsorbingEnd::Completed,
        excess,
    }
}

/// Run one absorbing subphase in isolation.
pub fn absorbing_trial(
    game: &StageGame,
    params: &SimParams,
    seed: u64,
    index: u64,
) -> Option<AbsorbingTrial> {
    let bp = params.blocks()?;
    let mut rng = rng::stream(seed, index);
    Some(absorbing(game, params, bp, &mut rng, |_, _| true))
}

fn run_path<S: Sink>(
    game: &StageGame,
    params: &SimParams,
    rng: &mut ChaCha8Rng,
    sink: &mut S,
) -> Result<(), SimError> {
    let delta = params.delta;
    let mut clock = Clock {
        t: 0,
        weight: 1.0,
        delta,
        sink,
    };
    let bp = match &params.construction {
        Construction::AlwaysStackelberg => {
            while clock.play(params.a_star, params.b_star, Phase::Stackelberg) {}
            return Ok(());
        }
        Construction::Blocks(bp) => bp,
    };
    let b_star = params.b_star;
    let u_star = params.u_star;

    loop {
        let a = draw(&bp.alpha_prime, rng);
        let alive = clock.play(a, b_star, Phase::Preparation);
        if a == bp.a_prime {
            clock.sink.preparation(clock.t);
            if !alive {
                return Ok(());
            }
            break;
        }
        if !alive {
            clock.sink.preparation(clock.t);
            return Ok(());
        }
    }

    let comp_gap = game.u1(bp.a_prime, bp.b_prime) - u_star;
    loop {
        let start = clock.t;
        let mut excess = 0.0;
        let mut dk = 1.0;
        let mut all_prime = true;
        for _ in 0..bp.t1 {
            let a = draw(&bp.alpha_prime, rng);
            all_prime &= a == bp.a_prime;
            excess += dk * (game.u1(a, b_star) - u_star);
            dk *= delta;
            if !clock.play(a, b_star, Phase::Opening) {
                return Ok(());
            }
        }
        let mut absorbing_summary = None;
        if all_prime {
            let mut alive = true;
            let trial = absorbing(game, params, bp, rng, |a, b| {
                alive = clock.play(a, b, Phase::Absorbing);
                alive
            });
            if !alive {
                return Ok(());
            }
            excess += dk * trial.excess;
            dk *= delta.powi(trial.periods as i32);
            absorbing_summary = Some((trial.periods, trial.end));
        }
        if excess < 0.0 && (1.0 - delta) * -excess > ACCOUNTING_TOL {
            return Err(SimError::AccountingDrift((1.0 - delta) * -excess));
        }
        let mut compensation = 0;
        let mut error = 0.0;
        while excess > 0.0 {
            let next = excess + dk * comp_gap;
            if next >= 0.0 {
                excess = next;
            } else {
                // Lottery between stopping now and one more period.
                let lambda = excess / (excess - next);
                error = (1.0 - delta) * (lambda * next + (1.0 - lambda) * excess).abs();
                if rng.gen::<f64>() >= lambda {
                    break;
                }
            }
            compensation += 1;
            dk *= delta;
            if !clock.play(bp.a_prime, bp.b_prime, Phase::Compensation) {
                return Ok(());
            }
            if next < 0.0 {
                break;
            }
        }
        if error > ACCOUNTING_TOL {
            return Err(SimError::AccountingDrift(error));
        }
        clock.sink.block(BlockRecord {
            start,
            len: clock.t - start,
            absorbing: absorbing_summary,
            compensation,
            accounting_error: error,
        });
    }
}

fn check_delta(params: &SimParams, delta: f64) -> Result<(), SimError> {
    if delta != params.delta {
        return Err(SimError::DeltaMismatch {
            expected: params.delta,
            found: delta,
        });
    }
    Ok(())
}

/// Simulate one on-path history. The same seed always reproduces the same
/// record; it is replication 0 of [`estimate`] under that seed.
pub fn simulate_path(
    game: &StageGame,
    params: &SimParams,
    delta: f64,
    seed: u64,
) -> Result<PathRecord, SimError> {
    check_delta(params, delta)?;
    let mut record = PathRecord {
        periods: Vec::new(),
        blocks: Vec::new(),
        preparation: 0,
    };
    run_path(game, params, &mut rng::stream(seed, 0), &mut record)?;
    Ok(record)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseStats {
    pub mean_blocks: f64,
    pub mean_preparation: f64,
    pub absorbing_entries: usize,
    pub mean_absorbing_periods: f64,
    pub lower_breaches: usize,
    pub upper_breaches: usize,
    pub completed_reviews: usize,
    pub mean_compensation_periods: f64,
    pub max_accounting_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimOutcome {
    /// Estimated discounted frequency per player-1 action.
    pub freq: Vec<f64>,
    /// 95% confidence radius per action.
    pub freq_ci: Vec<f64>,
    pub payoff: f64,
    pub payoff_ci: f64,
    pub reps: usize,
    /// Largest per-action confidence radius.
    pub ci_radius: f64,
    pub phase_stats: PhaseStats,
}

fn mean_and_ci(xs: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = xs.clone().sum::<f64>() / nf;
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    (mean, 1.96 * (var / nf).sqrt())
}

/// Average discounted frequencies and payoffs over `reps` independent paths.
pub fn estimate(
    game: &StageGame,
    params: &SimParams,
    delta: f64,
    reps: usize,
    seed: u64,
) -> Result<SimOutcome, SimError> {
    check_delta(params, delta)?;
    if reps < MIN_SIM_REPS {
        return Err(SimError::TooFewReps {
            min: MIN_SIM_REPS,
            found: reps,
        });
    }
    let u1: Vec<Vec<f64>> = (0..game.n1())
        .map(|a| (0..game.n2()).map(|b| game.u1(a, b)).collect())
        .collect();
    let paths: Vec<PathTotals> = (0..reps as u64)
        .into_par_iter()
        .map(|i| {
            let mut totals = PathTotals {
                freq: vec![0.0; game.n1()],
                u1: u1.clone(),
                ..Default::default()
            };
            run_path(game, params, &mut rng::stream(seed, i), &mut totals).map(|_| totals)
        })
        .collect::<Result<_, _>>()?;

    let mut freq = Vec::with_capacity(game.n1());
    let mut freq_ci = Vec::with_capacity(game.n1());
    for a in 0..game.n1() {
        let (m, ci) = mean_and_ci(paths.iter().map(|p| p.freq[a]), reps);
        freq.push(m);
        freq_ci.push(ci);
    }
    let (payoff, payoff_ci) = mean_and_ci(paths.iter().map(|p| p.payoff), reps);
    let n = reps as f64;
    let absorbing_entries: usize = paths.iter().map(|p| p.absorbing_entries).sum();
    let phase_stats = PhaseStats {
        mean_blocks: paths.iter().map(|p| p.blocks as f64).sum::<f64>() / n,
        mean_preparation: paths.iter().map(|p| p.preparation as f64).sum::<f64>() / n,
        absorbing_entries,
        mean_absorbing_periods: if absorbing_entries == 0 {
            0.0
        } else {
            paths
                .iter()
                .map(|p| p.absorbing_periods as f64)
                .sum::<f64>()
                / absorbing_entries as f64
        },
        lower_breaches: paths.iter().map(|p| p.lower_breaches).sum(),
        upper_breaches: paths.iter().map(|p| p.upper_breaches).sum(),
        completed_reviews: paths.iter().map(|p| p.completed_reviews).sum(),
        mean_compensation_periods: paths
            .iter()
            .map(|p| p.compensation_periods as f64)
            .sum::<f64>()
            / paths.iter().map(|p| p.blocks as f64).sum::<f64>().max(1.0),
        max_accounting_error: paths
            .iter()
            .map(|p| p.max_accounting_error)
            .fold(0.0, f64::max),
    };
    Ok(SimOutcome {
        ci_radius: freq_ci.iter().copied().fold(0.0, f64::max),
        freq,
        freq_ci,
        payoff,
        payoff_ci,
        reps,
        phase_stats,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncentiveReport {
    /// Best one-shot deviation followed by minmax punishment.
    pub deviation_cap: f64,
    /// Lowest on-path continuation value the construction can reach.
    pub min_continuation: f64,
    pub slack: f64,
    pub passes: bool,
}

/// Compare the lowest on-path continuation value with the value of deviating
/// once and being held to the minmax payoff thereafter.
///
/// A block front-loads at most `T1 + T̄2` periods before compensation starts,
/// each paying at most `M̄`, and the block still averages `u*`; this bounds
/// the continuation value at the start of compensation from below.
pub fn check_incentives(
    game: &StageGame,
    params: &SimParams,
    delta: f64,
) -> Result<IncentiveReport, SimError> {
    check_delta(params, delta)?;
    let vlow = stage::minmax_p1(game);
    let (m_bar, min_continuation) = match params.blocks() {
        None => {
            let m_bar = (0..game.n1())
                .flat_map(|a| (0..game.n2()).map(move |b| (a, b)))
                .map(|(a, b)| game.u1(a, b).abs())
                .fold(0.0, f64::max);
            (m_bar, params.u_star)
        }
        Some(bp) => {
            let dk = delta.powi((bp.t1 + bp.t2_bar) as i32);
            (bp.m_bar, (params.u_star - (1.0 - dk) * bp.m_bar) / dk)
        }
    };
    let deviation_cap = (1.0 - delta) * m_bar + delta * vlow;
    let slack = min_continuation - deviation_cap;
    Ok(IncentiveReport {
        deviation_cap,
        min_continuation,
        slack,
        passes: slack > 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::load_game;

    fn product_choice() -> StageGame {
        load_game(
            r#"{"actions1":["H","L"],"actions2":["h","l"],
            "u1":[[0.6,-0.2],[1,0]],"u2":[[1.5,1],[-0.5,0]]}"#,
        )
        .unwrap()
    }

    fn target(g: &StageGame) -> MixedAction {
        MixedAction::parse(g.actions1(), "H:0.375,L:0.625").unwrap()
    }

    #[test]
    fn product_choice_parameters() {
        let g = product_choice();
        let p = derive_params(&g, &target(&g), 0.05, 0.999, Z2Variant::Drift).unwrap();
        let bp = p.blocks().unwrap();
        assert_eq!((bp.a_prime, bp.b_prime), (1, 1));
        assert!((bp.alpha_prime.prob(1) - 0.499).abs() < 1e-6);
        assert_eq!(bp.p, bp.alpha_prime.prob(1));
        let rmin = bp.r1_star.min(bp.r2_star);
        assert!((bp.c - (-(0.05f64).ln()) / rmin).abs() < 1e-9);
        assert_eq!(bp.t1, ((1.0 + bp.c) / 0.4).ceil() as usize);
        assert_eq!(
            bp.t2_bar,
            ((0.95f64).ln() / (0.999f64).ln()).ceil() as usize
        );
        assert!(bp.z1.mean() < 0.0 && bp.z2.mean() < 0.0);
        assert!((-rmin * bp.c).exp() <= 0.05 + 1e-12);
        assert!(!p.delta_meets_bar());
    }

    #[test]
    fn parameter_errors() {
        let g = product_choice();
        let t = target(&g);
        assert!(matches!(
            derive_params(&g, &t, 0.01, 0.5, Z2Variant::Drift),
            Err(SimError::DeltaTooSmall { .. })
        ));
        assert_eq!(
            derive_params(&g, &t, 0.0, 0.999, Z2Variant::Drift),
            Err(SimError::BadEps1(0.0))
        );
        assert_eq!(
            derive_params(&g, &t, 1e-20, 0.999, Z2Variant::Drift).map(|_| ()),
            Err(SimError::DegenerateReview(1e-20))
        );
        assert!(matches!(
            derive_params(&g, &MixedAction::pure(2, 1), 0.01, 0.999, Z2Variant::Drift),
            Err(SimError::NotAttainable)
        ));
        // the literal Z2 has positive drift, so r* does not exist
        assert!(matches!(
            derive_params(&g, &t, 0.01, 0.999, Z2Variant::Literal),
            Err(SimError::Concentration { which: "Z2", .. })
        ));
    }

    #[test]
    fn no_profitable_deviation() {
        let g = load_game(
            r#"{"actions1":["H","M","L"],"actions2":["T","N"],
            "u1":[[1,0],[0,3],[0,0]],"u2":[[1,0],[3,0],[0,3]]}"#,
        )
        .unwrap();
        let t = MixedAction::parse(g.actions1(), "M:0.5,L:0.5").unwrap();
        assert_eq!(
            derive_params(&g, &t, 0.01, 0.999, Z2Variant::Drift),
            Err(SimError::NoProfitableDeviation)
        );
    }

    #[test]
    fn path_is_deterministic_and_blocks_balance() {
        let g = product_choice();
        let p = derive_params(&g, &target(&g), 0.01, 0.999, Z2Variant::Drift).unwrap();
        let a = simulate_path(&g, &p, 0.999, 5).unwrap();
        let b = simulate_path(&g, &p, 0.999, 5).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert!(!a.blocks.is_empty());
        for blk in &a.blocks {
            assert!(blk.accounting_error <= ACCOUNTING_TOL);
        }
        let residual = 0.999f64.powi(a.periods.len() as i32);
        assert!((RESIDUAL_WEIGHT * 0.999..RESIDUAL_WEIGHT).contains(&residual));
        assert!(a.periods[..a.preparation]
            .iter()
            .all(|r| r.phase == Phase::Preparation));
        assert_eq!(a.periods[a.preparation - 1].a, 1);
        assert_eq!(
            simulate_path(&g, &p, 0.99, 5),
            Err(SimError::DeltaMismatch {
                expected: 0.999,
                found: 0.99
            })
        );
    }

    #[test]
    fn always_stackelberg_variant() {
        let g = product_choice();
        let p = derive_params(&g, &MixedAction::pure(2, 0), 0.01, 0.999, Z2Variant::Drift).unwrap();
        assert_eq!(p.construction, Construction::AlwaysStackelberg);
        let out = estimate(&g, &p, 0.999, 100, 1).unwrap();
        assert!(out.freq[0] >= 0.99);
        let inc = check_incentives(&g, &p, 0.999).unwrap();
        assert!(inc.passes);
    }

    #[test]
    fn incentive_slack_product_choice() {
        let g = product_choice();
        let p = derive_params(&g, &target(&g), 0.01, 0.999, Z2Variant::Drift).unwrap();
        let inc = check_incentives(&g, &p, 0.999).unwrap();
        assert!((inc.deviation_cap - 0.001).abs() < 1e-9);
        assert!(inc.passes && inc.slack > 0.3);
    }

    #[test]
    fn small_estimate_is_deterministic() {
        let g = product_choice();
        let p = derive_params(&g, &target(&g), 0.01, 0.999, Z2Variant::Drift).unwrap();
        let a = estimate(&g, &p, 0.999, 100, 3).unwrap();
        let b = estimate(&g, &p, 0.999, 100, 3).unwrap();
        assert_eq!(a, b);
        assert!((a.freq.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert!(matches!(
            estimate(&g, &p, 0.999, 10, 3),
            Err(SimError::TooFewReps { .. })
        ));
    }
}
