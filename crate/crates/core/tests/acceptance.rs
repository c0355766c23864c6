//! Acceptance checks, one line per criterion.
//!
//! Runs without the libtest harness so that every PASS/FAIL line is printed
//! even when all checks succeed. Exits non-zero if any criterion fails.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use repfreq::apps::{self, AppParams};
use repfreq::bounds;
use repfreq::concentration::{self, FiniteDist};
use repfreq::game::{load_game, MixedAction, StageGame};
use repfreq::sim::{self, Construction, Z2Variant};
use repfreq::stage::{self, DEFAULT_TOL};
use std::time::{Duration, Instant};

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures");

const GAME_FIXTURES: [&str; 6] = [
    "product_choice",
    "product3",
    "entry_deterrence",
    "fiscal",
    "three_by_two",
    "matching_penny_variant",
];
const APP_FIXTURES: [&str; 4] = ["product_choice", "product3", "entry_deterrence", "fiscal"];

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Option<Duration>);

fn fixture(name: &str) -> StageGame {
    let path = format!("{FIXTURES}/{name}.json");
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"));
    load_game(&text).unwrap_or_else(|e| panic!("{path}: {e}"))
}

fn fstar(game: &StageGame) -> f64 {
    bounds::fstar(game, 0.0, false).expect("fstar").value
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn closed_form_agreement() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for variant in ["product2", "product3", "entry", "fiscal"] {
        for p in apps::parameter_grid(variant) {
            let cf = apps::closed_form_fstar(&p).map_err(|e| format!("{p:?}: {e}"))?;
            let game = apps::build_stage_game(&p).map_err(|e| format!("{p:?}: {e}"))?;
            let lp = bounds::fstar(&game, 0.0, false)
                .map_err(|e| format!("{p:?}: {e}"))?
                .value;
            let d = (lp - cf).abs();
            ensure(d <= 1e-8, || format!("{p:?}: lp {lp} vs closed form {cf}"))?;
            worst = worst.max(d);
            count += 1;
        }
    }
    Ok(format!(
        "{count} parameter points, max |diff| = {worst:.2e}"
    ))
}

fn counterexample_fixtures() -> Outcome {
    let g = fixture("three_by_two");
    let v = fstar(&g);
    ensure(v == 0.0, || {
        format!("3x2 game: F* = {v}, expected exactly 0")
    })?;

    let g = fixture("matching_penny_variant");
    let report = stage::check_assumptions(&g, DEFAULT_TOL);
    let st = stage::stackelberg(&g, DEFAULT_TOL);
    ensure(!report.a2_above_minmax, || {
        "penny variant passes the minmax condition".into()
    })?;
    ensure((report.minmax - 0.05).abs() <= 1e-9, || {
        format!("minmax {}", report.minmax)
    })?;
    ensure((st.v_star + 0.9).abs() <= 1e-12, || {
        format!("Stackelberg payoff {}", st.v_star)
    })?;
    Ok(format!(
        "F* = 0; minmax = {:.12}, v* = {}",
        report.minmax, st.v_star
    ))
}

fn random_game(rng: &mut ChaCha8Rng) -> StageGame {
    let mut m = || {
        (0..3)
            .map(|_| (0..3).map(|_| rng.gen_range(-1.0..=1.0)).collect())
            .collect()
    };
    let (u1, u2): (Vec<Vec<f64>>, Vec<Vec<f64>>) = (m(), m());
    let labels = |p: &str| (0..3).map(|i| format!("{p}{i}")).collect();
    StageGame::new(labels("a"), labels("b"), u1, u2).expect("valid game")
}

fn equality_variant() -> Outcome {
    let mut games: Vec<(String, StageGame)> = GAME_FIXTURES
        .iter()
        .map(|n| (n.to_string(), fixture(n)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_607);
    let mut drawn = 0;
    let mut kept = 0;
    while kept < 100 {
        drawn += 1;
        ensure(drawn <= 100_000, || {
            "too few random games satisfy the assumptions".into()
        })?;
        let g = random_game(&mut rng);
        if stage::check_assumptions(&g, DEFAULT_TOL).all_hold() {
            games.push((format!("random #{drawn}"), g));
            kept += 1;
        }
    }
    let mut worst: f64 = 0.0;
    for (name, g) in &games {
        let ineq = bounds::fstar(g, 0.0, false)
            .map_err(|e| format!("{name}: {e}"))?
            .value;
        let eq = bounds::fstar(g, 0.0, true)
            .map_err(|e| format!("{name}: {e}"))?
            .value;
        let d = (eq - ineq).abs();
        ensure(d <= 1e-8, || {
            format!("{name}: equality {eq} vs inequality {ineq}")
        })?;
        worst = worst.max(d);
    }
    Ok(format!(
        "{} fixtures + 100 random games ({drawn} drawn), max |diff| = {worst:.2e}",
        GAME_FIXTURES.len()
    ))
}

fn grid_sandwich() -> Outcome {
    let mut parts = Vec::new();
    for name in GAME_FIXTURES {
        let g = fixture(name);
        if g.n1() != 2 || g.n2() != 2 {
            continue;
        }
        let lp = fstar(&g);
        let grid = bounds::fstar_grid_oracle(&g, 50).map_err(|e| format!("{name}: {e}"))?;
        ensure(lp <= grid + 1e-12 && grid <= lp + 0.03, || {
            format!("{name}: lp {lp}, grid {grid}")
        })?;
        parts.push(format!("{name} gap {:.4}", grid - lp));
    }
    Ok(parts.join(", "))
}

fn epsilon_continuity() -> Outcome {
    let eps: Vec<f64> = (2..=6).rev().map(|k| 10f64.powi(-k)).collect();
    let mut worst: f64 = 0.0;
    for name in GAME_FIXTURES {
        let g = fixture(name);
        let curve = bounds::f_epsilon_curve(&g, &eps).map_err(|e| format!("{name}: {e}"))?;
        // Larger slack relaxes the program, so the value cannot rise with ε.
        for w in curve.windows(2) {
            let ((e0, f0), (e1, f1)) = (w[0], w[1]);
            ensure(f1 <= f0 + 1e-9, || {
                format!("{name}: F({e1}) = {f1} > F({e0}) = {f0}")
            })?;
        }
        // The curve is ascending in ε; its smallest-ε value comes first.
        let last = curve.first().expect("non-empty").1;
        let d = (last - fstar(&g)).abs();
        ensure(d <= 1e-4, || {
            format!("{name}: F(1e-6) = {last}, F* = {}", fstar(&g))
        })?;
        worst = worst.max(d);
    }
    Ok(format!("max |F(1e-6) - F*| = {worst:.2e}"))
}

fn concentration_bound() -> Outcome {
    let dists = [
        ("ln3", 3f64.ln()),
        ("cubic", (2.0 + 2.0 * 2f64.sqrt()).ln()),
    ];
    let mut cells = 0;
    let mut tightest = f64::INFINITY;
    for (i, (name, exact)) in dists.iter().enumerate() {
        let path = format!("{FIXTURES}/dist_{name}.json");
        let dist: FiniteDist =
            serde_json::from_str(&std::fs::read_to_string(&path).map_err(|e| e.to_string())?)
                .map_err(|e| format!("{path}: {e}"))?;
        let r = concentration::r_star(&dist).map_err(|e| e.to_string())?;
        ensure((r - exact).abs() <= 1e-10, || {
            format!("{name}: r* = {r}, expected {exact}")
        })?;
        for (j, c) in [0.5, 1.0, 2.0, 4.0].into_iter().enumerate() {
            for (k, delta) in [0.9, 0.99, 0.999].into_iter().enumerate() {
                let seed = (i * 100 + j * 10 + k) as u64;
                let rep = concentration::mc_tail_probability(&dist, delta, c, None, 100_000, seed)
                    .map_err(|e| format!("{name} c={c} δ={delta}: {e}"))?;
                let margin = rep.analytic_bound + 3.0 * rep.std_error - rep.empirical;
                ensure(margin >= 0.0, || {
                    format!(
                        "{name} c={c} δ={delta}: empirical {} > bound {} + 3·{}",
                        rep.empirical, rep.analytic_bound, rep.std_error
                    )
                })?;
                tightest = tightest.min(margin);
                cells += 1;
            }
        }
    }
    Ok(format!(
        "r* matched; {cells} cells, smallest margin {tightest:.4}"
    ))
}

fn parse_target(game: &StageGame, text: &str) -> Result<MixedAction, String> {
    MixedAction::parse(game.actions1(), text).map_err(|e| e.to_string())
}

fn simulator_frequency() -> Outcome {
    let g = fixture("product_choice");
    let target = parse_target(&g, "H:0.375,L:0.625")?;
    let params = sim::derive_params(&g, &target, 0.01, 0.999, Z2Variant::Drift)
        .map_err(|e| e.to_string())?;
    let out = sim::estimate(&g, &params, 0.999, 2000, 42).map_err(|e| e.to_string())?;
    let h = out.freq[g.action1_index("H").unwrap()];
    let acc = out.phase_stats.max_accounting_error;
    ensure((h - 0.375).abs() <= 0.05, || format!("freq(H) = {h}"))?;
    ensure((out.payoff - 0.6).abs() <= 0.02, || {
        format!("payoff = {}", out.payoff)
    })?;
    ensure(acc <= 1e-6, || format!("block accounting error {acc}"))?;
    Ok(format!(
        "freq(H) = {h:.4}, payoff = {:.4}, max block error {acc:.1e}",
        out.payoff
    ))
}

fn endpoint_frequencies() -> Outcome {
    let mut parts = Vec::new();
    for name in APP_FIXTURES {
        let g = fixture(name);
        let res = bounds::fstar(&g, 0.0, false).map_err(|e| e.to_string())?;
        let target = MixedAction::from_approx(res.witness.marginal());
        let params = sim::derive_params(&g, &target, 0.01, 0.999, Z2Variant::Drift)
            .map_err(|e| format!("{name}: {e}"))?;
        let out = sim::estimate(&g, &params, 0.999, 2000, 7).map_err(|e| format!("{name}: {e}"))?;
        let fa = out.freq[params.a_star];
        ensure(fa >= res.value - 0.05, || {
            format!("{name}: freq(a*) = {fa}, F* = {}", res.value)
        })?;
        parts.push(format!("{name} {fa:.3}≥{:.3}", res.value - 0.05));
    }
    let g = fixture("product_choice");
    let target = parse_target(&g, "H:1")?;
    let params = sim::derive_params(&g, &target, 0.01, 0.999, Z2Variant::Drift)
        .map_err(|e| e.to_string())?;
    ensure(
        matches!(params.construction, Construction::AlwaysStackelberg),
        || "pure Stackelberg target did not give the trivial construction".into(),
    )?;
    let out = sim::estimate(&g, &params, 0.999, 2000, 7).map_err(|e| e.to_string())?;
    let fa = out.freq[params.a_star];
    ensure(fa >= 0.99, || format!("always-a*: freq(a*) = {fa}"))?;
    parts.push(format!("always-a* {fa:.3}"));
    Ok(parts.join(", "))
}

/// LP value and closed form at one parameter point; they must agree.
fn both(p: &AppParams) -> Result<f64, String> {
    let cf = apps::closed_form_fstar(p).map_err(|e| format!("{p:?}: {e}"))?;
    let lp = fstar(&apps::build_stage_game(p).map_err(|e| format!("{p:?}: {e}"))?);
    ensure((cf - lp).abs() <= 1e-8, || {
        format!("{p:?}: lp {lp} vs closed form {cf}")
    })?;
    Ok(cf)
}

fn check_direction(label: &str, lo: f64, hi: f64, sign: i8) -> Result<(), String> {
    let ok = match sign {
        1 => hi > lo,
        -1 => hi < lo,
        _ => (hi - lo).abs() <= 1e-9,
    };
    ensure(ok, || {
        format!("{label}: {lo} -> {hi}, expected sign {sign}")
    })
}

fn comparative_statics() -> Outcome {
    let g = apps::unit_grid();
    let mut checks = 0;
    for i in 0..g.len() {
        for j in 0..g.len() {
            for k in 0..g.len() {
                let pc = |gamma, ch, cl| AppParams::Product2 { gamma, ch, cl };
                let base = both(&pc(g[i], g[j], g[k]))?;
                if i + 1 < g.len() {
                    check_direction("product2 γ", base, both(&pc(g[i + 1], g[j], g[k]))?, 1)?;
                    checks += 1;
                }
                if j + 1 < g.len() {
                    check_direction("product2 c_h", base, both(&pc(g[i], g[j + 1], g[k]))?, -1)?;
                    checks += 1;
                }
                if k + 1 < g.len() {
                    check_direction("product2 c_l", base, both(&pc(g[i], g[j], g[k + 1]))?, 0)?;
                    checks += 1;
                }

                let en = |gamma, co, ci| AppParams::Entry {
                    gamma,
                    co,
                    ci,
                    subsidy: 0.0,
                };
                let base = both(&en(g[i], g[j], g[k]))?;
                if i + 1 < g.len() {
                    check_direction("entry γ", base, both(&en(g[i + 1], g[j], g[k]))?, 1)?;
                    checks += 1;
                }
                if j + 1 < g.len() {
                    check_direction("entry c_o", base, both(&en(g[i], g[j + 1], g[k]))?, -1)?;
                    checks += 1;
                }
                if k + 1 < g.len() {
                    check_direction("entry c_i", base, both(&en(g[i], g[j], g[k + 1]))?, 0)?;
                    checks += 1;
                }
            }
        }
    }
    Ok(format!("{checks} finite-difference checks"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        (
            "closed-form agreement",
            closed_form_agreement,
            Some(Duration::from_secs(60)),
        ),
        ("counterexample fixtures", counterexample_fixtures, None),
        ("equality-constrained program", equality_variant, None),
        ("grid-oracle sandwich", grid_sandwich, None),
        ("epsilon continuity", epsilon_continuity, None),
        (
            "concentration bound",
            concentration_bound,
            Some(Duration::from_secs(300)),
        ),
        (
            "simulator frequency",
            simulator_frequency,
            Some(Duration::from_secs(600)),
        ),
        ("endpoint frequencies", endpoint_frequencies, None),
        ("comparative statics", comparative_statics, None),
    ];
    let mut failed = 0;
    for (n, (name, check, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let mut result = check();
        let elapsed = start.elapsed();
        if let (Ok(_), Some(b)) = (&result, budget) {
            if elapsed > *b {
                result = Err(format!("took {elapsed:.1?}, budget {b:.0?}"));
            }
        }
        match result {
            Ok(detail) => println!("PASS {} {name} ({elapsed:.2?}): {detail}", n + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name} ({elapsed:.2?}): {why}", n + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
