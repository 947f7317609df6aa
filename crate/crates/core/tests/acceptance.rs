//! Acceptance suite: eight end-to-end criteria, one PASS/FAIL line each.
//!
//! Every comparison is exact (tolerance 0); runtimes are printed next to
//! their budgets. Runs as a plain binary so the lines always show.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use midr_core::instances::{self, grid_profiles, NoMoneyKind};
use midr_core::io;
use midr_core::mechanism::{self, PaymentRule};
use midr_core::rational::{int, ratio, Rational};
use midr_core::rounding;
use midr_core::verify::{
    self, ObliviousRounder, ReportReadingRounder, Rounder, TruthfulnessOptions,
};
use midr_core::{Allocation, Bundle, FractionalPoint, Instance, Valuation};

fn grid(hi: i64) -> Vec<Rational> {
    (0..=hi).map(int).collect()
}

fn b(items: &[usize]) -> Bundle {
    Bundle::from_items(items.iter().copied())
}

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Outcome {
            passed,
            detail: detail.into(),
        }
    }
}

/// The auction families at desk scale used by criteria 2 to 6.
fn auction_families() -> Vec<(&'static str, Instance, Vec<Rational>)> {
    vec![
        (
            "single-item n=2",
            instances::make_single_item(2).unwrap(),
            grid(3),
        ),
        (
            "single-item n=3",
            instances::make_single_item(3).unwrap(),
            grid(3),
        ),
        (
            "single-minded-ca triangle n=3 m=3",
            instances::make_single_minded_ca(3, vec![b(&[0, 1]), b(&[1, 2]), b(&[0, 2])]).unwrap(),
            grid(3),
        ),
        (
            "single-minded-ca {ab},{a},{b} n=3 m=2",
            instances::make_single_minded_ca(2, vec![b(&[0, 1]), b(&[0]), b(&[1])]).unwrap(),
            grid(3),
        ),
        (
            "gap-toy 2x2",
            instances::make_gap_toy(2, 2).unwrap(),
            grid(2),
        ),
        (
            "case-b beta=1/2 n=2",
            instances::make_case_b_family(2, ratio(1, 2)).unwrap(),
            grid(3),
        ),
    ]
}

fn second_price() -> Outcome {
    let mut cases = 0;
    for n in [2usize, 3] {
        let inst = instances::make_single_item(n).unwrap();
        for p in grid_profiles(&inst, &grid(6)).unwrap() {
            cases += 1;
            let bids: Vec<Rational> = (0..n)
                .map(|i| p.valuation(i).value(i, Bundle::singleton(0)).unwrap())
                .collect();
            let (top, best) = instances::find_max(&bids).unwrap();
            let mut sorted = bids.clone();
            sorted.sort_by(|a, b| b.cmp(a));
            let out = mechanism::run(&inst, &p, cases as u64).unwrap();
            // A zero top bid leaves the item unsold, which is welfare-equal
            // to handing it to the lowest index.
            let expected = if best == int(0) {
                Allocation::empty(n)
            } else {
                Allocation::single(n, top, Bundle::singleton(0))
            };
            let mut pay = vec![int(0); n];
            if best != int(0) {
                pay[top] = sorted[1].clone();
            }
            if out.realized != expected
                || out.distribution != rounding::AllocationDistribution::point(expected.clone())
                || out.expected_payments != pay
            {
                return Outcome::new(
                    false,
                    format!(
                        "bids {bids:?}: got {:?} paying {:?}",
                        out.realized, out.expected_payments
                    ),
                );
            }
        }
    }
    Outcome::new(
        true,
        format!("{cases} profiles, winner = argmax, payment = second-highest bid"),
    )
}

fn truthfulness_and_identity() -> (Outcome, Outcome) {
    let mut truth_cases = 0;
    let mut identity_cases = 0;
    let mut truth_fail = Vec::new();
    let mut identity_fail = Vec::new();
    for (name, inst, g) in auction_families() {
        let r = verify::check_truthfulness(&inst, &g, &g).unwrap();
        let t = r.check("truthfulness").unwrap();
        let u = r.check("utility-identity").unwrap();
        truth_cases += t.cases;
        identity_cases += u.cases;
        if !t.passed() || t.truncated {
            truth_fail.push(format!("{name}: {}", t.summary()));
        }
        if !u.passed() || u.truncated {
            identity_fail.push(format!("{name}: {}", u.summary()));
        }
    }
    let control = verify::check_truthfulness_with(
        &instances::make_single_item(2).unwrap(),
        &TruthfulnessOptions::new(grid(3), grid(3)).with_rule(PaymentRule::FirstPrice),
    )
    .unwrap();
    let violations = control.checks[0].failures;
    if violations == 0 {
        truth_fail.push("first-price control produced no violation".into());
    }
    let truth = if truth_fail.is_empty() {
        Outcome::new(
            true,
            format!("{truth_cases} (profile, bidder, misreport) cases, 0 violations; first-price control: {violations} violations"),
        )
    } else {
        Outcome::new(false, truth_fail.join("; "))
    };
    let identity = if identity_fail.is_empty() {
        Outcome::new(true, format!("{identity_cases} (profile, bidder) cases"))
    } else {
        Outcome::new(false, identity_fail.join("; "))
    };
    (truth, identity)
}

fn approximation() -> Outcome {
    let mut cases = 0;
    for (name, inst, g) in auction_families() {
        let r = verify::check_ratio_grid(&inst, &g).unwrap();
        cases += r.checks[0].cases;
        if !r.passed() {
            return Outcome::new(false, format!("{name}: {}", r.checks[0].summary()));
        }
    }
    let beta = ratio(1, 2);
    let inst = instances::make_case_b_family(2, beta.clone()).unwrap();
    let mut unique = 0;
    for p in grid_profiles(&inst, &grid(3)).unwrap() {
        let bids: Vec<Rational> = (0..2)
            .map(|i| p.valuation(i).value(i, Bundle::singleton(0)).unwrap())
            .collect();
        let top = bids.iter().max().unwrap();
        if *top == int(0) || bids.iter().filter(|v| *v == top).count() > 1 {
            continue;
        }
        unique += 1;
        let r = verify::check_approximation(&inst, &p).unwrap();
        if r.ratio != Some(beta.clone()) {
            return Outcome::new(
                false,
                format!("case-b ratio {:?} at bids {bids:?}", r.ratio),
            );
        }
    }
    Outcome::new(
        true,
        format!("{cases} profiles with E[f] >= alpha*beta*OPT; case-b ratio exactly 1/2 on {unique} unique-max profiles"),
    )
}

fn decomposition() -> Outcome {
    let mut points_checked = 0;
    let mut calibrated = 0;
    for (name, inst, g) in auction_families() {
        let mut points = instances::probe_points(&inst).unwrap();
        let gamma = inst.spec().calibration();
        for p in grid_profiles(&inst, &g).unwrap() {
            let a = mechanism::allocate_traced(&inst, &p).unwrap();
            let welfare = rounding::expected_welfare(&a.distribution, &p).unwrap();
            if welfare != &gamma * &a.relaxed_value {
                return Outcome::new(
                    false,
                    format!(
                        "{name}: E[f] = {welfare} but gamma L(x*) = {}",
                        &gamma * &a.relaxed_value
                    ),
                );
            }
            calibrated += 1;
            points.push(a.point);
        }
        let c = verify::check_decomposition_identities(&inst, &points).unwrap();
        points_checked += c.cases;
        if !c.passed() {
            return Outcome::new(false, format!("{name}: {}", c.summary()));
        }
    }
    Outcome::new(true, format!(
        "{points_checked} probe points and optima, 100% satisfy the identities; E[f] = gamma L(x*) on {calibrated} optima"
    ))
}

fn obliviousness() -> Outcome {
    let mut families = auction_families();
    families.push((
        "no-money-lottery n=3",
        instances::make_no_money(3, NoMoneyKind::Lottery).unwrap(),
        grid(3),
    ));
    let mut pairs = 0;
    for (fi, (name, inst, g)) in families.iter().enumerate() {
        let points = instances::probe_points(inst).unwrap();
        let step = (points.len() / 5).max(1);
        let xs: Vec<&FractionalPoint> = points.iter().step_by(step).collect();
        let profiles = verify::random_profiles(inst, g, 20, 1000 + fi as u64).unwrap();
        for pair in profiles.chunks(2) {
            pairs += 1;
            for x in &xs {
                let r = verify::check_obliviousness(&ObliviousRounder, inst, x, pair).unwrap();
                let a = io::distribution_rows(&mechanism::round_point(inst, x).unwrap().1);
                let bytes_a = serde_json::to_string(&a).unwrap();
                let b = ObliviousRounder.round(inst, x, &pair[1]).unwrap();
                let bytes_b = serde_json::to_string(&io::distribution_rows(&b)).unwrap();
                if !r.passed() || bytes_a != bytes_b {
                    return Outcome::new(
                        false,
                        format!("{name}: rounding changed with the profile"),
                    );
                }
            }
        }
    }
    Outcome::new(
        true,
        format!("{pairs} seeded profile pairs over 7 families, outputs bit-identical"),
    )
}

fn without_money() -> Outcome {
    let mut detail = Vec::new();
    for n in [2usize, 3] {
        let lot = instances::make_no_money(n, NoMoneyKind::Lottery).unwrap();
        let r = verify::check_without_money_grid(&lot, &grid(3), &int(1)).unwrap();
        if !r.passed() {
            return Outcome::new(
                false,
                format!(
                    "lottery n={n}: {:?}",
                    r.checks.iter().map(|c| c.summary()).collect::<Vec<_>>()
                ),
            );
        }
        detail.push(format!("lottery n={n}: {} profiles", r.checks[0].cases));
    }
    let sp = instances::make_single_peaked(3, 7).unwrap();
    let r = verify::check_without_money_grid(&sp, &grid(6), &int(1)).unwrap();
    let median = r.check("median-no-improvement").unwrap();
    if !r.passed() {
        return Outcome::new(false, median.summary());
    }
    let peaks = midr_core::ValuationProfile::new(
        [1, 5, 3]
            .iter()
            .map(|&k| Valuation::SinglePeaked { peak: int(k) })
            .collect(),
    );
    let (_, d) = mechanism::run_without_money(&sp, &peaks).unwrap();
    if mechanism::outcome_position(d.support().next().unwrap()) != Some(3) {
        return Outcome::new(false, "median of peaks (1,5,3) is not 3");
    }
    detail.push(format!(
        "median over {{0..6}}^3: {} no-improvement cases",
        median.cases
    ));
    Outcome::new(true, detail.join("; "))
}

fn negative_control() -> Outcome {
    let inst = instances::make_single_item(2).unwrap();
    let honest = verify::check_nonoblivious_condition(&ObliviousRounder, &inst, &grid(3)).unwrap();
    let r = verify::check_nonoblivious_condition(&ReportReadingRounder, &inst, &grid(3)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = io::write_report(dir.path(), "nonoblivious-witness", &r, true, true).unwrap();
    let text = std::fs::read_to_string(&written[0]).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
    let witnesses = parsed["checks"][0]["witnesses"]
        .as_array()
        .map(|w| w.len())
        .unwrap_or(0);
    let ok = honest.passed() && !r.passed() && witnesses > 0;
    let first = r.checks[0]
        .witnesses
        .first()
        .map(|w| {
            format!(
                "; first: profile ({}), bidder {}, misreport {}",
                w.profile,
                w.bidder.map_or("-".into(), |b| b.to_string()),
                w.misreport.as_deref().unwrap_or("-")
            )
        })
        .unwrap_or_default();
    Outcome::new(
        ok,
        format!(
            "oblivious rounder passes; report-reading rounder: {} failures, {} witnesses written{first}",
            r.checks[0].failures, witnesses,
        ),
    )
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn main() -> ExitCode {
    println!("acceptance suite (tolerance 0: exact rationals throughout)");
    let mut all = true;
    let mut report =
        |id: usize, title: &str, o: &Outcome, elapsed: Duration, budget: Option<Duration>| {
            let within = budget.is_none_or(|b| elapsed <= b);
            let ok = o.passed && within;
            all &= ok;
            let budget_text = budget
                .map(|b| format!(", budget {}s", b.as_secs()))
                .unwrap_or_default();
            println!(
                "criterion {id} {title}: {} [{:.2}s{budget_text}] {}",
                if ok { "PASS" } else { "FAIL" },
                elapsed.as_secs_f64(),
                o.detail
            );
        };

    let (o, t) = timed(second_price);
    report(
        1,
        "second-price reduction",
        &o,
        t,
        Some(Duration::from_secs(10)),
    );
    let ((truth, identity), t) = timed(truthfulness_and_identity);
    report(
        2,
        "truthfulness in expectation",
        &truth,
        t,
        Some(Duration::from_secs(300)),
    );
    report(3, "utility identity", &identity, t, None);
    let (o, t) = timed(approximation);
    report(4, "approximation ratio", &o, t, None);
    let (o, t) = timed(decomposition);
    report(5, "decomposition identities", &o, t, None);
    let (o, t) = timed(obliviousness);
    report(6, "obliviousness", &o, t, None);
    let (o, t) = timed(without_money);
    report(7, "without-money properties", &o, t, None);
    let (o, t) = timed(negative_control);
    report(8, "negative-control coverage", &o, t, None);

    if all {
        println!("acceptance: all 8 criteria PASS");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: FAIL");
        ExitCode::FAILURE
    }
}
