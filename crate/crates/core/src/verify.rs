//! Exhaustive exact verification: truthfulness in expectation, the utility
//! identity, approximation ratios, obliviousness and the properties of the
//! mechanisms without money.

use std::collections::HashMap;

use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::instances::{self, grid_profiles};
use crate::lp::{self, FractionalPoint};
use crate::mechanism::{self, PaymentRule};
use crate::model::{
    enumerate_feasible, social_welfare, Allocation, Bundle, Family, FamilyTag, Instance, Valuation,
    ValuationProfile,
};
use crate::rational::{self, Rational};
use crate::relaxation;
use crate::rounding::{self, AllocationDistribution};

/// Default cap on pipeline runs for one truthfulness check.
pub const DEFAULT_BUDGET: usize = 1_000_000;

/// Failing rows kept per check; the failure count is always exact.
pub const MAX_WITNESSES: usize = 1_000;

/// What a check quantified over, so a PASS is never read as more than it is.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Domain {
    pub family: String,
    pub n: usize,
    pub m: usize,
    pub value_grid: Vec<String>,
    pub misreport_grid: Vec<String>,
    pub bundle_misreports: bool,
}

impl Domain {
    pub fn new(
        instance: &Instance,
        value_grid: &[Rational],
        misreport_grid: &[Rational],
        bundle_misreports: bool,
    ) -> Self {
        Domain {
            family: instance.tag().to_string(),
            n: instance.num_bidders(),
            m: instance.num_items(),
            value_grid: value_grid.iter().map(rational::format).collect(),
            misreport_grid: misreport_grid.iter().map(rational::format).collect(),
            bundle_misreports,
        }
    }
}

/// One failing case. `lhs` must be at most `rhs` (or equal to it, for
/// identities) for the case to pass.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    pub profile_id: usize,
    pub profile: String,
    pub bidder: Option<usize>,
    pub misreport: Option<String>,
    #[serde(with = "crate::rational::serde_ratio")]
    pub lhs: Rational,
    #[serde(with = "crate::rational::serde_ratio")]
    pub rhs: Rational,
}

impl Witness {
    /// `lhs - rhs`: the exact size of the violation.
    pub fn gap(&self) -> Rational {
        &self.lhs - &self.rhs
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub cases: usize,
    pub failures: usize,
    /// Set when the budget cut the enumeration short.
    pub truncated: bool,
    pub witnesses: Vec<Witness>,
}

impl CheckResult {
    pub fn new(name: &str) -> Self {
        CheckResult {
            name: name.to_string(),
            cases: 0,
            failures: 0,
            truncated: false,
            witnesses: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    fn record(&mut self, ok: bool, witness: impl FnOnce() -> Witness) {
        self.cases += 1;
        if !ok {
            self.failures += 1;
            if self.witnesses.len() < MAX_WITNESSES {
                self.witnesses.push(witness());
            }
        }
    }

    fn merge(&mut self, other: CheckResult) {
        self.cases += other.cases;
        self.failures += other.failures;
        self.truncated |= other.truncated;
        let room = MAX_WITNESSES.saturating_sub(self.witnesses.len());
        self.witnesses
            .extend(other.witnesses.into_iter().take(room));
    }

    /// `truthfulness: PASS (N cases)`.
    pub fn summary(&self) -> String {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        let mut s = format!("{}: {} ({} cases", self.name, verdict, self.cases);
        if self.failures > 0 {
            s.push_str(&format!(", {} failures", self.failures));
        }
        if self.truncated {
            s.push_str(", truncated by budget");
        }
        s.push(')');
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerificationReport {
    pub domain: Domain,
    pub checks: Vec<CheckResult>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckResult::passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Compact text for a profile, used in witnesses.
pub fn describe_profile(profile: &ValuationProfile) -> String {
    profile
        .valuations()
        .iter()
        .map(describe_valuation)
        .collect::<Vec<_>>()
        .join("; ")
}

pub fn describe_valuation(v: &Valuation) -> String {
    match v {
        Valuation::Table(t) => {
            let rows: Vec<String> = t
                .iter()
                .map(|(b, x)| format!("{b}:{}", rational::format(x)))
                .collect();
            format!("table[{}]", rows.join(" "))
        }
        Valuation::SingleMinded { bundle, value } => {
            format!("{bundle}@{}", rational::format(value))
        }
        Valuation::Additive(vs) if vs.len() == 1 => rational::format(&vs[0]),
        Valuation::Additive(vs) => format!(
            "[{}]",
            vs.iter()
                .map(rational::format)
                .collect::<Vec<_>>()
                .join(",")
        ),
        Valuation::SinglePeaked { peak } => format!("peak {}", rational::format(peak)),
    }
}

/// `argmax_{s in S} f(s)`, first allocation in enumeration order on ties.
pub fn brute_force_opt(
    instance: &Instance,
    profile: &ValuationProfile,
) -> Result<(Allocation, Rational)> {
    let mut best: Option<(Allocation, Rational)> = None;
    for s in enumerate_feasible(instance)? {
        let w = social_welfare(profile, &s)?;
        if best.as_ref().is_none_or(|(_, b)| w > *b) {
            best = Some((s, w));
        }
    }
    best.ok_or_else(|| Error::input("empty feasible set"))
}

/// Options for [`check_truthfulness_with`].
#[derive(Clone, Debug)]
pub struct TruthfulnessOptions {
    pub value_grid: Vec<Rational>,
    pub misreport_grid: Vec<Rational>,
    /// Also let single-minded bidders report any nonempty bundle (only when `m <= 3`).
    pub bundle_misreports: bool,
    pub budget: usize,
    pub rule: PaymentRule,
}

impl TruthfulnessOptions {
    pub fn new(value_grid: Vec<Rational>, misreport_grid: Vec<Rational>) -> Self {
        TruthfulnessOptions {
            value_grid,
            misreport_grid,
            bundle_misreports: true,
            budget: DEFAULT_BUDGET,
            rule: PaymentRule::ExpectedVcg,
        }
    }

    pub fn with_rule(mut self, rule: PaymentRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }
}

/// Lottery and payments for one reported profile.
#[derive(Clone, Debug)]
struct Evaluated {
    distribution: AllocationDistribution,
    payments: Vec<Rational>,
}

fn evaluate(
    instance: &Instance,
    profile: &ValuationProfile,
    rule: PaymentRule,
) -> Result<Evaluated> {
    let (_, distribution) = mechanism::allocate(instance, profile)?;
    let payments = mechanism::payments_with_rule(instance, profile, &distribution, rule)?;
    Ok(Evaluated {
        distribution,
        payments,
    })
}

/// `E[v_k(X)] - p_k` under the true valuation of bidder `k`.
fn utility(truth: &Valuation, bidder: usize, ev: &Evaluated) -> Result<Rational> {
    let mut acc = -ev.payments[bidder].clone();
    for (a, p) in ev.distribution.iter() {
        let v = truth.value(bidder, a.bundle(bidder))?;
        if !v.is_zero() {
            acc += p * v;
        }
    }
    Ok(acc)
}

/// A misreport: the reported valuation and, for bundle misreports, the
/// instance rebuilt around the reported bundle.
fn misreports(
    instance: &Instance,
    bidder: usize,
    truth: &Valuation,
    grid: &[Rational],
    bundles: bool,
) -> Result<Vec<(Valuation, Option<Instance>)>> {
    let mut out = Vec::new();
    match (instance.family(), truth) {
        (Family::SingleMindedCa { desires }, Valuation::SingleMinded { .. }) => {
            let own = desires[bidder];
            for v in grid {
                out.push((
                    Valuation::SingleMinded {
                        bundle: own,
                        value: v.clone(),
                    },
                    None,
                ));
            }
            if bundles && instance.num_items() <= 3 {
                for t in Bundle::nonempty_subsets(instance.num_items()).filter(|t| *t != own) {
                    let rebuilt = instance.with_desire(bidder, t)?;
                    for v in grid {
                        out.push((
                            Valuation::SingleMinded {
                                bundle: t,
                                value: v.clone(),
                            },
                            Some(rebuilt.clone()),
                        ));
                    }
                }
            }
        }
        (_, Valuation::Additive(vs)) => {
            let len = vs.len();
            let mut idx = vec![0usize; len];
            if grid.is_empty() {
                return Ok(out);
            }
            'odometer: loop {
                out.push((
                    Valuation::Additive(idx.iter().map(|&k| grid[k].clone()).collect()),
                    None,
                ));
                let mut pos = len;
                loop {
                    if pos == 0 {
                        break 'odometer;
                    }
                    pos -= 1;
                    idx[pos] += 1;
                    if idx[pos] < grid.len() {
                        break;
                    }
                    idx[pos] = 0;
                }
            }
        }
        _ => return Err(Error::UnsupportedFamily(instance.tag().to_string())),
    }
    Ok(out)
}

/// Truthfulness in expectation, E[u_k(truth)] >= E[u_k(lie)], over value and
/// misreport grids with the expected VCG payments.
pub fn check_truthfulness(
    instance: &Instance,
    value_grid: &[Rational],
    misreport_grid: &[Rational],
) -> Result<VerificationReport> {
    check_truthfulness_with(
        instance,
        &TruthfulnessOptions::new(value_grid.to_vec(), misreport_grid.to_vec()),
    )
}

/// For every grid profile `v`, bidder `k` and misreport `v'_k`:
/// `E[v_k(X(v))] - p_k(v) >= E[v_k(X(v'_k, v_-k))] - p_k(v'_k, v_-k)`,
/// exactly. Also records the utility identity
/// `E[u_k] = gamma * (L(x*) - max_P L^{-k})` for every truthful profile.
///
/// Profiles are processed in grid order in parallel and merged in order.
/// When the run count would exceed the budget only a prefix of the grid is
/// checked and the result says so.
pub fn check_truthfulness_with(
    instance: &Instance,
    opts: &TruthfulnessOptions,
) -> Result<VerificationReport> {
    if !instance.tag().is_auction() {
        return Err(Error::UnsupportedFamily(instance.tag().to_string()));
    }
    if opts.value_grid.is_empty() || opts.misreport_grid.is_empty() {
        return Err(Error::input("truthfulness grids must be nonempty"));
    }
    let profiles = grid_profiles(instance, &opts.value_grid)?;
    let n = instance.num_bidders();
    let bundles = opts.bundle_misreports
        && instance.tag() == FamilyTag::SingleMindedCa
        && instance.num_items() <= 3;
    let sample = profiles.first().ok_or_else(|| Error::input("empty grid"))?;
    let per_bidder = misreports(
        instance,
        0,
        sample.valuation(0),
        &opts.misreport_grid,
        bundles,
    )?
    .len();
    let runs_per_profile = 1 + n * per_bidder;
    let affordable = (opts.budget / runs_per_profile.max(1)).max(1);
    let truncated = affordable < profiles.len();
    let profiles = &profiles[..affordable.min(profiles.len())];

    let truthful: Vec<Evaluated> = profiles
        .par_iter()
        .map(|p| evaluate(instance, p, opts.rule))
        .collect::<Result<_>>()?;
    let memo: HashMap<&ValuationProfile, usize> =
        profiles.iter().enumerate().map(|(i, p)| (p, i)).collect();

    let parts: Vec<(CheckResult, CheckResult)> = profiles
        .par_iter()
        .enumerate()
        .map(|(id, profile)| -> Result<(CheckResult, CheckResult)> {
            let mut truth_check = CheckResult::new("truthfulness");
            let mut identity = CheckResult::new("utility-identity");
            let here = &truthful[id];
            let (objective, poly) = relaxation::build_relaxation(instance, profile)?;
            let (_, relaxed) = relaxation::maximize(&objective, &poly)?;
            let gamma = instance.spec().calibration();
            let optima = mechanism::residual_optima(instance, &objective, &poly)?;
            for (k, opt_k) in optima.iter().enumerate() {
                let truth = profile.valuation(k);
                let honest = utility(truth, k, here)?;
                let predicted = &gamma * &relaxed - opt_k;
                identity.record(
                    opts.rule == PaymentRule::FirstPrice || honest == predicted,
                    || Witness {
                        profile_id: id,
                        profile: describe_profile(profile),
                        bidder: Some(k),
                        misreport: None,
                        lhs: honest.clone(),
                        rhs: predicted.clone(),
                    },
                );
                for (report, rebuilt) in
                    misreports(instance, k, truth, &opts.misreport_grid, bundles)?
                {
                    let reported = profile.with_report(k, report.clone());
                    let lied = match (&rebuilt, memo.get(&reported)) {
                        (None, Some(&j)) => utility(truth, k, &truthful[j])?,
                        (None, None) => {
                            utility(truth, k, &evaluate(instance, &reported, opts.rule)?)?
                        }
                        (Some(inst), _) => {
                            utility(truth, k, &evaluate(inst, &reported, opts.rule)?)?
                        }
                    };
                    truth_check.record(lied <= honest, || Witness {
                        profile_id: id,
                        profile: describe_profile(profile),
                        bidder: Some(k),
                        misreport: Some(describe_valuation(&report)),
                        lhs: lied.clone(),
                        rhs: honest.clone(),
                    });
                }
            }
            Ok((truth_check, identity))
        })
        .collect::<Result<_>>()?;

    let mut truth_check = CheckResult::new("truthfulness");
    let mut identity = CheckResult::new("utility-identity");
    truth_check.truncated = truncated;
    identity.truncated = truncated;
    for (t, u) in parts {
        truth_check.merge(t);
        identity.merge(u);
    }
    let mut checks = vec![truth_check];
    if opts.rule == PaymentRule::ExpectedVcg {
        checks.push(identity);
    }
    Ok(VerificationReport {
        domain: Domain::new(instance, &opts.value_grid, &opts.misreport_grid, bundles),
        checks,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ApproximationCheck {
    pub expected_welfare: Rational,
    pub opt: Rational,
    /// `E[f(X')] / OPT`, `None` when `OPT = 0`.
    pub ratio: Option<Rational>,
    /// `alpha * beta`
    pub guarantee: Rational,
    pub passed: bool,
}

/// `E[f(X')] >= alpha * beta * OPT` with `OPT` from [`brute_force_opt`].
pub fn check_approximation(
    instance: &Instance,
    profile: &ValuationProfile,
) -> Result<ApproximationCheck> {
    let (_, dist) = mechanism::allocate(instance, profile)?;
    let expected = rounding::expected_welfare(&dist, profile)?;
    let (_, opt) = brute_force_opt(instance, profile)?;
    let guarantee = instance.spec().guarantee();
    let ratio = if opt.is_zero() {
        None
    } else {
        Some(&expected / &opt)
    };
    let passed = expected >= &guarantee * &opt;
    Ok(ApproximationCheck {
        expected_welfare: expected,
        opt,
        ratio,
        guarantee,
        passed,
    })
}

/// [`check_approximation`] over every grid profile.
pub fn check_ratio_grid(instance: &Instance, grid: &[Rational]) -> Result<VerificationReport> {
    let profiles = grid_profiles(instance, grid)?;
    let results: Vec<ApproximationCheck> = profiles
        .par_iter()
        .map(|p| check_approximation(instance, p))
        .collect::<Result<_>>()?;
    let mut check = CheckResult::new("approximation");
    for (id, (p, r)) in profiles.iter().zip(results).enumerate() {
        check.record(r.passed, || Witness {
            profile_id: id,
            profile: describe_profile(p),
            bidder: None,
            misreport: None,
            lhs: &r.guarantee * &r.opt,
            rhs: r.expected_welfare.clone(),
        });
    }
    Ok(VerificationReport {
        domain: Domain::new(instance, grid, &[], false),
        checks: vec![check],
    })
}

/// Smallest `OPT / L(x*)` over the given profiles: an empirical lower bound
/// on the integrality-gap reciprocal. `None` when every `L(x*)` is 0.
pub fn estimate_alpha(
    instance: &Instance,
    profiles: &[ValuationProfile],
) -> Result<Option<Rational>> {
    let mut best: Option<Rational> = None;
    for p in profiles {
        let (objective, poly) = relaxation::build_relaxation(instance, p)?;
        let (_, relaxed) = relaxation::maximize(&objective, &poly)?;
        if relaxed.is_zero() {
            continue;
        }
        let (_, opt) = brute_force_opt(instance, p)?;
        let r = opt / relaxed;
        if best.as_ref().is_none_or(|b| r < *b) {
            best = Some(r);
        }
    }
    Ok(best)
}

/// A rounding of fractional points that may look at the reports.
pub trait Rounder: Sync {
    fn name(&self) -> &str;
    fn round(
        &self,
        instance: &Instance,
        x: &FractionalPoint,
        profile: &ValuationProfile,
    ) -> Result<AllocationDistribution>;
}

/// The shipped pipeline `r' o r`; the profile is ignored.
pub struct ObliviousRounder;

impl Rounder for ObliviousRounder {
    fn name(&self) -> &str {
        "oblivious"
    }

    fn round(
        &self,
        instance: &Instance,
        x: &FractionalPoint,
        _profile: &ValuationProfile,
    ) -> Result<AllocationDistribution> {
        Ok(mechanism::round_point(instance, x)?.1)
    }
}

/// Negative control for single-item instances: rounds obliviously, then
/// hands every won item to the lowest reported bid (first index on ties).
pub struct ReportReadingRounder;

impl Rounder for ReportReadingRounder {
    fn name(&self) -> &str {
        "report-reading"
    }

    fn round(
        &self,
        instance: &Instance,
        x: &FractionalPoint,
        profile: &ValuationProfile,
    ) -> Result<AllocationDistribution> {
        if instance.tag() != FamilyTag::SingleItem {
            return Err(Error::UnsupportedFamily(instance.tag().to_string()));
        }
        let item = Bundle::singleton(0);
        let bids = (0..profile.num_bidders())
            .map(|i| profile.valuation(i).value(i, item))
            .collect::<Result<Vec<_>>>()?;
        let lowest = (0..bids.len()).fold(0, |lo, i| if bids[i] < bids[lo] { i } else { lo });
        let base = mechanism::round_point(instance, x)?.1;
        rounding::AllocationDistribution::from_entries(base.iter().map(|(a, p)| {
            let moved = if a.is_empty() {
                a.clone()
            } else {
                Allocation::single(a.num_bidders(), lowest, item)
            };
            (moved, p.clone())
        }))
    }
}

/// For a fixed point `x`, the rounding output must not change across profiles.
pub fn check_obliviousness(
    rounder: &dyn Rounder,
    instance: &Instance,
    x: &FractionalPoint,
    profiles: &[ValuationProfile],
) -> Result<VerificationReport> {
    if profiles.len() < 2 {
        return Err(Error::input("obliviousness needs at least two profiles"));
    }
    let reference = rounder.round(instance, x, &profiles[0])?;
    let mut check = CheckResult::new("obliviousness");
    for (id, p) in profiles.iter().enumerate().skip(1) {
        let d = rounder.round(instance, x, p)?;
        check.record(d == reference, || Witness {
            profile_id: id,
            profile: describe_profile(p),
            bidder: None,
            misreport: None,
            lhs: distance(&d, &reference),
            rhs: Rational::zero(),
        });
    }
    Ok(VerificationReport {
        domain: Domain::new(instance, &[], &[], false),
        checks: vec![check],
    })
}

/// Total variation distance between two lotteries.
pub fn distance(a: &AllocationDistribution, b: &AllocationDistribution) -> Rational {
    let mut keys: Vec<&Allocation> = a.support().chain(b.support()).collect();
    keys.sort();
    keys.dedup();
    let total: Rational = keys
        .into_iter()
        .map(|s| rational::abs_diff(&a.probability(s), &b.probability(s)))
        .sum();
    total / Rational::from_integer(2.into())
}

/// `E_v[f(r(x, v'_i, v_-i))] <= E_v[f(r(x, v))]` for every grid profile `v`,
/// bidder `i` and grid misreport, with `x = x*(v)` and welfare measured
/// under the true `v`.
pub fn check_nonoblivious_condition(
    rounder: &dyn Rounder,
    instance: &Instance,
    value_grid: &[Rational],
) -> Result<VerificationReport> {
    let profiles = grid_profiles(instance, value_grid)?;
    let n = instance.num_bidders();
    let parts: Vec<CheckResult> = profiles
        .par_iter()
        .enumerate()
        .map(|(id, profile)| -> Result<CheckResult> {
            let mut check = CheckResult::new("nonoblivious-condition");
            let (x, _) = mechanism::allocate(instance, profile)?;
            let honest =
                rounding::expected_welfare(&rounder.round(instance, &x, profile)?, profile)?;
            for k in 0..n {
                for (report, rebuilt) in
                    misreports(instance, k, profile.valuation(k), value_grid, false)?
                {
                    debug_assert!(rebuilt.is_none());
                    let reported = profile.with_report(k, report.clone());
                    let lied = rounding::expected_welfare(
                        &rounder.round(instance, &x, &reported)?,
                        profile,
                    )?;
                    check.record(lied <= honest, || Witness {
                        profile_id: id,
                        profile: describe_profile(profile),
                        bidder: Some(k),
                        misreport: Some(describe_valuation(&report)),
                        lhs: lied.clone(),
                        rhs: honest.clone(),
                    });
                }
            }
            Ok(check)
        })
        .collect::<Result<_>>()?;
    let mut check = CheckResult::new("nonoblivious-condition");
    for p in parts {
        check.merge(p);
    }
    Ok(VerificationReport {
        domain: Domain::new(instance, value_grid, value_grid, false),
        checks: vec![check],
    })
}

/// Feasibility (`Pr[X in S] = 1`) and `E[v_i(X)] = beta * v_i(x)` for one profile.
pub fn check_without_money(
    instance: &Instance,
    profile: &ValuationProfile,
    beta: &Rational,
) -> Result<VerificationReport> {
    let (x, dist) = mechanism::run_without_money(instance, profile)?;
    let feasible = enumerate_feasible(instance)?;
    let mut feas = CheckResult::new("feasibility");
    let inside: Rational = dist
        .iter()
        .filter(|(a, _)| feasible.contains(a))
        .map(|(_, p)| p)
        .sum();
    feas.record(inside.is_one(), || Witness {
        profile_id: 0,
        profile: describe_profile(profile),
        bidder: None,
        misreport: None,
        lhs: inside.clone(),
        rhs: Rational::one(),
    });
    let mut frac = CheckResult::new("fractional-value");
    let expected = rounding::expected_value_per_bidder(&dist, profile)?;
    for (i, e) in expected.iter().enumerate() {
        let target = beta * mechanism::fractional_value(instance, profile, i, &x)?;
        frac.record(*e == target, || Witness {
            profile_id: 0,
            profile: describe_profile(profile),
            bidder: Some(i),
            misreport: None,
            lhs: e.clone(),
            rhs: target.clone(),
        });
    }
    Ok(VerificationReport {
        domain: Domain::new(instance, &[], &[], false),
        checks: vec![feas, frac],
    })
}

/// Without-money properties over every grid profile, plus, for the
/// single-peaked family, the no-improvement check of the median rule:
/// `|median(v'_i, v_-i) - peak_i| >= |median(v) - peak_i|`.
pub fn check_without_money_grid(
    instance: &Instance,
    grid: &[Rational],
    beta: &Rational,
) -> Result<VerificationReport> {
    let profiles = grid_profiles(instance, grid)?;
    let mut feas = CheckResult::new("feasibility");
    let mut frac = CheckResult::new("fractional-value");
    for (id, p) in profiles.iter().enumerate() {
        let r = check_without_money(instance, p, beta)?;
        for (dst, mut src) in [
            (&mut feas, r.checks[0].clone()),
            (&mut frac, r.checks[1].clone()),
        ] {
            for w in &mut src.witnesses {
                w.profile_id = id;
            }
            dst.merge(src);
        }
    }
    let mut checks = vec![feas, frac];
    if instance.tag() == FamilyTag::SinglePeaked {
        checks.push(check_median_no_improvement(instance, grid)?);
    }
    Ok(VerificationReport {
        domain: Domain::new(instance, grid, grid, false),
        checks,
    })
}

pub fn check_median_no_improvement(
    instance: &Instance,
    peak_grid: &[Rational],
) -> Result<CheckResult> {
    let profiles = grid_profiles(instance, peak_grid)?;
    let position = |p: &ValuationProfile| -> Result<Rational> {
        let (_, d) = mechanism::run_without_money(instance, p)?;
        let j = d
            .support()
            .next()
            .and_then(mechanism::outcome_position)
            .ok_or_else(|| Error::Distribution("median rule returned no position".into()))?;
        Ok(rational::int(j as i64))
    };
    let mut check = CheckResult::new("median-no-improvement");
    for (id, p) in profiles.iter().enumerate() {
        let chosen = position(p)?;
        for i in 0..p.num_bidders() {
            let Valuation::SinglePeaked { peak } = p.valuation(i) else {
                return Err(Error::input("single-peaked profile expected"));
            };
            let honest = rational::abs_diff(&chosen, peak);
            for lie in peak_grid {
                let report = Valuation::SinglePeaked { peak: lie.clone() };
                let moved = rational::abs_diff(&position(&p.with_report(i, report.clone()))?, peak);
                check.record(moved >= honest, || Witness {
                    profile_id: id,
                    profile: describe_profile(p),
                    bidder: Some(i),
                    misreport: Some(describe_valuation(&report)),
                    lhs: honest.clone(),
                    rhs: moved.clone(),
                });
            }
        }
    }
    Ok(check)
}

/// Decomposition identities at the given points: `sum lambda chi = scale x`,
/// weights summing to 1, support at most `dim + 1`.
pub fn check_decomposition_identities(
    instance: &Instance,
    points: &[FractionalPoint],
) -> Result<CheckResult> {
    let poly = relaxation::polytope_for(instance)?;
    let scale = &instance.spec().point_scale;
    let mut check = CheckResult::new("decomposition");
    for (id, x) in points.iter().enumerate() {
        if !lp::contains(&poly, x)? {
            return Err(Error::input(format!(
                "point {id} lies outside the polytope"
            )));
        }
        let d = rounding::convex_decompose(x, scale, instance)?;
        let combo = d.combination(instance);
        let target: Vec<Rational> = x.coords().iter().map(|c| c * scale).collect();
        let total: Rational = d.terms().iter().map(|(w, _)| w).sum();
        let ok = combo == target && total.is_one() && d.len() <= instance.num_vars() + 1;
        check.record(ok, || Witness {
            profile_id: id,
            profile: format!(
                "x = ({})",
                x.coords()
                    .iter()
                    .map(rational::format)
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
            bidder: None,
            misreport: None,
            lhs: rational::int(d.len() as i64),
            rhs: rational::int(instance.num_vars() as i64 + 1),
        });
    }
    Ok(check)
}

/// `count` profiles with value slots drawn uniformly from `grid`, seeded.
pub fn random_profiles(
    instance: &Instance,
    grid: &[Rational],
    count: usize,
    seed: u64,
) -> Result<Vec<ValuationProfile>> {
    if grid.is_empty() {
        return Err(Error::input("empty grid"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slots = instances::value_slot_count(instance);
    (0..count)
        .map(|_| {
            let v: Vec<Rational> = (0..slots)
                .map(|_| grid[rng.random_range(0..grid.len())].clone())
                .collect();
            instances::profile_from_slots(instance, &v)
        })
        .collect()
}
