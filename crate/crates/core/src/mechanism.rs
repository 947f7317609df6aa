//! The maximal-in-distributional-range allocation rule, expected VCG
//! payments, the distributional range, and the pipelines without money.

use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::instances::RoundingCase;
use crate::lp::{self, FractionalPoint, Polytope};
use crate::model::{Allocation, Bundle, Family, FamilyTag, Instance, Valuation, ValuationProfile};
use crate::rational::{self, Rational};
use crate::relaxation::{self, RelaxedObjective};
use crate::rounding::{self, AllocationDistribution, ConvexDecomposition};

/// How payments are computed from a reported profile.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum PaymentRule {
    /// `p_k = gamma * max_P L^{-k} - E[sum_{i != k} v_i(X')]`.
    #[default]
    ExpectedVcg,
    /// Every bidder pays her own expected reported value. Not truthful; kept
    /// as a negative control for the verifier.
    FirstPrice,
}

impl PaymentRule {
    pub fn as_str(self) -> &'static str {
        match self {
            PaymentRule::ExpectedVcg => "expected-vcg",
            PaymentRule::FirstPrice => "first-price",
        }
    }
}

impl std::str::FromStr for PaymentRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "expected-vcg" | "vcg" => Ok(PaymentRule::ExpectedVcg),
            "first-price" => Ok(PaymentRule::FirstPrice),
            other => Err(Error::Parse(format!("unknown payment rule `{other}`"))),
        }
    }
}

/// Every intermediate object of one allocation run.
#[derive(Clone, Debug)]
pub struct Allocated {
    pub objective: RelaxedObjective,
    pub polytope: Polytope,
    pub point: FractionalPoint,
    pub relaxed_value: Rational,
    pub decomposition: ConvexDecomposition,
    pub distribution: AllocationDistribution,
}

/// `r'(r(x))`. Takes no valuations.
pub fn round_point(
    instance: &Instance,
    x: &FractionalPoint,
) -> Result<(ConvexDecomposition, AllocationDistribution)> {
    let spec = instance.spec();
    let decomposition = rounding::convex_decompose(x, &spec.point_scale, instance)?;
    let before = rounding::exact_distribution(&decomposition);
    let keep = spec.keep_probabilities(instance.variables(), instance.num_bidders(), x);
    let after = rounding::adjust(&before, spec.case, &keep)?;
    Ok((decomposition, after))
}

pub fn allocate_traced(instance: &Instance, profile: &ValuationProfile) -> Result<Allocated> {
    let (objective, polytope) = relaxation::build_relaxation(instance, profile)?;
    let (point, relaxed_value) = relaxation::maximize(&objective, &polytope)?;
    let (decomposition, distribution) = round_point(instance, &point)?;
    Ok(Allocated {
        objective,
        polytope,
        point,
        relaxed_value,
        decomposition,
        distribution,
    })
}

/// `x* = argmax_P L` and the lottery `r'(r(x*))`.
pub fn allocate(
    instance: &Instance,
    profile: &ValuationProfile,
) -> Result<(FractionalPoint, AllocationDistribution)> {
    let a = allocate_traced(instance, profile)?;
    Ok((a.point, a.distribution))
}

/// `gamma * max_P L^{-k}` for every bidder.
pub fn residual_optima(
    instance: &Instance,
    objective: &RelaxedObjective,
    poly: &Polytope,
) -> Result<Vec<Rational>> {
    let gamma = instance.spec().calibration();
    (0..instance.num_bidders())
        .map(|k| {
            let residual = relaxation::residual_objective(objective, k)?;
            Ok(&gamma * relaxation::maximize(&residual, poly)?.1)
        })
        .collect()
}

/// Expected VCG payments for `dist`, the lottery chosen at `profile`.
pub fn payments(
    instance: &Instance,
    profile: &ValuationProfile,
    dist: &AllocationDistribution,
) -> Result<Vec<Rational>> {
    payments_with_rule(instance, profile, dist, PaymentRule::ExpectedVcg)
}

pub fn payments_with_rule(
    instance: &Instance,
    profile: &ValuationProfile,
    dist: &AllocationDistribution,
    rule: PaymentRule,
) -> Result<Vec<Rational>> {
    let values = rounding::expected_value_per_bidder(dist, profile)?;
    match rule {
        PaymentRule::FirstPrice => Ok(values),
        PaymentRule::ExpectedVcg => {
            let (objective, poly) = relaxation::build_relaxation(instance, profile)?;
            let total: Rational = values.iter().sum();
            let optima = residual_optima(instance, &objective, &poly)?;
            Ok(optima
                .into_iter()
                .zip(&values)
                .map(|(c, v)| c - (&total - v))
                .collect())
        }
    }
}

/// The lottery chosen when bidder `k` reports the zero valuation.
pub fn excluded_distribution(
    instance: &Instance,
    profile: &ValuationProfile,
    bidder: usize,
) -> Result<AllocationDistribution> {
    if bidder >= profile.num_bidders() {
        return Err(Error::input(format!("bidder {bidder} out of range")));
    }
    let zeroed = profile.with_report(bidder, profile.valuation(bidder).zeroed());
    Ok(allocate(instance, &zeroed)?.1)
}

/// `sum_{i != k} v_i` of one allocation.
fn others_value(profile: &ValuationProfile, bidder: usize, alloc: &Allocation) -> Result<Rational> {
    let mut acc = Rational::zero();
    for i in (0..profile.num_bidders()).filter(|&i| i != bidder) {
        acc += crate::model::value_of(profile, i, alloc)?;
    }
    Ok(acc)
}

/// Expectation of the realized payment `sum_{i!=k} v_i(T) - sum_{i!=k} v_i(S)`
/// with `T` drawn from the pipeline without bidder `k` and `S` from `dist`.
pub fn expected_realized_payments(
    instance: &Instance,
    profile: &ValuationProfile,
    dist: &AllocationDistribution,
) -> Result<Vec<Rational>> {
    let values = rounding::expected_value_per_bidder(dist, profile)?;
    let total: Rational = values.iter().sum();
    (0..profile.num_bidders())
        .map(|k| {
            let excluded = excluded_distribution(instance, profile, k)?;
            let mut t = Rational::zero();
            for (a, p) in excluded.iter() {
                t += p * others_value(profile, k, a)?;
            }
            Ok(t - (&total - &values[k]))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct MechanismOutcome {
    pub point: FractionalPoint,
    pub distribution: AllocationDistribution,
    pub realized: Allocation,
    pub expected_payments: Vec<Rational>,
    /// `L(x*)`
    pub relaxed_value: Rational,
    /// `gamma` with `E[f(X')] = gamma * L(x*)`.
    pub calibration: Rational,
    pub seed: u64,
    /// One draw of `sum_{i!=k} v_i(T) - sum_{i!=k} v_i(S)` per bidder.
    pub realized_payments: Vec<Rational>,
    pub payment_rule: PaymentRule,
}

pub fn run(instance: &Instance, profile: &ValuationProfile, seed: u64) -> Result<MechanismOutcome> {
    run_with_rule(instance, profile, seed, PaymentRule::ExpectedVcg)
}

/// Allocation, payments and a seeded draw.
///
/// The realized allocation uses `seed`; bidder `k`'s excluded pipeline is
/// sampled with `seed + k + 1`.
pub fn run_with_rule(
    instance: &Instance,
    profile: &ValuationProfile,
    seed: u64,
    rule: PaymentRule,
) -> Result<MechanismOutcome> {
    let allocated = allocate_traced(instance, profile)?;
    let expected_payments = payments_with_rule(instance, profile, &allocated.distribution, rule)?;
    let realized = rounding::sample(&allocated.distribution, seed);
    let mut realized_payments = Vec::with_capacity(profile.num_bidders());
    for k in 0..profile.num_bidders() {
        let excluded = excluded_distribution(instance, profile, k)?;
        let t = rounding::sample(&excluded, seed.wrapping_add(k as u64 + 1));
        realized_payments
            .push(others_value(profile, k, &t)? - others_value(profile, k, &realized)?);
    }
    Ok(MechanismOutcome {
        point: allocated.point,
        distribution: allocated.distribution,
        realized,
        expected_payments,
        relaxed_value: allocated.relaxed_value,
        calibration: instance.spec().calibration(),
        seed,
        realized_payments,
        payment_rule: rule,
    })
}

/// The set `{ r'(r(x)) : x in P }`, described by the instance alone.
#[derive(Clone, Debug)]
pub struct RangeDescriptor {
    instance: Instance,
    polytope: Polytope,
}

pub fn distributional_range(instance: &Instance) -> Result<RangeDescriptor> {
    Ok(RangeDescriptor {
        instance: instance.clone(),
        polytope: relaxation::polytope_for(instance)?,
    })
}

impl RangeDescriptor {
    pub fn tag(&self) -> FamilyTag {
        self.instance.tag()
    }

    pub fn polytope(&self) -> &Polytope {
        &self.polytope
    }

    /// Short text naming the generator: family, alpha, case and keep rule.
    pub fn generator(&self) -> String {
        let spec = self.instance.spec();
        format!(
            "{} alpha={} case={} scale={} keep={:?}",
            self.instance.tag(),
            rational::format(&spec.alpha),
            spec.case.as_str(),
            rational::format(&spec.point_scale),
            spec.keep_rule
        )
    }

    /// `r'(r(x))` for a point of `P`.
    pub fn image(&self, x: &FractionalPoint) -> Result<AllocationDistribution> {
        if !lp::contains(&self.polytope, x)? {
            return Err(Error::input("point lies outside the polytope"));
        }
        Ok(round_point(&self.instance, x)?.1)
    }

    /// The unique point whose image could be `dist`.
    ///
    /// Every variable's marginal under `r'(r(x))` is a strictly increasing
    /// function of `x_v` alone (`scale * x_v`, `scale * beta * x_v`, or
    /// `curve(x_v)`), so inverting the marginals gives the only candidate.
    pub fn preimage(&self, dist: &AllocationDistribution) -> Result<Option<FractionalPoint>> {
        if dist.support().any(|a| !self.instance.is_feasible(a)) {
            return Ok(None);
        }
        let spec = self.instance.spec();
        let marginals = dist.marginals(&self.instance);
        let mut coords = Vec::with_capacity(marginals.len());
        for m in &marginals {
            let x = match spec.case {
                RoundingCase::C => m / &spec.point_scale,
                RoundingCase::B => m / (&spec.point_scale * &spec.beta),
                RoundingCase::A => {
                    let curve = spec
                        .curve
                        .as_ref()
                        .expect("case (a) families carry a curve");
                    match curve.inverse(m) {
                        Some(t) => t,
                        None => return Ok(None),
                    }
                }
            };
            coords.push(x);
        }
        let x = FractionalPoint::new(coords)?;
        if !lp::contains(&self.polytope, &x)? {
            return Ok(None);
        }
        Ok(Some(x))
    }

    pub fn contains(&self, dist: &AllocationDistribution) -> Result<bool> {
        match self.preimage(dist)? {
            None => Ok(false),
            Some(x) => Ok(self.image(&x)? == *dist),
        }
    }

    /// Runs the allocation rule on `profile` and checks its lottery is in
    /// the range and equals the image of its own `x*`.
    pub fn check_allocation(&self, profile: &ValuationProfile) -> Result<bool> {
        let (x, dist) = allocate(&self.instance, profile)?;
        Ok(self.image(&x)? == dist && self.contains(&dist)?)
    }
}

/// Lower median: the `floor((n-1)/2)`-th smallest peak.
pub fn median_peak(peaks: &[Rational]) -> Result<Rational> {
    if peaks.is_empty() {
        return Err(Error::input("median of an empty list"));
    }
    let mut sorted = peaks.to_vec();
    sorted.sort();
    Ok(sorted[(sorted.len() - 1) / 2].clone())
}

/// The fractional rule and its rounding for the families without money.
///
/// The lottery family uses the constant point `(1/n, ..., 1/n)`; the
/// single-peaked family picks the lower median of the peaks.
pub fn run_without_money(
    instance: &Instance,
    profile: &ValuationProfile,
) -> Result<(FractionalPoint, AllocationDistribution)> {
    instance.validate_profile(profile)?;
    let n = instance.num_bidders();
    match instance.family() {
        Family::NoMoneyLottery => {
            let x = FractionalPoint::new(vec![Rational::new(1.into(), (n as i64).into()); n])?;
            let (_, dist) = round_point(instance, &x)?;
            Ok((x, dist))
        }
        Family::SinglePeaked => {
            let peaks: Vec<Rational> = profile
                .valuations()
                .iter()
                .map(|v| match v {
                    Valuation::SinglePeaked { peak } => peak.clone(),
                    _ => unreachable!("validated"),
                })
                .collect();
            let median = median_peak(&peaks)?;
            let j: usize = median
                .to_integer()
                .try_into()
                .map_err(|_| Error::input("median out of range"))?;
            let outcome = Allocation::new(vec![Bundle::singleton(j); n]);
            let x = FractionalPoint::new(instance.indicator(&outcome))?;
            Ok((x, AllocationDistribution::point(outcome)))
        }
        _ => Err(Error::UnsupportedFamily(instance.tag().to_string())),
    }
}

/// The position chosen by a single-peaked outcome.
pub fn outcome_position(alloc: &Allocation) -> Option<usize> {
    alloc.bundles().first().and_then(|b| b.single_item())
}

/// `v_i(x)`: bidder `i`'s value for a fractional point, linear in `x`.
/// Single-peaked outcomes are public, so every bidder values every variable.
pub fn fractional_value(
    instance: &Instance,
    profile: &ValuationProfile,
    bidder: usize,
    x: &FractionalPoint,
) -> Result<Rational> {
    let public = instance.tag() == FamilyTag::SinglePeaked;
    let mut acc = Rational::zero();
    for (a, t) in instance.variables().iter().zip(x.coords()) {
        if (public || a.bidder == bidder) && !t.is_zero() {
            acc += t * profile.valuation(bidder).value(bidder, a.bundle)?;
        }
    }
    Ok(acc)
}

/// True iff every payment is nonnegative.
pub fn no_subsidies(payments: &[Rational]) -> bool {
    payments.iter().all(|p| !p.is_negative())
}

/// True iff the lottery puts all its mass on feasible allocations.
pub fn is_supported_on_feasible(instance: &Instance, dist: &AllocationDistribution) -> bool {
    let total: Rational = dist
        .iter()
        .filter(|(a, _)| instance.is_feasible(a))
        .map(|(_, p)| p)
        .sum();
    total.is_one()
}
