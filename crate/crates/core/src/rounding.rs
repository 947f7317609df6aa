//! Convex decomposition of fractional points, the second rounding `r'`, and
//! exact arithmetic on the resulting lotteries.
//!
//! Nothing in this module takes a [`ValuationProfile`] except the two
//! expectation helpers, so the rounding `r' o r` cannot depend on reports.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::instances::RoundingCase;
use crate::lp::{self, FractionalPoint, PhaseOne};
use crate::model::{enumerate_feasible, value_of, Allocation, Bundle, Instance, ValuationProfile};
use crate::rational::{self, Rational};

/// `sum_j lambda_j z_j` with `lambda_j > 0` and `sum_j lambda_j = 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvexDecomposition {
    terms: Vec<(Rational, Allocation)>,
}

impl ConvexDecomposition {
    pub fn new(terms: Vec<(Rational, Allocation)>) -> Result<Self> {
        if terms.iter().any(|(w, _)| !w.is_positive()) {
            return Err(Error::Distribution(
                "decomposition weights must be positive".into(),
            ));
        }
        let total: Rational = terms.iter().map(|(w, _)| w).sum();
        if !total.is_one() {
            return Err(Error::Distribution(format!(
                "decomposition weights sum to {}",
                rational::format(&total)
            )));
        }
        Ok(ConvexDecomposition { terms })
    }

    pub fn terms(&self) -> &[(Rational, Allocation)] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// `sum_j lambda_j chi(z_j)`.
    pub fn combination(&self, instance: &Instance) -> Vec<Rational> {
        let mut acc = vec![Rational::zero(); instance.num_vars()];
        for (w, z) in &self.terms {
            for (a, c) in acc.iter_mut().zip(instance.indicator(z)) {
                if !c.is_zero() {
                    *a += w * c;
                }
            }
        }
        acc
    }
}

/// A lottery over allocations with exact positive probabilities summing to 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AllocationDistribution {
    mass: BTreeMap<Allocation, Rational>,
}

impl AllocationDistribution {
    pub fn new(mass: BTreeMap<Allocation, Rational>) -> Result<Self> {
        if mass.values().any(|p| !p.is_positive()) {
            return Err(Error::Distribution("probabilities must be positive".into()));
        }
        let total: Rational = mass.values().sum();
        if !total.is_one() {
            return Err(Error::Distribution(format!(
                "probabilities sum to {}",
                rational::format(&total)
            )));
        }
        Ok(AllocationDistribution { mass })
    }

    pub fn point(alloc: Allocation) -> Self {
        AllocationDistribution {
            mass: BTreeMap::from([(alloc, Rational::one())]),
        }
    }

    /// Builds from possibly repeated, possibly zero-weight entries.
    pub fn from_entries<I: IntoIterator<Item = (Allocation, Rational)>>(
        entries: I,
    ) -> Result<Self> {
        let mut mass: BTreeMap<Allocation, Rational> = BTreeMap::new();
        for (a, p) in entries {
            if p.is_negative() {
                return Err(Error::Distribution("negative probability".into()));
            }
            if !p.is_zero() {
                *mass.entry(a).or_insert_with(Rational::zero) += p;
            }
        }
        AllocationDistribution::new(mass)
    }

    pub fn probability(&self, alloc: &Allocation) -> Rational {
        self.mass.get(alloc).cloned().unwrap_or_else(Rational::zero)
    }

    /// Support in [`Allocation`] order.
    pub fn iter(&self) -> impl Iterator<Item = (&Allocation, &Rational)> {
        self.mass.iter()
    }

    pub fn support(&self) -> impl Iterator<Item = &Allocation> {
        self.mass.keys()
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    /// `E[chi(X)]`: the probability of each relaxation variable's assignment.
    pub fn marginals(&self, instance: &Instance) -> Vec<Rational> {
        let mut acc = vec![Rational::zero(); instance.num_vars()];
        for (a, p) in &self.mass {
            for (m, c) in acc.iter_mut().zip(instance.indicator(a)) {
                if !c.is_zero() {
                    *m += p;
                }
            }
        }
        acc
    }
}

/// Per-bidder keep probabilities for the second rounding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum KeepProbabilities {
    /// Bidder `i` keeps whatever bundle it holds with probability `p[i]`.
    PerBidder(Vec<Rational>),
    /// Bidder `i` holding `S` keeps it with the listed probability; pairs
    /// not listed are kept with probability 1.
    PerAssignment(BTreeMap<(usize, Bundle), Rational>),
}

impl KeepProbabilities {
    pub fn keep(&self, bidder: usize, bundle: Bundle) -> Rational {
        match self {
            KeepProbabilities::PerBidder(p) => p.get(bidder).cloned().unwrap_or_else(Rational::one),
            KeepProbabilities::PerAssignment(t) => t
                .get(&(bidder, bundle))
                .cloned()
                .unwrap_or_else(Rational::one),
        }
    }

    pub fn is_identity(&self) -> bool {
        match self {
            KeepProbabilities::PerBidder(p) => p.iter().all(|x| x.is_one()),
            KeepProbabilities::PerAssignment(t) => t.values().all(|x| x.is_one()),
        }
    }

    fn validate(&self) -> Result<()> {
        let vals: Vec<&Rational> = match self {
            KeepProbabilities::PerBidder(p) => p.iter().collect(),
            KeepProbabilities::PerAssignment(t) => t.values().collect(),
        };
        if vals
            .iter()
            .any(|p| p.is_negative() || **p > Rational::one())
        {
            return Err(Error::input("keep probabilities must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Finds `lambda >= 0` over the enumerated feasible set with
/// `sum_j lambda_j chi(z_j) = scale * x` and `sum_j lambda_j = 1`.
///
/// The empty allocation absorbs any slack. The weights come from a basic
/// solution, so at most `dim(x) + 1` allocations get positive weight.
pub fn convex_decompose(
    x: &FractionalPoint,
    scale: &Rational,
    instance: &Instance,
) -> Result<ConvexDecomposition> {
    if x.dim() != instance.num_vars() {
        return Err(Error::input(format!(
            "point has dimension {}, instance has {} variables",
            x.dim(),
            instance.num_vars()
        )));
    }
    if !scale.is_positive() || *scale > Rational::one() {
        return Err(Error::input("decomposition scale must lie in (0, 1]"));
    }
    let feasible = enumerate_feasible(instance)?;
    let columns: Vec<Vec<Rational>> = feasible.iter().map(|s| instance.indicator(s)).collect();
    let mut system: Vec<(Vec<Rational>, Rational)> = (0..x.dim())
        .map(|v| {
            (
                columns.iter().map(|c| c[v].clone()).collect(),
                scale * &x.coords()[v],
            )
        })
        .collect();
    system.push((vec![Rational::one(); feasible.len()], Rational::one()));
    match lp::phase_one(&system, feasible.len())? {
        PhaseOne::Infeasible { residual } => Err(Error::DecompositionInfeasible {
            residual: rational::format(&residual),
        }),
        PhaseOne::Feasible(lambda) => ConvexDecomposition::new(
            lambda
                .into_iter()
                .zip(feasible)
                .filter(|(w, _)| w.is_positive())
                .collect(),
        ),
    }
}

/// Merges duplicate allocations of a decomposition into a distribution.
pub fn exact_distribution(d: &ConvexDecomposition) -> AllocationDistribution {
    AllocationDistribution::from_entries(d.terms.iter().map(|(w, a)| (a.clone(), w.clone())))
        .expect("a valid decomposition is a valid distribution")
}

/// The second rounding `r'`.
///
/// Case (c) is the identity and requires every keep probability to be 1.
/// Cases (a) and (b) drop each bidder's bundle independently with
/// probability `1 - keep(i, S_i)`; the output is computed exactly by
/// expanding every keep/drop pattern of each support allocation.
pub fn adjust(
    dist: &AllocationDistribution,
    case: RoundingCase,
    keep: &KeepProbabilities,
) -> Result<AllocationDistribution> {
    keep.validate()?;
    if case == RoundingCase::C {
        if !keep.is_identity() {
            return Err(Error::input("case (c) keeps every bundle"));
        }
        return Ok(dist.clone());
    }
    let mut out: Vec<(Allocation, Rational)> = Vec::new();
    for (alloc, p) in dist.iter() {
        let holders: Vec<usize> = (0..alloc.num_bidders())
            .filter(|&i| !alloc.bundle(i).is_empty())
            .collect();
        for pattern in 0u64..(1u64 << holders.len()) {
            let mut a = alloc.clone();
            let mut prob = p.clone();
            for (bit, &i) in holders.iter().enumerate() {
                let k = keep.keep(i, alloc.bundle(i));
                if pattern >> bit & 1 == 1 {
                    prob *= k;
                } else {
                    prob *= Rational::one() - k;
                    a = a.without(i);
                }
            }
            out.push((a, prob));
        }
    }
    AllocationDistribution::from_entries(out)
}

/// `E[f(X)]`.
pub fn expected_welfare(
    dist: &AllocationDistribution,
    profile: &ValuationProfile,
) -> Result<Rational> {
    Ok(expected_value_per_bidder(dist, profile)?.into_iter().sum())
}

/// `E[v_i(X)]` for every bidder.
pub fn expected_value_per_bidder(
    dist: &AllocationDistribution,
    profile: &ValuationProfile,
) -> Result<Vec<Rational>> {
    let n = profile.num_bidders();
    let mut acc = vec![Rational::zero(); n];
    for (a, p) in dist.iter() {
        for (i, slot) in acc.iter_mut().enumerate() {
            let v = value_of(profile, i, a)?;
            if !v.is_zero() {
                *slot += p * v;
            }
        }
    }
    Ok(acc)
}

/// Inverse-CDF sample over the support order.
///
/// The generator is ChaCha8 (`rand_chacha::ChaCha8Rng::seed_from_u64(seed)`);
/// one 64-bit draw `u` is read as the exact rational `u / 2^64` and the first
/// allocation whose cumulative mass exceeds it is returned.
pub fn sample(dist: &AllocationDistribution, seed: u64) -> Allocation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = Rational::new(BigInt::from(rng.next_u64()), BigInt::one() << 64);
    let mut cumulative = Rational::zero();
    let mut last = None;
    for (a, p) in dist.iter() {
        cumulative += p;
        if u < cumulative {
            return a.clone();
        }
        last = Some(a);
    }
    last.expect("distributions are nonempty").clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use crate::model::{Bundle, ValuationProfile};
    use crate::rational::{int, ratio};

    fn item() -> Bundle {
        Bundle::singleton(0)
    }

    fn point(v: &[Rational]) -> FractionalPoint {
        FractionalPoint::new(v.to_vec()).unwrap()
    }

    #[test]
    fn symmetric_point_splits_evenly() {
        let inst = instances::make_single_item(2).unwrap();
        let d = convex_decompose(&point(&[ratio(1, 2), ratio(1, 2)]), &int(1), &inst).unwrap();
        let dist = exact_distribution(&d);
        assert_eq!(dist.len(), 2);
        assert_eq!(
            dist.probability(&Allocation::single(2, 0, item())),
            ratio(1, 2)
        );
        assert_eq!(
            dist.probability(&Allocation::single(2, 1, item())),
            ratio(1, 2)
        );
    }

    #[test]
    fn slack_goes_to_the_empty_allocation() {
        // Oracle: with allocations [empty, b0, b1] the system
        //   l_b0 = 1/4, l_b1 = 1/2, l_empty + l_b0 + l_b1 = 1
        // has the unique solution l_empty = 1/4.
        let inst = instances::make_single_item(2).unwrap();
        let sys = vec![
            (vec![int(0), int(1), int(0)], ratio(1, 4)),
            (vec![int(0), int(0), int(1)], ratio(1, 2)),
            (vec![int(1), int(1), int(1)], int(1)),
        ];
        let oracle = lp::solve_feasibility(&sys, 3).unwrap().unwrap();
        let d = convex_decompose(&point(&[ratio(1, 4), ratio(1, 2)]), &int(1), &inst).unwrap();
        let dist = exact_distribution(&d);
        assert_eq!(dist.probability(&Allocation::empty(2)), oracle[0]);
        assert_eq!(
            dist.probability(&Allocation::single(2, 0, item())),
            oracle[1]
        );
        assert_eq!(
            dist.probability(&Allocation::single(2, 1, item())),
            oracle[2]
        );
        assert_eq!(oracle, vec![ratio(1, 4), ratio(1, 4), ratio(1, 2)]);
    }

    #[test]
    fn integral_points_decompose_to_themselves() {
        let b = |v: &[usize]| Bundle::from_items(v.iter().copied());
        let inst = instances::make_single_minded_ca_with_alpha(
            2,
            vec![b(&[0]), b(&[1]), b(&[0, 1])],
            int(1),
        )
        .unwrap();
        let s = Allocation::new(vec![b(&[0]), b(&[1]), Bundle::empty()]);
        let x = FractionalPoint::new(inst.indicator(&s)).unwrap();
        let d = convex_decompose(&x, &int(1), &inst).unwrap();
        assert_eq!(d.terms(), &[(int(1), s)][..]);
    }

    #[test]
    fn infeasible_decomposition_reports_residual() {
        let inst = instances::make_single_item(2).unwrap();
        // (1, 1) is not in the convex hull of single-item allocations
        let err = convex_decompose(&point(&[int(1), int(1)]), &int(1), &inst).unwrap_err();
        assert!(matches!(err, Error::DecompositionInfeasible { .. }));
        assert!(convex_decompose(&point(&[int(1)]), &int(1), &inst).is_err());
        assert!(convex_decompose(&point(&[int(0), int(0)]), &int(0), &inst).is_err());
    }

    #[test]
    fn merging_duplicates() {
        let s = Allocation::single(2, 0, item());
        let t = Allocation::single(2, 1, item());
        let d = ConvexDecomposition::new(vec![(ratio(1, 2), s.clone()), (ratio(1, 2), s.clone())])
            .unwrap();
        assert_eq!(
            exact_distribution(&d),
            AllocationDistribution::point(s.clone())
        );
        let d = ConvexDecomposition::new(vec![(ratio(1, 2), s.clone()), (ratio(1, 2), t.clone())])
            .unwrap();
        let dist = exact_distribution(&d);
        assert_eq!(dist.probability(&s), ratio(1, 2));
        assert_eq!(dist.probability(&t), ratio(1, 2));
        let e = Allocation::empty(2);
        let d = ConvexDecomposition::new(vec![(int(1), e.clone())]).unwrap();
        assert_eq!(exact_distribution(&d), AllocationDistribution::point(e));
        assert!(
            ConvexDecomposition::new(vec![(ratio(3, 5), s.clone()), (ratio(3, 5), t)]).is_err()
        );
    }

    #[test]
    fn adjust_cases() {
        let win0 = Allocation::single(2, 0, item());
        let dist = AllocationDistribution::point(win0.clone());
        let ident = KeepProbabilities::PerBidder(vec![int(1), int(1)]);
        assert_eq!(adjust(&dist, RoundingCase::C, &ident).unwrap(), dist);
        let half = KeepProbabilities::PerBidder(vec![ratio(1, 2), int(1)]);
        assert!(adjust(&dist, RoundingCase::C, &half).is_err());
        let thinned = adjust(&dist, RoundingCase::B, &half).unwrap();
        assert_eq!(thinned.probability(&win0), ratio(1, 2));
        assert_eq!(thinned.probability(&Allocation::empty(2)), ratio(1, 2));
        let bad = KeepProbabilities::PerBidder(vec![ratio(3, 2), int(1)]);
        assert!(adjust(&dist, RoundingCase::B, &bad).is_err());
    }

    #[test]
    fn two_holder_thinning_matches_direct_convolution() {
        // Oracle: each holder independently survives; enumerate the four
        // keep/drop outcomes by hand.
        let inst = instances::make_gap_toy(2, 2).unwrap();
        let both = Allocation::new(vec![Bundle::singleton(0), Bundle::singleton(1)]);
        let dist = AllocationDistribution::point(both.clone());
        let (k0, k1) = (ratio(1, 2), ratio(1, 2));
        let out = adjust(
            &dist,
            RoundingCase::A,
            &KeepProbabilities::PerBidder(vec![k0.clone(), k1.clone()]),
        )
        .unwrap();
        let one = int(1);
        assert_eq!(out.probability(&both), &k0 * &k1);
        assert_eq!(out.probability(&both.without(1)), &k0 * (&one - &k1));
        assert_eq!(out.probability(&both.without(0)), (&one - &k0) * &k1);
        assert_eq!(
            out.probability(&Allocation::empty(2)),
            (&one - &k0) * (&one - &k1)
        );
        assert_eq!(out.iter().map(|(_, p)| p.clone()).sum::<Rational>(), one);
        assert_eq!(out.marginals(&inst).iter().sum::<Rational>(), int(1));
    }

    #[test]
    fn expectations() {
        let p = ValuationProfile::scalars([int(5), int(3)]);
        let fair = AllocationDistribution::from_entries([
            (Allocation::single(2, 0, item()), ratio(1, 2)),
            (Allocation::single(2, 1, item()), ratio(1, 2)),
        ])
        .unwrap();
        assert_eq!(expected_welfare(&fair, &p).unwrap(), int(4));
        assert_eq!(
            expected_value_per_bidder(&fair, &p).unwrap(),
            vec![ratio(5, 2), ratio(3, 2)]
        );
        let none = AllocationDistribution::point(Allocation::empty(2));
        assert_eq!(expected_welfare(&none, &p).unwrap(), int(0));
        assert_eq!(
            expected_value_per_bidder(&none, &p).unwrap(),
            vec![int(0), int(0)]
        );
        let thin = adjust(
            &fair,
            RoundingCase::B,
            &KeepProbabilities::PerBidder(vec![ratio(1, 2); 2]),
        )
        .unwrap();
        assert_eq!(
            expected_value_per_bidder(&thin, &p).unwrap(),
            vec![ratio(5, 4), ratio(3, 4)]
        );
    }

    #[test]
    fn decomposition_of_the_optimum_realizes_the_relaxed_value() {
        let inst = instances::make_single_item(2).unwrap();
        let p = ValuationProfile::scalars([int(5), int(3)]);
        let (l, poly) = crate::relaxation::build_relaxation(&inst, &p).unwrap();
        let x = crate::relaxation::solve_relaxation(&l, &poly).unwrap();
        let d = convex_decompose(&x, &int(1), &inst).unwrap();
        let by_terms: Rational = d
            .terms()
            .iter()
            .map(|(w, z)| w * crate::model::social_welfare(&p, z).unwrap())
            .sum();
        assert_eq!(by_terms, int(5));
        assert_eq!(
            expected_welfare(&exact_distribution(&d), &p).unwrap(),
            l.evaluate(&x)
        );
    }

    #[test]
    fn sampling_is_deterministic_and_in_support() {
        let s = Allocation::single(2, 0, item());
        assert_eq!(sample(&AllocationDistribution::point(s.clone()), 7), s);
        let fair = AllocationDistribution::from_entries([
            (Allocation::single(2, 0, item()), ratio(1, 2)),
            (Allocation::single(2, 1, item()), ratio(1, 2)),
        ])
        .unwrap();
        let a = sample(&fair, 42);
        assert!(fair.probability(&a).is_positive());
        assert_eq!(sample(&fair, 42), a);
        let hits = (0..200).filter(|&seed| sample(&fair, seed) == s).count();
        assert!((60..140).contains(&hits), "{hits}");
    }

    proptest::proptest! {
        #[test]
        fn decomposition_identities_hold(
            x0 in 0i64..=4, x1 in 0i64..=4, x2 in 0i64..=4,
        ) {
            let b = |v: &[usize]| Bundle::from_items(v.iter().copied());
            let inst = instances::make_single_minded_ca(3, vec![b(&[0, 1]), b(&[1, 2]), b(&[0, 2])]).unwrap();
            let x = FractionalPoint::new(vec![ratio(x0, 4), ratio(x1, 4), ratio(x2, 4)]).unwrap();
            let poly = crate::relaxation::polytope_for(&inst).unwrap();
            proptest::prop_assume!(lp::contains(&poly, &x).unwrap());
            let scale = inst.spec().point_scale.clone();
            let d = convex_decompose(&x, &scale, &inst).unwrap();
            let target: Vec<Rational> = x.coords().iter().map(|c| c * &scale).collect();
            proptest::prop_assert_eq!(d.combination(&inst), target);
            proptest::prop_assert!(d.len() <= inst.num_vars() + 1);
            let total: Rational = d.terms().iter().map(|(w, _)| w.clone()).sum();
            proptest::prop_assert_eq!(total, int(1));
        }

        #[test]
        fn uniform_thinning_scales_welfare(vals in proptest::collection::vec(0i64..9, 3), beta_num in 1i64..=4) {
            let inst = instances::make_single_item(3).unwrap();
            let p = ValuationProfile::scalars(vals.iter().map(|&v| int(v)));
            let beta = ratio(beta_num, 4);
            let x = FractionalPoint::new(vec![ratio(1, 3), ratio(1, 3), ratio(1, 3)]).unwrap();
            let dist = exact_distribution(&convex_decompose(&x, &int(1), &inst).unwrap());
            let thin = adjust(&dist, RoundingCase::B, &KeepProbabilities::PerBidder(vec![beta.clone(); 3])).unwrap();
            proptest::prop_assert_eq!(
                expected_welfare(&thin, &p).unwrap(),
                beta * expected_welfare(&dist, &p).unwrap()
            );
        }
    }
}
