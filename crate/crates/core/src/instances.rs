//! Concrete instance families and their rounding contracts.
//!
//! | family           | relaxed objective        | alpha | case | point scale | keep rule            |
//! |------------------|--------------------------|-------|------|-------------|----------------------|
//! | single-item      | linear, bundle-indexed   | 1     | c    | 1           | keep everything      |
//! | case-b (1 item)  | linear, bundle-indexed   | 1     | b    | 1           | uniform `beta`       |
//! | single-minded CA | linear, bundle-indexed   | 1/2   | c    | alpha       | keep everything      |
//! | gap-toy          | separable concave curve  | 1/2   | a    | 1           | `curve(x_v) / x_v`   |
//! | no-money-lottery | constant equal split     | 1     | c    | 1           | keep everything      |
//! | single-peaked    | median of peaks          | 1     | c    | 1           | keep everything      |

use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::lp::{self, FractionalPoint};
use crate::model::{Assignment, Bundle, Family, Instance, Valuation, ValuationProfile};
use crate::rational::{self, int, ratio, Rational};
use crate::relaxation::{self, ConcaveCurve};
use crate::rounding::{self, KeepProbabilities};

/// Breakpoints per variable of the piecewise-linear concave surrogate.
pub const DEFAULT_BREAKPOINTS: usize = 16;

/// Coordinates used when probing families at construction time.
pub fn probe_levels() -> Vec<Rational> {
    (0..=4).map(|k| ratio(k, 4)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RoundingCase {
    /// Rounded welfare overshoots `L(x)`; a second rounding thins it down to `L(x)`.
    A,
    /// Rounded welfare is scaled to exactly `beta * L(x)`.
    B,
    /// Rounded welfare already equals the relaxed value; `r'` is the identity.
    C,
}

impl RoundingCase {
    pub fn as_str(self) -> &'static str {
        match self {
            RoundingCase::A => "a",
            RoundingCase::B => "b",
            RoundingCase::C => "c",
        }
    }
}

/// How the second rounding's keep probabilities are derived from the point.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum KeepRule {
    All,
    Uniform(Rational),
    /// Keep bidder `i`'s bundle `S` with probability `curve(x_v) / x_v`
    /// where `v` is the variable of `(i, S)`.
    CurveRatio,
}

/// The rounding contract of a family. Built from the instance alone; nothing
/// here ever sees a valuation.
#[derive(Clone, Debug, PartialEq)]
pub struct FamilySpec {
    pub alpha: Rational,
    pub case: RoundingCase,
    pub beta: Rational,
    /// Factor applied to the fractional point before decomposing it.
    pub point_scale: Rational,
    pub keep_rule: KeepRule,
    /// Concave curve of a separable relaxed objective; `None` means linear.
    pub curve: Option<ConcaveCurve>,
}

impl FamilySpec {
    /// Linear objective, point scaled by `alpha` before decomposition, no second rounding.
    pub fn scaled_point(alpha: Rational) -> Result<Self> {
        FamilySpec {
            alpha: alpha.clone(),
            case: RoundingCase::C,
            beta: rational::one(),
            point_scale: alpha,
            keep_rule: KeepRule::All,
            curve: None,
        }
        .validated()
    }

    /// Linear objective with every bundle kept with probability `beta`.
    pub fn thinned(beta: Rational) -> Result<Self> {
        FamilySpec {
            alpha: rational::one(),
            case: RoundingCase::B,
            beta: beta.clone(),
            point_scale: rational::one(),
            keep_rule: KeepRule::Uniform(beta),
            curve: None,
        }
        .validated()
    }

    /// Separable concave objective calibrated down by per-assignment thinning.
    pub fn concave(curve: ConcaveCurve, alpha: Rational) -> Result<Self> {
        FamilySpec {
            alpha,
            case: RoundingCase::A,
            beta: rational::one(),
            point_scale: rational::one(),
            keep_rule: KeepRule::CurveRatio,
            curve: Some(curve),
        }
        .validated()
    }

    fn validated(self) -> Result<Self> {
        let unit = |r: &Rational| r.is_positive() && *r <= rational::one();
        if !unit(&self.alpha) || !unit(&self.beta) || !unit(&self.point_scale) {
            return Err(Error::input(format!(
                "alpha = {}, beta = {} and point scale = {} must lie in (0, 1]",
                rational::format(&self.alpha),
                rational::format(&self.beta),
                rational::format(&self.point_scale)
            )));
        }
        if self.case == RoundingCase::A && !self.point_scale.is_one() {
            return Err(Error::input("case (a) rounds the unscaled point"));
        }
        if matches!(self.keep_rule, KeepRule::CurveRatio) != self.curve.is_some() {
            return Err(Error::input(
                "the curve keep rule needs a concave curve and vice versa",
            ));
        }
        Ok(self)
    }

    /// `gamma` with `E[f(X')] = gamma * L(x)` for every point and valuation.
    pub fn calibration(&self) -> Rational {
        match self.case {
            RoundingCase::A => rational::one(),
            RoundingCase::B => &self.point_scale * &self.beta,
            RoundingCase::C => self.point_scale.clone(),
        }
    }

    /// The approximation guarantee `alpha * beta`.
    pub fn guarantee(&self) -> Rational {
        &self.alpha * &self.beta
    }

    /// Keep probabilities for the second rounding. Reads only the point.
    pub fn keep_probabilities(
        &self,
        variables: &[Assignment],
        n: usize,
        x: &FractionalPoint,
    ) -> KeepProbabilities {
        match &self.keep_rule {
            KeepRule::All => KeepProbabilities::PerBidder(vec![rational::one(); n]),
            KeepRule::Uniform(beta) => KeepProbabilities::PerBidder(vec![beta.clone(); n]),
            KeepRule::CurveRatio => {
                let curve = self.curve.as_ref().expect("validated");
                let table: BTreeMap<(usize, Bundle), Rational> = variables
                    .iter()
                    .zip(x.coords())
                    .filter(|(_, t)| t.is_positive())
                    .map(|(a, t)| ((a.bidder, a.bundle), curve.value(t) / t))
                    .collect();
                KeepProbabilities::PerAssignment(table)
            }
        }
    }
}

/// One item, scalar values, second-price behaviour.
pub fn make_single_item(n: usize) -> Result<Instance> {
    let inst = Instance::new(
        n,
        1,
        Family::SingleItem,
        FamilySpec::scaled_point(rational::one())?,
    )?;
    audit_construction(&inst)?;
    Ok(inst)
}

/// Single-minded combinatorial auction with the default `alpha = 1/2`.
pub fn make_single_minded_ca(m: usize, desires: Vec<Bundle>) -> Result<Instance> {
    make_single_minded_ca_with_alpha(m, desires, ratio(1, 2))
}

pub fn make_single_minded_ca_with_alpha(
    m: usize,
    desires: Vec<Bundle>,
    alpha: Rational,
) -> Result<Instance> {
    if m > 4 {
        return Err(Error::input(format!(
            "single-minded demos allow m <= 4, got {m}"
        )));
    }
    let n = desires.len();
    let inst = Instance::new(
        n,
        m,
        Family::SingleMindedCa { desires },
        FamilySpec::scaled_point(alpha)?,
    )?;
    audit_construction(&inst)?;
    Ok(inst)
}

/// Unit-capacity assignment toy with the concave curve `t(2-t)/2`.
pub fn make_gap_toy(bidders: usize, machines: usize) -> Result<Instance> {
    make_gap_toy_with_breakpoints(bidders, machines, DEFAULT_BREAKPOINTS)
}

pub fn make_gap_toy_with_breakpoints(
    bidders: usize,
    machines: usize,
    breakpoints: usize,
) -> Result<Instance> {
    if bidders > 4 || machines > 4 {
        return Err(Error::input(format!(
            "gap toy is desk scale (at most 4 bidders and 4 machines), got {bidders}x{machines}"
        )));
    }
    let curve = ConcaveCurve::saturating(int(2), breakpoints)?;
    let alpha = curve.value(&rational::one());
    let inst = Instance::new(
        bidders,
        machines,
        Family::GapToy,
        FamilySpec::concave(curve, alpha)?,
    )?;
    audit_construction(&inst)?;
    Ok(inst)
}

/// Single item with every winner kept with probability `beta`.
pub fn make_case_b_family(n: usize, beta: Rational) -> Result<Instance> {
    let inst = Instance::new(n, 1, Family::SingleItem, FamilySpec::thinned(beta)?)?;
    audit_construction(&inst)?;
    Ok(inst)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoMoneyKind {
    Lottery,
    SinglePeaked,
}

/// Positions `0..=10` for the default single-peaked instance.
pub const DEFAULT_POSITIONS: usize = 11;

pub fn make_no_money(n: usize, kind: NoMoneyKind) -> Result<Instance> {
    match kind {
        NoMoneyKind::Lottery => Instance::new(
            n,
            1,
            Family::NoMoneyLottery,
            FamilySpec::scaled_point(rational::one())?,
        ),
        NoMoneyKind::SinglePeaked => make_single_peaked(n, DEFAULT_POSITIONS),
    }
}

/// Single-peaked voters over the positions `0..positions`.
pub fn make_single_peaked(n: usize, positions: usize) -> Result<Instance> {
    Instance::new(
        n,
        positions,
        Family::SinglePeaked,
        FamilySpec::scaled_point(rational::one())?,
    )
}

/// Linear scan for the maximum, keeping the first index on ties.
pub fn find_max(values: &[Rational]) -> Result<(usize, Rational)> {
    let (first, rest) = values
        .split_first()
        .ok_or_else(|| Error::input("find_max needs a nonempty list"))?;
    let mut best = (0, first);
    for (i, a) in rest.iter().enumerate() {
        if best.1 < a {
            best = (i + 1, a);
        }
    }
    Ok((best.0, best.1.clone()))
}

/// The value slots of a family's profiles: how many independent numbers a
/// profile holds, and how to assemble a profile from them.
pub fn profile_from_slots(instance: &Instance, slots: &[Rational]) -> Result<ValuationProfile> {
    let n = instance.num_bidders();
    let m = instance.num_items();
    if slots.len() != value_slot_count(instance) {
        return Err(Error::input(format!(
            "expected {} value slots, got {}",
            value_slot_count(instance),
            slots.len()
        )));
    }
    let vals = match instance.family() {
        Family::SingleItem | Family::NoMoneyLottery => {
            slots.iter().cloned().map(Valuation::scalar).collect()
        }
        Family::SingleMindedCa { desires } => desires
            .iter()
            .zip(slots)
            .map(|(d, v)| Valuation::SingleMinded {
                bundle: *d,
                value: v.clone(),
            })
            .collect(),
        Family::GapToy => slots
            .chunks(m)
            .map(|c| Valuation::Additive(c.to_vec()))
            .collect(),
        Family::SinglePeaked => slots
            .iter()
            .map(|p| Valuation::SinglePeaked { peak: p.clone() })
            .collect(),
    };
    debug_assert_eq!(n, slots.len() / value_slot_count_per_bidder(instance));
    Ok(ValuationProfile::new(vals))
}

pub fn value_slot_count_per_bidder(instance: &Instance) -> usize {
    match instance.family() {
        Family::GapToy => instance.num_items(),
        _ => 1,
    }
}

pub fn value_slot_count(instance: &Instance) -> usize {
    instance.num_bidders() * value_slot_count_per_bidder(instance)
}

/// Every profile whose value slots range over `grid`, in odometer order
/// (last slot fastest).
pub fn grid_profiles(instance: &Instance, grid: &[Rational]) -> Result<Vec<ValuationProfile>> {
    let slots = value_slot_count(instance);
    let total = (grid.len() as u128)
        .checked_pow(slots as u32)
        .unwrap_or(u128::MAX);
    if total > 5_000_000 {
        return Err(Error::input(format!("grid would produce {total} profiles")));
    }
    let mut out = Vec::with_capacity(total as usize);
    let mut idx = vec![0usize; slots];
    if grid.is_empty() {
        return Ok(out);
    }
    loop {
        let vals: Vec<Rational> = idx.iter().map(|&k| grid[k].clone()).collect();
        out.push(profile_from_slots(instance, &vals)?);
        let mut pos = slots;
        loop {
            if pos == 0 {
                return Ok(out);
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

/// Probe profiles for construction audits: the full `{0,1,2}` grid when it
/// is small, otherwise unit profiles plus an all-ones and a ramp profile.
pub fn probe_profiles(instance: &Instance) -> Result<Vec<ValuationProfile>> {
    let slots = value_slot_count(instance);
    let small: Vec<Rational> = (0..=2).map(int).collect();
    if 3usize.checked_pow(slots as u32).is_some_and(|c| c <= 243) {
        return grid_profiles(instance, &small);
    }
    let mut out = Vec::new();
    for s in 0..slots {
        let mut v = vec![Rational::zero(); slots];
        v[s] = rational::one();
        out.push(profile_from_slots(instance, &v)?);
    }
    out.push(profile_from_slots(instance, &vec![rational::one(); slots])?);
    let ramp: Vec<Rational> = (0..slots).map(|s| int(s as i64 + 1)).collect();
    out.push(profile_from_slots(instance, &ramp)?);
    Ok(out)
}

/// Points of `P` whose coordinates lie in `{0, 1/4, 1/2, 3/4, 1}`. When the
/// full grid is too large, only points with at most two nonzero coordinates.
pub fn probe_points(instance: &Instance) -> Result<Vec<FractionalPoint>> {
    let poly = relaxation::polytope_for(instance)?;
    let dim = instance.num_vars();
    let levels = probe_levels();
    let mut out = Vec::new();
    if 5usize.checked_pow(dim as u32).is_some_and(|c| c <= 15_625) {
        let mut idx = vec![0usize; dim];
        'outer: loop {
            let x = FractionalPoint::new(idx.iter().map(|&k| levels[k].clone()).collect())?;
            if lp::contains(&poly, &x)? {
                out.push(x);
            }
            let mut pos = dim;
            loop {
                if pos == 0 {
                    break 'outer;
                }
                pos -= 1;
                idx[pos] += 1;
                if idx[pos] < levels.len() {
                    break;
                }
                idx[pos] = 0;
            }
        }
    } else {
        out.push(FractionalPoint::origin(dim));
        for a in 0..dim {
            for b in a..dim {
                for la in &levels[1..] {
                    for lb in &levels[1..] {
                        let mut c = vec![Rational::zero(); dim];
                        c[a] = la.clone();
                        if b != a {
                            c[b] = lb.clone();
                        } else if lb != la {
                            continue;
                        }
                        let x = FractionalPoint::new(c)?;
                        if lp::contains(&poly, &x)? {
                            out.push(x);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Construction-time audits: the alpha contract on probe profiles,
/// decomposability of the scaled relaxation optima and probe points, and
/// for case (a) the exact calibration of the second rounding.
fn audit_construction(instance: &Instance) -> Result<()> {
    let spec = instance.spec();
    let mut points = probe_points(instance)?;
    for profile in probe_profiles(instance)? {
        let (objective, poly) = relaxation::build_relaxation(instance, &profile)?;
        let audit = relaxation::audit_alpha(&objective, instance, &profile)?;
        if let Some(cx) = audit.counterexample {
            return Err(Error::Construction(format!(
                "alpha contract fails at {:?}: L = {}, alpha f = {}",
                cx.allocation,
                rational::format(&cx.relaxed),
                rational::format(&cx.target)
            )));
        }
        points.push(relaxation::solve_relaxation(&objective, &poly)?);
    }
    points.sort();
    points.dedup();
    for x in &points {
        let decomposition =
            rounding::convex_decompose(x, &spec.point_scale, instance).map_err(|e| {
                Error::Construction(format!(
                    "decomposing the probe point {:?} failed ({e}); declare a smaller alpha",
                    x.coords().iter().map(rational::format).collect::<Vec<_>>()
                ))
            })?;
        if spec.case == RoundingCase::A {
            audit_calibration(instance, x, &decomposition)?;
        }
    }
    Ok(())
}

/// Case (a) audit: before the second rounding every assignment's marginal is
/// `x_v` (so rounded welfare is at least `L(x)`); after it the marginal is
/// exactly `curve(x_v)`, which makes `E[f(X')] = L(x)` for every additive
/// valuation by linearity.
fn audit_calibration(
    instance: &Instance,
    x: &FractionalPoint,
    decomposition: &rounding::ConvexDecomposition,
) -> Result<()> {
    let spec = instance.spec();
    let curve = spec
        .curve
        .as_ref()
        .expect("case (a) families carry a curve");
    let before = rounding::exact_distribution(decomposition);
    let keep = spec.keep_probabilities(instance.variables(), instance.num_bidders(), x);
    let after = rounding::adjust(&before, spec.case, &keep)?;
    let mb = before.marginals(instance);
    let ma = after.marginals(instance);
    for (v, t) in x.coords().iter().enumerate() {
        let target = curve.value(t);
        if mb[v] != *t || mb[v] < target || ma[v] != target {
            return Err(Error::Construction(format!(
                "calibration audit failed at variable {v}: x = {}, marginal before = {}, after = {}, target = {} (gap {})",
                rational::format(t),
                rational::format(&mb[v]),
                rational::format(&ma[v]),
                rational::format(&target),
                rational::format(&(&ma[v] - &target))
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanism;
    use crate::model::{enumerate_feasible, Allocation};

    #[test]
    fn find_max_scans_left_to_right() {
        assert_eq!(find_max(&[int(5), int(3), int(9)]).unwrap(), (2, int(9)));
        assert_eq!(find_max(&[int(4), int(4)]).unwrap(), (0, int(4)));
        assert_eq!(find_max(&[int(7)]).unwrap(), (0, int(7)));
        assert!(find_max(&[]).is_err());
    }

    #[test]
    fn single_item_is_second_price() {
        for (bids, winner, price) in [(vec![5, 3], 0, 3), (vec![5, 3, 2], 0, 3), (vec![7], 0, 0)] {
            let inst = make_single_item(bids.len()).unwrap();
            let p = ValuationProfile::scalars(bids.iter().map(|&b| int(b)));
            let out = mechanism::run(&inst, &p, 1).unwrap();
            assert_eq!(
                out.realized,
                Allocation::single(bids.len(), winner, Bundle::singleton(0))
            );
            assert_eq!(out.expected_payments[winner], int(price));
        }
    }

    #[test]
    fn ca_example_has_optimum_six() {
        let b = |v: &[usize]| Bundle::from_items(v.iter().copied());
        let inst = make_single_minded_ca(2, vec![b(&[0, 1]), b(&[0]), b(&[1])]).unwrap();
        let p = profile_from_slots(&inst, &[int(5), int(3), int(3)]).unwrap();
        let opt = enumerate_feasible(&inst)
            .unwrap()
            .iter()
            .map(|a| crate::model::social_welfare(&p, a).unwrap())
            .max()
            .unwrap();
        assert_eq!(opt, int(6));
    }

    #[test]
    fn disjoint_desires_decompose_to_a_point_mass() {
        let b = |v: &[usize]| Bundle::from_items(v.iter().copied());
        let inst = make_single_minded_ca_with_alpha(2, vec![b(&[0]), b(&[1])], int(1)).unwrap();
        let p = profile_from_slots(&inst, &[int(2), int(3)]).unwrap();
        let (x, dist) = mechanism::allocate(&inst, &p).unwrap();
        assert_eq!(x.coords(), &[int(1), int(1)][..]);
        assert_eq!(dist.len(), 1);
        assert_eq!(
            dist.probability(&Allocation::new(vec![b(&[0]), b(&[1])])),
            int(1)
        );
    }

    #[test]
    fn single_bidder_ca_behaves_like_single_item() {
        let inst = make_single_minded_ca_with_alpha(3, vec![Bundle::full(3)], int(1)).unwrap();
        let p = profile_from_slots(&inst, &[int(7)]).unwrap();
        let out = mechanism::run(&inst, &p, 3).unwrap();
        assert_eq!(out.realized, Allocation::new(vec![Bundle::full(3)]));
        assert_eq!(out.expected_payments, vec![int(0)]);
    }

    #[test]
    fn alpha_one_triangle_is_rejected() {
        // Pairwise-overlapping desires: the LP optimum (1/2,1/2,1/2) has
        // mass 3/2 but any allocation serves at most one bidder.
        let b = |v: &[usize]| Bundle::from_items(v.iter().copied());
        let desires = vec![b(&[0, 1]), b(&[1, 2]), b(&[0, 2])];
        let err = make_single_minded_ca_with_alpha(3, desires.clone(), int(1)).unwrap_err();
        assert!(matches!(err, Error::Construction(ref m) if m.contains("smaller alpha")));
        assert!(make_single_minded_ca(3, desires).is_ok());
    }

    #[test]
    fn gap_curve_evaluation() {
        let unit = ConcaveCurve::saturating(int(1), DEFAULT_BREAKPOINTS).unwrap();
        assert_eq!(unit.value(&int(1)), int(1));
        let toy = make_gap_toy(1, 1).unwrap();
        let curve = toy.spec().curve.as_ref().unwrap();
        assert_eq!(curve.value(&int(1)), ratio(1, 2));
        assert_eq!(curve.value(&ratio(1, 2)), ratio(3, 8));
    }

    #[test]
    fn gap_zero_valuations_stay_zero() {
        let inst = make_gap_toy(2, 2).unwrap();
        let p = profile_from_slots(&inst, &[int(0), int(0), int(0), int(0)]).unwrap();
        let out = mechanism::run(&inst, &p, 9).unwrap();
        assert_eq!(out.relaxed_value, int(0));
        assert_eq!(out.expected_payments, vec![int(0), int(0)]);
        assert!(out.realized.is_empty());
    }

    #[test]
    fn case_b_thins_the_winner() {
        let inst = make_case_b_family(2, ratio(1, 2)).unwrap();
        let p = ValuationProfile::scalars([int(5), int(3)]);
        let (_, dist) = mechanism::allocate(&inst, &p).unwrap();
        assert_eq!(
            dist.probability(&Allocation::single(2, 0, Bundle::singleton(0))),
            ratio(1, 2)
        );
        assert_eq!(dist.probability(&Allocation::empty(2)), ratio(1, 2));
        assert_eq!(rounding::expected_welfare(&dist, &p).unwrap(), ratio(5, 2));

        let same = make_case_b_family(2, int(1)).unwrap();
        let base = make_single_item(2).unwrap();
        assert_eq!(
            mechanism::allocate(&same, &p).unwrap(),
            mechanism::allocate(&base, &p).unwrap()
        );
        assert!(make_case_b_family(2, int(0)).is_err());
    }

    #[test]
    fn lottery_is_uniform() {
        let inst = make_no_money(4, NoMoneyKind::Lottery).unwrap();
        let p = ValuationProfile::scalars((1..=4).map(int));
        let (_, dist) = mechanism::run_without_money(&inst, &p).unwrap();
        for i in 0..4 {
            assert_eq!(
                dist.probability(&Allocation::single(4, i, Bundle::singleton(0))),
                ratio(1, 4)
            );
        }
    }

    #[test]
    fn grid_profiles_enumerate_in_odometer_order() {
        let inst = make_single_item(2).unwrap();
        let ps = grid_profiles(&inst, &[int(0), int(1)]).unwrap();
        assert_eq!(ps.len(), 4);
        assert_eq!(ps[1], ValuationProfile::scalars([int(0), int(1)]));
    }
}
