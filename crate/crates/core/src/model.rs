//! Instances, allocations, valuations and exact welfare.
//!
//! Items are indexed `0..m` and a bundle is a bitmask over them, so an
//! instance carries at most [`Bundle::MAX_ITEMS`] items. For the
//! single-peaked family the "items" are the candidate positions `0..m`
//! and every bidder's bundle holds the one chosen position.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use num_traits::{Signed, Zero};

use crate::error::{Error, Result};
use crate::instances::FamilySpec;
use crate::rational::{self, Rational};

/// Default cap on the number of allocations [`enumerate_feasible`] materializes.
pub const DEFAULT_ENUMERATION_BOUND: usize = 50_000;

#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bundle(u32);

impl Bundle {
    pub const MAX_ITEMS: usize = 32;

    pub const fn empty() -> Self {
        Bundle(0)
    }

    pub const fn from_bits(bits: u32) -> Self {
        Bundle(bits)
    }

    pub fn singleton(item: usize) -> Self {
        assert!(item < Self::MAX_ITEMS, "item index {item} out of range");
        Bundle(1 << item)
    }

    pub fn from_items<I: IntoIterator<Item = usize>>(items: I) -> Self {
        items
            .into_iter()
            .fold(Bundle::empty(), |b, i| b.union(Bundle::singleton(i)))
    }

    /// All items `0..m`.
    pub fn full(m: usize) -> Self {
        if m >= Self::MAX_ITEMS {
            Bundle(u32::MAX)
        } else {
            Bundle((1u32 << m) - 1)
        }
    }

    pub const fn bits(self) -> u32 {
        self.0
    }

    pub const fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub const fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub const fn contains(self, item: usize) -> bool {
        item < Self::MAX_ITEMS && self.0 & (1 << item) != 0
    }

    pub const fn union(self, other: Bundle) -> Bundle {
        Bundle(self.0 | other.0)
    }

    pub const fn is_subset_of(self, other: Bundle) -> bool {
        self.0 & !other.0 == 0
    }

    pub const fn is_disjoint(self, other: Bundle) -> bool {
        self.0 & other.0 == 0
    }

    pub fn items(self) -> impl Iterator<Item = usize> {
        (0..Self::MAX_ITEMS).filter(move |&i| self.contains(i))
    }

    /// The one item of a singleton bundle.
    pub fn single_item(self) -> Option<usize> {
        (self.len() == 1).then(|| self.0.trailing_zeros() as usize)
    }

    /// Every nonempty subset of `0..m`, in increasing bitmask order.
    pub fn nonempty_subsets(m: usize) -> impl Iterator<Item = Bundle> {
        (1..=Bundle::full(m).0).map(Bundle)
    }
}

impl fmt::Display for Bundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, i) in self.items().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{i}")?;
        }
        f.write_str("}")
    }
}

impl fmt::Debug for Bundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// One bundle per bidder.
///
/// Allocations order colexicographically on their bundle bitmasks (the last
/// bidder is most significant), so for a single item the order is
/// `[empty, bidder 0 wins, bidder 1 wins, ...]`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Allocation {
    bundles: Vec<Bundle>,
}

impl Allocation {
    pub fn new(bundles: Vec<Bundle>) -> Self {
        Allocation { bundles }
    }

    pub fn empty(n: usize) -> Self {
        Allocation {
            bundles: vec![Bundle::empty(); n],
        }
    }

    /// `bidder` receives `bundle`, everyone else nothing.
    pub fn single(n: usize, bidder: usize, bundle: Bundle) -> Self {
        let mut a = Allocation::empty(n);
        a.bundles[bidder] = bundle;
        a
    }

    pub fn bundles(&self) -> &[Bundle] {
        &self.bundles
    }

    pub fn bundle(&self, bidder: usize) -> Bundle {
        self.bundles[bidder]
    }

    pub fn num_bidders(&self) -> usize {
        self.bundles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bundles.iter().all(|b| b.is_empty())
    }

    pub fn pairwise_disjoint(&self) -> bool {
        let mut seen = Bundle::empty();
        for b in &self.bundles {
            if !b.is_disjoint(seen) {
                return false;
            }
            seen = seen.union(*b);
        }
        true
    }

    /// Copy with `bidder`'s bundle replaced by the empty bundle.
    pub fn without(&self, bidder: usize) -> Allocation {
        let mut a = self.clone();
        a.bundles[bidder] = Bundle::empty();
        a
    }

    pub fn bitmasks(&self) -> Vec<u32> {
        self.bundles.iter().map(|b| b.bits()).collect()
    }
}

impl Ord for Allocation {
    fn cmp(&self, other: &Self) -> Ordering {
        self.bundles
            .len()
            .cmp(&other.bundles.len())
            .then_with(|| self.bundles.iter().rev().cmp(other.bundles.iter().rev()))
    }
}

impl PartialOrd for Allocation {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Allocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.bundles).finish()
    }
}

/// A single bidder's valuation in one of the supported representations.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Valuation {
    /// Explicit bundle table. Bundles missing from the table are an error
    /// (except the empty bundle, always worth 0).
    Table(BTreeMap<Bundle, Rational>),
    /// Wants exactly `bundle`; any superset is worth `value`, everything else 0.
    SingleMinded { bundle: Bundle, value: Rational },
    /// Per-item values, summed over the bundle.
    Additive(Vec<Rational>),
    /// Peak position on the line; outcome `j` is worth `-|j - peak|`.
    SinglePeaked { peak: Rational },
}

impl Valuation {
    pub fn scalar(value: Rational) -> Self {
        Valuation::Additive(vec![value])
    }

    pub fn value(&self, bidder: usize, bundle: Bundle) -> Result<Rational> {
        if bundle.is_empty() {
            return Ok(Rational::zero());
        }
        match self {
            Valuation::Table(t) => t
                .get(&bundle)
                .cloned()
                .ok_or(Error::UnknownBundle { bidder, bundle }),
            Valuation::SingleMinded {
                bundle: want,
                value,
            } => Ok(if want.is_subset_of(bundle) {
                value.clone()
            } else {
                Rational::zero()
            }),
            Valuation::Additive(values) => bundle.items().try_fold(Rational::zero(), |acc, j| {
                values
                    .get(j)
                    .map(|v| acc + v)
                    .ok_or(Error::UnknownBundle { bidder, bundle })
            }),
            Valuation::SinglePeaked { peak } => {
                let pos = bundle
                    .single_item()
                    .ok_or(Error::UnknownBundle { bidder, bundle })?;
                Ok(-rational::abs_diff(&rational::int(pos as i64), peak))
            }
        }
    }

    /// Multiplies every value by `c` (peaks are left alone).
    pub fn scaled(&self, c: &Rational) -> Valuation {
        match self {
            Valuation::Table(t) => Valuation::Table(t.iter().map(|(b, v)| (*b, v * c)).collect()),
            Valuation::SingleMinded { bundle, value } => Valuation::SingleMinded {
                bundle: *bundle,
                value: value * c,
            },
            Valuation::Additive(vs) => Valuation::Additive(vs.iter().map(|v| v * c).collect()),
            Valuation::SinglePeaked { peak } => Valuation::SinglePeaked { peak: peak.clone() },
        }
    }

    /// The valuation that is zero everywhere, in the same representation.
    pub fn zeroed(&self) -> Valuation {
        self.scaled(&Rational::zero())
    }

    fn check_nonnegative(&self, bidder: usize) -> Result<()> {
        let negative = match self {
            Valuation::Table(t) => t.values().any(|v| v.is_negative()),
            Valuation::SingleMinded { value, .. } => value.is_negative(),
            Valuation::Additive(vs) => vs.iter().any(|v| v.is_negative()),
            Valuation::SinglePeaked { .. } => false,
        };
        if negative {
            Err(Error::input(format!(
                "bidder {bidder}: values must be nonnegative"
            )))
        } else {
            Ok(())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ValuationProfile {
    valuations: Vec<Valuation>,
}

impl ValuationProfile {
    pub fn new(valuations: Vec<Valuation>) -> Self {
        ValuationProfile { valuations }
    }

    /// One scalar (single-item) value per bidder.
    pub fn scalars<I: IntoIterator<Item = Rational>>(values: I) -> Self {
        ValuationProfile::new(values.into_iter().map(Valuation::scalar).collect())
    }

    pub fn valuations(&self) -> &[Valuation] {
        &self.valuations
    }

    pub fn valuation(&self, bidder: usize) -> &Valuation {
        &self.valuations[bidder]
    }

    pub fn num_bidders(&self) -> usize {
        self.valuations.len()
    }

    /// Copy with `bidder`'s report replaced.
    pub fn with_report(&self, bidder: usize, report: Valuation) -> Self {
        let mut p = self.clone();
        p.valuations[bidder] = report;
        p
    }
}

/// `v_bidder(alloc)`.
pub fn value_of(profile: &ValuationProfile, bidder: usize, alloc: &Allocation) -> Result<Rational> {
    if bidder >= profile.num_bidders() || bidder >= alloc.num_bidders() {
        return Err(Error::input(format!("bidder {bidder} out of range")));
    }
    profile
        .valuation(bidder)
        .value(bidder, alloc.bundle(bidder))
}

/// `f(alloc) = sum_i v_i(S_i)`.
pub fn social_welfare(profile: &ValuationProfile, alloc: &Allocation) -> Result<Rational> {
    if profile.num_bidders() != alloc.num_bidders() {
        return Err(Error::input(format!(
            "profile has {} bidders, allocation has {}",
            profile.num_bidders(),
            alloc.num_bidders()
        )));
    }
    (0..profile.num_bidders()).try_fold(Rational::zero(), |acc, i| {
        Ok(acc + value_of(profile, i, alloc)?)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FamilyTag {
    SingleItem,
    SingleMindedCa,
    GapToy,
    NoMoneyLottery,
    SinglePeaked,
}

impl FamilyTag {
    pub const ALL: [FamilyTag; 5] = [
        FamilyTag::SingleItem,
        FamilyTag::SingleMindedCa,
        FamilyTag::GapToy,
        FamilyTag::NoMoneyLottery,
        FamilyTag::SinglePeaked,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FamilyTag::SingleItem => "single-item",
            FamilyTag::SingleMindedCa => "single-minded-ca",
            FamilyTag::GapToy => "gap-toy",
            FamilyTag::NoMoneyLottery => "no-money-lottery",
            FamilyTag::SinglePeaked => "single-peaked",
        }
    }

    pub fn is_auction(self) -> bool {
        matches!(
            self,
            FamilyTag::SingleItem | FamilyTag::SingleMindedCa | FamilyTag::GapToy
        )
    }
}

impl fmt::Display for FamilyTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FamilyTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FamilyTag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown family {s:?}")))
    }
}

/// Feasibility structure of an instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Family {
    /// One item, `m = 1`.
    SingleItem,
    /// Bidder `i` receives exactly `desires[i]` or nothing.
    SingleMindedCa { desires: Vec<Bundle> },
    /// Unit-size, unit-capacity assignment: each bidder gets at most one
    /// machine and each machine hosts at most one bidder.
    GapToy,
    /// One item handed out by a report-independent lottery.
    NoMoneyLottery,
    /// A public position in `0..m` chosen for everyone.
    SinglePeaked,
}

impl Family {
    pub fn tag(&self) -> FamilyTag {
        match self {
            Family::SingleItem => FamilyTag::SingleItem,
            Family::SingleMindedCa { .. } => FamilyTag::SingleMindedCa,
            Family::GapToy => FamilyTag::GapToy,
            Family::NoMoneyLottery => FamilyTag::NoMoneyLottery,
            Family::SinglePeaked => FamilyTag::SinglePeaked,
        }
    }
}

/// A relaxation variable: bidder `bidder` receives `bundle`.
///
/// For the single-peaked family variable `j` is owned by bidder 0 and stands
/// for the public outcome `{j}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Assignment {
    pub bidder: usize,
    pub bundle: Bundle,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    n: usize,
    m: usize,
    family: Family,
    spec: FamilySpec,
    variables: Vec<Assignment>,
}

impl Instance {
    /// Validates the family data and builds the variable index.
    ///
    /// Family constructors in [`crate::instances`] are the usual entry point;
    /// they also run the construction audits.
    pub fn new(n: usize, m: usize, family: Family, spec: FamilySpec) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::input("an instance needs n >= 1 and m >= 1"));
        }
        if m > Bundle::MAX_ITEMS {
            return Err(Error::input(format!(
                "m = {m} exceeds the {} item limit",
                Bundle::MAX_ITEMS
            )));
        }
        let variables: Vec<Assignment> = match &family {
            Family::SingleItem | Family::NoMoneyLottery => {
                if m != 1 {
                    return Err(Error::input(format!(
                        "family {} has exactly one item, got m = {m}",
                        family.tag()
                    )));
                }
                (0..n)
                    .map(|bidder| Assignment {
                        bidder,
                        bundle: Bundle::singleton(0),
                    })
                    .collect()
            }
            Family::SingleMindedCa { desires } => {
                if desires.len() != n {
                    return Err(Error::input(format!(
                        "expected {n} desired bundles, got {}",
                        desires.len()
                    )));
                }
                for (i, d) in desires.iter().enumerate() {
                    if d.is_empty() || !d.is_subset_of(Bundle::full(m)) {
                        return Err(Error::input(format!(
                            "bidder {i}: desired bundle {d} must be a nonempty subset of 0..{m}"
                        )));
                    }
                }
                desires
                    .iter()
                    .enumerate()
                    .map(|(bidder, &bundle)| Assignment { bidder, bundle })
                    .collect()
            }
            Family::GapToy => (0..n)
                .flat_map(|bidder| {
                    (0..m).map(move |j| Assignment {
                        bidder,
                        bundle: Bundle::singleton(j),
                    })
                })
                .collect(),
            Family::SinglePeaked => (0..m)
                .map(|j| Assignment {
                    bidder: 0,
                    bundle: Bundle::singleton(j),
                })
                .collect(),
        };
        Ok(Instance {
            n,
            m,
            family,
            spec,
            variables,
        })
    }

    pub fn num_bidders(&self) -> usize {
        self.n
    }

    pub fn num_items(&self) -> usize {
        self.m
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn tag(&self) -> FamilyTag {
        self.family.tag()
    }

    pub fn spec(&self) -> &FamilySpec {
        &self.spec
    }

    pub fn variables(&self) -> &[Assignment] {
        &self.variables
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    /// Index of the variable for `(bidder, bundle)`, if any.
    pub fn variable(&self, bidder: usize, bundle: Bundle) -> Option<usize> {
        self.variables
            .iter()
            .position(|a| a.bidder == bidder && a.bundle == bundle)
    }

    /// Copy of a single-minded instance with one bidder's desired bundle replaced.
    pub fn with_desire(&self, bidder: usize, bundle: Bundle) -> Result<Instance> {
        match &self.family {
            Family::SingleMindedCa { desires } => {
                let mut desires = desires.clone();
                *desires
                    .get_mut(bidder)
                    .ok_or_else(|| Error::input(format!("bidder {bidder} out of range")))? = bundle;
                Instance::new(
                    self.n,
                    self.m,
                    Family::SingleMindedCa { desires },
                    self.spec.clone(),
                )
            }
            _ => Err(Error::UnsupportedFamily(self.tag().to_string())),
        }
    }

    /// Indicator embedding `chi(alloc)` into the relaxation's variable space.
    pub fn indicator(&self, alloc: &Allocation) -> Vec<Rational> {
        self.variables
            .iter()
            .map(|a| {
                if alloc.bundles.get(a.bidder) == Some(&a.bundle) {
                    rational::one()
                } else {
                    Rational::zero()
                }
            })
            .collect()
    }

    /// Membership in the family's feasible set.
    pub fn is_feasible(&self, alloc: &Allocation) -> bool {
        if alloc.num_bidders() != self.n {
            return false;
        }
        let all = Bundle::full(self.m);
        if !alloc.bundles.iter().all(|b| b.is_subset_of(all)) {
            return false;
        }
        match &self.family {
            Family::SingleItem | Family::NoMoneyLottery => {
                alloc.pairwise_disjoint() && alloc.bundles.iter().all(|b| b.len() <= 1)
            }
            Family::SingleMindedCa { desires } => {
                alloc.pairwise_disjoint()
                    && alloc
                        .bundles
                        .iter()
                        .zip(desires)
                        .all(|(b, d)| b.is_empty() || b == d)
            }
            Family::GapToy => {
                alloc.pairwise_disjoint() && alloc.bundles.iter().all(|b| b.len() <= 1)
            }
            Family::SinglePeaked => {
                let first = alloc.bundles[0];
                first.len() == 1 && alloc.bundles.iter().all(|b| *b == first)
            }
        }
    }

    /// Upper bound on `|S|` used to refuse oversized enumerations up front.
    pub fn feasible_count_estimate(&self) -> u128 {
        let n = self.n as u32;
        match &self.family {
            Family::SingleItem | Family::NoMoneyLottery => self.n as u128 + 1,
            Family::SingleMindedCa { .. } => 1u128.checked_shl(n).unwrap_or(u128::MAX),
            Family::GapToy => (self.m as u128 + 1).checked_pow(n).unwrap_or(u128::MAX),
            Family::SinglePeaked => self.m as u128,
        }
    }

    /// Checks that `profile` fits this instance: one valuation per bidder,
    /// nonnegative values, a representation compatible with the family, and
    /// integer peaks inside `0..m` for single-peaked bidders.
    pub fn validate_profile(&self, profile: &ValuationProfile) -> Result<()> {
        if profile.num_bidders() != self.n {
            return Err(Error::input(format!(
                "profile has {} valuations, instance has {} bidders",
                profile.num_bidders(),
                self.n
            )));
        }
        let all = Bundle::full(self.m);
        for (i, v) in profile.valuations.iter().enumerate() {
            v.check_nonnegative(i)?;
            let peaked = matches!(v, Valuation::SinglePeaked { .. });
            if peaked != (self.tag() == FamilyTag::SinglePeaked) {
                return Err(Error::input(format!(
                    "bidder {i}: representation does not match family {}",
                    self.tag()
                )));
            }
            match v {
                Valuation::Table(t) => {
                    if let Some(b) = t.keys().find(|b| !b.is_subset_of(all)) {
                        return Err(Error::input(format!(
                            "bidder {i}: bundle {b} mentions an item outside 0..{}",
                            self.m
                        )));
                    }
                }
                Valuation::SingleMinded { bundle, .. } => {
                    if bundle.is_empty() || !bundle.is_subset_of(all) {
                        return Err(Error::input(format!(
                            "bidder {i}: desired bundle {bundle} must be a nonempty subset of 0..{}",
                            self.m
                        )));
                    }
                }
                Valuation::Additive(vs) => {
                    if vs.len() != self.m {
                        return Err(Error::input(format!(
                            "bidder {i}: expected {} additive values, got {}",
                            self.m,
                            vs.len()
                        )));
                    }
                }
                Valuation::SinglePeaked { peak } => {
                    let ok = peak.is_integer()
                        && !peak.is_negative()
                        && peak < &rational::int(self.m as i64);
                    if !ok {
                        return Err(Error::input(format!(
                            "bidder {i}: peak {} must be an integer position in 0..{}",
                            rational::format(peak),
                            self.m
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Enumerates the feasible set with the default size bound.
pub fn enumerate_feasible(instance: &Instance) -> Result<Vec<Allocation>> {
    enumerate_feasible_bounded(instance, DEFAULT_ENUMERATION_BOUND)
}

/// Complete, duplicate-free list of feasible allocations in [`Allocation`]
/// order. Includes the all-empty allocation except for the single-peaked
/// family, whose outcome set has no "nothing" option.
pub fn enumerate_feasible_bounded(instance: &Instance, bound: usize) -> Result<Vec<Allocation>> {
    let estimate = instance.feasible_count_estimate();
    if estimate > bound as u128 {
        return Err(Error::EnumerationTooLarge { estimate, bound });
    }
    let n = instance.n;
    let mut out = Vec::new();
    match &instance.family {
        Family::SingleItem | Family::NoMoneyLottery => {
            out.push(Allocation::empty(n));
            out.extend((0..n).map(|i| Allocation::single(n, i, Bundle::singleton(0))));
        }
        Family::SingleMindedCa { desires } => {
            for mask in 0u64..(1u64 << n) {
                let bundles: Vec<Bundle> = desires
                    .iter()
                    .enumerate()
                    .map(|(i, d)| {
                        if mask >> i & 1 == 1 {
                            *d
                        } else {
                            Bundle::empty()
                        }
                    })
                    .collect();
                let a = Allocation::new(bundles);
                if a.pairwise_disjoint() {
                    out.push(a);
                }
            }
        }
        Family::GapToy => {
            fn assign(
                i: usize,
                used: Bundle,
                cur: &mut Vec<Bundle>,
                m: usize,
                out: &mut Vec<Allocation>,
            ) {
                if i == cur.len() {
                    out.push(Allocation::new(cur.clone()));
                    return;
                }
                assign(i + 1, used, cur, m, out);
                for j in 0..m {
                    let b = Bundle::singleton(j);
                    if b.is_disjoint(used) {
                        cur[i] = b;
                        assign(i + 1, used.union(b), cur, m, out);
                        cur[i] = Bundle::empty();
                    }
                }
            }
            let mut cur = vec![Bundle::empty(); n];
            assign(0, Bundle::empty(), &mut cur, instance.m, &mut out);
        }
        Family::SinglePeaked => {
            out.extend((0..instance.m).map(|j| Allocation::new(vec![Bundle::singleton(j); n])));
        }
    }
    out.sort();
    Ok(out)
}
