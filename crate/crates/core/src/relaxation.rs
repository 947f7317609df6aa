//! The relaxed problem: a relaxed objective `L` over a packing polytope `P`.

use num_traits::{Signed, Zero};

use crate::error::{Error, Result};
use crate::lp::{self, Constraint, FractionalPoint, Polytope};
use crate::model::{
    enumerate_feasible, social_welfare, Allocation, Family, Instance, ValuationProfile,
};
use crate::rational::{self, int, ratio, Rational};

/// Nondecreasing concave piecewise-linear curve on `[0, 1]` with `curve(0) = 0`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConcaveCurve {
    knots: Vec<(Rational, Rational)>,
}

impl ConcaveCurve {
    pub fn new(knots: Vec<(Rational, Rational)>) -> Result<Self> {
        let bad = |m: &str| Err(Error::input(format!("concave curve: {m}")));
        if knots.len() < 2 {
            return bad("needs at least two knots");
        }
        if !knots[0].0.is_zero() || !knots[0].1.is_zero() {
            return bad("must start at (0, 0)");
        }
        if knots.last().unwrap().0 != rational::one() {
            return bad("must end at t = 1");
        }
        let mut prev_slope: Option<Rational> = None;
        for w in knots.windows(2) {
            let width = &w[1].0 - &w[0].0;
            if !width.is_positive() {
                return bad("knots must be strictly increasing");
            }
            let slope = (&w[1].1 - &w[0].1) / width;
            if slope.is_negative() {
                return bad("must be nondecreasing");
            }
            if prev_slope.as_ref().is_some_and(|p| slope > *p) {
                return bad("slopes must be nonincreasing");
            }
            prev_slope = Some(slope);
        }
        Ok(ConcaveCurve { knots })
    }

    /// Secant interpolation of `f` at `segments` equally spaced breakpoints.
    pub fn secant(f: impl Fn(&Rational) -> Rational, segments: usize) -> Result<Self> {
        if segments == 0 {
            return Err(Error::input("need at least one segment"));
        }
        let knots = (0..=segments)
            .map(|k| {
                let t = ratio(k as i64, segments as i64);
                let v = f(&t);
                (t, v)
            })
            .collect();
        ConcaveCurve::new(knots)
    }

    /// Secant of `t (2 - t) / divisor`.
    pub fn saturating(divisor: Rational, segments: usize) -> Result<Self> {
        if !divisor.is_positive() {
            return Err(Error::input("divisor must be positive"));
        }
        ConcaveCurve::secant(|t| t * (int(2) - t) / &divisor, segments)
    }

    pub fn knots(&self) -> &[(Rational, Rational)] {
        &self.knots
    }

    /// `(width, slope)` of each linear piece, left to right.
    pub fn pieces(&self) -> Vec<(Rational, Rational)> {
        self.knots
            .windows(2)
            .map(|w| {
                let width = &w[1].0 - &w[0].0;
                let slope = (&w[1].1 - &w[0].1) / &width;
                (width, slope)
            })
            .collect()
    }

    /// Value at `t`, extending the last piece linearly past 1.
    pub fn value(&self, t: &Rational) -> Rational {
        let k = self
            .knots
            .windows(2)
            .position(|w| *t <= w[1].0)
            .unwrap_or(self.knots.len() - 2);
        let (t0, v0) = &self.knots[k];
        let (t1, v1) = &self.knots[k + 1];
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    /// The `t` with `value(t) = y`, when the curve is strictly increasing there.
    pub fn inverse(&self, y: &Rational) -> Option<Rational> {
        if y.is_negative() {
            return None;
        }
        for w in self.knots.windows(2) {
            let (t0, v0) = &w[0];
            let (t1, v1) = &w[1];
            if y <= v1 {
                if v1 == v0 {
                    return (y == v0).then(|| t0.clone());
                }
                return Some(t0 + (t1 - t0) * (y - v0) / (v1 - v0));
            }
        }
        None
    }

    /// Largest gap `f(mid) - curve(mid)` over piece midpoints; for a
    /// quadratic `f` this is the exact worst-case secant error.
    pub fn secant_error(&self, f: impl Fn(&Rational) -> Rational) -> Rational {
        self.knots
            .windows(2)
            .map(|w| {
                let mid = (&w[0].0 + &w[1].0) / int(2);
                f(&mid) - self.value(&mid)
            })
            .max()
            .unwrap_or_else(Rational::zero)
    }
}

/// `L(x) = sum_v w_v * phi(x_v)` where `phi` is the identity (linear `L`) or
/// a family concave curve. Variable `v` belongs to bidder `owners[v]`, so
/// `L = sum_i L_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct RelaxedObjective {
    weights: Vec<Rational>,
    curve: Option<ConcaveCurve>,
    alpha: Rational,
    owners: Vec<usize>,
    num_bidders: usize,
}

impl RelaxedObjective {
    pub fn new(
        weights: Vec<Rational>,
        curve: Option<ConcaveCurve>,
        alpha: Rational,
        owners: Vec<usize>,
        num_bidders: usize,
    ) -> Result<Self> {
        if !alpha.is_positive() || alpha > rational::one() {
            return Err(Error::input("alpha must lie in (0, 1]"));
        }
        if weights.len() != owners.len() {
            return Err(Error::input("every variable needs exactly one owner"));
        }
        if owners.iter().any(|&o| o >= num_bidders) {
            return Err(Error::input("variable owner out of range"));
        }
        Ok(RelaxedObjective {
            weights,
            curve,
            alpha,
            owners,
            num_bidders,
        })
    }

    pub fn weights(&self) -> &[Rational] {
        &self.weights
    }

    pub fn curve(&self) -> Option<&ConcaveCurve> {
        self.curve.as_ref()
    }

    pub fn is_linear(&self) -> bool {
        self.curve.is_none()
    }

    pub fn alpha(&self) -> &Rational {
        &self.alpha
    }

    pub fn owners(&self) -> &[usize] {
        &self.owners
    }

    pub fn num_bidders(&self) -> usize {
        self.num_bidders
    }

    pub fn num_vars(&self) -> usize {
        self.weights.len()
    }

    fn term(&self, v: usize, t: &Rational) -> Rational {
        match &self.curve {
            None => &self.weights[v] * t,
            Some(c) => &self.weights[v] * c.value(t),
        }
    }

    pub fn evaluate(&self, x: &FractionalPoint) -> Rational {
        x.coords()
            .iter()
            .enumerate()
            .fold(Rational::zero(), |acc, (v, t)| acc + self.term(v, t))
    }

    /// `L_i(x)`.
    pub fn bidder_part(&self, bidder: usize, x: &FractionalPoint) -> Rational {
        x.coords()
            .iter()
            .enumerate()
            .filter(|(v, _)| self.owners[*v] == bidder)
            .fold(Rational::zero(), |acc, (v, t)| acc + self.term(v, t))
    }
}

/// The family polytope `P`. Depends on the instance only.
pub fn polytope_for(instance: &Instance) -> Result<Polytope> {
    let n = instance.num_bidders();
    let m = instance.num_items();
    let vars = instance.variables();
    let dim = vars.len();
    let row = |pick: &dyn Fn(usize) -> bool| -> Constraint {
        Constraint::new(
            (0..dim)
                .map(|v| if pick(v) { int(1) } else { int(0) })
                .collect(),
            int(1),
        )
    };
    let rows = match instance.family() {
        Family::SingleItem | Family::NoMoneyLottery | Family::SinglePeaked => vec![row(&|_| true)],
        Family::SingleMindedCa { .. } | Family::GapToy => {
            let mut rows: Vec<Constraint> = (0..n).map(|i| row(&|v| vars[v].bidder == i)).collect();
            rows.extend((0..m).map(|j| row(&|v| vars[v].bundle.contains(j))));
            rows
        }
    };
    Polytope::packing(dim, rows)
}

/// Builds `(L, P)` for a reported profile.
///
/// Bundle-indexed variables get coefficient `v_i(S)`. Single-item and
/// single-minded instances get a linear `L`; the gap toy weights each
/// variable's concave curve by the same coefficient.
pub fn build_relaxation(
    instance: &Instance,
    profile: &ValuationProfile,
) -> Result<(RelaxedObjective, Polytope)> {
    if !instance.tag().is_auction() && instance.tag() != crate::model::FamilyTag::NoMoneyLottery {
        return Err(Error::UnsupportedFamily(instance.tag().to_string()));
    }
    instance.validate_profile(profile)?;
    let weights = instance
        .variables()
        .iter()
        .map(|a| profile.valuation(a.bidder).value(a.bidder, a.bundle))
        .collect::<Result<Vec<_>>>()?;
    let owners = instance.variables().iter().map(|a| a.bidder).collect();
    let spec = instance.spec();
    let objective = RelaxedObjective::new(
        weights,
        spec.curve.clone(),
        spec.alpha.clone(),
        owners,
        instance.num_bidders(),
    )?;
    Ok((objective, polytope_for(instance)?))
}

/// `x* = argmax_{x in P} L(x)`.
pub fn solve_relaxation(objective: &RelaxedObjective, poly: &Polytope) -> Result<FractionalPoint> {
    Ok(maximize(objective, poly)?.0)
}

/// `x*` together with `L(x*)`.
///
/// A concave objective is solved as a linear program over piece variables
/// `y_{v,k} in [0, width_k]` with `x_v = sum_k y_{v,k}`. Slopes decrease
/// along each curve, so optimal solutions fill the pieces left to right and
/// the program's value is `L(x*)` exactly.
pub fn maximize(
    objective: &RelaxedObjective,
    poly: &Polytope,
) -> Result<(FractionalPoint, Rational)> {
    if objective.num_vars() != poly.num_vars() {
        return Err(Error::input(format!(
            "objective has {} variables, polytope has {}",
            objective.num_vars(),
            poly.num_vars()
        )));
    }
    let Some(curve) = objective.curve() else {
        return lp::maximize_linear(objective.weights(), poly);
    };
    let pieces = curve.pieces();
    let k = pieces.len();
    let dim = poly.num_vars();
    let lifted_dim = dim * k;
    let mut rows: Vec<Constraint> = poly
        .constraints()
        .iter()
        .map(|c| {
            Constraint::new(
                (0..lifted_dim).map(|u| c.coeffs[u / k].clone()).collect(),
                c.bound.clone(),
            )
        })
        .collect();
    for u in 0..lifted_dim {
        let mut coeffs = vec![Rational::zero(); lifted_dim];
        coeffs[u] = rational::one();
        rows.push(Constraint::new(coeffs, pieces[u % k].0.clone()));
    }
    let lifted = Polytope::new(lifted_dim, rows)?;
    let lifted_objective: Vec<Rational> = (0..lifted_dim)
        .map(|u| &objective.weights()[u / k] * &pieces[u % k].1)
        .collect();
    let (y, value) = lp::maximize_linear(&lifted_objective, &lifted)?;
    let x = FractionalPoint::new(
        (0..dim)
            .map(|v| y.coords()[v * k..(v + 1) * k].iter().sum())
            .collect(),
    )?;
    debug_assert_eq!(objective.evaluate(&x), value);
    Ok((x, value))
}

/// `L^{-k}`: the objective of the market without bidder `k`.
pub fn residual_objective(objective: &RelaxedObjective, bidder: usize) -> Result<RelaxedObjective> {
    if bidder >= objective.num_bidders() {
        return Err(Error::input(format!(
            "bidder {bidder} out of range for {} bidders",
            objective.num_bidders()
        )));
    }
    let mut out = objective.clone();
    for (w, &o) in out.weights.iter_mut().zip(&objective.owners) {
        if o == bidder {
            *w = Rational::zero();
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlphaCounterexample {
    pub allocation: Allocation,
    /// `L(chi(s))`
    pub relaxed: Rational,
    /// `alpha f(s)`, or `f(s)` when equality was required.
    pub target: Rational,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlphaAudit {
    pub checked: usize,
    /// Whether `L(chi(s)) = f(s)` was required (linear objectives).
    pub equality_required: bool,
    pub counterexample: Option<AlphaCounterexample>,
}

impl AlphaAudit {
    pub fn passed(&self) -> bool {
        self.counterexample.is_none()
    }
}

/// Checks `L(chi(s)) >= alpha f(s)` on every feasible `s`, and for linear
/// objectives the stronger `L(chi(s)) = f(s)`.
pub fn audit_alpha(
    objective: &RelaxedObjective,
    instance: &Instance,
    profile: &ValuationProfile,
) -> Result<AlphaAudit> {
    let feasible = enumerate_feasible(instance)?;
    let equality_required = objective.is_linear();
    for s in &feasible {
        let chi = FractionalPoint::new(instance.indicator(s))?;
        let relaxed = objective.evaluate(&chi);
        let welfare = social_welfare(profile, s)?;
        let ok = if equality_required {
            relaxed == welfare
        } else {
            relaxed >= objective.alpha() * &welfare
        };
        if !ok {
            let target = if equality_required {
                welfare
            } else {
                objective.alpha() * welfare
            };
            return Ok(AlphaAudit {
                checked: feasible.len(),
                equality_required,
                counterexample: Some(AlphaCounterexample {
                    allocation: s.clone(),
                    relaxed,
                    target,
                }),
            });
        }
    }
    Ok(AlphaAudit {
        checked: feasible.len(),
        equality_required,
        counterexample: None,
    })
}
