//! Exact rational simplex over explicit polytopes `{x >= 0 : A x <= b}`.
//!
//! Both entry points pivot with Bland's rule (lowest-index improving column
//! enters, lowest-index basic variable leaves among ratio ties), which makes
//! them terminate and makes every result a deterministic function of the
//! input. The tableau is dense but pivots skip zero entries, which keeps the
//! bound-heavy lifted programs of the concave relaxation cheap.

use num_traits::{Signed, Zero};

use crate::error::{Error, Result};
use crate::rational::Rational;

/// One row `coeffs . x <= bound`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Constraint {
    pub coeffs: Vec<Rational>,
    pub bound: Rational,
}

impl Constraint {
    pub fn new(coeffs: Vec<Rational>, bound: Rational) -> Self {
        Constraint { coeffs, bound }
    }

    fn lhs(&self, x: &[Rational]) -> Rational {
        self.coeffs
            .iter()
            .zip(x)
            .filter(|(a, _)| !a.is_zero())
            .fold(Rational::zero(), |acc, (a, v)| acc + a * v)
    }
}

/// `P = {x >= 0 : A x <= b}` with `b >= 0`, so the origin is always in `P`.
///
/// `is_packing` holds when every coefficient is nonnegative, which makes `P`
/// closed downward.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Polytope {
    num_vars: usize,
    constraints: Vec<Constraint>,
    packing: bool,
}

impl Polytope {
    pub fn new(num_vars: usize, constraints: Vec<Constraint>) -> Result<Self> {
        for (k, c) in constraints.iter().enumerate() {
            if c.coeffs.len() != num_vars {
                return Err(Error::input(format!(
                    "constraint {k} has {} coefficients, expected {num_vars}",
                    c.coeffs.len()
                )));
            }
            if c.bound.is_negative() {
                return Err(Error::input(format!("constraint {k} has a negative bound")));
            }
        }
        let packing = constraints
            .iter()
            .all(|c| c.coeffs.iter().all(|a| !a.is_negative()));
        Ok(Polytope {
            num_vars,
            constraints,
            packing,
        })
    }

    /// Like [`Polytope::new`] but rejects negative coefficients.
    pub fn packing(num_vars: usize, constraints: Vec<Constraint>) -> Result<Self> {
        let p = Polytope::new(num_vars, constraints)?;
        if !p.packing {
            return Err(Error::input(
                "packing polytopes need nonnegative coefficients",
            ));
        }
        Ok(p)
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn is_packing(&self) -> bool {
        self.packing
    }
}

/// A nonnegative rational point.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FractionalPoint(Vec<Rational>);

impl FractionalPoint {
    pub fn new(coords: Vec<Rational>) -> Result<Self> {
        if let Some(k) = coords.iter().position(|c| c.is_negative()) {
            return Err(Error::input(format!("coordinate {k} is negative")));
        }
        Ok(FractionalPoint(coords))
    }

    pub fn origin(dim: usize) -> Self {
        FractionalPoint(vec![Rational::zero(); dim])
    }

    pub fn coords(&self) -> &[Rational] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_coords(self) -> Vec<Rational> {
        self.0
    }

    pub fn dot(&self, w: &[Rational]) -> Rational {
        self.0
            .iter()
            .zip(w)
            .fold(Rational::zero(), |acc, (x, c)| acc + x * c)
    }
}

/// `x >= 0` and `A x <= b`, exactly.
pub fn contains(poly: &Polytope, x: &FractionalPoint) -> Result<bool> {
    if x.dim() != poly.num_vars {
        return Err(Error::input(format!(
            "point has dimension {}, polytope has {}",
            x.dim(),
            poly.num_vars
        )));
    }
    Ok(poly
        .constraints
        .iter()
        .all(|c| c.lhs(x.coords()) <= c.bound))
}

/// Maximizes `objective . x` over `poly`, returning an optimal vertex and its value.
pub fn maximize_linear(
    objective: &[Rational],
    poly: &Polytope,
) -> Result<(FractionalPoint, Rational)> {
    let n = poly.num_vars;
    if objective.len() != n {
        return Err(Error::input(format!(
            "objective has {} entries, polytope has {n} variables",
            objective.len()
        )));
    }
    let rows = poly.constraints.len();
    let cols = n + rows;
    let mut t = Tableau {
        rows: poly
            .constraints
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let mut row = c.coeffs.clone();
                row.resize(cols, Rational::zero());
                row[n + i] = Rational::from_integer(1.into());
                row
            })
            .collect(),
        rhs: poly.constraints.iter().map(|c| c.bound.clone()).collect(),
        basis: (n..cols).collect(),
        reduced: {
            let mut r = objective.to_vec();
            r.resize(cols, Rational::zero());
            r
        },
        value: Rational::zero(),
    };
    t.optimize().map_err(|Unbounded| Error::UnboundedLp)?;
    let x = t.primal(n);
    Ok((FractionalPoint(x), t.value))
}

/// Outcome of phase one on an equality system.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PhaseOne {
    /// A basic nonnegative solution.
    Feasible(Vec<Rational>),
    /// Minimum total artificial infeasibility (strictly positive).
    Infeasible { residual: Rational },
}

/// Phase-one simplex for `{lambda >= 0 : E lambda = d}`.
pub fn phase_one(equalities: &[(Vec<Rational>, Rational)], nonneg_vars: usize) -> Result<PhaseOne> {
    for (k, (row, _)) in equalities.iter().enumerate() {
        if row.len() != nonneg_vars {
            return Err(Error::input(format!(
                "equality {k} has {} coefficients, expected {nonneg_vars}",
                row.len()
            )));
        }
    }
    let rows = equalities.len();
    let cols = nonneg_vars + rows;
    let mut tab_rows = Vec::with_capacity(rows);
    let mut rhs = Vec::with_capacity(rows);
    for (i, (row, d)) in equalities.iter().enumerate() {
        let flip = d.is_negative();
        let mut r: Vec<Rational> = row
            .iter()
            .map(|a| if flip { -a } else { a.clone() })
            .collect();
        r.resize(cols, Rational::zero());
        r[nonneg_vars + i] = Rational::from_integer(1.into());
        tab_rows.push(r);
        rhs.push(if flip { -d } else { d.clone() });
    }
    // maximize -sum(artificials); reduced cost of an original column is its column sum.
    let mut reduced = vec![Rational::zero(); cols];
    for r in &tab_rows {
        for (j, a) in r.iter().take(nonneg_vars).enumerate() {
            if !a.is_zero() {
                reduced[j] += a;
            }
        }
    }
    let value = -rhs.iter().fold(Rational::zero(), |acc, d| acc + d);
    let mut t = Tableau {
        rows: tab_rows,
        rhs,
        basis: (nonneg_vars..cols).collect(),
        reduced,
        value,
    };
    t.optimize()
        .expect("phase one is bounded by the zero objective");
    if t.value.is_negative() {
        return Ok(PhaseOne::Infeasible { residual: -t.value });
    }
    Ok(PhaseOne::Feasible(t.primal(nonneg_vars)))
}

/// A nonnegative solution of the equality system, or `None` when infeasible.
pub fn solve_feasibility(
    equalities: &[(Vec<Rational>, Rational)],
    nonneg_vars: usize,
) -> Result<Option<Vec<Rational>>> {
    Ok(match phase_one(equalities, nonneg_vars)? {
        PhaseOne::Feasible(x) => Some(x),
        PhaseOne::Infeasible { .. } => None,
    })
}

#[derive(Debug)]
struct Unbounded;

struct Tableau {
    rows: Vec<Vec<Rational>>,
    rhs: Vec<Rational>,
    basis: Vec<usize>,
    /// Reduced costs of a maximization; positive entries improve.
    reduced: Vec<Rational>,
    value: Rational,
}

impl Tableau {
    fn optimize(&mut self) -> std::result::Result<(), Unbounded> {
        while let Some(col) = self.reduced.iter().position(|r| r.is_positive()) {
            let mut leave: Option<(usize, Rational)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                let a = &row[col];
                if !a.is_positive() {
                    continue;
                }
                let ratio = &self.rhs[i] / a;
                let better = match &leave {
                    None => true,
                    Some((best_i, best)) => {
                        ratio < *best || (ratio == *best && self.basis[i] < self.basis[*best_i])
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
            let (row, _) = leave.ok_or(Unbounded)?;
            self.pivot(row, col);
        }
        Ok(())
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let piv = self.rows[r][c].clone();
        let support: Vec<usize> = self.rows[r]
            .iter()
            .enumerate()
            .filter(|(_, a)| !a.is_zero())
            .map(|(j, _)| j)
            .collect();
        for &j in &support {
            self.rows[r][j] /= &piv;
        }
        self.rhs[r] /= &piv;
        let (pivot_row, pivot_rhs) = (self.rows[r].clone(), self.rhs[r].clone());
        for i in 0..self.rows.len() {
            if i == r || self.rows[i][c].is_zero() {
                continue;
            }
            let f = self.rows[i][c].clone();
            for &j in &support {
                let delta = &f * &pivot_row[j];
                self.rows[i][j] -= delta;
            }
            self.rhs[i] -= &f * &pivot_rhs;
        }
        if !self.reduced[c].is_zero() {
            let f = self.reduced[c].clone();
            for &j in &support {
                let delta = &f * &pivot_row[j];
                self.reduced[j] -= delta;
            }
            self.value += &f * &pivot_rhs;
        }
        self.basis[r] = c;
    }

    fn primal(&self, n: usize) -> Vec<Rational> {
        let mut x = vec![Rational::zero(); n];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < n {
                x[b] = self.rhs[i].clone();
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    fn row(coeffs: &[i64], bound: i64) -> Constraint {
        Constraint::new(coeffs.iter().map(|&c| int(c)).collect(), int(bound))
    }

    fn ints(v: &[i64]) -> Vec<Rational> {
        v.iter().map(|&c| int(c)).collect()
    }

    #[test]
    fn box_maximum() {
        let p = Polytope::packing(2, vec![row(&[1, 0], 1), row(&[0, 1], 1)]).unwrap();
        let (x, v) = maximize_linear(&ints(&[1, 2]), &p).unwrap();
        assert_eq!(x.coords(), &ints(&[1, 1])[..]);
        assert_eq!(v, int(3));
    }

    #[test]
    fn single_item_lp_picks_highest_coefficient() {
        let p = Polytope::packing(2, vec![row(&[1, 1], 1)]).unwrap();
        let (x, v) = maximize_linear(&ints(&[5, 3]), &p).unwrap();
        assert_eq!(x.coords(), &ints(&[1, 0])[..]);
        assert_eq!(v, int(5));
        let (x, _) = maximize_linear(&ints(&[3, 5]), &p).unwrap();
        assert_eq!(x.coords(), &ints(&[0, 1])[..]);
    }

    #[test]
    fn ties_go_to_the_lowest_index() {
        let p = Polytope::packing(3, vec![row(&[1, 1, 1], 1)]).unwrap();
        let (x, _) = maximize_linear(&ints(&[4, 4, 4]), &p).unwrap();
        assert_eq!(x.coords(), &ints(&[1, 0, 0])[..]);
        let (x, _) = maximize_linear(&ints(&[0, 4, 4]), &p).unwrap();
        assert_eq!(x.coords(), &ints(&[0, 1, 0])[..]);
    }

    #[test]
    fn zero_objective_stays_at_origin() {
        let p = Polytope::packing(2, vec![row(&[1, 1], 1)]).unwrap();
        let (x, v) = maximize_linear(&ints(&[0, 0]), &p).unwrap();
        assert_eq!(x, FractionalPoint::origin(2));
        assert_eq!(v, int(0));
    }

    #[test]
    fn unbounded_and_mismatched_inputs_error() {
        let p = Polytope::new(2, vec![row(&[1, 0], 1)]).unwrap();
        assert_eq!(maximize_linear(&ints(&[0, 1]), &p), Err(Error::UnboundedLp));
        assert!(matches!(
            maximize_linear(&ints(&[1]), &p),
            Err(Error::Input(_))
        ));
        assert!(Polytope::new(2, vec![row(&[1], 1)]).is_err());
        assert!(Polytope::new(1, vec![row(&[1], -1)]).is_err());
        assert!(Polytope::packing(2, vec![row(&[1, -1], 1)]).is_err());
    }

    #[test]
    fn membership_is_exact() {
        let p = Polytope::packing(2, vec![row(&[1, 1], 1)]).unwrap();
        let half = FractionalPoint::new(vec![ratio(1, 2), ratio(1, 2)]).unwrap();
        let over = FractionalPoint::new(vec![ratio(3, 5), ratio(1, 2)]).unwrap();
        assert!(contains(&p, &half).unwrap());
        assert!(!contains(&p, &over).unwrap());
        assert!(contains(&p, &FractionalPoint::origin(2)).unwrap());
        assert!(contains(&p, &FractionalPoint::origin(3)).is_err());
        assert!(FractionalPoint::new(vec![int(-1)]).is_err());
    }

    #[test]
    fn feasibility_examples() {
        let sys = vec![(ints(&[1, 1]), int(1)), (ints(&[1, -1]), int(0))];
        assert_eq!(
            solve_feasibility(&sys, 2).unwrap(),
            Some(vec![ratio(1, 2), ratio(1, 2)])
        );
        let sys = vec![(ints(&[1, 1]), int(1)), (ints(&[1, 0]), int(2))];
        assert_eq!(solve_feasibility(&sys, 2).unwrap(), None);
        match phase_one(&sys, 2).unwrap() {
            PhaseOne::Infeasible { residual } => assert!(residual.is_positive()),
            other => panic!("expected infeasible, got {other:?}"),
        }
        assert_eq!(
            solve_feasibility(&[(ints(&[1]), int(1))], 1).unwrap(),
            Some(ints(&[1]))
        );
        assert!(solve_feasibility(&[(ints(&[1, 2]), int(1))], 1).is_err());
    }

    /// Brute-force vertex enumeration: intersect every `n`-subset of the
    /// constraint hyperplanes (including `x_j = 0`), keep feasible unique
    /// solutions, and report the best objective value.
    fn vertex_oracle(objective: &[Rational], p: &Polytope) -> Rational {
        let n = p.num_vars();
        let mut planes: Vec<(Vec<Rational>, Rational)> = p
            .constraints()
            .iter()
            .map(|c| (c.coeffs.clone(), c.bound.clone()))
            .collect();
        for j in 0..n {
            let mut e = vec![Rational::zero(); n];
            e[j] = int(1);
            planes.push((e, Rational::zero()));
        }
        let mut best: Option<Rational> = None;
        let k = planes.len();
        for mask in 0u32..(1 << k) {
            if mask.count_ones() as usize != n {
                continue;
            }
            let sys: Vec<_> = (0..k)
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| planes[i].clone())
                .collect();
            let Some(x) = gauss_unique(sys, n) else {
                continue;
            };
            let Ok(pt) = FractionalPoint::new(x) else {
                continue;
            };
            if !contains(p, &pt).unwrap() {
                continue;
            }
            let v = pt.dot(objective);
            if best.as_ref().is_none_or(|b| v > *b) {
                best = Some(v);
            }
        }
        best.expect("origin is always a vertex")
    }

    fn gauss_unique(mut sys: Vec<(Vec<Rational>, Rational)>, n: usize) -> Option<Vec<Rational>> {
        for col in 0..n {
            let piv = (col..n).find(|&r| !sys[r].0[col].is_zero())?;
            sys.swap(col, piv);
            let (prow, pb) = sys[col].clone();
            for r in 0..n {
                if r != col && !sys[r].0[col].is_zero() {
                    let f = &sys[r].0[col] / &prow[col];
                    for j in 0..n {
                        let d = &f * &prow[j];
                        sys[r].0[j] -= d;
                    }
                    sys[r].1 -= &f * &pb;
                }
            }
        }
        Some((0..n).map(|i| &sys[i].1 / &sys[i].0[i]).collect())
    }

    proptest::proptest! {
        #[test]
        fn simplex_matches_vertex_enumeration(
            n in 1usize..=4,
            rows in proptest::collection::vec((proptest::collection::vec(0i64..4, 4), 0i64..6), 1..=4),
            obj in proptest::collection::vec(0i64..6, 4),
        ) {
            let mut cons: Vec<Constraint> = rows
                .iter()
                .map(|(c, b)| Constraint::new(c[..n].iter().map(|&a| int(a)).collect(), int(*b)))
                .collect();
            // keep the polytope bounded
            cons.push(Constraint::new(vec![int(1); n], int(3)));
            let p = Polytope::packing(n, cons).unwrap();
            let objective: Vec<Rational> = obj[..n].iter().map(|&c| int(c)).collect();
            let (x, v) = maximize_linear(&objective, &p).unwrap();
            proptest::prop_assert!(contains(&p, &x).unwrap());
            proptest::prop_assert_eq!(&x.dot(&objective), &v);
            proptest::prop_assert_eq!(v, vertex_oracle(&objective, &p));
            let again = maximize_linear(&objective, &p).unwrap();
            proptest::prop_assert_eq!(again.0, x);
        }

        #[test]
        fn feasible_solutions_satisfy_the_system(
            cols in proptest::collection::vec(proptest::collection::vec(0i64..3, 3), 1..=5),
            weights in proptest::collection::vec(0i64..4, 5),
        ) {
            // Right-hand side built from a known nonnegative combination.
            let k = cols.len();
            let rhs: Vec<Rational> = (0..3)
                .map(|r| (0..k).fold(int(0), |acc, j| acc + int(cols[j][r] * weights[j])))
                .collect();
            let sys: Vec<(Vec<Rational>, Rational)> = (0..3)
                .map(|r| ((0..k).map(|j| int(cols[j][r])).collect(), rhs[r].clone()))
                .collect();
            let lam = solve_feasibility(&sys, k).unwrap().expect("constructed feasible");
            for (row, d) in &sys {
                let lhs = row.iter().zip(&lam).fold(int(0), |acc, (a, l)| acc + a * l);
                proptest::prop_assert_eq!(&lhs, d);
            }
            proptest::prop_assert!(lam.iter().all(|l| !l.is_negative()));
            proptest::prop_assert!(lam.iter().filter(|l| !l.is_zero()).count() <= sys.len());
        }
    }
}
