//! Boxes, zonotopes and H-polytopes with the set operations the tube controller needs.

mod rpi;
mod terminal;

pub use rpi::{compute_rpi, rpi_slack, RpiMethod, RpiOptions, RpiSet};
pub use terminal::{compute_terminal_set, invariance_slack, TerminalOptions};

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::optim::{solve_lp, LpProblem, LpStatus, VertexWalker};

pub trait Support {
    fn dim(&self) -> usize;
    /// `max d'x` over the set.
    fn support(&self, d: &Vector) -> Result<f64>;
}

fn check_dim(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { what, expected, found })
    }
}

fn unit(n: usize, i: usize, sign: f64) -> Vector {
    let mut e = Vector::zeros(n);
    e[i] = sign;
    e
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperbox {
    lower: Vector,
    upper: Vector,
}

impl Hyperbox {
    pub fn new(lower: Vector, upper: Vector) -> Result<Self> {
        check_dim("box bounds", lower.len(), upper.len())?;
        if lower.iter().zip(upper.iter()).any(|(l, u)| !(l <= u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::InvalidInput("box needs finite bounds with lower <= upper".into()));
        }
        Ok(Hyperbox { lower, upper })
    }

    /// `[-r_i, r_i]` in every coordinate.
    pub fn symmetric(radius: &[f64]) -> Result<Self> {
        let r = Vector::from_column_slice(radius);
        Hyperbox::new(-&r, r)
    }

    pub fn lower(&self) -> &Vector {
        &self.lower
    }

    pub fn upper(&self) -> &Vector {
        &self.upper
    }

    pub fn center(&self) -> Vector {
        (&self.lower + &self.upper) * 0.5
    }

    pub fn half_widths(&self) -> Vector {
        (&self.upper - &self.lower) * 0.5
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        x.len() == self.lower.len()
            && x.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .all(|(v, (l, u))| *v >= l - tol && *v <= u + tol)
    }

    /// Rows `[I; -I]` and offsets `[upper; -lower]`.
    pub fn to_hpolytope(&self) -> HPolytope {
        let n = self.lower.len();
        let mut a = Mat::zeros(2 * n, n);
        let mut b = Vector::zeros(2 * n);
        for i in 0..n {
            a[(i, i)] = 1.0;
            a[(n + i, i)] = -1.0;
            b[i] = self.upper[i];
            b[n + i] = -self.lower[i];
        }
        HPolytope { a, b }
    }

    pub fn to_zonotope(&self) -> Zonotope {
        let hw = self.half_widths();
        let cols: Vec<Vector> = (0..hw.len())
            .filter(|&i| hw[i] > 0.0)
            .map(|i| unit(hw.len(), i, hw[i]))
            .collect();
        let g = if cols.is_empty() {
            Mat::zeros(hw.len(), 0)
        } else {
            Mat::from_columns(&cols)
        };
        Zonotope { center: self.center(), generators: g }
    }
}

impl Support for Hyperbox {
    fn dim(&self) -> usize {
        self.lower.len()
    }

    fn support(&self, d: &Vector) -> Result<f64> {
        check_dim("support direction", self.dim(), d.len())?;
        Ok(d.iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .map(|(di, (l, u))| (di * l).max(di * u))
            .sum())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Zonotope {
    pub center: Vector,
    /// One column per generator.
    pub generators: Mat,
}

impl Zonotope {
    pub fn new(center: Vector, generators: Mat) -> Result<Self> {
        check_dim("zonotope generators", center.len(), generators.nrows())?;
        Ok(Zonotope { center, generators })
    }

    pub fn point(center: Vector) -> Self {
        let n = center.len();
        Zonotope { center, generators: Mat::zeros(n, 0) }
    }

    pub fn num_generators(&self) -> usize {
        self.generators.ncols()
    }

    /// Drops generators with max-norm at most `tol`.
    pub fn prune(mut self, tol: f64) -> Self {
        let keep: Vec<Vector> = self
            .generators
            .column_iter()
            .filter(|c| c.amax() > tol)
            .map(|c| c.into_owned())
            .collect();
        self.generators = if keep.is_empty() {
            Mat::zeros(self.center.len(), 0)
        } else {
            Mat::from_columns(&keep)
        };
        self
    }

    pub fn scale(&self, factor: f64) -> Zonotope {
        Zonotope { center: &self.center * factor, generators: &self.generators * factor }
    }

    pub fn interval_hull(&self) -> Hyperbox {
        let r = Vector::from_iterator(
            self.center.len(),
            self.generators.row_iter().map(|row| row.iter().map(|v| v.abs()).sum::<f64>()),
        );
        Hyperbox { lower: &self.center - &r, upper: &self.center + &r }
    }

    /// Separating inequality for a point: returns the largest violation
    /// `d'(x - c) - |G'd|_1` over `|d|_inf <= 1` and the maximizing `d`.
    ///
    /// A positive value certifies `x` lies outside; the cut `d'y <= d'c + |G'd|_1`
    /// is valid for every point of the zonotope.
    pub fn separate(&self, x: &Vector) -> Result<(f64, Vector)> {
        let n = self.center.len();
        check_dim("point", n, x.len())?;
        let g = self.num_generators();
        let dx = x - &self.center;
        // Variables (d, s): min -d'dx + sum s.
        let mut c = Vector::zeros(n + g);
        for i in 0..n {
            c[i] = -dx[i];
        }
        for j in 0..g {
            c[n + j] = 1.0;
        }
        let rows = 2 * g + 2 * n;
        let mut a = Mat::zeros(rows, n + g);
        let mut b = Vector::zeros(rows);
        for j in 0..g {
            for i in 0..n {
                let gij = self.generators[(i, j)];
                a[(j, i)] = gij;
                a[(g + j, i)] = -gij;
            }
            a[(j, n + j)] = -1.0;
            a[(g + j, n + j)] = -1.0;
        }
        for i in 0..n {
            a[(2 * g + i, i)] = 1.0;
            a[(2 * g + n + i, i)] = -1.0;
            b[2 * g + i] = 1.0;
            b[2 * g + n + i] = 1.0;
        }
        let sol = solve_lp(&LpProblem::new(c, a, b)?, 1e-12)?;
        if sol.status != LpStatus::Optimal {
            return Err(Error::SolverFailure("zonotope separation LP not optimal".into()));
        }
        let d = sol.x.rows(0, n).into_owned();
        let value = d.dot(&dx) - (self.generators.transpose() * &d).iter().map(|v| v.abs()).sum::<f64>();
        Ok((value, d))
    }
}

impl Support for Zonotope {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn support(&self, d: &Vector) -> Result<f64> {
        check_dim("support direction", self.dim(), d.len())?;
        let gd = self.generators.transpose() * d;
        Ok(self.center.dot(d) + gd.iter().map(|v| v.abs()).sum::<f64>())
    }
}

impl From<&Hyperbox> for Zonotope {
    fn from(b: &Hyperbox) -> Self {
        b.to_zonotope()
    }
}

/// `{x : A x <= b}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HPolytope {
    pub a: Mat,
    pub b: Vector,
}

impl HPolytope {
    pub fn new(a: Mat, b: Vector) -> Result<Self> {
        check_dim("polytope offsets", a.nrows(), b.len())?;
        Ok(HPolytope { a, b })
    }

    pub fn num_constraints(&self) -> usize {
        self.b.len()
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        x.len() == self.a.ncols() && (&self.a * x - &self.b).iter().all(|v| *v <= tol)
    }

    /// Some point of the polytope, or `None` when it is empty.
    pub fn witness(&self) -> Result<Option<Vector>> {
        let n = self.a.ncols();
        let sol = solve_lp(&LpProblem::new(Vector::zeros(n), self.a.clone(), self.b.clone())?, 1e-10)?;
        Ok(match sol.status {
            LpStatus::Infeasible => None,
            _ => Some(sol.x),
        })
    }

    /// Supports in many directions, warm-starting each query from the previous vertex.
    pub fn supports(&self, dirs: &[Vector]) -> Result<Vec<f64>> {
        let mut walker = match VertexWalker::from_polytope(&self.a, &self.b)? {
            Some(w) => w,
            None => {
                // Degenerate start basis: fall back to independent solves.
                return dirs.iter().map(|d| self.support(d)).collect();
            }
        };
        let mut out = Vec::with_capacity(dirs.len());
        for d in dirs {
            check_dim("support direction", self.a.ncols(), d.len())?;
            match walker.maximize(d) {
                Ok(v) => out.push(v),
                Err(Error::UnboundedSupport) => return Err(Error::UnboundedSupport),
                Err(_) => out.push(self.support(d)?),
            }
        }
        Ok(out)
    }

    /// Drops rows implied by the others within `tol`.
    pub fn remove_redundant(&self, tol: f64) -> Result<HPolytope> {
        let mut keep: Vec<usize> = (0..self.b.len()).collect();
        let mut i = 0;
        while i < keep.len() {
            let row = keep[i];
            let others: Vec<usize> = keep.iter().copied().filter(|&r| r != row).collect();
            let a = Mat::from_fn(others.len(), self.a.ncols(), |r, c| self.a[(others[r], c)]);
            let b = Vector::from_iterator(others.len(), others.iter().map(|&r| self.b[r]));
            let d = self.a.row(row).transpose();
            let sol = solve_lp(&LpProblem::new(-&d, a, b)?, 1e-10)?;
            if sol.status == LpStatus::Optimal && -sol.value <= self.b[row] + tol {
                keep.remove(i);
            } else {
                i += 1;
            }
        }
        Ok(HPolytope {
            a: Mat::from_fn(keep.len(), self.a.ncols(), |r, c| self.a[(keep[r], c)]),
            b: Vector::from_iterator(keep.len(), keep.iter().map(|&r| self.b[r])),
        })
    }
}

impl Support for HPolytope {
    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn support(&self, d: &Vector) -> Result<f64> {
        check_dim("support direction", self.dim(), d.len())?;
        let sol = solve_lp(&LpProblem::new(-d, self.a.clone(), self.b.clone())?, 1e-10)?;
        match sol.status {
            LpStatus::Optimal => Ok(-sol.value),
            LpStatus::Unbounded => Err(Error::UnboundedSupport),
            LpStatus::Infeasible => Err(Error::Infeasible("support of an empty polytope".into())),
        }
    }
}

/// `outer ⊖ inner` for a box `outer`; exact coordinatewise.
pub fn pontryagin_diff_box(outer: &Hyperbox, inner: &dyn Support) -> Result<Hyperbox> {
    let n = outer.dim();
    check_dim("Pontryagin operand", n, inner.dim())?;
    let mut lower = Vector::zeros(n);
    let mut upper = Vector::zeros(n);
    for i in 0..n {
        lower[i] = outer.lower[i] + inner.support(&unit(n, i, -1.0))?;
        upper[i] = outer.upper[i] - inner.support(&unit(n, i, 1.0))?;
        if lower[i] > upper[i] {
            return Err(Error::EmptyDifference { coord: i, lower: lower[i], upper: upper[i] });
        }
    }
    Ok(Hyperbox { lower, upper })
}

pub fn minkowski_sum(a: &Zonotope, b: &Zonotope) -> Result<Zonotope> {
    check_dim("Minkowski operand", a.dim(), b.dim())?;
    let n = a.dim();
    let mut g = Mat::zeros(n, a.num_generators() + b.num_generators());
    g.view_mut((0, 0), (n, a.num_generators())).copy_from(&a.generators);
    g.view_mut((0, a.num_generators()), (n, b.num_generators())).copy_from(&b.generators);
    Ok(Zonotope { center: &a.center + &b.center, generators: g })
}

pub fn linear_map(m: &Mat, z: &Zonotope) -> Result<Zonotope> {
    check_dim("linear map columns", z.dim(), m.ncols())?;
    Ok(Zonotope { center: m * &z.center, generators: m * &z.generators })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn supports_of_basic_sets() {
        let b = Hyperbox::symmetric(&[1.0, 1.0]).unwrap();
        assert_eq!(b.support(&Vector::from_column_slice(&[1.0, 0.0])).unwrap(), 1.0);
        let z = Zonotope::new(Vector::zeros(2), Mat::identity(2, 2)).unwrap();
        assert_eq!(z.support(&Vector::from_column_slice(&[1.0, 1.0])).unwrap(), 2.0);
        let h = b.to_hpolytope();
        assert!((h.support(&Vector::from_column_slice(&[1.0, 1.0])).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn interval_difference() {
        let outer = Hyperbox::symmetric(&[10.0]).unwrap();
        let inner = Hyperbox::symmetric(&[2.3]).unwrap();
        let d = pontryagin_diff_box(&outer, &inner).unwrap();
        assert!((d.upper()[0] - 7.7).abs() < 1e-12 && (d.lower()[0] + 7.7).abs() < 1e-12);
        let big = Hyperbox::symmetric(&[11.0]).unwrap();
        assert!(matches!(pontryagin_diff_box(&outer, &big), Err(Error::EmptyDifference { .. })));
    }

    #[test]
    fn unit_intervals_sum() {
        let a = Hyperbox::symmetric(&[1.0]).unwrap().to_zonotope();
        let s = minkowski_sum(&a, &a).unwrap();
        assert_eq!(s.interval_hull(), Hyperbox::symmetric(&[2.0]).unwrap());
    }

    #[test]
    fn separation_detects_outside_points() {
        let z = Zonotope::new(Vector::zeros(2), Mat::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0])).unwrap();
        let (inside, _) = z.separate(&Vector::from_column_slice(&[0.5, 0.5])).unwrap();
        assert!(inside <= 1e-12);
        let x = Vector::from_column_slice(&[0.0, 1.5]);
        let (outside, d) = z.separate(&x).unwrap();
        assert!(outside > 0.1);
        let rhs = z.support(&d).unwrap();
        assert!(d.dot(&x) > rhs);
    }

    #[test]
    fn unbounded_support_reported() {
        let h = HPolytope::new(Mat::from_row_slice(1, 2, &[1.0, 0.0]), Vector::from_column_slice(&[1.0])).unwrap();
        assert!(matches!(h.support(&Vector::from_column_slice(&[0.0, 1.0])), Err(Error::UnboundedSupport)));
    }
}
