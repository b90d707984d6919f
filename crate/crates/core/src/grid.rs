//! Uniform tensor-product grids on a parameter rectangle, scalar fields living
//! on them, and finite-difference derivative helpers.
//!
//! Grids are endpoint-inclusive: `n` nodes span `[min, max]` with spacing
//! `(max - min) / (n - 1)`. Fields are stored as `ndarray::Array2<f64>` with
//! the first index along axis 1 (`q1`) and the second along axis 2 (`q2`).
//! Periodicity is a property of operator assembly, not of the grid itself; a
//! periodic chart simply duplicates its seam node.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Loose physical tag carried by scalar fields, used for output metadata and
/// sanity, not for arithmetic enforcement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    Dimensionless,
    Length,
    PerLength,
    PerLengthSq,
    Energy,
}

impl std::fmt::Display for Unit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Unit::Dimensionless => "dimensionless",
            Unit::Length => "length",
            Unit::PerLength => "1/length",
            Unit::PerLengthSq => "1/length^2",
            Unit::Energy => "energy",
        };
        f.write_str(s)
    }
}

/// Uniform 2-d grid on `[q1_min, q1_max] x [q2_min, q2_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2 {
    pub n1: usize,
    pub n2: usize,
    pub q1_min: f64,
    pub q1_max: f64,
    pub q2_min: f64,
    pub q2_max: f64,
}

impl Grid2 {
    pub fn new(
        n1: usize,
        n2: usize,
        q1_min: f64,
        q1_max: f64,
        q2_min: f64,
        q2_max: f64,
    ) -> Result<Self> {
        if n1 < 6 || n2 < 6 {
            return Err(Error::InvalidInput(format!(
                "grid needs at least 6 nodes per axis, got {n1} x {n2}"
            )));
        }
        if !(q1_max > q1_min) || !(q2_max > q2_min) {
            return Err(Error::InvalidInput(
                "grid domain must have positive extent on both axes".into(),
            ));
        }
        Ok(Grid2 { n1, n2, q1_min, q1_max, q2_min, q2_max })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    pub fn dq1(&self) -> f64 {
        (self.q1_max - self.q1_min) / (self.n1 - 1) as f64
    }

    pub fn dq2(&self) -> f64 {
        (self.q2_max - self.q2_min) / (self.n2 - 1) as f64
    }

    pub fn q1(&self, i: usize) -> f64 {
        self.q1_min + i as f64 * self.dq1()
    }

    pub fn q2(&self, j: usize) -> f64 {
        self.q2_min + j as f64 * self.dq2()
    }

    pub fn axis1(&self) -> Vec<f64> {
        (0..self.n1).map(|i| self.q1(i)).collect()
    }

    pub fn axis2(&self) -> Vec<f64> {
        (0..self.n2).map(|j| self.q2(j)).collect()
    }

    /// Same shape and same bounds within an absolute tolerance.
    pub fn compatible(&self, other: &Grid2) -> bool {
        const TOL: f64 = 1e-12;
        self.n1 == other.n1
            && self.n2 == other.n2
            && (self.q1_min - other.q1_min).abs() < TOL
            && (self.q1_max - other.q1_max).abs() < TOL
            && (self.q2_min - other.q2_min).abs() < TOL
            && (self.q2_max - other.q2_max).abs() < TOL
    }

    /// Build a field by evaluating `f(q1, q2)` at every node.
    pub fn sample(&self, unit: Unit, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        let mut values = Array2::zeros((self.n1, self.n2));
        for i in 0..self.n1 {
            for j in 0..self.n2 {
                values[[i, j]] = f(self.q1(i), self.q2(j));
            }
        }
        ScalarField { grid: self.clone(), values, unit }
    }

    /// Zero field with the given unit tag.
    pub fn zeros(&self, unit: Unit) -> ScalarField {
        ScalarField {
            grid: self.clone(),
            values: Array2::zeros((self.n1, self.n2)),
            unit,
        }
    }
}

/// Real scalar field on a [`Grid2`].
#[derive(Debug, Clone)]
pub struct ScalarField {
    pub grid: Grid2,
    pub values: Array2<f64>,
    pub unit: Unit,
}

impl ScalarField {
    pub fn from_values(grid: &Grid2, values: Array2<f64>, unit: Unit) -> Result<Self> {
        if values.dim() != grid.shape() {
            return Err(Error::GridMismatch(format!(
                "field shape {:?} vs grid {:?}",
                values.dim(),
                grid.shape()
            )));
        }
        Ok(ScalarField { grid: grid.clone(), values, unit })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Check grid compatibility against another field.
    pub fn same_grid(&self, other: &ScalarField) -> Result<()> {
        if self.grid.compatible(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch("fields live on different grids".into()))
        }
    }
}

/// Finite-difference accuracy selector for the derivative helpers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdOrder {
    Two,
    Four,
}

/// First derivative along `axis` (0 for q1, 1 for q2) with central stencils in
/// the interior and one-sided stencils of matching order at the edges.
pub fn diff1(values: &Array2<f64>, axis: usize, dq: f64, order: FdOrder) -> Array2<f64> {
    apply_along(values, axis, |line, out| match order {
        FdOrder::Two => d1_order2(line, dq, out),
        FdOrder::Four => d1_order4(line, dq, out),
    })
}

/// Second derivative along `axis`, same edge treatment as [`diff1`].
pub fn diff2(values: &Array2<f64>, axis: usize, dq: f64, order: FdOrder) -> Array2<f64> {
    apply_along(values, axis, |line, out| match order {
        FdOrder::Two => d2_order2(line, dq, out),
        FdOrder::Four => d2_order4(line, dq, out),
    })
}

/// Mixed second derivative d^2/dq1 dq2 as nested first derivatives.
pub fn diff_mixed(values: &Array2<f64>, dq1: f64, dq2: f64, order: FdOrder) -> Array2<f64> {
    let d2 = diff1(values, 1, dq2, order);
    diff1(&d2, 0, dq1, order)
}

fn apply_along(
    values: &Array2<f64>,
    axis: usize,
    f: impl Fn(&[f64], &mut [f64]),
) -> Array2<f64> {
    let (n1, n2) = values.dim();
    let mut out = Array2::zeros((n1, n2));
    match axis {
        0 => {
            let mut line = vec![0.0; n1];
            let mut dline = vec![0.0; n1];
            for j in 0..n2 {
                for i in 0..n1 {
                    line[i] = values[[i, j]];
                }
                f(&line, &mut dline);
                for i in 0..n1 {
                    out[[i, j]] = dline[i];
                }
            }
        }
        1 => {
            let mut line = vec![0.0; n2];
            let mut dline = vec![0.0; n2];
            for i in 0..n1 {
                for j in 0..n2 {
                    line[j] = values[[i, j]];
                }
                f(&line, &mut dline);
                for j in 0..n2 {
                    out[[i, j]] = dline[j];
                }
            }
        }
        _ => panic!("axis must be 0 or 1"),
    }
    out
}

fn d1_order2(f: &[f64], h: f64, out: &mut [f64]) {
    let n = f.len();
    out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
    for i in 1..n - 1 {
        out[i] = (f[i + 1] - f[i - 1]) / (2.0 * h);
    }
    out[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * h);
}

fn d2_order2(f: &[f64], h: f64, out: &mut [f64]) {
    let n = f.len();
    let h2 = h * h;
    out[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / h2;
    for i in 1..n - 1 {
        out[i] = (f[i + 1] - 2.0 * f[i] + f[i - 1]) / h2;
    }
    out[n - 1] = (2.0 * f[n - 1] - 5.0 * f[n - 2] + 4.0 * f[n - 3] - f[n - 4]) / h2;
}

fn d1_order4(f: &[f64], h: f64, out: &mut [f64]) {
    let n = f.len();
    let c = 1.0 / (12.0 * h);
    out[0] = c * (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]);
    out[1] = c * (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]);
    for i in 2..n - 2 {
        out[i] = c * (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]);
    }
    out[n - 2] = -c
        * (-3.0 * f[n - 1] - 10.0 * f[n - 2] + 18.0 * f[n - 3] - 6.0 * f[n - 4] + f[n - 5]);
    out[n - 1] = -c
        * (-25.0 * f[n - 1] + 48.0 * f[n - 2] - 36.0 * f[n - 3] + 16.0 * f[n - 4]
            - 3.0 * f[n - 5]);
}

fn d2_order4(f: &[f64], h: f64, out: &mut [f64]) {
    let n = f.len();
    let c = 1.0 / (12.0 * h * h);
    out[0] = c
        * (45.0 * f[0] - 154.0 * f[1] + 214.0 * f[2] - 156.0 * f[3] + 61.0 * f[4]
            - 10.0 * f[5]);
    out[1] = c
        * (10.0 * f[0] - 15.0 * f[1] - 4.0 * f[2] + 14.0 * f[3] - 6.0 * f[4] + f[5]);
    for i in 2..n - 2 {
        out[i] =
            c * (-f[i - 2] + 16.0 * f[i - 1] - 30.0 * f[i] + 16.0 * f[i + 1] - f[i + 2]);
    }
    out[n - 2] = c
        * (10.0 * f[n - 1] - 15.0 * f[n - 2] - 4.0 * f[n - 3] + 14.0 * f[n - 4]
            - 6.0 * f[n - 5]
            + f[n - 6]);
    out[n - 1] = c
        * (45.0 * f[n - 1] - 154.0 * f[n - 2] + 214.0 * f[n - 3] - 156.0 * f[n - 4]
            + 61.0 * f[n - 5]
            - 10.0 * f[n - 6]);
}

/// First derivative along `axis` on a seam-duplicated periodic chart: the
/// grid's first and last nodes along that axis represent the same physical
/// point, stencils wrap around, and the duplicate node is kept consistent.
pub fn diff1_wrap(values: &Array2<f64>, axis: usize, dq: f64, order: FdOrder) -> Array2<f64> {
    wrap_stencil(values, axis, |get, i, k| match order {
        FdOrder::Two => (get(i + 1, k) - get(i - 1, k)) / (2.0 * dq),
        FdOrder::Four => {
            (-get(i + 2, k) + 8.0 * get(i + 1, k) - 8.0 * get(i - 1, k) + get(i - 2, k))
                / (12.0 * dq)
        }
    })
}

/// Second derivative along `axis` with periodic wrap; see [`diff1_wrap`].
pub fn diff2_wrap(values: &Array2<f64>, axis: usize, dq: f64, order: FdOrder) -> Array2<f64> {
    wrap_stencil(values, axis, |get, i, k| match order {
        FdOrder::Two => (get(i + 1, k) - 2.0 * get(i, k) + get(i - 1, k)) / (dq * dq),
        FdOrder::Four => {
            (-get(i + 2, k) + 16.0 * get(i + 1, k) - 30.0 * get(i, k) + 16.0 * get(i - 1, k)
                - get(i - 2, k))
                / (12.0 * dq * dq)
        }
    })
}

/// Apply a wrapped line stencil along `axis`; the accessor handles seam
/// duplication (first and last node are the same physical point) and accepts
/// indices a couple of steps outside `0..m`.
fn wrap_stencil(
    values: &Array2<f64>,
    axis: usize,
    stencil: impl Fn(&dyn Fn(isize, usize) -> f64, isize, usize) -> f64,
) -> Array2<f64> {
    let (n1, n2) = values.dim();
    let n = if axis == 0 { n1 } else { n2 };
    let m = (n - 1) as isize; // distinct nodes
    let mut out = Array2::zeros((n1, n2));
    let get = |i: isize, k: usize| -> f64 {
        let i = (i.rem_euclid(m)) as usize;
        if axis == 0 {
            values[[i, k]]
        } else {
            values[[k, i]]
        }
    };
    let lines = if axis == 0 { n2 } else { n1 };
    for k in 0..lines {
        for i in 0..m {
            let d = stencil(&get, i, k);
            if axis == 0 {
                out[[i as usize, k]] = d;
            } else {
                out[[k, i as usize]] = d;
            }
        }
        if axis == 0 {
            out[[m as usize, k]] = out[[0, k]];
        } else {
            out[[k, m as usize]] = out[[k, 0]];
        }
    }
    out
}

/// First derivative choosing wrap or one-sided edge handling per axis flag.
pub fn diff1_topo(
    values: &Array2<f64>,
    axis: usize,
    dq: f64,
    order: FdOrder,
    periodic: bool,
) -> Array2<f64> {
    if periodic {
        diff1_wrap(values, axis, dq, order)
    } else {
        diff1(values, axis, dq, order)
    }
}

/// Second derivative choosing wrap or one-sided edge handling per axis flag.
pub fn diff2_topo(
    values: &Array2<f64>,
    axis: usize,
    dq: f64,
    order: FdOrder,
    periodic: bool,
) -> Array2<f64> {
    if periodic {
        diff2_wrap(values, axis, dq, order)
    } else {
        diff2(values, axis, dq, order)
    }
}

/// Mixed derivative with per-axis topology: first derivative along axis 1
/// then along axis 0, each wrap-aware.
pub fn diff_mixed_topo(
    values: &Array2<f64>,
    dq1: f64,
    dq2: f64,
    order: FdOrder,
    periodic: [bool; 2],
) -> Array2<f64> {
    let d2 = diff1_topo(values, 1, dq2, order, periodic[1]);
    diff1_topo(&d2, 0, dq1, order, periodic[0])
}

/// Trapezoid quadrature of `f` against the area weight `w` (both on the same
/// grid): `sum f * w * dq1 * dq2` with half weights on the rectangle edges.
pub fn trapezoid_weighted(f: &Array2<f64>, w: &Array2<f64>, grid: &Grid2) -> f64 {
    let (n1, n2) = grid.shape();
    assert_eq!(f.dim(), (n1, n2));
    assert_eq!(w.dim(), (n1, n2));
    let mut acc = 0.0;
    for i in 0..n1 {
        let wi = if i == 0 || i == n1 - 1 { 0.5 } else { 1.0 };
        for j in 0..n2 {
            let wj = if j == 0 || j == n2 - 1 { 0.5 } else { 1.0 };
            acc += wi * wj * f[[i, j]] * w[[i, j]];
        }
    }
    acc * grid.dq1() * grid.dq2()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid2 {
        Grid2::new(41, 33, -1.0, 1.0, 0.0, 2.0).unwrap()
    }

    #[test]
    fn node_coordinates_hit_bounds() {
        let g = grid();
        assert!((g.q1(0) - g.q1_min).abs() < 1e-15);
        assert!((g.q1(g.n1 - 1) - g.q1_max).abs() < 1e-12);
        assert!((g.q2(g.n2 - 1) - g.q2_max).abs() < 1e-12);
    }

    #[test]
    fn derivatives_exact_for_polynomials() {
        // Order-2 stencils must be exact on quadratics, order-4 on quartics,
        // including the one-sided edge rows.
        let g = grid();
        let f = g.sample(Unit::Dimensionless, |x, y| {
            1.0 + 2.0 * x - 0.5 * x * x + 3.0 * y + 0.25 * y * y + x * y
        });
        let dx = diff1(&f.values, 0, g.dq1(), FdOrder::Two);
        let dyy = diff2(&f.values, 1, g.dq2(), FdOrder::Two);
        let dxy = diff_mixed(&f.values, g.dq1(), g.dq2(), FdOrder::Two);
        for i in 0..g.n1 {
            for j in 0..g.n2 {
                let (x, y) = (g.q1(i), g.q2(j));
                assert!((dx[[i, j]] - (2.0 - x + y)).abs() < 1e-10);
                assert!((dyy[[i, j]] - 0.5).abs() < 1e-9);
                assert!((dxy[[i, j]] - 1.0).abs() < 1e-9);
            }
        }

        let q = g.sample(Unit::Dimensionless, |x, y| x.powi(4) + y.powi(4) + x * x * y * y);
        let qx = diff1(&q.values, 0, g.dq1(), FdOrder::Four);
        let qyy = diff2(&q.values, 1, g.dq2(), FdOrder::Four);
        for i in 0..g.n1 {
            for j in 0..g.n2 {
                let (x, y) = (g.q1(i), g.q2(j));
                assert!((qx[[i, j]] - (4.0 * x.powi(3) + 2.0 * x * y * y)).abs() < 1e-8);
                assert!((qyy[[i, j]] - (12.0 * y * y + 2.0 * x * x)).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn second_order_convergence_on_smooth_field() {
        // Halving h should cut the max error of the order-2 first derivative
        // by about 4.
        let mut errs = Vec::new();
        for n in [33usize, 65, 129] {
            let g = Grid2::new(n, 7, -1.0, 1.0, 0.0, 1.0).unwrap();
            let f = g.sample(Unit::Dimensionless, |x, _| (3.0 * x).sin());
            let d = diff1(&f.values, 0, g.dq1(), FdOrder::Two);
            let mut e = 0.0_f64;
            for i in 0..n {
                let x = g.q1(i);
                e = e.max((d[[i, 3]] - 3.0 * (3.0 * x).cos()).abs());
            }
            errs.push(e);
        }
        assert!(errs[0] / errs[1] > 3.5);
        assert!(errs[1] / errs[2] > 3.5);
    }

    #[test]
    fn trapezoid_integrates_linear_exactly() {
        let g = grid();
        let f = g.sample(Unit::Dimensionless, |x, y| 2.0 + x + y);
        let w = g.sample(Unit::Dimensionless, |_, _| 1.0);
        // integral of (2 + x + y) over [-1,1] x [0,2] = 2*area + 0 + 2*2 = 12
        let got = trapezoid_weighted(&f.values, &w.values, &g);
        assert!((got - 12.0).abs() < 1e-12);
    }
}
