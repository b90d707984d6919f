//! Second-order differential operators in expanded form: one coefficient
//! field per derivative stencil.
//!
//! The expanded form is the natural container for conjugated and
//! harmonic-averaged operators, whose coefficients are general fields rather
//! than metric products, and it maps directly onto banded matrix assembly.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::MetricField;
use crate::grid::{diff1_topo, diff2_topo, diff_mixed_topo, FdOrder, Grid2};

/// Coefficient fields of
///
/// `L psi = c20 psi_,11 + c11 psi_,12 + c02 psi_,22 + c10 psi_,1 + c01 psi_,2 + c00 psi`,
///
/// where `,1` and `,2` are the chart partial derivatives. The mixed slot
/// `c11` multiplies the single mixed derivative, so symmetric tensors
/// contribute twice their off-diagonal component to it.
#[derive(Debug, Clone)]
pub struct OperatorCoeffs {
    pub grid: Grid2,
    pub periodic: [bool; 2],
    pub c20: Array2<f64>,
    pub c11: Array2<f64>,
    pub c02: Array2<f64>,
    pub c10: Array2<f64>,
    pub c01: Array2<f64>,
    pub c00: Array2<f64>,
}

impl OperatorCoeffs {
    /// The zero operator on `grid`.
    pub fn zeros(grid: &Grid2, periodic: [bool; 2]) -> Self {
        let z = Array2::zeros(grid.shape());
        OperatorCoeffs {
            grid: grid.clone(),
            periodic,
            c20: z.clone(),
            c11: z.clone(),
            c02: z.clone(),
            c10: z.clone(),
            c01: z.clone(),
            c00: z,
        }
    }

    /// Apply to a real field with central stencils of the given order
    /// (one-sided at non-periodic edges).
    pub fn apply(&self, psi: &Array2<f64>, order: FdOrder) -> Array2<f64> {
        let (dq1, dq2) = (self.grid.dq1(), self.grid.dq2());
        let mut out = &self.c20 * &diff2_topo(psi, 0, dq1, order, self.periodic[0]);
        out = out + &self.c02 * &diff2_topo(psi, 1, dq2, order, self.periodic[1]);
        if self.c11.iter().any(|v| *v != 0.0) {
            out = out + &self.c11 * &diff_mixed_topo(psi, dq1, dq2, order, self.periodic);
        }
        out = out + &self.c10 * &diff1_topo(psi, 0, dq1, order, self.periodic[0]);
        out = out + &self.c01 * &diff1_topo(psi, 1, dq2, order, self.periodic[1]);
        out + &self.c00 * psi
    }

    /// Apply to a complex field (the coefficients are real).
    pub fn apply_complex(&self, psi: &Array2<Complex64>, order: FdOrder) -> Array2<Complex64> {
        let re = self.apply(&psi.mapv(|v| v.re), order);
        let im = self.apply(&psi.mapv(|v| v.im), order);
        let mut out = Array2::from_elem(self.grid.shape(), Complex64::new(0.0, 0.0));
        for ((o, r), i) in out.iter_mut().zip(re.iter()).zip(im.iter()) {
            *o = Complex64::new(*r, *i);
        }
        out
    }

    /// Accumulate `self += s * other` slot by slot.
    pub fn add_scaled(&mut self, other: &OperatorCoeffs, s: f64) {
        debug_assert!(self.grid.compatible(&other.grid));
        self.c20.scaled_add(s, &other.c20);
        self.c11.scaled_add(s, &other.c11);
        self.c02.scaled_add(s, &other.c02);
        self.c10.scaled_add(s, &other.c10);
        self.c01.scaled_add(s, &other.c01);
        self.c00.scaled_add(s, &other.c00);
    }

    /// Multiply every slot by `s`.
    pub fn scale(&mut self, s: f64) {
        for c in [
            &mut self.c20,
            &mut self.c11,
            &mut self.c02,
            &mut self.c10,
            &mut self.c01,
            &mut self.c00,
        ] {
            c.mapv_inplace(|v| s * v);
        }
    }

    /// Largest coefficient magnitude over all slots.
    pub fn max_abs(&self) -> f64 {
        [&self.c20, &self.c11, &self.c02, &self.c10, &self.c01, &self.c00]
            .iter()
            .flat_map(|a| a.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Largest slot-by-slot difference to another operator.
    pub fn max_diff(&self, other: &OperatorCoeffs) -> f64 {
        let pairs = [
            (&self.c20, &other.c20),
            (&self.c11, &other.c11),
            (&self.c02, &other.c02),
            (&self.c10, &other.c10),
            (&self.c01, &other.c01),
            (&self.c00, &other.c00),
        ];
        let mut m = 0.0_f64;
        for (a, b) in pairs {
            for (x, y) in a.iter().zip(b.iter()) {
                m = m.max((x - y).abs());
            }
        }
        m
    }
}

/// The Laplace-Beltrami operator in expanded form:
/// `g^{mn} d_m d_n + (1/sqrt g)(sqrt g g^{nm})_,n d_m`.
///
/// Preprocessing derivatives of the metric use fourth-order stencils; the
/// application order is chosen per call site.
pub fn lb_coeffs(metric: &MetricField, periodic: [bool; 2]) -> Result<OperatorCoeffs> {
    let grid = &metric.grid;
    let (dq1, dq2) = (grid.dq1(), grid.dq2());
    let w11 = &metric.sqrt_g * &metric.inv11;
    let w12 = &metric.sqrt_g * &metric.inv12;
    let w22 = &metric.sqrt_g * &metric.inv22;
    let c10 = (&diff1_topo(&w11, 0, dq1, FdOrder::Four, periodic[0])
        + &diff1_topo(&w12, 1, dq2, FdOrder::Four, periodic[1]))
        / &metric.sqrt_g;
    let c01 = (&diff1_topo(&w12, 0, dq1, FdOrder::Four, periodic[0])
        + &diff1_topo(&w22, 1, dq2, FdOrder::Four, periodic[1]))
        / &metric.sqrt_g;
    if metric.sqrt_g.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidInput("degenerate metric: sqrt(g) must be positive".into()));
    }
    Ok(OperatorCoeffs {
        grid: grid.clone(),
        periodic,
        c20: metric.inv11.clone(),
        c11: metric.inv12.mapv(|v| 2.0 * v),
        c02: metric.inv22.clone(),
        c10,
        c01,
        c00: Array2::zeros(grid.shape()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{frame_and_metric, make_surface, SurfaceKind, SurfaceSpec};
    use crate::grid::Unit;

    fn metric_for(kind: SurfaceKind, grid: &Grid2) -> MetricField {
        let spec = SurfaceSpec { kind, grid: grid.clone() };
        frame_and_metric(&make_surface(&spec).unwrap()).unwrap()
    }

    #[test]
    fn plane_operator_is_exact_on_quadratics() {
        let grid = Grid2::new(33, 29, -1.0, 1.0, -1.0, 1.0).unwrap();
        let metric = metric_for(SurfaceKind::Plane, &grid);
        let op = lb_coeffs(&metric, [false, false]).unwrap();
        let f = grid.sample(Unit::Dimensionless, |x, y| x * x * y * y).values;
        let lap = op.apply(&f, FdOrder::Two);
        for i in 0..grid.n1 {
            for j in 0..grid.n2 {
                let (x, y) = (grid.q1(i), grid.q2(j));
                let want = 2.0 * y * y + 2.0 * x * x;
                assert!(
                    (lap[[i, j]] - want).abs() < 1e-10,
                    "node ({x}, {y}): {} vs {want}",
                    lap[[i, j]]
                );
            }
        }
    }

    #[test]
    fn cylinder_operator_matches_separated_eigenfunction() {
        // on a radius-R cylinder the operator is (1/R^2) d_tt + d_zz with no
        // drift, so sin(2 theta) cos(z) is an eigenfunction
        let r = 2.0;
        let grid = Grid2::new(129, 65, 0.0, 2.0 * std::f64::consts::PI, -2.0, 2.0).unwrap();
        let metric = metric_for(SurfaceKind::Cylinder { radius: r }, &grid);
        let op = lb_coeffs(&metric, [true, false]).unwrap();
        assert!(op.c10.iter().all(|v| v.abs() < 1e-11));
        assert!(op.c01.iter().all(|v| v.abs() < 1e-11));
        let f = grid.sample(Unit::Dimensionless, |t, z| (2.0 * t).sin() * z.cos()).values;
        let lap = op.apply(&f, FdOrder::Four);
        let lam = -(4.0 / (r * r) + 1.0);
        let mut worst = 0.0_f64;
        // skip the open z edges, where one-sided stencils hold a larger constant
        for i in 0..grid.n1 {
            for j in 4..grid.n2 - 4 {
                worst = worst.max((lap[[i, j]] - lam * f[[i, j]]).abs());
            }
        }
        assert!(worst < 1e-5, "worst deviation {worst}");
    }

    #[test]
    fn expanded_form_converges_to_flux_form_quadratically() {
        // the expanded and flux discretizations approximate the same operator,
        // so their difference must shrink at second order
        let mut diffs = Vec::new();
        for n in [65usize, 129, 257] {
            let grid = Grid2::new(n, n, -3.0, 3.0, -3.0, 3.0).unwrap();
            let metric =
                metric_for(SurfaceKind::GaussianBump { amplitude: 1.2, sigma: 0.9 }, &grid);
            let op = lb_coeffs(&metric, [false, false]).unwrap();
            let f = grid.sample(Unit::Dimensionless, |x, y| (0.7 * x).sin() * (0.5 * y).cos());
            let a = op.apply(&f.values, FdOrder::Two);
            let b = crate::geometry::laplace_beltrami(&metric, &f).unwrap();
            let mut worst = 0.0_f64;
            for i in 2..n - 2 {
                for j in 2..n - 2 {
                    worst = worst.max((a[[i, j]] - b.values[[i, j]]).abs());
                }
            }
            diffs.push(worst);
        }
        assert!(diffs[0] / diffs[1] > 3.5, "diffs = {diffs:?}");
        assert!(diffs[1] / diffs[2] > 3.5, "diffs = {diffs:?}");
    }
}
