//! Oscillation-averaged ("dressed") potentials and kinetic operators.
//!
//! With the drive displacement `tau(t) = alpha0 sin(omega t)`, conjugating an
//! operator by the frame translation turns a static potential `V` into the
//! phase-dependent family `V(g_tau(q))` and the Laplace-Beltrami operator
//! into a phase-dependent second-order operator. Both are periodic in the
//! phase `theta = omega t`, so this module samples them over one period and
//! collects the Fourier harmonics: the constant term is the effective
//! (time-averaged) operator, the higher harmonics drive transitions.
//!
//! The frame factorization splits the translation into the coordinate
//! substitution and a half-divergence weight; the commutator between the two
//! is dropped, which is accurate to second order in the quiver amplitude.
//! [`bch_diagnostic`] localizes and bounds that truncation.

use ndarray::Array2;

use crate::drive::DisplacementShape;
use crate::error::{Error, Result};
use crate::geometry::MetricField;
use crate::grid::{diff1_topo, FdOrder, Grid2, ScalarField};
use crate::operators::{lb_coeffs, OperatorCoeffs};
use crate::shift::{shift_field, AbelMap, FlowJet, FlowPolicy};

/// Sampling and truncation parameters of a dressing run.
#[derive(Debug, Clone, Copy)]
pub struct DressingConfig {
    /// Highest harmonic retained.
    pub n_max: usize,
    /// Number of uniform phase samples over one period.
    pub n_theta: usize,
    pub policy: FlowPolicy,
}

impl DressingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_max == 0 {
            return Err(Error::InvalidInput("n_max must be at least 1".into()));
        }
        if self.n_theta % 2 != 0 || self.n_theta < 8 {
            return Err(Error::InvalidInput("n_theta must be even and at least 8".into()));
        }
        if self.n_theta <= 2 * (self.n_max + 2) {
            return Err(Error::InvalidInput(format!(
                "n_theta = {} cannot resolve n_max = {}: need n_theta > 2 (n_max + 2)",
                self.n_theta, self.n_max
            )));
        }
        Ok(())
    }
}

/// Fourier decomposition of the phase-dependent potential `V(g_tau(q))`.
///
/// Reconstruction follows the standard real convention
/// `V(theta) ~ f0 + sum_n a_n cos(n theta) + b_n sin(n theta)`.
#[derive(Debug, Clone)]
pub struct DressedPotential {
    pub grid: Grid2,
    /// Phase average: the effective potential of the dressed frame.
    pub f0: ScalarField,
    /// `(a_n, b_n)` for `n = 1..=n_max`.
    pub harmonics: Vec<(ScalarField, ScalarField)>,
    pub alpha0: f64,
    pub omega: f64,
    /// Magnitude of the highest retained harmonic relative to the average;
    /// large values mean `n_max` truncates a slowly decaying series.
    pub tail_ratio: f64,
    /// `None` when every flow stayed in range at every sample.
    pub valid: Option<Array2<bool>>,
}

impl DressedPotential {
    /// Evaluate the truncated Fourier series at phase `theta = omega t`.
    pub fn reconstruct(&self, theta: f64) -> ScalarField {
        let mut values = self.f0.values.clone();
        for (n, (a, b)) in self.harmonics.iter().enumerate() {
            let k = (n + 1) as f64;
            values.scaled_add((k * theta).cos(), &a.values);
            values.scaled_add((k * theta).sin(), &b.values);
        }
        ScalarField::from_values(&self.grid, values, self.f0.unit)
            .expect("harmonic fields share the grid")
    }
}

/// Decompose `V(g_{alpha0 sin theta}(q))` into phase harmonics.
pub fn dress_potential(
    v: &ScalarField,
    map: &AbelMap,
    alpha0: f64,
    omega: f64,
    cfg: &DressingConfig,
) -> Result<DressedPotential> {
    cfg.validate()?;
    check_drive_params(alpha0, omega)?;
    if !v.grid.compatible(&map.grid) {
        return Err(Error::GridMismatch("potential and Abel map grids differ".into()));
    }
    let n = cfg.n_theta;
    let shape = v.grid.shape();
    let mut f0 = Array2::<f64>::zeros(shape);
    let mut harm: Vec<(Array2<f64>, Array2<f64>)> =
        (0..cfg.n_max).map(|_| (Array2::zeros(shape), Array2::zeros(shape))).collect();
    let mut valid: Option<Array2<bool>> = None;

    for j in 0..n {
        let theta = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
        let tau = alpha0 * theta.sin();
        let shifted = shift_field(v, map, tau, cfg.policy)?;
        f0.scaled_add(1.0 / n as f64, &shifted.field.values);
        for (k, (a, b)) in harm.iter_mut().enumerate() {
            let m = (k + 1) as f64;
            a.scaled_add(2.0 / n as f64 * (m * theta).cos(), &shifted.field.values);
            b.scaled_add(2.0 / n as f64 * (m * theta).sin(), &shifted.field.values);
        }
        merge_mask(&mut valid, shifted.valid.as_ref());
    }

    let scale = harm
        .iter()
        .flat_map(|(a, b)| [max_abs(a), max_abs(b)])
        .fold(max_abs(&f0), f64::max)
        .max(1e-300);
    let last = &harm[cfg.n_max - 1];
    let tail_ratio = (max_abs(&last.0) + max_abs(&last.1)) / scale;
    let unit = v.unit;
    let grid = v.grid.clone();
    Ok(DressedPotential {
        f0: ScalarField::from_values(&grid, f0, unit)?,
        harmonics: harm
            .into_iter()
            .map(|(a, b)| {
                (
                    ScalarField::from_values(&grid, a, unit).expect("same grid"),
                    ScalarField::from_values(&grid, b, unit).expect("same grid"),
                )
            })
            .collect(),
        alpha0,
        omega,
        tail_ratio,
        valid,
        grid,
    })
}

/// The translated Laplace-Beltrami operator at one displacement, split by
/// power of the displacement parameter.
///
/// `sin0` is the pure coordinate substitution, `sin1` collects the terms
/// linear in the half-divergence weight exponent, and `sin2` its square; the
/// operator at displacement `tau` is `sin0 + tau sin1 + tau^2 sin2`.
#[derive(Debug, Clone)]
pub struct ConjugatedCoeffs {
    pub sin0: OperatorCoeffs,
    pub sin1: OperatorCoeffs,
    pub sin2: OperatorCoeffs,
    pub valid: Option<Array2<bool>>,
}

impl ConjugatedCoeffs {
    /// Assemble the full operator at displacement `tau`.
    pub fn at_amplitude(&self, tau: f64) -> OperatorCoeffs {
        let mut out = self.sin0.clone();
        out.add_scaled(&self.sin1, tau);
        out.add_scaled(&self.sin2, tau * tau);
        out
    }
}

/// Phase-harmonic decomposition of the translated Laplace-Beltrami operator.
#[derive(Debug, Clone)]
pub struct DressedLaplacian {
    pub grid: Grid2,
    /// Phase average: the kinetic operator of the effective Hamiltonian.
    pub static_part: OperatorCoeffs,
    /// `(cos, sin)` operator harmonics for `n = 1..=n_max`.
    pub harmonics: Vec<(OperatorCoeffs, OperatorCoeffs)>,
    pub alpha0: f64,
    pub omega: f64,
    pub tail_ratio: f64,
    pub valid: Option<Array2<bool>>,
}

impl DressedLaplacian {
    /// Evaluate the truncated operator series at phase `theta = omega t`.
    pub fn at_phase(&self, theta: f64) -> OperatorCoeffs {
        let mut out = self.static_part.clone();
        for (n, (hc, hs)) in self.harmonics.iter().enumerate() {
            let k = (n + 1) as f64;
            out.add_scaled(hc, (k * theta).cos());
            out.add_scaled(hs, (k * theta).sin());
        }
        out
    }
}

/// Precomputed inputs for translating the Laplace-Beltrami operator.
///
/// The constructor differentiates the metric and the shape divergence once;
/// each displacement sample then only flows coordinates and interpolates.
pub struct LaplaceDresser<'a> {
    map: &'a AbelMap,
    periodic: [bool; 2],
    grid: Grid2,
    /// Inverse metric components and the bare drift, as shiftable fields.
    inv11: ScalarField,
    inv12: ScalarField,
    inv22: ScalarField,
    drift1: ScalarField,
    drift2: ScalarField,
    /// `-g^{n mu} d_n (div alpha)`: first-order weight coupling.
    ctr1: ScalarField,
    ctr2: ScalarField,
    /// `-(1/2) LB(div alpha)`: zeroth-order weight coupling, linear part.
    w_lin: ScalarField,
    /// `(1/4) g^{mn} d_m(div alpha) d_n(div alpha)`: quadratic part.
    w_quad: ScalarField,
}

impl<'a> LaplaceDresser<'a> {
    pub fn new(
        metric: &MetricField,
        shape: &DisplacementShape,
        map: &'a AbelMap,
    ) -> Result<Self> {
        if !metric.grid.compatible(&shape.grid) || !metric.grid.compatible(&map.grid) {
            return Err(Error::GridMismatch("metric, shape and Abel map grids differ".into()));
        }
        let grid = metric.grid.clone();
        let periodic = shape.periodic;
        let lb = lb_coeffs(metric, periodic)?;
        let d = &shape.div;
        let d1 = diff1_topo(d, 0, grid.dq1(), FdOrder::Four, periodic[0]);
        let d2 = diff1_topo(d, 1, grid.dq2(), FdOrder::Four, periodic[1]);
        let ctr1 = -(&metric.inv11 * &d1 + &metric.inv12 * &d2);
        let ctr2 = -(&metric.inv12 * &d1 + &metric.inv22 * &d2);
        let w_lin = lb.apply(d, FdOrder::Four).mapv(|v| -0.5 * v);
        let w_quad = (&metric.inv11 * &d1 * &d1
            + &metric.inv12 * &d1 * &d2 * 2.0
            + &metric.inv22 * &d2 * &d2)
            .mapv(|v| 0.25 * v);
        let field = |values: Array2<f64>| {
            ScalarField::from_values(&grid, values, crate::grid::Unit::Dimensionless)
        };
        Ok(LaplaceDresser {
            map,
            periodic,
            inv11: field(metric.inv11.clone())?,
            inv12: field(metric.inv12.clone())?,
            inv22: field(metric.inv22.clone())?,
            drift1: field(lb.c10)?,
            drift2: field(lb.c01)?,
            ctr1: field(ctr1)?,
            ctr2: field(ctr2)?,
            w_lin: field(w_lin)?,
            w_quad: field(w_quad)?,
            grid,
        })
    }

    /// Translate the operator by the flow at displacement `tau`.
    ///
    /// Every input field is evaluated at the flowed coordinates; derivative
    /// slots pick up the inverse flow Jacobians, with the second derivative
    /// of the flow feeding the first-order slots.
    pub fn conjugated_at(&self, tau: f64, policy: FlowPolicy) -> Result<ConjugatedCoeffs> {
        let jet1 = self.map.flow_axis_jet(0, tau, policy)?;
        let jet2 = self.map.flow_axis_jet(1, tau, policy)?;
        let sh = |f: &ScalarField| -> Result<Array2<f64>> {
            Ok(shift_field(f, self.map, tau, policy)?.field.values)
        };
        let inv11 = sh(&self.inv11)?;
        let inv12 = sh(&self.inv12)?;
        let inv22 = sh(&self.inv22)?;
        let drift1 = sh(&self.drift1)?;
        let drift2 = sh(&self.drift2)?;
        let ctr1 = sh(&self.ctr1)?;
        let ctr2 = sh(&self.ctr2)?;
        let w_lin = sh(&self.w_lin)?;
        let w_quad = sh(&self.w_quad)?;

        let (n1, n2) = self.grid.shape();
        let mut sin0 = OperatorCoeffs::zeros(&self.grid, self.periodic);
        let mut sin1 = OperatorCoeffs::zeros(&self.grid, self.periodic);
        let mut sin2 = OperatorCoeffs::zeros(&self.grid, self.periodic);
        for i in 0..n1 {
            let (j1, j1_2) = (jet1.g1[i], jet1.g2[i]);
            for j in 0..n2 {
                let (j2, j2_2) = (jet2.g1[j], jet2.g2[j]);
                sin0.c20[[i, j]] = inv11[[i, j]] / (j1 * j1);
                sin0.c11[[i, j]] = 2.0 * inv12[[i, j]] / (j1 * j2);
                sin0.c02[[i, j]] = inv22[[i, j]] / (j2 * j2);
                sin0.c10[[i, j]] =
                    -inv11[[i, j]] * j1_2 / (j1 * j1 * j1) + drift1[[i, j]] / j1;
                sin0.c01[[i, j]] =
                    -inv22[[i, j]] * j2_2 / (j2 * j2 * j2) + drift2[[i, j]] / j2;
                sin1.c10[[i, j]] = ctr1[[i, j]] / j1;
                sin1.c01[[i, j]] = ctr2[[i, j]] / j2;
                sin1.c00[[i, j]] = w_lin[[i, j]];
                sin2.c00[[i, j]] = w_quad[[i, j]];
            }
        }
        let valid = jets_mask(&self.grid, &jet1, &jet2);
        Ok(ConjugatedCoeffs { sin0, sin1, sin2, valid })
    }

    /// Decompose the phase-dependent operator into harmonics for the drive
    /// `tau(theta) = alpha0 sin(theta)`.
    pub fn dress(&self, alpha0: f64, omega: f64, cfg: &DressingConfig) -> Result<DressedLaplacian> {
        cfg.validate()?;
        check_drive_params(alpha0, omega)?;
        let n = cfg.n_theta;
        let mut static_part = OperatorCoeffs::zeros(&self.grid, self.periodic);
        let mut harm: Vec<(OperatorCoeffs, OperatorCoeffs)> = (0..cfg.n_max)
            .map(|_| {
                (
                    OperatorCoeffs::zeros(&self.grid, self.periodic),
                    OperatorCoeffs::zeros(&self.grid, self.periodic),
                )
            })
            .collect();
        let mut valid: Option<Array2<bool>> = None;

        for j in 0..n {
            let theta = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
            let tau = alpha0 * theta.sin();
            let cc = self.conjugated_at(tau, cfg.policy)?;
            let m_j = cc.at_amplitude(tau);
            static_part.add_scaled(&m_j, 1.0 / n as f64);
            for (k, (hc, hs)) in harm.iter_mut().enumerate() {
                let m = (k + 1) as f64;
                hc.add_scaled(&m_j, 2.0 / n as f64 * (m * theta).cos());
                hs.add_scaled(&m_j, 2.0 / n as f64 * (m * theta).sin());
            }
            merge_mask(&mut valid, cc.valid.as_ref());
        }

        let scale = harm
            .iter()
            .flat_map(|(hc, hs)| [hc.max_abs(), hs.max_abs()])
            .fold(static_part.max_abs(), f64::max)
            .max(1e-300);
        let last = &harm[cfg.n_max - 1];
        let tail_ratio = (last.0.max_abs() + last.1.max_abs()) / scale;
        Ok(DressedLaplacian {
            grid: self.grid.clone(),
            static_part,
            harmonics: harm,
            alpha0,
            omega,
            tail_ratio,
            valid,
        })
    }
}

/// Size and location of the commutator dropped by the frame factorization.
#[derive(Debug, Clone)]
pub struct BchDiagnostic {
    /// Logarithmic advection rate `alpha^mu d_mu ln |div alpha|`, zeroed
    /// outside the mask.
    pub s_field: ScalarField,
    /// True where `|div alpha|` is large enough for the log-derivative to be
    /// meaningful (at least 20% of its maximum).
    pub mask: Array2<bool>,
    /// Largest `|s|` over the mask.
    pub max_s: f64,
    /// Uniform bound on the dropped commutator term,
    /// `(alpha0^2/4) max |alpha^mu d_mu (div alpha)|`.
    pub neglected_norm: f64,
}

/// Quantify the factorization error of splitting the frame translation into
/// substitution and half-divergence weight.
pub fn bch_diagnostic(shape: &DisplacementShape, alpha0: f64) -> Result<BchDiagnostic> {
    if !(alpha0 >= 0.0) {
        return Err(Error::InvalidInput("quiver amplitude must be non-negative".into()));
    }
    let grid = &shape.grid;
    let d = &shape.div;
    let d1 = diff1_topo(d, 0, grid.dq1(), FdOrder::Four, shape.periodic[0]);
    let d2 = diff1_topo(d, 1, grid.dq2(), FdOrder::Four, shape.periodic[1]);
    let adv = &shape.a1 * &d1 + &shape.a2 * &d2;
    let d_max = d.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let cutoff = 0.2 * d_max;
    let (n1, n2) = grid.shape();
    let mut s = Array2::<f64>::zeros((n1, n2));
    let mut mask = Array2::from_elem((n1, n2), false);
    let mut max_s = 0.0_f64;
    for i in 0..n1 {
        for j in 0..n2 {
            if d[[i, j]].abs() >= cutoff && d_max > 0.0 {
                let v = adv[[i, j]] / d[[i, j]];
                s[[i, j]] = v;
                mask[[i, j]] = true;
                max_s = max_s.max(v.abs());
            }
        }
    }
    let adv_max = adv.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    Ok(BchDiagnostic {
        s_field: ScalarField::from_values(grid, s, crate::grid::Unit::Dimensionless)?,
        mask,
        max_s,
        neglected_norm: 0.25 * alpha0 * alpha0 * adv_max,
    })
}

fn check_drive_params(alpha0: f64, omega: f64) -> Result<()> {
    if !(alpha0 >= 0.0) {
        return Err(Error::InvalidInput("quiver amplitude must be non-negative".into()));
    }
    if !(omega > 0.0) {
        return Err(Error::InvalidInput("frequency must be positive".into()));
    }
    Ok(())
}

fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

fn jets_mask(grid: &Grid2, jet1: &FlowJet, jet2: &FlowJet) -> Option<Array2<bool>> {
    if jet1.valid.iter().all(|v| *v) && jet2.valid.iter().all(|v| *v) {
        return None;
    }
    let (n1, n2) = grid.shape();
    let mut m = Array2::from_elem((n1, n2), true);
    for i in 0..n1 {
        for j in 0..n2 {
            m[[i, j]] = jet1.valid[i] && jet2.valid[j];
        }
    }
    Some(m)
}

fn merge_mask(acc: &mut Option<Array2<bool>>, new: Option<&Array2<bool>>) {
    if let Some(new) = new {
        match acc {
            Some(m) => {
                for (a, b) in m.iter_mut().zip(new.iter()) {
                    *a = *a && *b;
                }
            }
            None => *acc = Some(new.clone()),
        }
    }
}
