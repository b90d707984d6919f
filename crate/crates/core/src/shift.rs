//! Coordinate flows that realize the oscillating-frame translation operator
//! on a curved chart.
//!
//! For a separable displacement shape (each contravariant component a function
//! of its own coordinate only), the exponential of the displacement generator
//! acts as a substitution: each axis carries an Abel map
//!
//! `h(x) = integral dx / alpha(x)` (anchored at the interval center),
//!
//! the oscillation parameter enters additively in `h`-space, and the flowed
//! coordinate is `g_tau(x) = h^{-1}(h(x) + tau)`. Applying the translation
//! operator to a field is then interpolation at the flowed tensor grid.
//!
//! Zeros of a displacement component split its axis into validity intervals;
//! the Abel integral diverges at a zero and the flow can never cross it. The
//! builder accepts zeros at the interval ends (the flow compresses towards
//! them and nodes beyond are frozen) and rejects interior sign changes.

use ndarray::Array2;
use num_complex::Complex64;

use crate::drive::DisplacementShape;
use crate::error::{Error, Result};
use crate::geometry::MetricField;
use crate::grid::{diff1_topo, FdOrder, Grid2, ScalarField};
use crate::interp::{CubicAxis, MonotoneCubic};

/// Relative cutoff below which a displacement component counts as zero.
const REL_ZERO: f64 = 1e-9;

/// Commutator residual of the two displacement generators; both components
/// must be zero for the per-axis factorization to be exact.
#[derive(Debug, Clone)]
pub struct SeparabilityReport {
    /// `alpha^1 d_1 alpha^2` per node.
    pub residual1: Array2<f64>,
    /// `alpha^2 d_2 alpha^1` per node.
    pub residual2: Array2<f64>,
    pub max_residual: f64,
    /// Residual scale used for the pass/fail decision.
    pub scale: f64,
    pub separable: bool,
}

/// Evaluate the separability commutator residual of a displacement shape.
pub fn separability_residual(shape: &DisplacementShape) -> SeparabilityReport {
    let grid = &shape.grid;
    let d1a2 = diff1_topo(&shape.a2, 0, grid.dq1(), FdOrder::Two, shape.periodic[0]);
    let d2a1 = diff1_topo(&shape.a1, 1, grid.dq2(), FdOrder::Two, shape.periodic[1]);
    let residual1 = &shape.a1 * &d1a2;
    let residual2 = &shape.a2 * &d2a1;
    let max_residual = residual1
        .iter()
        .chain(residual2.iter())
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    // the shape is unit-normalized, so gradients set the natural scale
    let max_grad = d1a2
        .iter()
        .chain(d2a1.iter())
        .chain(diff1_topo(&shape.a1, 0, grid.dq1(), FdOrder::Two, shape.periodic[0]).iter())
        .chain(diff1_topo(&shape.a2, 1, grid.dq2(), FdOrder::Two, shape.periodic[1]).iter())
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    let scale = 1.0 + max_grad;
    SeparabilityReport {
        residual1,
        residual2,
        max_residual,
        scale,
        separable: max_residual <= 1e-10 * scale,
    }
}

/// What to do when a flow target leaves the tabulated range on an axis whose
/// end the displacement does not pin to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowPolicy {
    /// Fail with [`Error::RangeExceeded`]. Default: silent clamping would
    /// corrupt quadratures built on top of the flows.
    Strict,
    /// Clamp the coordinate and mark the node invalid in the result mask.
    ClampMask,
}

/// One axis of an Abel map.
#[derive(Debug, Clone)]
pub enum AxisComponent {
    /// Component identically zero: the axis does not flow.
    Static,
    /// Constant component: exact translation `x + speed * tau`, wrapped on
    /// periodic axes.
    Uniform { speed: f64, periodic: bool },
    /// Tabulated Abel map on a fixed-sign interval.
    Tabulated(Box<AxisTable>),
}

/// Tabulated `h` and `h^{-1}` for one axis.
///
/// Internally the table stores `u = sign(alpha) * h`, which increases with
/// the coordinate whatever the sign of the component, so both directions of
/// the map stay strictly increasing.
#[derive(Debug, Clone)]
pub struct AxisTable {
    /// Tabulated coordinate range (subset of the grid axis after trimming
    /// pinned zeros at the ends).
    pub x_lo: f64,
    pub x_hi: f64,
    /// True when the displacement vanishes at that end of the axis, so the
    /// flow compresses towards it and can never cross.
    pub pinned_lo: bool,
    pub pinned_hi: bool,
    sign: f64,
    u_lo: f64,
    u_hi: f64,
    umap: MonotoneCubic,
    uinv: MonotoneCubic,
    /// Displacement profile over the full axis, for the flow Jacobians.
    profile: CubicAxis,
    /// Max |alpha| over the axis, the profile's natural scale.
    v_scale: f64,
}

impl AxisTable {
    /// Flow one in-table coordinate; overshoot beyond a pinned end clamps to
    /// the table end (the true flow only compresses towards the zero there),
    /// elsewhere the policy decides.
    fn flow_in_table(&self, axis: usize, x: f64, tau: f64, policy: FlowPolicy) -> Result<(f64, bool)> {
        // h(g) = h(x) + tau, in table orientation u = sign * h
        let u = self.umap.eval(x)? + self.sign * tau;
        if u < self.u_lo || u > self.u_hi {
            let at_hi = u > self.u_hi;
            let end = if at_hi { self.x_hi } else { self.x_lo };
            let pinned = if at_hi { self.pinned_hi } else { self.pinned_lo };
            if pinned {
                Ok((end, true))
            } else if policy == FlowPolicy::Strict {
                Err(Error::RangeExceeded { axis, coord: x })
            } else {
                Ok((end, false))
            }
        } else {
            Ok((self.uinv.eval(u)?, true))
        }
    }
}

/// Per-axis Abel maps for a separable displacement shape.
#[derive(Debug, Clone)]
pub struct AbelMap {
    pub grid: Grid2,
    pub comp: [AxisComponent; 2],
}

/// Outcome of flowing a list of coordinates along one axis.
#[derive(Debug, Clone)]
pub struct FlowedCoords {
    pub coords: Vec<f64>,
    /// False where the target left the admissible range and was clamped.
    pub valid: Vec<bool>,
}

impl FlowedCoords {
    pub fn all_valid(&self) -> bool {
        self.valid.iter().all(|v| *v)
    }
}

/// First- and second-derivative data of a one-axis flow map.
#[derive(Debug, Clone)]
pub struct FlowJet {
    /// Flowed coordinates `g_tau(x)`.
    pub g: Vec<f64>,
    /// `dg/dx`, the per-axis Jacobian of the substitution.
    pub g1: Vec<f64>,
    /// `d^2 g/dx^2`.
    pub g2: Vec<f64>,
    pub valid: Vec<bool>,
}

/// Build per-axis Abel maps from a displacement shape.
///
/// Requirements checked here, in order: the commutator residual vanishes,
/// each component is constant along the transverse axis (so a 1-d profile can
/// be extracted), and each nonzero profile keeps a fixed sign away from the
/// interval ends. `refine` subdivides every grid cell for the quadrature and
/// the monotone tables (8 is a good default).
pub fn build_abel_maps(shape: &DisplacementShape, refine: usize) -> Result<AbelMap> {
    let report = separability_residual(shape);
    if !report.separable {
        return Err(Error::NonSeparable { max_residual: report.max_residual });
    }
    let grid = shape.grid.clone();
    let comp1 = build_axis(&grid, &shape.a1, 0, shape.periodic[0], refine)?;
    let comp2 = build_axis(&grid, &shape.a2, 1, shape.periodic[1], refine)?;
    if matches!(comp1, AxisComponent::Static) && matches!(comp2, AxisComponent::Static) {
        return Err(Error::ZeroField);
    }
    Ok(AbelMap { grid, comp: [comp1, comp2] })
}

/// Build a map from closed-form per-axis profiles instead of grid samples
/// (`None` marks a static axis). Midpoint quadrature samples are exact, which
/// makes this the reference path for convergence studies.
pub fn abel_map_from_profiles(
    grid: &Grid2,
    profile1: Option<&dyn Fn(f64) -> f64>,
    profile2: Option<&dyn Fn(f64) -> f64>,
    periodic: [bool; 2],
    refine: usize,
) -> Result<AbelMap> {
    let comp1 = match profile1 {
        None => AxisComponent::Static,
        Some(f) => axis_from_eval(grid.q1_min, grid.dq1(), grid.n1, 0, periodic[0], refine, f)?,
    };
    let comp2 = match profile2 {
        None => AxisComponent::Static,
        Some(f) => axis_from_eval(grid.q2_min, grid.dq2(), grid.n2, 1, periodic[1], refine, f)?,
    };
    Ok(AbelMap { grid: grid.clone(), comp: [comp1, comp2] })
}

fn build_axis(
    grid: &Grid2,
    values: &Array2<f64>,
    axis: usize,
    periodic: bool,
    refine: usize,
) -> Result<AxisComponent> {
    // extract the 1-d profile and verify transverse constancy
    let (n, n_t) = if axis == 0 { (grid.n1, grid.n2) } else { (grid.n2, grid.n1) };
    let mut profile = vec![0.0; n];
    let mut max_abs = 0.0_f64;
    for i in 0..n {
        let mut mean = 0.0;
        for j in 0..n_t {
            let v = if axis == 0 { values[[i, j]] } else { values[[j, i]] };
            mean += v;
        }
        profile[i] = mean / n_t as f64;
        max_abs = max_abs.max(profile[i].abs());
    }
    let mut max_dev = 0.0_f64;
    for i in 0..n {
        for j in 0..n_t {
            let v = if axis == 0 { values[[i, j]] } else { values[[j, i]] };
            max_dev = max_dev.max((v - profile[i]).abs());
        }
    }
    if max_dev > 1e-10 * (1.0 + max_abs) {
        return Err(Error::NonSeparable { max_residual: max_dev });
    }
    if max_abs < 1e-14 {
        return Ok(AxisComponent::Static);
    }
    let spread = profile.iter().fold((f64::MAX, f64::MIN), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    if spread.1 - spread.0 <= 1e-13 * max_abs {
        return Ok(AxisComponent::Uniform { speed: profile[n / 2], periodic });
    }

    // general profile: interpolate the samples, then tabulate
    let (x0, dx) = if axis == 0 { (grid.q1_min, grid.dq1()) } else { (grid.q2_min, grid.dq2()) };
    let interp = CubicAxis::new(x0, dx, profile)?;
    let f = move |x: f64| interp.eval(x).expect("profile evaluation inside the axis");
    axis_from_eval(x0, dx, n, axis, periodic, refine, &f)
}

fn axis_from_eval(
    x0: f64,
    dx: f64,
    n: usize,
    axis: usize,
    periodic: bool,
    refine: usize,
    f: &dyn Fn(f64) -> f64,
) -> Result<AxisComponent> {
    let refine = refine.max(1);
    let nr = (n - 1) * refine + 1;
    let dxr = dx / refine as f64;
    let xs: Vec<f64> = (0..nr).map(|k| x0 + k as f64 * dxr).collect();
    let vs: Vec<f64> = xs.iter().map(|x| f(*x)).collect();
    let max_abs = vs.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if max_abs < 1e-14 {
        return Ok(AxisComponent::Static);
    }
    let spread = vs.iter().fold((f64::MAX, f64::MIN), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    if spread.1 - spread.0 <= 1e-13 * max_abs {
        return Ok(AxisComponent::Uniform { speed: vs[nr / 2], periodic });
    }
    if periodic {
        return Err(Error::InvalidInput(
            "periodic axes support only uniform displacement components".into(),
        ));
    }

    // trim zero (or negligible) values at the ends; they pin the flow
    let cutoff = REL_ZERO * max_abs;
    let mut lo = 0;
    while lo < nr && vs[lo].abs() <= cutoff {
        lo += 1;
    }
    let mut hi = nr - 1;
    while hi > lo && vs[hi].abs() <= cutoff {
        hi -= 1;
    }
    if hi - lo + 1 < 6 {
        return Err(Error::InvalidInput(
            "displacement component vanishes on almost the whole axis".into(),
        ));
    }
    let pinned_lo = lo > 0;
    let pinned_hi = hi < nr - 1;
    // take the sign at the largest-magnitude node so an accidental zero in
    // the middle cannot confuse it
    let peak = (lo..=hi).max_by(|a, b| vs[*a].abs().total_cmp(&vs[*b].abs())).unwrap();
    let sign = vs[peak].signum();
    for k in lo..=hi {
        if vs[k].signum() != sign || vs[k].abs() <= cutoff {
            return Err(Error::SignChange { axis, coord: xs[k] });
        }
    }

    // cumulative Simpson of 1/alpha with midpoint samples, anchored
    // mid-interval; stored as u = sign * h so the table increases
    let nk = hi - lo + 1;
    let mut u = vec![0.0; nk];
    let mut acc = 0.0;
    for k in 0..nk - 1 {
        let a = xs[lo + k];
        let fa = 1.0 / vs[lo + k];
        let fm = 1.0 / f(a + 0.5 * dxr);
        let fb = 1.0 / vs[lo + k + 1];
        acc += sign * dxr / 6.0 * (fa + 4.0 * fm + fb);
        u[k + 1] = acc;
    }
    let anchor = u[nk / 2];
    for v in u.iter_mut() {
        *v -= anchor;
    }

    let x_tab: Vec<f64> = xs[lo..=hi].to_vec();
    // both tables satisfy a known flow equation, so their exact slopes are
    // available: du/dx = sign / v and dx/du = sign * v
    let du: Vec<f64> = vs[lo..=hi].iter().map(|v| sign / v).collect();
    let dxdu: Vec<f64> = vs[lo..=hi].iter().map(|v| sign * v).collect();
    let umap = MonotoneCubic::with_slopes(x_tab.clone(), u.clone(), du)?;
    let uinv = MonotoneCubic::with_slopes(u.clone(), x_tab.clone(), dxdu)?;
    let profile = CubicAxis::new(x0, dxr, vs)?;
    Ok(AxisComponent::Tabulated(Box::new(AxisTable {
        x_lo: x_tab[0],
        x_hi: *x_tab.last().unwrap(),
        pinned_lo,
        pinned_hi,
        sign,
        u_lo: u[0],
        u_hi: u[nk - 1],
        umap,
        uinv,
        profile,
        v_scale: max_abs,
    })))
}

impl AbelMap {
    /// Abel coordinate `h(x)` on `axis`; `None` for a static or uniform axis
    /// outside the tabulated representation it is asked for.
    pub fn eval_h(&self, axis: usize, x: f64) -> Result<f64> {
        match &self.comp[axis] {
            AxisComponent::Static => Err(Error::InvalidInput(
                "static axis carries no Abel coordinate".into(),
            )),
            AxisComponent::Uniform { speed, .. } => {
                let mid = if axis == 0 {
                    0.5 * (self.grid.q1_min + self.grid.q1_max)
                } else {
                    0.5 * (self.grid.q2_min + self.grid.q2_max)
                };
                Ok((x - mid) / speed)
            }
            AxisComponent::Tabulated(t) => Ok(t.sign * t.umap.eval(x)?),
        }
    }

    /// Flow arbitrary coordinates along `axis` by `tau`.
    pub fn flow_points(
        &self,
        axis: usize,
        coords: &[f64],
        tau: f64,
        policy: FlowPolicy,
    ) -> Result<FlowedCoords> {
        // tau = 0 is the identity exactly, whatever the component kind
        if tau == 0.0 {
            return Ok(FlowedCoords { coords: coords.to_vec(), valid: vec![true; coords.len()] });
        }
        let (lo, hi) = if axis == 0 {
            (self.grid.q1_min, self.grid.q1_max)
        } else {
            (self.grid.q2_min, self.grid.q2_max)
        };
        let mut out = Vec::with_capacity(coords.len());
        let mut valid = Vec::with_capacity(coords.len());
        match &self.comp[axis] {
            AxisComponent::Static => {
                out.extend_from_slice(coords);
                valid.resize(coords.len(), true);
            }
            AxisComponent::Uniform { speed, periodic } => {
                let period = hi - lo;
                for &x in coords {
                    let target = x + speed * tau;
                    if *periodic {
                        out.push(lo + (target - lo).rem_euclid(period));
                        valid.push(true);
                    } else if target < lo || target > hi {
                        if policy == FlowPolicy::Strict {
                            return Err(Error::RangeExceeded { axis, coord: target });
                        }
                        out.push(target.clamp(lo, hi));
                        valid.push(false);
                    } else {
                        out.push(target);
                        valid.push(true);
                    }
                }
            }
            AxisComponent::Tabulated(t) => {
                for &x in coords {
                    // frozen margins outside the tabulated fixed-sign interval
                    if x < t.x_lo || x > t.x_hi {
                        out.push(x);
                        valid.push(true);
                        continue;
                    }
                    let (g, ok) = t.flow_in_table(axis, x, tau, policy)?;
                    out.push(g);
                    valid.push(ok);
                }
            }
        }
        Ok(FlowedCoords { coords: out, valid })
    }

    /// Flow coordinates along `axis` and return the first two derivatives of
    /// the flow map at each input point.
    ///
    /// Differentiating the Abel relation `h(g) = h(x) + tau` with
    /// `h' = 1/alpha` gives
    ///
    /// `g' = alpha(g)/alpha(x)`,
    /// `g'' = g' (alpha'(g) - alpha'(x)) / alpha(x)`,
    ///
    /// which stay regular at pinned zeros because numerator and denominator
    /// vanish together. Frozen nodes (outside a tabulated interval, or on a
    /// static axis) carry the identity jet `(x, 1, 0)`.
    pub fn flow_jet(
        &self,
        axis: usize,
        coords: &[f64],
        tau: f64,
        policy: FlowPolicy,
    ) -> Result<FlowJet> {
        let n = coords.len();
        if tau == 0.0 {
            return Ok(FlowJet {
                g: coords.to_vec(),
                g1: vec![1.0; n],
                g2: vec![0.0; n],
                valid: vec![true; n],
            });
        }
        let flowed = self.flow_points(axis, coords, tau, policy)?;
        let mut g1 = vec![1.0; n];
        let mut g2 = vec![0.0; n];
        if let AxisComponent::Tabulated(t) = &self.comp[axis] {
            for k in 0..n {
                let x = coords[k];
                if x < t.x_lo || x > t.x_hi {
                    continue; // frozen margin keeps the identity jet
                }
                let vx = t.profile.eval(x)?;
                if vx.abs() < 1e-12 * t.v_scale {
                    continue; // effectively at a zero: the node does not flow
                }
                let g = flowed.coords[k];
                let vg = t.profile.eval(g)?;
                let d1 = vg / vx;
                g1[k] = d1;
                g2[k] = d1 * (t.profile.eval_deriv(g)? - t.profile.eval_deriv(x)?) / vx;
            }
        }
        Ok(FlowJet { g: flowed.coords, g1, g2, valid: flowed.valid })
    }

    /// Flow jet at the grid's own axis nodes.
    pub fn flow_axis_jet(&self, axis: usize, tau: f64, policy: FlowPolicy) -> Result<FlowJet> {
        let coords = if axis == 0 { self.grid.axis1() } else { self.grid.axis2() };
        self.flow_jet(axis, &coords, tau, policy)
    }

    /// Flow the grid's own axis nodes.
    pub fn flow_axis(&self, axis: usize, tau: f64, policy: FlowPolicy) -> Result<FlowedCoords> {
        let coords = if axis == 0 { self.grid.axis1() } else { self.grid.axis2() };
        self.flow_points(axis, &coords, tau, policy)
    }

    /// Flow a single coordinate (convenience for tests and diagnostics).
    pub fn flow_one(&self, axis: usize, x: f64, tau: f64) -> Result<f64> {
        let r = self.flow_points(axis, &[x], tau, FlowPolicy::Strict)?;
        Ok(r.coords[0])
    }

    fn axis_is_periodic(&self, axis: usize) -> bool {
        matches!(self.comp[axis], AxisComponent::Uniform { periodic: true, .. })
    }
}

/// A field evaluated at flowed coordinates, with a validity mask when the
/// clamp policy had to fire.
#[derive(Debug, Clone)]
pub struct ShiftedField {
    pub field: ScalarField,
    /// `None` when every node is valid.
    pub valid: Option<Array2<bool>>,
}

/// Evaluate `f(g_tau(q))` on the grid: per-axis flows followed by cubic
/// interpolation along each axis in turn.
pub fn shift_field(
    f: &ScalarField,
    map: &AbelMap,
    tau: f64,
    policy: FlowPolicy,
) -> Result<ShiftedField> {
    if !f.grid.compatible(&map.grid) {
        return Err(Error::GridMismatch("field and Abel map grids differ".into()));
    }
    let grid = &f.grid;
    let (n1, n2) = grid.shape();
    let flow1 = map.flow_axis(0, tau, policy)?;
    let flow2 = map.flow_axis(1, tau, policy)?;

    // pass 1: interpolate along axis 1 at the flowed coordinates
    let mut stage = f.values.clone();
    if !matches!(map.comp[0], AxisComponent::Static) && tau != 0.0 {
        let periodic = map.axis_is_periodic(0);
        let mut col = vec![0.0; n1];
        for j in 0..n2 {
            for i in 0..n1 {
                col[i] = f.values[[i, j]];
            }
            let interp = if periodic {
                CubicAxis::new_periodic(grid.q1_min, grid.dq1(), col[..n1 - 1].to_vec())?
            } else {
                CubicAxis::new(grid.q1_min, grid.dq1(), col.clone())?
            };
            for i in 0..n1 {
                stage[[i, j]] = interp.eval(flow1.coords[i])?;
            }
        }
    }

    // pass 2: interpolate along axis 2
    let mut out = stage.clone();
    if !matches!(map.comp[1], AxisComponent::Static) && tau != 0.0 {
        let periodic = map.axis_is_periodic(1);
        let mut row = vec![0.0; n2];
        for i in 0..n1 {
            for j in 0..n2 {
                row[j] = stage[[i, j]];
            }
            let interp = if periodic {
                CubicAxis::new_periodic(grid.q2_min, grid.dq2(), row[..n2 - 1].to_vec())?
            } else {
                CubicAxis::new(grid.q2_min, grid.dq2(), row.clone())?
            };
            for j in 0..n2 {
                out[[i, j]] = interp.eval(flow2.coords[j])?;
            }
        }
    }

    let mask = if flow1.all_valid() && flow2.all_valid() {
        None
    } else {
        let mut m = Array2::from_elem((n1, n2), true);
        for i in 0..n1 {
            for j in 0..n2 {
                m[[i, j]] = flow1.valid[i] && flow2.valid[j];
            }
        }
        Some(m)
    };
    Ok(ShiftedField {
        field: ScalarField::from_values(grid, out, f.unit)?,
        valid: mask,
    })
}

/// Generalized momentum of the oscillating frame,
/// `p_alpha = -i hbar alpha0 sin(omega t) [ (1/2) div(alpha) + alpha . grad ]`.
///
/// The discrete action uses the anticommutator split
/// `(1/2)[(1/sqrt g) D(sqrt g alpha psi) + alpha D psi]`, which is exactly
/// Hermitian under the area-weighted inner product for interior-supported
/// fields.
pub struct MomentumOperator<'a> {
    pub shape: &'a DisplacementShape,
    pub metric: &'a MetricField,
    pub omega: f64,
}

impl<'a> MomentumOperator<'a> {
    pub fn new(shape: &'a DisplacementShape, metric: &'a MetricField, omega: f64) -> Result<Self> {
        if !shape.grid.compatible(&metric.grid) {
            return Err(Error::GridMismatch("shape and metric grids differ".into()));
        }
        if !(omega > 0.0) {
            return Err(Error::InvalidInput("frequency must be positive".into()));
        }
        Ok(MomentumOperator { shape, metric, omega })
    }

    /// Apply at time `t` to a complex field.
    pub fn apply(&self, t: f64, psi: &Array2<Complex64>) -> Array2<Complex64> {
        let factor = self.shape.alpha0 * (self.omega * t).sin();
        let d = self.apply_generator(psi);
        d.mapv(|v| Complex64::new(0.0, -1.0) * factor * v)
    }

    /// The time-independent generator `(1/2) div(alpha) + alpha . grad` in
    /// anticommutator form (no `-i hbar alpha0 sin` prefactor).
    pub fn apply_generator(&self, psi: &Array2<Complex64>) -> Array2<Complex64> {
        let grid = &self.shape.grid;
        let (re, im) = split_complex(psi);
        let re_out = self.generator_real(&re);
        let im_out = self.generator_real(&im);
        let mut out = Array2::from_elem(grid.shape(), Complex64::new(0.0, 0.0));
        for i in 0..grid.n1 {
            for j in 0..grid.n2 {
                out[[i, j]] = Complex64::new(re_out[[i, j]], im_out[[i, j]]);
            }
        }
        out
    }

    fn generator_real(&self, psi: &Array2<f64>) -> Array2<f64> {
        let grid = &self.shape.grid;
        let (dq1, dq2) = (grid.dq1(), grid.dq2());
        let sg = &self.metric.sqrt_g;
        let w1 = sg * &self.shape.a1 * psi;
        let w2 = sg * &self.shape.a2 * psi;
        let div_part = (&diff1_topo(&w1, 0, dq1, FdOrder::Two, self.shape.periodic[0])
            + &diff1_topo(&w2, 1, dq2, FdOrder::Two, self.shape.periodic[1]))
            / sg;
        let grad_part = &self.shape.a1 * &diff1_topo(psi, 0, dq1, FdOrder::Two, self.shape.periodic[0])
            + &self.shape.a2 * &diff1_topo(psi, 1, dq2, FdOrder::Two, self.shape.periodic[1]);
        (div_part + grad_part).mapv(|v| 0.5 * v)
    }
}

fn split_complex(a: &Array2<Complex64>) -> (Array2<f64>, Array2<f64>) {
    (a.mapv(|v| v.re), a.mapv(|v| v.im))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{frame_and_metric, make_surface, SurfaceKind, SurfaceSpec};
    use crate::grid::Unit;

    fn plane_metric(grid: &Grid2) -> MetricField {
        let spec = SurfaceSpec { kind: SurfaceKind::Plane, grid: grid.clone() };
        frame_and_metric(&make_surface(&spec).unwrap()).unwrap()
    }

    /// map with alpha(x) = x on [lo, e], static second axis
    fn log_map(n: usize, refine: usize, lo: f64) -> AbelMap {
        let grid = Grid2::new(n, 8, lo, std::f64::consts::E, 0.0, 1.0).unwrap();
        abel_map_from_profiles(&grid, Some(&|x: f64| x), None, [false, false], refine).unwrap()
    }

    #[test]
    fn separability_detects_swapped_components() {
        let grid = Grid2::new(24, 24, 0.5, 1.5, 0.5, 1.5).unwrap();
        let metric = plane_metric(&grid);
        let a1 = grid.sample(Unit::Dimensionless, |_, y| y).values;
        let a2 = grid.sample(Unit::Dimensionless, |x, _| x).values;
        let shape =
            crate::drive::shape_from_components(&metric, a1, a2, 1.0, [false, false]).unwrap();
        let rep = separability_residual(&shape);
        assert!(!rep.separable);
        // residual components are alpha^1 * d1 alpha^2 = y * 1 (up to the
        // unit normalization of the shape) and symmetrically x * 1
        let norm = {
            // max metric norm of (y, x) on the square is at (1.5, 1.5)
            (1.5_f64 * 1.5 + 1.5 * 1.5).sqrt()
        };
        let i = 12;
        let j = 20;
        let want = (grid.q2(j) / norm) * (1.0 / norm);
        assert!((rep.residual1[[i, j]] - want).abs() < 1e-6);
        assert!(matches!(
            build_abel_maps(&shape, 4),
            Err(Error::NonSeparable { .. })
        ));
    }

    #[test]
    fn abel_map_recovers_logarithm() {
        // alpha(x) = x  =>  h(x) = ln x, anchored at the interval center
        let map = log_map(129, 16, 1.0);
        let mid = 0.5 * (1.0 + std::f64::consts::E);
        // the anchor sits at the center *node* of the trimmed table
        let anchor = map.eval_h(0, mid).unwrap() - (mid).ln();
        for k in 0..20 {
            let x = 1.05 + k as f64 * 0.08;
            let h = map.eval_h(0, x).unwrap();
            assert!(
                (h - (x.ln() + anchor)).abs() < 1e-9,
                "x = {x}, h = {h}, want {}",
                x.ln() + anchor
            );
        }
    }

    #[test]
    fn flow_closed_form_exponential() {
        // alpha(x) = x  =>  g_tau(x) = x e^tau
        let map = log_map(257, 8, 1.0);
        for &(x, tau) in &[(1.2, 0.4), (1.5, 0.55), (2.0, 0.3), (2.5, -0.8), (1.05, 0.9)] {
            let g = map.flow_one(0, x, tau).unwrap();
            assert!(
                (g - x * f64::exp(tau)).abs() < 1e-9,
                "x = {x}, tau = {tau}, g = {g}"
            );
        }
    }

    #[test]
    fn flow_closed_form_arctan() {
        // alpha(x) = 1 + x^2  =>  h = arctan(x), g_tau(x) = tan(arctan x + tau)
        let grid = Grid2::new(257, 8, -2.0, 2.0, 0.0, 1.0).unwrap();
        let map = abel_map_from_profiles(&grid, Some(&|x: f64| 1.0 + x * x), None, [false, false], 8)
            .unwrap();
        for &(x, tau) in &[(-1.0, 0.5), (0.3, 0.4), (1.2, -0.6), (-1.8, 0.2)] {
            let g = map.flow_one(0, x, tau).unwrap();
            let want = (x.atan() + tau).tan();
            assert!((g - want).abs() < 1e-9, "x = {x}, tau = {tau}: {g} vs {want}");
        }
    }

    #[test]
    fn abel_relation_group_law_and_inverse() {
        let map = log_map(257, 8, 0.5);
        let taus = [0.12, -0.35, 0.5];
        for &x in &[0.75, 0.9, 1.1, 1.3] {
            let h0 = map.eval_h(0, x).unwrap();
            for &tau in &taus {
                let g = map.flow_one(0, x, tau).unwrap();
                // Abel relation h(g_tau(x)) = h(x) + tau
                assert!((map.eval_h(0, g).unwrap() - h0 - tau).abs() < 1e-9);
                // inverse round trip
                let back = map.flow_one(0, g, -tau).unwrap();
                assert!((back - x).abs() < 1e-10);
                // group law
                let two_step = map.flow_one(0, g, 0.2).unwrap();
                let direct = map.flow_one(0, x, tau + 0.2).unwrap();
                assert!((two_step - direct).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn uniform_translation_is_exact_and_wraps() {
        let grid = Grid2::new(33, 33, 0.0, 2.0 * std::f64::consts::PI, -1.0, 1.0).unwrap();
        let map =
            abel_map_from_profiles(&grid, Some(&|_| 1.0), None, [true, false], 4).unwrap();
        let g = map.flow_one(0, 1.0, 0.7).unwrap();
        assert!((g - 1.7).abs() < 1e-14);
        // wraps around the seam
        let g = map.flow_one(0, 6.0, 1.0).unwrap();
        assert!((g - (7.0 - 2.0 * std::f64::consts::PI)).abs() < 1e-12);
    }

    #[test]
    fn strict_policy_rejects_escaping_flows() {
        let grid = Grid2::new(33, 8, 0.0, 1.0, 0.0, 1.0).unwrap();
        let map =
            abel_map_from_profiles(&grid, Some(&|_| 1.0), None, [false, false], 4).unwrap();
        let err = map.flow_points(0, &[0.9], 0.5, FlowPolicy::Strict);
        assert!(matches!(err, Err(Error::RangeExceeded { .. })));
        let ok = map.flow_points(0, &[0.9], 0.5, FlowPolicy::ClampMask).unwrap();
        assert!(!ok.valid[0]);
        assert!((ok.coords[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn interior_sign_change_rejected_but_pinned_ends_accepted() {
        // sin(theta) on [0, pi]: zeros exactly at the ends -> accepted
        let grid = Grid2::new(65, 8, 0.0, std::f64::consts::PI, 0.0, 1.0).unwrap();
        let map = abel_map_from_profiles(&grid, Some(&|x: f64| x.sin()), None, [false, false], 8)
            .unwrap();
        match &map.comp[0] {
            AxisComponent::Tabulated(t) => {
                assert!(t.pinned_lo && t.pinned_hi);
            }
            other => panic!("expected tabulated axis, got {other:?}"),
        }
        // flows stay inside no matter the tau
        let flowed = map.flow_axis(0, 3.0, FlowPolicy::Strict).unwrap();
        assert!(flowed.all_valid());
        for &c in &flowed.coords {
            assert!((0.0..=std::f64::consts::PI).contains(&c));
        }

        // sin(theta) on [-pi/2, pi/2] changes sign at zero -> rejected
        let grid = Grid2::new(65, 8, -1.5, 1.5, 0.0, 1.0).unwrap();
        let err = abel_map_from_profiles(&grid, Some(&|x: f64| x.sin()), None, [false, false], 8);
        assert!(matches!(err, Err(Error::SignChange { axis: 0, .. })));
    }

    #[test]
    fn cylinder_half_shell_flow_matches_closed_form() {
        // alpha(theta) = sin(theta) on (0, pi): h = ln tan(theta/2), so
        // g_tau(theta) = 2 atan(e^tau tan(theta/2))
        let grid = Grid2::new(513, 8, 0.0, std::f64::consts::PI, 0.0, 1.0).unwrap();
        let map = abel_map_from_profiles(&grid, Some(&|x: f64| x.sin()), None, [false, false], 8)
            .unwrap();
        for &(th, tau) in &[(0.8, 0.5), (1.5707, -0.4), (2.2, 0.3), (0.5, -0.7)] {
            let g = map.flow_one(0, th, tau).unwrap();
            let want = 2.0 * (f64::exp(tau) * (th / 2.0_f64).tan()).atan();
            assert!((g - want).abs() < 1e-8, "theta = {th}, tau = {tau}: {g} vs {want}");
        }
    }

    #[test]
    fn flow_jet_matches_closed_form_derivatives() {
        // alpha(x) = 1 + x^2: g = tan(atan x + tau), g' = (1+g^2)/(1+x^2),
        // g'' = g' * 2(g - x)/(1 + x^2)
        let grid = Grid2::new(257, 8, -2.0, 2.0, 0.0, 1.0).unwrap();
        let map = abel_map_from_profiles(&grid, Some(&|x: f64| 1.0 + x * x), None, [false, false], 8)
            .unwrap();
        let xs = [-0.5, 0.3, 0.9];
        for &tau in &[0.2, -0.5] {
            let jet = map.flow_jet(0, &xs, tau, FlowPolicy::Strict).unwrap();
            for (k, &x) in xs.iter().enumerate() {
                let g = (x.atan() + tau).tan();
                let d1 = (1.0 + g * g) / (1.0 + x * x);
                let d2 = d1 * 2.0 * (g - x) / (1.0 + x * x);
                assert!((jet.g[k] - g).abs() < 1e-9, "g at x = {x}, tau = {tau}");
                assert!((jet.g1[k] - d1).abs() < 1e-8, "g' at x = {x}: {} vs {d1}", jet.g1[k]);
                assert!((jet.g2[k] - d2).abs() < 1e-7, "g'' at x = {x}: {} vs {d2}", jet.g2[k]);
            }
        }

        // alpha(theta) = sin(theta), pinned at both ends: g' = sin g / sin x,
        // g'' = sin g (cos g - cos x) / sin^2 x
        let grid = Grid2::new(513, 8, 0.0, std::f64::consts::PI, 0.0, 1.0).unwrap();
        let map = abel_map_from_profiles(&grid, Some(&|x: f64| x.sin()), None, [false, false], 8)
            .unwrap();
        let xs = [0.3, 0.9, std::f64::consts::FRAC_PI_2, 2.4];
        let tau = 0.6;
        let jet = map.flow_jet(0, &xs, tau, FlowPolicy::Strict).unwrap();
        for (k, &x) in xs.iter().enumerate() {
            let g = 2.0 * (f64::exp(tau) * (x / 2.0).tan()).atan();
            let d1 = g.sin() / x.sin();
            let d2 = g.sin() * (g.cos() - x.cos()) / (x.sin() * x.sin());
            assert!((jet.g[k] - g).abs() < 1e-8);
            assert!((jet.g1[k] - d1).abs() < 1e-8, "g' at x = {x}: {} vs {d1}", jet.g1[k]);
            assert!((jet.g2[k] - d2).abs() < 1e-7, "g'' at x = {x}: {} vs {d2}", jet.g2[k]);
        }
    }

    #[test]
    fn flow_jet_identity_and_uniform_cases_are_exact() {
        let grid = Grid2::new(65, 8, -2.0, 2.0, 0.0, 1.0).unwrap();
        let map = abel_map_from_profiles(&grid, Some(&|x: f64| 1.0 + x * x), None, [false, false], 8)
            .unwrap();
        let xs: Vec<f64> = grid.axis1();
        let jet = map.flow_jet(0, &xs, 0.0, FlowPolicy::Strict).unwrap();
        for k in 0..xs.len() {
            assert_eq!(jet.g[k], xs[k]);
            assert_eq!(jet.g1[k], 1.0);
            assert_eq!(jet.g2[k], 0.0);
        }

        // a uniform component translates with unit Jacobian
        let map = abel_map_from_profiles(&grid, Some(&|_| 0.7), None, [true, false], 4).unwrap();
        let jet = map.flow_jet(0, &[0.5], 1.2, FlowPolicy::Strict).unwrap();
        assert!((jet.g[0] - (0.5 + 0.7 * 1.2)).abs() < 1e-14);
        assert_eq!(jet.g1[0], 1.0);
        assert_eq!(jet.g2[0], 0.0);
    }

    #[test]
    fn shift_field_closed_form_square() {
        // alpha(x) = x, f = x^2: the shifted field is x^2 e^{2 tau}
        let grid = Grid2::new(257, 17, 1.0, std::f64::consts::E, 0.0, 1.0).unwrap();
        let map = abel_map_from_profiles(&grid, Some(&|x: f64| x), None, [false, false], 8)
            .unwrap();
        let f = grid.sample(Unit::Dimensionless, |x, _| x * x);
        let tau = 0.37;
        let shifted = shift_field(&f, &map, tau, FlowPolicy::ClampMask).unwrap();
        let scale = f64::exp(2.0 * tau);
        for i in 0..grid.n1 {
            let x = grid.q1(i);
            if x * f64::exp(tau) <= std::f64::consts::E {
                assert!(
                    (shifted.field.values[[i, 8]] - x * x * scale).abs() < 1e-8,
                    "x = {x}"
                );
            }
        }
        // nodes whose flow escaped are masked
        assert!(shifted.valid.is_some());
    }

    #[test]
    fn derivative_identity_converges_at_second_order() {
        // d_x [f(g_tau(x))] = (1/v(x)) d_tau [f(g_tau(x))] for v(x) = x;
        // probe the x-derivative with the grid stencil and the tau-derivative
        // with the exact flow, and watch the stencil error fall ~4x per halving
        let tau = 0.3;
        let mut errs = Vec::new();
        for n in [65usize, 129, 257] {
            let grid = Grid2::new(n, 8, 1.0, std::f64::consts::E, 0.0, 1.0).unwrap();
            let map = abel_map_from_profiles(&grid, Some(&|x: f64| x), None, [false, false], 16)
                .unwrap();
            let f = grid.sample(Unit::Dimensionless, |x, _| (2.0 * x).sin());
            let shifted = shift_field(&f, &map, tau, FlowPolicy::ClampMask).unwrap();
            let dx = crate::grid::diff1(
                &shifted.field.values,
                0,
                grid.dq1(),
                crate::grid::FdOrder::Two,
            );
            let mut e = 0.0_f64;
            for i in 0..n {
                let x = grid.q1(i);
                let g = x * f64::exp(tau);
                if g > std::f64::consts::E - 0.05 || !shifted_valid(&shifted, i) {
                    continue;
                }
                // exact: d_x f(g) = f'(g) e^tau
                let want = 2.0 * (2.0 * g).cos() * f64::exp(tau);
                e = e.max((dx[[i, 4]] - want).abs());
            }
            errs.push(e);
        }
        assert!(errs[0] / errs[1] > 3.5, "errs = {errs:?}");
        assert!(errs[1] / errs[2] > 3.5, "errs = {errs:?}");
    }

    fn shifted_valid(s: &ShiftedField, i: usize) -> bool {
        s.valid.as_ref().map(|m| m[[i, 4]]).unwrap_or(true)
    }

    #[test]
    fn momentum_operator_is_hermitian() {
        let grid = Grid2::new(48, 48, -3.0, 3.0, -3.0, 3.0).unwrap();
        let metric = plane_metric(&grid);
        let a1 = grid.sample(Unit::Dimensionless, |x, _| (0.3 * x).cos()).values;
        let a2 = grid.sample(Unit::Dimensionless, |_, y| 0.5 * (0.2 * y).cos()).values;
        let shape =
            crate::drive::shape_from_components(&metric, a1, a2, 1.3, [false, false]).unwrap();
        let op = MomentumOperator::new(&shape, &metric, 0.8).unwrap();

        let bump = |x: f64, y: f64, cx: f64, cy: f64| {
            let r2 = (x - cx).powi(2) + (y - cy).powi(2);
            if r2 < 2.0 { (1.0 - r2 / 2.0).powi(3) } else { 0.0 }
        };
        let mut phi = Array2::from_elem(grid.shape(), Complex64::new(0.0, 0.0));
        let mut psi = phi.clone();
        for i in 0..grid.n1 {
            for j in 0..grid.n2 {
                let (x, y) = (grid.q1(i), grid.q2(j));
                phi[[i, j]] = Complex64::new(bump(x, y, -0.4, 0.2), 0.3 * bump(x, y, 0.1, -0.5));
                psi[[i, j]] = Complex64::new(bump(x, y, 0.5, 0.4), -0.2 * bump(x, y, -0.2, 0.0));
            }
        }
        let t = 0.9;
        let p_psi = op.apply(t, &psi);
        let p_phi = op.apply(t, &phi);
        let dot = |a: &Array2<Complex64>, b: &Array2<Complex64>| {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..grid.n1 {
                for j in 0..grid.n2 {
                    acc += a[[i, j]].conj() * b[[i, j]] * metric.sqrt_g[[i, j]];
                }
            }
            acc * grid.dq1() * grid.dq2()
        };
        let lhs = dot(&phi, &p_psi);
        let rhs = dot(&p_phi, &psi);
        let scale = lhs.norm().max(rhs.norm()).max(1e-300);
        assert!(
            (lhs - rhs).norm() / scale < 1e-12,
            "lhs = {lhs}, rhs = {rhs}"
        );
    }
}
