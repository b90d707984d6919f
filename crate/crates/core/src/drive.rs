//! Time-periodic drive: projection of a hyperspace vector potential onto the
//! surface, the classical displacement shape it induces, and charge-balance
//! diagnostics of the displacement field.
//!
//! The drive is `A(r, t) = A0(r) cos(omega t)` with a spatially constant (or
//! envelope-modulated) amplitude `A0` in the embedding space. Only the
//! tangential part acts on the confined particle. The classical quiver
//! displacement splits into a dimensionless shape `alpha(q)` (max metric norm
//! one) and a scalar amplitude `alpha0 = |Q| max|A0_tan| / (m omega)`; the
//! oscillating displacement is `alpha^u(q) * alpha0 sin(omega t)` and only the
//! product of shape and amplitude is physical. With this split the cylinder
//! example `A0 = (a, 0, 0)` gives `alpha^theta = -sin(theta)` and a charge of
//! either sign reverses only the (unobservable) phase of the oscillation.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::geometry::MetricField;
use crate::grid::{diff1_topo, trapezoid_weighted, FdOrder, Grid2};

/// Optional spatial modulation of the drive amplitude in the embedding space.
#[derive(Debug, Clone)]
pub enum Envelope {
    /// Spatially homogeneous drive (default).
    Homogeneous,
    /// Isotropic Gaussian modulation `exp(-|r - center|^2 / (2 sigma^2))`.
    Gaussian { center: [f64; 3], sigma: f64 },
}

impl Envelope {
    fn eval(&self, r: [f64; 3]) -> f64 {
        match self {
            Envelope::Homogeneous => 1.0,
            Envelope::Gaussian { center, sigma } => {
                let d2 = (r[0] - center[0]).powi(2)
                    + (r[1] - center[1]).powi(2)
                    + (r[2] - center[2]).powi(2);
                (-d2 / (2.0 * sigma * sigma)).exp()
            }
        }
    }
}

/// Drive parameters in atomic units.
#[derive(Debug, Clone)]
pub struct DriveSpec {
    /// Vector-potential amplitude in the embedding space.
    pub amplitude: [f64; 3],
    /// Angular frequency (> 0).
    pub omega: f64,
    /// Particle charge (sign allowed; only |Q| enters the quiver amplitude).
    pub charge: f64,
    /// Particle mass (> 0).
    pub mass: f64,
    pub envelope: Envelope,
    /// Which axes of the chart close periodically (seam-duplicated grids).
    pub periodic: [bool; 2],
}

impl DriveSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0) {
            return Err(Error::InvalidInput("drive frequency must be positive".into()));
        }
        if !(self.mass > 0.0) {
            return Err(Error::InvalidInput("mass must be positive".into()));
        }
        if self.charge == 0.0 {
            return Err(Error::InvalidInput("charge must be nonzero".into()));
        }
        if let Envelope::Gaussian { sigma, .. } = self.envelope {
            if !(sigma > 0.0) {
                return Err(Error::InvalidInput("envelope width must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Tangential vector field in both covariant and contravariant components.
#[derive(Debug, Clone)]
pub struct TangentField {
    pub grid: Grid2,
    pub cov: [Array2<f64>; 2],
    pub contra: [Array2<f64>; 2],
}

/// Project the hyperspace amplitude onto the tangent frame:
/// `A_u = A0(Y) . t_u`, raised with the inverse metric.
pub fn project_vector_potential(metric: &MetricField, drive: &DriveSpec) -> Result<TangentField> {
    drive.validate()?;
    let grid = metric.grid.clone();
    let shape = grid.shape();
    let mut cov = [Array2::zeros(shape), Array2::zeros(shape)];
    let mut contra = [Array2::zeros(shape), Array2::zeros(shape)];
    for i in 0..grid.n1 {
        for j in 0..grid.n2 {
            let r = [
                metric.position[0][[i, j]],
                metric.position[1][[i, j]],
                metric.position[2][[i, j]],
            ];
            let env = drive.envelope.eval(r);
            let a = [
                drive.amplitude[0] * env,
                drive.amplitude[1] * env,
                drive.amplitude[2] * env,
            ];
            let a1 = a[0] * metric.t1[0][[i, j]]
                + a[1] * metric.t1[1][[i, j]]
                + a[2] * metric.t1[2][[i, j]];
            let a2 = a[0] * metric.t2[0][[i, j]]
                + a[1] * metric.t2[1][[i, j]]
                + a[2] * metric.t2[2][[i, j]];
            cov[0][[i, j]] = a1;
            cov[1][[i, j]] = a2;
            contra[0][[i, j]] = metric.inv11[[i, j]] * a1 + metric.inv12[[i, j]] * a2;
            contra[1][[i, j]] = metric.inv12[[i, j]] * a1 + metric.inv22[[i, j]] * a2;
        }
    }
    Ok(TangentField { grid, cov, contra })
}

/// Dimensionless displacement shape with unit maximum metric norm, its
/// covariant divergence, and the quiver amplitude carried by the drive.
#[derive(Debug, Clone)]
pub struct DisplacementShape {
    pub grid: Grid2,
    /// Contravariant components of the unit-normalized shape.
    pub a1: Array2<f64>,
    pub a2: Array2<f64>,
    /// Covariant divergence of the shape, `(1/sqrt g) d_u (sqrt g alpha^u)`.
    pub div: Array2<f64>,
    /// Quiver amplitude `|Q| max|A0_tan| / (m omega)` (length units).
    pub alpha0: f64,
    pub periodic: [bool; 2],
}

/// Covariant divergence of a contravariant field on the metric's grid.
pub fn covariant_divergence(
    metric: &MetricField,
    a1: &Array2<f64>,
    a2: &Array2<f64>,
    periodic: [bool; 2],
) -> Array2<f64> {
    let grid = &metric.grid;
    let f1 = &metric.sqrt_g * a1;
    let f2 = &metric.sqrt_g * a2;
    let d1 = diff1_topo(&f1, 0, grid.dq1(), FdOrder::Four, periodic[0]);
    let d2 = diff1_topo(&f2, 1, grid.dq2(), FdOrder::Four, periodic[1]);
    (&d1 + &d2) / &metric.sqrt_g
}

/// Build the displacement shape from the projected drive.
///
/// Fails with [`Error::ZeroField`] when the tangential projection vanishes
/// identically (drive orthogonal to the surface everywhere).
pub fn displacement_shape(
    metric: &MetricField,
    projected: &TangentField,
    drive: &DriveSpec,
) -> Result<DisplacementShape> {
    drive.validate()?;
    if !metric.grid.compatible(&projected.grid) {
        return Err(Error::GridMismatch("metric and projected field grids differ".into()));
    }
    let grid = metric.grid.clone();
    // metric norm of the projection per node
    let mut max_norm = 0.0_f64;
    for i in 0..grid.n1 {
        for j in 0..grid.n2 {
            let au = [projected.contra[0][[i, j]], projected.contra[1][[i, j]]];
            let norm2 = metric.g11[[i, j]] * au[0] * au[0]
                + 2.0 * metric.g12[[i, j]] * au[0] * au[1]
                + metric.g22[[i, j]] * au[1] * au[1];
            max_norm = max_norm.max(norm2.max(0.0).sqrt());
        }
    }
    if max_norm < 1e-300 {
        return Err(Error::ZeroField);
    }
    let a1 = projected.contra[0].mapv(|v| v / max_norm);
    let a2 = projected.contra[1].mapv(|v| v / max_norm);
    let div = covariant_divergence(metric, &a1, &a2, drive.periodic);
    let alpha0 = drive.charge.abs() * max_norm / (drive.mass * drive.omega);
    Ok(DisplacementShape { grid, a1, a2, div, alpha0, periodic: drive.periodic })
}

/// Construct a shape directly from contravariant component fields (already on
/// the grid), normalizing to unit maximum metric norm. The carried `alpha0`
/// is taken verbatim. This is the entry point for manufactured drives.
pub fn shape_from_components(
    metric: &MetricField,
    a1: Array2<f64>,
    a2: Array2<f64>,
    alpha0: f64,
    periodic: [bool; 2],
) -> Result<DisplacementShape> {
    let grid = metric.grid.clone();
    if a1.dim() != grid.shape() || a2.dim() != grid.shape() {
        return Err(Error::GridMismatch("component fields do not match the metric grid".into()));
    }
    if !(alpha0 >= 0.0) {
        return Err(Error::InvalidInput("alpha0 must be nonnegative".into()));
    }
    let mut max_norm = 0.0_f64;
    for i in 0..grid.n1 {
        for j in 0..grid.n2 {
            let norm2 = metric.g11[[i, j]] * a1[[i, j]] * a1[[i, j]]
                + 2.0 * metric.g12[[i, j]] * a1[[i, j]] * a2[[i, j]]
                + metric.g22[[i, j]] * a2[[i, j]] * a2[[i, j]];
            max_norm = max_norm.max(norm2.max(0.0).sqrt());
        }
    }
    if max_norm < 1e-300 {
        return Err(Error::ZeroField);
    }
    let a1 = a1.mapv(|v| v / max_norm);
    let a2 = a2.mapv(|v| v / max_norm);
    let div = covariant_divergence(metric, &a1, &a2, periodic);
    Ok(DisplacementShape { grid, a1, a2, div, alpha0, periodic })
}

/// Charge-balance diagnostic of a displacement shape.
#[derive(Debug, Clone)]
pub struct ChargeBalance {
    /// `integral div(alpha) sqrt(g) d2q` over the chart.
    pub interior_integral: f64,
    /// Outflow `contour integral sqrt(g) alpha^u nu_u dl` over the
    /// non-periodic chart edges (divergence-theorem partner of the above).
    pub boundary_flux: f64,
    /// Chart area.
    pub area: f64,
    /// `|interior_integral| / (area * max |div|)`; zero means the shape pumps
    /// no net probability across the chart.
    pub normalized_imbalance: f64,
}

/// Integrate the covariant divergence and the matching boundary flux.
pub fn charge_balance(metric: &MetricField, shape: &DisplacementShape) -> Result<ChargeBalance> {
    if !metric.grid.compatible(&shape.grid) {
        return Err(Error::GridMismatch("metric and shape grids differ".into()));
    }
    let grid = &metric.grid;
    let interior = trapezoid_weighted(&shape.div, &metric.sqrt_g, grid);
    let area = metric.area();

    let mut flux = 0.0;
    if !shape.periodic[0] {
        // edges q1 = max (outward +) and q1 = min (outward -)
        flux += edge_integral(grid, metric, &shape.a1, 0, grid.n1 - 1, 1.0);
        flux += edge_integral(grid, metric, &shape.a1, 0, 0, -1.0);
    }
    if !shape.periodic[1] {
        flux += edge_integral(grid, metric, &shape.a2, 1, grid.n2 - 1, 1.0);
        flux += edge_integral(grid, metric, &shape.a2, 1, 0, -1.0);
    }

    let max_div = shape.div.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let scale = area * max_div;
    let normalized = if scale > 1e-300 { interior.abs() / scale } else { 0.0 };
    Ok(ChargeBalance {
        interior_integral: interior,
        boundary_flux: flux,
        area,
        normalized_imbalance: normalized,
    })
}

fn edge_integral(
    grid: &Grid2,
    metric: &MetricField,
    comp: &Array2<f64>,
    axis: usize,
    index: usize,
    orientation: f64,
) -> f64 {
    // trapezoid along the opposite axis of sqrt(g) * component
    let (n, dq) = if axis == 0 { (grid.n2, grid.dq2()) } else { (grid.n1, grid.dq1()) };
    let mut acc = 0.0;
    for k in 0..n {
        let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
        let (i, j) = if axis == 0 { (index, k) } else { (k, index) };
        acc += w * metric.sqrt_g[[i, j]] * comp[[i, j]];
    }
    orientation * acc * dq
}
