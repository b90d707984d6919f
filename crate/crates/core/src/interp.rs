//! One-dimensional interpolation and quadrature building blocks.
//!
//! Two interpolants cover all uses in the crate:
//!
//! * [`CubicAxis`]: cubic Hermite interpolation on a uniform axis with slopes
//!   from fourth-order finite differences. Used to evaluate tabulated fields
//!   at flowed coordinates; reproduces cubic polynomials exactly away from
//!   the edges and converges as `h^4` on smooth data.
//! * [`MonotoneCubic`]: shape-preserving piecewise cubic on a (possibly
//!   nonuniform) strictly monotone table, with a linear fallback in the two
//!   end cells. Used for Abel maps and their inverses, where overshoot would
//!   break monotonicity and hence invertibility.

use crate::error::{Error, Result};

/// Cubic Hermite interpolant on a uniform axis.
#[derive(Debug, Clone)]
pub struct CubicAxis {
    x0: f64,
    dx: f64,
    y: Vec<f64>,
    m: Vec<f64>,
    periodic: bool,
}

impl CubicAxis {
    /// Non-periodic interpolant through `y` at `x0 + k*dx`.
    pub fn new(x0: f64, dx: f64, y: Vec<f64>) -> Result<Self> {
        if y.len() < 6 {
            return Err(Error::InvalidInput("cubic axis needs at least 6 samples".into()));
        }
        if !(dx > 0.0) {
            return Err(Error::InvalidInput("cubic axis needs positive spacing".into()));
        }
        let m = slopes_order4(&y, dx);
        Ok(CubicAxis { x0, dx, y, m, periodic: false })
    }

    /// Periodic interpolant; `y` holds one period of *distinct* samples
    /// (the seam value is implied equal to `y[0]`), period `len = y.len()*dx`.
    pub fn new_periodic(x0: f64, dx: f64, y: Vec<f64>) -> Result<Self> {
        if y.len() < 6 {
            return Err(Error::InvalidInput("cubic axis needs at least 6 samples".into()));
        }
        let n = y.len();
        let mut m = vec![0.0; n];
        let c = 1.0 / (12.0 * dx);
        for i in 0..n {
            let ym2 = y[(i + n - 2) % n];
            let ym1 = y[(i + n - 1) % n];
            let yp1 = y[(i + 1) % n];
            let yp2 = y[(i + 2) % n];
            m[i] = c * (ym2 - 8.0 * ym1 + 8.0 * yp1 - yp2);
        }
        Ok(CubicAxis { x0, dx, y, m, periodic: true })
    }

    pub fn x_min(&self) -> f64 {
        self.x0
    }

    pub fn x_max(&self) -> f64 {
        if self.periodic {
            self.x0 + self.y.len() as f64 * self.dx
        } else {
            self.x0 + (self.y.len() - 1) as f64 * self.dx
        }
    }

    /// Evaluate at `x`. Non-periodic interpolants reject points outside the
    /// table by more than a small roundoff margin.
    pub fn eval(&self, x: f64) -> Result<f64> {
        let (k, k1, t) = self.locate(x)?;
        Ok(hermite(self.y[k], self.y[k1], self.m[k], self.m[k1], t, self.dx))
    }

    /// Derivative of the interpolant at `x` (exact for the piecewise cubic).
    pub fn eval_deriv(&self, x: f64) -> Result<f64> {
        let (k, k1, t) = self.locate(x)?;
        Ok(hermite_deriv(self.y[k], self.y[k1], self.m[k], self.m[k1], t, self.dx))
    }

    /// Cell index pair and local parameter for an evaluation point.
    fn locate(&self, x: f64) -> Result<(usize, usize, f64)> {
        let n = self.y.len();
        if self.periodic {
            let period = n as f64 * self.dx;
            let mut u = (x - self.x0).rem_euclid(period);
            if !u.is_finite() {
                return Err(Error::InvalidInput("non-finite interpolation point".into()));
            }
            if u >= period {
                u = 0.0;
            }
            let k = ((u / self.dx).floor() as usize).min(n - 1);
            let t = u / self.dx - k as f64;
            return Ok((k, (k + 1) % n, t));
        }
        let margin = 1e-9 * self.dx;
        if x < self.x0 - margin || x > self.x_max() + margin {
            return Err(Error::RangeExceeded { axis: 0, coord: x });
        }
        let u = ((x - self.x0) / self.dx).clamp(0.0, (n - 1) as f64);
        let mut k = u.floor() as usize;
        if k >= n - 1 {
            k = n - 2;
        }
        Ok((k, k + 1, u - k as f64))
    }
}

fn hermite(y0: f64, y1: f64, m0: f64, m1: f64, t: f64, h: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    y0 * (2.0 * t3 - 3.0 * t2 + 1.0)
        + h * m0 * (t3 - 2.0 * t2 + t)
        + y1 * (-2.0 * t3 + 3.0 * t2)
        + h * m1 * (t3 - t2)
}

fn hermite_deriv(y0: f64, y1: f64, m0: f64, m1: f64, t: f64, h: f64) -> f64 {
    let t2 = t * t;
    (y0 * (6.0 * t2 - 6.0 * t)
        + h * m0 * (3.0 * t2 - 4.0 * t + 1.0)
        + y1 * (-6.0 * t2 + 6.0 * t)
        + h * m1 * (3.0 * t2 - 2.0 * t))
        / h
}

fn slopes_order4(y: &[f64], dx: f64) -> Vec<f64> {
    let n = y.len();
    let mut m = vec![0.0; n];
    let c = 1.0 / (12.0 * dx);
    m[0] = c * (-25.0 * y[0] + 48.0 * y[1] - 36.0 * y[2] + 16.0 * y[3] - 3.0 * y[4]);
    m[1] = c * (-3.0 * y[0] - 10.0 * y[1] + 18.0 * y[2] - 6.0 * y[3] + y[4]);
    for i in 2..n - 2 {
        m[i] = c * (y[i - 2] - 8.0 * y[i - 1] + 8.0 * y[i + 1] - y[i + 2]);
    }
    m[n - 2] =
        -c * (-3.0 * y[n - 1] - 10.0 * y[n - 2] + 18.0 * y[n - 3] - 6.0 * y[n - 4] + y[n - 5]);
    m[n - 1] = -c
        * (-25.0 * y[n - 1] + 48.0 * y[n - 2] - 36.0 * y[n - 3] + 16.0 * y[n - 4]
            - 3.0 * y[n - 5]);
    m
}

/// Shape-preserving cubic through a strictly monotone table `(x, y)`.
///
/// Slopes come either from the Fritsch-Carlson weighted harmonic mean
/// ([`MonotoneCubic::new`]) or from the caller
/// ([`MonotoneCubic::with_slopes`]); both stay inside the region that keeps
/// the interpolant monotone whenever the data are. The first and last cells
/// fall back to linear interpolation so the ends can never overshoot, at the
/// cost of lower order there.
#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let (d, h) = Self::validate(&x, &y)?;
        let n = x.len();
        let mut m = vec![0.0; n];
        m[0] = d[0];
        m[n - 1] = d[n - 2];
        for i in 1..n - 1 {
            if d[i - 1] * d[i] <= 0.0 {
                m[i] = 0.0;
            } else {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                m[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
            }
        }
        Ok(MonotoneCubic { x, y, m })
    }

    /// Like [`MonotoneCubic::new`] but with caller-supplied derivatives,
    /// useful when the table comes from integrating a known rate so the exact
    /// slopes are available. Slopes are clipped into the Fritsch-Carlson
    /// region (same sign as the data, at most three times the adjacent
    /// secants), which preserves monotonicity even for inconsistent input.
    pub fn with_slopes(x: Vec<f64>, y: Vec<f64>, slopes: Vec<f64>) -> Result<Self> {
        let (d, _) = Self::validate(&x, &y)?;
        let n = x.len();
        if slopes.len() != n {
            return Err(Error::InvalidInput(
                "slope table must match the node count".into(),
            ));
        }
        let sgn = if y[n - 1] > y[0] { 1.0 } else { -1.0 };
        let mut m = vec![0.0; n];
        for i in 0..n {
            let dl = sgn * if i > 0 { d[i - 1] } else { d[0] };
            let dr = sgn * if i < n - 1 { d[i] } else { d[n - 2] };
            let cap = 3.0 * dl.min(dr);
            m[i] = sgn * (sgn * slopes[i]).clamp(0.0, cap);
        }
        Ok(MonotoneCubic { x, y, m })
    }

    fn validate(x: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if x.len() != y.len() || x.len() < 4 {
            return Err(Error::InvalidInput(
                "monotone table needs >= 4 points with matching lengths".into(),
            ));
        }
        let n = x.len();
        for i in 1..n {
            if !(x[i] > x[i - 1]) {
                return Err(Error::InvalidInput(
                    "monotone table abscissae must be strictly increasing".into(),
                ));
            }
        }
        let inc = y[n - 1] > y[0];
        for i in 1..n {
            let up = y[i] > y[i - 1];
            if up != inc {
                return Err(Error::InvalidInput(
                    "monotone table ordinates must be strictly monotone".into(),
                ));
            }
        }
        let mut d = vec![0.0; n - 1];
        let mut h = vec![0.0; n - 1];
        for i in 0..n - 1 {
            h[i] = x[i + 1] - x[i];
            d[i] = (y[i + 1] - y[i]) / h[i];
        }
        Ok((d, h))
    }

    pub fn x_min(&self) -> f64 {
        self.x[0]
    }

    pub fn x_max(&self) -> f64 {
        *self.x.last().unwrap()
    }

    /// Evaluate inside the table; points outside (beyond a roundoff margin)
    /// are rejected.
    pub fn eval(&self, xq: f64) -> Result<f64> {
        let n = self.x.len();
        let margin = 1e-9 * (self.x[n - 1] - self.x[0]).abs() / n as f64;
        if xq < self.x[0] - margin || xq > self.x[n - 1] + margin {
            return Err(Error::RangeExceeded { axis: 0, coord: xq });
        }
        let xq = xq.clamp(self.x[0], self.x[n - 1]);
        // binary search for the cell
        let mut lo = 0usize;
        let mut hi = n - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.x[mid] <= xq {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let k = lo;
        let h = self.x[k + 1] - self.x[k];
        let t = (xq - self.x[k]) / h;
        if k == 0 || k == n - 2 {
            // linear fallback in the end cells
            return Ok(self.y[k] * (1.0 - t) + self.y[k + 1] * t);
        }
        Ok(hermite(self.y[k], self.y[k + 1], self.m[k], self.m[k + 1], t, h))
    }
}

/// Cumulative Simpson integral of a closure on a uniform axis: returns
/// `H[i] = integral from x[0] to x[i]` for `n` nodes with spacing `dx`.
/// Each cell uses the midpoint sample, so the result is fourth-order.
pub fn cumulative_simpson(x0: f64, dx: f64, n: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut h = vec![0.0; n];
    let mut acc = 0.0;
    for i in 0..n - 1 {
        let a = x0 + i as f64 * dx;
        let fa = f(a);
        let fm = f(a + 0.5 * dx);
        let fb = f(a + dx);
        acc += dx / 6.0 * (fa + 4.0 * fm + fb);
        h[i + 1] = acc;
    }
    h
}
