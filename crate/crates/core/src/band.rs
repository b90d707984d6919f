//! Banded matrices with partial-pivot LU factorization.
//!
//! Second-order stencils on a structured 2D grid couple each unknown to at
//! most one neighbouring line of the grid, so with a line-major unknown
//! ordering the Hamiltonian is banded with bandwidth `fast + 1`, where `fast`
//! is the number of unknowns along the faster axis. Everything downstream
//! (shift-invert eigensolves, Crank-Nicolson steps) then only needs a banded
//! LU with partial pivoting, implemented here in LAPACK band storage for both
//! real and complex entries.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Scalar admissible as a banded-matrix entry.
pub trait Entry:
    Copy
    + PartialEq
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
    + std::ops::AddAssign
    + std::ops::SubAssign
{
    const ZERO: Self;
    const ONE: Self;
    /// Modulus used for pivot selection and singularity checks.
    fn modulus(self) -> f64;
    /// Embed a real number.
    fn from_real(x: f64) -> Self;
}

impl Entry for f64 {
    const ZERO: f64 = 0.0;
    const ONE: f64 = 1.0;
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn from_real(x: f64) -> f64 {
        x
    }
}

impl Entry for Complex64 {
    const ZERO: Complex64 = Complex64::new(0.0, 0.0);
    const ONE: Complex64 = Complex64::new(1.0, 0.0);
    fn modulus(self) -> f64 {
        // 1-norm modulus, cheap and sufficient for pivoting
        self.re.abs() + self.im.abs()
    }
    fn from_real(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }
}

/// Square banded matrix with `kl` subdiagonals and `ku` superdiagonals.
///
/// Entry `(i, j)` lives at `data[[kl + ku + i - j, j]]`; the top `kl` rows of
/// the storage are headroom for the fill-in that row pivoting creates during
/// factorization.
#[derive(Debug, Clone)]
pub struct BandedMatrix<T: Entry> {
    n: usize,
    kl: usize,
    ku: usize,
    data: Array2<T>,
}

impl<T: Entry> BandedMatrix<T> {
    /// Zero matrix of size `n` with the given lower/upper bandwidths.
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        BandedMatrix { n, kl, ku, data: Array2::from_elem((2 * kl + ku + 1, n), T::ZERO) }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && i + self.ku >= j && j + self.kl >= i
    }

    /// Entry `(i, j)`; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> T {
        if self.in_band(i, j) {
            self.data[[self.kl + self.ku + i - j, j]]
        } else {
            T::ZERO
        }
    }

    /// Set entry `(i, j)`; writing outside the band is an error.
    pub fn set(&mut self, i: usize, j: usize, v: T) -> Result<()> {
        if !self.in_band(i, j) {
            return Err(Error::InvalidInput(format!(
                "entry ({i}, {j}) outside band (kl = {}, ku = {})",
                self.kl, self.ku
            )));
        }
        self.data[[self.kl + self.ku + i - j, j]] = v;
        Ok(())
    }

    /// Add `v` to entry `(i, j)`; addition outside the band is an error.
    pub fn add(&mut self, i: usize, j: usize, v: T) -> Result<()> {
        if !self.in_band(i, j) {
            return Err(Error::InvalidInput(format!(
                "entry ({i}, {j}) outside band (kl = {}, ku = {})",
                self.kl, self.ku
            )));
        }
        self.data[[self.kl + self.ku + i - j, j]] += v;
        Ok(())
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.n, "matvec length mismatch");
        let mut y = vec![T::ZERO; self.n];
        for j in 0..self.n {
            let xj = x[j];
            if xj == T::ZERO {
                continue;
            }
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            for i in lo..=hi {
                y[i] += self.data[[self.kl + self.ku + i - j, j]] * xj;
            }
        }
        y
    }

    /// Largest row sum of moduli (an upper bound for the spectral radius).
    pub fn inf_norm(&self) -> f64 {
        let mut sums = vec![0.0_f64; self.n];
        for j in 0..self.n {
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            for i in lo..=hi {
                sums[i] += self.data[[self.kl + self.ku + i - j, j]].modulus();
            }
        }
        sums.into_iter().fold(0.0, f64::max)
    }

    /// In-place `self += s * other` with a real source (complex targets only
    /// pay for the promotion inside the band).
    pub fn add_scaled_real(&mut self, s: T, other: &BandedMatrix<f64>) -> Result<()> {
        if other.n != self.n || other.kl > self.kl || other.ku > self.ku {
            return Err(Error::InvalidInput(
                "banded sum needs matching size and no wider band".into(),
            ));
        }
        for j in 0..self.n {
            let lo = j.saturating_sub(other.ku);
            let hi = (j + other.kl).min(self.n - 1);
            for i in lo..=hi {
                let v = other.data[[other.kl + other.ku + i - j, j]];
                if v != 0.0 {
                    self.data[[self.kl + self.ku + i - j, j]] += s * T::from_real(v);
                }
            }
        }
        Ok(())
    }

    /// In-place `self += s * other`; bandwidths must be compatible.
    pub fn add_scaled(&mut self, s: T, other: &BandedMatrix<T>) -> Result<()> {
        if other.n != self.n || other.kl > self.kl || other.ku > self.ku {
            return Err(Error::InvalidInput(
                "banded sum needs matching size and no wider band".into(),
            ));
        }
        for j in 0..self.n {
            let lo = j.saturating_sub(other.ku);
            let hi = (j + other.kl).min(self.n - 1);
            for i in lo..=hi {
                let v = other.data[[other.kl + other.ku + i - j, j]];
                if v != T::ZERO {
                    self.data[[self.kl + self.ku + i - j, j]] += s * v;
                }
            }
        }
        Ok(())
    }

    /// LU factorization with partial pivoting (band analogue of `getrf`).
    /// The factored form consumes the matrix; use [`BandedLu::solve`] after.
    pub fn factor(self) -> Result<BandedLu<T>> {
        let BandedMatrix { n, kl, ku, mut data } = self;
        let kw = kl + ku; // upper bandwidth after fill-in
        let mut pivots = vec![0usize; n];
        for j in 0..n {
            // pivot among rows j ..= j + kl
            let imax = (j + kl).min(n - 1);
            let mut p = j;
            let mut best = data[[kl + ku + j - j, j]].modulus();
            for i in j + 1..=imax {
                let m = data[[kl + ku + i - j, j]].modulus();
                if m > best {
                    best = m;
                    p = i;
                }
            }
            if best == 0.0 {
                return Err(Error::Factorization(format!(
                    "zero pivot at column {j} of {n}"
                )));
            }
            pivots[j] = p;
            let jmax = (j + kw).min(n - 1);
            if p != j {
                for c in j..=jmax {
                    let rj = kl + ku + j - c;
                    let rp = kl + ku + p - c;
                    data.swap([rj, c], [rp, c]);
                }
            }
            let piv = data[[kl + ku, j]];
            for i in j + 1..=imax {
                let m = data[[kl + ku + i - j, j]] / piv;
                data[[kl + ku + i - j, j]] = m;
                if m != T::ZERO {
                    for c in j + 1..=jmax {
                        let t = data[[kl + ku + j - c, c]];
                        if t != T::ZERO {
                            let delta = m * t;
                            data[[kl + ku + i - c, c]] -= delta;
                        }
                    }
                }
            }
        }
        Ok(BandedLu { n, kl, ku, data, pivots })
    }
}

/// Factored form produced by [`BandedMatrix::factor`].
#[derive(Debug, Clone)]
pub struct BandedLu<T: Entry> {
    n: usize,
    kl: usize,
    ku: usize,
    data: Array2<T>,
    pivots: Vec<usize>,
}

impl<T: Entry> BandedLu<T> {
    pub fn size(&self) -> usize {
        self.n
    }

    /// Solve `A x = b` in place.
    pub fn solve(&self, b: &mut [T]) -> Result<()> {
        if b.len() != self.n {
            return Err(Error::InvalidInput("solve length mismatch".into()));
        }
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let kw = kl + ku;
        // forward: P L y = b
        for j in 0..n {
            let p = self.pivots[j];
            if p != j {
                b.swap(j, p);
            }
            let bj = b[j];
            if bj == T::ZERO {
                continue;
            }
            let imax = (j + kl).min(n - 1);
            for i in j + 1..=imax {
                let l = self.data[[kl + ku + i - j, j]];
                if l != T::ZERO {
                    let delta = l * bj;
                    b[i] -= delta;
                }
            }
        }
        // backward: U x = y
        for j in (0..n).rev() {
            let x = b[j] / self.data[[kl + ku, j]];
            b[j] = x;
            if x == T::ZERO {
                continue;
            }
            let imin = j.saturating_sub(kw);
            for i in imin..j {
                let u = self.data[[kl + ku + i - j, j]];
                if u != T::ZERO {
                    let delta = u * x;
                    b[i] -= delta;
                }
            }
        }
        Ok(())
    }

    /// Convenience out-of-place solve.
    pub fn solve_vec(&self, b: &[T]) -> Result<Vec<T>> {
        let mut x = b.to_vec();
        self.solve(&mut x)?;
        Ok(x)
    }
}
