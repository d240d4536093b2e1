//! Closed-form arithmetic for 2x2 Hermitian generators and their propagators.
//!
//! Generators are written as `H = h0*I + (hx*sx + hy*sy + hz*sz)/2` in rad/us,
//! so a coefficient `hx = Omega` produces a Rabi rotation at angular frequency
//! `Omega` about x. Propagators are evaluated with
//! `exp(-i (a.sigma) theta) = cos(theta) I - i sin(theta) (a.sigma)`, never by
//! series expansion.

use std::ops::Mul;

use num_complex::Complex64;

use crate::error::{invalid, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Unitarity residual above which a propagator chain is projected back onto U(2).
pub const REUNITARIZE_THRESHOLD: f64 = 1e-10;

/// Pauli coefficients of a Hermitian generator.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PauliCoeffs {
    pub h0: f64,
    pub hx: f64,
    pub hy: f64,
    pub hz: f64,
}

impl PauliCoeffs {
    pub const fn new(h0: f64, hx: f64, hy: f64, hz: f64) -> Self {
        Self { h0, hx, hy, hz }
    }

    pub fn is_finite(&self) -> bool {
        self.h0.is_finite() && self.hx.is_finite() && self.hy.is_finite() && self.hz.is_finite()
    }

    /// Length of the traceless part, `|(hx, hy, hz)|`.
    pub fn norm(&self) -> f64 {
        (self.hx * self.hx + self.hy * self.hy + self.hz * self.hz).sqrt()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::new(self.h0 * s, self.hx * s, self.hy * s, self.hz * s)
    }

    /// Row-major Hermitian matrix.
    pub fn to_matrix(&self) -> [Complex64; 4] {
        let a = Complex64::new(self.h0 + 0.5 * self.hz, 0.0);
        let d = Complex64::new(self.h0 - 0.5 * self.hz, 0.0);
        let b = Complex64::new(0.5 * self.hx, -0.5 * self.hy);
        [a, b, b.conj(), d]
    }

    /// Inverse of [`PauliCoeffs::to_matrix`]; the anti-Hermitian part of `m` is discarded.
    pub fn from_matrix(m: &[Complex64; 4]) -> Self {
        let b = 0.5 * (m[1] + m[2].conj());
        Self {
            h0: 0.5 * (m[0].re + m[3].re),
            hx: 2.0 * b.re,
            hy: -2.0 * b.im,
            hz: m[0].re - m[3].re,
        }
    }
}

/// A 2x2 complex matrix stored row-major, used for unitary propagators.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Unitary2 {
    pub m: [Complex64; 4],
}

impl Default for Unitary2 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Unitary2 {
    pub const fn from_entries(m: [Complex64; 4]) -> Self {
        Self { m }
    }

    pub const fn identity() -> Self {
        Self {
            m: [ONE, ZERO, ZERO, ONE],
        }
    }

    pub fn sigma_x() -> Self {
        Self::from_entries([ZERO, ONE, ONE, ZERO])
    }

    pub fn sigma_y() -> Self {
        Self::from_entries([ZERO, -I, I, ZERO])
    }

    pub fn sigma_z() -> Self {
        Self::from_entries([ONE, ZERO, ZERO, -ONE])
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self::from_entries(self.m.map(|x| x * s))
    }

    pub fn dagger(&self) -> Self {
        let m = &self.m;
        Self::from_entries([m[0].conj(), m[2].conj(), m[1].conj(), m[3].conj()])
    }

    pub fn det(&self) -> Complex64 {
        self.m[0] * self.m[3] - self.m[1] * self.m[2]
    }

    pub fn trace(&self) -> Complex64 {
        self.m[0] + self.m[3]
    }

    /// Largest entrywise deviation of `U^dagger U` from the identity.
    pub fn unitarity_residual(&self) -> f64 {
        let p = self.dagger() * *self;
        let id = Self::identity();
        p.m.iter()
            .zip(id.m.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Largest entrywise distance to `other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.m
            .iter()
            .zip(other.m.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Polar projection onto the nearest unitary (Newton iteration `W <- (W + W^-dagger)/2`).
    pub fn reunitarize(&self) -> Self {
        let mut w = *self;
        for _ in 0..8 {
            let det = w.det();
            if det.norm() == 0.0 {
                break;
            }
            // W^-1 = adj(W)/det, and W^-dagger = (W^-1)^dagger.
            let inv = Self::from_entries([w.m[3], -w.m[1], -w.m[2], w.m[0]]).scale(det.inv());
            let inv_dag = inv.dagger();
            let next = Self::from_entries([
                0.5 * (w.m[0] + inv_dag.m[0]),
                0.5 * (w.m[1] + inv_dag.m[1]),
                0.5 * (w.m[2] + inv_dag.m[2]),
                0.5 * (w.m[3] + inv_dag.m[3]),
            ]);
            let moved = next.max_abs_diff(&w);
            w = next;
            if moved < 1e-15 {
                break;
            }
        }
        w
    }

    /// Re-unitarize only when the drift exceeds [`REUNITARIZE_THRESHOLD`].
    pub fn renormalized(&self) -> Self {
        if self.unitarity_residual() > REUNITARIZE_THRESHOLD {
            self.reunitarize()
        } else {
            *self
        }
    }
}

impl Mul for Unitary2 {
    type Output = Unitary2;

    fn mul(self, rhs: Unitary2) -> Unitary2 {
        let a = &self.m;
        let b = &rhs.m;
        Unitary2::from_entries([
            a[0] * b[0] + a[1] * b[2],
            a[0] * b[1] + a[1] * b[3],
            a[2] * b[0] + a[3] * b[2],
            a[2] * b[1] + a[3] * b[3],
        ])
    }
}

/// `exp(-i H dt)` without input validation; used in the propagation hot loop.
#[inline]
pub(crate) fn expm_unchecked(h: &PauliCoeffs, dt: f64) -> Unitary2 {
    let r = h.norm();
    let theta = 0.5 * r * dt;
    let (s, c) = theta.sin_cos();
    // sin(theta)/r, continuous at r = 0
    let f = if r > 0.0 { s / r } else { 0.5 * dt };
    let ax = f * h.hx;
    let ay = f * h.hy;
    let az = f * h.hz;
    let mut u = Unitary2::from_entries([
        Complex64::new(c, -az),
        Complex64::new(-ay, -ax),
        Complex64::new(ay, -ax),
        Complex64::new(c, az),
    ]);
    if h.h0 != 0.0 {
        let phase = Complex64::from_polar(1.0, -h.h0 * dt);
        u = u.scale(phase);
    }
    u
}

/// Exact propagator `exp(-i H dt)` of a constant generator.
pub fn pauli_expm(h: PauliCoeffs, dt: f64) -> Result<Unitary2> {
    if !h.is_finite() || !dt.is_finite() {
        return Err(invalid(format!("non-finite generator {h:?} or step {dt}")));
    }
    if dt < 0.0 {
        return Err(invalid(format!("negative time step {dt}")));
    }
    Ok(expm_unchecked(&h, dt))
}

/// `a * b`: `b` acts first.
pub fn compose(a: &Unitary2, b: &Unitary2) -> Unitary2 {
    *a * *b
}

/// A 2x2 density matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Density2 {
    pub m: [Complex64; 4],
}

impl Density2 {
    /// Validates unit trace, Hermiticity and positivity.
    pub fn new(m: [Complex64; 4]) -> Result<Self> {
        let rho = Self { m };
        let tr = m[0] + m[3];
        if (tr - ONE).norm() > 1e-12 {
            return Err(invalid(format!("density matrix trace {tr} != 1")));
        }
        if (m[1] - m[2].conj()).norm() > 1e-12 || m[0].im.abs() > 1e-12 || m[3].im.abs() > 1e-12 {
            return Err(invalid("density matrix is not Hermitian"));
        }
        let (x, y, z) = bloch_vector(&rho);
        // eigenvalues are (1 +- |r|)/2
        if (x * x + y * y + z * z).sqrt() > 1.0 + 2e-10 {
            return Err(invalid("density matrix has a negative eigenvalue"));
        }
        Ok(rho)
    }

    /// `(I + x sx + y sy + z sz)/2`.
    pub fn from_bloch(x: f64, y: f64, z: f64) -> Self {
        Self {
            m: [
                Complex64::new(0.5 * (1.0 + z), 0.0),
                Complex64::new(0.5 * x, -0.5 * y),
                Complex64::new(0.5 * x, 0.5 * y),
                Complex64::new(0.5 * (1.0 - z), 0.0),
            ],
        }
    }

    /// `rho_z = (I + sz)/2`, the ground state of the simulations.
    pub fn ground() -> Self {
        Self::from_bloch(0.0, 0.0, 1.0)
    }

    pub fn maximally_mixed() -> Self {
        Self::from_bloch(0.0, 0.0, 0.0)
    }

    pub fn trace(&self) -> Complex64 {
        self.m[0] + self.m[3]
    }

    /// Population of the `rho_z` state, `<0|rho|0>`.
    pub fn ground_population(&self) -> f64 {
        self.m[0].re
    }
}

/// `U rho U^dagger`.
pub fn evolve_density(rho: &Density2, u: &Unitary2) -> Density2 {
    let r = Unitary2::from_entries(rho.m);
    let out = *u * r * u.dagger();
    Density2 { m: out.m }
}

/// `(Tr(rho sx), Tr(rho sy), Tr(rho sz))`.
pub fn bloch_vector(rho: &Density2) -> (f64, f64, f64) {
    let m = &rho.m;
    let x = m[1].re + m[2].re;
    let y = m[2].im - m[1].im;
    let z = m[0].re - m[3].re;
    (x, y, z)
}

fn trace_product(a: &[Complex64; 4], b: &[Complex64; 4]) -> Complex64 {
    a[0] * b[0] + a[1] * b[2] + a[2] * b[1] + a[3] * b[3]
}

/// State-independent fidelity: the mean over the three axial pure states
/// `rho_k = (I + s_k)/2` of `Tr(U rho_k U^dagger rho_k)`.
pub fn fidelity_axial(u: &Unitary2) -> f64 {
    let states = [
        Density2::from_bloch(1.0, 0.0, 0.0),
        Density2::from_bloch(0.0, 1.0, 0.0),
        Density2::from_bloch(0.0, 0.0, 1.0),
    ];
    let sum: f64 = states
        .iter()
        .map(|rho| trace_product(&evolve_density(rho, u).m, &rho.m).re)
        .sum();
    sum / 3.0
}

/// `1 - fidelity_axial(u)` evaluated from the off-identity Pauli weight of `u`,
/// free of the cancellation in `1 - F` when `u` is close to the identity.
///
/// For `u = e^{ia}(a0 I - i a.sigma)` the infidelity is `(2/3)|a|^2`.
pub fn infidelity_axial(u: &Unitary2) -> f64 {
    let m = &u.m;
    let offdiag = 0.5 * (m[1].norm_sqr() + m[2].norm_sqr());
    let diag = 0.25 * (m[0] - m[3]).norm_sqr();
    2.0 / 3.0 * (offdiag + diag)
}
