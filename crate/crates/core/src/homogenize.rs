//! Effective heat conductivity of periodic two-phase images.
//!
//! Steady-state conduction `div(kappa(x) grad T) = 0` is solved on the
//! periodic pixel grid for two unit mean-gradient load cases. The
//! discretization places unknown temperature fluctuations at pixel centers
//! and conductivities on the faces between neighbours (averaged from the
//! adjacent pixel values); the resulting SPD system is solved by conjugate
//! gradients preconditioned with the exact inverse of the constant-
//! coefficient operator at the reference medium `kappa_0 = (kappa_a +
//! kappa_b) / 2`, applied in Fourier space. The effective tensor column for
//! load `e_d` is the cell average of the flux `kappa (e_d + grad T')`.

use crate::error::{Error, Result};
use crate::fft;
use crate::image::MicrostructureImage;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Phase conductivities: the matrix phase has `kappa_a`, inclusions have
/// `kappa_a / contrast`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PhaseLaw {
    pub kappa_a: f64,
    pub contrast: f64,
}

impl PhaseLaw {
    pub fn new(kappa_a: f64, contrast: f64) -> Result<Self> {
        if !(kappa_a > 0.0 && contrast > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "conductivity {kappa_a} and contrast {contrast} must be positive"
            )));
        }
        Ok(Self { kappa_a, contrast })
    }

    pub fn kappa_b(&self) -> f64 {
        self.kappa_a / self.contrast
    }

    pub fn kappa_of(&self, pixel: u8) -> f64 {
        if pixel == 1 {
            self.kappa_b()
        } else {
            self.kappa_a
        }
    }

    /// Voigt (arithmetic) upper bound for inclusion fraction `f_b`.
    pub fn arithmetic_mean(&self, f_b: f64) -> f64 {
        (1.0 - f_b) * self.kappa_a + f_b * self.kappa_b()
    }

    /// Reuss (harmonic) lower bound for inclusion fraction `f_b`.
    pub fn harmonic_mean(&self, f_b: f64) -> f64 {
        1.0 / ((1.0 - f_b) / self.kappa_a + f_b / self.kappa_b())
    }
}

impl Default for PhaseLaw {
    fn default() -> Self {
        Self {
            kappa_a: 1.0,
            contrast: 5.0,
        }
    }
}

/// Symmetric effective conductivity tensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConductivityTensor {
    pub k11: f64,
    pub k22: f64,
    pub k12: f64,
}

impl ConductivityTensor {
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * (self.k11 + self.k22);
        let disc = (0.25 * (self.k11 - self.k22).powi(2) + self.k12 * self.k12).sqrt();
        (mean - disc, mean + disc)
    }

    pub fn determinant(&self) -> f64 {
        self.k11 * self.k22 - self.k12 * self.k12
    }

    pub fn is_positive_definite(&self) -> bool {
        self.k11 > 0.0 && self.determinant() > 0.0
    }

    pub fn frobenius_norm(&self) -> f64 {
        (self.k11 * self.k11 + self.k22 * self.k22 + 2.0 * self.k12 * self.k12).sqrt()
    }
}

/// Normalized Voigt vector `(k11, k22, sqrt(2) k12)`; the factor makes the
/// Euclidean norm equal the tensor Frobenius norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoigtVector(pub [f64; 3]);

impl VoigtVector {
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub fn to_voigt(t: &ConductivityTensor) -> VoigtVector {
    VoigtVector([t.k11, t.k22, std::f64::consts::SQRT_2 * t.k12])
}

/// Inverts [`to_voigt`]. The shear entry is recovered as `v[2] / sqrt(2)`
/// and then snapped to the neighbouring double whose `sqrt(2)`-image equals
/// the stored component, so `to_voigt(from_voigt(v)) == v` holds bit-exactly
/// for every vector produced by `to_voigt`. (Two adjacent doubles can share
/// one `sqrt(2)`-scaled image, so the tensor-side round-trip is exact up to
/// that unavoidable one-ulp ambiguity.)
pub fn from_voigt(v: &VoigtVector) -> ConductivityTensor {
    let scaled = v.0[2];
    let mut k12 = scaled / std::f64::consts::SQRT_2;
    if k12 * std::f64::consts::SQRT_2 != scaled {
        for candidate in [
            f64::from_bits(k12.to_bits().wrapping_add(1)),
            f64::from_bits(k12.to_bits().wrapping_sub(1)),
        ] {
            if candidate * std::f64::consts::SQRT_2 == scaled {
                k12 = candidate;
                break;
            }
        }
    }
    ConductivityTensor {
        k11: v.0[0],
        k22: v.0[1],
        k12,
    }
}

/// How face conductivities are averaged from the two adjacent pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaceRule {
    /// Harmonic mean; exact for series layering across the face.
    Harmonic,
    /// Geometric mean; preserves the two-phase duality symmetry.
    Geometric,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Relative equilibrium residual `|div(kappa grad T)| / |load|`.
    pub tol: f64,
    pub max_iter: usize,
    pub face_rule: FaceRule,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 5_000,
            face_rule: FaceRule::Harmonic,
        }
    }
}

/// Solver diagnostics for one labelled sample.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolveReport {
    /// Certified relative residuals of the two load cases.
    pub residuals: [f64; 2],
    pub iterations: [usize; 2],
    /// Largest asymmetry `|k12 - k21|` removed by symmetrization.
    pub asymmetry: f64,
}

/// Computes the effective conductivity tensor of a periodic image.
pub fn effective_conductivity(
    img: &MicrostructureImage,
    law: &PhaseLaw,
    opts: &SolveOptions,
) -> Result<(ConductivityTensor, SolveReport)> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidSpec("solver tolerance must be positive".into()));
    }
    let grid = FaceGrid::new(img, law, opts.face_rule);
    let mut columns = [[0.0f64; 2]; 2];
    let mut residuals = [0.0f64; 2];
    let mut iterations = [0usize; 2];

    for (d, load) in [[1.0, 0.0], [0.0, 1.0]].iter().enumerate() {
        let rhs = grid.load_vector(load);
        let solution = grid.solve_pcg(&rhs, law, opts, &mut iterations[d], &mut residuals[d])?;
        columns[d] = grid.average_flux(&solution, load);
    }

    // Column d holds kappa * e_d; symmetrize the off-diagonal entries.
    let k11 = columns[0][0];
    let k22 = columns[1][1];
    let k12 = columns[0][1];
    let k21 = columns[1][0];
    let tensor = ConductivityTensor {
        k11,
        k22,
        k12: 0.5 * (k12 + k21),
    };
    if !(tensor.k11.is_finite() && tensor.k22.is_finite() && tensor.k12.is_finite()) {
        return Err(Error::NonFiniteField("effective conductivity".into()));
    }
    let report = SolveReport {
        residuals,
        iterations,
        asymmetry: (k12 - k21).abs(),
    };
    Ok((tensor, report))
}

/// Face conductivities of one image under a phase law.
struct FaceGrid {
    res: usize,
    /// Face between (i, j) and (i, j+1 mod res).
    kx: Vec<f64>,
    /// Face between (i, j) and (i+1 mod res, j).
    ky: Vec<f64>,
}

impl FaceGrid {
    fn new(img: &MicrostructureImage, law: &PhaseLaw, rule: FaceRule) -> Self {
        let res = img.resolution();
        let avg = |p: u8, q: u8| -> f64 {
            let a = law.kappa_of(p);
            let b = law.kappa_of(q);
            match rule {
                FaceRule::Harmonic => 2.0 * a * b / (a + b),
                FaceRule::Geometric => (a * b).sqrt(),
            }
        };
        let mut kx = vec![0.0; res * res];
        let mut ky = vec![0.0; res * res];
        for i in 0..res {
            for j in 0..res {
                let p = img.get(i, j);
                kx[i * res + j] = avg(p, img.get(i, (j + 1) % res));
                ky[i * res + j] = avg(p, img.get((i + 1) % res, j));
            }
        }
        Self { res, kx, ky }
    }

    fn n(&self) -> usize {
        self.res * self.res
    }

    /// `A t`: the SPD operator `sum_faces kappa_f (t_p - t_q)` per pixel
    /// (the discrete `-div(kappa grad)` scaled by `h^2`).
    fn apply(&self, t: &[f64], out: &mut [f64]) {
        let res = self.res;
        for i in 0..res {
            let up = if i == 0 { res - 1 } else { i - 1 };
            let down = if i == res - 1 { 0 } else { i + 1 };
            for j in 0..res {
                let left = if j == 0 { res - 1 } else { j - 1 };
                let right = if j == res - 1 { 0 } else { j + 1 };
                let c = i * res + j;
                let t_c = t[c];
                let mut acc = 0.0;
                acc += self.kx[c] * (t_c - t[i * res + right]);
                acc += self.kx[i * res + left] * (t_c - t[i * res + left]);
                acc += self.ky[c] * (t_c - t[down * res + j]);
                acc += self.ky[up * res + j] * (t_c - t[up * res + j]);
                out[c] = acc;
            }
        }
    }

    /// Right-hand side for a prescribed mean gradient `e = (e_x, e_y)`:
    /// `b_p = h (e_x (kx_w - kx_e) + e_y (ky_n - ky_s))` with zero mean.
    fn load_vector(&self, e: &[f64; 2]) -> Vec<f64> {
        let res = self.res;
        let h = 1.0 / res as f64;
        let mut b = vec![0.0; self.n()];
        for i in 0..res {
            let up = if i == 0 { res - 1 } else { i - 1 };
            for j in 0..res {
                let left = if j == 0 { res - 1 } else { j - 1 };
                let c = i * res + j;
                b[c] = h
                    * (e[0] * (self.kx[c] - self.kx[i * res + left])
                        + e[1] * (self.ky[c] - self.ky[up * res + j]));
            }
        }
        b
    }

    /// Preconditioned conjugate gradients with the spectral inverse of the
    /// reference-medium operator.
    fn solve_pcg(
        &self,
        b: &[f64],
        law: &PhaseLaw,
        opts: &SolveOptions,
        iterations: &mut usize,
        residual: &mut f64,
    ) -> Result<Vec<f64>> {
        let n = self.n();
        let res = self.res;
        let b_norm = norm(b);
        if b_norm == 0.0 {
            // Homogeneous medium: zero fluctuation is the exact solution.
            *iterations = 0;
            *residual = 0.0;
            return Ok(vec![0.0; n]);
        }

        // Symbol of the constant-coefficient five-point operator.
        let kappa0 = 0.5 * (law.kappa_a + law.kappa_b());
        let tau = std::f64::consts::TAU;
        let mut symbol = vec![0.0; n];
        for k1 in 0..res {
            let c1 = (tau * k1 as f64 / res as f64).cos();
            for k2 in 0..res {
                let c2 = (tau * k2 as f64 / res as f64).cos();
                symbol[k1 * res + k2] = kappa0 * (4.0 - 2.0 * c1 - 2.0 * c2);
            }
        }

        let mut fourier = vec![Complex64::new(0.0, 0.0); n];
        let mut precondition = |r: &[f64], z: &mut [f64]| {
            for (f, &v) in fourier.iter_mut().zip(r) {
                *f = Complex64::new(v, 0.0);
            }
            fft::with_plan(res, |plan| {
                plan.forward(&mut fourier);
                fourier[0] = Complex64::new(0.0, 0.0);
                for (f, &s) in fourier.iter_mut().zip(&symbol).skip(1) {
                    *f /= s;
                }
                plan.inverse(&mut fourier);
            });
            let scale = 1.0 / n as f64;
            for (zv, f) in z.iter_mut().zip(&fourier) {
                *zv = f.re * scale;
            }
        };

        let mut t = vec![0.0; n];
        let mut r = b.to_vec();
        let mut z = vec![0.0; n];
        precondition(&r, &mut z);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut ap = vec![0.0; n];

        for iter in 1..=opts.max_iter {
            self.apply(&p, &mut ap);
            let p_ap = dot(&p, &ap);
            if !p_ap.is_finite() || p_ap <= 0.0 {
                return Err(Error::NonFiniteField("conjugate gradient search".into()));
            }
            let alpha = rz / p_ap;
            axpy(alpha, &p, &mut t);
            axpy(-alpha, &ap, &mut r);

            let rel = norm(&r) / b_norm;
            if rel <= opts.tol {
                // Certify with the true residual before accepting.
                self.apply(&t, &mut ap);
                let true_rel = diff_norm(b, &ap) / b_norm;
                if true_rel <= opts.tol {
                    *iterations = iter;
                    *residual = true_rel;
                    return Ok(t);
                }
                for ((rv, &bv), &av) in r.iter_mut().zip(b).zip(ap.iter()) {
                    *rv = bv - av;
                }
            }

            precondition(&r, &mut z);
            let rz_new = dot(&r, &z);
            if !rz_new.is_finite() {
                return Err(Error::NonFiniteField("conjugate gradient residual".into()));
            }
            let beta = rz_new / rz;
            for (pv, &zv) in p.iter_mut().zip(&z) {
                *pv = zv + beta * *pv;
            }
            rz = rz_new;
        }

        Err(Error::NoConvergence {
            iterations: opts.max_iter,
            residual: norm(&r) / b_norm,
        })
    }

    /// Cell-averaged flux `(1/n) sum_faces kappa_f (dT'/h + e_c)` per
    /// direction.
    fn average_flux(&self, t: &[f64], e: &[f64; 2]) -> [f64; 2] {
        let res = self.res;
        let h = 1.0 / res as f64;
        let mut q = [0.0f64; 2];
        for i in 0..res {
            let down = if i == res - 1 { 0 } else { i + 1 };
            for j in 0..res {
                let right = if j == res - 1 { 0 } else { j + 1 };
                let c = i * res + j;
                q[0] += self.kx[c] * ((t[i * res + right] - t[c]) / h + e[0]);
                q[1] += self.ky[c] * ((t[down * res + j] - t[c]) / h + e[1]);
            }
        }
        let n = self.n() as f64;
        [q[0] / n, q[1] / n]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += alpha * xv;
    }
}
