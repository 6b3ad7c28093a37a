//! 1- and 2-point spatial correlation functions of periodic binary images.
//!
//! The 2-point correlation `c2(r; m1, m2)` is the probability that a
//! uniformly placed point lies in phase `m1` while its offset by `r` lies in
//! phase `m2`. It is evaluated in Fourier space as
//! `IFFT(conj(FFT(chi_m1)) * FFT(chi_m2)) / n` with `n` pixels and a
//! normalized inverse transform, so one division by `n` realizes the spatial
//! average. Only the inclusion autocorrelation `c2(b,b)` is transformed; the
//! `(a,a)` and `(a,b)` variants follow from
//! `c2(a,b) = f_b - c2(b,b)` and `c2(a,a) = f_a - c2(a,b)`.
//!
//! On a binary image the unnormalized correlation counts are integers, so
//! the transform result is snapped back to the exact integer lattice. This
//! removes FFT round-off entirely: the identities `c2(0;a,b) = 0`,
//! `c2(r) = c2(-r)` and `mean(c2(b,b)) = f_b^2` hold exactly, and any
//! residue beyond round-off tolerance signals an indexing bug and is
//! reported as an error instead of being silently dropped.

use crate::error::{Error, Result};
use crate::fft;
use crate::image::MicrostructureImage;
use rustfft::num_complex::Complex64;

/// Material phase label: `A` is the matrix, `B` the inclusions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    A,
    B,
}

/// Discrete 2-point correlation on the full periodic offset grid.
///
/// `values[dr * resolution + dc]` is `c2((dr, dc); m1, m2)` with row offset
/// `dr` and column offset `dc`, both modulo the resolution.
#[derive(Debug, Clone)]
pub struct TwoPointField {
    resolution: usize,
    phases: (Phase, Phase),
    values: Vec<f64>,
    f_b: f64,
}

impl TwoPointField {
    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn phases(&self) -> (Phase, Phase) {
        self.phases
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Inclusion volume fraction of the source image.
    pub fn f_b(&self) -> f64 {
        self.f_b
    }

    /// Volume fraction of phase `m`.
    pub fn phase_fraction(&self, m: Phase) -> f64 {
        match m {
            Phase::A => 1.0 - self.f_b,
            Phase::B => self.f_b,
        }
    }

    /// Value at a (possibly negative) periodic offset.
    pub fn at(&self, dr: isize, dc: isize) -> f64 {
        let n = self.resolution as isize;
        let r = dr.rem_euclid(n) as usize;
        let c = dc.rem_euclid(n) as usize;
        self.values[r * self.resolution + c]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Dumps the field as an 8-bit PGM with values rescaled to the full
    /// gray range, for figure reproduction.
    pub fn write_pgm_rescaled<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let n = self.resolution;
        let (lo, hi) = self
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let span = if hi > lo { hi - lo } else { 1.0 };
        write!(w, "P5\n{n} {n}\n255\n")?;
        let bytes: Vec<u8> = self
            .values
            .iter()
            .map(|&v| ((v - lo) / span * 255.0).round() as u8)
            .collect();
        w.write_all(&bytes)?;
        Ok(())
    }

    /// Dumps the raw grid as little-endian 64-bit reals, row-major.
    pub fn write_f64_binary<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        for &v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }
}

/// Flattened, shifted 2-point snapshot `s = c2(b,b) - f_b^2 * 1`
/// (row-major flattening; the shift removes the mean).
#[derive(Debug, Clone)]
pub struct Snapshot {
    values: Vec<f64>,
    f_b: f64,
    source_id: String,
}

impl Snapshot {
    pub fn new(values: Vec<f64>, f_b: f64) -> Self {
        Self {
            values,
            f_b,
            source_id: String::new(),
        }
    }

    pub fn with_source_id(mut self, id: impl Into<String>) -> Self {
        self.source_id = id.into();
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn f_b(&self) -> f64 {
        self.f_b
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Inclusion volume fraction `f_b` (the 1-point correlation of phase `b`).
pub fn volume_fraction(img: &MicrostructureImage) -> f64 {
    img.volume_fraction()
}

/// 2-point correlation for an arbitrary phase pair.
pub fn two_point(img: &MicrostructureImage, phases: (Phase, Phase)) -> Result<TwoPointField> {
    let counts = autocorrelation_counts(img)?;
    let resolution = img.resolution();
    let n = img.len() as f64;
    let f_b = img.inclusion_count() as f64 / n;
    let f_a = 1.0 - f_b;

    let values: Vec<f64> = match phases {
        (Phase::B, Phase::B) => counts.iter().map(|&g| g as f64 / n).collect(),
        // c2(a,b) = c2(b,a) = f_b - c2(b,b)
        (Phase::A, Phase::B) | (Phase::B, Phase::A) => {
            counts.iter().map(|&g| f_b - g as f64 / n).collect()
        }
        // c2(a,a) = f_a - c2(a,b) = (f_a - f_b) + c2(b,b)
        (Phase::A, Phase::A) => counts
            .iter()
            .map(|&g| (f_a - f_b) + g as f64 / n)
            .collect(),
    };

    Ok(TwoPointField {
        resolution,
        phases,
        values,
        f_b,
    })
}

/// Shifted snapshot `s = c2 - f_m1 f_m2 * 1`; for the `(b,b)` pair this is
/// exactly `c2(b,b) - f_b^2`, and equals `c2(a,a) - f_a^2` for `(a,a)`.
pub fn shift_snapshot(field: &TwoPointField) -> Snapshot {
    let shift = field.phase_fraction(field.phases.0) * field.phase_fraction(field.phases.1);
    let values = field.values.iter().map(|&v| v - shift).collect();
    Snapshot::new(values, field.f_b)
}

/// Shifted `(b,b)` snapshot of an image; the standard POD input.
pub fn snapshot(img: &MicrostructureImage) -> Result<Snapshot> {
    Ok(shift_snapshot(&two_point(img, (Phase::B, Phase::B))?))
}

/// Raw periodic autocorrelation counts `g(r) = sum_x chi_b(x) chi_b(x+r)`,
/// recovered as exact integers from the FFT result.
fn autocorrelation_counts(img: &MicrostructureImage) -> Result<Vec<i64>> {
    let res = img.resolution();
    let n = img.len();
    let mut grid: Vec<Complex64> = img
        .pixels()
        .iter()
        .map(|&p| Complex64::new(f64::from(p), 0.0))
        .collect();

    fft::with_plan(res, |plan| {
        plan.forward(&mut grid);
        for v in grid.iter_mut() {
            *v = Complex64::new(v.norm_sqr(), 0.0);
        }
        plan.inverse(&mut grid);
    });

    // The inverse transform is unnormalized, so entries are n^2 * c2 = n * g.
    let f_b = img.volume_fraction();
    let imag_tol = 1e-8 * f_b * (n as f64) * (n as f64);
    let mut counts = Vec::with_capacity(n);
    for v in &grid {
        if !v.re.is_finite() || !v.im.is_finite() {
            return Err(Error::NonFiniteField("2-point FFT result".into()));
        }
        if v.im.abs() > imag_tol {
            return Err(Error::NonFiniteField(format!(
                "2-point imaginary residue {:.3e} exceeds tolerance {:.3e}",
                v.im.abs(),
                imag_tol
            )));
        }
        let g = v.re / n as f64;
        let rounded = g.round();
        if (g - rounded).abs() > 1e-6 {
            return Err(Error::NonFiniteField(format!(
                "2-point count {g} is not integral within tolerance"
            )));
        }
        counts.push(rounded as i64);
    }
    Ok(counts)
}
