//! Synthetic periodic two-phase microstructures by random sequential
//! adsorption (RSA) of circular and rectangular inclusions.
//!
//! Candidates are drawn one at a time and rasterized onto the periodic
//! pixel grid; a candidate is accepted iff the fraction of its own pixels
//! already covered by earlier inclusions is at most the admissible overlap
//! `rho` (`rho = 0`: hard particles, `rho = 1`: unrestricted Boolean
//! model). Placement stops at the first accepted inclusion that meets or
//! exceeds the target volume fraction, so the achieved fraction can
//! overshoot the target by at most one inclusion area.
//!
//! All randomness comes from one ChaCha stream seeded by `GenSpec::seed`.
//! Per candidate the draws are consumed in a fixed, documented order:
//! 1. morphology coin (only for `Morphology::Mixed`),
//! 2. center x, 3. center y (uniform on the unit cell),
//! 4. size (uniform on `size_range`),
//! 5. orientation, 6. aspect ratio (rectangles only).

use crate::error::{Error, Result};
use crate::image::MicrostructureImage;
use crate::rng::master_rng;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Inclusion morphology. In a [`GenSpec`] `Mixed` draws a per-inclusion
/// coin; in a [`ClassSpec`] it alternates whole images between exclusively
/// circular and exclusively rectangular inclusions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Morphology {
    Circle,
    Rectangle,
    Mixed,
}

fn default_max_attempts() -> u64 {
    100_000
}

fn default_max_radius_frac() -> f64 {
    0.1
}

fn default_size_range() -> (f64, f64) {
    (0.1, 1.0)
}

fn default_orientation_range() -> (f64, f64) {
    (0.0, std::f64::consts::PI)
}

fn default_aspect_range() -> (f64, f64) {
    (1.0, 10.0)
}

/// Parameters for one generated image.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenSpec {
    /// Pixels per side of the square grid (>= 16).
    pub resolution: usize,
    pub morphology: Morphology,
    /// Inclusion volume fraction to reach, in [0.2, 0.8].
    pub target_vf: f64,
    /// Per-inclusion size factor range, a sub-range of (0, 1].
    #[serde(default = "default_size_range")]
    pub size_range: (f64, f64),
    /// Rectangle orientation range in radians, a sub-range of [0, pi).
    #[serde(default = "default_orientation_range")]
    pub orientation_range: (f64, f64),
    /// Rectangle aspect-ratio range, a sub-range of [1, 10].
    #[serde(default = "default_aspect_range")]
    pub aspect_range: (f64, f64),
    /// Admissible covered fraction of a candidate's own pixels, in [0, 1].
    pub overlap: f64,
    pub seed: u64,
    /// Consecutive rejections tolerated before giving up.
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u64,
    /// Characteristic length of a size-1 inclusion as a fraction of the
    /// domain edge; sizes map to lengths as `size * max_radius_frac`.
    #[serde(default = "default_max_radius_frac")]
    pub max_radius_frac: f64,
}

impl GenSpec {
    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::InvalidSpec(msg));
        if self.resolution < 16 {
            return err(format!("resolution {} < 16", self.resolution));
        }
        if !(0.2..=0.8).contains(&self.target_vf) {
            return err(format!("target_vf {} outside [0.2, 0.8]", self.target_vf));
        }
        let (slo, shi) = self.size_range;
        if !(slo > 0.0 && slo <= shi && shi <= 1.0) {
            return err(format!("size_range ({slo}, {shi}) outside (0, 1]"));
        }
        let (olo, ohi) = self.orientation_range;
        if !(olo >= 0.0 && olo <= ohi && ohi < std::f64::consts::PI + 1e-12) {
            return err(format!("orientation_range ({olo}, {ohi}) outside [0, pi)"));
        }
        let (alo, ahi) = self.aspect_range;
        if !(alo >= 1.0 && alo <= ahi && ahi <= 10.0) {
            return err(format!("aspect_range ({alo}, {ahi}) outside [1, 10]"));
        }
        if !(0.0..=1.0).contains(&self.overlap) {
            return err(format!("overlap {} outside [0, 1]", self.overlap));
        }
        if self.max_attempts == 0 {
            return err("max_attempts must be positive".into());
        }
        if !(self.max_radius_frac > 0.0 && self.max_radius_frac <= 1.0) {
            return err(format!("max_radius_frac {} outside (0, 1]", self.max_radius_frac));
        }
        Ok(())
    }
}

/// Morphological prototype in continuous unit-cell coordinates.
#[derive(Debug, Clone, Copy)]
pub enum Shape {
    Circle {
        center: (f64, f64),
        radius: f64,
    },
    Rectangle {
        center: (f64, f64),
        half_lengths: (f64, f64),
        angle: f64,
    },
}

impl Shape {
    /// Half-extents of the axis-aligned bounding box.
    fn reach(&self) -> (f64, f64) {
        match *self {
            Shape::Circle { radius, .. } => (radius, radius),
            Shape::Rectangle {
                half_lengths: (a, b),
                angle,
                ..
            } => {
                let (s, c) = angle.sin_cos();
                (
                    (a * c).abs() + (b * s).abs(),
                    (a * s).abs() + (b * c).abs(),
                )
            }
        }
    }

    fn center(&self) -> (f64, f64) {
        match *self {
            Shape::Circle { center, .. } | Shape::Rectangle { center, .. } => center,
        }
    }

    /// Membership test for an offset from the shape center (no wrapping).
    #[inline]
    fn contains_delta(&self, dx: f64, dy: f64) -> bool {
        match *self {
            Shape::Circle { radius, .. } => dx * dx + dy * dy <= radius * radius,
            Shape::Rectangle {
                half_lengths: (a, b),
                angle,
                ..
            } => {
                let (s, c) = angle.sin_cos();
                let u = c * dx + s * dy;
                let v = -s * dx + c * dy;
                u.abs() <= a && v.abs() <= b
            }
        }
    }
}

/// Grid cells whose centers lie inside the shape, with periodic wrapping.
/// Returns sorted, deduplicated row-major flat indices.
pub fn rasterize_inclusion(shape: &Shape, resolution: usize) -> Vec<usize> {
    let res = resolution as isize;
    let resf = resolution as f64;
    let (cx, cy) = shape.center();
    let (rx, ry) = shape.reach();

    // Pixel centers sit at (k + 0.5) / res; scan the bounding box in
    // unwrapped indices and wrap on emission, so inclusions crossing the
    // cell boundary are handled like any other.
    let j_lo = ((cx - rx) * resf - 0.5).floor() as isize;
    let j_hi = ((cx + rx) * resf - 0.5).ceil() as isize;
    let i_lo = ((cy - ry) * resf - 0.5).floor() as isize;
    let i_hi = ((cy + ry) * resf - 0.5).ceil() as isize;

    let mut cells = Vec::new();
    for i in i_lo..=i_hi {
        let dy = (i as f64 + 0.5) / resf - cy;
        for j in j_lo..=j_hi {
            let dx = (j as f64 + 0.5) / resf - cx;
            if shape.contains_delta(dx, dy) {
                let r = i.rem_euclid(res) as usize;
                let c = j.rem_euclid(res) as usize;
                cells.push(r * resolution + c);
            }
        }
    }
    cells.sort_unstable();
    cells.dedup();
    cells
}

/// Placement statistics of one generation run.
#[derive(Debug, Clone, Default)]
pub struct GenStats {
    /// Accepted inclusions.
    pub accepted: usize,
    /// Rejected candidates over the whole run.
    pub rejected: u64,
    /// Sum of the rasterized pixel counts of all accepted inclusions
    /// (equals the covered count when `overlap = 0`).
    pub accepted_pixel_total: usize,
}

pub fn generate(spec: &GenSpec) -> Result<MicrostructureImage> {
    generate_with_stats(spec).map(|(img, _)| img)
}

/// A range draw that tolerates degenerate (lo == hi) ranges.
fn sample_range(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

pub fn generate_with_stats(spec: &GenSpec) -> Result<(MicrostructureImage, GenStats)> {
    spec.validate()?;
    let res = spec.resolution;
    let n = res * res;
    let target_count = spec.target_vf * n as f64;
    let mut rng = master_rng(spec.seed);
    let mut grid = vec![0u8; n];
    let mut covered = 0usize;
    let mut consecutive_rejections = 0u64;
    let mut stats = GenStats::default();

    while (covered as f64) < target_count {
        let kind = match spec.morphology {
            Morphology::Mixed => {
                if rng.gen_bool(0.5) {
                    Morphology::Circle
                } else {
                    Morphology::Rectangle
                }
            }
            m => m,
        };
        let cx: f64 = rng.gen();
        let cy: f64 = rng.gen();
        let size = sample_range(&mut rng, spec.size_range);
        let length = size * spec.max_radius_frac;
        let shape = match kind {
            Morphology::Circle => Shape::Circle {
                center: (cx, cy),
                radius: length,
            },
            Morphology::Rectangle => {
                let angle = sample_range(&mut rng, spec.orientation_range);
                let aspect = sample_range(&mut rng, spec.aspect_range);
                Shape::Rectangle {
                    center: (cx, cy),
                    half_lengths: (length * aspect.sqrt(), length / aspect.sqrt()),
                    angle,
                }
            }
            Morphology::Mixed => unreachable!(),
        };

        let cells = rasterize_inclusion(&shape, res);
        let already = cells.iter().filter(|&&c| grid[c] == 1).count();
        // Sub-pixel inclusions cover nothing and cannot advance the volume
        // fraction; treat them like rejections so jammed runs terminate.
        let admissible = !cells.is_empty()
            && (already as f64) <= spec.overlap * cells.len() as f64 + 1e-12;

        if admissible {
            for &c in &cells {
                if grid[c] == 0 {
                    grid[c] = 1;
                    covered += 1;
                }
            }
            stats.accepted += 1;
            stats.accepted_pixel_total += cells.len();
            consecutive_rejections = 0;
        } else {
            stats.rejected += 1;
            consecutive_rejections += 1;
            if consecutive_rejections >= spec.max_attempts {
                return Err(Error::FailedToConverge {
                    achieved_vf: covered as f64 / n as f64,
                    target_vf: spec.target_vf,
                    attempts: consecutive_rejections,
                });
            }
        }
    }

    let img = MicrostructureImage::from_pixels(res, grid)?;
    Ok((img, stats))
}

/// A microstructure class: per-image parameters are drawn from these ranges
/// (volume fraction and overlap uniformly, seeds from sub-streams of the
/// master seed), matching how ensembles are sampled for labelling and
/// training.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassSpec {
    pub resolution: usize,
    pub morphology: Morphology,
    #[serde(default = "ClassSpec::default_vf_range")]
    pub vf_range: (f64, f64),
    #[serde(default = "default_size_range")]
    pub size_range: (f64, f64),
    #[serde(default = "default_orientation_range")]
    pub orientation_range: (f64, f64),
    #[serde(default = "default_aspect_range")]
    pub aspect_range: (f64, f64),
    #[serde(default = "ClassSpec::default_overlap_range")]
    pub overlap_range: (f64, f64),
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u64,
    #[serde(default = "default_max_radius_frac")]
    pub max_radius_frac: f64,
}

impl ClassSpec {
    fn default_vf_range() -> (f64, f64) {
        (0.2, 0.8)
    }

    fn default_overlap_range() -> (f64, f64) {
        (0.0, 1.0)
    }

    pub fn new(resolution: usize, morphology: Morphology) -> Self {
        Self {
            resolution,
            morphology,
            vf_range: Self::default_vf_range(),
            size_range: default_size_range(),
            orientation_range: default_orientation_range(),
            aspect_range: default_aspect_range(),
            overlap_range: Self::default_overlap_range(),
            max_attempts: default_max_attempts(),
            max_radius_frac: default_max_radius_frac(),
        }
    }

    /// Instantiates the spec of sample `index` under `master_seed`.
    ///
    /// For `Morphology::Mixed` the prototype alternates with the sample
    /// index so both classes appear in exactly equal numbers; each image
    /// still contains a single prototype kind.
    pub fn instantiate(&self, master_seed: u64, index: u64) -> GenSpec {
        let mut rng = crate::rng::stream_rng(master_seed, index);
        let target_vf = sample_range(&mut rng, self.vf_range);
        let overlap = sample_range(&mut rng, self.overlap_range);
        let seed: u64 = rng.gen();
        let morphology = match self.morphology {
            Morphology::Mixed => {
                if index % 2 == 0 {
                    Morphology::Circle
                } else {
                    Morphology::Rectangle
                }
            }
            m => m,
        };
        GenSpec {
            resolution: self.resolution,
            morphology,
            target_vf,
            size_range: self.size_range,
            orientation_range: self.orientation_range,
            aspect_range: self.aspect_range,
            overlap,
            seed,
            max_attempts: self.max_attempts,
            max_radius_frac: self.max_radius_frac,
        }
    }
}
