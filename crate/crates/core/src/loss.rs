//! Tuning objectives on the first predicted frame and the reference.
//!
//! The LAB objective is `L = L_l + L_ab`, each a mean squared error on the
//! scaled LAB planes: `L_l` over the luminance plane, `L_ab` over both
//! chrominance planes. `L_rgb` is the plain RGB mean squared error.

use alloc::vec;
use alloc::vec::Vec;

use crate::colorspace::{srgb_to_lab, srgb_to_lab_jacobian, LabScale};
use crate::image::RgbImage;
use crate::model::Reference;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum LossMode {
    /// `L_l + L_ab`.
    #[default]
    LabCombined,
    /// `L_l` only (chrominance term switched off).
    LabLOnly,
    /// `L_ab` only (luminance term switched off).
    LabAbOnly,
    /// RGB mean squared error.
    Rgb,
}

impl LossMode {
    pub const ALL: [Self; 4] = [Self::Rgb, Self::LabLOnly, Self::LabAbOnly, Self::LabCombined];

    /// Command-line spelling.
    pub fn name(self) -> &'static str {
        match self {
            Self::LabCombined => "lab",
            Self::LabLOnly => "lab-l",
            Self::LabAbOnly => "lab-ab",
            Self::Rgb => "rgb",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "lab" | "lab_combined" => Some(Self::LabCombined),
            "lab-l" | "lab_l_only" => Some(Self::LabLOnly),
            "lab-ab" | "lab_ab_only" => Some(Self::LabAbOnly),
            "rgb" => Some(Self::Rgb),
            _ => None,
        }
    }

    /// Label used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            Self::LabCombined => "tuned(lab)",
            Self::LabLOnly => "tuned(l-only)",
            Self::LabAbOnly => "tuned(ab-only)",
            Self::Rgb => "tuned(rgb)",
        }
    }
}

fn check(y1: &RgbImage, z: &Reference) -> Result<()> {
    if y1.dims() != z.dims() {
        return Err(Error::Shape {
            expected: z.dims(),
            found: y1.dims(),
        });
    }
    Ok(())
}

/// Both LAB terms, optionally with their gradients w.r.t. `y1`.
fn lab_terms(
    y1: &RgbImage,
    z: &Reference,
    scale: LabScale,
    weights: Option<(f64, f64)>,
) -> Result<(f64, f64, Vec<[f64; 3]>)> {
    check(y1, z)?;
    let n = y1.len() as f64;
    let mut sum_l = 0.0;
    let mut sum_ab = 0.0;
    let mut grad = if weights.is_some() {
        vec![[0.0; 3]; y1.len()]
    } else {
        Vec::new()
    };
    for (i, (&p, &t)) in y1.pixels().iter().zip(z.image().pixels()).enumerate() {
        let target = srgb_to_lab(t);
        let (lab, jac) = if weights.is_some() {
            srgb_to_lab_jacobian(p)
        } else {
            (srgb_to_lab(p), [[0.0; 3]; 3])
        };
        let dl = (lab[0] - target[0]) / scale.l;
        let da = (lab[1] - target[1]) / scale.ab;
        let db = (lab[2] - target[2]) / scale.ab;
        sum_l += dl * dl;
        sum_ab += da * da + db * db;
        if let Some((wl, wab)) = weights {
            let gl = wl * 2.0 * dl / (scale.l * n);
            let ga = wab * 2.0 * da / (scale.ab * 2.0 * n);
            let gb = wab * 2.0 * db / (scale.ab * 2.0 * n);
            for c in 0..3 {
                grad[i][c] = gl * jac[0][c] + ga * jac[1][c] + gb * jac[2][c];
            }
        }
    }
    Ok((sum_l / n, sum_ab / (2.0 * n), grad))
}

/// Luminance term `L_l`.
pub fn loss_l(y1: &RgbImage, z: &Reference, scale: LabScale) -> Result<f64> {
    Ok(lab_terms(y1, z, scale, None)?.0)
}

/// Chrominance term `L_ab`.
pub fn loss_ab(y1: &RgbImage, z: &Reference, scale: LabScale) -> Result<f64> {
    Ok(lab_terms(y1, z, scale, None)?.1)
}

/// Combined objective `L_l + L_ab`.
pub fn loss_lab(y1: &RgbImage, z: &Reference, scale: LabScale) -> Result<f64> {
    let (l, ab, _) = lab_terms(y1, z, scale, None)?;
    Ok(l + ab)
}

pub fn loss_rgb(y1: &RgbImage, z: &Reference) -> Result<f64> {
    Ok(rgb_terms(y1, z, false)?.0)
}

fn rgb_terms(y1: &RgbImage, z: &Reference, want_grad: bool) -> Result<(f64, Vec<[f64; 3]>)> {
    check(y1, z)?;
    let count = (3 * y1.len()) as f64;
    let mut sum = 0.0;
    let mut grad = Vec::new();
    for (p, t) in y1.pixels().iter().zip(z.image().pixels()) {
        let mut g = [0.0; 3];
        for c in 0..3 {
            let d = p[c] - t[c];
            sum += d * d;
            g[c] = 2.0 * d / count;
        }
        if want_grad {
            grad.push(g);
        }
    }
    Ok((sum / count, grad))
}

/// Value of the selected objective.
pub fn loss(mode: LossMode, y1: &RgbImage, z: &Reference, scale: LabScale) -> Result<f64> {
    match mode {
        LossMode::LabCombined => loss_lab(y1, z, scale),
        LossMode::LabLOnly => loss_l(y1, z, scale),
        LossMode::LabAbOnly => loss_ab(y1, z, scale),
        LossMode::Rgb => loss_rgb(y1, z),
    }
}

/// Value of the selected objective and its gradient w.r.t. `y1`.
pub fn loss_and_grad(
    mode: LossMode,
    y1: &RgbImage,
    z: &Reference,
    scale: LabScale,
) -> Result<(f64, Vec<[f64; 3]>)> {
    let lab = |wl, wab| lab_terms(y1, z, scale, Some((wl, wab)));
    match mode {
        LossMode::LabCombined => {
            let (l, ab, g) = lab(1.0, 1.0)?;
            Ok((l + ab, g))
        }
        LossMode::LabLOnly => {
            let (l, _, g) = lab(1.0, 0.0)?;
            Ok((l, g))
        }
        LossMode::LabAbOnly => {
            let (_, ab, g) = lab(0.0, 1.0)?;
            Ok((ab, g))
        }
        LossMode::Rgb => rgb_terms(y1, z, true),
    }
}
