//! Simplified joint image alignment ("congealing"): coordinate descent over a
//! discrete affine grid, minimizing the per-pixel variance of the transformed
//! stack. Congealed images are more prototypical — closer to the stack mean —
//! which downstream experiments exploit as ground truth.

use crate::data::Image;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const MAX_TRANSLATE: i32 = 3;
pub const MAX_ROT_DEG: f64 = 12.0;
pub const SCALE_MIN: f64 = 0.88;
pub const SCALE_MAX: f64 = 1.12;

/// One image's alignment: integer pixel translation, rotation in degrees,
/// isotropic scale. All fields live inside the search box
/// |tx|,|ty| ≤ 3, |rot| ≤ 12°, scale ∈ [0.88, 1.12].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineParams {
    pub tx: i32,
    pub ty: i32,
    pub rot: f64,
    pub scale: f64,
}

impl AffineParams {
    pub fn identity() -> Self {
        Self { tx: 0, ty: 0, rot: 0.0, scale: 1.0 }
    }

    pub fn is_identity(&self) -> bool {
        self.tx == 0 && self.ty == 0 && self.rot == 0.0 && self.scale == 1.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.tx.abs() > MAX_TRANSLATE || self.ty.abs() > MAX_TRANSLATE {
            return Err(Error::InvalidSpec(format!(
                "translation ({}, {}) outside ±{MAX_TRANSLATE}",
                self.tx, self.ty
            )));
        }
        if !self.rot.is_finite() || self.rot.abs() > MAX_ROT_DEG {
            return Err(Error::InvalidSpec(format!("rotation {}° outside ±{MAX_ROT_DEG}°", self.rot)));
        }
        if !self.scale.is_finite() || self.scale < SCALE_MIN || self.scale > SCALE_MAX {
            return Err(Error::InvalidSpec(format!(
                "scale {} outside [{SCALE_MIN}, {SCALE_MAX}]",
                self.scale
            )));
        }
        Ok(())
    }
}

/// Search configuration: sweep count and the discrete grid for each affine
/// parameter. The grids must stay inside the AffineParams box.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CongealSpec {
    pub iterations: usize,
    pub tx_steps: Vec<i32>,
    pub ty_steps: Vec<i32>,
    pub rot_steps: Vec<f64>,
    pub scale_steps: Vec<f64>,
    pub seed: u64,
}

impl Default for CongealSpec {
    fn default() -> Self {
        Self {
            iterations: 3,
            tx_steps: (-3..=3).collect(),
            ty_steps: (-3..=3).collect(),
            rot_steps: vec![-12.0, -8.0, -4.0, 0.0, 4.0, 8.0, 12.0],
            scale_steps: vec![0.88, 0.96, 1.0, 1.04, 1.12],
            seed: 0,
        }
    }
}

impl CongealSpec {
    /// Coarse grid for unit tests and smoke runs.
    pub fn quick_default() -> Self {
        Self {
            iterations: 2,
            tx_steps: vec![-2, 0, 2],
            ty_steps: vec![-2, 0, 2],
            rot_steps: vec![-8.0, 0.0, 8.0],
            scale_steps: vec![1.0],
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidSpec("congealing needs at least one sweep".into()));
        }
        if self.tx_steps.is_empty()
            || self.ty_steps.is_empty()
            || self.rot_steps.is_empty()
            || self.scale_steps.is_empty()
        {
            return Err(Error::InvalidSpec("every affine grid needs at least one step".into()));
        }
        for &tx in &self.tx_steps {
            for &ty in &self.ty_steps {
                for &rot in &self.rot_steps {
                    for &scale in &self.scale_steps {
                        AffineParams { tx, ty, rot, scale }.validate()?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Inverse warp with bilinear sampling and zero padding, rotation/scale about
/// the image center, continuous translation. Forward model:
/// dst = R(rot)·S(scale)·(src − c) + c + t.
pub(crate) fn warp_continuous(img: &Image, tx: f64, ty: f64, rot_deg: f64, scale: f64) -> Image {
    let (h, w) = (img.h(), img.w());
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let theta = rot_deg.to_radians();
    let (sin, cos) = theta.sin_cos();
    let inv_s = 1.0 / scale;
    let mut out = Image::zeros(h, w);
    for yd in 0..h {
        let dy = yd as f64 - cy - ty;
        for xd in 0..w {
            let dx = xd as f64 - cx - tx;
            // R(−θ)/s applied to (dx, dy), then recentered.
            let sx = (cos * dx + sin * dy) * inv_s + cx;
            let sy = (-sin * dx + cos * dy) * inv_s + cy;
            out.set(yd, xd, bilinear(img, sx, sy));
        }
    }
    out
}

fn bilinear(img: &Image, x: f64, y: f64) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let sample = |yy: f64, xx: f64| -> f64 {
        if yy < 0.0 || xx < 0.0 {
            return 0.0;
        }
        let (yy, xx) = (yy as usize, xx as usize);
        if yy >= img.h() || xx >= img.w() {
            0.0
        } else {
            img.at(yy, xx)
        }
    };
    let v00 = sample(y0, x0);
    let v01 = sample(y0, x0 + 1.0);
    let v10 = sample(y0 + 1.0, x0);
    let v11 = sample(y0 + 1.0, x0 + 1.0);
    (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) + fy * ((1.0 - fx) * v10 + fx * v11)
}

/// Applies the affine parameters to one image. Identity parameters return the
/// image bit-identically.
pub fn affine_transform(img: &Image, p: &AffineParams) -> Result<Image> {
    p.validate()?;
    if p.is_identity() {
        return Ok(img.clone());
    }
    Ok(warp_continuous(img, p.tx as f64, p.ty as f64, p.rot, p.scale))
}

/// Result of congealing a stack: transformed images (input order), per-image
/// parameters, and the objective after initialization and after each sweep.
#[derive(Debug, Clone)]
pub struct CongealOutcome {
    pub images: Vec<Image>,
    pub params: Vec<AffineParams>,
    pub objective_history: Vec<f64>,
}

/// Σ over pixels of the stack variance, with candidate pixels `cand` replacing
/// the removed member against residual sums `s` (Σx) and `q` (Σx²).
fn objective_with(s: &[f64], q: &[f64], cand: &[f64], n: f64) -> f64 {
    let mut total = 0.0;
    for ((&sp, &qp), &c) in s.iter().zip(q).zip(cand) {
        let mean = (sp + c) / n;
        total += ((qp + c * c) / n - mean * mean).max(0.0);
    }
    total
}

/// Joint alignment by coordinate descent: each sweep revisits every image and
/// exhaustively searches the affine grid for the parameters minimizing the
/// stack's summed per-pixel variance, holding the other images fixed. A move
/// needs a strict improvement, so ties keep the current parameters and the
/// objective never increases. Candidates always re-warp the original image —
/// transforms do not compound across sweeps.
pub fn congeal_set(images: &[Image], spec: &CongealSpec) -> Result<CongealOutcome> {
    spec.validate()?;
    if images.len() < 2 {
        return Err(Error::InvalidSpec("congealing needs at least two images".into()));
    }
    let (h, w) = (images[0].h(), images[0].w());
    for img in images {
        if img.h() != h || img.w() != w {
            return Err(Error::ShapeMismatch {
                context: "congealing stack image size",
                expected: h * w,
                found: img.h() * img.w(),
            });
        }
    }
    let n = images.len();
    let nf = n as f64;
    let npx = h * w;
    let mut transformed: Vec<Image> = images.to_vec();
    let mut params = vec![AffineParams::identity(); n];

    let mut s = vec![0.0; npx];
    let mut q = vec![0.0; npx];
    for img in &transformed {
        for (j, &v) in img.pixels().iter().enumerate() {
            s[j] += v;
            q[j] += v * v;
        }
    }
    let zero = vec![0.0; npx];
    let full_objective =
        |s: &[f64], q: &[f64]| -> f64 { objective_with(s, q, &zero, nf) };
    let mut history = vec![full_objective(&s, &q)];

    for _sweep in 0..spec.iterations {
        let mut changed = false;
        for i in 0..n {
            for (j, &v) in transformed[i].pixels().iter().enumerate() {
                s[j] -= v;
                q[j] -= v * v;
            }
            let mut best_obj = objective_with(&s, &q, transformed[i].pixels(), nf);
            let mut best: Option<(AffineParams, Image)> = None;
            for &tx in &spec.tx_steps {
                for &ty in &spec.ty_steps {
                    for &rot in &spec.rot_steps {
                        for &scale in &spec.scale_steps {
                            let p = AffineParams { tx, ty, rot, scale };
                            if p == params[i] {
                                continue;
                            }
                            let cand = affine_transform(&images[i], &p)?;
                            let obj = objective_with(&s, &q, cand.pixels(), nf);
                            if obj < best_obj {
                                best_obj = obj;
                                best = Some((p, cand));
                            }
                        }
                    }
                }
            }
            if let Some((p, img)) = best {
                params[i] = p;
                transformed[i] = img;
                changed = true;
            }
            for (j, &v) in transformed[i].pixels().iter().enumerate() {
                s[j] += v;
                q[j] += v * v;
            }
        }
        // Rebuild the running sums once per sweep so incremental float drift
        // cannot accumulate across the whole run.
        s.fill(0.0);
        q.fill(0.0);
        for img in &transformed {
            for (j, &v) in img.pixels().iter().enumerate() {
                s[j] += v;
                q[j] += v * v;
            }
        }
        history.push(full_objective(&s, &q));
        if !changed {
            break;
        }
    }
    Ok(CongealOutcome { images: transformed, params, objective_history: history })
}

/// CSV of chosen parameters: image_id, tx, ty, rot, scale.
pub fn write_params_csv(params: &[AffineParams], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["image_id", "tx", "ty", "rot", "scale"])?;
    for (i, p) in params.iter().enumerate() {
        w.write_record([
            i.to_string(),
            p.tx.to_string(),
            p.ty.to_string(),
            format!("{}", p.rot),
            format!("{}", p.scale),
        ])?;
    }
    w.flush()?;
    Ok(())
}
