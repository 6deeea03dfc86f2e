//! Per-frame mask renderings as 8-bit images, plus PGM/PPM encoders.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{shape_err, Result};
use crate::hard_mask::HardMask;
use crate::model::SoftMaskState;
use crate::real::Real;
use crate::tokenizer::{Geometry, VideoVolume};

/// Checker squares drawn over hard-masked patches.
pub const CHECKER_CELL: usize = 2;
pub const CHECKER_DARK: u8 = 96;
pub const CHECKER_LIGHT: u8 = 160;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Pixels {
    Gray(Vec<u8>),
    Rgb(Vec<u8>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub pixels: Pixels,
}

impl Image {
    /// Binary PGM (`P5`) or PPM (`P6`) with maxval 255.
    pub fn encode(&self) -> Vec<u8> {
        let (magic, body) = match &self.pixels {
            Pixels::Gray(p) => ("P5", p),
            Pixels::Rgb(p) => ("P6", p),
        };
        let mut out = format!("{magic}\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(body);
        out
    }

    pub fn extension(&self) -> &'static str {
        match self.pixels {
            Pixels::Gray(_) => "pgm",
            Pixels::Rgb(_) => "ppm",
        }
    }
}

/// `[0, 1]` to a byte, rounding half away from zero.
pub fn to_byte(v: f64) -> u8 {
    Float::round(v.clamp(0.0, 1.0) * 255.0) as u8
}

/// Soft-mask colour: 1 is light blue, 0.5 purple, 0 black.
pub fn colormap(v: f64) -> [u8; 3] {
    let v = v.clamp(0.0, 1.0);
    let (blue, purple) = ([110.0, 170.0, 255.0], [140.0, 40.0, 160.0]);
    let mix = |a: [f64; 3], b: [f64; 3], t: f64| [0, 1, 2].map(|i| to_byte((a[i] + (b[i] - a[i]) * t) / 255.0));
    if v >= 0.5 {
        mix(purple, blue, (v - 0.5) * 2.0)
    } else {
        mix([0.0; 3], purple, v * 2.0)
    }
}

fn checker(x: usize, y: usize) -> u8 {
    if (x / CHECKER_CELL + y / CHECKER_CELL).is_multiple_of(2) {
        CHECKER_DARK
    } else {
        CHECKER_LIGHT
    }
}

/// Per-token display scalar of the class-agnostic mask: the largest weight
/// over the feature axis, min-max scaled within each frame.
///
/// The mean over the feature axis is the constant `1/D` because every token's
/// weights are a softmax, so it would render a flat image.
pub fn agnostic_display<T: Real>(s_agn: &[T], n_time: usize, n_visible: usize, dim: usize) -> Vec<f64> {
    let mut out: Vec<f64> =
        s_agn.chunks(dim).map(|lane| lane.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max)).collect();
    for t in 0..n_time {
        let row = &mut out[t * n_visible..(t + 1) * n_visible];
        let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.iter_mut().for_each(|v| *v = if hi > lo { (*v - lo) / (hi - lo) } else { 1.0 });
    }
    out
}

struct Canvas<'a, T> {
    g: Geometry,
    video: &'a VideoVolume<T>,
    mask: &'a HardMask,
}

impl<T: Real> Canvas<'_, T> {
    /// Channel mean of the first frame of temporal block `t`.
    fn gray(&self, t: usize, x: usize, y: usize) -> f64 {
        let c = self.g.video.channels;
        let f = t * self.g.patch.t;
        (0..c).map(|k| self.video.at(f, y, x, k).as_f64()).sum::<f64>() / c as f64
    }

    /// Visible slot of the patch covering `(x, y)`, if any.
    fn slot(&self, x: usize, y: usize) -> Option<usize> {
        let s = (y / self.g.patch.h) * self.g.patches_x() + x / self.g.patch.w;
        self.mask.visible_idx.binary_search(&s).ok()
    }

    fn paint(&self, name: String, rgb: bool, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Image {
        let (w, h) = (self.g.video.width, self.g.video.height);
        let mut px = Vec::with_capacity(w * h * if rgb { 3 } else { 1 });
        for y in 0..h {
            for x in 0..w {
                let c = f(x, y);
                if rgb {
                    px.extend_from_slice(&c);
                } else {
                    px.push(c[0]);
                }
            }
        }
        let pixels = if rgb { Pixels::Rgb(px) } else { Pixels::Gray(px) };
        Image { name, width: w, height: h, pixels }
    }
}

/// Images for every temporal block: the frame, its visible patches, and each
/// available soft mask as a grayscale map and a colour overlay. Hard-masked
/// patches show a fixed checker fill.
pub fn render_heatmaps<T: Real>(
    g: Geometry,
    video: &VideoVolume<T>,
    mask: &HardMask,
    masks: &SoftMaskState<T>,
) -> Result<Vec<Image>> {
    g.validate()?;
    if video.dims != g.video || mask.n_space != g.n_space() {
        return Err(shape_err!("clip {:?} and mask over {} for geometry {g:?}", video.dims, mask.n_space));
    }
    let n_vis = mask.n_visible();
    if masks.n_time != g.n_time() || masks.n_visible != n_vis {
        return Err(shape_err!(
            "soft masks for {}×{} tokens, clip has {}×{n_vis}",
            masks.n_time,
            masks.n_visible,
            g.n_time()
        ));
    }
    let canvas = Canvas { g, video, mask };
    let mut maps: Vec<(&str, Vec<f64>)> = Vec::new();
    if let Some(s) = &masks.s_sem {
        maps.push(("cs", s.data().iter().map(|v| v.as_f64()).collect()));
    }
    if let Some(s) = &masks.s_agn {
        maps.push(("ca", agnostic_display(s.data(), masks.n_time, n_vis, masks.dim)));
    }
    let mut out = Vec::new();
    for t in 0..g.n_time() {
        out.push(canvas.paint(format!("frame{t:02}_original"), false, |x, y| [to_byte(canvas.gray(t, x, y)); 3]));
        out.push(canvas.paint(format!("frame{t:02}_visible"), false, |x, y| match canvas.slot(x, y) {
            Some(_) => [to_byte(canvas.gray(t, x, y)); 3],
            None => [checker(x, y); 3],
        }));
        for (tag, values) in &maps {
            let value = |s: usize| values[t * n_vis + s];
            out.push(canvas.paint(format!("frame{t:02}_{tag}"), false, |x, y| match canvas.slot(x, y) {
                Some(s) => [to_byte(value(s)); 3],
                None => [checker(x, y); 3],
            }));
            out.push(canvas.paint(format!("frame{t:02}_{tag}_overlay"), true, |x, y| match canvas.slot(x, y) {
                Some(s) => {
                    let c = colormap(value(s));
                    let base = canvas.gray(t, x, y) * 255.0;
                    c.map(|v| to_byte((0.5 * base + 0.5 * v as f64) / 255.0))
                }
                None => [checker(x, y); 3],
            }));
        }
    }
    Ok(out)
}
