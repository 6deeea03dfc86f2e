//! Video volumes and the 3-D token grid.
//!
//! A token gathers a `t × h × w × C` sub-volume. Tokens are laid out as
//! `[temporal block][spatial patch][feature]`; spatial patches are numbered
//! row-major and each token is flattened in (time, row, column, channel) order.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, shape_err, Result};
use crate::numerics::Tensor;
use crate::real::Real;

/// Frame count, height, width and channel count of a clip.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VideoDims {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

/// Temporal and spatial extent of one token.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatchSize {
    pub t: usize,
    pub h: usize,
    pub w: usize,
}

/// Clip geometry together with its patch size.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Geometry {
    pub video: VideoDims,
    pub patch: PatchSize,
}

impl Geometry {
    /// 8×32×32×1 clips cut into 2×8×8 tokens: 4 temporal blocks, 16 patches, 128 features.
    pub const DESK: Geometry = Geometry {
        video: VideoDims { frames: 8, height: 32, width: 32, channels: 1 },
        patch: PatchSize { t: 2, h: 8, w: 8 },
    };

    /// 16×224×224×3 clips cut into 2×16×16 tokens.
    pub const FULL: Geometry = Geometry {
        video: VideoDims { frames: 16, height: 224, width: 224, channels: 3 },
        patch: PatchSize { t: 2, h: 16, w: 16 },
    };

    pub fn validate(&self) -> Result<()> {
        let (v, p) = (self.video, self.patch);
        if v.channels == 0 || p.t == 0 || p.h == 0 || p.w == 0 {
            return Err(arg_err!("patch sizes and channel count must be positive"));
        }
        for (axis, len, patch) in [("frames", v.frames, p.t), ("height", v.height, p.h), ("width", v.width, p.w)] {
            if len == 0 || len % patch != 0 {
                return Err(arg_err!("{axis} = {len} is not divisible by patch size {patch}"));
            }
        }
        Ok(())
    }

    pub fn n_time(&self) -> usize {
        self.video.frames / self.patch.t
    }

    pub fn patches_x(&self) -> usize {
        self.video.width / self.patch.w
    }

    pub fn patches_y(&self) -> usize {
        self.video.height / self.patch.h
    }

    pub fn n_space(&self) -> usize {
        self.patches_x() * self.patches_y()
    }

    pub fn token_dim(&self) -> usize {
        self.patch.t * self.patch.h * self.patch.w * self.video.channels
    }
}

/// Raw clip with values in `[0, 1]`, stored `[T][H][W][C]`.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoVolume<T> {
    pub dims: VideoDims,
    pub data: Vec<T>,
}

impl<T: Real> VideoVolume<T> {
    pub fn new(dims: VideoDims, data: Vec<T>) -> Result<Self> {
        let n = dims.frames * dims.height * dims.width * dims.channels;
        if n == 0 || n != data.len() {
            return Err(shape_err!("volume {dims:?} needs {n} values, got {}", data.len()));
        }
        if data.iter().any(|v| !(*v >= T::zero() && *v <= T::one())) {
            return Err(arg_err!("video values must lie in [0, 1]"));
        }
        Ok(Self { dims, data })
    }

    pub fn at(&self, f: usize, y: usize, x: usize, c: usize) -> T {
        let d = self.dims;
        self.data[((f * d.height + y) * d.width + x) * d.channels + c]
    }

    pub fn as_tensor(&self) -> Tensor<T> {
        let d = self.dims;
        Tensor::from_parts(vec![d.frames, d.height, d.width, d.channels], self.data.clone())
    }

    pub fn from_tensor(t: &Tensor<T>) -> Result<Self> {
        let [frames, height, width, channels] = t.shape() else {
            return Err(shape_err!("video tensor must be [T,H,W,C], got {:?}", t.shape()));
        };
        Self::new(VideoDims { frames: *frames, height: *height, width: *width, channels: *channels }, t.data().to_vec())
    }

    pub fn cast<U: Real>(&self) -> VideoVolume<U> {
        VideoVolume { dims: self.dims, data: self.data.iter().map(|v| U::lit(v.as_f64())).collect() }
    }
}

/// Tokenized clip `[N_t][N_s][D]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenGrid<T> {
    pub geometry: Geometry,
    pub data: Tensor<T>,
}

impl<T: Real> TokenGrid<T> {
    pub fn new(geometry: Geometry, data: Tensor<T>) -> Result<Self> {
        geometry.validate()?;
        let expect = [geometry.n_time(), geometry.n_space(), geometry.token_dim()];
        if data.shape() != expect {
            return Err(shape_err!("token grid {:?} does not match geometry {expect:?}", data.shape()));
        }
        Ok(Self { geometry, data })
    }

    pub fn n_time(&self) -> usize {
        self.geometry.n_time()
    }

    pub fn n_space(&self) -> usize {
        self.geometry.n_space()
    }

    pub fn dim(&self) -> usize {
        self.geometry.token_dim()
    }

    pub fn token(&self, time: usize, space: usize) -> &[T] {
        let d = self.dim();
        let at = (time * self.n_space() + space) * d;
        &self.data.data()[at..at + d]
    }
}

fn for_each_token_element(geom: &Geometry, mut f: impl FnMut(usize, usize)) {
    let (v, p) = (geom.video, geom.patch);
    let px = geom.patches_x();
    let mut token_offset = 0;
    for bt in 0..geom.n_time() {
        for s in 0..geom.n_space() {
            let (py, pxi) = (s / px, s % px);
            for ft in 0..p.t {
                for r in 0..p.h {
                    for col in 0..p.w {
                        for c in 0..v.channels {
                            let frame = bt * p.t + ft;
                            let y = py * p.h + r;
                            let x = pxi * p.w + col;
                            let vol = ((frame * v.height + y) * v.width + x) * v.channels + c;
                            f(vol, token_offset);
                            token_offset += 1;
                        }
                    }
                }
            }
        }
    }
}

/// Cuts a clip into `t × h × w × C` tokens.
pub fn tokenize<T: Real>(v: &VideoVolume<T>, patch: PatchSize) -> Result<TokenGrid<T>> {
    let geometry = Geometry { video: v.dims, patch };
    geometry.validate()?;
    let mut out = vec![T::zero(); v.data.len()];
    for_each_token_element(&geometry, |vol, tok| out[tok] = v.data[vol]);
    let shape = vec![geometry.n_time(), geometry.n_space(), geometry.token_dim()];
    Ok(TokenGrid { geometry, data: Tensor::from_parts(shape, out) })
}

/// Exact inverse of [`tokenize`].
pub fn detokenize<T: Real>(g: &TokenGrid<T>) -> Result<VideoVolume<T>> {
    g.geometry.validate()?;
    let expect = [g.n_time(), g.n_space(), g.dim()];
    if g.data.shape() != expect {
        return Err(shape_err!("token grid {:?} inconsistent with geometry {expect:?}", g.data.shape()));
    }
    let mut out = vec![T::zero(); g.data.len()];
    for_each_token_element(&g.geometry, |vol, tok| out[vol] = g.data.data()[tok]);
    Ok(VideoVolume { dims: g.geometry.video, data: out })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(dims: VideoDims) -> VideoVolume<f32> {
        let n = dims.frames * dims.height * dims.width * dims.channels;
        VideoVolume::new(dims, (0..n).map(|i| i as f32 / n as f32).collect()).unwrap()
    }

    #[test]
    fn full_geometry_counts() {
        let g = Geometry::FULL;
        assert_eq!((g.n_time(), g.n_space(), g.token_dim()), (8, 196, 1536));
    }

    #[test]
    fn desk_geometry_counts() {
        let g = Geometry::DESK;
        assert_eq!((g.n_time(), g.n_space(), g.token_dim()), (4, 16, 128));
    }

    #[test]
    fn non_divisible_axis_is_named() {
        let v = ramp(VideoDims { frames: 5, height: 8, width: 8, channels: 1 });
        let err = tokenize(&v, PatchSize { t: 2, h: 4, w: 4 }).unwrap_err();
        assert!(alloc::format!("{err}").contains("frames"));
        let v = ramp(VideoDims { frames: 4, height: 8, width: 6, channels: 1 });
        let err = tokenize(&v, PatchSize { t: 2, h: 4, w: 4 }).unwrap_err();
        assert!(alloc::format!("{err}").contains("width"));
    }

    #[test]
    fn constant_video_gives_constant_tokens() {
        let dims = VideoDims { frames: 4, height: 8, width: 8, channels: 2 };
        let v = VideoVolume::new(dims, vec![0.25f32; 4 * 8 * 8 * 2]).unwrap();
        let g = tokenize(&v, PatchSize { t: 2, h: 4, w: 4 }).unwrap();
        assert!(g.data.data().iter().all(|&x| x == 0.25));
    }

    #[test]
    fn flattening_order() {
        let dims = VideoDims { frames: 2, height: 4, width: 4, channels: 2 };
        let v = ramp(dims);
        let g = tokenize(&v, PatchSize { t: 2, h: 2, w: 2 }).unwrap();
        // spatial patch 1 is the top-right 2×2 block; feature index walks (time, row, col, channel)
        let tok = g.token(0, 1);
        assert_eq!(tok[0], v.at(0, 0, 2, 0));
        assert_eq!(tok[1], v.at(0, 0, 2, 1));
        assert_eq!(tok[2], v.at(0, 0, 3, 0));
        assert_eq!(tok[4], v.at(0, 1, 2, 0));
        assert_eq!(tok[8], v.at(1, 0, 2, 0));
        let tok = g.token(0, 2);
        assert_eq!(tok[0], v.at(0, 2, 0, 0));
    }

    #[test]
    fn single_token_round_trip() {
        let dims = VideoDims { frames: 2, height: 4, width: 4, channels: 1 };
        let v = ramp(dims);
        let g = tokenize(&v, PatchSize { t: 2, h: 4, w: 4 }).unwrap();
        assert_eq!(g.data.shape(), &[1, 1, 32]);
        assert_eq!(detokenize(&g).unwrap(), v);
    }

    #[test]
    fn mismatched_grid_is_rejected() {
        let g = TokenGrid::<f32> { geometry: Geometry::DESK, data: Tensor::zeros(vec![4, 15, 128]) };
        assert!(detokenize(&g).is_err());
    }
}
