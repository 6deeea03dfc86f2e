//! Both branches recorded on a tape: shared encoder pass, reconstruction
//! decoder, soft masks and classifier.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::agnostic::{diffs_of_pooled, select_activated, selection_margin, ActivatedSet, DiffMode};
use crate::config::{RunConfig, SoftMaskMode};
use crate::error::{arg_err, shape_err, Error, Result};
use crate::hard_mask::{gather_visible, HardMask};
use crate::model::loss::{total_loss, LossReport};
use crate::model::params::{BlockIdx, ModelParams, ModelSpec};
use crate::numerics::{Grads, Tape, Tensor, Var};
use crate::real::Real;
use crate::semantic::{exclusion_margin, kept_indices, CsScores, KEPT_FLOOR};
use crate::tokenizer::TokenGrid;

const LN_EPS: f64 = 1e-6;

/// Which branches run and how the soft masks are formed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branches {
    pub soft_mask: SoftMaskMode,
    pub cs_scores: CsScores,
    pub diff: DiffMode,
    pub top_k: usize,
    pub top_r: usize,
    pub lambda_rec: f64,
    pub lambda_cls: f64,
}

impl Branches {
    pub fn from_config(cfg: &RunConfig) -> Self {
        Self {
            soft_mask: cfg.soft_mask,
            cs_scores: cfg.cs_scores,
            diff: cfg.diff,
            top_k: cfg.top_k,
            top_r: cfg.top_r,
            lambda_rec: cfg.lambda_rec,
            lambda_cls: cfg.lambda_cls,
        }
    }
}

impl Default for Branches {
    fn default() -> Self {
        Self::from_config(&RunConfig::default())
    }
}

/// Soft-mask intermediates of one clip, in encoder feature space.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftMaskState<T> {
    pub n_time: usize,
    pub n_visible: usize,
    pub dim: usize,
    pub tau: Option<Vec<T>>,
    pub activated: Option<ActivatedSet>,
    /// `[N_t, n_s, D_m]`
    pub s_agn: Option<Tensor<T>>,
    /// `[N_t, n_s]`
    pub accum: Option<Tensor<T>>,
    /// `[N_t, n_s]`
    pub activation: Option<Tensor<T>>,
    /// `[N_t, n_s]`
    pub s_sem: Option<Tensor<T>>,
    /// `[N_t, n_s, D_m]`
    pub combined: Tensor<T>,
}

/// Distances from the non-smooth points the forward pass crossed. Finite
/// differences are trustworthy only when these are large against the step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Margins {
    /// Gap at the top-K cut of the frame differences.
    pub top_k: f64,
    /// Smallest gap at any top-r exclusion cut.
    pub top_r: f64,
    /// Smallest gap between a frame's extreme semantic score and its runner-up.
    pub minmax: f64,
    /// Smallest |pre-activation| of a ReLU or absolute value.
    pub kink: f64,
}

impl Margins {
    fn new() -> Self {
        Self { top_k: f64::INFINITY, top_r: f64::INFINITY, minmax: f64::INFINITY, kink: f64::INFINITY }
    }

    /// Ranking margins at least `rank` and kink margins at least `kink`.
    pub fn clear_of(&self, rank: f64, kink: f64) -> bool {
        self.top_k >= rank && self.top_r >= rank && self.minmax >= kink && self.kink >= kink
    }
}

/// A recorded forward pass; call [`Forward::backward`] for parameter gradients.
pub struct Forward<T> {
    pub tape: Tape<T>,
    pub params: Vec<Var>,
    pub total: Var,
    pub report: LossReport,
    pub probs: Vec<T>,
    pub encoded: Var,
    pub reconstruction: Option<Var>,
    pub attention: Vec<Var>,
    pub masks: Option<SoftMaskState<T>>,
    pub margins: Margins,
}

impl<T: Real> Forward<T> {
    /// Gradients of the total loss, one flat buffer per parameter.
    pub fn backward(&self) -> Vec<Vec<T>> {
        let g: Grads<T> = self.tape.backward(self.total);
        self.params.iter().map(|&v| g.get(v)).collect()
    }

    pub fn predicted(&self) -> usize {
        argmax(&self.probs)
    }
}

pub fn argmax<T: Real>(p: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// `pe[p][2i] = sin(p / 10000^(2i/d))`, `pe[p][2i+1] = cos(…)`.
pub fn sinusoid_table(positions: usize, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; positions * dim];
    for p in 0..positions {
        for i in (0..dim).step_by(2) {
            let angle = p as f64 / Float::powf(10_000.0_f64, i as f64 / dim as f64);
            out[p * dim + i] = angle.sin();
            if i + 1 < dim {
                out[p * dim + i + 1] = angle.cos();
            }
        }
    }
    out
}

/// Shape information plus the fixed position tables.
#[derive(Clone, Debug)]
pub struct Model {
    pub spec: ModelSpec,
    enc_pos: Vec<f64>,
    dec_pos: Vec<f64>,
}

struct Rec<'a, T> {
    tape: Tape<T>,
    vars: &'a [Var],
    attention: Vec<Var>,
}

impl<T: Real> Rec<'_, T> {
    fn p(&self, i: usize) -> Var {
        self.vars[i]
    }

    fn linear(&mut self, x: Var, w: usize, b: usize) -> Result<Var> {
        let y = self.tape.matmul(x, self.p(w))?;
        self.tape.add_row(y, self.p(b))
    }

    fn norm(&mut self, x: Var, g: usize, b: usize) -> Result<Var> {
        let n = self.tape.layer_norm_rows(x, T::lit(LN_EPS));
        let n = self.tape.mul_row(n, self.p(g))?;
        self.tape.add_row(n, self.p(b))
    }

    fn block(&mut self, x: Var, b: &BlockIdx, heads: usize) -> Result<Var> {
        let (_, d) = self.tape.shape(x);
        let dh = d / heads;
        let a = self.norm(x, b.ln1_g, b.ln1_b)?;
        let qkv = self.linear(a, b.qkv_w, b.qkv_b)?;
        let scale = T::one() / T::lit(dh as f64).sqrt();
        let mut ctx = Vec::with_capacity(heads);
        for h in 0..heads {
            let q = self.tape.slice_cols(qkv, h * dh, dh)?;
            let k = self.tape.slice_cols(qkv, d + h * dh, dh)?;
            let v = self.tape.slice_cols(qkv, 2 * d + h * dh, dh)?;
            let kt = self.tape.transpose(k);
            let s = self.tape.matmul(q, kt)?;
            let s = self.tape.affine(s, scale, T::zero());
            let p = self.tape.softmax_rows(s);
            self.attention.push(p);
            ctx.push(self.tape.matmul(p, v)?);
        }
        let ctx = if heads == 1 { ctx[0] } else { self.tape.concat_cols(&ctx)? };
        let o = self.linear(ctx, b.proj_w, b.proj_b)?;
        let x = self.tape.add(x, o)?;
        let f = self.norm(x, b.ln2_g, b.ln2_b)?;
        let f = self.linear(f, b.ff1_w, b.ff1_b)?;
        let f = self.tape.gelu(f);
        let f = self.linear(f, b.ff2_w, b.ff2_b)?;
        self.tape.add(x, f)
    }
}

fn min_abs<T: Real>(v: &[T]) -> f64 {
    v.iter().map(|x| x.abs().as_f64()).fold(f64::INFINITY, f64::min)
}

/// Gap between the smallest and second smallest, and the largest and second
/// largest, entries of a row; infinite for rows too short to tie.
fn extreme_gap<T: Real>(row: &[T]) -> f64 {
    if row.len() < 2 {
        return f64::INFINITY;
    }
    let mut v: Vec<f64> = row.iter().map(|x| x.as_f64()).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if v[n - 1] == v[0] {
        return f64::INFINITY;
    }
    (v[1] - v[0]).min(v[n - 1] - v[n - 2])
}

impl Model {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let n = spec.geometry.n_time() * spec.geometry.n_space();
        Ok(Self {
            spec,
            enc_pos: sinusoid_table(n, spec.encoder.model_dim),
            dec_pos: sinusoid_table(n, spec.encoder.decoder_dim),
        })
    }

    fn check<T: Real>(&self, params: &ModelParams<T>, grid: &TokenGrid<T>, mask: &HardMask) -> Result<()> {
        if params.spec != self.spec {
            return Err(arg_err!("parameters were built for a different model"));
        }
        if grid.geometry != self.spec.geometry {
            return Err(shape_err!("clip geometry {:?} for model geometry {:?}", grid.geometry, self.spec.geometry));
        }
        if mask.n_space != grid.n_space() {
            return Err(shape_err!("mask over {} positions for {} patches", mask.n_space, grid.n_space()));
        }
        Ok(())
    }

    fn pos_rows<T: Real>(table: &[f64], dim: usize, rows: &[usize]) -> Vec<T> {
        rows.iter().flat_map(|&p| table[p * dim..(p + 1) * dim].iter().map(|&v| T::lit(v))).collect()
    }

    fn start<'a, T: Real>(&self, params: &ModelParams<T>, vars: &'a mut Vec<Var>) -> Rec<'a, T> {
        let mut tape = Tape::new();
        vars.extend(params.tensors.iter().map(|t| tape.leaf(t)));
        Rec { tape, vars, attention: Vec::new() }
    }

    /// Encoder over the visible tokens: `[N_t·n_s, D_m]` on the tape.
    fn encode_on<T: Real>(
        &self,
        r: &mut Rec<T>,
        params: &ModelParams<T>,
        grid: &TokenGrid<T>,
        mask: &HardMask,
    ) -> Result<Var> {
        let l = &params.layout;
        let visible = gather_visible(grid, mask)?;
        let rows_n = visible.len() / grid.dim();
        let x = r.tape.leaf(&visible.reshape(vec![rows_n, grid.dim()])?);
        let x = r.linear(x, l.embed_w, l.embed_b)?;
        let dm = self.spec.encoder.model_dim;
        let rows = mask.visible_positions(grid.n_time());
        let pos = r.tape.leaf_raw(rows.len(), dm, Self::pos_rows(&self.enc_pos, dm, &rows));
        let mut x = r.tape.add(x, pos)?;
        for b in &l.encoder {
            x = r.block(x, b, self.spec.encoder.heads)?;
        }
        r.norm(x, l.enc_norm_g, l.enc_norm_b)
    }

    /// Decoder over all positions: `[N_t·N_s, D]` on the tape.
    fn decode_on<T: Real>(&self, r: &mut Rec<T>, params: &ModelParams<T>, enc: Var, mask: &HardMask) -> Result<Var> {
        let l = &params.layout;
        let n_t = self.spec.geometry.n_time();
        let total = n_t * self.spec.geometry.n_space();
        let dd = self.spec.encoder.decoder_dim;
        let y = r.linear(enc, l.dec_embed_w, l.dec_embed_b)?;
        let full = r.tape.scatter_rows(y, r.p(l.mask_token), &mask.visible_positions(n_t), total)?;
        let pos = r.tape.leaf_raw(total, dd, self.dec_pos.iter().map(|&v| T::lit(v)).collect());
        let x = r.tape.add(full, pos)?;
        let x = r.block(x, &l.decoder, self.spec.encoder.decoder_heads)?;
        let x = r.norm(x, l.dec_norm_g, l.dec_norm_b)?;
        r.linear(x, l.dec_out_w, l.dec_out_b)
    }

    /// Soft mask `[N_t·n_s, D_m]` (or `[N_t·n_s, 1]` for CS alone) applied to `enc`.
    fn soft_mask_on<T: Real>(
        &self,
        r: &mut Rec<T>,
        params: &ModelParams<T>,
        enc: Var,
        n_vis: usize,
        br: &Branches,
        margins: &mut Margins,
    ) -> Result<(Var, SoftMaskState<T>)> {
        let l = &params.layout;
        let n_t = self.spec.geometry.n_time();
        let dm = self.spec.encoder.model_dim;
        if n_t < 2 {
            return Err(arg_err!("soft masks need at least two temporal blocks"));
        }
        let frames: Vec<Var> = (0..n_t)
            .map(|t| r.tape.gather_rows(enc, &(t * n_vis..(t + 1) * n_vis).collect::<Vec<_>>()))
            .collect::<Result<_>>()?;
        let mut state = SoftMaskState {
            n_time: n_t,
            n_visible: n_vis,
            dim: dm,
            tau: None,
            activated: None,
            s_agn: None,
            accum: None,
            activation: None,
            s_sem: None,
            combined: Tensor::zeros(vec![1]),
        };

        let agn = if br.soft_mask.agnostic() {
            let pooled: Vec<Var> = frames.iter().map(|&f| r.tape.mean_rows(f)).collect();
            let pooled_vals: Vec<Vec<T>> = pooled.iter().map(|&p| r.tape.value(p).to_vec()).collect();
            let tau = diffs_of_pooled(&pooled_vals, br.diff)?;
            let act = select_activated(&tau, br.top_k)?;
            margins.top_k = margins.top_k.min(selection_margin(&tau, br.top_k.min(tau.tau.len())));
            let mut enhanced = Vec::with_capacity(act.frames.len());
            for &a in &act.frames {
                let x = pooled[a];
                let mut h = r.tape.matmul(x, r.p(l.se_w1))?;
                if let Some((b1, _)) = l.se_b {
                    h = r.tape.add_row(h, r.p(b1))?;
                }
                margins.kink = margins.kink.min(min_abs(r.tape.value(h)));
                let h = r.tape.relu(h);
                let mut z = r.tape.matmul(h, r.p(l.se_w2))?;
                if let Some((_, b2)) = l.se_b {
                    z = r.tape.add_row(z, r.p(b2))?;
                }
                let gate = r.tape.softmax_rows(z);
                let g = r.tape.mul(gate, x)?;
                enhanced.push(r.tape.add(g, x)?);
            }
            let per_frame: Vec<Var> = (0..n_t)
                .map(|t| {
                    let w = r.tape.mul_row(frames[t], enhanced[act.nearest_slot(t)])?;
                    Ok(r.tape.softmax_rows(w))
                })
                .collect::<Result<_>>()?;
            let s = r.tape.concat_rows(&per_frame)?;
            state.s_agn = Some(Tensor::new(vec![n_t, n_vis, dm], r.tape.value(s).to_vec())?);
            state.tau = Some(tau.tau);
            state.activated = Some(act);
            Some(s)
        } else {
            None
        };

        let sem = if br.soft_mask.semantic() {
            let rr = br.top_r;
            if rr >= n_vis {
                return Err(arg_err!("cannot exclude {rr} of {n_vis} visible tokens"));
            }
            let f = r.tape.matmul(enc, r.p(l.sim_w))?;
            let uniform = T::one() / T::lit(n_vis as f64);
            let mut m = vec![r.tape.leaf_raw(n_vis, 1, vec![uniform; n_vis])];
            for t in 0..n_t - 1 {
                let cur = r.tape.value(m[t]).to_vec();
                let kept = kept_indices(&cur, rr);
                // the uniform start is a constant, so its ties never move
                if t > 0 {
                    margins.top_r = margins.top_r.min(exclusion_margin(&cur, rr));
                }
                let mk = r.tape.gather_rows(m[t], &kept)?;
                let mk = r.tape.affine(mk, T::one(), T::lit(KEPT_FLOOR));
                let mk = r.tape.normalize_all(mk);
                let prev_rows: Vec<usize> = kept.iter().map(|&s| t * n_vis + s).collect();
                let fk = r.tape.gather_rows(f, &prev_rows)?;
                let fn_ = r.tape.gather_rows(f, &((t + 1) * n_vis..(t + 2) * n_vis).collect::<Vec<_>>())?;
                let fnt = r.tape.transpose(fn_);
                let logits = r.tape.matmul(fk, fnt)?;
                let pt = r.tape.softmax_rows(logits);
                let p = r.tape.transpose(pt);
                let next = r.tape.matmul(p, mk)?;
                m.push(r.tape.normalize_all(next));
            }
            let mut raws = Vec::with_capacity(n_t);
            let mut acts = Vec::with_capacity(n_t * n_vis);
            for t in 0..n_t {
                let a = if br.cs_scores.uses_activation() {
                    margins.kink = margins.kink.min(min_abs(r.tape.value(frames[t])));
                    let abs = r.tape.abs(frames[t]);
                    let a = r.tape.sum_cols(abs);
                    acts.extend_from_slice(r.tape.value(a));
                    Some(a)
                } else {
                    None
                };
                let keep = br.cs_scores.uses_accumulated().then(|| r.tape.affine(m[t], -T::one(), T::one()));
                raws.push(match (a, keep) {
                    (Some(a), Some(k)) => r.tape.mul(a, k)?,
                    (Some(a), None) => a,
                    (None, Some(k)) => k,
                    (None, None) => unreachable!("score choice uses at least one factor"),
                });
            }
            let raw = r.tape.concat_rows(&raws)?;
            let raw = r.tape.reshape(raw, n_t, n_vis)?;
            for row in r.tape.value(raw).chunks(n_vis) {
                margins.minmax = margins.minmax.min(extreme_gap(row));
            }
            let s = r.tape.minmax_rows(raw);
            state.s_sem = Some(r.tape.tensor(s).reshape(vec![n_t, n_vis])?);
            let accum: Vec<T> = m.iter().flat_map(|&v| r.tape.value(v).to_vec()).collect();
            state.accum = Some(Tensor::new(vec![n_t, n_vis], accum)?);
            if br.cs_scores.uses_activation() {
                state.activation = Some(Tensor::new(vec![n_t, n_vis], acts)?);
            }
            Some(r.tape.reshape(s, n_t * n_vis, 1)?)
        } else {
            None
        };

        let mask = match (agn, sem) {
            (Some(a), Some(s)) => r.tape.mul_col(a, s)?,
            (Some(a), None) => a,
            (None, Some(s)) => s,
            (None, None) => return Err(arg_err!("no soft-mask factor enabled")),
        };
        let combined = if sem.is_some() && agn.is_none() {
            let sv = r.tape.value(mask);
            sv.iter().flat_map(|&w| core::iter::repeat_n(w, dm)).collect()
        } else {
            r.tape.value(mask).to_vec()
        };
        state.combined = Tensor::new(vec![n_t, n_vis, dm], combined)?;
        Ok((mask, state))
    }

    /// Optimal tokens, pooling and the two-layer head: a `[1, N]` probability row.
    fn classify_on<T: Real>(
        &self,
        r: &mut Rec<T>,
        params: &ModelParams<T>,
        enc: Var,
        mask: Option<Var>,
    ) -> Result<Var> {
        let l = &params.layout;
        let x = match mask {
            None => enc,
            Some(s) if r.tape.shape(s).1 == 1 => r.tape.mul_col(enc, s)?,
            Some(s) => r.tape.mul(enc, s)?,
        };
        let pooled = r.tape.mean_rows(x);
        let n = r.norm(pooled, l.cls_norm_g, l.cls_norm_b)?;
        let h = r.linear(n, l.cls_w1, l.cls_b1)?;
        let h = r.tape.gelu(h);
        let logits = r.linear(h, l.cls_w2, l.cls_b2)?;
        Ok(r.tape.softmax_rows(logits))
    }

    /// Records both branches and the weighted loss for one clip.
    ///
    /// The reconstruction branch is skipped when `λ_rec = 0`.
    pub fn forward<T: Real>(
        &self,
        params: &ModelParams<T>,
        grid: &TokenGrid<T>,
        mask: &HardMask,
        label: usize,
        br: &Branches,
    ) -> Result<Forward<T>> {
        self.check(params, grid, mask)?;
        if label >= self.spec.class_count {
            return Err(arg_err!("label {label} out of range for {} classes", self.spec.class_count));
        }
        let mut vars = Vec::with_capacity(params.tensors.len());
        let mut r = self.start(params, &mut vars);
        let mut margins = Margins::new();
        let enc = self.encode_on(&mut r, params, grid, mask)?;

        let (rec_loss, reconstruction) = if br.lambda_rec > 0.0 {
            let n_t = grid.n_time();
            let masked = mask.masked_positions(n_t);
            if masked.is_empty() {
                return Err(arg_err!("reconstruction needs masked positions but the mask ratio is 0"));
            }
            let out = self.decode_on(&mut r, params, enc, mask)?;
            let d = grid.dim();
            let pred = r.tape.gather_rows(out, &masked)?;
            let target: Vec<T> =
                masked.iter().flat_map(|&p| grid.data.data()[p * d..(p + 1) * d].iter().copied()).collect();
            let target = r.tape.leaf_raw(masked.len(), d, target);
            let diff = r.tape.sub(pred, target)?;
            let sq = r.tape.mul(diff, diff)?;
            (Some(r.tape.mean_all(sq)), Some(out))
        } else {
            (None, None)
        };

        let (soft, masks) = if br.soft_mask == SoftMaskMode::None {
            (None, None)
        } else {
            let (s, st) = self.soft_mask_on(&mut r, params, enc, mask.n_visible(), br, &mut margins)?;
            (Some(s), Some(st))
        };
        let probs = self.classify_on(&mut r, params, enc, soft)?;
        let cls_loss = r.tape.nll(probs, label)?;

        let weighted_cls = r.tape.affine(cls_loss, T::lit(br.lambda_cls), T::zero());
        let total = match rec_loss {
            Some(lr) => {
                let w = r.tape.affine(lr, T::lit(br.lambda_rec), T::zero());
                r.tape.add(w, weighted_cls)?
            }
            None => weighted_cls,
        };
        let l_rec = rec_loss.map_or(0.0, |v| r.tape.scalar(v).as_f64());
        let l_cls = r.tape.scalar(cls_loss).as_f64();
        let report = total_loss(l_rec, l_cls, br.lambda_rec, br.lambda_cls);
        if !report.l_total.is_finite() {
            return Err(Error::NonFinite(alloc::format!("loss {report:?}")));
        }
        let probs_v = r.tape.value(probs).to_vec();
        let Rec { tape, attention, .. } = r;
        Ok(Forward {
            tape,
            params: vars,
            total,
            report,
            probs: probs_v,
            encoded: enc,
            reconstruction,
            attention,
            masks,
            margins,
        })
    }

    /// Encoder output `[N_t, n_s, D_m]` for the visible tokens.
    pub fn encode<T: Real>(&self, params: &ModelParams<T>, grid: &TokenGrid<T>, mask: &HardMask) -> Result<Tensor<T>> {
        self.check(params, grid, mask)?;
        let mut vars = Vec::new();
        let mut r = self.start(params, &mut vars);
        let enc = self.encode_on(&mut r, params, grid, mask)?;
        r.tape.tensor(enc).reshape(vec![grid.n_time(), mask.n_visible(), self.spec.encoder.model_dim])
    }

    /// Attention probabilities of every encoder head, `[N_t·n_s, N_t·n_s]` each.
    pub fn attention_maps<T: Real>(
        &self,
        params: &ModelParams<T>,
        grid: &TokenGrid<T>,
        mask: &HardMask,
    ) -> Result<Vec<Tensor<T>>> {
        self.check(params, grid, mask)?;
        let mut vars = Vec::new();
        let mut r = self.start(params, &mut vars);
        self.encode_on(&mut r, params, grid, mask)?;
        Ok(r.attention.iter().map(|&a| r.tape.tensor(a)).collect())
    }

    /// Decoder reconstruction `[N_t, N_s, D]` from encoded visible tokens.
    pub fn decode_and_reconstruct<T: Real>(
        &self,
        params: &ModelParams<T>,
        encoded: &Tensor<T>,
        mask: &HardMask,
    ) -> Result<Tensor<T>> {
        let g = self.spec.geometry;
        let (n_t, dm) = (g.n_time(), self.spec.encoder.model_dim);
        if encoded.shape() != [n_t, mask.n_visible(), dm] || mask.n_space != g.n_space() {
            return Err(shape_err!(
                "encoded {:?} with {} visible of {} patches",
                encoded.shape(),
                mask.n_visible(),
                mask.n_space
            ));
        }
        let mut vars = Vec::new();
        let mut r = self.start(params, &mut vars);
        let enc = r.tape.leaf_raw(n_t * mask.n_visible(), dm, encoded.data().to_vec());
        let out = self.decode_on(&mut r, params, enc, mask)?;
        r.tape.tensor(out).reshape(vec![n_t, g.n_space(), g.token_dim()])
    }

    /// Class probabilities from encoded visible tokens and an optional
    /// combined soft mask `[N_t, n_s, D_m]`.
    pub fn classify<T: Real>(
        &self,
        params: &ModelParams<T>,
        encoded: &Tensor<T>,
        soft: Option<&Tensor<T>>,
    ) -> Result<Vec<T>> {
        let dm = self.spec.encoder.model_dim;
        let [n_t, n_vis, d] = encoded.shape() else {
            return Err(shape_err!("encoded tokens must be [N_t, n_s, D_m], got {:?}", encoded.shape()));
        };
        if *d != dm {
            return Err(shape_err!("encoded width {d} for model width {dm}"));
        }
        if let Some(s) = soft {
            if s.shape() != encoded.shape() {
                return Err(shape_err!("soft mask {:?} for encoded {:?}", s.shape(), encoded.shape()));
            }
        }
        let rows = n_t * n_vis;
        let mut vars = Vec::new();
        let mut r = self.start(params, &mut vars);
        let enc = r.tape.leaf_raw(rows, dm, encoded.data().to_vec());
        let s = soft.map(|s| r.tape.leaf_raw(rows, dm, s.data().to_vec()));
        let p = self.classify_on(&mut r, params, enc, s)?;
        Ok(r.tape.value(p).to_vec())
    }
}
