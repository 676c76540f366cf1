//! Forward passes and exact reverse-mode gradients.
//!
//! Layout of one encoder layer (pre-norm):
//!
//! ```text
//! h ← h + Drop(Attn(LN₁(h)))
//! h ← h + Drop(W₂·gelu(W₁·LN₂(h)))
//! ```
//!
//! followed by a final layer norm. Row `j` of every activation matrix is
//! feature column `j`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EncoderLayer, LayerNorm, Linear, ModelError, ModelParams, Result, N_CLASSES};
use crate::features::SrlpMatrix;
use crate::tensor::{cross_entropy_logits, dot, softmax, Matrix};

pub type DropoutRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub cls: f64,
    pub ssl: f64,
}

struct NormCache {
    xhat: Matrix,
    inv_std: Vec<f64>,
}

struct AttnCache {
    q: Matrix,
    k: Matrix,
    v: Matrix,
    /// Row-softmaxed scores, one `N × N` matrix per head.
    probs: Vec<Matrix>,
    concat: Matrix,
}

struct LayerCache {
    attn_norm: NormCache,
    a: Matrix,
    attn: AttnCache,
    drop_attn: Option<Matrix>,
    ffn_norm: NormCache,
    b: Matrix,
    u: Matrix,
    g: Matrix,
    drop_ffn: Option<Matrix>,
}

struct EncoderCache {
    x: Matrix,
    layers: Vec<LayerCache>,
    final_norm: NormCache,
}

fn linear(x: &Matrix, l: &Linear) -> Matrix {
    let mut y = x.matmul(&l.weight);
    y.add_row_broadcast(l.bias.as_slice());
    y
}

fn accumulate_linear(x: &Matrix, dy: &Matrix, grad: &mut Linear) {
    x.t_matmul_acc(dy, &mut grad.weight);
    dy.sum_rows_into(grad.bias.as_mut_slice());
}

fn linear_backward(x: &Matrix, dy: &Matrix, l: &Linear, grad: &mut Linear) -> Matrix {
    accumulate_linear(x, dy, grad);
    dy.matmul_t(&l.weight)
}

fn layer_norm(x: &Matrix, ln: &LayerNorm, eps: f64) -> (Matrix, NormCache) {
    let (n, d) = x.shape();
    let mut xhat = Matrix::zeros(n, d);
    let mut y = Matrix::zeros(n, d);
    let mut inv_std = Vec::with_capacity(n);
    let (gain, bias) = (ln.gain.as_slice(), ln.bias.as_slice());
    for i in 0..n {
        let row = x.row(i);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let is = 1.0 / (var + eps).sqrt();
        inv_std.push(is);
        let (xh, yr) = (xhat.row_mut(i), y.row_mut(i));
        for c in 0..d {
            xh[c] = (row[c] - mean) * is;
        }
        for c in 0..d {
            yr[c] = xh[c] * gain[c] + bias[c];
        }
    }
    (y, NormCache { xhat, inv_std })
}

fn layer_norm_backward(dy: &Matrix, ln: &LayerNorm, cache: &NormCache, grad: &mut LayerNorm) -> Matrix {
    let (n, d) = dy.shape();
    let gain = ln.gain.as_slice();
    let mut dx = Matrix::zeros(n, d);
    let mut dxhat = vec![0.0; d];
    for i in 0..n {
        let (dyr, xh) = (dy.row(i), cache.xhat.row(i));
        {
            let gg = grad.gain.as_mut_slice();
            for c in 0..d {
                gg[c] += dyr[c] * xh[c];
            }
        }
        {
            let gb = grad.bias.as_mut_slice();
            for c in 0..d {
                gb[c] += dyr[c];
            }
        }
        for c in 0..d {
            dxhat[c] = dyr[c] * gain[c];
        }
        let mean_d = dxhat.iter().sum::<f64>() / d as f64;
        let mean_dx = dot(&dxhat, xh) / d as f64;
        let is = cache.inv_std[i];
        let out = dx.row_mut(i);
        for c in 0..d {
            out[c] = is * (dxhat[c] - mean_d - xh[c] * mean_dx);
        }
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

#[inline]
fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_C * (u + GELU_K * u * u * u)).tanh())
}

#[inline]
fn gelu_grad(u: f64) -> f64 {
    let t = (GELU_C * (u + GELU_K * u * u * u)).tanh();
    0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * u * u)
}

fn dropout_mask(rng: Option<&mut DropoutRng>, p: f64, n: usize, d: usize) -> Option<Matrix> {
    let rng = rng?;
    if p <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - p);
    Some(Matrix::from_vec(n, d, (0..n * d).map(|_| if rng.random::<f64>() < p { 0.0 } else { keep }).collect()))
}

fn hadamard(m: &mut Matrix, mask: &Matrix) {
    for (x, k) in m.as_mut_slice().iter_mut().zip(mask.as_slice()) {
        *x *= k;
    }
}

fn attention(a: &Matrix, layer: &EncoderLayer, n_heads: usize) -> (Matrix, AttnCache) {
    let q = linear(a, &layer.query);
    let k = linear(a, &layer.key);
    let v = linear(a, &layer.value);
    let (n, d) = a.shape();
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut concat = Matrix::zeros(n, d);
    let mut probs = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let off = h * dh;
        let mut p = Matrix::zeros(n, n);
        for i in 0..n {
            let qi = &q.row(i)[off..off + dh];
            let scores: Vec<f64> = (0..n).map(|j| dot(qi, &k.row(j)[off..off + dh]) * scale).collect();
            let s = softmax(&scores);
            let out = &mut concat.row_mut(i)[off..off + dh];
            for (j, &pij) in s.iter().enumerate() {
                for (o, vv) in out.iter_mut().zip(&v.row(j)[off..off + dh]) {
                    *o += pij * vv;
                }
            }
            p.row_mut(i).copy_from_slice(&s);
        }
        probs.push(p);
    }
    let out = linear(&concat, &layer.output);
    (out, AttnCache { q, k, v, probs, concat })
}

fn attention_backward(
    a: &Matrix,
    dout: &Matrix,
    layer: &EncoderLayer,
    cache: &AttnCache,
    grad: &mut EncoderLayer,
    n_heads: usize,
) -> Matrix {
    let dconcat = linear_backward(&cache.concat, dout, &layer.output, &mut grad.output);
    let (n, d) = a.shape();
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let (mut dq, mut dk, mut dv) = (Matrix::zeros(n, d), Matrix::zeros(n, d), Matrix::zeros(n, d));
    let mut dp = vec![0.0; n];
    for h in 0..n_heads {
        let off = h * dh;
        let p = &cache.probs[h];
        for i in 0..n {
            let dci = &dconcat.row(i)[off..off + dh];
            for j in 0..n {
                dp[j] = dot(dci, &cache.v.row(j)[off..off + dh]);
                let pij = p.get(i, j);
                for (o, g) in dv.row_mut(j)[off..off + dh].iter_mut().zip(dci) {
                    *o += pij * g;
                }
            }
            let pi = p.row(i);
            let s = dot(pi, &dp);
            for j in 0..n {
                let ds = pi[j] * (dp[j] - s) * scale;
                if ds == 0.0 {
                    continue;
                }
                for (o, kk) in dq.row_mut(i)[off..off + dh].iter_mut().zip(&cache.k.row(j)[off..off + dh]) {
                    *o += ds * kk;
                }
                for (o, qq) in dk.row_mut(j)[off..off + dh].iter_mut().zip(&cache.q.row(i)[off..off + dh]) {
                    *o += ds * qq;
                }
            }
        }
    }
    let mut da = linear_backward(a, &dq, &layer.query, &mut grad.query);
    da.add_assign(&linear_backward(a, &dk, &layer.key, &mut grad.key));
    da.add_assign(&linear_backward(a, &dv, &layer.value, &mut grad.value));
    da
}

fn encode(params: &ModelParams, x: &Matrix, mut rng: Option<&mut DropoutRng>) -> (Matrix, EncoderCache) {
    let cfg = &params.config;
    let n = x.rows();
    let mut h = linear(x, &params.input);
    for i in 0..n {
        for (v, p) in h.row_mut(i).iter_mut().zip(params.positions.row(i)) {
            *v += p;
        }
    }
    let mut layers = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let (a, attn_norm) = layer_norm(&h, &layer.attn_norm, cfg.layer_norm_eps);
        let (mut attn_out, attn) = attention(&a, layer, cfg.n_heads);
        let drop_attn = dropout_mask(rng.as_deref_mut(), cfg.dropout, n, cfg.d_model);
        if let Some(m) = &drop_attn {
            hadamard(&mut attn_out, m);
        }
        h.add_assign(&attn_out);

        let (b, ffn_norm) = layer_norm(&h, &layer.ffn_norm, cfg.layer_norm_eps);
        let u = linear(&b, &layer.ffn_in);
        let g = Matrix::from_vec(u.rows(), u.cols(), u.as_slice().iter().map(|&x| gelu(x)).collect());
        let mut f = linear(&g, &layer.ffn_out);
        let drop_ffn = dropout_mask(rng.as_deref_mut(), cfg.dropout, n, cfg.d_model);
        if let Some(m) = &drop_ffn {
            hadamard(&mut f, m);
        }
        h.add_assign(&f);
        layers.push(LayerCache { attn_norm, a, attn, drop_attn, ffn_norm, b, u, g, drop_ffn });
    }
    let (z, final_norm) = layer_norm(&h, &params.final_norm, cfg.layer_norm_eps);
    (z, EncoderCache { x: x.clone(), layers, final_norm })
}

fn encode_backward(params: &ModelParams, cache: &EncoderCache, dz: &Matrix, grads: &mut ModelParams) {
    let n_heads = params.config.n_heads;
    let mut dh = layer_norm_backward(dz, &params.final_norm, &cache.final_norm, &mut grads.final_norm);
    for (li, lc) in cache.layers.iter().enumerate().rev() {
        let layer = &params.layers[li];
        let gl = &mut grads.layers[li];

        let mut df = dh.clone();
        if let Some(m) = &lc.drop_ffn {
            hadamard(&mut df, m);
        }
        let mut du = linear_backward(&lc.g, &df, &layer.ffn_out, &mut gl.ffn_out);
        for (d, &u) in du.as_mut_slice().iter_mut().zip(lc.u.as_slice()) {
            *d *= gelu_grad(u);
        }
        let db = linear_backward(&lc.b, &du, &layer.ffn_in, &mut gl.ffn_in);
        dh.add_assign(&layer_norm_backward(&db, &layer.ffn_norm, &lc.ffn_norm, &mut gl.ffn_norm));

        let mut dattn = dh.clone();
        if let Some(m) = &lc.drop_attn {
            hadamard(&mut dattn, m);
        }
        let da = attention_backward(&lc.a, &dattn, layer, &lc.attn, gl, n_heads);
        dh.add_assign(&layer_norm_backward(&da, &layer.attn_norm, &lc.attn_norm, &mut gl.attn_norm));
    }
    for i in 0..dh.rows() {
        for (g, d) in grads.positions.row_mut(i).iter_mut().zip(dh.row(i)) {
            *g += d;
        }
    }
    accumulate_linear(&cache.x, &dh, &mut grads.input);
}

fn mean_pool(z: &Matrix) -> Vec<f64> {
    let mut pooled = vec![0.0; z.cols()];
    z.sum_rows_into(&mut pooled);
    let n = z.rows() as f64;
    pooled.iter_mut().for_each(|v| *v /= n);
    pooled
}

fn classify_head(pooled: &[f64], params: &ModelParams) -> Vec<f64> {
    let p = Matrix::from_vec(1, pooled.len(), pooled.to_vec());
    linear(&p, &params.classifier).into_vec()
}

fn check_input(e: &SrlpMatrix, params: &ModelParams) -> Result<()> {
    let cfg = &params.config;
    if e.column_len() != cfg.input_dim() || e.d_tok() != cfg.d_tok {
        return Err(ModelError::Shape {
            what: "feature column".into(),
            expected: format!("{} (d_tok {})", cfg.input_dim(), cfg.d_tok),
            found: format!("{} (d_tok {})", e.column_len(), e.d_tok()),
        });
    }
    if e.n_frames() == 0 || e.n_frames() > cfg.n_max {
        return Err(ModelError::Shape {
            what: "frame count".into(),
            expected: format!("1..={}", cfg.n_max),
            found: e.n_frames().to_string(),
        });
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(ModelError::InvalidAlpha(alpha))
    }
}

/// Class logits for an unmasked matrix, without dropout.
pub fn forward_classify(e: &SrlpMatrix, params: &ModelParams) -> Result<Vec<f64>> {
    check_input(e, params)?;
    if e.mask().is_some() {
        return Err(ModelError::UnexpectedMask);
    }
    let (z, _) = encode(params, e.columns(), None);
    Ok(classify_head(&mean_pool(&z), params))
}

fn candidate_matrix(candidates: &[Vec<f64>], n: usize, d_tok: usize) -> Result<Matrix> {
    if candidates.len() != n {
        return Err(ModelError::CandidateCount { expected: n, found: candidates.len() });
    }
    if let Some(c) = candidates.iter().find(|c| c.len() != d_tok) {
        return Err(ModelError::Shape { what: "candidate".into(), expected: d_tok.to_string(), found: c.len().to_string() });
    }
    Ok(Matrix::from_rows(candidates))
}

/// Raw matching scores `q·K` for the masked matrix.
pub fn ssl_scores(e_masked: &SrlpMatrix, candidates: &[Vec<f64>], params: &ModelParams) -> Result<Vec<f64>> {
    check_input(e_masked, params)?;
    let mask = e_masked.mask().ok_or(ModelError::MaskNotSet)?;
    let cand = candidate_matrix(candidates, e_masked.n_frames(), params.config.d_tok)?;
    let (z, _) = encode(params, e_masked.columns(), None);
    let keys = linear(&cand, params.role_encoder(mask.role));
    let q = z.row(mask.frame);
    Ok((0..keys.rows()).map(|j| dot(keys.row(j), q)).collect())
}

/// Matching distribution over the `N` candidates (original role vectors of
/// the masked role type, including the masked frame's own).
pub fn forward_ssl(e_masked: &SrlpMatrix, candidates: &[Vec<f64>], params: &ModelParams) -> Result<Vec<f64>> {
    Ok(softmax(&ssl_scores(e_masked, candidates, params)?))
}

/// `α·CE(softmax(logits), label) + (1−α)·CE(p_ssl, t)`; `p_ssl` is ignored
/// when `α = 1`.
pub fn loss_total(logits: &[f64], label: usize, p_ssl: Option<&[f64]>, t: usize, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if label >= N_CLASSES || logits.len() != N_CLASSES {
        return Err(ModelError::InvalidLabel(label));
    }
    let cls = cross_entropy_logits(logits, label);
    if alpha == 1.0 {
        return Ok(cls);
    }
    let p = p_ssl.ok_or(ModelError::MaskNotSet)?;
    if t >= p.len() {
        return Err(ModelError::TargetOutOfRange { t, n: p.len() });
    }
    let ssl = -p[t].ln();
    Ok(combine(alpha, cls, ssl))
}

fn combine(alpha: f64, cls: f64, ssl: f64) -> f64 {
    if alpha == 1.0 {
        cls
    } else if alpha == 0.0 {
        ssl
    } else {
        alpha * cls + (1.0 - alpha) * ssl
    }
}

/// Exact gradients of the combined loss without dropout.
pub fn backward(
    e: &SrlpMatrix,
    e_masked: &SrlpMatrix,
    label: usize,
    alpha: f64,
    params: &ModelParams,
) -> Result<(LossBreakdown, ModelParams)> {
    loss_and_gradients(e, e_masked, label, alpha, params, None)
}

/// Runs the supervised pass on `e` and the matching pass on `e_masked`
/// through the shared encoder and returns the loss with its gradient.
/// With `dropout`, the configured dropout rate is applied to both passes.
pub fn loss_and_gradients(
    e: &SrlpMatrix,
    e_masked: &SrlpMatrix,
    label: usize,
    alpha: f64,
    params: &ModelParams,
    dropout: Option<&mut DropoutRng>,
) -> Result<(LossBreakdown, ModelParams)> {
    let mut grads = params.zeros_like();
    let loss = accumulate_gradients(e, e_masked, label, alpha, params, dropout, &mut grads)?;
    Ok((loss, grads))
}

/// Like [`loss_and_gradients`], adding the gradient into `grads`.
pub fn accumulate_gradients(
    e: &SrlpMatrix,
    e_masked: &SrlpMatrix,
    label: usize,
    alpha: f64,
    params: &ModelParams,
    mut dropout: Option<&mut DropoutRng>,
    grads: &mut ModelParams,
) -> Result<LossBreakdown> {
    check_alpha(alpha)?;
    if label >= N_CLASSES {
        return Err(ModelError::InvalidLabel(label));
    }
    check_input(e, params)?;
    check_input(e_masked, params)?;
    if e.mask().is_some() {
        return Err(ModelError::UnexpectedMask);
    }
    let mask = e_masked.mask().ok_or(ModelError::MaskNotSet)?;
    if e_masked.n_frames() != e.n_frames() {
        return Err(ModelError::Shape {
            what: "masked matrix".into(),
            expected: e.n_frames().to_string(),
            found: e_masked.n_frames().to_string(),
        });
    }
    let n = e.n_frames();

    let (z, cache) = encode(params, e.columns(), dropout.as_deref_mut());
    let pooled = mean_pool(&z);
    let logits = classify_head(&pooled, params);
    let cls = cross_entropy_logits(&logits, label);
    if alpha > 0.0 {
        let mut dlogits = softmax(&logits);
        dlogits[label] -= 1.0;
        dlogits.iter_mut().for_each(|g| *g *= alpha);
        let dl = Matrix::from_vec(1, N_CLASSES, dlogits);
        let pooled_m = Matrix::from_vec(1, pooled.len(), pooled);
        let dpooled = linear_backward(&pooled_m, &dl, &params.classifier, &mut grads.classifier);
        let mut dz = Matrix::zeros(n, params.config.d_model);
        for i in 0..n {
            for (o, g) in dz.row_mut(i).iter_mut().zip(dpooled.as_slice()) {
                *o = g / n as f64;
            }
        }
        encode_backward(params, &cache, &dz, grads);
    }

    let cand = Matrix::from_rows(&e.role_vectors(mask.role));
    let (z2, cache2) = encode(params, e_masked.columns(), dropout);
    let keys = linear(&cand, params.role_encoder(mask.role));
    let q = z2.row(mask.frame).to_vec();
    let scores: Vec<f64> = (0..n).map(|j| dot(keys.row(j), &q)).collect();
    let ssl = cross_entropy_logits(&scores, mask.frame);
    if alpha < 1.0 {
        let mut ds = softmax(&scores);
        ds[mask.frame] -= 1.0;
        ds.iter_mut().for_each(|g| *g *= 1.0 - alpha);
        let d = params.config.d_model;
        let mut dkeys = Matrix::zeros(n, d);
        let mut dq = vec![0.0; d];
        for j in 0..n {
            for (o, k) in dq.iter_mut().zip(keys.row(j)) {
                *o += ds[j] * k;
            }
            for (o, qq) in dkeys.row_mut(j).iter_mut().zip(&q) {
                *o = ds[j] * qq;
            }
        }
        accumulate_linear(&cand, &dkeys, grads.role_encoder_mut(mask.role));
        let mut dz2 = Matrix::zeros(n, d);
        dz2.row_mut(mask.frame).copy_from_slice(&dq);
        encode_backward(params, &cache2, &dz2, grads);
    }

    Ok(LossBreakdown { total: combine(alpha, cls, ssl), cls, ssl })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{mask_matrix, RoleFeatures, Role};
    use crate::model::ModelConfig;
    use rand::SeedableRng;

    fn small_config() -> ModelConfig {
        ModelConfig { d_model: 8, n_layers: 1, n_heads: 2, n_max: 4, dropout: 0.0, ..ModelConfig::new(4, 3) }
    }

    fn random_matrix(n: usize, d_tok: usize, d_f: usize, seed: u64) -> SrlpMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = || (0..d_tok).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        let frames: Vec<RoleFeatures> = (0..n).map(|_| RoleFeatures { v: v(), a0: v(), a1: v() }).collect();
        let f: Vec<f64> = (0..d_f).map(|i| 0.3 * i as f64 - 0.2).collect();
        SrlpMatrix::from_features(&frames, &f).unwrap()
    }

    #[test]
    fn zero_params_give_classifier_bias() {
        let cfg = small_config();
        let mut p = ModelParams::zeros(&cfg);
        p.classifier.bias = Matrix::from_vec(1, 3, vec![0.1, 0.2, 0.3]);
        for seed in 0..3 {
            let logits = forward_classify(&random_matrix(3, 4, 3, seed), &p).unwrap();
            assert_eq!(logits, vec![0.1, 0.2, 0.3]);
        }
    }

    #[test]
    fn duplicated_column_mean_pool_invariance() {
        let cfg = small_config();
        let mut p = ModelParams::init(&cfg, 11).unwrap();
        p.positions.fill(0.0);
        let one = random_matrix(1, 4, 3, 5);
        let col = one.column(0).to_vec();
        let d = one.d_tok();
        let f = RoleFeatures { v: col[..d].to_vec(), a0: col[d..2 * d].to_vec(), a1: col[2 * d..3 * d].to_vec() };
        let two = SrlpMatrix::from_features(&[f.clone(), f], &col[3 * d..]).unwrap();
        let a = forward_classify(&one, &p).unwrap();
        let b = forward_classify(&two, &p).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn single_candidate_is_certain() {
        let p = ModelParams::init(&small_config(), 2).unwrap();
        let e = random_matrix(1, 4, 3, 1);
        let m = mask_matrix(&e, 0, Role::V).unwrap();
        let probs = forward_ssl(&m, &e.role_vectors(Role::V), &p).unwrap();
        assert_eq!(probs, vec![1.0]);
        let (loss, _) = backward(&e, &m, 0, 0.0, &p).unwrap();
        assert_eq!(loss.ssl, 0.0);
    }

    #[test]
    fn orthogonal_keys_give_uniform_matching() {
        let mut p = ModelParams::init(&small_config(), 2).unwrap();
        p.role_a0.weight.fill(0.0);
        p.role_a0.bias.fill(0.0);
        let e = random_matrix(3, 4, 3, 9);
        let m = mask_matrix(&e, 2, Role::A0).unwrap();
        let probs = forward_ssl(&m, &e.role_vectors(Role::A0), &p).unwrap();
        for v in probs {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn ssl_errors() {
        let p = ModelParams::init(&small_config(), 2).unwrap();
        let e = random_matrix(3, 4, 3, 9);
        assert!(matches!(forward_ssl(&e, &e.role_vectors(Role::V), &p), Err(ModelError::MaskNotSet)));
        let m = mask_matrix(&e, 0, Role::V).unwrap();
        assert!(matches!(
            forward_ssl(&m, &e.role_vectors(Role::V)[..2], &p),
            Err(ModelError::CandidateCount { expected: 3, found: 2 })
        ));
        assert!(matches!(forward_classify(&m, &p), Err(ModelError::UnexpectedMask)));
        let wrong = random_matrix(2, 5, 3, 1);
        assert!(matches!(forward_classify(&wrong, &p), Err(ModelError::Shape { .. })));
    }

    #[test]
    fn loss_total_cases() {
        let l = loss_total(&[0.3, 0.1, -0.2], 2, None, 0, 1.0).unwrap();
        assert_eq!(l, cross_entropy_logits(&[0.3, 0.1, -0.2], 2));
        let l = loss_total(&[5.0, 1.0, 0.0], 0, Some(&[0.25; 4]), 3, 0.0).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-15);
        assert!((4f64.ln() - 1.3863).abs() < 1e-4);
        let l = loss_total(&[0.0, 0.0, 0.0], 1, Some(&[0.5, 0.5]), 0, 0.7).unwrap();
        assert!((l - (0.7 * 3f64.ln() + 0.3 * 2f64.ln())).abs() < 1e-15);
        assert!(matches!(loss_total(&[0.0; 3], 0, None, 0, 1.5), Err(ModelError::InvalidAlpha(_))));
        assert!(matches!(loss_total(&[0.0; 3], 0, None, 0, -0.1), Err(ModelError::InvalidAlpha(_))));
    }

    #[test]
    fn alpha_one_leaves_role_encoders_untouched() {
        let p = ModelParams::init(&small_config(), 4).unwrap();
        let e = random_matrix(3, 4, 3, 4);
        for role in Role::ALL {
            let m = mask_matrix(&e, 1, role).unwrap();
            let (_, g) = backward(&e, &m, 1, 1.0, &p).unwrap();
            for r in Role::ALL {
                let enc = g.role_encoder(r);
                assert!(enc.weight.as_slice().iter().chain(enc.bias.as_slice()).all(|&x| x == 0.0));
            }
        }
    }

    #[test]
    fn constant_ssl_loss_has_zero_ssl_gradients() {
        let p = ModelParams::init(&small_config(), 4).unwrap();
        let e = random_matrix(1, 4, 3, 4);
        let m = mask_matrix(&e, 0, Role::V).unwrap();
        let (loss, g) = backward(&e, &m, 0, 0.0, &p).unwrap();
        assert_eq!(loss.total, 0.0);
        for (name, t) in g.tensors() {
            assert!(t.as_slice().iter().all(|&x| x == 0.0), "{name}");
        }
    }

    #[test]
    fn role_encoders_only_affect_matching() {
        let p = ModelParams::init(&small_config(), 8).unwrap();
        let e = random_matrix(3, 4, 3, 8);
        let m = mask_matrix(&e, 1, Role::V).unwrap();
        let cands = e.role_vectors(Role::V);
        let mut q = p.clone();
        q.role_v.weight.scale(3.0);
        assert_eq!(forward_classify(&e, &p).unwrap(), forward_classify(&e, &q).unwrap());
        assert_ne!(forward_ssl(&m, &cands, &p).unwrap(), forward_ssl(&m, &cands, &q).unwrap());
        let mut r = p.clone();
        r.layers[0].value.weight.scale(1.5);
        assert_ne!(forward_classify(&e, &p).unwrap(), forward_classify(&e, &r).unwrap());
        assert_ne!(forward_ssl(&m, &cands, &p).unwrap(), forward_ssl(&m, &cands, &r).unwrap());
    }

    #[test]
    fn dropout_is_seeded_and_off_by_default() {
        let mut cfg = small_config();
        cfg.dropout = 0.3;
        let p = ModelParams::init(&cfg, 4).unwrap();
        let e = random_matrix(3, 4, 3, 4);
        let m = mask_matrix(&e, 1, Role::V).unwrap();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            loss_and_gradients(&e, &m, 2, 0.5, &p, Some(&mut rng)).unwrap()
        };
        assert_eq!(run(1), run(1));
        assert_ne!(run(1).0, run(2).0);
        assert_eq!(backward(&e, &m, 2, 0.5, &p).unwrap(), backward(&e, &m, 2, 0.5, &p).unwrap());
    }

    fn loss_only(e: &SrlpMatrix, m: &SrlpMatrix, label: usize, alpha: f64, p: &ModelParams) -> f64 {
        let logits = forward_classify(e, p).unwrap();
        let mask = m.mask().unwrap();
        let probs = forward_ssl(m, &e.role_vectors(mask.role), p).unwrap();
        loss_total(&logits, label, Some(&probs), mask.frame, alpha).unwrap()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let cfg = small_config();
        let e = random_matrix(3, 4, 3, 21);
        let m = mask_matrix(&e, 1, Role::A1).unwrap();
        let h = 1e-4;
        for alpha in [0.0, 0.7, 1.0] {
            let mut p = ModelParams::init(&cfg, 17).unwrap();
            // non-trivial norms so gain/bias gradients are exercised
            for (_, t) in p.tensors_mut() {
                for (i, x) in t.as_mut_slice().iter_mut().enumerate() {
                    *x += 0.05 * ((i as f64) * 0.37).sin();
                }
            }
            let (_, grads) = backward(&e, &m, 1, alpha, &p).unwrap();
            let names: Vec<String> = p.tensors().into_iter().map(|(n, _)| n).collect();
            for (ti, name) in names.iter().enumerate() {
                let analytic = grads.tensors()[ti].1.as_slice().to_vec();
                let mut numeric = vec![0.0; analytic.len()];
                for k in 0..analytic.len() {
                    let orig = p.tensors()[ti].1.as_slice()[k];
                    p.tensors_mut()[ti].1.as_mut_slice()[k] = orig + h;
                    let up = loss_only(&e, &m, 1, alpha, &p);
                    p.tensors_mut()[ti].1.as_mut_slice()[k] = orig - h;
                    let down = loss_only(&e, &m, 1, alpha, &p);
                    p.tensors_mut()[ti].1.as_mut_slice()[k] = orig;
                    numeric[k] = (up - down) / (2.0 * h);
                }
                let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let scale = analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(numeric.iter().map(|a| a * a).sum::<f64>().sqrt());
                // tensors with an identically zero gradient (key bias) only carry FD noise
                let rel = diff / scale.max(1e-6);
                assert!(rel < 1e-4, "alpha={alpha} {name}: rel err {rel}");
            }
        }
    }
}
