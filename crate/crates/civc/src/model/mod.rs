//! Video feature extractor, classifier head, and checkpoints.
//!
//! The network is deliberately small and written out by hand — forward and
//! backward passes are explicit, with no autograd underneath — so that every
//! transfer loss in [`crate::distill`] can be differentiated exactly and
//! checked against finite differences.
//!
//! Architecture, for a clip of `segments` frames at `frame_size^2` pixels:
//!
//! ```text
//! conv1 3x3 /1 -> relu            frame_size,   channels[0]
//! shift -> conv2 3x3 /2 -> relu   frame_size/2, channels[1]
//! shift -> conv3 3x3 /2 -> relu   frame_size/4, channels[2]
//! shift -> conv4 3x3 /1 -> relu   frame_size/4, channels[3]
//! ```
//!
//! `shift` is a temporal channel shift: the first quarter of channels is
//! taken from the next frame, the second quarter from the previous frame
//! (zeros at clip ends), the rest passes through. It is the only place
//! where time mixes, and it is what makes single-frame appearance
//! insufficient for the benchmark's reversed-motion class pairs.
//!
//! The output [`FeatureMap`] is laid out `[channels, time, height, width]`.
//! Internally activations live in `[channels, batch * time, h, w]` so that
//! an im2col + matrix-multiply convolution produces every layer directly in
//! its storage order, and per-sample feature maps fall out as slices.

use ndarray::{s, Array1, Array2, Array4, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

use crate::config::ModelConfig;
use crate::dataio::Clip;
use crate::error::{Error, Result};
use crate::seeds;

pub mod motion;
pub use motion::{estimate_motion_fields, MotionFields};

/// Extractor output for one clip: `[channels, time, height, width]`, f64.
pub type FeatureMap = Array4<f64>;

// ---- Architecture ----

/// Static shape information: everything needed to allocate parameters and
/// predict activation sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arch {
    pub in_channels: usize,
    pub frame_size: usize,
    pub channels: [usize; 4],
    pub segments: usize,
    pub search_radius: usize,
}

/// Per-layer dimensions: input/output channels, stride, input/output edge.
#[derive(Debug, Clone, Copy)]
pub struct LayerDims {
    pub c_in: usize,
    pub c_out: usize,
    pub stride: usize,
    pub side_in: usize,
    pub side_out: usize,
}

impl Arch {
    pub fn new(cfg: &ModelConfig, in_channels: usize, frame_size: usize) -> Arch {
        Arch {
            in_channels,
            frame_size,
            channels: cfg.conv_channels,
            segments: cfg.segments,
            search_radius: cfg.search_radius,
        }
    }

    pub fn layer_dims(&self) -> [LayerDims; 4] {
        let strides = [1usize, 2, 2, 1];
        let mut side = self.frame_size;
        let mut c_in = self.in_channels;
        let mut out = [LayerDims { c_in: 0, c_out: 0, stride: 0, side_in: 0, side_out: 0 }; 4];
        for l in 0..4 {
            let side_out = (side - 1) / strides[l] + 1;
            out[l] = LayerDims {
                c_in,
                c_out: self.channels[l],
                stride: strides[l],
                side_in: side,
                side_out,
            };
            side = side_out;
            c_in = self.channels[l];
        }
        out
    }

    /// Shape of the produced feature map: `(channels, time, h, w)`.
    pub fn feature_shape(&self) -> (usize, usize, usize, usize) {
        let dims = self.layer_dims();
        (self.channels[3], self.segments, dims[3].side_out, dims[3].side_out)
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims()
            .iter()
            .map(|d| d.c_out * d.c_in * 9 + d.c_out)
            .sum()
    }
}

// ---- Extractor ----

#[derive(Debug, Clone)]
struct ConvLayer {
    /// `[c_out, c_in * 9]`, kernel unrolled row-major as (c_in, ky, kx).
    weight: Array2<f64>,
    bias: Array1<f64>,
}

/// The convolutional feature extractor.
#[derive(Debug, Clone)]
pub struct Extractor {
    pub arch: Arch,
    layers: Vec<ConvLayer>,
}

/// Parameter gradients, same shapes as the extractor's layers.
#[derive(Debug, Clone)]
pub struct ExtractorGrads {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Intermediate state kept by a cached forward pass for backprop.
pub struct BatchCache {
    batch: usize,
    /// Unrolled input patches per layer (post-shift), for weight gradients.
    cols: Vec<Array2<f64>>,
    /// Post-relu activations per layer, for relu masks and shift backprop.
    acts: Vec<Array4<f64>>,
}

impl Extractor {
    /// He-normal initialization from a derived seed.
    pub fn init(arch: Arch, seed: u64) -> Extractor {
        let mut rng = seeds::rng(seed, "extractor-init", 0);
        let layers = arch
            .layer_dims()
            .iter()
            .map(|d| {
                let fan_in = d.c_in * 9;
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).unwrap();
                let weight =
                    Array2::from_shape_fn((d.c_out, fan_in), |_| normal.sample(&mut rng));
                ConvLayer { weight, bias: Array1::zeros(d.c_out) }
            })
            .collect();
        Extractor { arch, layers }
    }

    pub fn param_count(&self) -> usize {
        self.arch.param_count()
    }

    /// Feature maps for a batch of clips, discarding intermediates.
    pub fn forward_batch(&self, clips: &[&Clip]) -> Vec<FeatureMap> {
        self.run_forward(clips, false).0
    }

    /// Feature maps plus everything backprop needs.
    pub fn forward_batch_cached(&self, clips: &[&Clip]) -> (Vec<FeatureMap>, BatchCache) {
        let (maps, cache) = self.run_forward(clips, true);
        (maps, cache.expect("cache requested"))
    }

    /// Single-clip convenience wrapper.
    pub fn forward(&self, clip: &Clip) -> FeatureMap {
        self.forward_batch(&[clip]).pop().unwrap()
    }

    fn run_forward(&self, clips: &[&Clip], keep: bool) -> (Vec<FeatureMap>, Option<BatchCache>) {
        let t_len = self.arch.segments;
        let batch = clips.len();
        let mut x = clips_to_input(clips, &self.arch);
        let mut cache = keep.then(|| BatchCache { batch, cols: Vec::new(), acts: Vec::new() });

        for (l, layer) in self.layers.iter().enumerate() {
            if l > 0 {
                x = temporal_shift(&x, t_len, false);
            }
            let dims = self.arch.layer_dims()[l];
            let cols = im2col(&x, dims.stride);
            let mut out = layer.weight.dot(&cols);
            for (mut row, &b) in out.rows_mut().into_iter().zip(layer.bias.iter()) {
                row.mapv_inplace(|v| (v + b).max(0.0));
            }
            let n = x.shape()[1];
            x = out
                .into_shape_with_order((dims.c_out, n, dims.side_out, dims.side_out))
                .expect("conv output reshape");
            if let Some(c) = cache.as_mut() {
                c.cols.push(cols);
                c.acts.push(x.clone());
            }
        }

        let maps = (0..batch)
            .map(|b| x.slice(s![.., b * t_len..(b + 1) * t_len, .., ..]).to_owned())
            .collect();
        (maps, cache)
    }

    /// Backpropagate per-sample feature-map gradients to parameter space.
    pub fn backward_batch(&self, cache: &BatchCache, d_maps: &[FeatureMap]) -> ExtractorGrads {
        assert_eq!(d_maps.len(), cache.batch, "one gradient per clip");
        let t_len = self.arch.segments;
        let (c4, _, h4, w4) = self.arch.feature_shape();
        let n = cache.batch * t_len;

        let mut d_act = Array4::<f64>::zeros((c4, n, h4, w4));
        for (b, dm) in d_maps.iter().enumerate() {
            d_act.slice_mut(s![.., b * t_len..(b + 1) * t_len, .., ..]).assign(dm);
        }

        let mut grads = ExtractorGrads {
            weights: self.layers.iter().map(|l| Array2::zeros(l.weight.raw_dim())).collect(),
            biases: self.layers.iter().map(|l| Array1::zeros(l.bias.raw_dim())).collect(),
        };

        for l in (0..4).rev() {
            let dims = self.arch.layer_dims()[l];
            // Relu mask from the cached post-activation output.
            let act = &cache.acts[l];
            ndarray::Zip::from(&mut d_act).and(act).for_each(|d, &a| {
                if a <= 0.0 {
                    *d = 0.0;
                }
            });

            for (o, gb) in grads.biases[l].iter_mut().enumerate() {
                *gb = d_act.index_axis(Axis(0), o).sum();
            }
            let d_mat = d_act
                .into_shape_with_order((dims.c_out, n * dims.side_out * dims.side_out))
                .expect("grad reshape");
            grads.weights[l] = d_mat.dot(&cache.cols[l].t());

            if l == 0 {
                break;
            }
            let d_cols = self.layers[l].weight.t().dot(&d_mat);
            let d_input = col2im(
                &d_cols,
                dims.c_in,
                n,
                dims.side_in,
                dims.side_in,
                dims.stride,
            );
            // The shift is a fixed permutation (with drops); its transpose
            // is the shift in the opposite direction.
            d_act = temporal_shift(&d_input, t_len, true);
        }
        grads
    }

    /// Flat parameter views for the optimizer: (weights..., biases...).
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weight.as_slice_mut().expect("contiguous"),
                    l.bias.as_slice_mut().expect("contiguous"),
                ]
            })
            .collect()
    }

    pub fn params(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice().unwrap(), l.bias.as_slice().unwrap()])
            .collect()
    }

    pub fn grads_as_slices(grads: &ExtractorGrads) -> Vec<&[f64]> {
        grads
            .weights
            .iter()
            .zip(grads.biases.iter())
            .flat_map(|(w, b)| [w.as_slice().unwrap(), b.as_slice().unwrap()])
            .collect()
    }
}

/// Mean over time and space per channel: the classifier's input.
pub fn pooled_feature(map: &FeatureMap) -> Array1<f64> {
    let c = map.shape()[0];
    let denom = (map.len() / c) as f64;
    Array1::from_iter((0..c).map(|ch| map.index_axis(Axis(0), ch).sum() / denom))
}

/// Gradient of some scalar wrt the feature map, given its gradient wrt the
/// pooled feature.
pub fn pooled_feature_backward(d_pooled: &Array1<f64>, map_shape: (usize, usize, usize, usize)) -> FeatureMap {
    let (c, t, h, w) = map_shape;
    let denom = (t * h * w) as f64;
    let mut out = Array4::zeros((c, t, h, w));
    for ch in 0..c {
        out.index_axis_mut(Axis(0), ch).fill(d_pooled[ch] / denom);
    }
    out
}

// ---- Classifier ----

/// Linear head over the pooled feature. Grows by whole class blocks as
/// sessions arrive; old rows are carried over verbatim.
#[derive(Debug, Clone)]
pub struct Classifier {
    /// `[num_classes, feature_dim]`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Classifier {
    pub fn init(feature_dim: usize, num_classes: usize, seed: u64) -> Classifier {
        let mut rng = seeds::rng(seed, "classifier-init", 0);
        Classifier {
            weight: gaussian_rows(num_classes, feature_dim, &mut rng),
            bias: Array1::zeros(num_classes),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.weight.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.weight.ncols()
    }

    /// Raw logits for a pooled feature.
    pub fn classify(&self, pooled: &Array1<f64>) -> Array1<f64> {
        self.weight.dot(pooled) + &self.bias
    }

    /// A wider head: previous rows copied, `extra` fresh rows appended.
    pub fn expand(&self, extra: usize, seed: u64) -> Classifier {
        let mut rng = seeds::rng(seed, "classifier-expand", self.num_classes() as u64);
        let fresh = gaussian_rows(extra, self.feature_dim(), &mut rng);
        let mut weight = Array2::zeros((self.num_classes() + extra, self.feature_dim()));
        weight.slice_mut(s![..self.num_classes(), ..]).assign(&self.weight);
        weight.slice_mut(s![self.num_classes().., ..]).assign(&fresh);
        let mut bias = Array1::zeros(self.num_classes() + extra);
        bias.slice_mut(s![..self.num_classes()]).assign(&self.bias);
        Classifier { weight, bias }
    }
}

fn gaussian_rows(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    let normal = Normal::new(0.0, 0.01).unwrap();
    Array2::from_shape_fn((rows, cols), |_| normal.sample(rng))
}

/// Extractor plus classifier: the unit that checkpoints and sessions move
/// around.
#[derive(Debug, Clone)]
pub struct Model {
    pub extractor: Extractor,
    pub classifier: Classifier,
}

impl Model {
    /// Logits for one clip (evaluation path).
    pub fn predict(&self, clip: &Clip) -> Array1<f64> {
        let map = self.extractor.forward(clip);
        self.classifier.classify(&pooled_feature(&map))
    }
}

// ---- Plumbing: layout, shift, im2col ----

/// Stack clips into the internal activation layout `[c_in, B*T, h, w]`.
fn clips_to_input(clips: &[&Clip], arch: &Arch) -> Array4<f64> {
    let t_len = arch.segments;
    let (c_in, h, w) = (arch.in_channels, arch.frame_size, arch.frame_size);
    let mut x = Array4::<f64>::zeros((c_in, clips.len() * t_len, h, w));
    for (b, clip) in clips.iter().enumerate() {
        let fs = clip.frames.shape();
        assert_eq!(
            (fs[0], fs[1], fs[2], fs[3]),
            (t_len, c_in, h, w),
            "clip shape must match architecture"
        );
        for t in 0..t_len {
            for c in 0..c_in {
                let src = clip.frames.slice(s![t, c, .., ..]);
                let mut dst = x.slice_mut(s![c, b * t_len + t, .., ..]);
                ndarray::Zip::from(&mut dst).and(&src).for_each(|d, &v| *d = v as f64);
            }
        }
    }
    x
}

/// Temporal channel shift over `[C, B*T, h, w]`. Quarter one reads from the
/// next frame, quarter two from the previous, the rest is copied; frames
/// shifted in from beyond a clip's ends are zero. `invert` swaps the two
/// directions, which is exactly the transpose of the linear map.
fn temporal_shift(x: &Array4<f64>, t_len: usize, invert: bool) -> Array4<f64> {
    let (c, n, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    assert_eq!(n % t_len, 0);
    let batch = n / t_len;
    let q = c / 4;
    let mut out = Array4::<f64>::zeros((c, n, h, w));

    // Channels [2q, c) pass through untouched.
    out.slice_mut(s![2 * q.., .., .., ..]).assign(&x.slice(s![2 * q.., .., .., ..]));

    let (from_next, from_prev) = if invert { (q..2 * q, 0..q) } else { (0..q, q..2 * q) };
    for b in 0..batch {
        let lo = b * t_len;
        if t_len > 1 {
            // out[t] = x[t + 1] for t in [0, T-1); out[T-1] stays zero.
            out.slice_mut(s![from_next.clone(), lo..lo + t_len - 1, .., ..])
                .assign(&x.slice(s![from_next.clone(), lo + 1..lo + t_len, .., ..]));
            // out[t] = x[t - 1] for t in (0, T]; out[0] stays zero.
            out.slice_mut(s![from_prev.clone(), lo + 1..lo + t_len, .., ..])
                .assign(&x.slice(s![from_prev.clone(), lo..lo + t_len - 1, .., ..]));
        }
    }
    out
}

/// Unroll 3x3 patches (pad 1) of `[c, n, h, w]` into a
/// `[c * 9, n * ho * wo]` matrix so convolution becomes one GEMM.
fn im2col(x: &Array4<f64>, stride: usize) -> Array2<f64> {
    let (c, n, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let ho = (h - 1) / stride + 1;
    let wo = (w - 1) / stride + 1;

    let mut padded = Array4::<f64>::zeros((c, n, h + 2, w + 2));
    padded.slice_mut(s![.., .., 1..h + 1, 1..w + 1]).assign(x);
    let pad = padded.as_slice().unwrap();
    let (ph, pw) = (h + 2, w + 2);

    let mut cols = Array2::<f64>::zeros((c * 9, n * ho * wo));
    {
        let cs = cols.as_slice_mut().unwrap();
        let row_len = n * ho * wo;
        for ci in 0..c {
            for ky in 0..3 {
                for kx in 0..3 {
                    let r = (ci * 9 + ky * 3 + kx) * row_len;
                    for ni in 0..n {
                        let src_base = ((ci * n + ni) * ph + ky) * pw + kx;
                        let dst_base = r + ni * ho * wo;
                        for y in 0..ho {
                            let src = src_base + y * stride * pw;
                            let dst = dst_base + y * wo;
                            if stride == 1 {
                                cs[dst..dst + wo].copy_from_slice(&pad[src..src + wo]);
                            } else {
                                for xq in 0..wo {
                                    cs[dst + xq] = pad[src + xq * stride];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Transpose of [`im2col`]: scatter-add column gradients back to input
/// positions.
fn col2im(d_cols: &Array2<f64>, c: usize, n: usize, h: usize, w: usize, stride: usize) -> Array4<f64> {
    let ho = (h - 1) / stride + 1;
    let wo = (w - 1) / stride + 1;
    let (ph, pw) = (h + 2, w + 2);

    let mut padded = Array4::<f64>::zeros((c, n, ph, pw));
    {
        let pg = padded.as_slice_mut().unwrap();
        let dc = d_cols.as_slice().unwrap();
        let row_len = n * ho * wo;
        for ci in 0..c {
            for ky in 0..3 {
                for kx in 0..3 {
                    let r = (ci * 9 + ky * 3 + kx) * row_len;
                    for ni in 0..n {
                        let dst_base = ((ci * n + ni) * ph + ky) * pw + kx;
                        let src_base = r + ni * ho * wo;
                        for y in 0..ho {
                            let dst = dst_base + y * stride * pw;
                            let src = src_base + y * wo;
                            for xq in 0..wo {
                                pg[dst + xq * stride] += dc[src + xq];
                            }
                        }
                    }
                }
            }
        }
    }
    padded.slice(s![.., .., 1..h + 1, 1..w + 1]).to_owned()
}

// ---- Checkpoints ----

const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    schema_version: u32,
    arch: Arch,
    num_classes: usize,
    /// Total f64 values in params.bin, as a corruption check.
    param_count: usize,
}

/// Write `header.json` + `params.bin` (f64 little-endian, conv layers in
/// order then classifier, weights before biases).
pub fn save_checkpoint(model: &Model, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let clf_count = model.classifier.weight.len() + model.classifier.bias.len();
    let header = CheckpointHeader {
        schema_version: CHECKPOINT_SCHEMA_VERSION,
        arch: model.extractor.arch,
        num_classes: model.classifier.num_classes(),
        param_count: model.extractor.param_count() + clf_count,
    };
    let file = std::fs::File::create(dir.join("header.json"))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), &header)?;

    let mut bytes = Vec::with_capacity(header.param_count * 8);
    for slice in model.extractor.params() {
        for v in slice {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    for v in model.classifier.weight.iter().chain(model.classifier.bias.iter()) {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::File::create(dir.join("params.bin"))?.write_all(&bytes)?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(dir.join("header.json"))?;
    let header: CheckpointHeader = serde_json::from_str(&text)?;
    if header.schema_version != CHECKPOINT_SCHEMA_VERSION {
        return Err(Error::Artifact(format!(
            "checkpoint schema {} unsupported (expected {CHECKPOINT_SCHEMA_VERSION})",
            header.schema_version
        )));
    }
    let mut bytes = Vec::new();
    std::fs::File::open(dir.join("params.bin"))?.read_to_end(&mut bytes)?;
    if bytes.len() != header.param_count * 8 {
        return Err(Error::Artifact(format!(
            "params.bin holds {} bytes, header promises {}",
            bytes.len(),
            header.param_count * 8
        )));
    }
    let mut values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));

    let mut extractor = Extractor::init(header.arch, 0);
    for slice in extractor.params_mut() {
        for v in slice {
            *v = values.next().unwrap();
        }
    }
    let feat = header.arch.channels[3];
    let mut classifier = Classifier {
        weight: Array2::zeros((header.num_classes, feat)),
        bias: Array1::zeros(header.num_classes),
    };
    for v in classifier.weight.iter_mut().chain(classifier.bias.iter_mut()) {
        *v = values.next().unwrap();
    }
    Ok(Model { extractor, classifier })
}
