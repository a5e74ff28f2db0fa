//! U-Net encoder/decoder assembled from the layer primitives.
//!
//! Encoder levels run conv-relu-batchnorm twice, then 2x2 max pooling and
//! dropout; feature maps double per level. The decoder mirrors this with 2x2
//! up-convolutions, skip concatenation and the same conv blocks; a final 1x1
//! convolution maps to the output channels.

use crate::error::{Error, Result};
use crate::unet::layers::{self, BnCache, Elem};
use ndarray::{Array1, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UNetConfig {
    pub depth: usize,
    pub base_filters: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub input_size: (usize, usize),
    pub dropout_rate: f64,
}

impl Default for UNetConfig {
    fn default() -> Self {
        Self {
            depth: 4,
            base_filters: 16,
            in_channels: 2,
            out_channels: 1,
            input_size: (64, 64),
            dropout_rate: 0.1,
        }
    }
}

impl UNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.base_filters == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::Config("depth, filters and channel counts must be positive".into()));
        }
        let div = 1usize << self.depth;
        let (h, w) = self.input_size;
        if h % div != 0 || w % div != 0 || h / div == 0 || w / div == 0 {
            return Err(Error::Config(format!(
                "input size {h}x{w} must be divisible by 2^depth = {div} with a non-empty bottleneck"
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("dropout rate {} outside [0, 1)", self.dropout_rate)));
        }
        Ok(())
    }

    /// Feature-map count at encoder level `l` (doubles per level).
    pub fn channels_at(&self, l: usize) -> usize {
        self.base_filters << l
    }
}

pub struct Conv2d<T: Elem> {
    pub w: Array4<T>, // (cout, cin, k, k)
    pub b: Array1<T>,
}

pub struct BatchNorm2d<T: Elem> {
    pub gamma: Array1<T>,
    pub beta: Array1<T>,
    pub running_mean: Array1<T>,
    pub running_var: Array1<T>,
}

pub struct UpConv<T: Elem> {
    pub w: Array4<T>, // (cin, cout, 2, 2)
    pub b: Array1<T>,
}

pub struct ConvBlock<T: Elem> {
    pub conv1: Conv2d<T>,
    pub bn1: BatchNorm2d<T>,
    pub conv2: Conv2d<T>,
    pub bn2: BatchNorm2d<T>,
}

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

pub struct ConvBlockCache<T: Elem> {
    x: Array4<T>,
    z1: Array4<T>,
    bn1: BnCache<T>,
    h1: Array4<T>,
    z2: Array4<T>,
    bn2: BnCache<T>,
}

impl<T: Elem> ConvBlock<T> {
    fn init(cin: usize, cout: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            conv1: Conv2d::kaiming(cout, cin, 3, rng),
            bn1: BatchNorm2d::identity(cout),
            conv2: Conv2d::kaiming(cout, cout, 3, rng),
            bn2: BatchNorm2d::identity(cout),
        }
    }

    fn forward_train(&mut self, x: Array4<T>) -> (Array4<T>, ConvBlockCache<T>) {
        let eps = T::from(BN_EPS).unwrap();
        let mom = T::from(BN_MOMENTUM).unwrap();
        let z1 = layers::conv2d_forward(&x, &self.conv1.w, &self.conv1.b);
        let a1 = layers::relu_forward(&z1);
        let (h1, bn1) = layers::batchnorm_forward_train(
            &a1, &self.bn1.gamma, &self.bn1.beta,
            &mut self.bn1.running_mean, &mut self.bn1.running_var, mom, eps,
        );
        let z2 = layers::conv2d_forward(&h1, &self.conv2.w, &self.conv2.b);
        let a2 = layers::relu_forward(&z2);
        let (out, bn2) = layers::batchnorm_forward_train(
            &a2, &self.bn2.gamma, &self.bn2.beta,
            &mut self.bn2.running_mean, &mut self.bn2.running_var, mom, eps,
        );
        (out, ConvBlockCache { x, z1, bn1, h1, z2, bn2 })
    }

    fn forward_eval(&self, x: &Array4<T>) -> Array4<T> {
        let eps = T::from(BN_EPS).unwrap();
        let z1 = layers::conv2d_forward(x, &self.conv1.w, &self.conv1.b);
        let a1 = layers::relu_forward(&z1);
        let h1 = layers::batchnorm_forward_eval(
            &a1, &self.bn1.gamma, &self.bn1.beta, &self.bn1.running_mean, &self.bn1.running_var, eps,
        );
        let z2 = layers::conv2d_forward(&h1, &self.conv2.w, &self.conv2.b);
        let a2 = layers::relu_forward(&z2);
        layers::batchnorm_forward_eval(
            &a2, &self.bn2.gamma, &self.bn2.beta, &self.bn2.running_mean, &self.bn2.running_var, eps,
        )
    }

    fn backward(&self, cache: &ConvBlockCache<T>, dout: &Array4<T>, grads: &mut BlockGrads<T>) -> Array4<T> {
        let (da2, dg2, db2) = layers::batchnorm_backward(dout, &cache.bn2, &self.bn2.gamma);
        grads.bn2_gamma += &dg2;
        grads.bn2_beta += &db2;
        let dz2 = layers::relu_backward(&cache.z2, &da2);
        let (dh1, dw2, dbias2) = layers::conv2d_backward(&cache.h1, &self.conv2.w, &dz2);
        grads.conv2_w += &dw2;
        grads.conv2_b += &dbias2;
        let (da1, dg1, db1) = layers::batchnorm_backward(&dh1, &cache.bn1, &self.bn1.gamma);
        grads.bn1_gamma += &dg1;
        grads.bn1_beta += &db1;
        let dz1 = layers::relu_backward(&cache.z1, &da1);
        let (dx, dw1, dbias1) = layers::conv2d_backward(&cache.x, &self.conv1.w, &dz1);
        grads.conv1_w += &dw1;
        grads.conv1_b += &dbias1;
        dx
    }
}

impl<T: Elem> Conv2d<T> {
    fn kaiming(cout: usize, cin: usize, k: usize, rng: &mut ChaCha8Rng) -> Self {
        let fan_in = (cin * k * k) as f64;
        let bound = (6.0 / fan_in).sqrt();
        let w = Array4::from_shape_fn((cout, cin, k, k), |_| {
            T::from((rng.random::<f64>() * 2.0 - 1.0) * bound).unwrap()
        });
        Self { w, b: Array1::zeros(cout) }
    }
}

impl<T: Elem> BatchNorm2d<T> {
    fn identity(c: usize) -> Self {
        Self {
            gamma: Array1::ones(c),
            beta: Array1::zeros(c),
            running_mean: Array1::zeros(c),
            running_var: Array1::ones(c),
        }
    }
}

impl<T: Elem> UpConv<T> {
    fn kaiming(cin: usize, cout: usize, rng: &mut ChaCha8Rng) -> Self {
        let fan_in = (cin * 4) as f64;
        let bound = (6.0 / fan_in).sqrt();
        let w = Array4::from_shape_fn((cin, cout, 2, 2), |_| {
            T::from((rng.random::<f64>() * 2.0 - 1.0) * bound).unwrap()
        });
        Self { w, b: Array1::zeros(cout) }
    }
}

/// The assembled network. `enc[i]`/`dec[i]`/`ups[i]` live at level `i`
/// (0 = full resolution).
pub struct UNet<T: Elem> {
    pub config: UNetConfig,
    pub enc: Vec<ConvBlock<T>>,
    pub bottleneck: ConvBlock<T>,
    pub ups: Vec<UpConv<T>>,
    pub dec: Vec<ConvBlock<T>>,
    pub final_conv: Conv2d<T>,
}

/// Per-step caches recorded by the training forward pass.
pub struct Tape<T: Elem> {
    enc: Vec<(ConvBlockCache<T>, Array4<u8>, Array4<T>)>, // block cache, pool argmax, dropout mask
    bottleneck: ConvBlockCache<T>,
    dec: Vec<(Array4<T>, ConvBlockCache<T>)>, // upconv input, block cache (index = level)
    final_input: Array4<T>,
}

pub struct BlockGrads<T: Elem> {
    pub conv1_w: Array4<T>,
    pub conv1_b: Array1<T>,
    pub bn1_gamma: Array1<T>,
    pub bn1_beta: Array1<T>,
    pub conv2_w: Array4<T>,
    pub conv2_b: Array1<T>,
    pub bn2_gamma: Array1<T>,
    pub bn2_beta: Array1<T>,
}

impl<T: Elem> BlockGrads<T> {
    fn zeros_like(b: &ConvBlock<T>) -> Self {
        Self {
            conv1_w: Array4::zeros(b.conv1.w.dim()),
            conv1_b: Array1::zeros(b.conv1.b.len()),
            bn1_gamma: Array1::zeros(b.bn1.gamma.len()),
            bn1_beta: Array1::zeros(b.bn1.beta.len()),
            conv2_w: Array4::zeros(b.conv2.w.dim()),
            conv2_b: Array1::zeros(b.conv2.b.len()),
            bn2_gamma: Array1::zeros(b.bn2.gamma.len()),
            bn2_beta: Array1::zeros(b.bn2.beta.len()),
        }
    }
}

pub struct UNetGrads<T: Elem> {
    pub enc: Vec<BlockGrads<T>>,
    pub bottleneck: BlockGrads<T>,
    pub ups: Vec<(Array4<T>, Array1<T>)>,
    pub dec: Vec<BlockGrads<T>>,
    pub final_w: Array4<T>,
    pub final_b: Array1<T>,
}

impl<T: Elem> UNet<T> {
    /// Seeded Kaiming-uniform initialization (fan-in), zero biases.
    pub fn init(config: UNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut enc = Vec::with_capacity(config.depth);
        let mut cin = config.in_channels;
        for l in 0..config.depth {
            enc.push(ConvBlock::init(cin, config.channels_at(l), &mut rng));
            cin = config.channels_at(l);
        }
        let bottleneck = ConvBlock::init(cin, config.channels_at(config.depth), &mut rng);
        let mut ups = Vec::with_capacity(config.depth);
        let mut dec = Vec::with_capacity(config.depth);
        for l in (0..config.depth).rev() {
            ups.push(UpConv::kaiming(config.channels_at(l + 1), config.channels_at(l), &mut rng));
            dec.push(ConvBlock::init(2 * config.channels_at(l), config.channels_at(l), &mut rng));
        }
        ups.reverse();
        dec.reverse();
        let final_conv = Conv2d::kaiming(config.out_channels, config.base_filters, 1, &mut rng);
        Ok(Self { config, enc, bottleneck, ups, dec, final_conv })
    }

    pub fn zero_grads(&self) -> UNetGrads<T> {
        UNetGrads {
            enc: self.enc.iter().map(BlockGrads::zeros_like).collect(),
            bottleneck: BlockGrads::zeros_like(&self.bottleneck),
            ups: self
                .ups
                .iter()
                .map(|u| (Array4::zeros(u.w.dim()), Array1::zeros(u.b.len())))
                .collect(),
            dec: self.dec.iter().map(BlockGrads::zeros_like).collect(),
            final_w: Array4::zeros(self.final_conv.w.dim()),
            final_b: Array1::zeros(self.final_conv.b.len()),
        }
    }

    /// Training-mode forward: batch statistics, dropout after each pooling,
    /// full tape for [`Self::backward`].
    pub fn forward_train(&mut self, x: Array4<T>, rng: &mut ChaCha8Rng) -> (Array4<T>, Tape<T>) {
        self.forward_train_with_dropout(x, rng, self.config.dropout_rate)
    }

    /// As [`Self::forward_train`] with an explicit dropout rate. Rate 0 is
    /// used to re-estimate batchnorm running statistics after training, so
    /// they describe the dropout-free activations seen at inference.
    pub fn forward_train_with_dropout(
        &mut self,
        x: Array4<T>,
        rng: &mut ChaCha8Rng,
        rate: f64,
    ) -> (Array4<T>, Tape<T>) {
        let depth = self.config.depth;
        let mut enc_caches = Vec::with_capacity(depth);
        let mut skips = Vec::with_capacity(depth);
        let mut h = x;
        for l in 0..depth {
            let (out, cache) = self.enc[l].forward_train(h);
            skips.push(out.clone());
            let (pooled, argmax) = layers::maxpool2_forward(&out);
            let (dropped, mask) = layers::dropout_forward(&pooled, rate, rng);
            enc_caches.push((cache, argmax, mask));
            h = dropped;
        }
        let (bott, bott_cache) = self.bottleneck.forward_train(h);
        h = bott;
        let mut dec_caches: Vec<Option<(Array4<T>, ConvBlockCache<T>)>> =
            (0..depth).map(|_| None).collect();
        for l in (0..depth).rev() {
            let up_in = h.clone();
            let up = layers::upconv2_forward(&h, &self.ups[l].w, &self.ups[l].b);
            let cat = layers::concat_channels(&up, &skips[l]);
            let (out, cache) = self.dec[l].forward_train(cat);
            dec_caches[l] = Some((up_in, cache));
            h = out;
        }
        let final_input = h.clone();
        let y = layers::conv2d_forward(&h, &self.final_conv.w, &self.final_conv.b);
        let tape = Tape {
            enc: enc_caches,
            bottleneck: bott_cache,
            dec: dec_caches.into_iter().map(Option::unwrap).collect(),
            final_input,
        };
        (y, tape)
    }

    /// Inference-mode forward: running statistics, no dropout; deterministic.
    pub fn forward_eval(&self, x: &Array4<T>) -> Array4<T> {
        self.forward_eval_ablating(x, None)
    }

    /// Inference forward with one skip connection zeroed (diagnostic hook for
    /// checking that skips actually carry information).
    pub fn forward_eval_ablating(&self, x: &Array4<T>, ablate_skip: Option<usize>) -> Array4<T> {
        let depth = self.config.depth;
        let mut skips = Vec::with_capacity(depth);
        let mut h = x.clone();
        for l in 0..depth {
            let out = self.enc[l].forward_eval(&h);
            let skip = if ablate_skip == Some(l) { Array4::zeros(out.dim()) } else { out.clone() };
            skips.push(skip);
            let (pooled, _) = layers::maxpool2_forward(&out);
            h = pooled;
        }
        h = self.bottleneck.forward_eval(&h);
        for l in (0..depth).rev() {
            let up = layers::upconv2_forward(&h, &self.ups[l].w, &self.ups[l].b);
            let cat = layers::concat_channels(&up, &skips[l]);
            h = self.dec[l].forward_eval(&cat);
        }
        layers::conv2d_forward(&h, &self.final_conv.w, &self.final_conv.b)
    }

    /// Backpropagate `dy` through the tape; returns parameter gradients and
    /// the input gradient.
    pub fn backward(&self, tape: &Tape<T>, dy: &Array4<T>) -> (UNetGrads<T>, Array4<T>) {
        let depth = self.config.depth;
        let mut grads = self.zero_grads();

        let (dh, dw_final, db_final) =
            layers::conv2d_backward(&tape.final_input, &self.final_conv.w, dy);
        grads.final_w += &dw_final;
        grads.final_b += &db_final;

        let mut d = dh;
        let mut dskips: Vec<Option<Array4<T>>> = (0..depth).map(|_| None).collect();
        for l in 0..depth {
            let (up_in, cache) = &tape.dec[l];
            let dcat = self.dec[l].backward(cache, &d, &mut grads.dec[l]);
            let up_channels = self.config.channels_at(l);
            let (dup, dskip) = layers::split_channels(&dcat, up_channels);
            dskips[l] = Some(dskip);
            let (dx_up, dw_up, db_up) = layers::upconv2_backward(up_in, &self.ups[l].w, &dup);
            grads.ups[l].0 += &dw_up;
            grads.ups[l].1 += &db_up;
            d = dx_up;
        }

        d = self.bottleneck.backward(&tape.bottleneck, &d, &mut grads.bottleneck);

        for l in (0..depth).rev() {
            let (cache, argmax, mask) = &tape.enc[l];
            let dpool = layers::dropout_backward(&d, mask);
            let mut dblock = layers::maxpool2_backward(&dpool, argmax);
            dblock += dskips[l].as_ref().unwrap();
            d = self.enc[l].backward(cache, &dblock, &mut grads.enc[l]);
        }

        (grads, d)
    }

    /// Trainable parameter slices in a fixed traversal order.
    pub fn trainable_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for b in self.enc.iter_mut() {
            push_block(&mut out, b);
        }
        push_block(&mut out, &mut self.bottleneck);
        for u in self.ups.iter_mut() {
            out.push(u.w.as_slice_mut().unwrap());
            out.push(u.b.as_slice_mut().unwrap());
        }
        for b in self.dec.iter_mut() {
            push_block(&mut out, b);
        }
        out.push(self.final_conv.w.as_slice_mut().unwrap());
        out.push(self.final_conv.b.as_slice_mut().unwrap());
        out
    }

    /// Gradient slices in the same order as [`Self::trainable_mut`].
    pub fn grad_slices<'a>(&self, grads: &'a mut UNetGrads<T>) -> Vec<&'a mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for g in grads.enc.iter_mut() {
            push_block_grads(&mut out, g);
        }
        push_block_grads(&mut out, &mut grads.bottleneck);
        for (w, b) in grads.ups.iter_mut() {
            out.push(w.as_slice_mut().unwrap());
            out.push(b.as_slice_mut().unwrap());
        }
        for g in grads.dec.iter_mut() {
            push_block_grads(&mut out, g);
        }
        out.push(grads.final_w.as_slice_mut().unwrap());
        out.push(grads.final_b.as_slice_mut().unwrap());
        out
    }
}

fn push_block<'a, T: Elem>(out: &mut Vec<&'a mut [T]>, b: &'a mut ConvBlock<T>) {
    out.push(b.conv1.w.as_slice_mut().unwrap());
    out.push(b.conv1.b.as_slice_mut().unwrap());
    out.push(b.bn1.gamma.as_slice_mut().unwrap());
    out.push(b.bn1.beta.as_slice_mut().unwrap());
    out.push(b.conv2.w.as_slice_mut().unwrap());
    out.push(b.conv2.b.as_slice_mut().unwrap());
    out.push(b.bn2.gamma.as_slice_mut().unwrap());
    out.push(b.bn2.beta.as_slice_mut().unwrap());
}

fn push_block_grads<'a, T: Elem>(out: &mut Vec<&'a mut [T]>, g: &'a mut BlockGrads<T>) {
    out.push(g.conv1_w.as_slice_mut().unwrap());
    out.push(g.conv1_b.as_slice_mut().unwrap());
    out.push(g.bn1_gamma.as_slice_mut().unwrap());
    out.push(g.bn1_beta.as_slice_mut().unwrap());
    out.push(g.conv2_w.as_slice_mut().unwrap());
    out.push(g.conv2_b.as_slice_mut().unwrap());
    out.push(g.bn2_gamma.as_slice_mut().unwrap());
    out.push(g.bn2_beta.as_slice_mut().unwrap());
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn tiny_config() -> UNetConfig {
        UNetConfig {
            depth: 1,
            base_filters: 2,
            in_channels: 2,
            out_channels: 1,
            input_size: (8, 8),
            dropout_rate: 0.0,
        }
    }

    #[test]
    fn forward_shapes() {
        let net: UNet<f32> = UNet::init(UNetConfig::default(), 7).unwrap();
        let x = Array4::<f32>::zeros((2, 2, 64, 64));
        let y = net.forward_eval(&x);
        assert_eq!(y.dim(), (2, 1, 64, 64));
    }

    #[test]
    fn input_size_must_divide() {
        let cfg = UNetConfig { input_size: (60, 64), ..UNetConfig::default() };
        assert!(UNet::<f32>::init(cfg, 0).is_err());
    }

    #[test]
    fn whole_net_gradients_match_finite_differences() {
        // depth-1 net on an 8x8 input, all in f64, against central
        // differences of the MSE loss.
        let mut net: UNet<f64> = UNet::init(tiny_config(), 42).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        use rand::Rng;
        let x = Array4::from_shape_fn((2, 2, 8, 8), |_| rng.random::<f64>());
        let target = Array4::from_shape_fn((2, 1, 8, 8), |_| rng.random::<f64>());

        let loss_of = |net: &mut UNet<f64>| {
            let mut drng = ChaCha8Rng::seed_from_u64(0);
            let (y, _) = net.forward_train(x.clone(), &mut drng);
            let diff = &y - &target;
            diff.mapv(|v| v * v).sum() / y.len() as f64
        };

        // Analytic gradients.
        let mut drng = ChaCha8Rng::seed_from_u64(0);
        let (y, tape) = net.forward_train(x.clone(), &mut drng);
        let numel = y.len() as f64;
        let dy = (&y - &target).mapv(|v| 2.0 * v / numel);
        let (mut grads, _) = net.backward(&tape, &dy);

        let analytic: Vec<Vec<f64>> = net
            .grad_slices(&mut grads)
            .iter()
            .map(|s| s.to_vec())
            .collect();

        // Central finite differences on every parameter. The step must stay
        // well below the distance to the nearest ReLU/maxpool switching
        // point; larger steps (e.g. 1e-3) measure the kink, not the
        // derivative, on a composed network.
        let step = 1e-6;
        let mut worst: f64 = 0.0;
        let n_params = analytic.len();
        for pi in 0..n_params {
            let n = analytic[pi].len();
            for i in 0..n {
                let orig = net.trainable_mut()[pi][i];
                net.trainable_mut()[pi][i] = orig + step;
                let lp = loss_of(&mut net);
                net.trainable_mut()[pi][i] = orig - step;
                let lm = loss_of(&mut net);
                net.trainable_mut()[pi][i] = orig;
                let fd = (lp - lm) / (2.0 * step);
                let a = analytic[pi][i];
                let denom = a.abs().max(fd.abs()).max(1e-4);
                worst = worst.max((a - fd).abs() / denom);
            }
        }
        assert!(worst < 1e-4, "worst relative gradient error {worst}");
    }

    #[test]
    fn inference_is_deterministic() {
        let net: UNet<f32> = UNet::init(UNetConfig { dropout_rate: 0.1, ..tiny_config() }, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        use rand::Rng;
        let x = Array4::from_shape_fn((1, 2, 8, 8), |_| rng.random::<f32>());
        let y1 = net.forward_eval(&x);
        let y2 = net.forward_eval(&x);
        assert_eq!(y1, y2);
    }

    #[test]
    fn zero_weights_output_final_bias() {
        let mut net: UNet<f32> = UNet::init(tiny_config(), 0).unwrap();
        for p in net.trainable_mut() {
            for v in p.iter_mut() {
                *v = 0.0;
            }
        }
        let bias = 0.37f32;
        net.final_conv.b[0] = bias;
        let x = Array4::<f32>::from_elem((1, 2, 8, 8), 0.5);
        let y = net.forward_eval(&x);
        for &v in y.iter() {
            assert_eq!(v, bias);
        }
    }
}
