use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::layers::{Act, BatchNorm2d, BnCache, Conv2d, Linear, Relu};
use super::{NamedArray, Scalar, Tensor};
use crate::error::{Error, Result};

/// Whether batch-norm uses batch statistics (train) or running ones (eval).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    Train,
    #[default]
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetConfig {
    pub board: usize,
    pub in_channels: usize,
    pub base_channels: usize,
    pub actions: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            board: crate::envs_markov::DEFAULT_BOARD,
            in_channels: crate::envs_markov::CHANNELS,
            base_channels: 16,
            actions: 4,
        }
    }
}

impl NetConfig {
    /// `ceil(log2(board)) + 1`.
    pub fn num_blocks(&self) -> usize {
        let halvings = if self.board <= 1 {
            0
        } else {
            (usize::BITS - (self.board - 1).leading_zeros()) as usize
        };
        halvings + 1
    }

    /// Spatial size of the input and after every block.
    pub fn spatial_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.board];
        for b in 0..self.num_blocks() {
            let s = *sizes.last().unwrap();
            sizes.push(if b == 0 { s } else { s.div_ceil(2) });
        }
        sizes
    }

    pub fn input_len(&self) -> usize {
        self.in_channels * self.board * self.board
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Block<T> {
    conv: Conv2d<T>,
    bn: BatchNorm2d<T>,
}

#[derive(Debug, Clone)]
struct BlockCache<T> {
    input: Act<T>,
    bn: BnCache<T>,
    out: Act<T>,
}

#[derive(Debug, Clone)]
struct Cache<T> {
    blocks: Vec<BlockCache<T>>,
    features: Vec<T>,
    n: usize,
}

/// Convolutional policy: conv3x3 -> batch-norm -> ReLU blocks (first stride
/// 1, the rest stride 2 with doubled channels), flatten, linear to logits.
#[derive(Debug, Clone)]
pub struct ConvPolicyNet<T> {
    cfg: NetConfig,
    blocks: Vec<Block<T>>,
    head: Linear<T>,
    mode: Mode,
    cache: Option<Cache<T>>,
}

impl<T: Scalar> ConvPolicyNet<T> {
    pub fn new<R: Rng + ?Sized>(cfg: NetConfig, rng: &mut R) -> Result<Self> {
        if cfg.board == 0 || cfg.in_channels == 0 || cfg.base_channels == 0 || cfg.actions == 0 {
            return Err(Error::InvalidConfig("network dimensions must be positive".into()));
        }
        let mut blocks = Vec::new();
        let mut ch = cfg.in_channels;
        for b in 0..cfg.num_blocks() {
            let (out, stride) = if b == 0 {
                (cfg.base_channels, 1)
            } else {
                (ch * 2, 2)
            };
            blocks.push(Block {
                conv: Conv2d::new(ch, out, stride, rng),
                bn: BatchNorm2d::new(out),
            });
            ch = out;
        }
        let last = *cfg.spatial_sizes().last().unwrap();
        let head = Linear::new(ch * last * last, cfg.actions, rng);
        Ok(Self {
            cfg,
            blocks,
            head,
            mode: Mode::Eval,
            cache: None,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.cfg
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Output channel count of every block.
    pub fn block_channels(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.conv.out_ch).collect()
    }

    fn check_input(&self, input: &[T], n: usize) -> Result<()> {
        let k = self.cfg.board;
        if n == 0 || input.len() != n * self.cfg.input_len() {
            return Err(Error::ShapeMismatch {
                expected: vec![n, self.cfg.in_channels, k, k],
                found: vec![input.len()],
            });
        }
        Ok(())
    }

    /// `[N, C*H*W]` rows from a `[C, N, H, W]` activation.
    fn flatten(a: &Act<T>) -> Vec<T> {
        let hw = a.h * a.w;
        let f = a.c * hw;
        let mut out = vec![T::zero(); a.n * f];
        for ch in 0..a.c {
            for s in 0..a.n {
                out[s * f + ch * hw..s * f + (ch + 1) * hw].copy_from_slice(&a.data[(ch * a.n + s) * hw..][..hw]);
            }
        }
        out
    }

    fn unflatten(d: &[T], like: &Act<T>) -> Act<T> {
        let hw = like.h * like.w;
        let f = like.c * hw;
        let mut out = Act::zeros(like.c, like.n, like.h, like.w);
        for ch in 0..like.c {
            for s in 0..like.n {
                out.data[(ch * like.n + s) * hw..][..hw].copy_from_slice(&d[s * f + ch * hw..s * f + (ch + 1) * hw]);
            }
        }
        out
    }

    /// Eval-mode logits `[N, actions]` for an `[N, C, k, k]` batch; leaves the
    /// network untouched.
    pub fn predict(&self, input: &[T], n: usize) -> Result<Vec<T>> {
        self.check_input(input, n)?;
        let k = self.cfg.board;
        let mut x = Act::from_nchw(input, n, self.cfg.in_channels, k, k)?;
        for block in &self.blocks {
            x = Relu::forward(&block.bn.forward_eval(&block.conv.forward(&x)?)?);
        }
        self.head.forward(&Self::flatten(&x), n)
    }

    /// Sets every batch-norm running statistic to the batch statistics of
    /// `input` under the current parameters.
    pub fn refresh_running_stats(&mut self, input: &[T], n: usize) -> Result<()> {
        self.check_input(input, n)?;
        let k = self.cfg.board;
        let mut x = Act::from_nchw(input, n, self.cfg.in_channels, k, k)?;
        for block in &mut self.blocks {
            let y = block.conv.forward(&x)?;
            let momentum = core::mem::replace(&mut block.bn.momentum, 1.0);
            let out = block.bn.forward(&y, true);
            block.bn.momentum = momentum;
            x = Relu::forward(&out?.0);
        }
        Ok(())
    }

    /// Logits in the current mode, recording what backward needs. Train mode
    /// also updates the batch-norm running statistics.
    pub fn forward(&mut self, input: &[T], n: usize) -> Result<Vec<T>> {
        self.check_input(input, n)?;
        let k = self.cfg.board;
        let train = self.mode == Mode::Train;
        let mut x = Act::from_nchw(input, n, self.cfg.in_channels, k, k)?;
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &mut self.blocks {
            let y = block.conv.forward(&x)?;
            let (z, bn) = block.bn.forward(&y, train)?;
            let out = Relu::forward(&z);
            caches.push(BlockCache { input: x, bn, out: out.clone() });
            x = out;
        }
        let features = Self::flatten(&x);
        let logits = self.head.forward(&features, n)?;
        self.cache = Some(Cache {
            blocks: caches,
            features,
            n,
        });
        Ok(logits)
    }

    /// Accumulates parameter gradients for `dlogits` (`[N, actions]`) through
    /// the last forward pass. Returns the input gradient in `[N, C, k, k]`
    /// layout when asked.
    pub fn backward(&mut self, dlogits: &[T], input_grad: bool) -> Result<Option<Vec<T>>> {
        let cache = self.cache.take().ok_or(Error::Precondition("backward without a recorded forward pass"))?;
        let n = cache.n;
        if dlogits.len() != n * self.cfg.actions {
            return Err(Error::DimensionMismatch {
                expected: n * self.cfg.actions,
                found: dlogits.len(),
            });
        }
        let dfeat = self.head.backward(&cache.features, dlogits, n);
        let last = &cache.blocks.last().expect("at least one block").out;
        let mut d = Self::unflatten(&dfeat, last);
        let mut dinput = None;
        for (i, (block, bc)) in self.blocks.iter_mut().zip(&cache.blocks).enumerate().rev() {
            let dz = Relu::backward(&bc.out, &d);
            let dy = block.bn.backward(&bc.bn, &dz);
            let need = i > 0 || input_grad;
            if let Some(dx) = block.conv.backward(&bc.input, &dy, need) {
                if i == 0 {
                    dinput = Some(dx.to_nchw());
                } else {
                    d = dx;
                }
            }
        }
        for (name, t) in self.params() {
            if t.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of {name}")));
            }
        }
        Ok(dinput)
    }

    pub fn zero_grad(&mut self) {
        for (_, t) in self.params_mut() {
            t.zero_grad();
        }
    }

    /// Trainable parameters in a fixed order.
    pub fn params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("blocks.{i}.conv.weight"), &b.conv.weight));
            out.push((format!("blocks.{i}.bn.weight"), &b.bn.gamma));
            out.push((format!("blocks.{i}.bn.bias"), &b.bn.beta));
        }
        out.push(("head.weight".into(), &self.head.weight));
        out.push(("head.bias".into(), &self.head.bias));
        out
    }

    pub fn params_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter_mut().enumerate() {
            out.push((format!("blocks.{i}.conv.weight"), &mut b.conv.weight));
            out.push((format!("blocks.{i}.bn.weight"), &mut b.bn.gamma));
            out.push((format!("blocks.{i}.bn.bias"), &mut b.bn.beta));
        }
        out.push(("head.weight".into(), &mut self.head.weight));
        out.push(("head.bias".into(), &mut self.head.bias));
        out
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|(_, t)| t.numel()).sum()
    }

    /// Parameters followed by batch-norm running statistics.
    pub fn state(&self) -> Vec<NamedArray> {
        let as_f64 = |v: &[T]| v.iter().map(|x| x.as_f64()).collect::<Vec<_>>();
        let mut out: Vec<NamedArray> = self
            .params()
            .into_iter()
            .map(|(name, t)| NamedArray {
                name,
                shape: t.shape().to_vec(),
                values: as_f64(&t.data),
            })
            .collect();
        for (i, b) in self.blocks.iter().enumerate() {
            let c = b.bn.channels();
            out.push(NamedArray {
                name: format!("blocks.{i}.bn.running_mean"),
                shape: vec![c],
                values: as_f64(&b.bn.running_mean),
            });
            out.push(NamedArray {
                name: format!("blocks.{i}.bn.running_var"),
                shape: vec![c],
                values: as_f64(&b.bn.running_var),
            });
        }
        out
    }

    /// Loads arrays produced by [`state`](Self::state) for the same
    /// architecture.
    pub fn load_state(&mut self, arrays: &[NamedArray]) -> Result<()> {
        let expected = self.state();
        if arrays.len() != expected.len() {
            return Err(Error::DimensionMismatch {
                expected: expected.len(),
                found: arrays.len(),
            });
        }
        for (want, got) in expected.iter().zip(arrays) {
            if want.name != got.name {
                return Err(Error::InvalidConfig(format!("expected array {}, found {}", want.name, got.name)));
            }
            if want.shape != got.shape || got.values.len() != want.values.len() {
                return Err(Error::ShapeMismatch {
                    expected: want.shape.clone(),
                    found: got.shape.clone(),
                });
            }
        }
        let mut it = arrays.iter();
        for (_, t) in self.params_mut() {
            let a = it.next().unwrap();
            for (d, &v) in t.data.iter_mut().zip(&a.values) {
                *d = T::of(v);
            }
        }
        for b in &mut self.blocks {
            for target in [&mut b.bn.running_mean, &mut b.bn.running_var] {
                let a = it.next().unwrap();
                for (d, &v) in target.iter_mut().zip(&a.values) {
                    *d = T::of(v);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    type R = crate::Rng;

    fn small(base: usize) -> NetConfig {
        NetConfig {
            base_channels: base,
            ..NetConfig::default()
        }
    }

    fn random_input<T: Scalar>(n: usize, cfg: &NetConfig, rng: &mut R) -> Vec<T> {
        (0..n * cfg.input_len()).map(|_| T::of(rng.random_range(-1.0..1.0))).collect()
    }

    #[test]
    fn architecture_for_five_by_five() {
        let cfg = NetConfig::default();
        assert_eq!(cfg.num_blocks(), 4);
        assert_eq!(cfg.spatial_sizes(), vec![5, 5, 3, 2, 1]);
        let net = ConvPolicyNet::<f64>::new(cfg, &mut R::seed_from_u64(0)).unwrap();
        assert_eq!(net.block_channels(), vec![16, 32, 64, 128]);
        let logits = net.predict(&vec![0.5; 3 * cfg.input_len()], 3).unwrap();
        assert_eq!(logits.len(), 12);
        for (k, blocks) in [(1, 1), (2, 2), (3, 3), (4, 3), (8, 4), (9, 5)] {
            let c = NetConfig { board: k, ..cfg };
            assert_eq!(c.num_blocks(), blocks, "k = {k}");
            assert_eq!(*c.spatial_sizes().last().unwrap(), 1);
        }
    }

    #[test]
    fn zero_input_gives_uniform_policy() {
        let cfg = small(4);
        let net = ConvPolicyNet::<f64>::new(cfg, &mut R::seed_from_u64(1)).unwrap();
        let logits = net.predict(&vec![0.0; cfg.input_len()], 1).unwrap();
        let p = super::super::softmax(&logits);
        assert!(p.iter().all(|&q| (q - 0.25).abs() < 1e-12), "{p:?}");
    }

    #[test]
    fn eval_mode_is_per_sample() {
        let cfg = small(4);
        let mut rng = R::seed_from_u64(2);
        let mut net = ConvPolicyNet::<f64>::new(cfg, &mut rng).unwrap();
        net.set_mode(Mode::Train);
        net.forward(&random_input::<f64>(16, &cfg, &mut rng), 16).unwrap();
        net.set_mode(Mode::Eval);
        let one: Vec<f64> = random_input(1, &cfg, &mut rng);
        let other: Vec<f64> = random_input(1, &cfg, &mut rng);
        let batch: Vec<f64> = one.iter().chain(&other).chain(&one).copied().collect();
        let out = net.predict(&batch, 3).unwrap();
        assert_eq!(out[0..4], out[8..12]);
        assert_eq!(net.predict(&one, 1).unwrap(), out[0..4]);
        assert_eq!(net.forward(&batch, 3).unwrap(), out);
    }

    #[test]
    fn shape_errors_are_loud() {
        let cfg = small(2);
        let mut net = ConvPolicyNet::<f64>::new(cfg, &mut R::seed_from_u64(3)).unwrap();
        assert!(net.predict(&[0.0; 10], 1).is_err());
        assert!(net.backward(&[0.0; 4], false).is_err());
        net.forward(&vec![0.0; cfg.input_len()], 1).unwrap();
        assert!(net.backward(&[0.0; 8], false).is_err());
    }

    /// Finite-difference check of every parameter and input of the composed
    /// network on `sum(coef * logits)`.
    fn composed_check<T: Scalar>(mode: Mode, tol: f64, h: f64, seed: u64) {
        let cfg = small(2);
        let mut rng = R::seed_from_u64(seed);
        let mut net = ConvPolicyNet::<T>::new(cfg, &mut rng).unwrap();
        for (_, t) in net.params_mut() {
            for v in &mut t.data {
                *v = *v + T::of(rng.random_range(-0.2..0.2));
            }
        }
        let n = 6;
        let x: Vec<T> = random_input(n, &cfg, &mut rng);
        let coef: Vec<T> = (0..n * 4).map(|_| T::of(rng.random_range(-1.0..1.0))).collect();
        net.set_mode(mode);
        let objective = |net: &ConvPolicyNet<T>, x: &[T]| {
            let mut probe = net.clone();
            let y = probe.forward(x, n).unwrap();
            y.iter().zip(&coef).map(|(a, b)| a.as_f64() * b.as_f64()).sum::<f64>()
        };
        let mut work = net.clone();
        work.forward(&x, n).unwrap();
        work.zero_grad();
        let dx = work.backward(&coef, true).unwrap().unwrap();
        let close = |fd: f64, an: f64| (fd - an).abs() <= tol * (fd.abs() + an.abs()).max(1e-3);
        let names: Vec<String> = net.params().into_iter().map(|(n, _)| n).collect();
        for (pi, name) in names.iter().enumerate() {
            let count = net.params()[pi].1.numel();
            for i in 0..count {
                let mut p = net.clone();
                let w = p.params_mut().swap_remove(pi).1;
                let w0 = w.data[i];
                w.data[i] = w0 + T::of(h);
                let fp = objective(&p, &x);
                let w = p.params_mut().swap_remove(pi).1;
                w.data[i] = w0 - T::of(h);
                let fm = objective(&p, &x);
                let fd = (fp - fm) / (2.0 * h);
                let an = work.params()[pi].1.grad[i].as_f64();
                assert!(close(fd, an), "{name}[{i}] ({mode:?}): fd {fd} vs analytic {an}");
            }
        }
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] = xp[i] + T::of(h);
            let mut xm = x.clone();
            xm[i] = xm[i] - T::of(h);
            let fd = (objective(&net, &xp) - objective(&net, &xm)) / (2.0 * h);
            assert!(close(fd, dx[i].as_f64()), "input[{i}]: {fd} vs {}", dx[i].as_f64());
        }
    }

    #[test]
    fn composed_gradients_match_finite_differences() {
        composed_check::<f64>(Mode::Train, 1e-6, 1e-5, 10);
        composed_check::<f64>(Mode::Eval, 1e-6, 1e-5, 11);
    }

    #[test]
    fn single_precision_matches_double() {
        let cfg = small(4);
        let mut rng = R::seed_from_u64(12);
        let mut wide = ConvPolicyNet::<f64>::new(cfg, &mut rng).unwrap();
        let mut narrow = ConvPolicyNet::<f32>::new(cfg, &mut rng).unwrap();
        narrow.load_state(&wide.state()).unwrap();
        let n = 8;
        let x: Vec<f64> = random_input(n, &cfg, &mut rng);
        let x32: Vec<f32> = x.iter().map(|&v| v as f32).collect();
        let coef: Vec<f64> = (0..n * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let coef32: Vec<f32> = coef.iter().map(|&v| v as f32).collect();
        wide.set_mode(Mode::Train);
        narrow.set_mode(Mode::Train);
        let y = wide.forward(&x, n).unwrap();
        let y32 = narrow.forward(&x32, n).unwrap();
        for (a, b) in y.iter().zip(&y32) {
            assert!((a - *b as f64).abs() <= 1e-4 * a.abs().max(1.0));
        }
        wide.backward(&coef, false).unwrap();
        narrow.backward(&coef32, false).unwrap();
        for ((name, a), (_, b)) in wide.params().into_iter().zip(narrow.params()) {
            let scale = a.grad.iter().fold(0.0f64, |m, g| m.max(g.abs())).max(1e-3);
            for (ga, gb) in a.grad.iter().zip(&b.grad) {
                assert!((ga - *gb as f64).abs() <= 1e-4 * scale, "{name}: {ga} vs {gb}");
            }
        }
    }

    #[test]
    fn constant_loss_has_zero_gradients() {
        let cfg = small(2);
        let mut rng = R::seed_from_u64(4);
        let mut net = ConvPolicyNet::<f64>::new(cfg, &mut rng).unwrap();
        net.set_mode(Mode::Train);
        net.forward(&random_input::<f64>(5, &cfg, &mut rng), 5).unwrap();
        net.zero_grad();
        net.backward(&[0.0; 20], false).unwrap();
        assert!(net.params().iter().all(|(_, t)| t.grad.iter().all(|&g| g == 0.0)));
    }

    #[test]
    fn state_round_trips() {
        let cfg = small(3);
        let mut rng = R::seed_from_u64(5);
        let mut a = ConvPolicyNet::<f64>::new(cfg, &mut rng).unwrap();
        a.set_mode(Mode::Train);
        a.forward(&random_input::<f64>(4, &cfg, &mut rng), 4).unwrap();
        let mut b = ConvPolicyNet::<f64>::new(cfg, &mut rng).unwrap();
        assert_ne!(a.state(), b.state());
        b.load_state(&a.state()).unwrap();
        assert_eq!(a.state(), b.state());
        let mut wrong = a.state();
        wrong.swap(0, 1);
        assert!(b.load_state(&wrong).is_err());
        assert!(b.load_state(&a.state()[1..]).is_err());
    }
}
