//! The residual classifier: parameter layout, forward pass with cached
//! activations, and reverse-mode gradients.
//!
//! Layers are grouped into *units* for freezing: unit 0 is the stem, units
//! `1..=depth` are the residual blocks in order, and unit `depth + 1` is the
//! dense head.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use super::layers::{
    bn_backward, bn_forward, conv_backward, conv_forward, dense_backward, dense_forward,
    global_avg_pool, global_avg_pool_backward, relu_backward_inplace, relu_inplace, BnCache,
    BnMode, ConvGeom, BN_MOMENTUM,
};
use super::loss::softmax_rows;
use super::spec::ModelSpec;
use super::tensor::Tensor;
use super::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub unit: usize,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnStats {
    pub name: String,
    pub unit: usize,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
enum Init {
    He(usize),
    Zeros,
    Ones,
}

#[derive(Debug, Clone, Copy)]
struct ConvRef {
    param: usize,
    geom: ConvGeom,
}

#[derive(Debug, Clone, Copy)]
struct BnRef {
    gamma: usize,
    beta: usize,
    stats: usize,
}

#[derive(Debug, Clone)]
struct BlockRef {
    unit: usize,
    conv1: ConvRef,
    bn1: BnRef,
    conv2: ConvRef,
    bn2: BnRef,
    proj: Option<(ConvRef, BnRef)>,
}

#[derive(Debug, Clone)]
struct Topology {
    stem_conv: ConvRef,
    stem_bn: BnRef,
    blocks: Vec<BlockRef>,
    fc_w: usize,
    fc_b: usize,
    features: usize,
}

struct Layout {
    params: Vec<(String, usize, Vec<usize>, Init)>,
    bn: Vec<(String, usize, usize)>,
}

impl Layout {
    fn conv(&mut self, name: &str, unit: usize, geom: ConvGeom) -> ConvRef {
        let idx = self.params.len();
        self.params.push((
            format!("{name}.weight"),
            unit,
            vec![geom.out_c, geom.in_c, geom.k, geom.k],
            Init::He(geom.patch_len()),
        ));
        ConvRef { param: idx, geom }
    }

    fn bn(&mut self, name: &str, unit: usize, channels: usize) -> BnRef {
        let gamma = self.params.len();
        self.params.push((format!("{name}.gamma"), unit, vec![channels], Init::Ones));
        self.params.push((format!("{name}.beta"), unit, vec![channels], Init::Zeros));
        let stats = self.bn.len();
        self.bn.push((name.to_string(), unit, channels));
        BnRef {
            gamma,
            beta: gamma + 1,
            stats,
        }
    }
}

fn build(spec: &ModelSpec) -> (Topology, Layout) {
    let mut layout = Layout {
        params: Vec::new(),
        bn: Vec::new(),
    };
    let c0 = spec.stem_channels;
    let stem_conv = layout.conv(
        "stem.conv",
        0,
        ConvGeom {
            in_c: 3,
            out_c: c0,
            k: 3,
            stride: spec.stem_stride,
            pad: 1,
        },
    );
    let stem_bn = layout.bn("stem.bn", 0, c0);
    let mut blocks = Vec::new();
    let mut in_c = c0;
    let mut unit = 1;
    for (s, &count) in spec.blocks_per_stage.iter().enumerate() {
        let out_c = c0 << s;
        for b in 0..count {
            let stride = if s > 0 && b == 0 { 2 } else { 1 };
            let name = format!("stage{}.block{}", s + 1, b);
            let conv1 = layout.conv(
                &format!("{name}.conv1"),
                unit,
                ConvGeom { in_c, out_c, k: 3, stride, pad: 1 },
            );
            let bn1 = layout.bn(&format!("{name}.bn1"), unit, out_c);
            let conv2 = layout.conv(
                &format!("{name}.conv2"),
                unit,
                ConvGeom { in_c: out_c, out_c, k: 3, stride: 1, pad: 1 },
            );
            let bn2 = layout.bn(&format!("{name}.bn2"), unit, out_c);
            let proj = (stride != 1 || in_c != out_c).then(|| {
                let conv = layout.conv(
                    &format!("{name}.proj"),
                    unit,
                    ConvGeom { in_c, out_c, k: 1, stride, pad: 0 },
                );
                let bn = layout.bn(&format!("{name}.proj_bn"), unit, out_c);
                (conv, bn)
            });
            blocks.push(BlockRef {
                unit,
                conv1,
                bn1,
                conv2,
                bn2,
                proj,
            });
            in_c = out_c;
            unit += 1;
        }
    }
    let fc_w = layout.params.len();
    layout.params.push((
        "head.fc.weight".into(),
        unit,
        vec![ModelSpec::NUM_CLASSES, in_c],
        Init::He(in_c),
    ));
    layout
        .params
        .push(("head.fc.bias".into(), unit, vec![ModelSpec::NUM_CLASSES], Init::Zeros));
    let topo = Topology {
        stem_conv,
        stem_bn,
        blocks,
        fc_w,
        fc_b: fc_w + 1,
        features: in_c,
    };
    (topo, layout)
}

/// Parameters, optimizer moments, batch-norm running statistics and the
/// freeze mask of one classifier.
#[derive(Debug, Clone)]
pub struct ModelState {
    spec: ModelSpec,
    pub(crate) params: Vec<Param>,
    pub(crate) adam_m: Vec<Vec<f64>>,
    pub(crate) adam_v: Vec<Vec<f64>>,
    pub(crate) step: u64,
    pub(crate) bn: Vec<BnStats>,
    pub(crate) frozen: Vec<bool>,
    pub(crate) seed: u64,
    generation: u64,
    topo: Topology,
}

impl PartialEq for ModelState {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
            && self.params == other.params
            && self.adam_m == other.adam_m
            && self.adam_v == other.adam_v
            && self.step == other.step
            && self.bn == other.bn
            && self.frozen == other.frozen
            && self.seed == other.seed
    }
}

impl ModelState {
    /// He-normal conv/dense weights, zero biases, unit BN scale.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let (topo, layout) = build(&spec);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params: Vec<Param> = layout
            .params
            .into_iter()
            .map(|(name, unit, shape, init)| {
                let len = shape.iter().product();
                let value = match init {
                    Init::Zeros => vec![0.0; len],
                    Init::Ones => vec![1.0; len],
                    Init::He(fan_in) => {
                        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt())
                            .expect("finite standard deviation");
                        (0..len).map(|_| normal.sample(&mut rng)).collect()
                    }
                };
                Param {
                    name,
                    unit,
                    shape,
                    value,
                }
            })
            .collect();
        let bn = layout
            .bn
            .into_iter()
            .map(|(name, unit, c)| BnStats {
                name,
                unit,
                mean: vec![0.0; c],
                var: vec![1.0; c],
            })
            .collect();
        let zeros: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
        let units = spec.depth() + 2;
        Ok(Self {
            spec,
            adam_v: zeros.clone(),
            adam_m: zeros,
            params,
            step: 0,
            bn,
            frozen: vec![false; units],
            seed,
            generation: 0,
            topo,
        })
    }

    /// Rebuilds a state from stored parts, checking every tensor against the
    /// layout implied by `spec`.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        spec: ModelSpec,
        seed: u64,
        step: u64,
        frozen: Vec<bool>,
        params: Vec<(String, Vec<usize>, Vec<f64>, Vec<f64>, Vec<f64>)>,
        bn: Vec<(String, Vec<f64>, Vec<f64>)>,
    ) -> Result<Self> {
        let mut state = Self::new(spec, seed)?;
        if frozen.len() != state.frozen.len() {
            return Err(Error::Shape {
                expected: format!("{} freeze flags", state.frozen.len()),
                actual: frozen.len().to_string(),
            });
        }
        if params.len() != state.params.len() || bn.len() != state.bn.len() {
            return Err(Error::Shape {
                expected: format!("{} parameters, {} bn layers", state.params.len(), state.bn.len()),
                actual: format!("{} parameters, {} bn layers", params.len(), bn.len()),
            });
        }
        for (name, shape, value, m, v) in params {
            let idx = state
                .param_index(&name)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter `{name}`")))?;
            let p = &mut state.params[idx];
            if p.shape != shape || value.len() != p.value.len() || m.len() != p.value.len() || v.len() != p.value.len() {
                return Err(Error::Shape {
                    expected: format!("{name} {:?}", p.shape),
                    actual: format!("{shape:?}"),
                });
            }
            p.value = value;
            state.adam_m[idx] = m;
            state.adam_v[idx] = v;
        }
        for (name, mean, var) in bn {
            let stats = state
                .bn
                .iter_mut()
                .find(|s| s.name == name)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown batch-norm layer `{name}`")))?;
            if mean.len() != stats.mean.len() || var.len() != stats.var.len() {
                return Err(Error::Shape {
                    expected: format!("{name} [{}]", stats.mean.len()),
                    actual: format!("[{}]", mean.len()),
                });
            }
            stats.mean = mean;
            stats.var = var;
        }
        state.step = step;
        state.frozen = frozen;
        Ok(state)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn bn_stats(&self) -> &[BnStats] {
        &self.bn
    }

    pub fn adam_moments(&self, idx: usize) -> (&[f64], &[f64]) {
        (&self.adam_m[idx], &self.adam_v[idx])
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn frozen_mask(&self) -> &[bool] {
        &self.frozen
    }

    pub fn depth(&self) -> usize {
        self.spec.depth()
    }

    pub fn head_unit(&self) -> usize {
        self.spec.depth() + 1
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn is_param_frozen(&self, idx: usize) -> bool {
        self.frozen[self.params[idx].unit]
    }

    /// Mutable access to one parameter tensor; invalidates cached forward
    /// passes.
    pub fn param_values_mut(&mut self, idx: usize) -> &mut [f64] {
        self.generation += 1;
        &mut self.params[idx].value
    }

    pub(crate) fn bump_generation(&mut self) {
        self.generation += 1;
    }

    /// Freezes everything except the last `trainable_tail - 1` residual
    /// blocks and the dense head. The stem shares the freeze flag of the
    /// first block.
    pub fn freeze(&mut self, trainable_tail: usize) -> Result<()> {
        let depth = self.depth();
        if trainable_tail == 0 || trainable_tail > depth + 1 {
            return Err(Error::InvalidArgument(format!(
                "trainable tail must lie in 1..={}, got {trainable_tail}",
                depth + 1
            )));
        }
        let first_trainable_block = depth + 2 - trainable_tail;
        for unit in 1..=depth {
            self.frozen[unit] = unit < first_trainable_block;
        }
        self.frozen[0] = self.frozen.get(1).copied().unwrap_or(false);
        self.frozen[depth + 1] = false;
        Ok(())
    }

    pub fn unfreeze_all(&mut self) {
        self.frozen.iter_mut().for_each(|f| *f = false);
    }

    /// Zeroes Adam moments and the step counter, as for a new optimizer.
    pub fn reset_optimizer(&mut self) {
        for (m, v) in self.adam_m.iter_mut().zip(&mut self.adam_v) {
            m.fill(0.0);
            v.fill(0.0);
        }
        self.step = 0;
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }

    /// SHA-256 over names and little-endian bytes of every frozen
    /// parameter, its Adam moments and frozen batch-norm statistics.
    pub fn frozen_checksum(&self) -> String {
        let mut h = Sha256::new();
        for (i, p) in self.params.iter().enumerate() {
            if self.frozen[p.unit] {
                h.update(p.name.as_bytes());
                for vals in [&p.value, &self.adam_m[i], &self.adam_v[i]] {
                    for v in vals.iter() {
                        h.update(v.to_le_bytes());
                    }
                }
            }
        }
        for s in &self.bn {
            if self.frozen[s.unit] {
                h.update(s.name.as_bytes());
                for v in s.mean.iter().chain(&s.var) {
                    h.update(v.to_le_bytes());
                }
            }
        }
        format!("{:x}", h.finalize())
    }

    fn bn_mode(&self, unit: usize, mode: Mode) -> BnMode {
        match mode {
            Mode::Train if !self.frozen[unit] => BnMode::Batch,
            _ => BnMode::Running,
        }
    }

    fn run_bn(&self, x: &Tensor, r: BnRef, unit: usize, mode: Mode) -> (Tensor, BnCache) {
        let stats = &self.bn[r.stats];
        bn_forward(
            x,
            &self.params[r.gamma].value,
            &self.params[r.beta].value,
            &stats.mean,
            &stats.var,
            self.bn_mode(unit, mode),
        )
    }

    /// Forward pass over a batch of `3 x side x side` inputs.
    pub fn forward(&self, input: &Tensor, mode: Mode) -> Result<ForwardPass> {
        let side = self.spec.input_side;
        if input.c != 3 || input.h != side || input.w != side || input.n == 0 {
            return Err(Error::Shape {
                expected: format!("Nx3x{side}x{side} with N >= 1"),
                actual: input.shape_string(),
            });
        }
        let topo = &self.topo;
        let conv = |x: &Tensor, r: ConvRef| conv_forward(x, &self.params[r.param].value, &r.geom);

        let pre = conv(input, topo.stem_conv);
        let (mut stem_out, stem_bn) = self.run_bn(&pre, topo.stem_bn, 0, mode);
        relu_inplace(&mut stem_out);

        let mut blocks: Vec<BlockCache> = Vec::with_capacity(topo.blocks.len());
        for b in &topo.blocks {
            let x = blocks.last().map_or(&stem_out, |c| &c.out);
            let cache = self.block_forward(b, x, mode);
            blocks.push(cache);
        }
        let last = blocks.last().map_or(&stem_out, |c| &c.out);
        let pooled = global_avg_pool(last);
        let logits = dense_forward(
            &pooled,
            input.n,
            topo.features,
            &self.params[topo.fc_w].value,
            &self.params[topo.fc_b].value,
        );
        Ok(ForwardPass {
            logits,
            cache: ForwardCache {
                generation: self.generation,
                mode,
                input: input.clone(),
                stem_bn,
                stem_out,
                blocks,
                pooled,
            },
        })
    }

    fn block_forward(&self, b: &BlockRef, x: &Tensor, mode: Mode) -> BlockCache {
        let conv = |x: &Tensor, r: ConvRef| conv_forward(x, &self.params[r.param].value, &r.geom);
        let (mut mid, bn1) = self.run_bn(&conv(x, b.conv1), b.bn1, b.unit, mode);
        relu_inplace(&mut mid);
        let (mut out, bn2) = self.run_bn(&conv(&mid, b.conv2), b.bn2, b.unit, mode);
        let proj_bn = match b.proj {
            Some((pc, pb)) => {
                let (skip, cache) = self.run_bn(&conv(x, pc), pb, b.unit, mode);
                out.data.iter_mut().zip(&skip.data).for_each(|(o, s)| *o += s);
                Some(cache)
            }
            None => {
                out.data.iter_mut().zip(&x.data).for_each(|(o, s)| *o += s);
                None
            }
        };
        relu_inplace(&mut out);
        BlockCache {
            bn1,
            mid,
            bn2,
            proj_bn,
            out,
        }
    }

    /// Eval-mode logits computed from a (possibly perturbed) activation at
    /// `layer` onwards.
    pub fn logits_from_activation(&self, layer: CamLayer, activation: &Tensor) -> Result<Vec<f64>> {
        self.check_layer(layer)?;
        let first = match layer {
            CamLayer::Stem => 0,
            CamLayer::Block(b) => b + 1,
        };
        let mut x = activation.clone();
        for b in &self.topo.blocks[first..] {
            x = self.block_forward(b, &x, Mode::Eval).out;
        }
        if x.c != self.topo.features {
            return Err(Error::Shape {
                expected: format!("{} channels at the head", self.topo.features),
                actual: x.shape_string(),
            });
        }
        let pooled = global_avg_pool(&x);
        Ok(dense_forward(
            &pooled,
            x.n,
            self.topo.features,
            &self.params[self.topo.fc_w].value,
            &self.params[self.topo.fc_b].value,
        ))
    }

    /// Folds batch statistics from a train-mode pass into the running
    /// estimates of every batch-norm layer that normalised with them.
    pub fn commit_running_stats(&mut self, cache: &ForwardCache) {
        let topo = self.topo.clone();
        let mut update = |r: BnRef, c: &BnCache| {
            if c.mode == BnMode::Batch {
                let s = &mut self.bn[r.stats];
                for ch in 0..s.mean.len() {
                    s.mean[ch] = (1.0 - BN_MOMENTUM) * s.mean[ch] + BN_MOMENTUM * c.batch_mean[ch];
                    s.var[ch] = (1.0 - BN_MOMENTUM) * s.var[ch] + BN_MOMENTUM * c.batch_var[ch];
                }
            }
        };
        update(topo.stem_bn, &cache.stem_bn);
        for (b, c) in topo.blocks.iter().zip(&cache.blocks) {
            update(b.bn1, &c.bn1);
            update(b.bn2, &c.bn2);
            if let (Some((_, pb)), Some(pc)) = (b.proj, &c.proj_bn) {
                update(pb, pc);
            }
        }
    }

    /// Train-mode forward that also updates running statistics.
    pub fn forward_train(&mut self, input: &Tensor) -> Result<ForwardPass> {
        let pass = self.forward(input, Mode::Train)?;
        self.commit_running_stats(&pass.cache);
        Ok(pass)
    }

    /// Gradients of the batch-mean cross-entropy with respect to every
    /// trainable parameter. Frozen parameters receive zeros.
    pub fn backward(&self, cache: &ForwardCache, labels: &[Label]) -> Result<Gradients> {
        if cache.mode != Mode::Train {
            return Err(Error::InvalidArgument(
                "backward needs a cache from a train-mode forward pass".into(),
            ));
        }
        self.check_cache(cache)?;
        let n = cache.input.n;
        if labels.len() != n {
            return Err(Error::Shape {
                expected: format!("{n} labels"),
                actual: labels.len().to_string(),
            });
        }
        let logits = self.logits_of(cache);
        let mut dlogits = softmax_rows(&logits, ModelSpec::NUM_CLASSES);
        for (i, label) in labels.iter().enumerate() {
            dlogits[i * 2 + label.index()] -= 1.0;
        }
        dlogits.iter_mut().for_each(|g| *g /= n as f64);
        let (grads, _) = self.backprop(cache, &dlogits, true, None);
        Ok(grads.expect("parameter gradients requested"))
    }

    fn check_cache(&self, cache: &ForwardCache) -> Result<()> {
        if cache.generation != self.generation {
            return Err(Error::StaleCache {
                cached: cache.generation,
                current: self.generation,
            });
        }
        Ok(())
    }

    fn logits_of(&self, cache: &ForwardCache) -> Vec<f64> {
        dense_forward(
            &cache.pooled,
            cache.input.n,
            self.topo.features,
            &self.params[self.topo.fc_w].value,
            &self.params[self.topo.fc_b].value,
        )
    }

    /// Gradient of `sum_i dlogits[i] . logits[i]` with respect to the
    /// activation at `layer`, from a pass of any mode.
    pub fn activation_gradient(&self, cache: &ForwardCache, dlogits: &[f64], layer: CamLayer) -> Result<Tensor> {
        self.check_cache(cache)?;
        self.check_layer(layer)?;
        let (_, captured) = self.backprop(cache, dlogits, false, Some(layer));
        Ok(captured.expect("capture layer is reachable"))
    }

    pub fn check_layer(&self, layer: CamLayer) -> Result<()> {
        match layer {
            CamLayer::Block(b) if b >= self.depth() => Err(Error::InvalidArgument(format!(
                "layer block {b} does not exist (depth {})",
                self.depth()
            ))),
            _ => Ok(()),
        }
    }

    fn backprop(
        &self,
        cache: &ForwardCache,
        dlogits: &[f64],
        want_params: bool,
        capture: Option<CamLayer>,
    ) -> (Option<Gradients>, Option<Tensor>) {
        let topo = &self.topo;
        let n = cache.input.n;
        let head = self.head_unit();
        let mut lowest = head;
        if want_params {
            if let Some(u) = self.frozen.iter().position(|f| !f) {
                lowest = lowest.min(u);
            }
        }
        let capture_unit = capture.map(|l| match l {
            CamLayer::Stem => 0,
            CamLayer::Block(b) => b + 1,
        });
        if let Some(u) = capture_unit {
            lowest = lowest.min(u);
        }
        let trainable = |unit: usize| want_params && !self.frozen[unit];
        let mut grads = want_params.then(|| Gradients {
            values: self.params.iter().map(|p| vec![0.0; p.value.len()]).collect(),
        });
        let mut captured = None;

        // head
        let (dpooled, dw, db) = dense_backward(
            &cache.pooled,
            n,
            topo.features,
            &self.params[topo.fc_w].value,
            dlogits,
        );
        if let Some(g) = grads.as_mut() {
            g.values[topo.fc_w] = dw;
            g.values[topo.fc_b] = db;
        }
        let last = cache.blocks.last().map_or(&cache.stem_out, |c| &c.out);
        let mut dout = global_avg_pool_backward(&dpooled, n, last.c, last.h, last.w);

        for (bi, (b, c)) in topo.blocks.iter().zip(&cache.blocks).enumerate().rev() {
            if capture_unit == Some(b.unit) {
                captured = Some(dout.clone());
            }
            let need_dx = b.unit > lowest;
            let train_here = trainable(b.unit);
            if b.unit < lowest || (!need_dx && !train_here) {
                return (grads, captured);
            }
            let x = if bi == 0 {
                &cache.stem_out
            } else {
                &cache.blocks[bi - 1].out
            };

            relu_backward_inplace(&c.out, &mut dout);
            let (dpre2, dg2, dbeta2) = bn_backward(&c.bn2, &self.params[b.bn2.gamma].value, &dout);
            let (dmid, dw2) = conv_backward(
                &c.mid,
                &self.params[b.conv2.param].value,
                &b.conv2.geom,
                &dpre2,
                true,
                train_here,
            );
            let mut dmid = dmid.expect("dx requested");
            relu_backward_inplace(&c.mid, &mut dmid);
            let (dpre1, dg1, dbeta1) = bn_backward(&c.bn1, &self.params[b.bn1.gamma].value, &dmid);
            let (dx1, dw1) = conv_backward(
                x,
                &self.params[b.conv1.param].value,
                &b.conv1.geom,
                &dpre1,
                need_dx,
                train_here,
            );
            let mut proj_grads = None;
            let dskip = match (b.proj, &c.proj_bn) {
                (Some((pc, pb)), Some(pcache)) => {
                    let (dpre_p, dgp, dbp) = bn_backward(pcache, &self.params[pb.gamma].value, &dout);
                    let (dxp, dwp) = conv_backward(
                        x,
                        &self.params[pc.param].value,
                        &pc.geom,
                        &dpre_p,
                        need_dx,
                        train_here,
                    );
                    proj_grads = Some((pc, pb, dwp, dgp, dbp));
                    dxp
                }
                _ => need_dx.then(|| dout.clone()),
            };
            if train_here {
                let g = grads.as_mut().expect("gradients allocated");
                g.values[b.conv2.param] = dw2.expect("dw requested");
                g.values[b.bn2.gamma] = dg2;
                g.values[b.bn2.beta] = dbeta2;
                g.values[b.conv1.param] = dw1.expect("dw requested");
                g.values[b.bn1.gamma] = dg1;
                g.values[b.bn1.beta] = dbeta1;
                if let Some((pc, pb, dwp, dgp, dbp)) = proj_grads {
                    g.values[pc.param] = dwp.expect("dw requested");
                    g.values[pb.gamma] = dgp;
                    g.values[pb.beta] = dbp;
                }
            }
            if !need_dx {
                return (grads, captured);
            }
            let mut dx = dx1.expect("dx requested");
            let dskip = dskip.expect("skip gradient requested");
            dx.data.iter_mut().zip(&dskip.data).for_each(|(a, b)| *a += b);
            dout = dx;
        }

        // stem
        if capture_unit == Some(0) {
            captured = Some(dout.clone());
        }
        if lowest > 0 || !trainable(0) {
            return (grads, captured);
        }
        relu_backward_inplace(&cache.stem_out, &mut dout);
        let (dpre, dg, dbeta) = bn_backward(&cache.stem_bn, &self.params[topo.stem_bn.gamma].value, &dout);
        let (_, dw) = conv_backward(
            &cache.input,
            &self.params[topo.stem_conv.param].value,
            &topo.stem_conv.geom,
            &dpre,
            false,
            true,
        );
        if let Some(g) = grads.as_mut() {
            g.values[topo.stem_conv.param] = dw.expect("dw requested");
            g.values[topo.stem_bn.gamma] = dg;
            g.values[topo.stem_bn.beta] = dbeta;
        }
        (grads, captured)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// An activation that GradCAM can attribute to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CamLayer {
    /// Output of the stem (conv-BN-ReLU).
    Stem,
    /// Output of residual block `i` (0-based, counted across stages).
    Block(usize),
}

#[derive(Debug, Clone)]
struct BlockCache {
    bn1: BnCache,
    mid: Tensor,
    bn2: BnCache,
    proj_bn: Option<BnCache>,
    out: Tensor,
}

/// Activations retained by a forward pass for backpropagation and GradCAM.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    generation: u64,
    mode: Mode,
    input: Tensor,
    stem_bn: BnCache,
    stem_out: Tensor,
    blocks: Vec<BlockCache>,
    pooled: Vec<f64>,
}

impl ForwardCache {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn batch_size(&self) -> usize {
        self.input.n
    }

    pub fn activation(&self, layer: CamLayer) -> Option<&Tensor> {
        match layer {
            CamLayer::Stem => Some(&self.stem_out),
            CamLayer::Block(b) => self.blocks.get(b).map(|c| &c.out),
        }
    }

    /// Batch-normalised (pre scale/shift) activations of the stem.
    pub fn stem_normalized(&self) -> &Tensor {
        &self.stem_bn.xhat
    }
}

pub struct ForwardPass {
    /// Row-major `(batch, 2)`.
    pub logits: Vec<f64>,
    pub cache: ForwardCache,
}

/// One gradient tensor per parameter, aligned with [`ModelState::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub values: Vec<Vec<f64>>,
}
