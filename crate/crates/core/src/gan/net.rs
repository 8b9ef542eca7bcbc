use ndarray::{concatenate, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::nn::{BatchNorm2d, Conv2d, ConvTranspose2d, GlobalAvgPool, Linear, Module, Param, Relu, Scalar, Tanh, Tensor};
use crate::{Error, Result};

/// Feature widths of the discriminator's six strided layers.
pub const DISCRIMINATOR_WIDTHS: [usize; 6] = [64, 128, 256, 512, 512, 512];

enum Op<T: Scalar> {
    Conv(Conv2d<T>),
    Up(ConvTranspose2d<T>),
}

/// Convolution (or transposed convolution), optional batch norm, rectifier.
struct Unit<T: Scalar> {
    op: Op<T>,
    norm: Option<BatchNorm2d<T>>,
    relu: Relu,
}

impl<T: Scalar> Unit<T> {
    fn conv(name: &str, cin: usize, cout: usize, k: usize, stride: usize, norm: bool) -> Self {
        Self {
            op: Op::Conv(Conv2d::new(&format!("{name}.conv"), cin, cout, k, stride, k / 2, !norm)),
            norm: norm.then(|| BatchNorm2d::new(&format!("{name}.norm"), cout)),
            relu: Relu::new(),
        }
    }

    fn up(name: &str, cin: usize, cout: usize) -> Self {
        Self {
            op: Op::Up(ConvTranspose2d::new(&format!("{name}.deconv"), cin, cout, 3, 2, 1, 1)),
            norm: Some(BatchNorm2d::new(&format!("{name}.norm"), cout)),
            relu: Relu::new(),
        }
    }

    fn forward(&mut self, x: &Tensor<T>, train: bool) -> Tensor<T> {
        let mut y = match &mut self.op {
            Op::Conv(c) => c.forward(x, train),
            Op::Up(u) => u.forward(x, train),
        };
        if let Some(n) = &mut self.norm {
            y = n.forward(&y, train);
        }
        self.relu.forward(&y, train)
    }

    fn eval(&self, x: &Tensor<T>) -> Tensor<T> {
        let mut y = match &self.op {
            Op::Conv(c) => c.eval(x),
            Op::Up(u) => u.eval(x),
        };
        if let Some(n) = &self.norm {
            y = n.eval(&y);
        }
        Relu::eval(&y)
    }

    fn backward(&mut self, dy: &Tensor<T>, need_dx: bool) -> Option<Tensor<T>> {
        let mut d = self.relu.backward(dy);
        if let Some(n) = &mut self.norm {
            d = n.backward(&d);
        }
        match &mut self.op {
            Op::Conv(c) => c.backward(&d, need_dx),
            Op::Up(u) => u.backward(&d, need_dx),
        }
    }

    fn set_tracking(&mut self, on: bool) {
        if let Some(n) = &mut self.norm {
            n.track_running_stats = on;
        }
    }

    fn visit(&self, f: &mut dyn FnMut(&Param<T>)) {
        match &self.op {
            Op::Conv(c) => c.visit(f),
            Op::Up(u) => u.visit(f),
        }
        if let Some(n) = &self.norm {
            n.visit(f);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        match &mut self.op {
            Op::Conv(c) => c.visit_mut(f),
            Op::Up(u) => u.visit_mut(f),
        }
        if let Some(n) = &mut self.norm {
            n.visit_mut(f);
        }
    }
}

/// Pre-activation residual unit: `x + conv(relu(bn(conv(relu(bn(x))))))`.
struct SpecialBlock<T: Scalar> {
    bn1: BatchNorm2d<T>,
    relu1: Relu,
    conv1: Conv2d<T>,
    bn2: BatchNorm2d<T>,
    relu2: Relu,
    conv2: Conv2d<T>,
}

impl<T: Scalar> SpecialBlock<T> {
    fn new(name: &str, c: usize) -> Self {
        Self {
            bn1: BatchNorm2d::new(&format!("{name}.bn1"), c),
            relu1: Relu::new(),
            conv1: Conv2d::new(&format!("{name}.conv1"), c, c, 3, 1, 1, false),
            bn2: BatchNorm2d::new(&format!("{name}.bn2"), c),
            relu2: Relu::new(),
            conv2: Conv2d::new(&format!("{name}.conv2"), c, c, 3, 1, 1, false),
        }
    }

    fn forward(&mut self, x: &Tensor<T>, train: bool) -> Tensor<T> {
        let h = self.relu1.forward(&self.bn1.forward(x, train), train);
        let h = self.conv1.forward(&h, train);
        let h = self.relu2.forward(&self.bn2.forward(&h, train), train);
        self.conv2.forward(&h, train) + x
    }

    fn eval(&self, x: &Tensor<T>) -> Tensor<T> {
        let h = self.conv1.eval(&Relu::eval(&self.bn1.eval(x)));
        self.conv2.eval(&Relu::eval(&self.bn2.eval(&h))) + x
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Tensor<T> {
        let d = self.conv2.backward(dy, true).expect("dx");
        let d = self.bn2.backward(&self.relu2.backward(&d));
        let d = self.conv1.backward(&d, true).expect("dx");
        self.bn1.backward(&self.relu1.backward(&d)) + dy
    }

    fn visit(&self, f: &mut dyn FnMut(&Param<T>)) {
        self.bn1.visit(f);
        self.conv1.visit(f);
        self.bn2.visit(f);
        self.conv2.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.bn1.visit_mut(f);
        self.conv1.visit_mut(f);
        self.bn2.visit_mut(f);
        self.conv2.visit_mut(f);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Channels after the first stem convolution; doubled at each downsampling.
    pub base_width: usize,
    pub n_special_blocks: usize,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            in_channels: 3,
            out_channels: 1,
            base_width: 64,
            n_special_blocks: 9,
        }
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        for (name, v) in [
            ("in_channels", self.in_channels),
            ("out_channels", self.out_channels),
            ("base_width", self.base_width),
            ("n_special_blocks", self.n_special_blocks),
        ] {
            if v == 0 {
                errs.push(format!("generator.{name} must be at least 1"));
            }
        }
        errs
    }

    /// Trainable scalars in one special block.
    pub fn block_parameter_count(&self) -> usize {
        let c = 4 * self.base_width;
        2 * (c * c * 9) + 2 * (2 * c)
    }
}

/// Encoder, residual trunk and decoder with additive skips from the encoder's
/// full- and half-resolution outputs. Output passes through tanh.
pub struct Generator<T: Scalar> {
    spec: GeneratorSpec,
    stem: [Unit<T>; 3],
    blocks: Vec<SpecialBlock<T>>,
    trunk_norm: BatchNorm2d<T>,
    trunk_relu: Relu,
    up: [Unit<T>; 2],
    head: Conv2d<T>,
    tanh: Tanh<T>,
}

impl<T: Scalar> Generator<T> {
    /// Parameters start at zero; see [`crate::nn::init_weights`].
    pub fn new(spec: &GeneratorSpec) -> Result<Self> {
        let errs = spec.validate();
        if !errs.is_empty() {
            return Err(Error::Config(errs));
        }
        let w = spec.base_width;
        Ok(Self {
            spec: spec.clone(),
            stem: [
                Unit::conv("g.stem1", spec.in_channels, w, 7, 1, true),
                Unit::conv("g.stem2", w, 2 * w, 3, 2, true),
                Unit::conv("g.stem3", 2 * w, 4 * w, 3, 2, true),
            ],
            blocks: (0..spec.n_special_blocks)
                .map(|i| SpecialBlock::new(&format!("g.block{i}"), 4 * w))
                .collect(),
            trunk_norm: BatchNorm2d::new("g.trunk.norm", 4 * w),
            trunk_relu: Relu::new(),
            up: [Unit::up("g.up1", 4 * w, 2 * w), Unit::up("g.up2", 2 * w, w)],
            head: Conv2d::new("g.head", w, spec.out_channels, 1, 1, 0, true),
            tanh: Tanh::new(),
        })
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    fn check(&self, x: &Tensor<T>) -> Result<()> {
        let (_, c, h, w) = x.dim();
        if c != self.spec.in_channels {
            return Err(Error::shape(&[self.spec.in_channels], &[c]));
        }
        if h == 0 || w == 0 || h % 4 != 0 || w % 4 != 0 {
            return Err(Error::InvalidArgument(format!(
                "generator input {h}x{w}: both sides must be positive multiples of 4"
            )));
        }
        Ok(())
    }

    pub fn forward(&mut self, x: &Tensor<T>, train: bool) -> Result<Tensor<T>> {
        self.check(x)?;
        let e1 = self.stem[0].forward(x, train);
        let e2 = self.stem[1].forward(&e1, train);
        let mut h = self.stem[2].forward(&e2, train);
        for b in &mut self.blocks {
            h = b.forward(&h, train);
        }
        let h = self.trunk_relu.forward(&self.trunk_norm.forward(&h, train), train);
        let d2 = self.up[0].forward(&h, train) + &e2;
        let d1 = self.up[1].forward(&d2, train) + &e1;
        Ok(self.tanh.forward(&self.head.forward(&d1, train), train))
    }

    pub fn eval(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check(x)?;
        let e1 = self.stem[0].eval(x);
        let e2 = self.stem[1].eval(&e1);
        let mut h = self.stem[2].eval(&e2);
        for b in &self.blocks {
            h = b.eval(&h);
        }
        let h = Relu::eval(&self.trunk_norm.eval(&h));
        let d2 = self.up[0].eval(&h) + &e2;
        let d1 = self.up[1].eval(&d2) + &e1;
        Ok(self.head.eval(&d1).mapv(|v| v.tanh()))
    }

    /// Backpropagates `d loss / d output` after a training-mode forward,
    /// accumulating parameter gradients.
    pub fn backward(&mut self, dy: &Tensor<T>) {
        let d = self.tanh.backward(dy);
        let dd1 = self.head.backward(&d, true).expect("dx");
        let dd2 = self.up[1].backward(&dd1, true).expect("dx");
        let dh = self.up[0].backward(&dd2, true).expect("dx");
        let mut dh = self.trunk_norm.backward(&self.trunk_relu.backward(&dh));
        for b in self.blocks.iter_mut().rev() {
            dh = b.backward(&dh);
        }
        let de2 = self.stem[2].backward(&dh, true).expect("dx") + &dd2;
        let de1 = self.stem[1].backward(&de2, true).expect("dx") + &dd1;
        self.stem[0].backward(&de1, false);
    }
}

impl<T: Scalar> Module<T> for Generator<T> {
    fn visit(&self, f: &mut dyn FnMut(&Param<T>)) {
        for u in &self.stem {
            u.visit(f);
        }
        for b in &self.blocks {
            b.visit(f);
        }
        self.trunk_norm.visit(f);
        for u in &self.up {
            u.visit(f);
        }
        self.head.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        for u in &mut self.stem {
            u.visit_mut(f);
        }
        for b in &mut self.blocks {
            b.visit_mut(f);
        }
        self.trunk_norm.visit_mut(f);
        for u in &mut self.up {
            u.visit_mut(f);
        }
        self.head.visit_mut(f);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscriminatorSpec {
    /// Channels of the map being judged.
    pub map_channels: usize,
    /// Channels of the conditioning image; used only when `conditional`.
    pub image_channels: usize,
    /// Judge `(image, map)` pairs instead of maps alone.
    pub conditional: bool,
}

impl Default for DiscriminatorSpec {
    fn default() -> Self {
        Self {
            map_channels: 1,
            image_channels: 3,
            conditional: false,
        }
    }
}

impl DiscriminatorSpec {
    pub fn input_channels(&self) -> usize {
        self.map_channels + if self.conditional { self.image_channels } else { 0 }
    }
}

/// Six stride-2 conv layers, global average pooling and one logit per sample.
pub struct Discriminator<T: Scalar> {
    spec: DiscriminatorSpec,
    layers: Vec<Unit<T>>,
    pool: GlobalAvgPool,
    fc: Linear<T>,
}

impl<T: Scalar> Discriminator<T> {
    pub fn new(spec: &DiscriminatorSpec) -> Self {
        let mut layers = Vec::with_capacity(DISCRIMINATOR_WIDTHS.len());
        let mut cin = spec.input_channels();
        for (i, &w) in DISCRIMINATOR_WIDTHS.iter().enumerate() {
            layers.push(Unit::conv(&format!("d.layer{i}"), cin, w, 3, 2, i > 0));
            cin = w;
        }
        Self {
            spec: spec.clone(),
            layers,
            pool: GlobalAvgPool::new(),
            fc: Linear::new("d.fc", cin, 1),
        }
    }

    pub fn spec(&self) -> &DiscriminatorSpec {
        &self.spec
    }

    /// Output channels of each feature layer.
    pub fn widths(&self) -> Vec<usize> {
        self.layers
            .iter()
            .map(|u| match &u.op {
                Op::Conv(c) => c.out_channels(),
                Op::Up(_) => unreachable!(),
            })
            .collect()
    }

    pub fn has_norm(&self) -> Vec<bool> {
        self.layers.iter().map(|u| u.norm.is_some()).collect()
    }

    /// Builds the network input: the map alone, or the image and map stacked
    /// along channels when conditional.
    pub fn input(&self, image: &Tensor<T>, map: &Tensor<T>) -> Tensor<T> {
        if self.spec.conditional {
            concatenate(Axis(1), &[image.view(), map.view()]).expect("matching batch and size")
        } else {
            map.clone()
        }
    }

    /// Logits, one per sample.
    pub fn forward(&mut self, x: &Tensor<T>, train: bool) -> Array1<T> {
        let mut h = x.clone();
        for l in &mut self.layers {
            h = l.forward(&h, train);
        }
        let logits = self.fc.forward(&self.pool.forward(&h), train);
        logits.column(0).to_owned()
    }

    pub fn eval(&self, x: &Tensor<T>) -> Array1<T> {
        let mut h = x.clone();
        for l in &self.layers {
            h = l.eval(&h);
        }
        self.fc.eval(&GlobalAvgPool::eval(&h)).column(0).to_owned()
    }

    /// Returns the input gradient when `need_dx`.
    pub fn backward(&mut self, dlogits: &Array1<T>, need_dx: bool) -> Option<Tensor<T>> {
        let d: Array2<T> = dlogits.clone().insert_axis(Axis(1));
        let mut d = self.pool.backward(&self.fc.backward(&d));
        for (i, l) in self.layers.iter_mut().enumerate().rev() {
            d = l.backward(&d, i > 0 || need_dx)?;
        }
        Some(d)
    }

    /// Freezes or unfreezes the running statistics of every norm layer.
    pub fn track_running_stats(&mut self, on: bool) {
        for l in &mut self.layers {
            l.set_tracking(on);
        }
    }
}

impl<T: Scalar> Module<T> for Discriminator<T> {
    fn visit(&self, f: &mut dyn FnMut(&Param<T>)) {
        for l in &self.layers {
            l.visit(f);
        }
        self.fc.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        for l in &mut self.layers {
            l.visit_mut(f);
        }
        self.fc.visit_mut(f);
    }
}
