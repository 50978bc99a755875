//! U-Net generator and patch discriminator.

use tch::nn::{self, Init, ModuleT};
use tch::Tensor;

use crate::config::{DiscriminatorSpec, GeneratorSpec};
use crate::error::{Error, Result};

const LEAKY_SLOPE: f64 = 0.2;
const INIT_STDEV: f64 = 0.02;

fn leaky_relu(x: &Tensor) -> Tensor {
    x.maximum(&(x * LEAKY_SLOPE))
}

fn unit(t: &Tensor) -> Tensor {
    t / (t.norm() + 1e-12)
}

/// Power-iteration state of one spectrally normalized weight.
#[derive(Debug)]
struct SpectralNorm {
    u: Tensor,
    v: Tensor,
    iterations: usize,
}

/// 3x3 convolution, stride 1, zero padding 1.
#[derive(Debug)]
pub struct Conv {
    pub weight: Tensor,
    pub bias: Tensor,
    sn: Option<SpectralNorm>,
}

impl Conv {
    pub fn new(path: &nn::Path, c_in: i64, c_out: i64, spectral_iterations: Option<usize>) -> Self {
        let weight = path.var(
            "weight",
            &[c_out, c_in, 3, 3],
            Init::Randn {
                mean: 0.0,
                stdev: INIT_STDEV,
            },
        );
        let bias = path.var("bias", &[c_out], Init::Const(0.0));
        let sn = spectral_iterations.map(|iterations| {
            let mut u = path.zeros_no_train("sn_u", &[c_out]);
            let mut v = path.zeros_no_train("sn_v", &[c_in * 9]);
            tch::no_grad(|| {
                u.copy_(&unit(&Tensor::randn([c_out], (u.kind(), u.device()))));
                v.copy_(&unit(&Tensor::randn([c_in * 9], (v.kind(), v.device()))));
            });
            SpectralNorm { u, v, iterations }
        });
        Self { weight, bias, sn }
    }

    pub fn is_spectral(&self) -> bool {
        self.sn.is_some()
    }

    fn matrix(&self) -> Tensor {
        let out = self.weight.size()[0];
        self.weight.view([out, -1])
    }

    /// Runs `n` power iterations on the stored singular-vector estimates.
    pub fn power_iterate(&self, n: usize) {
        if let Some(sn) = &self.sn {
            let w = self.matrix().detach();
            let (mut u_buf, mut v_buf) = (sn.u.shallow_clone(), sn.v.shallow_clone());
            tch::no_grad(|| {
                for _ in 0..n {
                    let v = unit(&w.tr().mv(&u_buf));
                    let u = unit(&w.mv(&v));
                    v_buf.copy_(&v);
                    u_buf.copy_(&u);
                }
            });
        }
    }

    /// Current estimate of the top singular value of the raw weight.
    pub fn sigma(&self) -> Option<Tensor> {
        self.sn
            .as_ref()
            .map(|sn| sn.u.copy().dot(&self.matrix().mv(&sn.v.copy())))
    }

    /// Weight actually applied by the layer.
    pub fn effective_weight(&self) -> Tensor {
        match self.sigma() {
            Some(sigma) => &self.weight / sigma,
            None => self.weight.shallow_clone(),
        }
    }

    pub fn forward(&self, x: &Tensor, train: bool) -> Tensor {
        if train {
            let n = self.sn.as_ref().map_or(0, |sn| sn.iterations);
            self.power_iterate(n);
        }
        x.conv2d(&self.effective_weight(), Some(&self.bias), [1, 1], [1, 1], [1, 1], 1)
    }
}

fn batch_norm(path: &nn::Path, channels: i64) -> nn::BatchNorm {
    nn::batch_norm2d(
        path,
        channels,
        nn::BatchNormConfig {
            ws_init: Init::Const(1.0),
            bs_init: Init::Const(0.0),
            ..Default::default()
        },
    )
}

/// Two convolutions (each optionally followed by batch norm and dropout, then
/// LeakyReLU) and a 2x2 max pool. Doubles the channels and halves the size.
#[derive(Debug)]
pub struct ContractingBlock {
    conv1: Conv,
    conv2: Conv,
    bn1: Option<nn::BatchNorm>,
    bn2: Option<nn::BatchNorm>,
    dropout: f64,
}

impl ContractingBlock {
    pub fn new(
        path: &nn::Path,
        channels: i64,
        use_bn: bool,
        dropout: f64,
        spectral: Option<usize>,
    ) -> Self {
        Self {
            conv1: Conv::new(&(path / "conv1"), channels, 2 * channels, spectral),
            conv2: Conv::new(&(path / "conv2"), 2 * channels, 2 * channels, spectral),
            bn1: use_bn.then(|| batch_norm(&(path / "bn1"), 2 * channels)),
            bn2: use_bn.then(|| batch_norm(&(path / "bn2"), 2 * channels)),
            dropout,
        }
    }

    pub fn forward(&self, x: &Tensor, train: bool) -> Tensor {
        let mut y = self.conv1.forward(x, train);
        if let Some(bn) = &self.bn1 {
            y = bn.forward_t(&y, train);
        }
        if self.dropout > 0.0 {
            y = y.dropout(self.dropout, train);
        }
        y = leaky_relu(&y);
        y = self.conv2.forward(&y, train);
        if let Some(bn) = &self.bn2 {
            y = bn.forward_t(&y, train);
        }
        if self.dropout > 0.0 {
            y = y.dropout(self.dropout, train);
        }
        leaky_relu(&y).max_pool2d([2, 2], [2, 2], [0, 0], [1, 1], false)
    }

    fn convs(&self) -> [&Conv; 2] {
        [&self.conv1, &self.conv2]
    }
}

/// Nearest-neighbour upsampling, a convolution halving the channels, the skip
/// concatenation, then a convolution with batch norm and ReLU.
#[derive(Debug)]
pub struct ExpandingBlock {
    up: Conv,
    conv: Conv,
    bn: nn::BatchNorm,
}

impl ExpandingBlock {
    pub fn new(path: &nn::Path, channels: i64) -> Self {
        Self {
            up: Conv::new(&(path / "up"), channels, channels / 2, None),
            conv: Conv::new(&(path / "conv"), channels, channels / 2, None),
            bn: batch_norm(&(path / "bn"), channels / 2),
        }
    }

    pub fn forward(&self, x: &Tensor, skip: &Tensor, train: bool) -> Tensor {
        let size = x.size();
        let up = x.upsample_nearest2d([size[2] * 2, size[3] * 2], None, None);
        let y = self.up.forward(&up, train);
        let y = Tensor::cat(&[&y, skip], 1);
        self.bn.forward_t(&self.conv.forward(&y, train), train).relu()
    }
}

/// Name and output shape of one traced layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerShape {
    pub name: String,
    pub shape: Vec<i64>,
}

fn record(trace: &mut Option<&mut Vec<LayerShape>>, name: String, t: &Tensor) {
    if let Some(trace) = trace {
        trace.push(LayerShape {
            name,
            shape: t.size(),
        });
    }
}

fn check_input(t: &Tensor, channels: i64, what: &str) -> Result<()> {
    let size = t.size();
    if size.len() != 4 || size[1] != channels {
        return Err(Error::Shape(format!(
            "{what}: expected [B, {channels}, H, W], got {size:?}"
        )));
    }
    Ok(())
}

#[derive(Debug)]
pub struct Generator {
    pub spec: GeneratorSpec,
    feature: Conv,
    contracting: Vec<ContractingBlock>,
    expanding: Vec<ExpandingBlock>,
    output: Conv,
}

impl Generator {
    pub fn new(path: &nn::Path, spec: &GeneratorSpec) -> Result<Self> {
        spec.validate()?;
        let h = spec.hidden;
        let feature = Conv::new(&(path / "feature"), spec.in_channels, h, None);
        let contracting = (0..spec.depth)
            .map(|k| {
                let dropout = if k < spec.dropout_blocks { spec.dropout } else { 0.0 };
                ContractingBlock::new(&(path / format!("contract{}", k + 1)), h << k, true, dropout, None)
            })
            .collect();
        let expanding = (0..spec.depth)
            .map(|k| ExpandingBlock::new(&(path / format!("expand{}", k + 1)), h << (spec.depth - k)))
            .collect();
        let output = Conv::new(&(path / "output"), h, spec.out_channels, None);
        Ok(Self {
            spec: spec.clone(),
            feature,
            contracting,
            expanding,
            output,
        })
    }

    pub fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        self.run(x, train, None)
    }

    /// Forward pass recording each block's output shape.
    pub fn trace(&self, x: &Tensor, train: bool) -> Result<(Tensor, Vec<LayerShape>)> {
        let mut shapes = Vec::new();
        let out = self.run(x, train, Some(&mut shapes))?;
        Ok((out, shapes))
    }

    fn run(&self, x: &Tensor, train: bool, mut trace: Option<&mut Vec<LayerShape>>) -> Result<Tensor> {
        check_input(x, self.spec.in_channels, "generator input")?;
        let size = x.size();
        self.spec.check_spatial(size[2], size[3])?;
        let mut y = self.feature.forward(x, train);
        record(&mut trace, "feature".into(), &y);
        let mut skips = Vec::with_capacity(self.spec.depth);
        for (k, block) in self.contracting.iter().enumerate() {
            skips.push(y.shallow_clone());
            y = block.forward(&y, train);
            record(&mut trace, format!("contract{}", k + 1), &y);
        }
        for (k, block) in self.expanding.iter().enumerate() {
            let skip = skips.pop().expect("one skip per contracting block");
            y = block.forward(&y, &skip, train);
            record(&mut trace, format!("expand{}", k + 1), &y);
        }
        let out = self.output.forward(&y, train).sigmoid();
        record(&mut trace, "output".into(), &out);
        Ok(out)
    }
}

#[derive(Debug)]
pub struct Discriminator {
    pub spec: DiscriminatorSpec,
    feature: Conv,
    contracting: Vec<ContractingBlock>,
    output: Conv,
}

impl Discriminator {
    pub fn new(path: &nn::Path, spec: &DiscriminatorSpec) -> Result<Self> {
        spec.validate()?;
        let h = spec.hidden;
        let sn = spec.spectral_norm.then_some(spec.power_iterations);
        let feature = Conv::new(&(path / "feature"), spec.in_channels(), h, sn);
        let contracting = (0..spec.depth)
            .map(|k| ContractingBlock::new(&(path / format!("contract{}", k + 1)), h << k, k > 0, 0.0, sn))
            .collect();
        let output = Conv::new(&(path / "output"), h << spec.depth, spec.target_channels, sn);
        Ok(Self {
            spec: spec.clone(),
            feature,
            contracting,
            output,
        })
    }

    /// Raw patch scores for the channel-wise concatenation of condition and candidate.
    pub fn forward(&self, condition: &Tensor, candidate: &Tensor, train: bool) -> Result<Tensor> {
        self.run(condition, candidate, train, None)
    }

    pub fn trace(
        &self,
        condition: &Tensor,
        candidate: &Tensor,
        train: bool,
    ) -> Result<(Tensor, Vec<LayerShape>)> {
        let mut shapes = Vec::new();
        let out = self.run(condition, candidate, train, Some(&mut shapes))?;
        Ok((out, shapes))
    }

    fn run(
        &self,
        condition: &Tensor,
        candidate: &Tensor,
        train: bool,
        mut trace: Option<&mut Vec<LayerShape>>,
    ) -> Result<Tensor> {
        check_input(condition, self.spec.condition_channels, "discriminator condition")?;
        check_input(candidate, self.spec.target_channels, "discriminator candidate")?;
        let (a, b) = (condition.size(), candidate.size());
        if a[0] != b[0] || a[2..] != b[2..] {
            return Err(Error::Shape(format!("condition {a:?} and candidate {b:?} differ")));
        }
        let factor = 1i64 << self.spec.depth;
        if a[2] % factor != 0 || a[3] % factor != 0 || a[2] < factor || a[3] < factor {
            return Err(Error::Config(format!(
                "spatial size {}x{} is not divisible by 2^{}",
                a[2], a[3], self.spec.depth
            )));
        }
        let x = Tensor::cat(&[condition, candidate], 1);
        let mut y = self.feature.forward(&x, train);
        record(&mut trace, "feature".into(), &y);
        for (k, block) in self.contracting.iter().enumerate() {
            y = block.forward(&y, train);
            record(&mut trace, format!("contract{}", k + 1), &y);
        }
        let out = self.output.forward(&y, train);
        record(&mut trace, "output".into(), &out);
        Ok(out)
    }

    /// Every convolution, in forward order.
    pub fn convs(&self) -> Vec<&Conv> {
        let mut out = vec![&self.feature];
        for block in &self.contracting {
            out.extend(block.convs());
        }
        out.push(&self.output);
        out
    }
}

/// Total element count of the trainable variables of a store.
pub fn parameter_count(vs: &nn::VarStore) -> i64 {
    vs.trainable_variables().iter().map(|t| t.numel() as i64).sum()
}

