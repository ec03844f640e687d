//! Learnable weights of the relatedness network.
//!
//! Layout for visual dimension `v` and word dimension `q` (hidden width `q`):
//!
//! ```text
//! mlp_a : v -> q -> q   (ReLU between the layers)
//! fc_s  : 2q -> 1       (attention logit over [v_a; w_j])
//! mlp_b : v -> q -> q   (ReLU between the layers)
//! fc_r  : q -> 1        (relatedness logit)
//! ```

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Fully connected layer, `y = W x + b` with `W` stored `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Matrix::zeros(output, input),
            bias: vec![0.0; output],
        }
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for weights and biases.
    fn init<R: Rng>(input: usize, output: usize, rng: &mut R) -> Self {
        let bound = 1.0 / libm::sqrt(input.max(1) as f64);
        let mut layer = Self::zeros(input, output);
        for w in layer.weight.as_mut_slice() {
            *w = rng.gen_range(-bound..=bound);
        }
        for b in &mut layer.bias {
            *b = rng.gen_range(-bound..=bound);
        }
        layer
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out.iter_mut().zip(self.weight.iter_rows().zip(&self.bias)) {
            *o = crate::linalg::dot(row, x) + b;
        }
    }

    /// Accumulates parameter gradients for upstream `g_out` at input `x`
    /// into `grad`, and adds `W^T g_out` into `g_in`.
    pub(crate) fn backward(&self, x: &[f64], g_out: &[f64], grad: &mut Dense, g_in: &mut [f64]) {
        for (k, &g) in g_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            crate::linalg::axpy(g, x, grad.weight.row_mut(k));
            grad.bias[k] += g;
            crate::linalg::axpy(g, self.weight.row(k), g_in);
        }
    }
}

/// Two dense layers with a ReLU in between.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub hidden: Dense,
    pub output: Dense,
}

impl Mlp {
    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            hidden: Dense::zeros(input, hidden),
            output: Dense::zeros(hidden, output),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParamGroup {
    MlpA,
    FcS,
    MlpB,
    FcR,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 4] = [ParamGroup::MlpA, ParamGroup::FcS, ParamGroup::MlpB, ParamGroup::FcR];

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::MlpA => "mlp_a",
            ParamGroup::FcS => "fc_s",
            ParamGroup::MlpB => "mlp_b",
            ParamGroup::FcR => "fc_r",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|g| g.name() == s)
    }
}

/// Names of the twelve parameter tensors, in [`ScorerParams::tensors`] order.
pub const TENSOR_NAMES: [&str; 12] = [
    "mlp_a.hidden.weight",
    "mlp_a.hidden.bias",
    "mlp_a.output.weight",
    "mlp_a.output.bias",
    "fc_s.weight",
    "fc_s.bias",
    "mlp_b.hidden.weight",
    "mlp_b.hidden.bias",
    "mlp_b.output.weight",
    "mlp_b.output.bias",
    "fc_r.weight",
    "fc_r.bias",
];

const TENSOR_GROUPS: [ParamGroup; 12] = [
    ParamGroup::MlpA,
    ParamGroup::MlpA,
    ParamGroup::MlpA,
    ParamGroup::MlpA,
    ParamGroup::FcS,
    ParamGroup::FcS,
    ParamGroup::MlpB,
    ParamGroup::MlpB,
    ParamGroup::MlpB,
    ParamGroup::MlpB,
    ParamGroup::FcR,
    ParamGroup::FcR,
];

#[derive(Debug, Clone, PartialEq)]
pub struct ScorerParams {
    pub mlp_a: Mlp,
    pub fc_s: Dense,
    pub mlp_b: Mlp,
    pub fc_r: Dense,
}

impl ScorerParams {
    pub fn zeros(visual_dim: usize, word_dim: usize) -> Self {
        let q = word_dim;
        Self {
            mlp_a: Mlp::zeros(visual_dim, q, q),
            fc_s: Dense::zeros(2 * q, 1),
            mlp_b: Mlp::zeros(visual_dim, q, q),
            fc_r: Dense::zeros(q, 1),
        }
    }

    /// Seeded fan-in uniform initialization.
    pub fn init(visual_dim: usize, word_dim: usize, seed: u64) -> Self {
        let mut rng = crate::rng::stream(seed, 0x1417);
        let q = word_dim;
        let mlp_a = Mlp {
            hidden: Dense::init(visual_dim, q, &mut rng),
            output: Dense::init(q, q, &mut rng),
        };
        let fc_s = Dense::init(2 * q, 1, &mut rng);
        let mlp_b = Mlp {
            hidden: Dense::init(visual_dim, q, &mut rng),
            output: Dense::init(q, q, &mut rng),
        };
        let fc_r = Dense::init(q, 1, &mut rng);
        Self {
            mlp_a,
            fc_s,
            mlp_b,
            fc_r,
        }
    }

    pub fn visual_dim(&self) -> usize {
        self.mlp_a.hidden.input_dim()
    }

    pub fn word_dim(&self) -> usize {
        self.fc_r.input_dim()
    }

    /// Expected `(rows, cols)` of every tensor for dimensions `(v, q)`;
    /// biases are `(len, 1)`.
    pub fn tensor_shapes(visual_dim: usize, word_dim: usize) -> [(usize, usize); 12] {
        let (v, q) = (visual_dim, word_dim);
        [
            (q, v),
            (q, 1),
            (q, q),
            (q, 1),
            (1, 2 * q),
            (1, 1),
            (q, v),
            (q, 1),
            (q, q),
            (q, 1),
            (1, q),
            (1, 1),
        ]
    }

    /// Checks every tensor shape against `(visual_dim(), word_dim())` and that
    /// all entries are finite.
    pub fn validate(&self) -> Result<()> {
        let shapes = Self::tensor_shapes(self.visual_dim(), self.word_dim());
        let actual = [
            (self.mlp_a.hidden.weight.rows(), self.mlp_a.hidden.weight.cols()),
            (self.mlp_a.hidden.bias.len(), 1),
            (self.mlp_a.output.weight.rows(), self.mlp_a.output.weight.cols()),
            (self.mlp_a.output.bias.len(), 1),
            (self.fc_s.weight.rows(), self.fc_s.weight.cols()),
            (self.fc_s.bias.len(), 1),
            (self.mlp_b.hidden.weight.rows(), self.mlp_b.hidden.weight.cols()),
            (self.mlp_b.hidden.bias.len(), 1),
            (self.mlp_b.output.weight.rows(), self.mlp_b.output.weight.cols()),
            (self.mlp_b.output.bias.len(), 1),
            (self.fc_r.weight.rows(), self.fc_r.weight.cols()),
            (self.fc_r.bias.len(), 1),
        ];
        for (name, (want, got)) in TENSOR_NAMES.iter().zip(shapes.iter().zip(actual.iter())) {
            if want != got {
                return Err(Error::InvalidConfig(alloc::format!(
                    "tensor {name} has shape {got:?}, expected {want:?}"
                )));
            }
        }
        if self.tensors().iter().any(|(_, t)| t.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite("scorer parameters"));
        }
        Ok(())
    }

    /// Builds parameters from flat tensors given in [`TENSOR_NAMES`] order.
    pub fn from_tensors(visual_dim: usize, word_dim: usize, tensors: [Vec<f64>; 12]) -> Result<Self> {
        let shapes = Self::tensor_shapes(visual_dim, word_dim);
        for ((name, (r, c)), t) in TENSOR_NAMES.iter().zip(shapes).zip(&tensors) {
            if t.len() != r * c {
                return Err(Error::InvalidConfig(alloc::format!(
                    "tensor {name} has {} values, expected {}",
                    t.len(),
                    r * c
                )));
            }
        }
        let mut params = Self::zeros(visual_dim, word_dim);
        for ((_, dst), src) in params.tensors_mut().into_iter().zip(tensors) {
            dst.copy_from_slice(&src);
        }
        params.validate()?;
        Ok(params)
    }

    pub fn tensors(&self) -> [(ParamGroup, &[f64]); 12] {
        let t = [
            self.mlp_a.hidden.weight.as_slice(),
            &self.mlp_a.hidden.bias,
            self.mlp_a.output.weight.as_slice(),
            &self.mlp_a.output.bias,
            self.fc_s.weight.as_slice(),
            &self.fc_s.bias,
            self.mlp_b.hidden.weight.as_slice(),
            &self.mlp_b.hidden.bias,
            self.mlp_b.output.weight.as_slice(),
            &self.mlp_b.output.bias,
            self.fc_r.weight.as_slice(),
            &self.fc_r.bias,
        ];
        let mut i = 0;
        t.map(|s| {
            let g = TENSOR_GROUPS[i];
            i += 1;
            (g, s)
        })
    }

    pub fn tensors_mut(&mut self) -> [(ParamGroup, &mut [f64]); 12] {
        let Self {
            mlp_a,
            fc_s,
            mlp_b,
            fc_r,
        } = self;
        let t: [&mut [f64]; 12] = [
            mlp_a.hidden.weight.as_mut_slice(),
            &mut mlp_a.hidden.bias,
            mlp_a.output.weight.as_mut_slice(),
            &mut mlp_a.output.bias,
            fc_s.weight.as_mut_slice(),
            &mut fc_s.bias,
            mlp_b.hidden.weight.as_mut_slice(),
            &mut mlp_b.hidden.bias,
            mlp_b.output.weight.as_mut_slice(),
            &mut mlp_b.output.bias,
            fc_r.weight.as_mut_slice(),
            &mut fc_r.bias,
        ];
        let mut i = 0;
        t.map(|s| {
            let g = TENSOR_GROUPS[i];
            i += 1;
            (g, s)
        })
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// All values concatenated in tensor order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (_, t) in self.tensors() {
            out.extend_from_slice(t);
        }
        out
    }

    /// Group of the `k`-th flat coordinate.
    pub fn group_of(&self, mut k: usize) -> ParamGroup {
        for (g, t) in self.tensors() {
            if k < t.len() {
                return g;
            }
            k -= t.len();
        }
        panic!("parameter index out of range");
    }

    pub fn flat_mut(&mut self, mut k: usize) -> &mut f64 {
        for (_, t) in self.tensors_mut() {
            if k < t.len() {
                return &mut t[k];
            }
            k -= t.len();
        }
        panic!("parameter index out of range");
    }

    pub(crate) fn scale(&mut self, s: f64) {
        for (_, t) in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub(crate) fn add_assign(&mut self, other: &ScorerParams) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            crate::linalg::axpy(1.0, b, a);
        }
    }
}
