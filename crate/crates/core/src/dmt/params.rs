use rand::Rng;

use super::config::DmtConfig;
use crate::error::Result;
use crate::init::{kaiming, lecun};
use crate::numerics::{ParamSet, Tensor};

/// Weights of one layer: pre-norms, attention projections, soft-split MLP
/// and the two contextualizer branches.
#[derive(Debug, Clone)]
pub struct DmtLayerParams {
    pub ln1_gamma: Tensor,
    pub ln1_beta: Tensor,
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
    pub w_o: Tensor,
    pub ln2_gamma: Tensor,
    pub ln2_beta: Tensor,
    pub ffn_w1: Tensor,
    pub ffn_b1: Tensor,
    pub ffn_w2: Tensor,
    pub ffn_b2: Tensor,
    /// Branch A: 1×1 convolution followed by GELU.
    pub rfc_a_w: Tensor,
    pub rfc_a_b: Tensor,
    /// Branch B: 1×1 convolution, depthwise K×K, pointwise 1×1.
    pub rfc_b_w: Tensor,
    pub rfc_b_b: Tensor,
    pub rfc_dw_w: Tensor,
    pub rfc_dw_b: Tensor,
    pub rfc_pw_w: Tensor,
    pub rfc_pw_b: Tensor,
}

const NAMES: [&str; 20] = [
    "ln1.gamma",
    "ln1.beta",
    "attn.q",
    "attn.k",
    "attn.v",
    "attn.o",
    "ln2.gamma",
    "ln2.beta",
    "ffn.w1",
    "ffn.b1",
    "ffn.w2",
    "ffn.b2",
    "rfc.a.weight",
    "rfc.a.bias",
    "rfc.b.weight",
    "rfc.b.bias",
    "rfc.dw.weight",
    "rfc.dw.bias",
    "rfc.pw.weight",
    "rfc.pw.bias",
];

impl DmtLayerParams {
    /// `(name, shape)` of every tensor, in field order.
    pub fn shapes(config: &DmtConfig) -> Vec<(&'static str, Vec<usize>)> {
        let d = config.dim;
        let dk = config.window_width();
        let h = config.ffn_hidden;
        let k = config.rfc_kernel;
        let shapes = [
            vec![d],
            vec![d],
            vec![d, d],
            vec![d, d],
            vec![d, d],
            vec![d, d],
            vec![d],
            vec![d],
            vec![dk, h],
            vec![h],
            vec![h, dk],
            vec![dk],
            vec![d, d, 1, 1],
            vec![d],
            vec![d, d, 1, 1],
            vec![d],
            vec![d, 1, k, k],
            vec![d],
            vec![d, d, 1, 1],
            vec![d],
        ];
        NAMES.into_iter().zip(shapes).collect()
    }

    pub fn init(config: &DmtConfig, rng: &mut impl Rng) -> Self {
        let d = config.dim;
        let dk = config.window_width();
        let h = config.ffn_hidden;
        let k = config.rfc_kernel;
        Self {
            ln1_gamma: Tensor::full(&[d], 1.0),
            ln1_beta: Tensor::zeros(&[d]),
            w_q: lecun(&[d, d], d, rng),
            w_k: lecun(&[d, d], d, rng),
            w_v: lecun(&[d, d], d, rng),
            w_o: lecun(&[d, d], d, rng),
            ln2_gamma: Tensor::full(&[d], 1.0),
            ln2_beta: Tensor::zeros(&[d]),
            ffn_w1: kaiming(&[dk, h], dk, rng),
            ffn_b1: Tensor::zeros(&[h]),
            ffn_w2: lecun(&[h, dk], h, rng),
            ffn_b2: Tensor::zeros(&[dk]),
            rfc_a_w: kaiming(&[d, d, 1, 1], d, rng),
            rfc_a_b: Tensor::zeros(&[d]),
            rfc_b_w: lecun(&[d, d, 1, 1], d, rng),
            rfc_b_b: Tensor::zeros(&[d]),
            rfc_dw_w: lecun(&[d, 1, k, k], k * k, rng),
            rfc_dw_b: Tensor::zeros(&[d]),
            rfc_pw_w: lecun(&[d, d, 1, 1], d, rng),
            rfc_pw_b: Tensor::zeros(&[d]),
        }
    }

    fn fields(&self) -> [&Tensor; 20] {
        [
            &self.ln1_gamma,
            &self.ln1_beta,
            &self.w_q,
            &self.w_k,
            &self.w_v,
            &self.w_o,
            &self.ln2_gamma,
            &self.ln2_beta,
            &self.ffn_w1,
            &self.ffn_b1,
            &self.ffn_w2,
            &self.ffn_b2,
            &self.rfc_a_w,
            &self.rfc_a_b,
            &self.rfc_b_w,
            &self.rfc_b_b,
            &self.rfc_dw_w,
            &self.rfc_dw_b,
            &self.rfc_pw_w,
            &self.rfc_pw_b,
        ]
    }

    /// Adds every tensor under `prefix` (e.g. `"layers.0."`).
    pub fn insert_into(&self, set: &mut ParamSet, prefix: &str) -> Result<()> {
        for (name, t) in NAMES.iter().zip(self.fields()) {
            set.insert(format!("{prefix}{name}"), t.clone())?;
        }
        Ok(())
    }

    pub fn to_param_set(&self) -> Result<ParamSet> {
        let mut set = ParamSet::new();
        self.insert_into(&mut set, "")?;
        Ok(set)
    }

    /// Views the tensors stored under `prefix`.
    pub fn from_set(set: &ParamSet, prefix: &str) -> Result<Self> {
        let g = |n: &str| set.get(&format!("{prefix}{n}")).cloned();
        Ok(Self {
            ln1_gamma: g(NAMES[0])?,
            ln1_beta: g(NAMES[1])?,
            w_q: g(NAMES[2])?,
            w_k: g(NAMES[3])?,
            w_v: g(NAMES[4])?,
            w_o: g(NAMES[5])?,
            ln2_gamma: g(NAMES[6])?,
            ln2_beta: g(NAMES[7])?,
            ffn_w1: g(NAMES[8])?,
            ffn_b1: g(NAMES[9])?,
            ffn_w2: g(NAMES[10])?,
            ffn_b2: g(NAMES[11])?,
            rfc_a_w: g(NAMES[12])?,
            rfc_a_b: g(NAMES[13])?,
            rfc_b_w: g(NAMES[14])?,
            rfc_b_b: g(NAMES[15])?,
            rfc_dw_w: g(NAMES[16])?,
            rfc_dw_b: g(NAMES[17])?,
            rfc_pw_w: g(NAMES[18])?,
            rfc_pw_b: g(NAMES[19])?,
        })
    }
}
