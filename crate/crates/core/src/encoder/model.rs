use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamId, ParameterStore};
use crate::error::{Error, Result};

/// How pending messages for one node are reduced before the memory update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregator {
    #[default]
    Last,
    Mean,
}

impl std::str::FromStr for Aggregator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "last" => Ok(Aggregator::Last),
            "mean" => Ok(Aggregator::Mean),
            other => Err(Error::config(format!("unknown aggregator `{other}` (last, mean)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_mem: usize,
    pub d_msg: usize,
    pub d_emb: usize,
    pub d_time: usize,
    pub feat_dim: usize,
    pub n_neighbors: usize,
    pub aggregator: Aggregator,
    pub dropout: f64,
    /// Hidden widths of the node-classification decoder.
    pub cls_hidden: (usize, usize),
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_mem: 172,
            d_msg: 100,
            d_emb: 100,
            d_time: 100,
            feat_dim: 0,
            n_neighbors: 10,
            aggregator: Aggregator::Last,
            dropout: 0.1,
            cls_hidden: (80, 10),
        }
    }
}

impl ModelConfig {
    /// Raw message width: own memory, peer memory, time code, event features.
    pub fn raw_msg_dim(&self) -> usize {
        2 * self.d_mem + self.d_time + self.feat_dim
    }

    /// Width of one neighbour slot: peer memory, time code, event features.
    pub fn neighbor_dim(&self) -> usize {
        self.d_mem + self.d_time + self.feat_dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_mem == 0 || self.d_msg == 0 || self.d_emb == 0 || self.d_time == 0 {
            return Err(Error::config("model dimensions must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!("dropout {} must lie in [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// Handles to every tensor of the model, resolved by name.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamIds {
    pub msg_w: ParamId,
    pub msg_b: ParamId,
    pub gru_wz: ParamId,
    pub gru_uz: ParamId,
    pub gru_bz: ParamId,
    pub gru_wr: ParamId,
    pub gru_ur: ParamId,
    pub gru_br: ParamId,
    pub gru_wn: ParamId,
    pub gru_un: ParamId,
    pub gru_bn: ParamId,
    pub time_freq: ParamId,
    pub time_phase: ParamId,
    pub attn: ParamId,
    pub emb_w: ParamId,
    pub emb_b: ParamId,
    pub proj_w1: ParamId,
    pub proj_b1: ParamId,
    pub proj_w2: ParamId,
    pub proj_b2: ParamId,
    pub link_w1: ParamId,
    pub link_b1: ParamId,
    pub link_w2: ParamId,
    pub link_b2: ParamId,
    pub cls_w1: ParamId,
    pub cls_b1: ParamId,
    pub cls_w2: ParamId,
    pub cls_b2: ParamId,
    pub cls_w3: ParamId,
    pub cls_b3: ParamId,
}

/// Names and shapes in declaration order.
fn layout(cfg: &ModelConfig) -> Vec<(&'static str, usize, usize)> {
    let (m, msg, e, t) = (cfg.d_mem, cfg.d_msg, cfg.d_emb, cfg.d_time);
    let (h1, h2) = cfg.cls_hidden;
    vec![
        ("msg.w", msg, cfg.raw_msg_dim()),
        ("msg.b", msg, 1),
        ("gru.wz", m, msg),
        ("gru.uz", m, m),
        ("gru.bz", m, 1),
        ("gru.wr", m, msg),
        ("gru.ur", m, m),
        ("gru.br", m, 1),
        ("gru.wn", m, msg),
        ("gru.un", m, m),
        ("gru.bn", m, 1),
        ("time.freq", t, 1),
        ("time.phase", t, 1),
        ("emb.attn", cfg.neighbor_dim(), 1),
        ("emb.w", e, m + cfg.neighbor_dim()),
        ("emb.b", e, 1),
        ("proj.w1", e, e),
        ("proj.b1", e, 1),
        ("proj.w2", e, e),
        ("proj.b2", e, 1),
        ("link.w1", e, 2 * e),
        ("link.b1", e, 1),
        ("link.w2", 1, e),
        ("link.b2", 1, 1),
        ("cls.w1", h1, e),
        ("cls.b1", h1, 1),
        ("cls.w2", h2, h1),
        ("cls.b2", h2, 1),
        ("cls.w3", 1, h2),
        ("cls.b3", 1, 1),
    ]
}

impl ParamIds {
    pub fn resolve(store: &ParameterStore, cfg: &ModelConfig) -> Result<Self> {
        let mut ids = Vec::new();
        for (name, rows, cols) in layout(cfg) {
            let id = store
                .find(name)
                .ok_or_else(|| Error::format("checkpoint", format!("missing tensor `{name}`")))?;
            let t = store.tensor(id);
            if (t.rows, t.cols) != (rows, cols) {
                return Err(Error::format(
                    "checkpoint",
                    format!("tensor `{name}` is {}x{}, config expects {rows}x{cols}", t.rows, t.cols),
                ));
            }
            ids.push(id);
        }
        let mut it = ids.into_iter();
        let mut next = || it.next().expect("layout length");
        Ok(ParamIds {
            msg_w: next(),
            msg_b: next(),
            gru_wz: next(),
            gru_uz: next(),
            gru_bz: next(),
            gru_wr: next(),
            gru_ur: next(),
            gru_br: next(),
            gru_wn: next(),
            gru_un: next(),
            gru_bn: next(),
            time_freq: next(),
            time_phase: next(),
            attn: next(),
            emb_w: next(),
            emb_b: next(),
            proj_w1: next(),
            proj_b1: next(),
            proj_w2: next(),
            proj_b2: next(),
            link_w1: next(),
            link_b1: next(),
            link_w2: next(),
            link_b2: next(),
            cls_w1: next(),
            cls_b1: next(),
            cls_w2: next(),
            cls_b2: next(),
            cls_w3: next(),
            cls_b3: next(),
        })
    }

    /// Tensors that belong to the node-classification decoder.
    pub fn classifier(&self) -> [ParamId; 6] {
        [self.cls_w1, self.cls_b1, self.cls_w2, self.cls_b2, self.cls_w3, self.cls_b3]
    }
}

/// All trainable state: encoder, projection head and both decoders.
#[derive(Clone, Debug)]
pub struct Model {
    pub cfg: ModelConfig,
    pub store: ParameterStore,
    pub ids: ParamIds,
}

impl Model {
    /// Glorot-uniform weights, zero biases and phases, log-spaced time
    /// frequencies from 1e4 down to 1e-1 (timestamps are normalised to the
    /// train span).
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParameterStore::new();
        for (name, rows, cols) in layout(&cfg) {
            let value = match name {
                "time.freq" => (0..rows)
                    .map(|i| {
                        let frac = if rows > 1 { i as f64 / (rows - 1) as f64 } else { 0.0 };
                        10f64.powf(4.0 - 5.0 * frac)
                    })
                    .collect(),
                "emb.attn" => glorot(&mut rng, rows, 1, rows),
                _ if cols == 1 => vec![0.0; rows],
                _ => glorot(&mut rng, rows, cols, rows * cols),
            };
            store.add(name, rows, cols, value);
        }
        let ids = ParamIds::resolve(&store, &cfg)?;
        Ok(Model { cfg, store, ids })
    }

    pub fn from_store(cfg: ModelConfig, store: ParameterStore) -> Result<Self> {
        let ids = ParamIds::resolve(&store, &cfg)?;
        Ok(Model { cfg, store, ids })
    }
}

fn glorot(rng: &mut ChaCha8Rng, fan_out: usize, fan_in: usize, count: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..count).map(|_| rng.random_range(-limit..limit)).collect()
}
