use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::graph::{build_item_knn_graph, build_norm_bipartite, layer_mean, CsrMatrix, ItemSemanticGraph};
use crate::alignment::SimilarityProfile;
use crate::data::InteractionDataset;
use crate::error::{Error, Result};
use crate::eval::ScoreProvider;
use crate::fusion::{self, FusionMethod, MlpFusionParams, LEAKY_SLOPE};
use crate::linalg::{dot, Mat};
use crate::store::ViewEmbeddingSet;

pub const DEFAULT_DIM: usize = 512;
pub const DIM_GRID: [usize; 4] = [128, 256, 512, 1024];
pub const DEFAULT_WEIGHT_DECAY: f64 = 1e-4;
pub const DEFAULT_LR: f64 = 5e-4;
pub const LR_GRID: [f64; 6] = [1e-4, 3e-4, 5e-4, 1e-5, 3e-5, 5e-5];
pub const ADAM_BETAS: (f64, f64) = (0.9, 0.999);
pub const ADAM_EPS: f64 = 1e-8;

/// Storage precision of parameters and optimizer moments between updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecConfig {
    pub dim: usize,
    pub layers_ui: usize,
    pub layers_ii: usize,
    pub knn_k: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs_max: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub seed: u64,
    pub precision: Precision,
}

impl Default for RecConfig {
    fn default() -> Self {
        Self {
            dim: DEFAULT_DIM,
            layers_ui: 2,
            layers_ii: 1,
            knn_k: 10,
            lr: DEFAULT_LR,
            weight_decay: DEFAULT_WEIGHT_DECAY,
            epochs_max: 1000,
            batch_size: 2048,
            patience: crate::eval::DEFAULT_PATIENCE,
            seed: 999,
            precision: Precision::F32,
        }
    }
}

impl RecConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.knn_k == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(Error::param("dim, k, batch size and patience must be >= 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::param(format!("learning rate must be > 0, got {}", self.lr)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::param("weight decay must be >= 0"));
        }
        Ok(())
    }
}

/// Frozen item-side inputs: fused text (or raw views for MLP fusion) and images.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemFeatures {
    pub method: FusionMethod,
    pub n_views: usize,
    pub view_dim: usize,
    /// Fused text, `N x text_dim`. Unused by the forward pass under MLP fusion.
    pub text: Mat,
    /// Concatenated raw views, `N x (C * D)`, present only for MLP fusion.
    pub views: Option<Mat>,
    pub image: Mat,
}

impl ItemFeatures {
    /// Static fusion of a store. `profiles` are required for SA.
    pub fn from_store(
        set: &ViewEmbeddingSet,
        profiles: Option<&[SimilarityProfile]>,
        method: FusionMethod,
        append_similarity: bool,
    ) -> Result<Self> {
        let n = set.n_items();
        let d = set.dim();
        let image = Mat::from_vec(n, d, fusion::upcast(set.image_data()));
        if method == FusionMethod::Mlp {
            if append_similarity {
                return Err(Error::param("similarity append is not supported with mlp fusion"));
            }
            let views = Mat::from_vec(n, set.n_views() * d, fusion::upcast(set.text_data()));
            return Ok(Self {
                method,
                n_views: set.n_views(),
                view_dim: d,
                text: Mat::zeros(n, d),
                views: Some(views),
                image,
            });
        }
        let mut reps = fusion::fuse_all(set, profiles, method, None)?;
        if append_similarity {
            let p = profiles.ok_or_else(|| Error::param("similarity append needs profiles"))?;
            fusion::append_similarity(&mut reps, p)?;
        }
        let width = reps.first().map_or(method.output_dim(set.n_views(), d), |r| r.text.len());
        let mut text = Vec::with_capacity(n * width);
        for r in reps {
            text.extend(r.text);
        }
        Ok(Self {
            method,
            n_views: set.n_views(),
            view_dim: d,
            text: Mat::from_vec(n, width, text),
            views: None,
            image,
        })
    }

    pub fn n_items(&self) -> usize {
        self.image.rows
    }

    pub fn text_dim(&self) -> usize {
        match self.method {
            FusionMethod::Mlp => self.view_dim,
            _ => self.text.cols,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Mat>,
    pub v: Vec<Mat>,
}

pub const USER_EMB: usize = 0;
pub const ITEM_EMB: usize = 1;
pub const TEXT_W: usize = 2;
pub const TEXT_B: usize = 3;
pub const IMAGE_W: usize = 4;
pub const IMAGE_B: usize = 5;
pub const MLP_W: usize = 6;
pub const MLP_B: usize = 7;

/// Propagation operators with their transposes for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Graphs {
    pub bipartite: CsrMatrix,
    pub bipartite_t: CsrMatrix,
    pub item: ItemSemanticGraph,
    pub item_t: CsrMatrix,
}

/// Final propagated user and item representations.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagated {
    pub users: Mat,
    pub items: Mat,
}

/// Intermediate values of one forward pass.
pub struct Forward {
    mlp_pre: Option<Mat>,
    mlp_text: Option<Mat>,
    pub final_reps: Mat,
}

/// Trainable state of the reference backbone plus its frozen inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct RecModel {
    pub config: RecConfig,
    pub n_users: usize,
    pub n_items: usize,
    pub features: ItemFeatures,
    pub graphs: Graphs,
    pub params: Vec<Param>,
    pub adam: AdamState,
    text_t: Option<Mat>,
    views_t: Option<Mat>,
    image_t: Mat,
}

fn xavier(rows: usize, cols: usize, rng: &mut impl Rng) -> Mat {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Mat::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect())
}

fn round_to_f32(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = *x as f32 as f64);
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-ln sigmoid(pos - neg)` in softplus form.
pub fn bpr_loss(score_pos: f64, score_neg: f64) -> f64 {
    softplus(score_neg - score_pos)
}

/// Derivatives of [`bpr_loss`] with respect to `(score_pos, score_neg)`.
pub fn bpr_loss_grad(score_pos: f64, score_neg: f64) -> (f64, f64) {
    let g = sigmoid(score_neg - score_pos);
    (-g, g)
}

impl RecModel {
    /// Initializes parameters from `config.seed` and builds both graphs.
    pub fn new(ds: &InteractionDataset, features: ItemFeatures, config: RecConfig) -> Result<Self> {
        config.validate()?;
        if features.n_items() != ds.n_items() {
            return Err(Error::param(format!(
                "features cover {} items, dataset has {}",
                features.n_items(),
                ds.n_items()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (m, n, d) = (ds.n_users(), ds.n_items(), config.dim);
        let text_dim = features.text_dim();
        let image_dim = features.image.cols;
        let mut params = vec![
            Param { name: "user_emb".into(), value: xavier(m, d, &mut rng) },
            Param { name: "item_emb".into(), value: xavier(n, d, &mut rng) },
            Param { name: "text_w".into(), value: xavier(text_dim, d, &mut rng) },
            Param { name: "text_b".into(), value: Mat::zeros(1, d) },
            Param { name: "image_w".into(), value: xavier(image_dim, d, &mut rng) },
            Param { name: "image_b".into(), value: Mat::zeros(1, d) },
        ];
        let mut features = features;
        if features.method == FusionMethod::Mlp {
            let mlp = MlpFusionParams::init(features.n_views, features.view_dim, &mut rng);
            let in_dim = mlp.in_dim();
            params.push(Param { name: "mlp_w".into(), value: Mat::from_vec(in_dim, mlp.dim, mlp.weight) });
            params.push(Param { name: "mlp_b".into(), value: Mat::from_vec(1, mlp.dim, mlp.bias) });
        }
        if config.precision == Precision::F32 {
            for p in &mut params {
                round_to_f32(&mut p.value.data);
            }
        }
        let adam = AdamState {
            step: 0,
            m: params.iter().map(|p| Mat::zeros(p.value.rows, p.value.cols)).collect(),
            v: params.iter().map(|p| Mat::zeros(p.value.rows, p.value.cols)).collect(),
        };

        // The item graph is built once from the initial fused text and stays frozen.
        if features.method == FusionMethod::Mlp {
            let views = features.views.as_ref().expect("mlp features carry raw views");
            let (_, out) = mlp_forward(views, &params[MLP_W].value, &params[MLP_B].value);
            features.text = out;
        }
        let item = build_item_knn_graph(&features.text, config.knn_k)?;
        let bipartite = build_norm_bipartite(ds)?;
        let graphs = Graphs {
            bipartite_t: bipartite.transpose(),
            bipartite,
            item_t: item.adjacency.transpose(),
            item,
        };
        let (text_t, views_t) = match &features.views {
            Some(v) => (None, Some(v.transpose())),
            None => (Some(features.text.transpose()), None),
        };
        let image_t = features.image.transpose();
        Ok(Self {
            config,
            n_users: m,
            n_items: n,
            features,
            graphs,
            params,
            adam,
            text_t,
            views_t,
            image_t,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.data.len()).sum()
    }

    pub fn forward(&self) -> Forward {
        let d = self.config.dim;
        let (mlp_pre, mlp_text) = match &self.features.views {
            Some(views) => {
                let (z, out) = mlp_forward(views, &self.params[MLP_W].value, &self.params[MLP_B].value);
                (Some(z), Some(out))
            }
            None => (None, None),
        };
        let text = mlp_text.as_ref().unwrap_or(&self.features.text);
        let mut h = self.params[ITEM_EMB].value.clone();
        let mut proj_t = text.matmul(&self.params[TEXT_W].value);
        proj_t.add_row_vector(self.params[TEXT_B].value.row(0));
        let mut proj_v = self.features.image.matmul(&self.params[IMAGE_W].value);
        proj_v.add_row_vector(self.params[IMAGE_B].value.row(0));
        h.add_assign(&proj_t);
        h.add_assign(&proj_v);
        debug_assert_eq!(h.cols, d);
        let hi = layer_mean(&self.graphs.item.adjacency, &h, self.config.layers_ii);
        let e0 = self.params[USER_EMB].value.vstack(&hi);
        let final_reps = layer_mean(&self.graphs.bipartite, &e0, self.config.layers_ui);
        Forward {
            mlp_pre,
            mlp_text,
            final_reps,
        }
    }

    pub fn propagate(&self) -> Propagated {
        let (users, items) = self.forward().final_reps.split_rows(self.n_users);
        Propagated { users, items }
    }

    /// Gradients of a loss given its gradient with respect to the final representations.
    pub fn backward(&self, fwd: &Forward, grad_final: &Mat) -> Vec<Mat> {
        let g_e0 = layer_mean(&self.graphs.bipartite_t, grad_final, self.config.layers_ui);
        let (g_user, g_hi) = g_e0.split_rows(self.n_users);
        let g_h = layer_mean(&self.graphs.item_t, &g_hi, self.config.layers_ii);
        let bias_grad = |g: &Mat| Mat::from_vec(1, g.cols, g.col_sums());
        let text_t_mlp;
        let text_t = match &fwd.mlp_text {
            Some(t) => {
                text_t_mlp = t.transpose();
                &text_t_mlp
            }
            None => self.text_t.as_ref().expect("static text transpose"),
        };
        let mut grads = vec![
            g_user,
            g_h.clone(),
            text_t.matmul(&g_h),
            bias_grad(&g_h),
            self.image_t.matmul(&g_h),
            bias_grad(&g_h),
        ];
        if let (Some(z), Some(views_t)) = (&fwd.mlp_pre, &self.views_t) {
            let mut g_z = g_h.matmul_t(&self.params[TEXT_W].value);
            g_z.data
                .iter_mut()
                .zip(&z.data)
                .for_each(|(g, &zz)| if zz < 0.0 { *g *= LEAKY_SLOPE });
            grads.push(views_t.matmul(&g_z));
            grads.push(bias_grad(&g_z));
        }
        grads
    }

    /// Mean BPR loss over `(user, pos, neg)` triples and its parameter gradients.
    pub fn loss_and_grad(&self, triples: &[(usize, usize, usize)]) -> (f64, Vec<Mat>) {
        let fwd = self.forward();
        let m = self.n_users;
        let fin = &fwd.final_reps;
        let mut g_final = Mat::zeros(fin.rows, fin.cols);
        let scale = 1.0 / triples.len().max(1) as f64;
        let mut loss = 0.0;
        for &(u, p, n) in triples {
            let (eu, ep, en) = (fin.row(u), fin.row(m + p), fin.row(m + n));
            let (sp, sn) = (dot(eu, ep), dot(eu, en));
            loss += bpr_loss(sp, sn);
            let (gp, gn) = bpr_loss_grad(sp, sn);
            let (gp, gn) = (gp * scale, gn * scale);
            let row_u: Vec<f64> = ep.iter().zip(en).map(|(a, b)| gp * a + gn * b).collect();
            let eu = eu.to_vec();
            g_final.row_mut(u).iter_mut().zip(&row_u).for_each(|(g, x)| *g += x);
            g_final.row_mut(m + p).iter_mut().zip(&eu).for_each(|(g, x)| *g += gp * x);
            g_final.row_mut(m + n).iter_mut().zip(&eu).for_each(|(g, x)| *g += gn * x);
        }
        (loss * scale, self.backward(&fwd, &g_final))
    }

    /// Loss only, used by finite-difference checks.
    pub fn loss(&self, triples: &[(usize, usize, usize)]) -> f64 {
        let fwd = self.forward();
        let m = self.n_users;
        let fin = &fwd.final_reps;
        let total: f64 = triples
            .iter()
            .map(|&(u, p, n)| bpr_loss(dot(fin.row(u), fin.row(m + p)), dot(fin.row(u), fin.row(m + n))))
            .sum();
        total / triples.len().max(1) as f64
    }

    /// One adaptive-moment step with decoupled weight decay scaled by the learning rate.
    pub fn apply_gradients(&mut self, grads: &[Mat]) {
        let (b1, b2) = ADAM_BETAS;
        self.adam.step += 1;
        let t = self.adam.step as i32;
        let (c1, c2) = (1.0 - b1.powi(t), 1.0 - b2.powi(t));
        let lr = self.config.lr;
        let wd = self.config.weight_decay;
        let f32_storage = self.config.precision == Precision::F32;
        for (k, g) in grads.iter().enumerate() {
            let p = &mut self.params[k].value.data;
            let m = &mut self.adam.m[k].data;
            let v = &mut self.adam.v[k].data;
            p.par_iter_mut()
                .zip(m.par_iter_mut())
                .zip(v.par_iter_mut())
                .zip(g.data.par_iter())
                .for_each(|(((p, m), v), &g)| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let update = (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS) + wd * *p;
                    *p -= lr * update;
                    if f32_storage {
                        *p = *p as f32 as f64;
                        *m = *m as f32 as f64;
                        *v = *v as f32 as f64;
                    }
                });
        }
    }

    pub fn params_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.data.iter().all(|x| x.is_finite()))
    }

    pub fn scorer(&self) -> ModelScorer {
        let Propagated { users, items } = self.propagate();
        ModelScorer { users, items }
    }
}

fn mlp_forward(views: &Mat, w: &Mat, b: &Mat) -> (Mat, Mat) {
    let mut z = views.matmul(w);
    z.add_row_vector(b.row(0));
    let out = Mat::from_vec(
        z.rows,
        z.cols,
        z.data.iter().map(|&x| fusion::leaky_relu(x, LEAKY_SLOPE)).collect(),
    );
    (z, out)
}

/// Dot-product scorer over cached final representations.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelScorer {
    pub users: Mat,
    pub items: Mat,
}

impl ModelScorer {
    pub fn predict_scores(&self, user: usize) -> Result<Vec<f64>> {
        if user >= self.users.rows {
            return Err(Error::UnknownUser(user));
        }
        let eu = self.users.row(user);
        Ok((0..self.items.rows).map(|i| dot(eu, self.items.row(i))).collect())
    }
}

impl ScoreProvider for ModelScorer {
    fn n_items(&self) -> usize {
        self.items.rows
    }

    fn scores(&self, user: usize) -> Result<Vec<f64>> {
        self.predict_scores(user)
    }
}
