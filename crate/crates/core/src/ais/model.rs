//! Embedder/classifier pair trained as a minimax game on inconsistent pairs.
//!
//! The embedder `F` has one input head per view and one per view pair (for
//! the fused sample), all feeding a shared trunk. The classifier `f` maps an
//! embedding to a difficulty probability. With `J = α·L_sim − β·L_adv`, each
//! batch takes `t_steps` descent steps on the embedder parameters followed by
//! one ascent step on the classifier parameters.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    adv_loss_with_grad, collect_inconsistent, sim_loss_with_grad, AisError, Difficulty,
    DifficultyAssignment, InconsistentPair,
};
use crate::numeric::{
    Activation, AdamConfig, AdamState, ForwardCache, Matrix, Mlp, MlpParams, MlpSpec,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AisConfig {
    /// Boundary factor of the difficulty rule.
    pub mu: f64,
    /// Hinge margin `m`.
    pub margin: f64,
    /// Pseudo-label factor `ℓ`.
    pub ell: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Embedder steps per classifier step.
    pub t_steps: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub hidden_width: usize,
    pub embed_width: usize,
}

impl Default for AisConfig {
    fn default() -> Self {
        Self {
            mu: crate::mvnet::GOLDEN_SECTION,
            margin: 0.05,
            ell: 0.5,
            alpha: 0.3,
            beta: 0.5,
            t_steps: 3,
            batch_size: 64,
            epochs: 100,
            hidden_width: 64,
            embed_width: 32,
        }
    }
}

impl AisConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.mu > 0.0 && self.mu < 1.0) {
            return Err(format!("mu must lie in (0, 1), got {}", self.mu));
        }
        if !(0.0..=1.0).contains(&self.ell) {
            return Err(format!("ell must lie in [0, 1], got {}", self.ell));
        }
        if !(self.margin >= 0.0) {
            return Err(format!("margin must be >= 0, got {}", self.margin));
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err("alpha and beta must be >= 0".into());
        }
        if self.t_steps == 0
            || self.batch_size == 0
            || self.hidden_width == 0
            || self.embed_width == 0
        {
            return Err("t_steps, batch_size, hidden_width and embed_width must be >= 1".into());
        }
        Ok(())
    }
}

/// A pair oriented so that `view_i` is the member labelled difficult.
#[derive(Debug, Clone, Copy)]
struct OrientedPair {
    sample: usize,
    view_i: usize,
    view_j: usize,
    view_a: usize,
    view_b: usize,
}

fn orient(pairs: &[InconsistentPair], assignment: &DifficultyAssignment) -> Vec<OrientedPair> {
    pairs
        .iter()
        .map(|p| {
            let (view_i, view_j) = if assignment.label(p.view_a, p.sample) == Difficulty::Difficult
            {
                (p.view_a, p.view_b)
            } else {
                (p.view_b, p.view_a)
            };
            OrientedPair {
                sample: p.sample,
                view_i,
                view_j,
                view_a: p.view_a,
                view_b: p.view_b,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub sim_loss: f64,
    pub adv_loss: f64,
    pub objective: f64,
    pub batches: usize,
}

/// Loss values and `∂J/∂θ` for one batch.
struct BatchEval {
    sim: f64,
    adv: f64,
    view_heads: Vec<Option<MlpParams>>,
    fused_heads: Vec<Option<MlpParams>>,
    trunk: MlpParams,
    classifier: MlpParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AisModel {
    pub config: AisConfig,
    n_views: usize,
    view_heads: Vec<Mlp>,
    /// One head per unordered view pair `(a, b)`, `a < b`, in lexicographic order.
    fused_heads: Vec<Mlp>,
    trunk: Mlp,
    classifier: Mlp,
    view_head_opt: Vec<AdamState>,
    fused_head_opt: Vec<AdamState>,
    trunk_opt: AdamState,
    classifier_opt: AdamState,
}

enum Head {
    View(usize),
    Fused(usize),
}

impl AisModel {
    pub fn new<R: Rng + ?Sized>(
        config: AisConfig,
        view_dims: &[usize],
        adam: AdamConfig,
        rng: &mut R,
    ) -> Self {
        let h = config.hidden_width;
        let e = config.embed_width;
        let head = |d: usize, rng: &mut R| {
            Mlp::new(
                MlpSpec::new(vec![d, h], vec![Activation::Tanh]).expect("valid head spec"),
                rng,
            )
        };
        let view_heads: Vec<Mlp> = view_dims.iter().map(|&d| head(d, rng)).collect();
        let mut fused_heads = Vec::new();
        for a in 0..view_dims.len() {
            for b in (a + 1)..view_dims.len() {
                fused_heads.push(head(view_dims[a] + view_dims[b], rng));
            }
        }
        let trunk = Mlp::new(
            MlpSpec::new(vec![h, h, e], vec![Activation::Tanh, Activation::Identity])
                .expect("valid trunk"),
            rng,
        );
        let classifier = Mlp::new(
            MlpSpec::new(
                vec![e, 32, 16, 1],
                vec![Activation::Tanh, Activation::Tanh, Activation::Sigmoid],
            )
            .expect("valid classifier"),
            rng,
        );
        let opt = |m: &Mlp| AdamState::new(adam, &m.params);
        Self {
            n_views: view_dims.len(),
            view_head_opt: view_heads.iter().map(opt).collect(),
            fused_head_opt: fused_heads.iter().map(opt).collect(),
            trunk_opt: opt(&trunk),
            classifier_opt: opt(&classifier),
            config,
            view_heads,
            fused_heads,
            trunk,
            classifier,
        }
    }

    fn pair_index(&self, a: usize, b: usize) -> usize {
        debug_assert!(a < b && b < self.n_views);
        // Pairs (0,1),(0,2),..,(0,V-1),(1,2),...
        a * (2 * self.n_views - a - 1) / 2 + (b - a - 1)
    }

    fn head(&self, h: &Head) -> &Mlp {
        match *h {
            Head::View(v) => &self.view_heads[v],
            Head::Fused(p) => &self.fused_heads[p],
        }
    }

    pub fn embed_view(&self, view: usize, rows: &Matrix) -> Result<Matrix, AisError> {
        let hidden = self.view_heads[view].predict(rows)?;
        Ok(self.trunk.predict(&hidden)?)
    }

    /// Embeds fused rows `[x_a | x_b]` for views `a < b`.
    pub fn embed_fused(&self, a: usize, b: usize, rows: &Matrix) -> Result<Matrix, AisError> {
        let hidden = self.fused_heads[self.pair_index(a, b)].predict(rows)?;
        Ok(self.trunk.predict(&hidden)?)
    }

    pub fn classify(&self, embeddings: &Matrix) -> Result<Vec<f64>, AisError> {
        Ok(self.classifier.predict(embeddings)?.into_vec())
    }

    fn fused_rows(views: &[Matrix], pairs: &[(usize, usize, usize)]) -> Matrix {
        let rows: Vec<Vec<f64>> = pairs
            .iter()
            .map(|&(s, a, b)| super::fuse_pair(views[a].row(s), views[b].row(s)))
            .collect();
        Matrix::from_rows(&rows).expect("fused rows share a width")
    }

    /// `f(F(x^{a,b}))` for every pair.
    pub fn fused_difficulty(
        &self,
        views: &[Matrix],
        pairs: &[InconsistentPair],
    ) -> Result<Vec<f64>, AisError> {
        pairs
            .iter()
            .map(|p| {
                let x = Self::fused_rows(views, &[(p.sample, p.view_a, p.view_b)]);
                let e = self.embed_fused(p.view_a, p.view_b, &x)?;
                Ok(self.classify(&e)?[0])
            })
            .collect()
    }

    /// Fraction of pairs on which the classifier gives both members the
    /// same thresholded verdict.
    pub fn agreement_rate(
        &self,
        views: &[Matrix],
        pairs: &[InconsistentPair],
    ) -> Result<f64, AisError> {
        if pairs.is_empty() {
            return Ok(1.0);
        }
        let mut agree = 0;
        for p in pairs {
            let fa = self
                .classify(&self.embed_view(p.view_a, &views[p.view_a].select_rows(&[p.sample]))?)?
                [0];
            let fb = self
                .classify(&self.embed_view(p.view_b, &views[p.view_b].select_rows(&[p.sample]))?)?
                [0];
            if (fa >= 0.5) == (fb >= 0.5) {
                agree += 1;
            }
        }
        Ok(agree as f64 / pairs.len() as f64)
    }

    /// Fraction of pairs whose fused embedding is strictly closer to the
    /// difficult member than to the easy one.
    pub fn fused_closer_rate(
        &self,
        views: &[Matrix],
        assignment: &DifficultyAssignment,
    ) -> Result<f64, AisError> {
        let pairs = collect_inconsistent(&assignment.views);
        if pairs.is_empty() {
            return Ok(1.0);
        }
        let mut hits = 0;
        for p in orient(&pairs.pairs, assignment) {
            let e_i = self.embed_view(p.view_i, &views[p.view_i].select_rows(&[p.sample]))?;
            let e_j = self.embed_view(p.view_j, &views[p.view_j].select_rows(&[p.sample]))?;
            let x = Self::fused_rows(views, &[(p.sample, p.view_a, p.view_b)]);
            let e_f = self.embed_fused(p.view_a, p.view_b, &x)?;
            let near = crate::numeric::squared_distance(e_f.row(0), e_i.row(0));
            let far = crate::numeric::squared_distance(e_f.row(0), e_j.row(0));
            if near < far {
                hits += 1;
            }
        }
        Ok(hits as f64 / pairs.len() as f64)
    }

    /// `J = α·L_sim − β·L_adv` on a batch, with gradients of `J` for every network.
    fn evaluate(&self, views: &[Matrix], batch: &[OrientedPair]) -> Result<BatchEval, AisError> {
        let k = batch.len();
        // Row layout of the embedding batch: [e_i; e_fused; e_j].
        let mut requests: Vec<(Head, Vec<usize>, Vec<Vec<f64>>)> = Vec::new();
        let mut push = |head: Head, pos: usize, row: Vec<f64>| {
            let found = requests.iter_mut().find(|(h, _, _)| match (h, &head) {
                (Head::View(a), Head::View(b)) => a == b,
                (Head::Fused(a), Head::Fused(b)) => a == b,
                _ => false,
            });
            match found {
                Some((_, positions, rows)) => {
                    positions.push(pos);
                    rows.push(row);
                }
                None => requests.push((head, vec![pos], vec![row])),
            }
        };
        for (r, p) in batch.iter().enumerate() {
            push(
                Head::View(p.view_i),
                r,
                views[p.view_i].row(p.sample).to_vec(),
            );
            push(
                Head::Fused(self.pair_index(p.view_a, p.view_b)),
                k + r,
                super::fuse_pair(views[p.view_a].row(p.sample), views[p.view_b].row(p.sample)),
            );
            push(
                Head::View(p.view_j),
                2 * k + r,
                views[p.view_j].row(p.sample).to_vec(),
            );
        }

        let h = self.config.hidden_width;
        let mut hidden = Matrix::zeros(3 * k, h);
        let mut head_caches: Vec<(Head, Vec<usize>, ForwardCache)> = Vec::new();
        for (head, positions, rows) in requests {
            let x = Matrix::from_rows(&rows)?;
            let (out, cache) = self.head(&head).forward(&x)?;
            for (i, &pos) in positions.iter().enumerate() {
                hidden.row_mut(pos).copy_from_slice(out.row(i));
            }
            head_caches.push((head, positions, cache));
        }
        let (emb, trunk_cache) = self.trunk.forward(&hidden)?;
        let idx = |range: std::ops::Range<usize>| range.collect::<Vec<_>>();
        let e_i = emb.select_rows(&idx(0..k));
        let e_f = emb.select_rows(&idx(k..2 * k));
        let e_j = emb.select_rows(&idx(2 * k..3 * k));

        let cls_in = emb.select_rows(
            &idx(0..k)
                .into_iter()
                .chain(2 * k..3 * k)
                .collect::<Vec<_>>(),
        );
        let (cls_out, cls_cache) = self.classifier.forward(&cls_in)?;
        let probs = cls_out.as_slice();
        let (adv, d_fi, d_fj) = adv_loss_with_grad(&probs[..k], &probs[k..], self.config.ell);
        let (sim, sim_grad) = sim_loss_with_grad(&e_i, &e_f, &e_j, self.config.margin);

        let (alpha, beta) = (self.config.alpha, self.config.beta);
        let d_out: Vec<f64> = d_fi.iter().chain(&d_fj).map(|g| -beta * g).collect();
        let (classifier_grad, d_cls_in) = self
            .classifier
            .backward(&cls_cache, &Matrix::column(&d_out))?;

        let w = self.config.embed_width;
        let mut d_emb = Matrix::zeros(3 * k, w);
        for r in 0..k {
            for c in 0..w {
                d_emb[(r, c)] = alpha * sim_grad.e_i[(r, c)] + d_cls_in[(r, c)];
                d_emb[(k + r, c)] = alpha * sim_grad.e_fused[(r, c)];
                d_emb[(2 * k + r, c)] = alpha * sim_grad.e_j[(r, c)] + d_cls_in[(k + r, c)];
            }
        }
        let (trunk_grad, d_hidden) = self.trunk.backward(&trunk_cache, &d_emb)?;

        let mut view_heads = vec![None; self.view_heads.len()];
        let mut fused_heads = vec![None; self.fused_heads.len()];
        for (head, positions, cache) in head_caches {
            let upstream = d_hidden.select_rows(&positions);
            let (g, _) = self.head(&head).backward(&cache, &upstream)?;
            match head {
                Head::View(v) => view_heads[v] = Some(g),
                Head::Fused(p) => fused_heads[p] = Some(g),
            }
        }
        Ok(BatchEval {
            sim,
            adv,
            view_heads,
            fused_heads,
            trunk: trunk_grad,
            classifier: classifier_grad,
        })
    }

    fn embedder_step(&mut self, eval: &BatchEval) -> Result<(), AisError> {
        for (v, g) in eval.view_heads.iter().enumerate() {
            if let Some(g) = g {
                self.view_head_opt[v].step(&mut self.view_heads[v].params, g)?;
            }
        }
        for (p, g) in eval.fused_heads.iter().enumerate() {
            if let Some(g) = g {
                self.fused_head_opt[p].step(&mut self.fused_heads[p].params, g)?;
            }
        }
        self.trunk_opt.step(&mut self.trunk.params, &eval.trunk)?;
        Ok(())
    }

    /// One pass over the inconsistent pairs of `assignment` in seeded,
    /// without-replacement batches. Returns zeroed stats when there are no pairs.
    pub fn minimax_epoch<R: Rng + ?Sized>(
        &mut self,
        views: &[Matrix],
        assignment: &DifficultyAssignment,
        rng: &mut R,
    ) -> Result<EpochStats, AisError> {
        let pairs = collect_inconsistent(&assignment.views);
        let mut oriented = orient(&pairs.pairs, assignment);
        if oriented.is_empty() {
            return Ok(EpochStats::default());
        }
        oriented.shuffle(rng);
        let mut stats = EpochStats::default();
        for (batch_id, batch) in oriented.chunks(self.config.batch_size).enumerate() {
            for _ in 0..self.config.t_steps {
                let eval = self.evaluate(views, batch)?;
                if !(eval.sim.is_finite() && eval.adv.is_finite()) {
                    return Err(AisError::NonFiniteLoss { batch: batch_id });
                }
                self.embedder_step(&eval)?;
            }
            let eval = self.evaluate(views, batch)?;
            if !(eval.sim.is_finite() && eval.adv.is_finite()) {
                return Err(AisError::NonFiniteLoss { batch: batch_id });
            }
            // Ascent on J: descend along -∂J/∂θ_fc.
            self.classifier_opt
                .step(&mut self.classifier.params, &eval.classifier.scaled(-1.0))?;
            stats.sim_loss += eval.sim;
            stats.adv_loss += eval.adv;
            stats.batches += 1;
        }
        let b = stats.batches as f64;
        stats.sim_loss /= b;
        stats.adv_loss /= b;
        stats.objective = self.config.alpha * stats.sim_loss - self.config.beta * stats.adv_loss;
        Ok(stats)
    }

    /// Runs `config.epochs` minimax epochs.
    pub fn train<R: Rng + ?Sized>(
        &mut self,
        views: &[Matrix],
        assignment: &DifficultyAssignment,
        rng: &mut R,
    ) -> Result<Vec<EpochStats>, AisError> {
        (0..self.config.epochs)
            .map(|_| self.minimax_epoch(views, assignment, rng))
            .collect()
    }
}

/// Test hooks exposing the batch objective and its gradients.
#[doc(hidden)]
pub mod probe {
    use super::*;

    pub struct Gradients {
        pub view_heads: Vec<Option<MlpParams>>,
        pub fused_heads: Vec<Option<MlpParams>>,
        pub trunk: MlpParams,
        pub classifier: MlpParams,
    }

    /// Which parameter set a perturbation targets.
    #[derive(Debug, Clone, Copy)]
    pub enum Target {
        ViewHead(usize),
        FusedHead(usize),
        Trunk,
        Classifier,
    }

    /// `(J, L_sim, L_adv, ∂J/∂θ)` over all inconsistent pairs of `assignment`.
    pub fn objective(
        model: &AisModel,
        views: &[Matrix],
        assignment: &DifficultyAssignment,
    ) -> Result<(f64, f64, f64, Gradients), AisError> {
        let pairs = collect_inconsistent(&assignment.views);
        let oriented = orient(&pairs.pairs, assignment);
        let eval = model.evaluate(views, &oriented)?;
        let j = model.config.alpha * eval.sim - model.config.beta * eval.adv;
        Ok((
            j,
            eval.sim,
            eval.adv,
            Gradients {
                view_heads: eval.view_heads,
                fused_heads: eval.fused_heads,
                trunk: eval.trunk,
                classifier: eval.classifier,
            },
        ))
    }

    pub fn params(model: &AisModel, target: Target) -> &MlpParams {
        match target {
            Target::ViewHead(v) => &model.view_heads[v].params,
            Target::FusedHead(p) => &model.fused_heads[p].params,
            Target::Trunk => &model.trunk.params,
            Target::Classifier => &model.classifier.params,
        }
    }

    pub fn params_mut(model: &mut AisModel, target: Target) -> &mut MlpParams {
        match target {
            Target::ViewHead(v) => &mut model.view_heads[v].params,
            Target::FusedHead(p) => &mut model.fused_heads[p].params,
            Target::Trunk => &mut model.trunk.params,
            Target::Classifier => &mut model.classifier.params,
        }
    }

    pub fn gradient(g: &Gradients, target: Target) -> Option<&MlpParams> {
        match target {
            Target::ViewHead(v) => g.view_heads[v].as_ref(),
            Target::FusedHead(p) => g.fused_heads[p].as_ref(),
            Target::Trunk => Some(&g.trunk),
            Target::Classifier => Some(&g.classifier),
        }
    }
}
