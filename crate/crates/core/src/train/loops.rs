//! The alternating training loops.
//!
//! Transport-coupled penalties alternate at epoch granularity: the run's
//! first batch solves the initial coupling, each epoch pools the raw cost
//! matrices its steps compute anyway, and the next epoch re-solves the
//! coupling once from the pooled mean, then holds it for all of its steps.
//! Parameters therefore descend a stationary objective between solves, and
//! each solve sees a cost estimate whose projection and batch noise is
//! averaged down by a full epoch of draws. Re-solving every step on single
//! batches instead lets the few-projection noise flip the coupling
//! mid-descent, and the assignment structure it carries dissolves. Every
//! random draw (parameter init, batch order, projection directions) comes
//! from per-purpose seeds derived from the run seed in a fixed order, so
//! identical inputs give bitwise-identical checkpoints and reports.

use std::time::Instant;

use ndarray::{s, Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{DataSplit, MultiViewDataset};
use crate::nn::{
    accumulate, reconstruction_loss, softmax_xent, Adam, ClassifierHead, DecoderStack,
    EncoderStack, GradStore, MlpCache, ReconstructionOutput,
};
use crate::ot::{sample_projections, ProjectionSet, TransportPlan};
use crate::regularizers::{
    evaluate, hot_pairwise_with_plan, hot_reference_with_plan, solve_pairwise_coupling,
    solve_reference_coupling, ReferenceSet, RegError, RegularizerInputs, RegularizerKind,
    RegularizerOutput,
};

use super::config::TrainConfig;
use super::model::{
    accumulate_mlp_grads, concat_rows, projection_param, reference_param, TrainedModel,
    CLASSIFIER_BIAS, CLASSIFIER_WEIGHT,
};
use super::report::{EpochRecord, TrainReport};
use super::{Result, TrainError};

/// Per-purpose RNG seeds derived from the run seed in a fixed order, so
/// adding one consumer never shifts another's stream.
struct SeedPlan {
    init: u64,
    labeled_batches: u64,
    unlabeled_batches: u64,
    projections: u64,
    valid_projections: u64,
}

impl SeedPlan {
    fn derive(seed: u64) -> Self {
        let mut master = ChaCha8Rng::seed_from_u64(seed);
        SeedPlan {
            init: master.random(),
            labeled_batches: master.random(),
            unlabeled_batches: master.random(),
            projections: master.random(),
            valid_projections: master.random(),
        }
    }
}

/// A distinct stream seed per view, spread by a golden-ratio stride.
fn view_stream_seed(base: u64, view: usize) -> u64 {
    base.wrapping_add((view as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Seeded mini-batch index source over the pool `0..pool_size`.
///
/// Without replacement, the pool is shuffled and consumed in contiguous
/// blocks; a tail shorter than one batch is dropped and the pool reshuffled.
/// When the pool is smaller than the batch, every draw samples uniformly
/// with replacement instead.
struct IndexStream {
    pool: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
    batch: usize,
    with_replacement: bool,
}

impl IndexStream {
    fn new(pool_size: usize, batch: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pool: Vec<usize> = (0..pool_size).collect();
        let with_replacement = pool_size < batch;
        if !with_replacement {
            pool.shuffle(&mut rng);
        }
        IndexStream {
            pool,
            cursor: 0,
            rng,
            batch,
            with_replacement,
        }
    }

    fn next_batch(&mut self) -> Vec<usize> {
        if self.with_replacement {
            return (0..self.batch)
                .map(|_| self.pool[self.rng.random_range(0..self.pool.len())])
                .collect();
        }
        if self.cursor + self.batch > self.pool.len() {
            self.pool.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let slice = self.pool[self.cursor..self.cursor + self.batch].to_vec();
        self.cursor += self.batch;
        slice
    }
}

/// Batch index sources for a multi-view pool: one shared stream when the
/// pool is sample-aligned, mutually independent per-view streams otherwise.
enum Streams {
    Shared(IndexStream),
    PerView(Vec<IndexStream>),
}

impl Streams {
    fn new(aligned: bool, views: usize, pool_size: usize, batch: usize, base_seed: u64) -> Self {
        if aligned {
            Streams::Shared(IndexStream::new(pool_size, batch, base_seed))
        } else {
            Streams::PerView(
                (0..views)
                    .map(|v| IndexStream::new(pool_size, batch, view_stream_seed(base_seed, v)))
                    .collect(),
            )
        }
    }

    /// One index vector per view.
    fn draw(&mut self, views: usize) -> Vec<Vec<usize>> {
        match self {
            Streams::Shared(stream) => {
                let indices = stream.next_batch();
                vec![indices; views]
            }
            Streams::PerView(streams) => streams.iter_mut().map(|s| s.next_batch()).collect(),
        }
    }
}

/// A plan built directly from explicit weights (solver-independent state,
/// e.g. the documented uniform initial couplings).
fn manual_plan(weights: Array2<f64>, p: Array1<f64>, q: Array1<f64>, beta: f64) -> TransportPlan {
    let rows = weights.sum_axis(Axis(1));
    let cols = weights.sum_axis(Axis(0));
    let marginal_residual = rows
        .iter()
        .zip(p.iter())
        .chain(cols.iter().zip(q.iter()))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    TransportPlan {
        weights,
        p,
        q,
        scaling: None,
        beta,
        iterations: 0,
        marginal_residual,
    }
}

/// The documented initial coupling for the transport-based penalties:
/// off-diagonal-uniform for the pairwise penalty, fully uniform for the
/// reference penalty. Returns `None` for penalties without a coupling.
fn initial_plan(kind: RegularizerKind, views: usize, config: &TrainConfig) -> Option<TransportPlan> {
    let s = views as f64;
    match kind {
        RegularizerKind::HotPairwise => {
            let mut weights = Array2::from_elem((views, views), 1.0 / (s * (s - 1.0)));
            for i in 0..views {
                weights[[i, i]] = 0.0;
            }
            let marginal = Array1::from_elem(views, 1.0 / s);
            Some(manual_plan(weights, marginal.clone(), marginal, config.beta))
        }
        RegularizerKind::HotReference => {
            let k = config.num_clusters;
            let weights = Array2::from_elem((views, k), 1.0 / (s * k as f64));
            let p = Array1::from_elem(views, 1.0 / s);
            let q = Array1::from_elem(k, 1.0 / k as f64);
            Some(manual_plan(weights, p, q, config.beta))
        }
        _ => None,
    }
}

/// Forward pass of every view's encoder on its batch.
fn encode_batches(
    encoders: &EncoderStack,
    batches: &[Array2<f64>],
) -> Result<(Vec<Array2<f64>>, Vec<MlpCache>)> {
    let mut encoded = Vec::with_capacity(batches.len());
    let mut caches = Vec::with_capacity(batches.len());
    for (view, batch) in batches.iter().enumerate() {
        let (out, cache) = encoders.encoder(view).forward(batch)?;
        encoded.push(out);
        caches.push(cache);
    }
    Ok((encoded, caches))
}

/// Maps every view's encoder output into the shared comparison space.
fn project_all(encoders: &EncoderStack, encoded: &[Array2<f64>]) -> Result<Vec<Array2<f64>>> {
    let mut latents = Vec::with_capacity(encoded.len());
    for (view, out) in encoded.iter().enumerate() {
        latents.push(encoders.project(view, out)?);
    }
    Ok(latents)
}

/// Backward pass for the unlabeled-batch loss terms.
///
/// The penalty's latent gradients are chained through each view's projection
/// (contributing both the projection gradient and an encoder-output
/// gradient); reconstruction gradients land on the encoder outputs directly.
/// Both are combined so each view's encoder backward runs exactly once.
fn backward_unlabeled(
    encoders: &EncoderStack,
    caches: &[MlpCache],
    encoded: &[Array2<f64>],
    penalty: Option<(&RegularizerOutput, f64)>,
    recon: Option<(&ReconstructionOutput, f64)>,
    grads: &mut GradStore,
) -> Result<()> {
    for view in 0..encoders.num_views() {
        let mut grad_encoded: Option<Array2<f64>> = None;
        if let Some((out, gamma)) = penalty {
            let latent_grad = &out.latent_grads[view];
            accumulate(
                grads,
                &projection_param(view),
                latent_grad.dot(&encoded[view].t()).mapv(|v| v * gamma),
            );
            let chained = encoders
                .projection(view)
                .t()
                .dot(latent_grad)
                .mapv(|v| v * gamma);
            grad_encoded = Some(chained);
        }
        if let Some((rec, tau)) = recon {
            let scaled = rec.latent_grads[view].mapv(|v| v * tau);
            grad_encoded = Some(match grad_encoded {
                Some(g) => g + scaled,
                None => scaled,
            });
        }
        let Some(grad_encoded) = grad_encoded else {
            continue;
        };
        let (mlp_grads, _) = encoders.encoder(view).backward(&caches[view], &grad_encoded)?;
        accumulate_mlp_grads(grads, "encoder", view, &mlp_grads, 1.0);
    }
    if let Some((out, gamma)) = penalty {
        for (k, grad) in out.ref_grads.iter().enumerate() {
            accumulate(grads, &reference_param(k), grad.mapv(|v| v * gamma));
        }
    }
    if let Some((rec, tau)) = recon {
        for (view, grad) in rec.decoder_grads.iter().enumerate() {
            accumulate_mlp_grads(grads, "decoder", view, grad, tau);
        }
    }
    Ok(())
}

/// Evaluates the configured penalty on explicit batches with the given
/// projections (validation metric and final-plan recomputation).
fn penalty_on_batches(
    model: &TrainedModel,
    kind: RegularizerKind,
    batches: &[Array2<f64>],
    proj: &ProjectionSet,
    config: &TrainConfig,
) -> Result<RegularizerOutput> {
    let (encoded, _) = encode_batches(&model.encoders, batches)?;
    let latents = project_all(&model.encoders, &encoded)?;
    let inputs = RegularizerInputs {
        latents: &latents,
        refs: model.references.as_ref(),
        proj,
        alpha: config.alpha,
        beta: config.beta,
        sinkhorn_iters: config.sinkhorn_iters,
        aligned: true,
    };
    Ok(evaluate(kind, &inputs)?)
}

fn check_same_views(reference: &MultiViewDataset, other: &MultiViewDataset, what: &str) -> Result<()> {
    if reference.num_views() != other.num_views() {
        return Err(TrainError::DatasetMismatch(format!(
            "{what} pool has {} views, expected {}",
            other.num_views(),
            reference.num_views()
        )));
    }
    for view in 0..reference.num_views() {
        if reference.view_dim(view) != other.view_dim(view) {
            return Err(TrainError::DatasetMismatch(format!(
                "{what} pool view {view} has {} features, expected {}",
                other.view_dim(view),
                reference.view_dim(view)
            )));
        }
    }
    Ok(())
}

fn pairwise_kind(kind: RegularizerKind) -> bool {
    matches!(
        kind,
        RegularizerKind::Lscca | RegularizerKind::SwPairwise | RegularizerKind::HotPairwise
    )
}

/// The first full batch of the pool, one matrix per view, when the pool is
/// large enough to fill one.
fn leading_batch(pool: &MultiViewDataset, batch: usize) -> Option<Vec<Array2<f64>>> {
    if pool.num_samples() < batch {
        return None;
    }
    let indices: Vec<usize> = (0..batch).collect();
    Some(
        (0..pool.num_views())
            .map(|view| pool.batch(view, &indices))
            .collect(),
    )
}

fn finish_report(
    records: Vec<EpochRecord>,
    final_plan: Option<TransportPlan>,
    config: &TrainConfig,
    start: Instant,
    selected_epoch: Option<usize>,
) -> TrainReport {
    TrainReport {
        records,
        final_plan,
        seed: config.seed,
        config: config.clone(),
        wall_clock_secs: start.elapsed().as_secs_f64(),
        selected_epoch,
    }
}

/// One training step's penalty evaluation. With `held = None` (the very
/// first step of a run) the transport-coupled penalties solve a fresh
/// coupling, which the caller then holds; with a held plan they re-weight
/// the step's batch under it. Penalties without a coupling ignore `held`.
fn step_penalty(
    kind: RegularizerKind,
    inputs: &RegularizerInputs<'_>,
    held: Option<&TransportPlan>,
) -> Result<RegularizerOutput> {
    match (kind, held) {
        (RegularizerKind::HotPairwise, Some(plan)) => {
            Ok(hot_pairwise_with_plan(inputs.latents, inputs.proj, plan, inputs.alpha)?)
        }
        (RegularizerKind::HotReference, Some(plan)) => {
            let refs = inputs.refs.ok_or(RegError::MissingReferences)?;
            Ok(hot_reference_with_plan(
                inputs.latents,
                refs,
                inputs.proj,
                plan,
                inputs.alpha,
            )?)
        }
        _ => Ok(evaluate(kind, inputs)?),
    }
}

/// Pools the per-batch cost estimates seen during an epoch so the next
/// epoch's coupling solves on their mean. One batch's few-projection
/// distance estimate is far too noisy to re-solve the coupling on — the
/// matching it encodes flips from batch to batch and the views chase a
/// different assignment every step.
struct CostPool {
    sum: Option<Array2<f64>>,
    count: usize,
}

impl CostPool {
    fn new() -> Self {
        CostPool { sum: None, count: 0 }
    }

    /// Adds one batch's raw cost matrix. The pairwise penalty's fresh solve
    /// reports a diagonal-shifted matrix, so the caller zeroes the diagonal
    /// (raw pairwise diagonals are zero by construction) before adding.
    fn add(&mut self, raw: Array2<f64>) {
        match &mut self.sum {
            Some(sum) => *sum += &raw,
            None => self.sum = Some(raw),
        }
        self.count += 1;
    }

    fn take_mean(&mut self) -> Option<Array2<f64>> {
        let mean = self.sum.take().map(|sum| sum / self.count as f64);
        self.count = 0;
        mean
    }
}

// Temporary calibration trace; remove before ship.
fn trace_plan(epoch: usize, mean: &Array2<f64>, plan: &TransportPlan) {
    if std::env::var_os("HOTMV_TRACE").is_none() {
        return;
    }
    let s = plan.weights.nrows();
    let mut line = format!("epoch {epoch:3}:");
    for row in 0..s {
        let w = plan.weights.row(row);
        let (mut arg, mut best) = (0, f64::MIN);
        for (k, &v) in w.iter().enumerate() {
            if v > best {
                best = v;
                arg = k;
            }
        }
        let crisp = best * s as f64;
        let c = mean.row(row);
        let mut sorted: Vec<f64> = c.iter().copied().collect();
        sorted.sort_by(f64::total_cmp);
        let gap = if sorted.len() > 1 { sorted[1] - sorted[0] } else { 0.0 };
        line.push_str(&format!(" v{row}->r{arg}({crisp:.2},g{gap:.2})"));
    }
    eprintln!("{line}");
}

/// Re-solves the coupling for a transport penalty from a pooled cost mean.
fn solve_epoch_plan(
    kind: RegularizerKind,
    mean_cost: &Array2<f64>,
    config: &TrainConfig,
) -> Result<Option<TransportPlan>> {
    Ok(match kind {
        RegularizerKind::HotPairwise => Some(solve_pairwise_coupling(
            mean_cost,
            config.beta,
            config.sinkhorn_iters,
        )?),
        RegularizerKind::HotReference => Some(solve_reference_coupling(
            mean_cost,
            config.beta,
            config.sinkhorn_iters,
        )?),
        _ => None,
    })
}

/// Extracts a step's raw cost matrix for pooling: zero-diagonal pairwise
/// distances or view-to-reference distances.
fn pool_cost(kind: RegularizerKind, out: &RegularizerOutput, pool: &mut CostPool) {
    if let Some(cost) = &out.cost {
        let mut raw = cost.costs().clone();
        if kind == RegularizerKind::HotPairwise {
            for i in 0..raw.nrows() {
                raw[[i, i]] = 0.0;
            }
        }
        pool.add(raw);
    }
}

/// Trains encoders, projections, and (for reference penalties) references on
/// an unlabeled pool by alternating per-epoch coupling solves with per-batch
/// Adam updates.
///
/// `valid`, when given and at least one batch wide, drives checkpoint
/// selection: the penalty is measured on its leading batch with a fixed
/// projection set after every epoch, and the best epoch's parameters are
/// returned. For transport-based penalties the reported final plan is
/// recomputed on that held-out batch with the selected parameters.
pub fn train_unsupervised(
    train: &MultiViewDataset,
    valid: Option<&MultiViewDataset>,
    config: &TrainConfig,
) -> Result<(TrainedModel, TrainReport)> {
    config.validate()?;
    let start = Instant::now();
    let kind = config.regularizer;
    let views = train.num_views();
    if pairwise_kind(kind) && views < 2 {
        return Err(RegError::TooFewViews {
            needed: 2,
            got: views,
        }
        .into());
    }
    if kind.requires_alignment() && !train.aligned() {
        return Err(TrainError::NeedsAlignedData(kind));
    }
    if let Some(valid) = valid {
        check_same_views(train, valid, "validation")?;
    }

    let seeds = SeedPlan::derive(config.seed);
    let mut init_rng = ChaCha8Rng::seed_from_u64(seeds.init);
    let mut model = TrainedModel {
        encoders: EncoderStack::new(
            &train.view_dims(),
            config.hidden_width,
            config.encoder_out,
            config.shared_dim,
            &mut init_rng,
        )?,
        classifier: None,
        decoders: None,
        references: kind
            .reference_count(config.num_clusters)
            .map(|k| ReferenceSet::init(k, config.shared_dim, config.batch_size, &mut init_rng)),
    };

    if kind == RegularizerKind::None {
        return Ok((model, finish_report(Vec::new(), None, config, start, None)));
    }

    let pool_size = train.num_samples();
    let steps_per_epoch = pool_size / config.batch_size;
    if steps_per_epoch == 0 {
        return Err(TrainError::BatchTooLarge {
            batch: config.batch_size,
            pool: pool_size,
        });
    }

    let mut streams = Streams::new(
        train.aligned(),
        views,
        pool_size,
        config.batch_size,
        seeds.unlabeled_batches,
    );
    let mut proj_rng = ChaCha8Rng::seed_from_u64(seeds.projections);
    let valid_proj = sample_projections(
        config.num_projections,
        config.shared_dim,
        seeds.valid_projections,
    )?;
    let valid_batch = valid.and_then(|v| leading_batch(v, config.batch_size));

    let mut adam = Adam::new(config.lr);
    let transport_kind = matches!(
        kind,
        RegularizerKind::HotPairwise | RegularizerKind::HotReference
    );
    let mut current_plan = initial_plan(kind, views, config);
    let mut solved_once = false;
    let mut pool = CostPool::new();
    let mut records = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, TrainedModel)> = None;

    for epoch in 1..=config.epochs {
        if let Some(mean) = pool.take_mean() {
            if let Some(plan) = solve_epoch_plan(kind, &mean, config)? {
                trace_plan(epoch, &mean, &plan);
                current_plan = Some(plan);
            }
        }
        let mut loss_sum = 0.0;
        for _step in 0..steps_per_epoch {
            let index_sets = streams.draw(views);
            let batches: Vec<Array2<f64>> = index_sets
                .iter()
                .enumerate()
                .map(|(view, indices)| train.batch(view, indices))
                .collect();
            let (encoded, caches) = encode_batches(&model.encoders, &batches)?;
            let latents = project_all(&model.encoders, &encoded)?;
            let proj = sample_projections(
                config.num_projections,
                config.shared_dim,
                proj_rng.random(),
            )?;
            let inputs = RegularizerInputs {
                latents: &latents,
                refs: model.references.as_ref(),
                proj: &proj,
                alpha: config.alpha,
                beta: config.beta,
                sinkhorn_iters: config.sinkhorn_iters,
                aligned: train.aligned(),
            };
            let held = if solved_once { current_plan.as_ref() } else { None };
            let out = step_penalty(kind, &inputs, held)?;
            let mut grads = GradStore::new();
            backward_unlabeled(
                &model.encoders,
                &caches,
                &encoded,
                Some((&out, 1.0)),
                None,
                &mut grads,
            )?;
            let mut params = model.parameter_map();
            adam.step(&grads, &mut params)?;
            loss_sum += out.loss;
            if transport_kind {
                pool_cost(kind, &out, &mut pool);
            }
            if let Some(plan) = out.plan {
                current_plan = Some(plan);
                solved_once = true;
            }
        }
        let coupling = loss_sum / steps_per_epoch as f64;
        let valid_loss = match &valid_batch {
            Some(batches) => Some(penalty_on_batches(&model, kind, batches, &valid_proj, config)?.loss),
            None => None,
        };
        if let Some(v) = valid_loss {
            if best.as_ref().is_none_or(|(b, _, _)| v < *b) {
                best = Some((v, epoch, model.clone()));
            }
        }
        records.push(EpochRecord {
            epoch,
            task: None,
            coupling,
            reconstruction: None,
            valid: valid_loss,
        });
    }

    let mut selected_epoch = None;
    if let Some((_, epoch, snapshot)) = best {
        selected_epoch = Some(epoch);
        model = snapshot;
    }

    if transport_kind {
        if let Some(batches) = &valid_batch {
            let out = penalty_on_batches(&model, kind, batches, &valid_proj, config)?;
            if let Some(plan) = out.plan {
                current_plan = Some(plan);
            }
        }
    }
    let final_plan = transport_kind.then_some(current_plan).flatten();

    Ok((
        model,
        finish_report(records, final_plan, config, start, selected_epoch),
    ))
}

/// Trains the full semisupervised objective: cross-entropy on labeled
/// aligned batches, plus the weighted multi-view penalty and optional
/// autoencoder reconstruction on unlabeled per-view batches, all updated
/// jointly each step.
///
/// Epochs iterate over the unlabeled pool; the labeled pool is resampled
/// with replacement when smaller than one batch. Checkpoint selection uses
/// cross-entropy on the full validation pool when it is nonempty and
/// labeled.
pub fn train_semisupervised(
    split: &DataSplit,
    config: &TrainConfig,
) -> Result<(TrainedModel, TrainReport)> {
    config.validate()?;
    let start = Instant::now();
    let kind = config.regularizer;
    let labeled = &split.train_labeled;
    let unlabeled = &split.train_unlabeled;
    let views = labeled.num_views();

    if labeled.num_samples() == 0 {
        return Err(TrainError::NoLabeledPool);
    }
    if unlabeled.num_samples() == 0 {
        return Err(TrainError::NoUnlabeledPool);
    }
    if labeled.labels().is_none() {
        return Err(TrainError::MissingLabels);
    }
    let classes = labeled.num_classes().ok_or(TrainError::MissingClassCount)?;
    if !labeled.aligned() {
        return Err(TrainError::DatasetMismatch(
            "the labeled pool must be sample-aligned".into(),
        ));
    }
    check_same_views(labeled, unlabeled, "unlabeled")?;
    check_same_views(labeled, &split.valid, "validation")?;

    let use_penalty = config.gamma > 0.0 && kind != RegularizerKind::None;
    if use_penalty {
        if pairwise_kind(kind) && views < 2 {
            return Err(RegError::TooFewViews {
                needed: 2,
                got: views,
            }
            .into());
        }
        if kind.requires_alignment() && !unlabeled.aligned() {
            return Err(TrainError::NeedsAlignedData(kind));
        }
    }

    let steps_per_epoch = unlabeled.num_samples() / config.batch_size;
    if steps_per_epoch == 0 {
        return Err(TrainError::BatchTooLarge {
            batch: config.batch_size,
            pool: unlabeled.num_samples(),
        });
    }

    let seeds = SeedPlan::derive(config.seed);
    let mut init_rng = ChaCha8Rng::seed_from_u64(seeds.init);
    let encoders = EncoderStack::new(
        &labeled.view_dims(),
        config.hidden_width,
        config.encoder_out,
        config.shared_dim,
        &mut init_rng,
    )?;
    let classifier = ClassifierHead::new(views * config.encoder_out, classes, &mut init_rng);
    let decoders = if config.use_autoencoder {
        Some(DecoderStack::new(
            &labeled.view_dims(),
            config.hidden_width,
            config.encoder_out,
            &mut init_rng,
        )?)
    } else {
        None
    };
    let references = kind
        .reference_count(config.num_clusters)
        .map(|k| ReferenceSet::init(k, config.shared_dim, config.batch_size, &mut init_rng));
    let mut model = TrainedModel {
        encoders,
        classifier: Some(classifier),
        decoders,
        references,
    };

    let mut labeled_stream = IndexStream::new(
        labeled.num_samples(),
        config.batch_size,
        seeds.labeled_batches,
    );
    let mut unlabeled_streams = Streams::new(
        unlabeled.aligned(),
        views,
        unlabeled.num_samples(),
        config.batch_size,
        seeds.unlabeled_batches,
    );
    let mut proj_rng = ChaCha8Rng::seed_from_u64(seeds.projections);
    let valid_proj = sample_projections(
        config.num_projections,
        config.shared_dim,
        seeds.valid_projections,
    )?;
    let valid_usable = split.valid.num_samples() > 0 && split.valid.labels().is_some();

    let mut adam = Adam::new(config.lr);
    let transport_kind = matches!(
        kind,
        RegularizerKind::HotPairwise | RegularizerKind::HotReference
    );
    let mut current_plan = if use_penalty {
        initial_plan(kind, views, config)
    } else {
        None
    };
    let mut solved_once = false;
    let mut pool = CostPool::new();
    let mut records = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, TrainedModel)> = None;
    let out_dim = config.encoder_out;

    for epoch in 1..=config.epochs {
        if let Some(mean) = pool.take_mean() {
            if let Some(plan) = solve_epoch_plan(kind, &mean, config)? {
                current_plan = Some(plan);
            }
        }
        let mut task_sum = 0.0;
        let mut penalty_sum = 0.0;
        let mut recon_sum = 0.0;
        for _step in 0..steps_per_epoch {
            let mut grads = GradStore::new();

            // Supervised term on a labeled aligned batch.
            let labeled_indices = labeled_stream.next_batch();
            let labeled_batches: Vec<Array2<f64>> = (0..views)
                .map(|view| labeled.batch(view, &labeled_indices))
                .collect();
            let labels = labeled.labels_at(&labeled_indices)?;
            let (labeled_encoded, labeled_caches) =
                encode_batches(&model.encoders, &labeled_batches)?;
            let features = concat_rows(&labeled_encoded);
            let classifier = model.classifier.as_ref().expect("constructed above");
            let logits = classifier.forward(&features)?;
            let (task_loss, grad_logits) = softmax_xent(&logits, &labels)?;
            let (grad_weight, grad_bias, grad_features) =
                classifier.backward(&features, &grad_logits)?;
            accumulate(&mut grads, CLASSIFIER_WEIGHT, grad_weight);
            accumulate(&mut grads, CLASSIFIER_BIAS, grad_bias);
            for view in 0..views {
                let block = grad_features
                    .slice(s![view * out_dim..(view + 1) * out_dim, ..])
                    .to_owned();
                let (mlp_grads, _) =
                    model
                        .encoders
                        .encoder(view)
                        .backward(&labeled_caches[view], &block)?;
                accumulate_mlp_grads(&mut grads, "encoder", view, &mlp_grads, 1.0);
            }

            // Unlabeled terms. Indices are drawn every step so the stream
            // advances identically whether or not the terms are active.
            let index_sets = unlabeled_streams.draw(views);
            let mut penalty_loss = 0.0;
            let mut recon_loss = 0.0;
            if use_penalty || model.decoders.is_some() {
                let unlabeled_batches: Vec<Array2<f64>> = index_sets
                    .iter()
                    .enumerate()
                    .map(|(view, indices)| unlabeled.batch(view, indices))
                    .collect();
                let (unlabeled_encoded, unlabeled_caches) =
                    encode_batches(&model.encoders, &unlabeled_batches)?;
                let penalty_out = if use_penalty {
                    let latents = project_all(&model.encoders, &unlabeled_encoded)?;
                    let proj = sample_projections(
                        config.num_projections,
                        config.shared_dim,
                        proj_rng.random(),
                    )?;
                    let inputs = RegularizerInputs {
                        latents: &latents,
                        refs: model.references.as_ref(),
                        proj: &proj,
                        alpha: config.alpha,
                        beta: config.beta,
                        sinkhorn_iters: config.sinkhorn_iters,
                        aligned: unlabeled.aligned(),
                    };
                    let held = if solved_once { current_plan.as_ref() } else { None };
                    let out = step_penalty(kind, &inputs, held)?;
                    penalty_loss = out.loss;
                    Some(out)
                } else {
                    None
                };
                let recon_out = if let Some(decoders) = &model.decoders {
                    let targets: Vec<&Array2<f64>> = unlabeled_batches.iter().collect();
                    let rec = reconstruction_loss(decoders, &unlabeled_encoded, &targets)?;
                    recon_loss = rec.loss;
                    Some(rec)
                } else {
                    None
                };
                backward_unlabeled(
                    &model.encoders,
                    &unlabeled_caches,
                    &unlabeled_encoded,
                    penalty_out.as_ref().map(|out| (out, config.gamma)),
                    recon_out.as_ref().map(|rec| (rec, config.tau)),
                    &mut grads,
                )?;
                if let Some(out) = penalty_out {
                    if transport_kind {
                        pool_cost(kind, &out, &mut pool);
                    }
                    if let Some(plan) = out.plan {
                        current_plan = Some(plan);
                        solved_once = true;
                    }
                }
            }

            let mut params = model.parameter_map();
            adam.step(&grads, &mut params)?;
            task_sum += task_loss;
            penalty_sum += penalty_loss;
            recon_sum += recon_loss;
        }

        let steps = steps_per_epoch as f64;
        let valid_loss = if valid_usable {
            Some(validation_cross_entropy(&model, &split.valid)?)
        } else {
            None
        };
        if let Some(v) = valid_loss {
            if best.as_ref().is_none_or(|(b, _, _)| v < *b) {
                best = Some((v, epoch, model.clone()));
            }
        }
        records.push(EpochRecord {
            epoch,
            task: Some(task_sum / steps),
            coupling: penalty_sum / steps,
            reconstruction: model.decoders.is_some().then_some(recon_sum / steps),
            valid: valid_loss,
        });
    }

    let mut selected_epoch = None;
    if let Some((_, epoch, snapshot)) = best {
        selected_epoch = Some(epoch);
        model = snapshot;
    }

    let final_plan = if use_penalty && transport_kind {
        if let Some(batches) = leading_batch(&split.valid, config.batch_size) {
            let out = penalty_on_batches(&model, kind, &batches, &valid_proj, config)?;
            out.plan.or(current_plan)
        } else {
            current_plan
        }
    } else {
        None
    };

    Ok((
        model,
        finish_report(records, final_plan, config, start, selected_epoch),
    ))
}

/// Mean cross-entropy of the model's classifier over an entire labeled pool.
fn validation_cross_entropy(model: &TrainedModel, pool: &MultiViewDataset) -> Result<f64> {
    let indices: Vec<usize> = (0..pool.num_samples()).collect();
    let batches: Vec<Array2<f64>> = (0..pool.num_views())
        .map(|view| pool.batch(view, &indices))
        .collect();
    let views: Vec<&Array2<f64>> = batches.iter().collect();
    let features = model.features(&views)?;
    let classifier = model.classifier.as_ref().ok_or(TrainError::NoClassifier)?;
    let logits = classifier.forward(&features)?;
    let labels = pool.labels_at(&indices)?;
    let (loss, _) = softmax_xent(&logits, &labels)?;
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, split_and_unalign, SplitSpec, SynthSpec};

    fn tiny_spec() -> SynthSpec {
        SynthSpec {
            views: 3,
            clusters: 2,
            assignments: vec![0, 0, 1],
            latent_dim: 3,
            samples: 60,
            classes: 2,
            view_dims: vec![4, 4, 4],
            noise_sigma: 0.1,
            class_sep: 2.0,
            cluster_class_sep: None,
            map_jitter: 0.3,
            seed: 5,
        }
    }

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            batch_size: 10,
            encoder_out: 5,
            shared_dim: 3,
            hidden_width: 6,
            num_projections: 2,
            sinkhorn_iters: 10,
            num_clusters: 2,
            seed: 9,
            ..TrainConfig::default()
        }
    }

    fn checkpoint_bytes(model: &TrainedModel) -> Vec<u8> {
        let mut bytes = Vec::new();
        model.save(&mut bytes).unwrap();
        bytes
    }

    #[test]
    fn index_stream_partitions_without_replacement() {
        let mut stream = IndexStream::new(10, 3, 7);
        let a = stream.next_batch();
        let b = stream.next_batch();
        let c = stream.next_batch();
        let mut seen: Vec<usize> = a.iter().chain(&b).chain(&c).copied().collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 9, "three disjoint batches of three");
        // Fourth batch would overrun (only one unread index): reshuffles.
        let d = stream.next_batch();
        assert_eq!(d.len(), 3);
        assert!(d.iter().all(|&i| i < 10));
    }

    #[test]
    fn index_stream_small_pool_samples_with_replacement() {
        let mut stream = IndexStream::new(3, 8, 1);
        let batch = stream.next_batch();
        assert_eq!(batch.len(), 8);
        assert!(batch.iter().all(|&i| i < 3));
    }

    #[test]
    fn initial_plans_match_the_documented_couplings() {
        let config = TrainConfig {
            num_clusters: 2,
            ..TrainConfig::default()
        };
        let pairwise = initial_plan(RegularizerKind::HotPairwise, 4, &config).unwrap();
        assert_eq!(pairwise.weights[[0, 0]], 0.0);
        assert!((pairwise.weights[[0, 1]] - 1.0 / 12.0).abs() < 1e-15);
        assert!(pairwise.marginal_residual < 1e-12);
        let reference = initial_plan(RegularizerKind::HotReference, 4, &config).unwrap();
        assert!((reference.weights[[3, 1]] - 1.0 / 8.0).abs() < 1e-15);
        assert!(reference.marginal_residual < 1e-12);
        assert!(initial_plan(RegularizerKind::Lscca, 4, &config).is_none());
    }

    #[test]
    fn none_regularizer_returns_initial_parameters_and_no_records() {
        let data = generate_synthetic(&tiny_spec()).unwrap();
        let mut config = tiny_config();
        config.regularizer = RegularizerKind::None;
        let (model, report) = train_unsupervised(&data, None, &config).unwrap();
        assert!(report.records.is_empty());
        assert!(report.final_plan.is_none());
        assert!(report.selected_epoch.is_none());
        // A second run reproduces the same initialization exactly.
        let (model2, _) = train_unsupervised(&data, None, &config).unwrap();
        assert_eq!(checkpoint_bytes(&model), checkpoint_bytes(&model2));
    }

    #[test]
    fn unsupervised_runs_are_deterministic_and_seed_sensitive() {
        let data = generate_synthetic(&tiny_spec()).unwrap();
        let config = tiny_config();
        let (model_a, report_a) = train_unsupervised(&data, Some(&data), &config).unwrap();
        let (model_b, report_b) = train_unsupervised(&data, Some(&data), &config).unwrap();
        assert_eq!(report_a.to_jsonl(), report_b.to_jsonl());
        assert_eq!(checkpoint_bytes(&model_a), checkpoint_bytes(&model_b));
        assert_eq!(report_a.selected_epoch, report_b.selected_epoch);

        let mut other = config.clone();
        other.seed = config.seed + 1;
        let (model_c, report_c) = train_unsupervised(&data, Some(&data), &other).unwrap();
        assert_ne!(checkpoint_bytes(&model_a), checkpoint_bytes(&model_c));
        assert_ne!(report_a.to_jsonl(), report_c.to_jsonl());
    }

    #[test]
    fn unsupervised_reports_one_record_per_epoch_with_finite_losses() {
        let data = generate_synthetic(&tiny_spec()).unwrap();
        let config = tiny_config();
        let (model, report) = train_unsupervised(&data, Some(&data), &config).unwrap();
        assert_eq!(report.records.len(), config.epochs);
        for (i, record) in report.records.iter().enumerate() {
            assert_eq!(record.epoch, i + 1);
            assert!(record.coupling.is_finite());
            assert!(record.valid.unwrap().is_finite());
            assert!(record.task.is_none());
        }
        assert!(report.selected_epoch.is_some());
        let plan = report.final_plan.expect("transport penalty keeps its plan");
        assert_eq!(plan.rows(), 3);
        assert_eq!(plan.cols(), 2);
        assert!(model.references.is_some());
        assert!(model.classifier.is_none());
    }

    #[test]
    fn unsupervised_rejects_oversized_batches_and_unaligned_pools() {
        let data = generate_synthetic(&tiny_spec()).unwrap();
        let mut config = tiny_config();
        config.batch_size = 61;
        assert!(matches!(
            train_unsupervised(&data, None, &config),
            Err(TrainError::BatchTooLarge { batch: 61, pool: 60 })
        ));

        let mut unaligned = data.clone();
        unaligned.set_aligned(false);
        let mut config = tiny_config();
        config.regularizer = RegularizerKind::Lscca;
        assert!(matches!(
            train_unsupervised(&unaligned, None, &config),
            Err(TrainError::NeedsAlignedData(RegularizerKind::Lscca))
        ));
    }

    fn tiny_split() -> crate::data::DataSplit {
        let data = generate_synthetic(&tiny_spec()).unwrap();
        let spec = SplitSpec {
            labeled_aligned_fraction: 0.25,
            seed: 3,
            ..SplitSpec::default()
        };
        split_and_unalign(&data, &spec).unwrap()
    }

    #[test]
    fn semisupervised_reports_all_terms_and_is_deterministic() {
        let split = tiny_split();
        let mut config = tiny_config();
        config.batch_size = 8;
        config.use_autoencoder = true;
        let (model_a, report_a) = train_semisupervised(&split, &config).unwrap();
        let (model_b, report_b) = train_semisupervised(&split, &config).unwrap();
        assert_eq!(report_a.to_jsonl(), report_b.to_jsonl());
        assert_eq!(checkpoint_bytes(&model_a), checkpoint_bytes(&model_b));

        assert_eq!(report_a.records.len(), config.epochs);
        for record in &report_a.records {
            assert!(record.task.unwrap().is_finite());
            assert!(record.coupling.is_finite());
            assert!(record.reconstruction.unwrap().is_finite());
            assert!(record.valid.unwrap().is_finite());
        }
        assert!(model_a.classifier.is_some());
        assert!(model_a.decoders.is_some());
        assert!(model_a.references.is_some());
        assert!(report_a.selected_epoch.is_some());

        let test = &split.test;
        let indices: Vec<usize> = (0..test.num_samples()).collect();
        let batches: Vec<Array2<f64>> = (0..test.num_views())
            .map(|view| test.batch(view, &indices))
            .collect();
        let views: Vec<&Array2<f64>> = batches.iter().collect();
        let preds = model_a.predict(&views).unwrap();
        assert_eq!(preds.len(), test.num_samples());
    }

    #[test]
    fn semisupervised_gamma_tau_zero_still_trains_the_classifier() {
        let split = tiny_split();
        let mut config = tiny_config();
        config.batch_size = 8;
        config.gamma = 0.0;
        config.tau = 0.0;
        let (model, report) = train_semisupervised(&split, &config).unwrap();
        assert!(report.final_plan.is_none());
        for record in &report.records {
            assert_eq!(record.coupling, 0.0);
            assert!(record.reconstruction.is_none());
        }
        // References exist but were never touched: equal to a fresh init.
        let (fresh, _) = {
            let mut none_config = config.clone();
            none_config.regularizer = RegularizerKind::HotReference;
            train_semisupervised(&split, &none_config).unwrap()
        };
        assert_eq!(
            model.references.as_ref().unwrap().get(0),
            fresh.references.as_ref().unwrap().get(0),
        );
    }

    #[test]
    fn semisupervised_rejects_empty_or_unlabeled_pools() {
        let split = tiny_split();
        let mut config = tiny_config();
        config.batch_size = 8;

        let mut no_labels = split.train_labeled.clone();
        no_labels.drop_labels();
        let broken = crate::data::DataSplit {
            train_labeled: no_labels,
            train_unlabeled: split.train_unlabeled.clone(),
            valid: split.valid.clone(),
            test: split.test.clone(),
            indices: split.indices.clone(),
        };
        assert!(matches!(
            train_semisupervised(&broken, &config),
            Err(TrainError::MissingLabels)
        ));

        let empty_unlabeled = crate::data::DataSplit {
            train_labeled: split.train_labeled.clone(),
            train_unlabeled: split.train_unlabeled.subset(&[], "empty".into()),
            valid: split.valid.clone(),
            test: split.test.clone(),
            indices: split.indices.clone(),
        };
        assert!(matches!(
            train_semisupervised(&empty_unlabeled, &config),
            Err(TrainError::NoUnlabeledPool)
        ));
    }

    #[test]
    fn semisupervised_unaligned_pool_rejects_alignment_requiring_penalties() {
        let split = tiny_split();
        let mut config = tiny_config();
        config.batch_size = 8;
        config.regularizer = RegularizerKind::Gdcca;
        assert!(matches!(
            train_semisupervised(&split, &config),
            Err(TrainError::NeedsAlignedData(RegularizerKind::Gdcca))
        ));
        // With gamma = 0 the penalty never runs, so the same split is fine.
        config.gamma = 0.0;
        assert!(train_semisupervised(&split, &config).is_ok());
    }
}
