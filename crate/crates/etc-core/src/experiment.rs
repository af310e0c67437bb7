//! End-to-end orchestration: dataset preparation, backbone training,
//! per-layer cell training, the (layer, lambda) sweep selected on a
//! validation mixed set, ablation evaluation on the test mixed set, and
//! report assembly. Sweep cells run as independent parallel units; all
//! randomness descends from each run's root seed through named streams,
//! so reruns reproduce every artifact bit for bit.

use crate::cell::{
    generate_pseudo_labels, load_pseudo_labels, train_adversarial, train_source_branch,
    train_target_dense, AdversarialConfig, AdversarialTrace, EtcModels, PseudoLabelOrigin,
    PseudoLabels,
};
use crate::config::{DataKind, ExperimentConfig};
use crate::data::{
    gen_blob_pair, gen_digit_pair, load_csv, load_idx, make_mixed_test, mix_from_pools,
    split_domain_pair, Domain, DomainPair, LabeledDataset, MixedTestSet, ShiftSpec, SplitPair,
};
use crate::error::{Error, Result, StageExt};
use crate::exec;
use crate::extractor::{
    activations_for_samples, extract_activations, train_backbone, ActivationSet, Backbone,
};
use crate::metrics::{compute_metrics, MetricsRecord};
use crate::persist::EtcBundle;
use crate::probe::{critique, distances, fit_probe, route_from_distances, ProbeParams, Route};
use crate::report::{
    Ablation, BestSelection, EvalSplit, ExperimentReport, RunRecord, SampleRecord, SweepCell,
};
use crate::rng::child_seed;

/// Builds the two-domain dataset a run works on.
pub fn build_pair(config: &ExperimentConfig, seed: u64) -> Result<DomainPair> {
    let d = &config.data;
    match d.kind {
        DataKind::Blobs => gen_blob_pair(
            d.classes,
            d.per_class,
            d.dim,
            d.separation,
            d.rotation_deg,
            &d.translation,
            d.noise_sigma,
            seed,
        ),
        DataKind::Digits => gen_digit_pair(d.per_class, d.rotation_deg, d.noise_sigma, seed),
        DataKind::Csv => {
            let source = load_csv(
                d.source_path.as_ref().expect("validated"),
                d.has_header,
                None,
            )?;
            let classes = source.class_count;
            let target = load_csv(
                d.target_path.as_ref().expect("validated"),
                d.has_header,
                Some(classes),
            )?;
            DomainPair::new(source, target, ShiftSpec::none())
        }
        DataKind::Idx => {
            let source = load_idx(
                d.source_images.as_ref().expect("validated"),
                d.source_labels.as_ref().expect("validated"),
            )?;
            let target = load_idx(
                d.target_images.as_ref().expect("validated"),
                d.target_labels.as_ref().expect("validated"),
            )?;
            let classes = source.class_count.max(target.class_count);
            let source = LabeledDataset::new(source.samples, source.labels, classes)?;
            let target = LabeledDataset::new(target.samples, target.labels, classes)?;
            DomainPair::new(source, target, ShiftSpec::none())
        }
    }
}

/// Per-seed state shared by every sweep cell: the pair, its splits, the
/// trained backbone, and the validation/test mixed sets.
#[derive(Debug, Clone)]
pub struct SeedContext {
    pub seed: u64,
    pub split: SplitPair,
    pub backbone: Backbone,
    pub backbone_val_accuracy: f64,
    pub val_mix: MixedTestSet,
    pub test_mix: MixedTestSet,
}

pub fn prepare_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedContext> {
    let pair = build_pair(config, seed).stage("data")?;
    let split = split_domain_pair(&pair, config.split, seed).stage("split")?;
    let backbone_config = config
        .backbone_train
        .to_train_config(child_seed(seed, "backbone-train", 0));
    let (backbone, backbone_val_accuracy) = train_backbone(
        &split.source.train,
        &split.source.val,
        &config.backbone_hidden,
        &backbone_config,
    )
    .stage("backbone")?;
    let val_mix = mix_from_pools(
        &split.source.val,
        &split.target.val,
        config.val_n,
        config.rho,
        child_seed(seed, "val-mix", 0),
    )
    .stage("mix")?;
    let test_mix = make_mixed_test(&pair, config.split, config.test_n, config.rho, seed)
        .stage("mix")?;
    Ok(SeedContext {
        seed,
        split,
        backbone,
        backbone_val_accuracy,
        val_mix,
        test_mix,
    })
}

/// One trained cell at one injection layer for one seed.
#[derive(Debug, Clone)]
pub struct TrainedCell {
    pub seed: u64,
    pub layer_index: usize,
    pub models: EtcModels,
    pub trace: AdversarialTrace,
    pub pseudo: PseudoLabels,
    pub x_s_train: ActivationSet,
    pub x_t_train: ActivationSet,
}

pub fn train_cell(
    config: &ExperimentConfig,
    ctx: &SeedContext,
    layer_index: usize,
) -> Result<TrainedCell> {
    let seed = ctx.seed;
    let layer_u64 = layer_index as u64;
    let x_s_train =
        extract_activations(&ctx.backbone, &ctx.split.source.train, layer_index, Domain::Source)
            .stage("extract")?;
    let x_t_train =
        extract_activations(&ctx.backbone, &ctx.split.target.train, layer_index, Domain::Target)
            .stage("extract")?;

    let source_config = config
        .source_train
        .to_train_config(child_seed(seed, "source-branch", layer_u64));
    let (e_source, d_source) =
        train_source_branch(&x_s_train, &config.arch, &source_config).stage("source-branch")?;

    let heldout_s = extract_activations(
        &ctx.backbone,
        &ctx.split.source.val,
        layer_index,
        Domain::Source,
    )
    .stage("extract")?;
    let heldout_t = extract_activations(
        &ctx.backbone,
        &ctx.split.target.val,
        layer_index,
        Domain::Target,
    )
    .stage("extract")?;
    let heldout = if heldout_s.is_empty() || heldout_t.is_empty() {
        None
    } else {
        Some((heldout_s.activations.as_slice(), heldout_t.activations.as_slice()))
    };

    let adv_config = AdversarialConfig {
        seed: child_seed(seed, "adversarial", layer_u64),
        ..config.adversarial.clone()
    };
    let (e_target, discriminator, trace) =
        train_adversarial(&e_source, &x_s_train, &x_t_train, &config.arch, &adv_config, heldout)
            .stage("adversarial")?;

    let pseudo = match config.pseudo_labels {
        PseudoLabelOrigin::SelfGenerated => {
            generate_pseudo_labels(&e_target, &d_source, &x_t_train).stage("pseudo-labels")?
        }
        PseudoLabelOrigin::File => load_pseudo_labels(
            config.pseudo_path.as_ref().expect("validated"),
            x_t_train.class_count,
            x_t_train.len(),
        )
        .stage("pseudo-labels")?,
    };

    let target_config = config
        .target_train
        .to_train_config(child_seed(seed, "target-head", layer_u64));
    let d_target = train_target_dense(&e_target, &x_t_train, &pseudo, &config.arch, &target_config)
        .stage("target-head")?;

    Ok(TrainedCell {
        seed,
        layer_index,
        models: EtcModels {
            e_source,
            e_target,
            discriminator,
            d_source,
            d_target,
            layer_index,
        },
        trace,
        pseudo,
        x_s_train,
        x_t_train,
    })
}

/// Fits the cell's probe on its own training activations, at the first
/// grid lambda; sweeps swap lambdas without refitting.
pub fn fit_cell_probe(config: &ExperimentConfig, cell: &TrainedCell) -> Result<ProbeParams> {
    let l0 = config.lambda_grid[0];
    fit_probe(
        &cell.models,
        &cell.x_s_train,
        &cell.x_t_train,
        l0,
        l0,
        config.ridge,
        config.critique_mode,
    )
    .stage("probe")
}

/// Per-sample evaluation state that is independent of lambda: both
/// squared distances and both heads' predictions, so the lambda grid
/// re-runs only the routing decision.
#[derive(Debug, Clone)]
pub struct EvalCache {
    pub m_source: Vec<f64>,
    pub m_target: Vec<f64>,
    pub source_pred: Vec<usize>,
    pub target_pred: Vec<usize>,
    pub labels: Vec<usize>,
    pub origins: Vec<Domain>,
    pub class_count: usize,
}

pub fn build_eval_cache(
    ctx: &SeedContext,
    cell: &TrainedCell,
    probe: &ProbeParams,
    mix: &MixedTestSet,
) -> Result<EvalCache> {
    let acts = activations_for_samples(&ctx.backbone, &mix.samples, cell.layer_index)
        .stage("extract")?;
    let models = &cell.models;
    let per_sample = exec::map_collect(&acts, |a| -> Result<(f64, f64, usize, usize)> {
        let c = critique(models, a, probe.mode)?;
        let (m_s, m_t) = distances(probe, &c)?;
        Ok((m_s, m_t, models.predict_source(a)?, models.predict_target(a)?))
    });
    let mut cache = EvalCache {
        m_source: Vec::with_capacity(acts.len()),
        m_target: Vec::with_capacity(acts.len()),
        source_pred: Vec::with_capacity(acts.len()),
        target_pred: Vec::with_capacity(acts.len()),
        labels: mix.labels.clone(),
        origins: mix.origin.clone(),
        class_count: mix.class_count,
    };
    for r in per_sample {
        let (m_s, m_t, sp, tp) = r.stage("probe")?;
        cache.m_source.push(m_s);
        cache.m_target.push(m_t);
        cache.source_pred.push(sp);
        cache.target_pred.push(tp);
    }
    Ok(cache)
}

/// Full-mode evaluation at the probe's current lambdas.
pub fn eval_full(cache: &EvalCache, probe: &ProbeParams) -> Result<(MetricsRecord, Vec<Route>, Vec<usize>)> {
    let n = cache.labels.len();
    let mut routes = Vec::with_capacity(n);
    let mut preds = Vec::with_capacity(n);
    for i in 0..n {
        let r = route_from_distances(probe, cache.m_source[i], cache.m_target[i]);
        preds.push(match r.branch {
            Domain::Source => cache.source_pred[i],
            Domain::Target => cache.target_pred[i],
        });
        routes.push(r);
    }
    let metrics = compute_metrics(
        &preds,
        &cache.labels,
        cache.class_count,
        Some(&routes),
        Some(&cache.origins),
    )?;
    Ok((metrics, routes, preds))
}

/// Degenerate-mode evaluation: every sample through one head.
pub fn eval_ablation(cache: &EvalCache, ablation: Ablation, probe: &ProbeParams) -> Result<MetricsRecord> {
    match ablation {
        Ablation::Full => Ok(eval_full(cache, probe)?.0),
        Ablation::OnlySourceHead => {
            compute_metrics(&cache.source_pred, &cache.labels, cache.class_count, None, None)
        }
        Ablation::OnlyTargetHead => {
            compute_metrics(&cache.target_pred, &cache.labels, cache.class_count, None, None)
        }
    }
}

/// One sweep cell's artifacts: the trained models, the fitted probe,
/// and the validation cache for lambda scoring.
pub struct CellArtifacts {
    pub cell: TrainedCell,
    pub probe: ProbeParams,
    pub val_cache: EvalCache,
}

fn train_and_probe_cell(
    config: &ExperimentConfig,
    ctx: &SeedContext,
    layer_index: usize,
) -> Result<CellArtifacts> {
    let cell = train_cell(config, ctx, layer_index)?;
    let probe = fit_cell_probe(config, &cell)?;
    let val_cache = build_eval_cache(ctx, &cell, &probe, &ctx.val_mix)?;
    Ok(CellArtifacts { cell, probe, val_cache })
}

/// The full grid: per (seed, layer, lambda) validation macro-F1, the
/// winning (layer, lambda), test-set ablations at the winner, and the
/// winner's per-sample records.
pub struct SweepOutcome {
    pub report: ExperimentReport,
    pub contexts: Vec<SeedContext>,
    pub winner_cells: Vec<CellArtifacts>,
    pub best: BestSelection,
}

/// Runs the layer sweep over `layers` (or every injectable layer when
/// empty), scoring each (layer, lambda) on the validation mixed set and
/// evaluating the winner on the test mixed set under all ablations.
pub fn run_sweep_layers(config: &ExperimentConfig, layers: &[usize]) -> Result<SweepOutcome> {
    config.validate().stage("config")?;
    let contexts: Vec<SeedContext> = config
        .seeds
        .iter()
        .map(|&s| prepare_seed(config, s))
        .collect::<Result<_>>()?;

    let layers: Vec<usize> = if layers.is_empty() {
        (1..=contexts[0].backbone.n_hidden).collect()
    } else {
        for &l in layers {
            contexts[0].backbone.activation_dim(l).stage("config")?;
        }
        layers.to_vec()
    };

    // Independent (seed, layer) training cells, run in parallel, results
    // kept in deterministic (seed-major, layer-minor) order.
    let cell_keys: Vec<(usize, usize)> = (0..contexts.len())
        .flat_map(|si| layers.iter().map(move |&l| (si, l)))
        .collect();
    let artifacts: Vec<CellArtifacts> = exec::map_collect(&cell_keys, |&(si, layer)| {
        train_and_probe_cell(config, &contexts[si], layer)
    })
    .into_iter()
    .collect::<Result<_>>()?;

    // Validation macro-F1 for every (seed, layer, lambda).
    let mut report = ExperimentReport::default();
    let mut means: Vec<(usize, f64, f64)> = Vec::new(); // (layer, lambda, mean f1)
    for (li, &layer) in layers.iter().enumerate() {
        for &lambda in &config.lambda_grid {
            let mut sum = 0.0;
            for (si, ctx) in contexts.iter().enumerate() {
                let art = &artifacts[si * layers.len() + li];
                debug_assert_eq!(art.cell.layer_index, layer);
                let probe = art.probe.with_lambdas(lambda, lambda)?;
                let (metrics, _, _) = eval_full(&art.val_cache, &probe)?;
                sum += metrics.macro_f1;
                report.runs.push(RunRecord {
                    seed: ctx.seed,
                    layer_index: layer,
                    lambda_s: lambda,
                    lambda_t: lambda,
                    ablation: Ablation::Full,
                    split: EvalSplit::Validation,
                    metrics,
                });
            }
            means.push((layer, lambda, sum / contexts.len() as f64));
        }
    }
    report.sweep = means
        .iter()
        .map(|&(layer_index, lambda, mean_val_macro_f1)| SweepCell {
            layer_index,
            lambda,
            mean_val_macro_f1,
        })
        .collect();

    // Strictly-greater replacement over (layer asc, grid order) keeps
    // the smallest layer, then the earliest grid lambda, on ties.
    let mut best = BestSelection {
        layer_index: means[0].0,
        lambda: means[0].1,
        mean_val_macro_f1: means[0].2,
    };
    for &(layer, lambda, f1) in &means[1..] {
        if f1 > best.mean_val_macro_f1 {
            best = BestSelection { layer_index: layer, lambda, mean_val_macro_f1: f1 };
        }
    }
    report.best = Some(best.clone());

    // Test evaluation at the winner, all ablations, per seed.
    let best_li = layers.iter().position(|&l| l == best.layer_index).expect("winner in grid");
    let mut winner_cells = Vec::with_capacity(contexts.len());
    for (si, ctx) in contexts.iter().enumerate() {
        let art = &artifacts[si * layers.len() + best_li];
        let probe = art.probe.with_lambdas(best.lambda, best.lambda)?;
        let test_cache = build_eval_cache(ctx, &art.cell, &probe, &ctx.test_mix)?;
        let (full_metrics, routes, preds) = eval_full(&test_cache, &probe)?;
        for (i, r) in routes.iter().enumerate() {
            report.samples.push(SampleRecord {
                seed: ctx.seed,
                index: i,
                true_label: test_cache.labels[i],
                predicted: preds[i],
                origin: test_cache.origins[i],
                branch: r.branch,
                tie_broken: r.tie_broken,
                m_source: r.m_source,
                m_target: r.m_target,
            });
        }
        for ablation in Ablation::ALL {
            let metrics = match ablation {
                Ablation::Full => full_metrics.clone(),
                other => eval_ablation(&test_cache, other, &probe)?,
            };
            report.runs.push(RunRecord {
                seed: ctx.seed,
                layer_index: best.layer_index,
                lambda_s: best.lambda,
                lambda_t: best.lambda,
                ablation,
                split: EvalSplit::Test,
                metrics,
            });
        }
        winner_cells.push(CellArtifacts {
            cell: art.cell.clone(),
            probe,
            val_cache: art.val_cache.clone(),
        });
    }

    Ok(SweepOutcome { report, contexts, winner_cells, best })
}

/// Sweeps every injectable backbone layer.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepOutcome> {
    run_sweep_layers(config, &[])
}

/// Trains at the configured injection layer only (default 1) and
/// returns the first seed's deployable bundle plus the report.
pub fn run_training(config: &ExperimentConfig) -> Result<(EtcBundle, ExperimentReport)> {
    let layer = config.layer.unwrap_or(1);
    let outcome = run_sweep_layers(config, &[layer])?;
    let bundle = EtcBundle {
        backbone: outcome.contexts[0].backbone.clone(),
        models: outcome.winner_cells[0].cell.models.clone(),
        probe: outcome.winner_cells[0].probe.clone(),
    };
    bundle.validate()?;
    Ok((bundle, outcome.report))
}

/// Ablation table at the configured layer: per seed, all three modes on
/// the test mixed set.
pub fn run_ablation(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let layer = config.layer.unwrap_or(1);
    Ok(run_sweep_layers(config, &[layer])?.report)
}

/// Classifies unlabeled raw samples with a saved bundle.
pub fn route_samples(bundle: &EtcBundle, samples: &[Vec<f64>]) -> Result<Vec<(usize, Route)>> {
    bundle.validate()?;
    for s in samples {
        if s.len() != bundle.backbone.net.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: bundle.backbone.net.input_dim(),
                got: s.len(),
            });
        }
    }
    exec::map_collect(samples, |s| bundle.classify(s))
        .into_iter()
        .collect()
}
