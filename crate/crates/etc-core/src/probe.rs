//! The routing probe: per-sample critiques assembled from discriminator
//! activations, Gaussian statistics over both domains' critiques,
//! squared Mahalanobis distance bands, and the source/target routing
//! decision with its tie-break rule.

use serde::{Deserialize, Serialize};

use crate::cell::EtcModels;
use crate::data::Domain;
use crate::error::{Error, Result};
use crate::exec;
use crate::extractor::ActivationSet;
use crate::linalg::{mahalanobis, scalar_stats, GaussianStats, ScalarStats};
use crate::nn::{argmax, Network};

/// What the discriminator contributes per encoder stream.
///
/// `HiddenPlusScore` takes the final hidden layer's activations plus the
/// sigmoid score (the informative vector form); `ScoreOnly` keeps just
/// the scalar score, giving two-dimensional critiques.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CritiqueMode {
    #[default]
    HiddenPlusScore,
    ScoreOnly,
}

/// Concatenation of the discriminator's view of E_s(x) and E_t(x),
/// source half first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Critique {
    pub values: Vec<f64>,
}

impl Critique {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// The discriminator's contribution for one embedding.
fn disc_view(disc: &Network, embedding: &[f64], mode: CritiqueMode) -> Result<Vec<f64>> {
    let trace = disc.forward_trace(embedding)?;
    let score = trace.activations.last().expect("non-empty")[0];
    match mode {
        CritiqueMode::ScoreOnly => Ok(vec![score]),
        CritiqueMode::HiddenPlusScore => {
            // Post-activation of the layer feeding the sigmoid output.
            let mut v = trace.activations[disc.n_layers() - 1].clone();
            v.push(score);
            Ok(v)
        }
    }
}

/// c(x): the discriminator's view of both encoder streams, source first.
pub fn critique(models: &EtcModels, x: &[f64], mode: CritiqueMode) -> Result<Critique> {
    let es = models.e_source.forward(x)?;
    let et = models.e_target.forward(x)?;
    let mut values = disc_view(&models.discriminator, &es, mode)?;
    values.extend(disc_view(&models.discriminator, &et, mode)?);
    Ok(Critique { values })
}

/// Order-preserving batched critiques.
pub fn critique_batch(
    models: &EtcModels,
    xs: &[Vec<f64>],
    mode: CritiqueMode,
) -> Result<Vec<Critique>> {
    for x in xs {
        if x.len() != models.e_source.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: models.e_source.input_dim(),
                got: x.len(),
            });
        }
    }
    Ok(exec::map_collect(xs, |x| {
        critique(models, x, mode).expect("dims checked above")
    }))
}

/// Fitted routing statistics: per-domain critique Gaussians, per-domain
/// scalar statistics of the squared distances, and the band widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeParams {
    pub source_stats: GaussianStats,
    pub target_stats: GaussianStats,
    pub source_m_stats: ScalarStats,
    pub target_m_stats: ScalarStats,
    pub lambda_s: f64,
    pub lambda_t: f64,
    pub mode: CritiqueMode,
}

impl ProbeParams {
    pub fn validate(&self) -> Result<()> {
        if self.source_stats.dim() != self.target_stats.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.source_stats.dim(),
                got: self.target_stats.dim(),
            });
        }
        for (name, l) in [("lambda_s", self.lambda_s), ("lambda_t", self.lambda_t)] {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} {l} must be > 0")));
            }
        }
        Ok(())
    }

    /// Same statistics, different band widths. The Gaussian and distance
    /// statistics do not depend on λ, so sweeping λ reuses one fit.
    pub fn with_lambdas(&self, lambda_s: f64, lambda_t: f64) -> Result<ProbeParams> {
        let p = ProbeParams {
            lambda_s,
            lambda_t,
            ..self.clone()
        };
        p.validate()?;
        Ok(p)
    }

    pub fn critique_dim(&self) -> usize {
        self.source_stats.dim()
    }
}

/// Fits the probe from training activations of both domains: critiques
/// for every sample, one Gaussian per domain (population covariance with
/// ridge-regularized inverse), then scalar statistics of each domain's
/// own squared Mahalanobis distances.
pub fn fit_probe(
    models: &EtcModels,
    x_s: &ActivationSet,
    x_t: &ActivationSet,
    lambda_s: f64,
    lambda_t: f64,
    ridge: f64,
    mode: CritiqueMode,
) -> Result<ProbeParams> {
    for set in [x_s, x_t] {
        if set.len() < 2 {
            return Err(Error::InsufficientSamples {
                needed: 2,
                available: set.len(),
            });
        }
    }
    let raw = |cs: Vec<Critique>| -> Vec<Vec<f64>> { cs.into_iter().map(|c| c.values).collect() };
    let critiques_s = raw(critique_batch(models, &x_s.activations, mode)?);
    let critiques_t = raw(critique_batch(models, &x_t.activations, mode)?);

    let source_stats = GaussianStats::fit(&critiques_s, ridge)?;
    let target_stats = GaussianStats::fit(&critiques_t, ridge)?;

    let m_s: Vec<f64> = critiques_s
        .iter()
        .map(|c| mahalanobis(c, &source_stats))
        .collect::<Result<_>>()?;
    let m_t: Vec<f64> = critiques_t
        .iter()
        .map(|c| mahalanobis(c, &target_stats))
        .collect::<Result<_>>()?;

    let probe = ProbeParams {
        source_stats,
        target_stats,
        source_m_stats: scalar_stats(&m_s)?,
        target_m_stats: scalar_stats(&m_t)?,
        lambda_s,
        lambda_t,
        mode,
    };
    probe.validate()?;
    Ok(probe)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Membership {
    pub in_source: bool,
    pub in_target: bool,
}

fn in_band(m: f64, stats: &ScalarStats, lambda: f64) -> bool {
    stats.mu - lambda * stats.sigma <= m && m <= stats.mu + lambda * stats.sigma
}

/// Membership from precomputed squared distances.
pub fn membership_from_distances(probe: &ProbeParams, m_source: f64, m_target: f64) -> Membership {
    Membership {
        in_source: in_band(m_source, &probe.source_m_stats, probe.lambda_s),
        in_target: in_band(m_target, &probe.target_m_stats, probe.lambda_t),
    }
}

/// Closed two-sided bands: in-distribution with a domain when that
/// domain's squared distance lies within μ ± λσ of its training
/// distances, boundaries included.
pub fn membership(probe: &ProbeParams, c: &Critique) -> Result<Membership> {
    let (m_s, m_t) = distances(probe, c)?;
    Ok(membership_from_distances(probe, m_s, m_t))
}

/// Squared Mahalanobis distances of one critique against both domains.
pub fn distances(probe: &ProbeParams, c: &Critique) -> Result<(f64, f64)> {
    Ok((
        mahalanobis(&c.values, &probe.source_stats)?,
        mahalanobis(&c.values, &probe.target_stats)?,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub branch: Domain,
    pub membership: Membership,
    pub m_source: f64,
    pub m_target: f64,
    pub tie_broken: bool,
}

/// Routing rule: unambiguous membership wins outright; "both" and
/// "neither" fall back to the smaller normalized deviation
/// z_d = |M_d − μ_d| / σ_d (σ floored at 1e-12), source on exact ties.
pub fn route_from_distances(probe: &ProbeParams, m_source: f64, m_target: f64) -> Route {
    let membership = membership_from_distances(probe, m_source, m_target);
    let (branch, tie_broken) = match (membership.in_source, membership.in_target) {
        (true, false) => (Domain::Source, false),
        (false, true) => (Domain::Target, false),
        _ => {
            let z = |m: f64, stats: &ScalarStats| -> f64 {
                (m - stats.mu).abs() / stats.sigma.max(1e-12)
            };
            let z_s = z(m_source, &probe.source_m_stats);
            let z_t = z(m_target, &probe.target_m_stats);
            (
                if z_s <= z_t {
                    Domain::Source
                } else {
                    Domain::Target
                },
                true,
            )
        }
    };
    Route {
        branch,
        membership,
        m_source,
        m_target,
        tie_broken,
    }
}

pub fn route(probe: &ProbeParams, c: &Critique) -> Result<Route> {
    let (m_source, m_target) = distances(probe, c)?;
    Ok(route_from_distances(probe, m_source, m_target))
}

/// Routes the critique of `x` and classifies with the chosen branch's
/// head. Returns the label and the full routing diagnostics.
pub fn classify(models: &EtcModels, probe: &ProbeParams, x: &[f64]) -> Result<(usize, Route)> {
    let c = critique(models, x, probe.mode)?;
    let r = route(probe, &c)?;
    let label = match r.branch {
        Domain::Source => argmax(&models.d_source.forward(&models.e_source.forward(x)?)?),
        Domain::Target => argmax(&models.d_target.forward(&models.e_target.forward(x)?)?),
    };
    Ok((label, r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::{train_source_branch, EtcArch};
    use crate::data::gen_blobs;
    use crate::linalg::Matrix;
    use crate::nn::TrainConfig;
    use rand::Rng;

    fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
        crate::rng::substream(seed, "probe-test")
    }

    fn test_arch() -> EtcArch {
        EtcArch {
            encoder_hidden: vec![8],
            embed_dim: 6,
            disc_hidden: vec![5],
            head_hidden: vec![8],
        }
    }

    /// Models with random parameters throughout (no training needed for
    /// shape/statistics tests).
    fn random_models(seed: u64, input_dim: usize, classes: usize) -> EtcModels {
        let arch = test_arch();
        let mut r = rng(seed);
        let enc = |r: &mut rand_chacha::ChaCha8Rng| {
            Network::glorot(&arch.encoder_specs(input_dim), r).unwrap()
        };
        let e_source = enc(&mut r);
        let e_target = enc(&mut r);
        let discriminator = Network::glorot(&arch.discriminator_specs(), &mut r).unwrap();
        let d_source = Network::glorot(&arch.head_specs(classes), &mut r).unwrap();
        let d_target = Network::glorot(&arch.head_specs(classes), &mut r).unwrap();
        EtcModels {
            e_source,
            e_target,
            discriminator,
            d_source,
            d_target,
            layer_index: 1,
        }
    }

    fn acts_from(samples: Vec<Vec<f64>>, labels: Vec<usize>, domain: Domain) -> ActivationSet {
        ActivationSet {
            activations: samples,
            labels: Some(labels),
            domain,
            layer_index: 1,
            class_count: 2,
        }
    }

    #[test]
    fn critique_dim_is_twice_disc_view() {
        let models = random_models(1, 4, 2);
        let x = vec![0.2, -0.4, 1.0, 0.3];
        let c = critique(&models, &x, CritiqueMode::HiddenPlusScore).unwrap();
        assert_eq!(c.dim(), 2 * (5 + 1)); // hidden width 5 + score
        let c2 = critique(&models, &x, CritiqueMode::ScoreOnly).unwrap();
        assert_eq!(c2.dim(), 2);
    }

    #[test]
    fn identical_encoders_give_equal_halves() {
        let mut models = random_models(2, 4, 2);
        models.e_target = models.e_source.clone();
        let x = vec![0.5, 0.1, -0.7, 0.9];
        let c = critique(&models, &x, CritiqueMode::HiddenPlusScore).unwrap();
        let half = c.dim() / 2;
        assert_eq!(c.values[..half], c.values[half..]);
    }

    #[test]
    fn critique_matches_composition_oracle() {
        let models = random_models(3, 4, 2);
        let mut r = rng(4);
        for _ in 0..5 {
            let x: Vec<f64> = (0..4).map(|_| r.gen_range(-2.0..2.0)).collect();
            let c = critique(&models, &x, CritiqueMode::HiddenPlusScore).unwrap();
            // Oracle: compose the nets by hand for each half.
            let mut expect = Vec::new();
            for enc in [&models.e_source, &models.e_target] {
                let emb = enc.forward(&x).unwrap();
                let trace = models.discriminator.forward_trace(&emb).unwrap();
                let n = models.discriminator.n_layers();
                expect.extend(trace.activations[n - 1].iter());
                expect.push(trace.activations[n][0]);
            }
            assert_eq!(c.values, expect);
        }
    }

    fn random_activations(seed: u64, n: usize, dim: usize) -> Vec<Vec<f64>> {
        let mut r = rng(seed);
        (0..n)
            .map(|_| (0..dim).map(|_| r.gen_range(-2.0..2.0)).collect())
            .collect()
    }

    #[test]
    fn symmetric_inputs_give_identical_domain_stats() {
        let mut models = random_models(5, 4, 2);
        models.e_target = models.e_source.clone();
        let samples = random_activations(6, 30, 4);
        let labels = vec![0; 30];
        let x_s = acts_from(samples.clone(), labels.clone(), Domain::Source);
        let x_t = acts_from(samples, labels, Domain::Target);
        let probe = fit_probe(
            &models,
            &x_s,
            &x_t,
            2.0,
            2.0,
            crate::linalg::DEFAULT_RIDGE,
            CritiqueMode::HiddenPlusScore,
        )
        .unwrap();
        assert_eq!(probe.source_stats, probe.target_stats);
        assert_eq!(probe.source_m_stats, probe.target_m_stats);
    }

    #[test]
    fn two_sample_mean_is_midpoint() {
        let models = random_models(7, 4, 2);
        let samples = random_activations(8, 2, 4);
        let x = acts_from(samples.clone(), vec![0, 1], Domain::Source);
        let probe = fit_probe(
            &models,
            &x,
            &x,
            2.0,
            2.0,
            crate::linalg::DEFAULT_RIDGE,
            CritiqueMode::HiddenPlusScore,
        )
        .unwrap();
        let c0 = critique(&models, &samples[0], CritiqueMode::HiddenPlusScore).unwrap();
        let c1 = critique(&models, &samples[1], CritiqueMode::HiddenPlusScore).unwrap();
        for ((m, a), b) in probe.source_stats.mean.iter().zip(&c0.values).zip(&c1.values) {
            assert!((m - (a + b) / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn insufficient_samples_rejected() {
        let models = random_models(9, 4, 2);
        let one = acts_from(random_activations(10, 1, 4), vec![0], Domain::Source);
        let many = acts_from(random_activations(11, 5, 4), vec![0; 5], Domain::Target);
        assert!(matches!(
            fit_probe(&models, &one, &many, 2.0, 2.0, 1e-6, CritiqueMode::HiddenPlusScore),
            Err(Error::InsufficientSamples { needed: 2, available: 1 })
        ));
    }

    #[test]
    fn fitted_quantities_match_brute_force_oracle() {
        let models = random_models(12, 4, 2);
        let s_samples = random_activations(13, 200, 4);
        let t_samples = random_activations(14, 200, 4);
        let x_s = acts_from(s_samples.clone(), vec![0; 200], Domain::Source);
        let x_t = acts_from(t_samples.clone(), vec![0; 200], Domain::Target);
        let ridge = crate::linalg::DEFAULT_RIDGE;
        let probe = fit_probe(&models, &x_s, &x_t, 2.0, 2.0, ridge, CritiqueMode::HiddenPlusScore)
            .unwrap();

        // Oracle: recompute everything from raw critiques with plain loops.
        let crits: Vec<Vec<f64>> = s_samples
            .iter()
            .map(|x| critique(&models, x, CritiqueMode::HiddenPlusScore).unwrap().values)
            .collect();
        let d = crits[0].len();
        let n = crits.len() as f64;
        let mut mean = vec![0.0; d];
        for c in &crits {
            for (m, v) in mean.iter_mut().zip(c) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-12);
        for (a, b) in probe.source_stats.mean.iter().zip(&mean) {
            assert!(rel(*a, *b) <= 1e-8);
        }
        for i in 0..d {
            for j in 0..d {
                let mut s = 0.0;
                for c in &crits {
                    s += (c[i] - mean[i]) * (c[j] - mean[j]);
                }
                assert!(rel(probe.source_stats.covariance.get(i, j), s / n) <= 1e-8);
            }
        }
        // Distances and their scalar stats.
        let mut ms = Vec::new();
        for c in &crits {
            let mut q = 0.0;
            for i in 0..d {
                for j in 0..d {
                    q += (c[i] - probe.source_stats.mean[i])
                        * probe.source_stats.precision.get(i, j)
                        * (c[j] - probe.source_stats.mean[j]);
                }
            }
            ms.push(q.max(0.0));
        }
        let mu = ms.iter().sum::<f64>() / n;
        let var = ms.iter().map(|m| (m - mu) * (m - mu)).sum::<f64>() / n;
        assert!(rel(probe.source_m_stats.mu, mu) <= 1e-8);
        assert!(rel(probe.source_m_stats.sigma, var.sqrt()) <= 1e-8);
    }

    /// Probe whose distances are directly controllable: identity
    /// precisions, critique = [x, 0] gives M_s = x² and M_t = (x − t)².
    fn handmade_probe(
        source_m: ScalarStats,
        target_m: ScalarStats,
        target_mean_offset: f64,
        lambda_s: f64,
        lambda_t: f64,
    ) -> ProbeParams {
        let gauss = |mean: Vec<f64>| GaussianStats {
            mean,
            covariance: Matrix::identity(2),
            precision: Matrix::identity(2),
        };
        ProbeParams {
            source_stats: gauss(vec![0.0, 0.0]),
            target_stats: gauss(vec![target_mean_offset, 0.0]),
            source_m_stats: source_m,
            target_m_stats: target_m,
            lambda_s,
            lambda_t,
            mode: CritiqueMode::ScoreOnly,
        }
    }

    #[test]
    fn band_center_and_closed_boundary() {
        // Source band [0, 4]: μ = 2, σ = 1, λ = 2.
        let probe = handmade_probe(
            ScalarStats { mu: 2.0, sigma: 1.0 },
            ScalarStats { mu: 100.0, sigma: 1.0 },
            0.0,
            2.0,
            2.0,
        );
        // M_s = 2² = 4 exactly: the upper boundary, inclusive.
        let boundary = Critique { values: vec![2.0, 0.0] };
        assert!(membership(&probe, &boundary).unwrap().in_source);
        // Center of the band.
        let center = Critique {
            values: vec![2.0f64.sqrt(), 0.0],
        };
        assert!(membership(&probe, &center).unwrap().in_source);
        // Just beyond the boundary.
        let outside = Critique { values: vec![2.01, 0.0] };
        assert!(!membership(&probe, &outside).unwrap().in_source);
    }

    #[test]
    fn membership_matches_inequality_oracle() {
        let mut r = rng(15);
        for _ in 0..50 {
            let mu: f64 = r.gen_range(0.0..20.0);
            let sigma: f64 = r.gen_range(0.1..5.0);
            let lambda: f64 = r.gen_range(0.1..3.0);
            let probe = handmade_probe(
                ScalarStats { mu, sigma },
                ScalarStats { mu, sigma },
                r.gen_range(-2.0..2.0),
                lambda,
                lambda,
            );
            let c = Critique {
                values: vec![r.gen_range(-6.0..6.0), r.gen_range(-6.0..6.0)],
            };
            let got = membership(&probe, &c).unwrap();
            // Oracle: recompute both distances and inequalities directly.
            let m_s = c.values[0] * c.values[0] + c.values[1] * c.values[1];
            let dt0 = c.values[0] - probe.target_stats.mean[0];
            let m_t = dt0 * dt0 + c.values[1] * c.values[1];
            assert_eq!(got.in_source, (m_s >= mu - lambda * sigma) && (m_s <= mu + lambda * sigma));
            assert_eq!(got.in_target, (m_t >= mu - lambda * sigma) && (m_t <= mu + lambda * sigma));
        }
    }

    #[test]
    fn widening_lambda_never_loses_membership() {
        let mut r = rng(16);
        for _ in 0..100 {
            let probe1 = handmade_probe(
                ScalarStats { mu: r.gen_range(0.0..10.0), sigma: r.gen_range(0.1..3.0) },
                ScalarStats { mu: 1.0, sigma: 1.0 },
                0.0,
                r.gen_range(0.1..2.0),
                1.0,
            );
            let probe2 = probe1
                .with_lambdas(probe1.lambda_s + r.gen_range(0.0..3.0), 1.0)
                .unwrap();
            let c = Critique {
                values: vec![r.gen_range(-5.0..5.0), r.gen_range(-5.0..5.0)],
            };
            let m1 = membership(&probe1, &c).unwrap();
            let m2 = membership(&probe2, &c).unwrap();
            assert!(!m1.in_source || m2.in_source, "interval nesting violated");
        }
    }

    #[test]
    fn unambiguous_membership_routes_without_tiebreak() {
        // Source band [0, 4]; target band unreachable.
        let probe = handmade_probe(
            ScalarStats { mu: 2.0, sigma: 1.0 },
            ScalarStats { mu: 100.0, sigma: 1.0 },
            0.0,
            2.0,
            2.0,
        );
        let c = Critique { values: vec![1.0, 0.0] };
        let r = route(&probe, &c).unwrap();
        assert_eq!(r.branch, Domain::Source);
        assert!(!r.tie_broken);
        assert!(r.membership.in_source && !r.membership.in_target);

        // Mirror image for the target side.
        let probe = handmade_probe(
            ScalarStats { mu: 100.0, sigma: 1.0 },
            ScalarStats { mu: 2.0, sigma: 1.0 },
            0.0,
            2.0,
            2.0,
        );
        let r = route(&probe, &c).unwrap();
        assert_eq!(r.branch, Domain::Target);
        assert!(!r.tie_broken);
    }

    #[test]
    fn neither_case_takes_smaller_normalized_deviation() {
        // λ = 0.3 with M_s = 12 (z_s = 0.4) and M_t = 33 (z_t = 1.3):
        // both out of band, source deviation smaller.
        let x = 12.0f64.sqrt();
        let t = x - 33.0f64.sqrt();
        let probe = handmade_probe(
            ScalarStats { mu: 10.0, sigma: 5.0 },
            ScalarStats { mu: 20.0, sigma: 10.0 },
            t,
            0.3,
            0.3,
        );
        let c = Critique { values: vec![x, 0.0] };
        let r = route(&probe, &c).unwrap();
        assert!(!r.membership.in_source && !r.membership.in_target);
        assert_eq!(r.branch, Domain::Source);
        assert!(r.tie_broken);
        assert!((r.m_source - 12.0).abs() < 1e-9);
        assert!((r.m_target - 33.0).abs() < 1e-9);
    }

    #[test]
    fn exact_tie_prefers_source() {
        // Identical stats on both sides and a critique equidistant from
        // both means → z_s = z_t exactly.
        let probe = handmade_probe(
            ScalarStats { mu: 1.0, sigma: 1.0 },
            ScalarStats { mu: 1.0, sigma: 1.0 },
            0.0,
            0.1,
            0.1,
        );
        let c = Critique { values: vec![3.0, 0.0] };
        let r = route(&probe, &c).unwrap();
        assert!(r.tie_broken);
        assert_eq!(r.branch, Domain::Source);
    }

    #[test]
    fn training_critiques_satisfy_chebyshev_bound() {
        let models = random_models(17, 4, 2);
        let x_s = acts_from(random_activations(18, 120, 4), vec![0; 120], Domain::Source);
        let x_t = acts_from(random_activations(19, 120, 4), vec![0; 120], Domain::Target);
        let lambda = 2.0;
        let probe = fit_probe(
            &models,
            &x_s,
            &x_t,
            lambda,
            lambda,
            crate::linalg::DEFAULT_RIDGE,
            CritiqueMode::HiddenPlusScore,
        )
        .unwrap();
        let in_count = x_s
            .activations
            .iter()
            .filter(|x| {
                let c = critique(&models, x, probe.mode).unwrap();
                membership(&probe, &c).unwrap().in_source
            })
            .count();
        let frac = in_count as f64 / x_s.len() as f64;
        assert!(
            frac >= 1.0 - 1.0 / (lambda * lambda),
            "fraction {frac} below Chebyshev floor"
        );
    }

    fn trained_models(seed: u64) -> (EtcModels, ActivationSet, ActivationSet) {
        let arch = test_arch();
        let d = gen_blobs(2, 60, 4, 5.0, seed).unwrap();
        let x_s = acts_from(d.samples.clone(), d.labels.clone(), Domain::Source);
        let d2 = gen_blobs(2, 60, 4, 5.0, seed + 1).unwrap();
        let x_t = acts_from(d2.samples.clone(), d2.labels.clone(), Domain::Target);
        let config = TrainConfig {
            epochs: 25,
            seed: seed + 2,
            ..TrainConfig::default()
        };
        let (e_source, d_source) = train_source_branch(&x_s, &arch, &config).unwrap();
        let models = EtcModels {
            e_target: e_source.clone(),
            discriminator: Network::glorot(
                &arch.discriminator_specs(),
                &mut rng(seed + 3),
            )
            .unwrap(),
            d_target: d_source.clone(),
            e_source,
            d_source,
            layer_index: 1,
        };
        (models, x_s, x_t)
    }

    #[test]
    fn degenerate_lambdas_force_each_branch() {
        let (models, x_s, x_t) = trained_models(20);
        let probe = fit_probe(
            &models,
            &x_s,
            &x_t,
            2.0,
            2.0,
            crate::linalg::DEFAULT_RIDGE,
            CritiqueMode::HiddenPlusScore,
        )
        .unwrap();
        let all_source = probe.with_lambdas(1e9, 1e-12).unwrap();
        let all_target = probe.with_lambdas(1e-12, 1e9).unwrap();
        for x in x_s.activations.iter().take(20) {
            let (label, r) = classify(&models, &all_source, x).unwrap();
            assert_eq!(r.branch, Domain::Source);
            let direct = argmax(
                &models
                    .d_source
                    .forward(&models.e_source.forward(x).unwrap())
                    .unwrap(),
            );
            assert_eq!(label, direct);

            let (label, r) = classify(&models, &all_target, x).unwrap();
            assert_eq!(r.branch, Domain::Target);
            let direct = argmax(
                &models
                    .d_target
                    .forward(&models.e_target.forward(x).unwrap())
                    .unwrap(),
            );
            assert_eq!(label, direct);
        }
    }

    #[test]
    fn routing_is_invisible_under_identical_branches() {
        // Same encoder and same head on both branches: the label cannot
        // depend on the route taken.
        let (models, x_s, x_t) = trained_models(30);
        let probe = fit_probe(
            &models,
            &x_s,
            &x_t,
            2.0,
            2.0,
            crate::linalg::DEFAULT_RIDGE,
            CritiqueMode::HiddenPlusScore,
        )
        .unwrap();
        for x in x_t.activations.iter().take(30) {
            let (label, _) = classify(&models, &probe, x).unwrap();
            let direct = argmax(
                &models
                    .d_source
                    .forward(&models.e_source.forward(x).unwrap())
                    .unwrap(),
            );
            assert_eq!(label, direct);
        }
    }
}
