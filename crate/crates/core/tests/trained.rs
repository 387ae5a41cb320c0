//! Properties of a jointly trained model on eight Gaussians.

mod common;

use std::path::PathBuf;
use std::sync::OnceLock;

use common::bits;
use repguide::config::{ExperimentConfig, GuidanceKind};
use repguide::data::generate_range;
use repguide::experiment::{self as exp, run_experiment};
use repguide::guidance::{build_representatives, Guidance, GuidanceConfig, RepGConfig, Selection, DEFAULT_K};
use repguide::interpolant::interpolate;
use repguide::nets::ModelBundle;
use repguide::probe::{similarity_probe, Candidate, ProbeConfig};
use repguide::rng::{gaussian_vec, stream, Domain};
use repguide::sampling::{sample_chains, Chain, SamplerConfig};
use repguide::tensor::cosine;
use repguide::training::train_flow;
use repguide::Tensor;

struct Trained {
    cfg: ExperimentConfig,
    bundle: ModelBundle,
    checkpoint: PathBuf,
    _dir: tempfile::TempDir,
}

fn trained() -> &'static Trained {
    static T: OnceLock<Trained> = OnceLock::new();
    T.get_or_init(|| {
        let mut cfg = ExperimentConfig::default();
        cfg.training.flow.steps = 2000;
        cfg.sync();
        let dir = tempfile::tempdir().unwrap();
        let (bundle, _) = exp::obtain_bundle(&cfg, dir.path()).unwrap();
        Trained {
            checkpoint: dir.path().join(exp::BUNDLE_FILE),
            cfg,
            bundle,
            _dir: dir,
        }
    })
}

fn held_out(n: usize) -> repguide::data::ToyDataset {
    let cfg = &trained().cfg;
    generate_range(cfg.dataset.kind, 8, 3_000_000, n, 42).unwrap()
}

#[test]
fn encoder_features_cluster_by_class() {
    let data = held_out(8000);
    let reps = trained().bundle.encoder.encode(&data.points).unwrap();
    let (mut intra, mut inter) = ((0.0, 0usize), (0.0, 0usize));
    // Each sample against the next 25 in index order.
    for i in 0..data.len() {
        for j in i + 1..(i + 26).min(data.len()) {
            let c = cosine(reps.row(i), reps.row(j));
            if data.labels[i] == data.labels[j] {
                intra = (intra.0 + c, intra.1 + 1);
            } else {
                inter = (inter.0 + c, inter.1 + 1);
            }
        }
    }
    let (intra, inter) = (intra.0 / intra.1 as f64, inter.0 / inter.1 as f64);
    assert!(intra > inter, "intra {intra} inter {inter}");
}

#[test]
fn projector_recovers_clean_representation_at_t_zero() {
    let b = &trained().bundle;
    let data = held_out(500);
    let classes: Vec<Option<usize>> = data.labels.iter().map(|&c| Some(c)).collect();
    let pred = b.predicted_target(&data.points, 0.0, &classes).unwrap();
    let truth = b.encoder.encode(&data.points).unwrap();
    let mean = pred.rows().zip(truth.rows()).map(|(p, q)| cosine(p, q)).sum::<f64>() / 500.0;
    assert!(mean > 0.9, "mean cosine {mean}");
}

#[test]
fn predicted_target_degrades_with_noise() {
    let b = &trained().bundle;
    let data = held_out(200);
    let classes: Vec<Option<usize>> = data.labels.iter().map(|&c| Some(c)).collect();
    let truth = b.encoder.encode(&data.points).unwrap();
    let mut z = Vec::new();
    for i in 0..200 {
        z.extend(gaussian_vec(&mut stream(5, Domain::Synthetic, i, 0), 2));
    }
    let z = Tensor::matrix(200, 2, z).unwrap();
    let at = |t: f64| {
        let xt = interpolate(&data.points, &z, t, &b.schedule).unwrap();
        let p = b.predicted_target(&xt, t, &classes).unwrap();
        p.rows().zip(truth.rows()).map(|(p, q)| cosine(p, q)).sum::<f64>() / 200.0
    };
    let (early, late) = (at(0.05), at(0.95));
    assert!(early > late, "t=0.05: {early}, t=0.95: {late}");
}

#[test]
fn probe_curves_are_complete() {
    let b = &trained().bundle;
    let data = held_out(128);
    let cfg = ProbeConfig {
        include_noisy_latent: true,
        ..ProbeConfig::default()
    };
    let curves = similarity_probe(b, &data, &cfg).unwrap();
    assert_eq!(curves.points.len(), 11 * 3 * 4);
    assert!(curves.points.iter().all(|p| p.similarity.is_finite()));
    for c in cfg.candidates() {
        assert_eq!(curves.curve(c).len(), 11);
    }
    let one_step_t0 = curves.curve(Candidate::OneStep)[0];
    assert_eq!(one_step_t0.0, 0.0);
    assert!((one_step_t0.1 - 1.0).abs() < 1e-6, "{one_step_t0:?}");
    let without = similarity_probe(b, &data, &ProbeConfig::default()).unwrap();
    assert_eq!(without.points.len(), 11 * 3 * 3);
}

fn small_run(cfg: &ExperimentConfig) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.checkpoint = Some(trained().checkpoint.clone());
    c.sampler.samples_per_class = 25;
    c.sampler.config.nfe = 50;
    c.eval.reference_size = 400;
    c
}

#[test]
fn experiment_runs_are_deterministic() {
    let cfg = small_run(&trained().cfg);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_experiment(&cfg, a.path()).unwrap();
    let rb = run_experiment(&cfg, b.path()).unwrap();
    assert_eq!(ra, rb);
    assert!(ra.is_finite());
    for f in ["report.txt", "samples_3.csv", "config.ini", "samples.svg"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let report = std::fs::read_to_string(a.path().join("report.txt")).unwrap();
    for key in ["toy_frechet: ", "energy_distance: ", "mode_coverage: "] {
        assert!(report.lines().any(|l| l.starts_with(key)), "{report}");
    }
}

#[test]
fn absent_guidance_equals_zero_strength() {
    let plain = small_run(&trained().cfg);
    assert_eq!(plain.guidance.method, GuidanceKind::None);
    let mut zero = plain.clone();
    zero.guidance.method = GuidanceKind::RPred;
    zero.guidance.config.alpha = 0.0;
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(run_experiment(&plain, a.path()).unwrap(), run_experiment(&zero, b.path()).unwrap());
}

#[test]
fn repg_uses_representatives_of_each_class() {
    let t = trained();
    let data = exp::training_data(&t.cfg).unwrap();
    let reps = build_representatives(&t.bundle.encoder, &data, DEFAULT_K).unwrap();
    assert_eq!(reps.len(), 8);
    for vs in reps.values() {
        assert_eq!(vs.len(), 5);
        assert!(vs.iter().all(|v| v.len() == t.bundle.rep_dim()));
    }
    assert_eq!(reps, build_representatives(&t.bundle.encoder, &data, DEFAULT_K).unwrap());

    let repg = RepGConfig::new(reps, Selection::RandomPerStep).unwrap();
    let g = Guidance::repg(GuidanceConfig::default(), repg);
    let sampler = SamplerConfig { nfe: 50, ..SamplerConfig::default() };
    let chains: Vec<Chain> = (0..16).map(|i| Chain::new(i, Some(i as usize % 8))).collect();
    let a = sample_chains(&t.bundle, &chains, &sampler, Some(&g)).unwrap();
    let b = sample_chains(&t.bundle, &chains, &sampler, Some(&g)).unwrap();
    assert_eq!(bits(&a.finals), bits(&b.finals));
    assert_eq!(a.guided_steps, vec![5, 6, 7, 8, 9, 10]);
    assert!(a.reports.iter().all(|r| r.records.len() == 6 && r.records.iter().all(|x| x.loss >= 0.0)));
}

#[test]
fn flow_training_is_reproducible() {
    let t = trained();
    let mut cfg = t.cfg.clone();
    cfg.training.flow.steps = 25;
    let data = exp::training_data(&cfg).unwrap();
    let init = || ModelBundle::init(cfg.model, t.bundle.encoder.clone(), 3).unwrap();
    let (a, la) = train_flow(init(), &data, &cfg.training.flow).unwrap();
    let (b, lb) = train_flow(init(), &data, &cfg.training.flow).unwrap();
    assert_eq!(la, lb);
    assert_eq!(a, b);
}
