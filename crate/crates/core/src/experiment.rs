//! End-to-end runs: data, training, sampling, metrics and their artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::config::{ExperimentConfig, GuidanceKind};
use crate::data::{generate_range, ToyDataset};
use crate::error::{Error, Result};
use crate::guidance::{build_representatives, Guidance, GuidanceRecord, GuidanceReport, RepGConfig};
use crate::metrics::{evaluate, MetricReport};
use crate::nets::{Encoder, ModelBundle};
use crate::probe::{similarity_probe, ProbeCurves};
use crate::sampling::{sample_parallel, Chain, SampleOutput};
use crate::svg;
use crate::tensor::Tensor;
use crate::training::{train_encoder, train_flow, EncoderReport, LossLog};

pub const BUNDLE_FILE: &str = "bundle.rgck";
pub const ENCODER_FILE: &str = "encoder.rgck";

/// `dir` itself, or a fresh `runs/run-<unix seconds>` directory.
pub fn output_dir(out: Option<&Path>) -> Result<PathBuf> {
    let dir = match out {
        Some(d) => d.to_path_buf(),
        None => {
            let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
            PathBuf::from("runs").join(format!("run-{secs}"))
        }
    };
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

pub fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(path, e))
}

/// `class_id,x_0,...,x_{d-1}` rows.
pub fn samples_to_csv(x: &Tensor, labels: &[usize]) -> String {
    let d = x.rows_cols().map_or(0, |(_, d)| d);
    let mut s = String::from("class_id");
    for j in 0..d {
        s.push_str(&format!(",x_{j}"));
    }
    s.push('\n');
    for (row, label) in x.rows().zip(labels) {
        s.push_str(&label.to_string());
        for v in row {
            s.push_str(&format!(",{v:e}"));
        }
        s.push('\n');
    }
    s
}

pub fn samples_from_csv(text: &str) -> Result<(Tensor, Vec<usize>)> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty sample file".into()))?;
    let d = header.split(',').count() - 1;
    if !header.starts_with("class_id") || d == 0 {
        return Err(Error::Parse(format!("bad sample header `{header}`")));
    }
    let (mut rows, mut labels) = (Vec::new(), Vec::new());
    for line in lines.filter(|l| !l.is_empty()) {
        let mut f = line.split(',');
        let bad = || Error::Parse(format!("bad sample row `{line}`"));
        labels.push(f.next().and_then(|c| c.parse().ok()).ok_or_else(bad)?);
        let row = f.map(|v| v.parse::<f64>().map_err(|_| bad())).collect::<Result<Vec<_>>>()?;
        if row.len() != d {
            return Err(bad());
        }
        rows.push(row);
    }
    Ok((Tensor::from_rows(&rows)?, labels))
}

/// Chain-averaged guidance log: row `j` averages the `j`-th update of every chain.
pub fn mean_report(reports: &[GuidanceReport]) -> GuidanceReport {
    let len = reports.iter().map(|r| r.records.len()).max().unwrap_or(0);
    let records = (0..len)
        .map(|j| {
            let rs: Vec<&GuidanceRecord> = reports.iter().filter_map(|r| r.records.get(j)).collect();
            let n = rs.len() as f64;
            GuidanceRecord {
                step: rs[0].step,
                t: rs[0].t,
                loss: rs.iter().map(|r| r.loss).sum::<f64>() / n,
                grad_norm: rs.iter().map(|r| r.grad_norm).sum::<f64>() / n,
                cosine_to_target: rs.iter().map(|r| r.cosine_to_target).sum::<f64>() / n,
            }
        })
        .collect();
    GuidanceReport {
        records,
        skipped: reports.iter().map(|r| r.skipped).sum(),
    }
}

pub fn training_data(cfg: &ExperimentConfig) -> Result<ToyDataset> {
    let d = &cfg.dataset;
    generate_range(d.kind, d.num_classes, 0, d.size, d.seed)
}

/// Reference samples drawn past the end of the training range.
pub fn reference_data(cfg: &ExperimentConfig) -> Result<ToyDataset> {
    let d = &cfg.dataset;
    let start = (d.size + cfg.training.holdout) as u64;
    generate_range(d.kind, d.num_classes, start, cfg.eval.reference_size, cfg.eval.reference_seed)
}

pub fn encoder_stage(cfg: &ExperimentConfig, data: &ToyDataset) -> Result<(Encoder, EncoderReport)> {
    let t = &cfg.training;
    train_encoder(data, cfg.encoder, &t.encoder, t.holdout, t.min_encoder_accuracy).map_err(|e| e.in_stage("train-encoder"))
}

/// Trains the velocity net and projector on top of `encoder`.
pub fn flow_stage(cfg: &ExperimentConfig, data: &ToyDataset, encoder: Encoder) -> Result<(ModelBundle, LossLog)> {
    let bundle = ModelBundle::init(cfg.model, encoder, cfg.seed).map_err(|e| e.in_stage("train-flow"))?;
    train_flow(bundle, data, &cfg.training.flow).map_err(|e| e.in_stage("train-flow"))
}

/// What a run had to train, if anything.
#[derive(Clone, Debug, Default)]
pub struct TrainingSummary {
    pub encoder: Option<EncoderReport>,
    pub flow: Option<LossLog>,
}

/// The configured checkpoint, a bundle left in `dir` by an earlier stage,
/// or a freshly trained one (saved into `dir`).
pub fn obtain_bundle(cfg: &ExperimentConfig, dir: &Path) -> Result<(ModelBundle, TrainingSummary)> {
    if let Some(path) = &cfg.checkpoint {
        return Ok((ModelBundle::load(path).map_err(|e| e.in_stage("load"))?, TrainingSummary::default()));
    }
    let cached = dir.join(BUNDLE_FILE);
    if cached.exists() {
        return Ok((ModelBundle::load(&cached).map_err(|e| e.in_stage("load"))?, TrainingSummary::default()));
    }
    let data = training_data(cfg).map_err(|e| e.in_stage("gen-data"))?;
    let mut summary = TrainingSummary::default();
    let enc_path = dir.join(ENCODER_FILE);
    let encoder = if enc_path.exists() {
        Encoder::load(&enc_path).map_err(|e| e.in_stage("load"))?
    } else {
        let (enc, report) = encoder_stage(cfg, &data)?;
        enc.save(&enc_path)?;
        summary.encoder = Some(report);
        enc
    };
    let (bundle, log) = flow_stage(cfg, &data, encoder)?;
    bundle.save(&cached)?;
    write(dir, "loss.csv", &log.to_csv())?;
    summary.flow = Some(log);
    Ok((bundle, summary))
}

pub fn representatives(cfg: &ExperimentConfig, bundle: &ModelBundle) -> Result<RepGConfig> {
    let data = training_data(cfg)?;
    let vectors = build_representatives(&bundle.encoder, &data, cfg.guidance.repg_k)?;
    RepGConfig::new(vectors, cfg.guidance.repg_selection)
}

/// `representatives.csv`: `class_id,rank,r_0,...`.
pub fn representatives_to_csv(r: &RepGConfig) -> String {
    let dim = r.vectors.values().next().map_or(0, |v| v[0].len());
    let mut s = String::from("class_id,rank");
    for j in 0..dim {
        s.push_str(&format!(",r_{j}"));
    }
    s.push('\n');
    for (class, vs) in &r.vectors {
        for (rank, v) in vs.iter().enumerate() {
            s.push_str(&format!("{class},{rank}"));
            for x in v {
                s.push_str(&format!(",{x:e}"));
            }
            s.push('\n');
        }
    }
    s
}

pub fn guidance_for(cfg: &ExperimentConfig, bundle: &ModelBundle) -> Result<Option<Guidance>> {
    let repg = match cfg.guidance.method {
        GuidanceKind::RepG => Some(representatives(cfg, bundle).map_err(|e| e.in_stage("repg-build"))?),
        _ => None,
    };
    cfg.guidance(repg)
}

/// `samples_per_class` chains per class, chain `i` of class `i % K`.
pub fn chains(cfg: &ExperimentConfig) -> Vec<Chain> {
    let k = cfg.dataset.num_classes;
    (0..k * cfg.sampler.samples_per_class)
        .map(|i| Chain::new(i as u64, Some(i % k)))
        .collect()
}

pub fn sample_stage(cfg: &ExperimentConfig, bundle: &ModelBundle, guidance: Option<&Guidance>) -> Result<(SampleOutput, Vec<usize>)> {
    let chains = chains(cfg);
    let labels = chains.iter().map(|c| c.class.unwrap()).collect();
    let out = sample_parallel(bundle, &chains, &cfg.sampler.config, guidance, cfg.sampler.chunk)
        .map_err(|e| e.in_stage("sample"))?;
    Ok((out, labels))
}

/// Writes `samples_<class>.csv`, `samples.svg` and `guidance_report.csv`.
pub fn write_samples(dir: &Path, out: &SampleOutput, labels: &[usize], num_classes: usize) -> Result<()> {
    for class in 0..num_classes {
        let rows: Vec<Vec<f64>> = out
            .finals
            .rows()
            .zip(labels)
            .filter(|(_, &l)| l == class)
            .map(|(r, _)| r.to_vec())
            .collect();
        if rows.is_empty() {
            continue;
        }
        let x = Tensor::from_rows(&rows)?;
        write(dir, &format!("samples_{class}.csv"), &samples_to_csv(&x, &vec![class; rows.len()]))?;
    }
    let pts: Vec<(f64, f64, usize)> = out
        .finals
        .rows()
        .zip(labels)
        .map(|(r, &l)| (r[0], r.get(1).copied().unwrap_or(0.0), l))
        .collect();
    write(dir, "samples.svg", &svg::scatter("samples", &pts))?;
    write(dir, "guidance_report.csv", &mean_report(&out.reports).to_csv())
}

pub fn evaluate_stage(cfg: &ExperimentConfig, bundle: &ModelBundle, out: &SampleOutput, labels: &[usize]) -> Result<MetricReport> {
    let reference = reference_data(cfg).map_err(|e| e.in_stage("eval"))?;
    evaluate(
        &reference.points,
        &reference.labels,
        &out.finals,
        labels,
        cfg.dataset.kind,
        cfg.dataset.num_classes,
        &bundle.encoder,
    )
    .map_err(|e| e.in_stage("eval"))
}

/// Full pipeline into `dir`: resolved config, bundle, samples, metrics and `report.txt`.
pub fn run_experiment(cfg: &ExperimentConfig, dir: &Path) -> Result<MetricReport> {
    write(dir, "config.ini", &cfg.to_ini())?;
    let (bundle, summary) = obtain_bundle(cfg, dir)?;
    let guidance = guidance_for(cfg, &bundle)?;
    let (out, labels) = sample_stage(cfg, &bundle, guidance.as_ref())?;
    write_samples(dir, &out, &labels, cfg.dataset.num_classes)?;
    let metrics = evaluate_stage(cfg, &bundle, &out, &labels)?;
    let mut report = metrics.to_text();
    if let Some(e) = summary.encoder {
        report.push_str(&format!("encoder_holdout_accuracy: {}\n", e.holdout_accuracy));
    }
    if let Some(log) = &summary.flow {
        report.push_str(&format!("initial_cfm_loss: {}\nfinal_cfm_loss: {}\n", log.initial_cfm(), log.final_cfm()));
    }
    let objective = out.reports.iter().map(GuidanceReport::trajectory_objective).sum::<f64>() / out.reports.len().max(1) as f64;
    report.push_str(&format!(
        "guidance: {}\nguided_steps: {}\ntrajectory_objective: {}\nvelocity_evals: {}\n",
        cfg.guidance.method,
        out.guided_steps.len(),
        objective,
        out.velocity_evals
    ));
    write(dir, "report.txt", &report)?;
    Ok(metrics)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub t_low: f64,
    pub t_high: f64,
    pub guided_steps: usize,
    pub metrics: MetricReport,
}

/// One guided run per configured interval. Uses R-pred unless RepG is configured.
pub fn ablate_interval(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<AblationRow>> {
    write(dir, "config.ini", &cfg.to_ini())?;
    let (bundle, _) = obtain_bundle(cfg, dir)?;
    let mut base = cfg.clone();
    if base.guidance.method == GuidanceKind::None {
        base.guidance.method = GuidanceKind::RPred;
    }
    let mut rows = Vec::new();
    for &(t_low, t_high) in &cfg.ablation {
        let mut c = base.clone();
        c.guidance.config.t_low = t_low;
        c.guidance.config.t_high = t_high;
        let guidance = guidance_for(&c, &bundle)?;
        let (out, labels) = sample_stage(&c, &bundle, guidance.as_ref())?;
        rows.push(AblationRow {
            t_low,
            t_high,
            guided_steps: out.guided_steps.len(),
            metrics: evaluate_stage(&c, &bundle, &out, &labels)?,
        });
    }
    let mut csv = String::from("t_low,t_high,guided_steps,toy_frechet,energy_distance,mode_coverage\n");
    let mut text = String::new();
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{:e},{:e},{}\n",
            r.t_low, r.t_high, r.guided_steps, r.metrics.toy_frechet, r.metrics.energy_distance, r.metrics.mode_coverage
        ));
        text.push_str(&format!(
            "interval [{}, {}]: toy_frechet {} energy_distance {} mode_coverage {}\n",
            r.t_low, r.t_high, r.metrics.toy_frechet, r.metrics.energy_distance, r.metrics.mode_coverage
        ));
    }
    write(dir, "ablation.csv", &csv)?;
    write(dir, "report.txt", &text)?;
    Ok(rows)
}

/// Writes `similarity_probe.csv` and `similarity_probe.svg`; returns the curves.
pub fn probe_stage(cfg: &ExperimentConfig, dir: &Path) -> Result<ProbeCurves> {
    let (bundle, _) = obtain_bundle(cfg, dir)?;
    let data = reference_data(cfg)?;
    let curves = similarity_probe(&bundle, &data, &cfg.probe).map_err(|e| e.in_stage("probe-similarity"))?;
    write(dir, "similarity_probe.csv", &curves.to_csv())?;
    write(dir, "similarity_probe.svg", &curves.to_svg(&cfg.probe.candidates()))?;
    let flag = if curves.projector_beats_denoise() { "pass" } else { "observe" };
    write(dir, "report.txt", &format!("projector_beats_full_denoise_t_ge_0.6: {flag}\n"))?;
    Ok(curves)
}
