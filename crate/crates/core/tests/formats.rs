use proptest::prelude::*;
use repguide::config::{ExperimentConfig, KEYS};
use repguide::experiment::{samples_from_csv, samples_to_csv};
use repguide::guidance::{GuidanceRecord, GuidanceReport};
use repguide::probe::{Candidate, ProbeCurves, ProbePoint};
use repguide::training::{LossLog, LossRecord};
use repguide::{Error, Tensor};

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(1.0)
}

/// Default config with one `key = value` line of `section` replaced by `line`.
fn with_line(section: &str, key: &str, line: &str) -> Option<String> {
    let text = ExperimentConfig::default().to_ini();
    let mut current = String::new();
    let mut replaced = false;
    let out: Vec<String> = text
        .lines()
        .map(|l| {
            if l.starts_with('[') {
                current = l.trim_matches(|c| c == '[' || c == ']').to_string();
            }
            let k = l.split('=').next().unwrap().trim();
            if current == section && k == key && !replaced {
                replaced = true;
                let value = l.split_once('=').unwrap().1;
                format!("{line} ={value}")
            } else {
                l.to_string()
            }
        })
        .collect();
    replaced.then(|| out.join("\n"))
}

#[test]
fn every_known_key_is_written_and_accepted() {
    let text = ExperimentConfig::default().to_ini();
    for (section, keys) in KEYS {
        for key in *keys {
            if (*section, *key) == ("experiment", "checkpoint") {
                continue;
            }
            let doc = with_line(section, key, key).unwrap_or_else(|| panic!("[{section}] {key} not written"));
            assert_eq!(doc, text.trim_end());
        }
    }
    assert_eq!(ExperimentConfig::parse(&text).unwrap(), ExperimentConfig::default());
}

fn misspell(key: &str, kind: u8, pos: usize, ch: char) -> String {
    let mut c: Vec<char> = key.chars().collect();
    let i = pos % c.len();
    match kind % 4 {
        0 => {
            c.remove(i);
        }
        1 => c.insert(i, ch),
        2 => c[i] = ch,
        _ => {
            let j = (i + 1) % c.len();
            c.swap(i, j);
        }
    }
    c.into_iter().collect()
}

fn all_keys() -> Vec<(&'static str, &'static str)> {
    KEYS.iter()
        .flat_map(|(s, ks)| ks.iter().map(move |k| (*s, *k)))
        .filter(|p| *p != ("experiment", "checkpoint"))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn misspelled_keys_are_rejected(
        which in 0usize..1000,
        kind in 0u8..4,
        pos in 0usize..64,
        ch in prop::sample::select(('a'..='z').chain('0'..='9').chain(['_']).collect::<Vec<_>>()),
    ) {
        let keys = all_keys();
        let (section, key) = keys[which % keys.len()];
        let typo = misspell(key, kind, pos, ch);
        let valid = KEYS.iter().find(|(s, _)| *s == section).unwrap().1;
        prop_assume!(!typo.is_empty() && !valid.contains(&typo.as_str()));
        let doc = with_line(section, key, &typo).unwrap();
        match ExperimentConfig::parse(&doc) {
            Err(Error::ConfigSyntax { message, .. }) => prop_assert!(message.contains(&typo), "{message}"),
            other => prop_assert!(false, "`{typo}` in [{section}] gave {other:?}"),
        }
    }

    #[test]
    fn misspelled_sections_are_rejected(which in 0usize..100, kind in 0u8..4, pos in 0usize..16, ch in prop::sample::select(vec!['a', 'e', 'x', '_', '1'])) {
        let section = KEYS[which % KEYS.len()].0;
        let typo = misspell(section, kind, pos, ch);
        prop_assume!(!typo.is_empty() && KEYS.iter().all(|(s, _)| *s != typo));
        let doc = ExperimentConfig::default().to_ini().replace(&format!("[{section}]"), &format!("[{typo}]"));
        let rejected = matches!(ExperimentConfig::parse(&doc), Err(Error::ConfigSyntax { .. }));
        prop_assert!(rejected, "[{}] accepted", typo);
    }

    #[test]
    fn sample_csv_round_trips(rows in prop::collection::vec((0usize..8, prop::collection::vec(-1e6f64..1e6, 3)), 1..20)) {
        let labels: Vec<usize> = rows.iter().map(|r| r.0).collect();
        let data: Vec<f64> = rows.iter().flat_map(|r| r.1.clone()).collect();
        let x = Tensor::matrix(rows.len(), 3, data).unwrap();
        let (y, l) = samples_from_csv(&samples_to_csv(&x, &labels)).unwrap();
        prop_assert_eq!(l, labels);
        for (a, b) in x.data().iter().zip(y.data()) {
            prop_assert!(close(*a, *b));
        }
    }

    #[test]
    fn guidance_report_round_trips(recs in prop::collection::vec((0usize..250, 0.0f64..1.0, 0.0f64..4.0, 0.0f64..100.0, -1.0f64..1.0), 0..12), skipped in 0usize..3) {
        let report = GuidanceReport {
            records: recs
                .iter()
                .map(|&(step, t, loss, grad_norm, cosine_to_target)| GuidanceRecord { step, t, loss, grad_norm, cosine_to_target })
                .collect(),
            skipped,
        };
        let back = GuidanceReport::from_csv(&report.to_csv()).unwrap();
        prop_assert_eq!(back.records.len(), report.records.len());
        for (a, b) in report.records.iter().zip(&back.records) {
            prop_assert_eq!(a.step, b.step);
            prop_assert!(close(a.t, b.t) && close(a.loss, b.loss) && close(a.grad_norm, b.grad_norm));
            prop_assert!(close(a.cosine_to_target, b.cosine_to_target));
        }
    }

    #[test]
    fn probe_csv_round_trips(pts in prop::collection::vec((0.0f64..1.0, 0u64..5, 0usize..4, -1.0f64..1.0), 0..30)) {
        let cands = [Candidate::OneStep, Candidate::Projector, Candidate::FullDenoise, Candidate::NoisyLatent];
        let curves = ProbeCurves {
            points: pts.iter().map(|&(t, seed, c, similarity)| ProbePoint { t, seed, candidate: cands[c], similarity }).collect(),
        };
        let back = ProbeCurves::from_csv(&curves.to_csv()).unwrap();
        prop_assert_eq!(back.points.len(), curves.points.len());
        for (a, b) in curves.points.iter().zip(&back.points) {
            prop_assert!(a.seed == b.seed && a.candidate == b.candidate);
            prop_assert!(close(a.t, b.t) && close(a.similarity, b.similarity));
        }
    }

    #[test]
    fn loss_log_round_trips(recs in prop::collection::vec((0.0f64..50.0, -1.0f64..1.0), 1..30)) {
        let log = LossLog {
            records: recs.iter().enumerate().map(|(step, &(cfm_loss, align_loss))| LossRecord { step, cfm_loss, align_loss }).collect(),
        };
        let back = LossLog::from_csv(&log.to_csv()).unwrap();
        for (a, b) in log.records.iter().zip(&back.records) {
            prop_assert!(a.step == b.step && close(a.cfm_loss, b.cfm_loss) && close(a.align_loss, b.align_loss));
        }
    }
}
