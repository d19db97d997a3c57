use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{HarnessError, LabeledSample};
use crate::metrics::{aggregate, Aggregate, PromptCounts, PromptMetrics, SampleLabel};

/// Which samples count towards `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportMode {
    /// Only samples flagged as satisfying their constraints.
    SatisfiedOnly,
    All,
}

impl ReportMode {
    pub fn name(self) -> &'static str {
        match self {
            ReportMode::SatisfiedOnly => "satisfied-only",
            ReportMode::All => "all",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSeedRow {
    pub prompt_id: String,
    pub seed: u64,
    pub counts: PromptCounts,
    pub values: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub seeds: Vec<u64>,
    pub rows: Vec<PromptSeedRow>,
    /// Per metric: per-seed dataset means (in `seeds` order), their mean
    /// and the 95% half-width.
    pub aggregate: BTreeMap<String, Aggregate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub ks: Vec<u64>,
    pub decoders: BTreeMap<String, BTreeMap<ReportMode, ModeReport>>,
}

/// Metric names in report order.
pub fn metric_names(ks: &[u64]) -> Vec<String> {
    let mut names = vec!["sven_sr".to_string()];
    for k in ks {
        names.push(format!("pass@{k}"));
        names.push(format!("secure-pass@{k}"));
        names.push(format!("secure@{k}_pass"));
    }
    names
}

fn metric_values(m: &PromptMetrics, ks: &[u64]) -> BTreeMap<String, f64> {
    let mut values = BTreeMap::new();
    values.insert("sven_sr".to_string(), m.sven_sr);
    for k in ks {
        values.insert(format!("pass@{k}"), m.pass_at_k[k]);
        values.insert(format!("secure-pass@{k}"), m.secure_pass_at_k[k]);
        values.insert(format!("secure@{k}_pass"), m.secure_at_k_pass[k]);
    }
    values
}

/// Computes every metric per (prompt, seed) and aggregates across seeds,
/// separately for each decoder and in both counting modes. A prompt with
/// no counted samples for a seed scores zero on every metric.
pub fn report(labeled: &[LabeledSample], ks: &[u64]) -> Result<Report, HarnessError> {
    if labeled.is_empty() {
        return Err(HarnessError::EmptyReport);
    }
    let ks: Vec<u64> = ks.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if ks.is_empty() || ks[0] == 0 {
        return Err(HarnessError::InvalidConfig("k values must be >= 1 and at least one is required".into()));
    }
    let mut by_decoder: BTreeMap<&str, Vec<&LabeledSample>> = BTreeMap::new();
    for s in labeled {
        by_decoder.entry(s.decoder_name.as_str()).or_default().push(s);
    }
    let mut decoders = BTreeMap::new();
    for (name, samples) in by_decoder {
        let mut modes = BTreeMap::new();
        for mode in [ReportMode::SatisfiedOnly, ReportMode::All] {
            modes.insert(mode, mode_report(&samples, mode, &ks)?);
        }
        decoders.insert(name.to_string(), modes);
    }
    Ok(Report { ks, decoders })
}

fn mode_report(samples: &[&LabeledSample], mode: ReportMode, ks: &[u64]) -> Result<ModeReport, HarnessError> {
    let prompts: BTreeSet<&str> = samples.iter().map(|s| s.prompt_id.as_str()).collect();
    let seeds: Vec<u64> = samples.iter().map(|s| s.seed).collect::<BTreeSet<_>>().into_iter().collect();
    let mut groups: BTreeMap<(&str, u64), Vec<&LabeledSample>> = BTreeMap::new();
    for s in samples {
        if mode == ReportMode::All || s.constraint_satisfied {
            groups.entry((s.prompt_id.as_str(), s.seed)).or_default().push(s);
        }
    }

    let names = metric_names(ks);
    let mut rows = Vec::new();
    let mut per_metric: BTreeMap<&str, Vec<Vec<f64>>> =
        names.iter().map(|n| (n.as_str(), vec![Vec::new(); seeds.len()])).collect();
    for &prompt in &prompts {
        for (si, &seed) in seeds.iter().enumerate() {
            let mut group: Vec<&LabeledSample> = groups.get(&(prompt, seed)).cloned().unwrap_or_default();
            group.sort_by_key(|s| s.sample_index);
            let labels: Vec<SampleLabel> = group.iter().map(|s| s.label.clone()).collect();
            let metrics = PromptMetrics::from_labels(&labels, ks)?;
            let values = metric_values(&metrics, ks);
            for (name, v) in &values {
                per_metric.get_mut(name.as_str()).expect("known metric")[si].push(*v);
            }
            rows.push(PromptSeedRow { prompt_id: prompt.to_string(), seed, counts: metrics.counts, values });
        }
    }
    let aggregate = per_metric
        .into_iter()
        .map(|(name, per_seed)| Ok((name.to_string(), aggregate(&per_seed)?)))
        .collect::<Result<BTreeMap<_, _>, HarnessError>>()?;
    Ok(ModeReport { seeds, rows, aggregate })
}

pub fn report_json(report: &Report) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

/// Flat table with columns `decoder mode scope prompt_id seed metric value`.
/// `scope` is `prompt` for per-prompt rows, `seed` for per-seed means, and
/// `mean` or `ci95` for the aggregate; unused key columns hold `*`.
pub fn report_tsv(report: &Report) -> String {
    let names = metric_names(&report.ks);
    let mut out = String::from("decoder\tmode\tscope\tprompt_id\tseed\tmetric\tvalue\n");
    for (decoder, modes) in &report.decoders {
        for (mode, r) in modes {
            let mode = mode.name();
            for row in &r.rows {
                for name in &names {
                    let _ = writeln!(out, "{decoder}\t{mode}\tprompt\t{}\t{}\t{name}\t{}", row.prompt_id, row.seed, row.values[name]);
                }
            }
            for name in &names {
                let agg = &r.aggregate[name];
                for (seed, m) in r.seeds.iter().zip(&agg.per_seed_means) {
                    let _ = writeln!(out, "{decoder}\t{mode}\tseed\t*\t{seed}\t{name}\t{m}");
                }
                let _ = writeln!(out, "{decoder}\t{mode}\tmean\t*\t*\t{name}\t{}", agg.mean);
                let _ = writeln!(out, "{decoder}\t{mode}\tci95\t*\t*\t{name}\t{}", agg.ci95_half_width);
            }
        }
    }
    out
}
