//! Parallel leakage evaluation and report formatting.

use std::fmt::Write as _;

use ipcr_core::leakage::{
    check_direct, combine, factorizes, pair_joint_entropy, pair_sample_entropy, pair_tasks, LeakageError, LeakageModel,
    Phase2Policy, SamplingModel,
};
use ipcr_core::Scheme;
use rayon::prelude::*;

/// Same value as `ipcr_core::leakage::leakage`, bit for bit, with the
/// `(x, I)` pairs spread over the rayon pool.
pub fn leakage_par(model: &LeakageModel) -> Result<f64, LeakageError> {
    let tasks = pair_tasks(model)?;
    if factorizes(model) {
        let e = tasks.par_iter().map(|(x, i)| pair_sample_entropy(model, x, i)).collect();
        Ok(model.m as f64 * combine(model, e))
    } else {
        check_direct(model)?;
        let e = tasks.par_iter().map(|(x, i)| pair_joint_entropy(model, x, i)).collect();
        Ok(combine(model, e))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub scheme: Scheme,
    pub immutable_count: usize,
    pub policy: Phase2Policy,
    pub sampling: SamplingModel,
    pub base: f64,
    /// `Err` when the configuration is outside the enumeration guard.
    pub leakage: Result<f64, LeakageError>,
}

/// Both plain schemes, every `|I|`, every sampling model, and every
/// distance-round policy for the two-phase scheme.
pub fn leakage_report(r: u32, d: usize, m: usize, base: f64) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    for scheme in [Scheme::SinglePhase, Scheme::TwoPhase] {
        let policies: &[Phase2Policy] = if scheme.is_two_phase() { &Phase2Policy::ALL } else { &[Phase2Policy::Always] };
        for &sampling in &SamplingModel::ALL {
            for &policy in policies {
                for s in 0..=d {
                    let model = LeakageModel::new(scheme, r, d, m, s, base).with_sampling(sampling).with_policy(policy);
                    rows.push(ReportRow { scheme, immutable_count: s, policy, sampling, base, leakage: leakage_par(&model) });
                }
            }
        }
    }
    rows
}

fn policy_label(row: &ReportRow) -> &'static str {
    if row.scheme.is_two_phase() {
        row.policy.name()
    } else {
        "n/a"
    }
}

pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from("scheme,|I|,policy,sampling_model,base,leakage\n");
    for r in rows {
        let value = match &r.leakage {
            Ok(v) => format!("{v:.6}"),
            Err(_) => "NA".into(),
        };
        writeln!(out, "{},{},{},{},{},{}", r.scheme, r.immutable_count, policy_label(r), r.sampling.name(), r.base, value).unwrap();
    }
    out
}

pub fn report_table(rows: &[ReportRow]) -> String {
    let header = ["scheme", "|I|", "policy", "sampling", "leakage"];
    let cells: Vec<[String; 5]> = rows
        .iter()
        .map(|r| {
            [
                r.scheme.to_string(),
                r.immutable_count.to_string(),
                policy_label(r).to_string(),
                r.sampling.name().to_string(),
                match &r.leakage {
                    Ok(v) => format!("{v:.4}"),
                    Err(e) => format!("({e})"),
                },
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, row: &[&str]| {
        let parts: Vec<String> = row
            .iter()
            .zip(widths)
            .enumerate()
            .map(|(k, (c, w))| if k == 1 || k == 4 { format!("{c:>w$}") } else { format!("{c:<w$}") })
            .collect();
        writeln!(out, "{}", parts.join("  ").trim_end()).unwrap();
    };
    line(&mut out, &header);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    line(&mut out, &rule.iter().map(String::as_str).collect::<Vec<_>>());
    for row in &cells {
        line(&mut out, &row.iter().map(String::as_str).collect::<Vec<_>>());
    }
    out
}
