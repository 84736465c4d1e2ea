//! Tab-separated output tables. Each starts with a `#` header line naming
//! its columns.

use std::collections::BTreeMap;

use super::eval::{AblationReport, EvalReport, UpdateRun};
use super::text::fmt_f64;
use crate::model::TrialId;
use crate::trainer::{PcaProjection, TrainReport};

/// One row per `(object, template)` run.
pub fn eval_entries_tsv(reports: &[EvalReport]) -> String {
    let mut out =
        String::from("# variant\tregime\tobject\ttemplate\tdistance\tloss\tinitial_loss\tu\n");
    for r in reports {
        for e in &r.entries {
            let u: Vec<String> = e.u.iter().map(|&x| fmt_f64(x)).collect();
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.variant,
                r.regime,
                e.object,
                e.template,
                fmt_f64(e.distance),
                fmt_f64(e.loss),
                fmt_f64(e.initial_loss),
                u.join(" ")
            ));
        }
    }
    out
}

/// Mean and variance of the distance per `(regime, variant)`.
pub fn eval_summary_tsv(reports: &[EvalReport]) -> String {
    let mut out = String::from("# regime\tvariant\tmean\tvariance\tn\n");
    for r in reports {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            r.regime,
            r.variant,
            fmt_f64(r.mean()),
            fmt_f64(r.variance()),
            r.entries.len()
        ));
    }
    out
}

/// The regime-by-variant grid of mean distances.
pub fn ablation_tsv(report: &AblationReport) -> String {
    let mut regimes: Vec<&str> = Vec::new();
    for r in &report.reports {
        if !regimes.contains(&r.regime.as_str()) {
            regimes.push(&r.regime);
        }
    }
    let variants: Vec<_> = report.trained.iter().map(|t| t.variant).collect();
    let mut out = String::from("# regime");
    for v in &variants {
        out.push_str(&format!("\t{v} mean\t{v} variance"));
    }
    out.push('\n');
    for regime in regimes {
        out.push_str(regime);
        for &v in &variants {
            match report.report(v, regime) {
                Some(r) => out.push_str(&format!(
                    "\t{}\t{}",
                    fmt_f64(r.mean()),
                    fmt_f64(r.variance())
                )),
                None => out.push_str("\t-\t-"),
            }
        }
        out.push('\n');
    }
    out
}

/// Loss and bias table after each epoch.
pub fn train_report_tsv(report: &TrainReport) -> String {
    let ids: Vec<TrialId> = report.pb_table.keys().copied().collect();
    let n_p = report.pb_table.values().next().map_or(0, |p| p.len());
    let mut out = String::from("# epoch\tloss");
    for id in &ids {
        for j in 0..n_p {
            out.push_str(&format!("\tp{id}_{j}"));
        }
    }
    out.push('\n');
    for (e, (loss, table)) in report.epoch_loss.iter().zip(&report.pb_history).enumerate() {
        out.push_str(&format!("{}\t{}", e + 1, fmt_f64(*loss)));
        for id in &ids {
            for &x in table[id].iter() {
                out.push_str(&format!("\t{}", fmt_f64(x)));
            }
        }
        out.push('\n');
    }
    out
}

/// Bias after every online update step, then the final nearest trial.
pub fn update_run_tsv(run: &UpdateRun, labels: &BTreeMap<TrialId, String>) -> String {
    let mut out = String::from("# regime\tobservation\tstep");
    for j in 0..run.final_p.len() {
        out.push_str(&format!("\tp_{j}"));
    }
    out.push('\n');
    for s in &run.steps {
        out.push_str(&format!("{}\t{}\t{}", run.regime, s.observation, s.epoch));
        for &x in s.p.iter() {
            out.push_str(&format!("\t{}", fmt_f64(x)));
        }
        out.push('\n');
    }
    let nearest = labels
        .get(&run.nearest)
        .cloned()
        .unwrap_or_else(|| run.nearest.to_string());
    out.push_str(&format!("# nearest trained bias: {nearest}\n"));
    out
}

/// Two principal coordinates per trial.
pub fn pca_tsv(proj: &PcaProjection, labels: &BTreeMap<TrialId, String>) -> String {
    let mut out = format!(
        "# explained variance {} {}\n# trial\tlabel\tpc1\tpc2\n",
        fmt_f64(proj.explained[0]),
        fmt_f64(proj.explained[1])
    );
    for p in &proj.points {
        let label = labels.get(&p.trial).map_or("-", String::as_str);
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            p.trial,
            label,
            fmt_f64(p.coords[0]),
            fmt_f64(p.coords[1])
        ));
    }
    out
}
