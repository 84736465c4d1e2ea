//! Trial dataset and checkpoint files.
//!
//! Both are text: a magic line, a `version` line, a fixed sequence of
//! `key value` header lines, the payload, and a closing `end` line. Numbers
//! are written with 17 significant digits, so loading reproduces every
//! value exactly and re-saving a loaded file gives the same bytes.
//!
//! ```text
//! spnpb-trial
//! version 1
//! id 0
//! label E0-B0
//! n_u 4
//! n_s 36
//! records 600
//! <u_1 .. u_n_u> | <s_1 .. s_n_s>
//! ...
//! end
//! ```
//!
//! ```text
//! spnpb-checkpoint
//! version 1
//! variant PB+ST
//! n_u 4
//! n_p 2
//! n_v 32
//! n_tau 4
//! hidden 32 64 64
//! u_mean ..      u_std ..      s_mean ..      s_std ..
//! layers 4
//! layer 0 6 32           # index, inputs, outputs
//! <one line per output row of weights>
//! bias ..
//! ...
//! pb_table 6
//! pb <trial id> <label> <p_1 .. p_n_p>
//! end
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use super::text::{check_header, fmt_row, read_file, split_token, write_file, LineReader};
use crate::data::{Record, TrialDataset};
use crate::error::{Error, Result};
use crate::model::{
    layer_spec, NormalizationStats, ParametricBias, PbTable, SpnpbConfig, SpnpbModel, TrialId,
    Variant,
};
use crate::net::Mlp;

pub const TRIAL_MAGIC: &str = "spnpb-trial";
pub const CHECKPOINT_MAGIC: &str = "spnpb-checkpoint";
pub const FORMAT_VERSION: u32 = 1;

/// Placeholder written for trials without a label.
const NO_LABEL: &str = "-";

pub fn trial_to_text(trial: &TrialDataset) -> Result<String> {
    trial.validate()?;
    check_label(&trial.label)?;
    let mut out = String::new();
    out.push_str(&format!("{TRIAL_MAGIC}\nversion {FORMAT_VERSION}\n"));
    out.push_str(&format!("id {}\n", trial.id));
    out.push_str(&format!("label {}\n", label_or_dash(&trial.label)));
    out.push_str(&format!("n_u {}\nn_s {}\n", trial.n_u(), trial.n_s()));
    out.push_str(&format!("records {}\n", trial.len()));
    for r in &trial.records {
        out.push_str(&fmt_row(&r.u));
        out.push_str(" | ");
        out.push_str(&fmt_row(&r.s));
        out.push('\n');
    }
    out.push_str("end\n");
    Ok(out)
}

pub fn trial_from_text(text: &str, path: &Path) -> Result<TrialDataset> {
    let mut r = LineReader::new(text, path);
    check_header(&mut r, TRIAL_MAGIC, FORMAT_VERSION)?;
    let id_text = r.field("id")?;
    let id: TrialId = id_text
        .parse()
        .map_err(|e| r.parse_error(format!("bad trial id `{id_text}`: {e}")))?;
    let label = label_from(r.field("label")?);
    let n_u = r.usize_field("n_u")?;
    let n_s = r.usize_field("n_s")?;
    let count = r.usize_field("records")?;
    if count == 0 {
        return Err(r.parse_error("a trial needs at least one record"));
    }
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let line = r.next("a record line")?;
        if line == "end" {
            return Err(r.truncated(&format!("{count} records, found {}", records.len())));
        }
        let (u, s) = line
            .split_once('|')
            .ok_or_else(|| r.parse_error("record line needs `u | s`"))?;
        records.push(Record {
            u: r.floats_n(u, n_u, "control input")?,
            s: r.floats_n(s, n_s, "sensor state")?,
        });
    }
    if r.next("`end`")? != "end" {
        return Err(r.parse_error(format!("expected `end` after {count} records")));
    }
    r.finish()?;
    TrialDataset::new(id, label, records)
}

pub fn save_trial(trial: &TrialDataset, path: &Path) -> Result<()> {
    write_file(path, &trial_to_text(trial)?)
}

pub fn load_trial(path: &Path) -> Result<TrialDataset> {
    trial_from_text(&read_file(path)?, path)
}

/// A trained model together with the labels of its trials.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: SpnpbModel,
    pub labels: BTreeMap<TrialId, String>,
}

impl Checkpoint {
    pub fn new(model: SpnpbModel) -> Self {
        Self {
            model,
            labels: BTreeMap::new(),
        }
    }

    pub fn label(&self, id: TrialId) -> Option<&str> {
        self.labels.get(&id).map(String::as_str)
    }

    /// Trial id whose label is `label`.
    pub fn trial_id(&self, label: &str) -> Result<TrialId> {
        self.labels
            .iter()
            .find(|(_, l)| l.as_str() == label)
            .map(|(&id, _)| id)
            .ok_or_else(|| Error::Unknown {
                kind: "regime",
                name: label.into(),
            })
    }

    /// The trained bias of regime `label`, or an empty bias for variants
    /// without one.
    pub fn bias_for(&self, label: &str) -> Result<ParametricBias> {
        if !self.model.pb_enabled() {
            return Ok(ParametricBias::zeros(0));
        }
        let id = self.trial_id(label)?;
        self.model
            .pb_table
            .get(&id)
            .cloned()
            .ok_or(Error::MissingBias(id))
    }

    pub fn to_text(&self) -> Result<String> {
        for l in self.labels.values() {
            check_label(l)?;
        }
        let m = &self.model;
        let c = m.config();
        let norm = m.normalization();
        let mut out = String::new();
        out.push_str(&format!("{CHECKPOINT_MAGIC}\nversion {FORMAT_VERSION}\n"));
        out.push_str(&format!("variant {}\n", m.variant()));
        out.push_str(&format!(
            "n_u {}\nn_p {}\nn_v {}\nn_tau {}\n",
            c.n_u, c.n_p, c.n_v, c.n_tau
        ));
        let hidden: Vec<String> = c.hidden.iter().map(usize::to_string).collect();
        out.push_str(&format!("hidden {}\n", hidden.join(" ")));
        out.push_str(&format!("u_mean {}\n", fmt_row(&norm.u_mean)));
        out.push_str(&format!("u_std {}\n", fmt_row(&norm.u_std)));
        out.push_str(&format!("s_mean {}\n", fmt_row(&norm.s_mean)));
        out.push_str(&format!("s_std {}\n", fmt_row(&norm.s_std)));
        let sizes = m.net().spec().sizes();
        out.push_str(&format!("layers {}\n", sizes.len() - 1));
        for l in 0..sizes.len() - 1 {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            out.push_str(&format!("layer {l} {n_in} {n_out}\n"));
            for row in m.net().weights(l).chunks_exact(n_in) {
                out.push_str(&fmt_row(row));
                out.push('\n');
            }
            out.push_str(&format!("bias {}\n", fmt_row(m.net().biases(l))));
        }
        out.push_str(&format!("pb_table {}\n", m.pb_table.len()));
        for (id, p) in &m.pb_table {
            let label = self.labels.get(id).map_or(NO_LABEL, |l| label_or_dash(l));
            out.push_str(format!("pb {id} {label} {}", fmt_row(p)).trim_end());
            out.push('\n');
        }
        out.push_str("end\n");
        Ok(out)
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let mut r = LineReader::new(text, path);
        check_header(&mut r, CHECKPOINT_MAGIC, FORMAT_VERSION)?;
        let v = r.field("variant")?;
        let variant: Variant = v.parse().map_err(|e: Error| r.parse_error(e.to_string()))?;
        let n_u = r.usize_field("n_u")?;
        let n_p = r.usize_field("n_p")?;
        let n_v = r.usize_field("n_v")?;
        let n_tau = r.usize_field("n_tau")?;
        let hidden_text = r.field("hidden")?;
        let hidden = hidden_text
            .split_whitespace()
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|e| r.parse_error(format!("bad width `{t}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let config = SpnpbConfig {
            n_u,
            n_p,
            n_v,
            n_tau,
            hidden,
        };
        let spec = layer_spec(&config, variant).map_err(|e| r.parse_error(e.to_string()))?;
        let n_s = config.n_s();
        let mut vec_field = |key: &str, n: usize| -> Result<Vec<f64>> {
            let t = r.field(key)?;
            r.floats_n(t, n, key)
        };
        let norm = NormalizationStats {
            u_mean: vec_field("u_mean", n_u)?,
            u_std: vec_field("u_std", n_u)?,
            s_mean: vec_field("s_mean", n_s)?,
            s_std: vec_field("s_std", n_s)?,
        };

        let sizes = spec.sizes().to_vec();
        let depth = r.usize_field("layers")?;
        if depth != sizes.len() - 1 {
            return Err(dimension(&r, "layer count", sizes.len() - 1, depth));
        }
        let mut params = Vec::with_capacity(spec.param_count());
        for l in 0..depth {
            let t = r.field("layer")?;
            let dims = t
                .split_whitespace()
                .map(|x| {
                    x.parse::<usize>()
                        .map_err(|e| r.parse_error(format!("bad layer field `{x}`: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            let [idx, n_in, n_out] = dims[..] else {
                return Err(r.parse_error("expected `layer <index> <inputs> <outputs>`"));
            };
            if idx != l {
                return Err(r.parse_error(format!("expected layer {l}, found {idx}")));
            }
            if n_in != sizes[l] {
                return Err(dimension(&r, &format!("layer {l} inputs"), sizes[l], n_in));
            }
            if n_out != sizes[l + 1] {
                return Err(dimension(
                    &r,
                    &format!("layer {l} outputs"),
                    sizes[l + 1],
                    n_out,
                ));
            }
            for row in 0..n_out {
                let line = r.next(&format!("weight row {row} of layer {l}"))?;
                params.extend(r.floats_n(line, n_in, &format!("layer {l} weight row {row}"))?);
            }
            let b = r.field("bias")?;
            params.extend(r.floats_n(b, n_out, &format!("layer {l} bias"))?);
        }
        let net = Mlp::from_params(spec, params).map_err(|e| r.parse_error(e.to_string()))?;

        let count = r.usize_field("pb_table")?;
        let mut pb_table = PbTable::new();
        let mut labels = BTreeMap::new();
        for _ in 0..count {
            let rest = r.field("pb")?;
            let (id_text, rest) = split_token(rest);
            let (label, values) = split_token(rest);
            let id: TrialId = id_text
                .parse()
                .map_err(|e| r.parse_error(format!("bad trial id `{id_text}`: {e}")))?;
            let p = r.floats_n(values, n_p, &format!("bias of trial {id}"))?;
            if pb_table.insert(id, ParametricBias::new(p)).is_some() {
                return Err(r.parse_error(format!("duplicate trial id {id}")));
            }
            if !label.is_empty() && label != NO_LABEL {
                labels.insert(id, label.to_string());
            }
        }
        if r.next("`end`")? != "end" {
            return Err(r.parse_error("expected `end`"));
        }
        r.finish()?;
        let model = SpnpbModel::from_parts(config, variant, net, norm, pb_table)?;
        Ok(Self { model, labels })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_text()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&read_file(path)?, path)
    }
}

fn dimension(r: &LineReader<'_>, what: &str, expected: usize, got: usize) -> Error {
    Error::DimensionMismatch {
        what: format!("{} line {}: {what}", r.path().display(), r.line()),
        expected,
        got,
    }
}

fn label_or_dash(label: &str) -> &str {
    if label.is_empty() {
        NO_LABEL
    } else {
        label
    }
}

fn label_from(text: &str) -> String {
    if text == NO_LABEL {
        String::new()
    } else {
        text.to_string()
    }
}

/// Labels are single whitespace-free tokens.
pub fn check_label(label: &str) -> Result<()> {
    if label.chars().any(char::is_whitespace) || label == NO_LABEL {
        return Err(Error::InvalidConfig(format!(
            "label `{label}` must be a single token other than `{NO_LABEL}`"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial() -> TrialDataset {
        TrialDataset::new(
            3,
            "E1-B0",
            vec![
                Record {
                    u: vec![0.1, -0.2],
                    s: vec![1.0 / 3.0, -0.0, 2.5e-300],
                },
                Record {
                    u: vec![std::f64::consts::PI, 0.0],
                    s: vec![1e10, 7.0, -1.5],
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn trial_round_trip_is_exact() {
        let t = trial();
        let text = trial_to_text(&t).unwrap();
        let back = trial_from_text(&text, Path::new("t.trial")).unwrap();
        assert_eq!(back, t);
        assert_eq!(trial_to_text(&back).unwrap(), text);
    }

    #[test]
    fn short_trial_is_truncated() {
        let text = trial_to_text(&trial()).unwrap();
        let cut: String = text.lines().take(8).map(|l| format!("{l}\n")).collect();
        assert!(matches!(
            trial_from_text(&cut, Path::new("t.trial")),
            Err(Error::Truncated { .. })
        ));
    }

    #[test]
    fn wrong_version_is_reported() {
        let text = trial_to_text(&trial())
            .unwrap()
            .replace("version 1", "version 7");
        match trial_from_text(&text, Path::new("t.trial")) {
            Err(Error::Version { found, .. }) => assert_eq!(found, "7"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn labels_must_be_tokens() {
        assert!(check_label("E0-B0").is_ok());
        assert!(check_label("two words").is_err());
        assert!(check_label("-").is_err());
    }
}
