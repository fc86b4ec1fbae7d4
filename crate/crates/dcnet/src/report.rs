//! Text outputs. Every artifact starts with `# dcnet <kind>` followed by
//! the resolved configuration as `# key = value` comment lines.

use std::fmt::Write;

use dcnet_core::analysis::{self, ModelReport};
use dcnet_core::metrics::{self, ConfusionMatrix};
use dcnet_core::train::EpochRecord;

use crate::error::Result;

pub fn header(kind: &str, config_text: &str) -> String {
    let mut out = format!("# dcnet {kind}\n");
    for line in config_text.lines() {
        let _ = writeln!(out, "# {line}");
    }
    out
}

/// Tab-separated `epoch train_loss val_loss val_acc val_kappa`, one line
/// per epoch, values in shortest round-trip form.
pub fn history_tsv(config_text: &str, history: &[EpochRecord]) -> String {
    let mut out = header("history", config_text);
    out.push_str("epoch\ttrain_loss\tval_loss\tval_acc\tval_kappa\n");
    for r in history {
        let _ = writeln!(out, "{}\t{:?}\t{:?}\t{:?}\t{:?}", r.epoch, r.train_loss, r.val_loss, r.val_acc, r.val_kappa);
    }
    out
}

/// Metrics of one evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalSummary {
    pub trials: u64,
    pub loss: f64,
    /// Mean recall over the classes present.
    pub accuracy: f64,
    pub micro_accuracy: f64,
    pub kappa: f64,
    pub kappa_per_class: f64,
    pub per_class_recall: Vec<Option<f64>>,
    pub absent_classes: Vec<usize>,
    pub confusion: ConfusionMatrix,
}

impl EvalSummary {
    pub fn new(loss: f64, cm: ConfusionMatrix) -> Result<Self> {
        let present = metrics::present_classes(&cm);
        Ok(Self {
            trials: cm.total(),
            loss,
            accuracy: metrics::accuracy_over(&cm, &present)?,
            micro_accuracy: metrics::micro_accuracy(&cm)?,
            kappa: metrics::kappa(&cm)?,
            kappa_per_class: metrics::kappa_per_class(&cm)?,
            per_class_recall: metrics::per_class_recall(&cm),
            absent_classes: (0..cm.n_classes()).filter(|c| !present.contains(c)).collect(),
            confusion: cm,
        })
    }

    /// `key = value` lines; `nan` marks the recall of absent classes.
    pub fn records(&self) -> String {
        let recall: Vec<String> = self.per_class_recall.iter().map(|r| r.map_or("nan".into(), |v| format!("{v:?}"))).collect();
        let rows: Vec<String> = self.confusion.rows().iter().map(|r| format!("[{}]", r.iter().map(u64::to_string).collect::<Vec<_>>().join(", "))).collect();
        let absent: Vec<String> = self.absent_classes.iter().map(usize::to_string).collect();
        let mut out = String::new();
        let _ = writeln!(out, "trials = {}", self.trials);
        let _ = writeln!(out, "loss = {:?}", self.loss);
        let _ = writeln!(out, "accuracy = {:?}", self.accuracy);
        let _ = writeln!(out, "micro_accuracy = {:?}", self.micro_accuracy);
        let _ = writeln!(out, "kappa = {:?}", self.kappa);
        let _ = writeln!(out, "kappa_per_class = {:?}", self.kappa_per_class);
        let _ = writeln!(out, "per_class_recall = [{}]", recall.join(", "));
        let _ = writeln!(out, "absent_classes = [{}]", absent.join(", "));
        let _ = writeln!(out, "confusion = [{}]", rows.join(", "));
        out
    }
}

pub fn eval_report(config_text: &str, summary: &EvalSummary) -> String {
    header("evaluation", config_text) + &summary.records()
}

pub fn shape(dims: &[usize]) -> String {
    let inner: Vec<String> = dims.iter().map(usize::to_string).collect();
    format!("({})", inner.join(", "))
}

fn row_shape(row: &analysis::LayerRow) -> String {
    if row.repeat > 1 {
        format!("{} x {}", row.repeat, shape(&row.output))
    } else {
        shape(&row.output)
    }
}

/// Aligned table of every layer followed by totals, reference comparisons
/// and receptive fields.
pub fn model_report_text(report: &ModelReport) -> String {
    let mut out = format!("{} per-layer report\n", report.title);
    out.push_str("ops: flops = 2 x macs + other ops (activation, pooling, bias: 1/element; batch norm: 2/element; softmax: 3/element)\n\n");
    let name_w = report.rows.iter().map(|r| r.name.len()).max().unwrap_or(5).max(5);
    let shape_w = report.rows.iter().map(|r| row_shape(r).len()).max().unwrap_or(6).max(6);
    let _ = writeln!(out, "{:<name_w$}  {:<shape_w$}  {:>9}  {:>12}  {:>12}", "layer", "output", "params", "macs", "flops");
    for r in &report.rows {
        let _ = writeln!(out, "{:<name_w$}  {:<shape_w$}  {:>9}  {:>12}  {:>12}", r.name, row_shape(r), r.params, r.macs, r.flops());
    }
    let _ = writeln!(out, "{:<name_w$}  {:<shape_w$}  {:>9}  {:>12}  {:>12}", "total", "", report.params(), report.macs(), report.flops());
    out.push('\n');
    let _ = writeln!(out, "trainable parameters: {}", report.params());
    let _ = writeln!(out, "non-trainable (running statistics): {}", report.non_trainable());
    let _ = writeln!(out, "MACs: {} ({:.3} M)", report.macs(), report.macs() as f64 / 1e6);
    let _ = writeln!(out, "FLOPs: {} ({:.3} M)", report.flops(), report.flops() as f64 / 1e6);
    if report.title == "dcnet" {
        let delta = report.params() as i64 - analysis::REFERENCE_PARAMS as i64;
        let _ = writeln!(out, "reference parameters {}: delta {delta:+}", analysis::REFERENCE_PARAMS);
        let ratio = report.flops() as f64 / 1e6 / analysis::REFERENCE_MFLOPS;
        let _ = writeln!(out, "reference {} MFLOPs: ratio {ratio:.3}", analysis::REFERENCE_MFLOPS);
        let _ = writeln!(out, "windows: {} of length {}", report.n_windows, report.window_len);
        for f in &report.receptive_fields {
            let _ = write!(out, "receptive field, dilation {} kernel {}: {}", f.dilation, f.kernel, f.value);
            match analysis::receptive_field_note(f.dilation, f.kernel) {
                Some(note) => {
                    let _ = writeln!(out, "  (note: {note})");
                }
                None => out.push('\n'),
            }
        }
    } else if report.title == "EEGNet" {
        let _ = writeln!(
            out,
            "reference parameters {}: delta {:+}",
            analysis::EEGNET_REFERENCE_PARAMS,
            report.params() as i64 - analysis::EEGNET_REFERENCE_PARAMS as i64
        );
    }
    out
}

/// One `layer <name> key=value ...` record per layer plus `total` and
/// `receptive_field` records.
pub fn model_report_records(report: &ModelReport) -> String {
    let mut out = String::new();
    for r in &report.rows {
        let dims: Vec<String> = r.output.iter().map(usize::to_string).collect();
        let _ = writeln!(
            out,
            "layer name={} output={} repeat={} params={} non_trainable={} macs={} other_ops={} flops={}",
            r.name,
            dims.join("x"),
            r.repeat,
            r.params,
            r.non_trainable,
            r.macs,
            r.other_ops,
            r.flops()
        );
    }
    let _ = writeln!(
        out,
        "total model={} params={} non_trainable={} macs={} other_ops={} flops={}",
        report.title.replace(' ', "_"),
        report.params(),
        report.non_trainable(),
        report.macs(),
        report.other_ops(),
        report.flops()
    );
    for f in &report.receptive_fields {
        let _ = writeln!(out, "receptive_field dilation={} kernel={} value={}", f.dilation, f.kernel, f.value);
    }
    if report.n_windows > 0 {
        let _ = writeln!(out, "windows count={} length={}", report.n_windows, report.window_len);
    }
    out
}

/// One row of a sweep or ablation table.
#[derive(Clone, Debug, PartialEq)]
pub struct TableRow {
    pub label: String,
    pub summary: EvalSummary,
    pub epochs: usize,
    pub seconds: f64,
}

/// Tab-separated `label accuracy kappa epochs seconds`. Run time is kept
/// out of the table so reruns compare equal; it is logged instead.
pub fn results_table(kind: &str, label_header: &str, config_text: &str, rows: &[TableRow]) -> String {
    let mut out = header(kind, config_text);
    let _ = writeln!(out, "{label_header}\taccuracy\tkappa\tval_loss\tepochs");
    for r in rows {
        let _ = writeln!(out, "{}\t{:.4}\t{:.4}\t{:.6}\t{}", r.label, r.summary.accuracy, r.summary.kappa, r.summary.loss, r.epochs);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use dcnet_core::model::ModelConfig;

    #[test]
    fn default_report_shows_pipeline() {
        let text = model_report_text(&analysis::model_report(&ModelConfig::default()).unwrap());
        for s in ["(1125, 22, 1)", "(140, 1, 16)", "(420, 1, 16)", "(1, 16, 32)", "6 x (27, 16)", "(4)"] {
            assert!(text.contains(s), "{s} missing from\n{text}");
        }
        assert!(text.contains("states 17") || text.contains("stated value is 17"), "{text}");
    }

    #[test]
    fn eval_records() {
        let cm = ConfusionMatrix::from_rows(&[vec![2, 0, 0], vec![1, 1, 0], vec![0, 0, 0]]).unwrap();
        let s = EvalSummary::new(0.5, cm).unwrap();
        let text = s.records();
        assert!(text.contains("accuracy = 0.75"));
        assert!(text.contains("per_class_recall = [1.0, 0.5, nan]"));
        assert!(text.contains("absent_classes = [2]"));
        assert!(text.contains("confusion = [[2, 0, 0], [1, 1, 0], [0, 0, 0]]"));
    }
}
