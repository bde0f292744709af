//! The four result tables and their CSV / JSON / text renderings.
//!
//! * `stage_results`: per-stage TPRs from cross-validation (11 rows).
//! * `cv_combined`: composed two-stage accuracy vs single-stage, with SDs.
//! * `independent_stages`: per-stage accuracy on an independent test set.
//! * `independent_combined`: two-stage vs single-stage with diff and p-value.
//!
//! Missing values are kept as `None` and rendered as `absent`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ContingencyTable, Direction, F1Scores};
use crate::net::{ClutterLabel, CoarseLabel};

pub const ABSENT: &str = "absent";

/// Row subject: a coarse or fine class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "level", content = "class")]
pub enum RowClass {
    Coarse(CoarseLabel),
    Fine(ClutterLabel),
}

impl RowClass {
    pub fn display_name(self) -> &'static str {
        match self {
            RowClass::Coarse(c) => c.display_name(),
            RowClass::Fine(f) => f.display_name(),
        }
    }
}

/// Which network produced a stage row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageModel {
    Stage1,
    Tree,
    Building,
}

impl StageModel {
    pub fn display_name(self) -> &'static str {
        match self {
            StageModel::Stage1 => "Stage 1",
            StageModel::Tree => "Tree",
            StageModel::Building => "Building",
        }
    }
}

/// The eleven `(class, model)` rows of the per-stage tables, in order.
pub fn stage_row_keys() -> Vec<(RowClass, StageModel)> {
    let mut rows: Vec<_> = CoarseLabel::ALL.iter().map(|&c| (RowClass::Coarse(c), StageModel::Stage1)).collect();
    rows.extend(
        ClutterLabel::ALL[..4].iter().map(|&f| (RowClass::Fine(f), StageModel::Stage1)),
    );
    rows.extend([
        (RowClass::Fine(ClutterLabel::Deciduous), StageModel::Tree),
        (RowClass::Fine(ClutterLabel::Coniferous), StageModel::Tree),
        (RowClass::Fine(ClutterLabel::Residential), StageModel::Building),
        (RowClass::Fine(ClutterLabel::NonResidential), StageModel::Building),
    ]);
    rows
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRow {
    pub class: RowClass,
    pub model: StageModel,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    /// Test samples of this class summed over the folds that had any.
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CombinedRow {
    pub class: ClutterLabel,
    pub two_stage: Option<f64>,
    pub two_stage_sd: Option<f64>,
    pub single_stage: Option<f64>,
    pub single_stage_sd: Option<f64>,
    /// Fold mean of the observed two-stage rate (both stages right).
    #[serde(default)]
    pub two_stage_measured: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndependentStageRow {
    pub class: RowClass,
    pub model: StageModel,
    pub accuracy: Option<f64>,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndependentCombinedRow {
    pub class: ClutterLabel,
    pub two_stage: Option<f64>,
    pub single_stage: Option<f64>,
    pub p_value: Option<f64>,
    pub direction: Option<Direction>,
    pub contingency: ContingencyTable,
}

impl IndependentCombinedRow {
    /// Two-stage minus single-stage accuracy.
    pub fn diff(&self) -> Option<f64> {
        Some(self.two_stage? - self.single_stage?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct F1Comparison {
    pub two_stage: F1Scores<ClutterLabel>,
    pub single_stage: F1Scores<ClutterLabel>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub stage_results: Option<Vec<StageRow>>,
    pub cv_combined: Option<Vec<CombinedRow>>,
    pub independent_stages: Option<Vec<IndependentStageRow>>,
    pub independent_combined: Option<Vec<IndependentCombinedRow>>,
    pub f1: Option<F1Comparison>,
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| ABSENT.to_string(), |x| format!("{x:.4}"))
}

fn cell_p(v: Option<f64>) -> String {
    v.map_or_else(|| ABSENT.to_string(), |x| format!("{x:.3e}"))
}

/// Assemble the report document. Classes missing from a table are filled in
/// as explicit rows with absent values.
pub fn render_report(
    stage_results: Option<Vec<StageRow>>,
    cv_combined: Option<Vec<CombinedRow>>,
    independent_stages: Option<Vec<IndependentStageRow>>,
    independent_combined: Option<Vec<IndependentCombinedRow>>,
    f1: Option<F1Comparison>,
) -> Report {
    let stage_results = stage_results.map(|rows| {
        stage_row_keys()
            .into_iter()
            .map(|(class, model)| {
                rows.iter()
                    .find(|r| r.class == class && r.model == model)
                    .cloned()
                    .unwrap_or(StageRow { class, model, mean: None, sd: None, n: 0 })
            })
            .collect()
    });
    let independent_stages = independent_stages.map(|rows| {
        stage_row_keys()
            .into_iter()
            .map(|(class, model)| {
                rows.iter()
                    .find(|r| r.class == class && r.model == model)
                    .cloned()
                    .unwrap_or(IndependentStageRow { class, model, accuracy: None, n: 0 })
            })
            .collect()
    });
    let cv_combined = cv_combined.map(|rows| {
        ClutterLabel::ALL
            .iter()
            .map(|&class| {
                rows.iter().find(|r| r.class == class).cloned().unwrap_or(CombinedRow {
                    class,
                    two_stage: None,
                    two_stage_sd: None,
                    single_stage: None,
                    single_stage_sd: None,
                    two_stage_measured: None,
                })
            })
            .collect()
    });
    let independent_combined = independent_combined.map(|rows| {
        ClutterLabel::ALL
            .iter()
            .map(|&class| {
                rows.iter().find(|r| r.class == class).cloned().unwrap_or(IndependentCombinedRow {
                    class,
                    two_stage: None,
                    single_stage: None,
                    p_value: None,
                    direction: None,
                    contingency: ContingencyTable::default(),
                })
            })
            .collect()
    });
    Report { stage_results, cv_combined, independent_stages, independent_combined, f1 }
}

impl Report {
    /// `(file name, CSV text)` for every populated table.
    pub fn csv_tables(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if let Some(rows) = &self.stage_results {
            let mut s = String::from("class,model,mean_accuracy,standard_deviation,n\n");
            for r in rows {
                let _ = writeln!(s, "{},{},{},{},{}", r.class.display_name(), r.model.display_name(), cell(r.mean), cell(r.sd), r.n);
            }
            out.push(("table1_stage_results.csv", s));
        }
        if let Some(rows) = &self.cv_combined {
            let mut s = String::from(
                "class,two_stage_accuracy,two_stage_sd,single_stage_accuracy,single_stage_sd,two_stage_measured\n",
            );
            for r in rows {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    r.class.display_name(),
                    cell(r.two_stage),
                    cell(r.two_stage_sd),
                    cell(r.single_stage),
                    cell(r.single_stage_sd),
                    cell(r.two_stage_measured)
                );
            }
            out.push(("table2_cv_combined.csv", s));
        }
        if let Some(rows) = &self.independent_stages {
            let mut s = String::from("class,model,accuracy,n\n");
            for r in rows {
                let _ = writeln!(s, "{},{},{},{}", r.class.display_name(), r.model.display_name(), cell(r.accuracy), r.n);
            }
            out.push(("table3_independent_stages.csv", s));
        }
        if let Some(rows) = &self.independent_combined {
            let mut s = String::from("class,two_stage_accuracy,single_stage_accuracy,diff,p_value,alternative,b,c\n");
            for r in rows {
                let alt = match r.direction {
                    Some(Direction::Greater) => "greater",
                    Some(Direction::Less) => "less",
                    None => ABSENT,
                };
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{}",
                    r.class.display_name(),
                    cell(r.two_stage),
                    cell(r.single_stage),
                    cell(r.diff()),
                    cell_p(r.p_value),
                    alt,
                    r.contingency.n_2only,
                    r.contingency.n_1only
                );
            }
            out.push(("table4_independent_combined.csv", s));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Human-readable aligned tables.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if let Some(rows) = &self.stage_results {
            s.push_str("Per-stage results of cross-validation\n");
            let _ = writeln!(s, "{:<16} {:<9} {:>13} {:>10} {:>7}", "Class", "Model", "Mean accuracy", "SD", "n");
            for r in rows {
                let _ = writeln!(s, "{:<16} {:<9} {:>13} {:>10} {:>7}", r.class.display_name(), r.model.display_name(), cell(r.mean), cell(r.sd), r.n);
            }
            s.push('\n');
        }
        if let Some(rows) = &self.cv_combined {
            s.push_str("Combined results of cross-validation\n");
            let _ = writeln!(s, "{:<16} {:>15} {:>10} {:>15} {:>10}", "Class", "Est. two-stage", "SD", "Single-stage", "SD");
            for r in rows {
                let _ = writeln!(
                    s,
                    "{:<16} {:>15} {:>10} {:>15} {:>10}",
                    r.class.display_name(),
                    cell(r.two_stage),
                    cell(r.two_stage_sd),
                    cell(r.single_stage),
                    cell(r.single_stage_sd)
                );
            }
            s.push('\n');
        }
        if let Some(rows) = &self.independent_stages {
            s.push_str("Per-stage results on the independent test set\n");
            let _ = writeln!(s, "{:<16} {:<9} {:>10} {:>7}", "Class", "Model", "Accuracy", "n");
            for r in rows {
                let _ = writeln!(s, "{:<16} {:<9} {:>10} {:>7}", r.class.display_name(), r.model.display_name(), cell(r.accuracy), r.n);
            }
            s.push('\n');
        }
        if let Some(rows) = &self.independent_combined {
            s.push_str("Combined results on the independent test set\n");
            let _ = writeln!(s, "{:<16} {:>10} {:>10} {:>10} {:>11}", "Class", "Two-stage", "Single", "Diff.", "p-value");
            for r in rows {
                let _ = writeln!(
                    s,
                    "{:<16} {:>10} {:>10} {:>10} {:>11}",
                    r.class.display_name(),
                    cell(r.two_stage),
                    cell(r.single_stage),
                    cell(r.diff()),
                    cell_p(r.p_value)
                );
            }
            s.push('\n');
        }
        if let Some(f1) = &self.f1 {
            let _ = writeln!(
                s,
                "F1 (single-stage -> two-stage): micro {:.3} -> {:.3}, macro {:.3} -> {:.3}",
                f1.single_stage.micro, f1.two_stage.micro, f1.single_stage.macro_, f1.two_stage.macro_
            );
        }
        s
    }

    /// Write `report.json`, `report.txt` and one CSV per table into `dir`.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, csv) in self.csv_tables() {
            crate::io::write_atomic(&dir.join(name), csv.as_bytes())?;
        }
        crate::io::write_atomic(&dir.join("report.json"), self.to_json().as_bytes())?;
        crate::io::write_atomic(&dir.join("report.txt"), self.to_text().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eleven_stage_rows() {
        let keys = stage_row_keys();
        assert_eq!(keys.len(), 11);
        assert_eq!(keys[0], (RowClass::Coarse(CoarseLabel::Tree), StageModel::Stage1));
        assert_eq!(keys[10], (RowClass::Fine(ClutterLabel::NonResidential), StageModel::Building));
    }

    #[test]
    fn missing_rows_render_absent() {
        let rows = vec![CombinedRow {
            class: ClutterLabel::Deciduous,
            two_stage: Some(0.9),
            two_stage_sd: Some(0.01),
            single_stage: Some(0.8),
            single_stage_sd: Some(0.02),
            two_stage_measured: None,
        }];
        let r = render_report(None, Some(rows), None, None, None);
        let csv = &r.csv_tables()[0].1;
        let coniferous = csv.lines().find(|l| l.starts_with("Coniferous")).unwrap();
        assert_eq!(coniferous, "Coniferous,absent,absent,absent,absent,absent");
        assert!(r.to_text().contains("absent"));
    }

    #[test]
    fn diff_column() {
        let row = IndependentCombinedRow {
            class: ClutterLabel::Other,
            two_stage: Some(0.963),
            single_stage: Some(0.918),
            p_value: Some(2.48e-9),
            direction: Some(Direction::Greater),
            contingency: ContingencyTable::default(),
        };
        assert!((row.diff().unwrap() - 0.045).abs() < 1e-12);
        let r = render_report(None, None, None, Some(vec![row]), None);
        assert!(r.csv_tables()[0].1.contains("Other,0.9630,0.9180,0.0450,2.480e-9,greater"));
    }
}
