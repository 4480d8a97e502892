use std::collections::BTreeMap;
use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::scoring::{score_forecast, Observations};
use crate::error::{Error, Result};
use crate::forecast::HubForecast;
use crate::stats::sign_test_p;

/// The six families a configuration can vary along.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AblationField {
    Schedule,
    Architecture,
    Dataset,
    Transform,
    Enrichment,
    Inpainting,
}

impl AblationField {
    pub const ALL: [AblationField; 6] = [
        AblationField::Schedule,
        AblationField::Architecture,
        AblationField::Dataset,
        AblationField::Transform,
        AblationField::Enrichment,
        AblationField::Inpainting,
    ];
}

impl std::fmt::Display for AblationField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = serde_json::to_value(self).expect("serialisable");
        f.write_str(s.as_str().expect("string variant"))
    }
}

/// Labels identifying one model configuration, e.g.
/// `{schedule: "c500", architecture: "U124", dataset: "30S70M", ...}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub schedule: String,
    pub architecture: String,
    pub dataset: String,
    pub transform: String,
    pub enrichment: String,
    pub inpainting: String,
}

impl ModelSpec {
    pub fn field(&self, f: AblationField) -> &str {
        match f {
            AblationField::Schedule => &self.schedule,
            AblationField::Architecture => &self.architecture,
            AblationField::Dataset => &self.dataset,
            AblationField::Transform => &self.transform,
            AblationField::Enrichment => &self.enrichment,
            AblationField::Inpainting => &self.inpainting,
        }
    }

    pub fn differing_fields(&self, other: &ModelSpec) -> Vec<AblationField> {
        AblationField::ALL
            .into_iter()
            .filter(|&f| self.field(f) != other.field(f))
            .collect()
    }
}

/// A configuration and the forecasts it produced.
#[derive(Debug, Clone)]
pub struct AblationEntry {
    pub name: String,
    pub spec: ModelSpec,
    pub forecasts: Vec<HubForecast>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    /// `None` for the baseline.
    pub group: Option<AblationField>,
    /// Value of the varied field.
    pub setting: String,
    pub total_wis: f64,
    /// `100 · Σ(base − variant) / Σ base`; positive means better than the
    /// baseline.
    pub relative_percent: f64,
    /// Mean over paired cells of `base − variant` WIS.
    pub mean_paired_difference: f64,
    pub n_cells: usize,
    pub n_better: usize,
    pub n_worse: usize,
    /// Two-sided sign test on the paired differences.
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

type CellKey = (NaiveDate, String, usize);

fn cell_scores(entry: &AblationEntry, obs: &Observations) -> Result<BTreeMap<CellKey, f64>> {
    let mut out = BTreeMap::new();
    for hf in &entry.forecasts {
        for r in score_forecast(hf, obs)? {
            let key = (r.reference_date, r.location.clone(), r.horizon);
            if out.insert(key, r.wis).is_some() {
                return Err(Error::data(format!(
                    "'{}' scores {} h{} on {} twice",
                    entry.name, r.location, r.horizon, r.reference_date
                )));
            }
        }
    }
    Ok(out)
}

/// Score baseline and variants on the same cells and compare each variant
/// with the baseline. Each variant must differ from the baseline in exactly
/// one field, which becomes its group.
pub fn run_ablation(
    baseline: &AblationEntry,
    variants: &[AblationEntry],
    obs: &Observations,
) -> Result<AblationReport> {
    let base = cell_scores(baseline, obs)?;
    if base.is_empty() {
        return Err(Error::invalid("baseline has no forecasts"));
    }
    let base_total: f64 = base.values().sum();
    let mut rows = vec![AblationRow {
        variant: baseline.name.clone(),
        group: None,
        setting: String::new(),
        total_wis: base_total,
        relative_percent: 0.0,
        mean_paired_difference: 0.0,
        n_cells: base.len(),
        n_better: 0,
        n_worse: 0,
        p_value: 1.0,
    }];
    for v in variants {
        let diff = baseline.spec.differing_fields(&v.spec);
        if diff.len() != 1 {
            return Err(Error::invalid(format!(
                "variant '{}' differs from the baseline in {} fields {:?}; expected exactly one",
                v.name,
                diff.len(),
                diff
            )));
        }
        let scores = cell_scores(v, obs)?;
        if scores.len() != base.len() || scores.keys().any(|k| !base.contains_key(k)) {
            return Err(Error::data(format!(
                "variant '{}' does not cover the same cells as the baseline",
                v.name
            )));
        }
        let (mut better, mut worse, mut sum_diff, mut total) = (0, 0, 0.0, 0.0);
        for (k, &b) in &base {
            let s = scores[k];
            total += s;
            sum_diff += b - s;
            if s < b {
                better += 1;
            } else if s > b {
                worse += 1;
            }
        }
        rows.push(AblationRow {
            variant: v.name.clone(),
            group: Some(diff[0]),
            setting: v.spec.field(diff[0]).to_string(),
            total_wis: total,
            relative_percent: if base_total > 0.0 {
                100.0 * sum_diff / base_total
            } else {
                0.0
            },
            mean_paired_difference: sum_diff / base.len() as f64,
            n_cells: base.len(),
            n_better: better,
            n_worse: worse,
            p_value: sign_test_p(better, worse),
        });
    }
    Ok(AblationReport { rows })
}

/// One line of the dataset-composition summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub dataset: String,
    pub total_wis: f64,
    pub relative_performance_percent: f64,
}

impl AblationReport {
    pub fn group(&self, field: AblationField) -> Vec<&AblationRow> {
        self.rows.iter().filter(|r| r.group == Some(field)).collect()
    }

    /// Baseline and dataset variants with their totals and relative
    /// performance.
    pub fn dataset_table(&self, baseline_dataset: &str) -> Vec<DatasetRow> {
        self.rows
            .iter()
            .filter(|r| r.group.is_none() || r.group == Some(AblationField::Dataset))
            .map(|r| DatasetRow {
                dataset: if r.group.is_none() {
                    baseline_dataset.to_string()
                } else {
                    r.setting.clone()
                },
                total_wis: r.total_wis,
                relative_performance_percent: r.relative_percent,
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "variant",
            "group",
            "setting",
            "total_wis",
            "relative_percent",
            "mean_paired_difference",
            "n_cells",
            "n_better",
            "n_worse",
            "p_value",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.variant.clone(),
                r.group.map(|g| g.to_string()).unwrap_or_else(|| "baseline".into()),
                r.setting.clone(),
                r.total_wis.to_string(),
                r.relative_percent.to_string(),
                r.mean_paired_difference.to_string(),
                r.n_cells.to_string(),
                r.n_better.to_string(),
                r.n_worse.to_string(),
                r.p_value.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> ModelSpec {
        ModelSpec {
            schedule: "c500".into(),
            architecture: "U124".into(),
            dataset: "30S70M".into(),
            transform: "Sqrt".into(),
            enrichment: "Pois".into(),
            inpainting: "j5-tt-r5".into(),
        }
    }

    #[test]
    fn field_difference() {
        let a = spec();
        let mut b = spec();
        assert!(a.differing_fields(&b).is_empty());
        b.architecture = "U12448".into();
        assert_eq!(a.differing_fields(&b), vec![AblationField::Architecture]);
        b.dataset = "100M".into();
        assert_eq!(a.differing_fields(&b).len(), 2);
    }

    #[test]
    fn field_names() {
        let names: Vec<String> = AblationField::ALL.iter().map(|f| f.to_string()).collect();
        assert_eq!(
            names,
            ["schedule", "architecture", "dataset", "transform", "enrichment", "inpainting"]
        );
    }
}
