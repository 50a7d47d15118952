//! COPD risk levels from demographics: the banding rule and three
//! classifiers trained to recover it.

mod forest;
mod softmax;
mod svm;

pub use forest::{best_split, fit_forest, fit_forest_tree, fit_tree, DecisionTree, ForestConfig, ForestModel, MaxFeatures, Node, SplitChoice};
pub use softmax::{fit_softmax_regression, softmax_loss_grad, SoftmaxConfig, SoftmaxRegressionModel};
pub use svm::{dual_objective, fit_binary_svm, fit_rbf_svm, kkt_residuals, BinarySvm, BinarySvmFit, RbfSvmModel, SvmConfig};

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::{DemographicRecord, Gender};
use crate::error::{Error, Result};
use crate::metrics::{confusion, report, EvalReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RiskLevel {
    VerySevere = 0,
    Severe = 1,
    Moderate = 2,
    Mild = 3,
}

impl RiskLevel {
    pub const COUNT: usize = 4;
    pub const ALL: [RiskLevel; 4] = [RiskLevel::VerySevere, RiskLevel::Severe, RiskLevel::Moderate, RiskLevel::Mild];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL.get(i).copied().ok_or(Error::LabelOutOfRange { label: i, classes: Self::COUNT })
    }

    pub fn name(self) -> &'static str {
        match self {
            RiskLevel::VerySevere => "Very Severe",
            RiskLevel::Severe => "Severe",
            RiskLevel::Moderate => "Moderate",
            RiskLevel::Mild => "Mild",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BmiCategory {
    Underweight,
    Healthy,
    Overweight,
    Obese,
}

impl BmiCategory {
    pub fn of(bmi: f64) -> Self {
        if bmi < 18.5 {
            BmiCategory::Underweight
        } else if bmi <= 24.9 {
            BmiCategory::Healthy
        } else if bmi <= 29.9 {
            BmiCategory::Overweight
        } else {
            BmiCategory::Obese
        }
    }
}

/// Age bands decide the level; underweight women aged 65+ escalate to the
/// most severe class. Ages below 35 are outside the rubric.
pub fn assign_risk(rec: &DemographicRecord) -> Result<RiskLevel> {
    let age = rec.age_years;
    if age >= 65.0 {
        if BmiCategory::of(rec.bmi_kg_m2) == BmiCategory::Underweight && rec.gender == Gender::Female {
            Ok(RiskLevel::VerySevere)
        } else {
            Ok(RiskLevel::Severe)
        }
    } else if age >= 50.0 {
        Ok(RiskLevel::Moderate)
    } else if age >= 35.0 {
        Ok(RiskLevel::Mild)
    } else {
        Err(Error::OutOfRubric { age })
    }
}

/// `(age, gender code, BMI)` rows.
pub fn feature_rows(records: &[DemographicRecord]) -> Vec<Vec<f64>> {
    records.iter().map(|r| r.features().to_vec()).collect()
}

/// Row-count and width checks shared by the classifiers.
pub(crate) fn check_xy(x: &[Vec<f64>], y: &[usize], k: usize) -> Result<usize> {
    if x.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch { op: "risk fit", expected: alloc::vec![x.len()], found: alloc::vec![y.len()] });
    }
    let d = x[0].len();
    if d == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    check_rows(x, d)?;
    if let Some(&label) = y.iter().find(|&&l| l >= k) {
        return Err(Error::LabelOutOfRange { label, classes: k });
    }
    Ok(d)
}

pub(crate) fn check_rows(x: &[Vec<f64>], d: usize) -> Result<()> {
    for row in x {
        if row.len() != d {
            return Err(Error::ShapeMismatch { op: "risk features", expected: alloc::vec![d], found: alloc::vec![row.len()] });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidRecord("non-finite feature".into()));
        }
    }
    Ok(())
}

/// Per-feature mean and standard deviation (1 where a column is constant).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &[Vec<f64>]) -> Self {
        let d = x.first().map_or(0, Vec::len);
        let n = x.len().max(1) as f64;
        let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let std = (0..d)
            .map(|j| {
                let var = x.iter().map(|r| (r[j] - mean[j]) * (r[j] - mean[j])).sum::<f64>() / n;
                let s = num_traits::Float::sqrt(var);
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(self.mean.iter().zip(&self.std)).map(|(v, (m, s))| (v - m) / s).collect()
    }
}

/// Any fitted risk classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RiskModel {
    Forest(ForestModel),
    SoftmaxRegression(SoftmaxRegressionModel),
    RbfSvm(RbfSvmModel),
}

impl RiskModel {
    pub fn kind_name(&self) -> &'static str {
        match self {
            RiskModel::Forest(_) => "forest",
            RiskModel::SoftmaxRegression(_) => "softmax_regression",
            RiskModel::RbfSvm(_) => "rbf_svm",
        }
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<usize>> {
        match self {
            RiskModel::Forest(m) => m.predict(x),
            RiskModel::SoftmaxRegression(m) => m.predict(x),
            RiskModel::RbfSvm(m) => m.predict(x),
        }
    }
}

/// Predicted levels for `records` and a report against the rule labels.
pub fn predict_risk(model: &RiskModel, records: &[DemographicRecord]) -> Result<(Vec<RiskLevel>, EvalReport)> {
    let truth = records.iter().map(|r| assign_risk(r).map(RiskLevel::index)).collect::<Result<Vec<_>>>()?;
    let pred = model.predict(&feature_rows(records))?;
    let cm = confusion(&truth, &pred, RiskLevel::COUNT)?;
    let levels = pred.iter().map(|&p| RiskLevel::from_index(p)).collect::<Result<Vec<_>>>()?;
    Ok((levels, report(&cm, 0.0)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(age: f64, gender: u8, bmi: f64) -> DemographicRecord {
        let g = if gender == 0 { Gender::Female } else { Gender::Male };
        DemographicRecord::new(1, age, g, bmi).unwrap()
    }

    #[test]
    fn rule_bands() {
        assert_eq!(assign_risk(&rec(85.0, 0, 17.1)).unwrap(), RiskLevel::VerySevere);
        assert_eq!(assign_risk(&rec(85.0, 1, 17.1)).unwrap(), RiskLevel::Severe);
        assert_eq!(assign_risk(&rec(70.0, 0, 28.47)).unwrap(), RiskLevel::Severe);
        assert_eq!(assign_risk(&rec(60.0, 1, 22.86)).unwrap(), RiskLevel::Moderate);
        assert_eq!(assign_risk(&rec(64.5, 0, 17.0)).unwrap(), RiskLevel::Moderate);
        assert_eq!(assign_risk(&rec(35.0, 0, 30.0)).unwrap(), RiskLevel::Mild);
        assert!(matches!(assign_risk(&rec(34.9, 0, 30.0)), Err(Error::OutOfRubric { .. })));
    }

    #[test]
    fn bmi_categories() {
        assert_eq!(BmiCategory::of(18.49), BmiCategory::Underweight);
        assert_eq!(BmiCategory::of(18.5), BmiCategory::Healthy);
        assert_eq!(BmiCategory::of(24.9), BmiCategory::Healthy);
        assert_eq!(BmiCategory::of(29.9), BmiCategory::Overweight);
        assert_eq!(BmiCategory::of(29.91), BmiCategory::Obese);
    }
}
