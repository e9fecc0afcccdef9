use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::DataError;
use crate::rotation::{angle_diff, EulerPose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    #[default]
    All,
    /// Ground truth with `|yaw| < 90`.
    Frontal,
}

impl std::str::FromStr for Subset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "all" => Ok(Self::All),
            "frontal" => Ok(Self::Frontal),
            other => Err(format!("unknown subset {other:?} (expected all|frontal)")),
        }
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::All => "all",
            Self::Frontal => "frontal",
        })
    }
}

/// Mean absolute angle errors in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
    pub mean: f64,
    pub count: usize,
    pub subset: Subset,
}

impl EvalReport {
    /// Builds a report from summed absolute errors over `count` pairs.
    pub fn from_sums(sums: [f64; 3], count: usize, subset: Subset) -> Self {
        let n = count.max(1) as f64;
        let [yaw, pitch, roll] = sums.map(|s| s / n);
        Self { yaw, pitch, roll, mean: (yaw + pitch + roll) / 3.0, count, subset }
    }

    pub fn table_header() -> String {
        format!("{:<8} {:>12} {:>12} {:>12} {:>12} {:>8}", "subset", "yaw", "pitch", "roll", "mean", "n")
    }

    pub fn table_row(&self) -> String {
        format!(
            "{:<8} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>8}",
            self.subset.to_string(),
            self.yaw,
            self.pitch,
            self.roll,
            self.mean,
            self.count
        )
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", Self::table_header())?;
        write!(f, "{}", self.table_row())
    }
}

fn index_unique(pairs: &[(String, EulerPose)]) -> Result<HashMap<&str, EulerPose>, DataError> {
    let mut map = HashMap::with_capacity(pairs.len());
    for (id, pose) in pairs {
        if map.insert(id.as_str(), *pose).is_some() {
            return Err(DataError::DuplicateId(id.clone()));
        }
    }
    Ok(map)
}

/// Wrap-aware MAE of predictions against ground truth, matched by image id.
///
/// Every prediction needs a ground-truth entry; ground truth without a
/// prediction is ignored. Pairs are accumulated in prediction order.
pub fn evaluate(
    preds: &[(String, EulerPose)],
    gts: &[(String, EulerPose)],
    subset: Subset,
) -> Result<EvalReport, DataError> {
    let gt = index_unique(gts)?;
    index_unique(preds)?;
    let unmatched: Vec<String> = preds
        .iter()
        .filter(|(id, _)| !gt.contains_key(id.as_str()))
        .map(|(id, _)| id.clone())
        .collect();
    if !unmatched.is_empty() {
        return Err(DataError::UnmatchedIds(unmatched));
    }

    let mut sums = [0.0; 3];
    let mut count = 0;
    for (id, p) in preds {
        let g = gt[id.as_str()];
        if subset == Subset::Frontal && g.yaw.abs() >= 90.0 {
            continue;
        }
        let d = [
            angle_diff(p.yaw, g.yaw)?,
            angle_diff(p.pitch, g.pitch)?,
            angle_diff(p.roll, g.roll)?,
        ];
        for (s, v) in sums.iter_mut().zip(d) {
            *s += v;
        }
        count += 1;
    }
    if count == 0 {
        return Err(DataError::EmptyIntersection);
    }
    Ok(EvalReport::from_sums(sums, count, subset))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(poses: &[(f64, f64, f64)]) -> Vec<(String, EulerPose)> {
        poses
            .iter()
            .enumerate()
            .map(|(i, &(y, p, r))| (format!("{i}"), EulerPose::new(y, p, r)))
            .collect()
    }

    #[test]
    fn identical_sets_give_zero() {
        let g = ids(&[(10.0, 20.0, 30.0), (-170.0, 5.0, 0.0)]);
        let r = evaluate(&g, &g, Subset::All).unwrap();
        assert_eq!((r.yaw, r.pitch, r.roll, r.mean, r.count), (0.0, 0.0, 0.0, 0.0, 2));
    }

    #[test]
    fn wrap_case() {
        let r = evaluate(&ids(&[(179.0, 0.0, 0.0)]), &ids(&[(-179.0, 0.0, 0.0)]), Subset::All).unwrap();
        assert_eq!(r.yaw, 2.0);
        assert_eq!(r.mean, 2.0 / 3.0);
    }

    #[test]
    fn hand_computed_mean() {
        let p = ids(&[(5.0, 0.0, 0.0), (10.0, 0.0, 0.0), (-15.0, 0.0, 0.0)]);
        let g = ids(&[(0.0, 0.0, 0.0); 3]);
        let r = evaluate(&p, &g, Subset::All).unwrap();
        assert_eq!(r.yaw, 10.0);
        assert_eq!(r.pitch, 0.0);
    }

    #[test]
    fn frontal_excludes_boundary() {
        let g = ids(&[(89.9, 0.0, 0.0), (90.0, 0.0, 0.0), (-90.0, 0.0, 0.0), (120.0, 0.0, 0.0)]);
        let p = ids(&[(88.9, 0.0, 0.0), (0.0, 0.0, 0.0), (0.0, 0.0, 0.0), (0.0, 0.0, 0.0)]);
        let r = evaluate(&p, &g, Subset::Frontal).unwrap();
        assert_eq!(r.count, 1);
        assert!((r.yaw - 1.0).abs() < 1e-12);
        assert_eq!(evaluate(&p, &g, Subset::All).unwrap().count, 4);
    }

    #[test]
    fn error_cases() {
        let g = ids(&[(0.0, 0.0, 0.0)]);
        let mut p = ids(&[(0.0, 0.0, 0.0), (1.0, 1.0, 1.0)]);
        assert!(matches!(evaluate(&p, &g, Subset::All), Err(DataError::UnmatchedIds(v)) if v == ["1"]));
        p.truncate(1);
        p.push(p[0].clone());
        assert!(matches!(evaluate(&p, &g, Subset::All), Err(DataError::DuplicateId(_))));
        assert!(matches!(evaluate(&[], &g, Subset::All), Err(DataError::EmptyIntersection)));
        let side = ids(&[(100.0, 0.0, 0.0)]);
        assert!(matches!(evaluate(&side, &side, Subset::Frontal), Err(DataError::EmptyIntersection)));
    }

    #[test]
    fn table_has_six_decimals() {
        let r = EvalReport::from_sums([1.0, 2.0, 3.0], 3, Subset::All);
        assert!(r.to_string().contains("0.333333"));
        assert_eq!(r.mean, (1.0 / 3.0 + 2.0 / 3.0 + 1.0) / 3.0);
    }
}
