//! Fan-out of one instance to several children.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::ControlError;
use crate::graph::BlockId;
use crate::payload::FeatureVector;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SplitMode {
    /// Every child receives the full vector.
    #[default]
    Broadcast,
    /// Each child receives the projection onto its own disjoint feature list.
    ColumnPartition {
        partitions: BTreeMap<BlockId, Vec<String>>,
    },
}

impl SplitMode {
    pub fn validate(&self) -> Result<(), ControlError> {
        if let SplitMode::ColumnPartition { partitions } = self {
            let mut seen = HashSet::new();
            for names in partitions.values() {
                for n in names {
                    if !seen.insert(n.as_str()) {
                        return Err(ControlError::OverlappingPartitions(n.clone()));
                    }
                }
            }
        }
        Ok(())
    }
}

/// One payload per child, in `children` order.
pub fn split(
    mode: &SplitMode,
    x: &FeatureVector,
    children: &[BlockId],
) -> Result<Vec<(BlockId, FeatureVector)>, ControlError> {
    match mode {
        SplitMode::Broadcast => Ok(children.iter().map(|c| (c.clone(), x.clone())).collect()),
        SplitMode::ColumnPartition { partitions } => {
            mode.validate()?;
            children
                .iter()
                .map(|child| {
                    let names = partitions
                        .get(child)
                        .ok_or_else(|| ControlError::MissingPartition(child.clone()))?;
                    for n in names {
                        if x.get(n).is_none() {
                            return Err(ControlError::MissingFeature(n.clone()));
                        }
                    }
                    let target = x.schema().project(names)?;
                    Ok((child.clone(), x.project(&target)?))
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> FeatureVector {
        FeatureVector::from_pairs("heart", [("age".to_string(), 54.0), ("cholesterol".to_string(), 230.0)]).unwrap()
    }

    fn kids() -> Vec<BlockId> {
        vec!["m1".into(), "m2".into()]
    }

    fn partition(a: &[&str], b: &[&str]) -> SplitMode {
        SplitMode::ColumnPartition {
            partitions: [
                ("m1".to_string(), a.iter().map(|s| s.to_string()).collect()),
                ("m2".to_string(), b.iter().map(|s| s.to_string()).collect()),
            ]
            .into(),
        }
    }

    #[test]
    fn broadcast_copies() {
        let out = split(&SplitMode::Broadcast, &x(), &kids()).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|(_, v)| *v == x()));
    }

    #[test]
    fn column_partition_projects() {
        let out = split(&partition(&["age"], &["cholesterol"]), &x(), &kids()).unwrap();
        assert_eq!(out[0].1.values(), &[54.0]);
        assert_eq!(out[0].1.schema_id(), "heart[age]");
        assert_eq!(out[1].1.values(), &[230.0]);
    }

    #[test]
    fn overlapping_and_missing() {
        assert!(matches!(
            split(&partition(&["age"], &["age"]), &x(), &kids()),
            Err(ControlError::OverlappingPartitions(_))
        ));
        assert!(matches!(
            split(&partition(&["age"], &["bmi"]), &x(), &kids()),
            Err(ControlError::MissingFeature(_))
        ));
    }

    #[test]
    fn json_shape() {
        let m: SplitMode = serde_json::from_str(r#"{"mode":"column_partition","partitions":{"m1":["age"],"m2":["cholesterol"]}}"#).unwrap();
        assert_eq!(m, partition(&["age"], &["cholesterol"]));
        let b: SplitMode = serde_json::from_str(r#"{"mode":"broadcast"}"#).unwrap();
        assert_eq!(b, SplitMode::Broadcast);
    }
}
