//! Building a pipeline from a graph document and training data, and reading
//! instances to feed it.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use glassflow_core::demo::{build_with_data, demo_topology, Demo, DemoOptions, DEMO_ROWS, DEMO_SEED};
use glassflow_core::graph::{parse_topology, PipelineGraph, Topology};
use glassflow_core::models::csv_io::{load_csv, load_instances, CsvOptions};
use glassflow_core::models::{gen_synthetic, Dataset, Predictor};
use glassflow_core::payload::{FeatureSchema, FeatureVector};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Csv(PathBuf),
    Synthetic { rows: usize, seed: u64 },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic {
            rows: DEMO_ROWS,
            seed: DEMO_SEED,
        }
    }
}

impl DataSource {
    /// `--data` and `--synthetic` are alternatives; whichever the flags name
    /// wins over the file's choice.
    pub fn resolve(
        flag_data: Option<PathBuf>,
        flag_synthetic: Option<Vec<u64>>,
        file_data: Option<PathBuf>,
        file_synthetic: Option<[u64; 2]>,
    ) -> Result<DataSource, CliError> {
        let synthetic = |rows: u64, seed: u64| -> Result<DataSource, CliError> {
            let rows = usize::try_from(rows).map_err(CliError::usage)?;
            if rows == 0 {
                return Err(CliError::Usage("synthetic row count must be at least 1".into()));
            }
            Ok(DataSource::Synthetic { rows, seed })
        };
        match (flag_data, flag_synthetic) {
            (Some(path), _) => Ok(DataSource::Csv(path)),
            (None, Some(v)) => synthetic(v[0], v[1]),
            (None, None) => match (file_data, file_synthetic) {
                (Some(_), Some(_)) => Err(CliError::Usage("config file sets both `data` and `synthetic`".into())),
                (Some(path), None) => Ok(DataSource::Csv(path)),
                (None, Some([rows, seed])) => synthetic(rows, seed),
                (None, None) => Ok(DataSource::default()),
            },
        }
    }

    /// The seed of the train/held-out split.
    fn split_seed(&self) -> u64 {
        match self {
            DataSource::Synthetic { seed, .. } => *seed,
            DataSource::Csv(_) => DEMO_SEED,
        }
    }
}

/// The graph document at `path`, or the built-in demo topology.
pub fn load_topology(path: Option<&Path>) -> Result<Topology, CliError> {
    let Some(path) = path else {
        return Ok(demo_topology(DEMO_SEED));
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read graph {}: {e}", path.display())))?;
    parse_topology(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn load_data(source: &DataSource, topo: &Topology) -> Result<Dataset, CliError> {
    match source {
        DataSource::Synthetic { rows, seed } => gen_synthetic(*rows, *seed).map_err(CliError::usage),
        DataSource::Csv(path) => {
            let file = File::open(path).map_err(|e| CliError::Usage(format!("cannot read data {}: {e}", path.display())))?;
            let opts = CsvOptions {
                schema_id: topo.input_schema.as_ref().map_or_else(|| "dataset".into(), |s| s.id.clone()),
                expected_features: topo.input_schema.as_ref().map(|s| s.features.clone()),
                classes: topo.classes.clone(),
                ..CsvOptions::default()
            };
            load_csv(file, &path.display().to_string(), &opts)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
        }
    }
}

/// Trains the models of the topology on the training share (80%) of the
/// data and assembles the pipeline.
pub fn build(graph: Option<&Path>, source: &DataSource) -> Result<Demo, CliError> {
    let topo = load_topology(graph)?;
    let data = load_data(source, &topo)?;
    let opts = DemoOptions {
        seed: source.split_seed(),
        ..DemoOptions::default()
    };
    build_with_data(topo, &data, &opts).map_err(CliError::usage)
}

pub fn input_schema(graph: &PipelineGraph) -> Result<&Arc<FeatureSchema>, CliError> {
    graph
        .input_schema()
        .ok_or_else(|| CliError::Usage("the graph declares no input schema".into()))
}

/// Reads every row of a CSV file against `schema`; a `label` column is
/// ignored.
pub fn read_rows(path: &Path, schema: &Arc<FeatureSchema>) -> Result<Vec<FeatureVector>, CliError> {
    let file = File::open(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    load_instances(file, schema, Some("label")).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// An instance given as a JSON object, as `name=value,...` pairs, or as a
/// CSV file whose `row`-th record is used.
pub fn parse_instance(spec: &str, row: usize, graph: &PipelineGraph) -> Result<BTreeMap<String, f64>, CliError> {
    let trimmed = spec.trim();
    if trimmed.starts_with('{') {
        return serde_json::from_str(trimmed).map_err(|e| CliError::Usage(format!("instance: {e}")));
    }
    if trimmed.contains('=') {
        return trimmed
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|pair| {
                let (k, v) = pair
                    .split_once('=')
                    .ok_or_else(|| CliError::Usage(format!("instance: `{pair}` is not name=value")))?;
                let v: f64 = v
                    .trim()
                    .parse()
                    .map_err(|_| CliError::Usage(format!("instance: `{}` is not a number", v.trim())))?;
                Ok((k.trim().to_string(), v))
            })
            .collect();
    }
    let schema = input_schema(graph)?;
    let rows = read_rows(Path::new(trimmed), schema)?;
    let len = rows.len();
    let x = rows
        .into_iter()
        .nth(row)
        .ok_or_else(|| CliError::Usage(format!("instance: row {row} out of range for {len} rows")))?;
    Ok(x.names().iter().cloned().zip(x.values().iter().copied()).collect())
}

/// Features as the pipeline input vector.
pub fn input_vector(graph: &PipelineGraph, features: &BTreeMap<String, f64>) -> Result<FeatureVector, CliError> {
    let schema = input_schema(graph)?;
    FeatureVector::conform(schema, features.iter().map(|(k, v)| (k.as_str(), *v))).map_err(CliError::usage)
}

/// Features for a model block: its own schema, or the pipeline input schema
/// projected onto it (the same resolution the API applies).
pub fn model_vector(
    graph: &PipelineGraph,
    block: &str,
    features: &BTreeMap<String, f64>,
) -> Result<FeatureVector, CliError> {
    let state = graph.model_state(block).map_err(CliError::usage)?;
    let schema = state.feature_schema();
    match FeatureVector::conform(schema, features.iter().map(|(k, v)| (k.as_str(), *v))) {
        Ok(v) => Ok(v),
        Err(own) => match graph.input_schema() {
            Some(input) if !Arc::ptr_eq(input, schema) => {
                let full = FeatureVector::conform(input, features.iter().map(|(k, v)| (k.as_str(), *v)))
                    .map_err(|_| CliError::usage(&own))?;
                full.project(schema).map_err(CliError::usage)
            }
            _ => Err(CliError::usage(own)),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn data_source_precedence() {
        let flag = DataSource::resolve(Some("a.csv".into()), None, None, Some([5, 6])).unwrap();
        assert_eq!(flag, DataSource::Csv("a.csv".into()));
        let flag = DataSource::resolve(None, Some(vec![10, 3]), Some("b.csv".into()), None).unwrap();
        assert_eq!(flag, DataSource::Synthetic { rows: 10, seed: 3 });
        let file = DataSource::resolve(None, None, None, Some([5, 6])).unwrap();
        assert_eq!(file, DataSource::Synthetic { rows: 5, seed: 6 });
        assert_eq!(DataSource::resolve(None, None, None, None).unwrap(), DataSource::default());
        assert!(DataSource::resolve(None, Some(vec![0, 1]), None, None).is_err());
        assert!(DataSource::resolve(None, None, Some("b.csv".into()), Some([1, 1])).is_err());
    }

    #[test]
    fn inline_instances() {
        let demo = build(None, &DataSource::Synthetic { rows: 120, seed: 1 }).unwrap();
        let pairs = parse_instance("age=54, sex=1", 0, demo.graph()).unwrap();
        assert_eq!(pairs, BTreeMap::from([("age".into(), 54.0), ("sex".into(), 1.0)]));
        let json = parse_instance(r#"{"age": 54, "sex": 1}"#, 0, demo.graph()).unwrap();
        assert_eq!(json, pairs);
        assert!(parse_instance("age=old", 0, demo.graph()).is_err());
        assert!(input_vector(demo.graph(), &pairs).is_err(), "incomplete instance");
    }
}
