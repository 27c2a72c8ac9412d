//! Config files: TOML or JSON with the same keys as the command-line flags
//! (dashes become underscores). Explicit flags override file values, which
//! override built-in defaults.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::CliError;
use crate::{ExportFormat, MethodArg};

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub host: Option<String>,
    pub port: Option<u16>,
    pub graph: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub synthetic: Option<[u64; 2]>,
    pub ui_dir: Option<PathBuf>,
    pub token_env: Option<String>,
    pub agent_script: Option<PathBuf>,
    pub max_tool_rounds: Option<usize>,
    pub input: Option<PathBuf>,
    pub out: Option<String>,
    pub block: Option<String>,
    pub method: Option<MethodArg>,
    pub instance: Option<String>,
    pub row: Option<usize>,
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub background: Option<usize>,
    pub exhaustive: Option<bool>,
    pub target_class: Option<String>,
    pub format: Option<ExportFormat>,
    pub rows: Option<usize>,
}

impl FileConfig {
    /// Reads `path`; `.json` files are JSON, everything else TOML. Relative
    /// paths inside the file resolve against the file's directory.
    pub fn load(path: &Path) -> Result<FileConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config file {}: {e}", path.display())))?;
        let mut cfg: FileConfig = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            serde_json::from_str(&text).map_err(|e| {
                CliError::Usage(format!(
                    "config file {} at line {}, column {}: {e}",
                    path.display(),
                    e.line(),
                    e.column()
                ))
            })?
        } else {
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("config file {}: {e}", path.display())))?
        };
        if let Some(dir) = path.parent() {
            for p in [
                &mut cfg.graph,
                &mut cfg.data,
                &mut cfg.ui_dir,
                &mut cfg.agent_script,
                &mut cfg.input,
            ]
            .into_iter()
            .flatten()
            {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }
}

/// Flag, else file value, else default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_and_json_read_the_same_keys() {
        let dir = tempfile::tempdir().unwrap();
        let toml_path = dir.path().join("c.toml");
        std::fs::write(&toml_path, "port = 9000\nsynthetic = [200, 7]\nmethod = \"exact\"\ngraph = \"g.json\"\n").unwrap();
        let json_path = dir.path().join("c.json");
        std::fs::write(&json_path, r#"{"port": 9000, "synthetic": [200, 7], "method": "exact", "graph": "g.json"}"#)
            .unwrap();
        let a = FileConfig::load(&toml_path).unwrap();
        let b = FileConfig::load(&json_path).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.port, Some(9000));
        assert_eq!(a.synthetic, Some([200, 7]));
        assert_eq!(a.method, Some(MethodArg::Exact));
        assert_eq!(a.graph, Some(dir.path().join("g.json")));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "prot = 9000\n").unwrap();
        let err = FileConfig::load(&path).unwrap_err();
        assert!(err.to_string().contains("prot"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn flags_beat_files_beat_defaults() {
        assert_eq!(pick(Some(1), Some(2), 3), 1);
        assert_eq!(pick(None, Some(2), 3), 2);
        assert_eq!(pick(None, None, 3), 3);
    }
}
