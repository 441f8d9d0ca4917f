use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use qgraph::document::{build_graph, GraphDocument};
use qgraph::graph::MetricGraph;
use serde::Serialize;

use crate::CliError;

const PRESETS: &[(&str, &str)] = &[
    ("star4", include_str!("../presets/star4.json")),
    ("tadpole", include_str!("../presets/tadpole.json")),
    ("tadpole_rational", include_str!("../presets/tadpole_rational.json")),
    ("interval_dd", include_str!("../presets/interval_dd.json")),
    ("steer_star", include_str!("../presets/steer_star.json")),
    ("steer_far", include_str!("../presets/steer_far.json")),
];

fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

/// Text of `preset:NAME` or of a file.
pub fn read_source(source: &str) -> Result<String, CliError> {
    match source.strip_prefix("preset:") {
        Some(name) => PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| text.to_string())
            .ok_or_else(|| {
                let known: Vec<_> = preset_names().collect();
                CliError::Input(format!("unknown preset {name:?}; known: {}", known.join(", ")))
            }),
        None => fs::read_to_string(source).map_err(|e| CliError::Input(format!("{source}: {e}"))),
    }
}

pub fn load_graph(source: &str) -> Result<(GraphDocument, MetricGraph), CliError> {
    let text = read_source(source)?;
    let doc = GraphDocument::from_json(&text).map_err(|e| CliError::Input(format!("{source}: {e}")))?;
    let g = build_graph(&doc).map_err(|e| CliError::Input(format!("{source}: {e}")))?;
    Ok((doc, g))
}

/// Collects written artifacts.
pub struct Outputs {
    dir: PathBuf,
    pub paths: Vec<PathBuf>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), paths: Vec::new() })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))?;
        self.paths.push(path);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
        self.write(name, &(text + "\n"))
    }

    pub fn csv<R: AsRef<[String]>>(&mut self, name: &str, header: &str, rows: impl IntoIterator<Item = R>) -> Result<(), CliError> {
        let mut s = String::from(header);
        s.push('\n');
        for r in rows {
            let _ = writeln!(s, "{}", r.as_ref().join(","));
        }
        self.write(name, &s)
    }
}

/// Shortest round-trip representation.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}
