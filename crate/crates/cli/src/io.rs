use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use ipg_core::discretizer::DiscretizerConfig;
use ipg_core::map::VectorMap;
use ipg_core::scene::RawScene;
use ipg_core::trajectory::{read_jsonl, write_jsonl};
use ipg_core::{IntentionTable, PolicyGraph, Registry, Trajectory};

use crate::error::{CliError, CliResult, Code};

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Write through a temporary file in the target directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| CliError::io(&dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// Write to `out`, or to stdout when no path is given.
pub fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn read_trajectories(path: &Path) -> CliResult<Vec<Trajectory>> {
    let f = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_jsonl(BufReader::new(f)).map_err(|e| CliError::from(e).at(path))
}

pub fn write_trajectories(path: &Path, trajectories: &[Trajectory]) -> CliResult<()> {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, trajectories).expect("writing to memory");
    write_atomic(path, &buf)
}

pub fn read_graph(path: &Path) -> CliResult<PolicyGraph> {
    PolicyGraph::from_json(&read_text(path)?).map_err(|e| CliError::from(e).at(path))
}

pub fn read_table(path: &Path) -> CliResult<IntentionTable> {
    IntentionTable::from_json(&read_text(path)?).map_err(|e| CliError::from(e).at(path))
}

pub fn read_map(path: &Path) -> CliResult<VectorMap> {
    VectorMap::from_json(&read_text(path)?).map_err(|e| CliError::parse(path, e))
}

pub fn read_discretizer_config(path: Option<&Path>) -> CliResult<DiscretizerConfig> {
    let cfg = match path {
        None => DiscretizerConfig::default(),
        Some(p) => {
            DiscretizerConfig::from_toml(&read_text(p)?).map_err(|e| CliError::from(e).at(p))?
        }
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn read_registry(dir: Option<&Path>) -> CliResult<Registry> {
    match dir {
        None => Ok(Registry::builtin()),
        Some(d) => {
            let reg = Registry::load_dir(d)?;
            if reg.is_empty() {
                return Err(CliError::new(
                    Code::InvalidDesires,
                    format!("{}: no desire specs found", d.display()),
                ));
            }
            Ok(reg)
        }
    }
}

/// Every `*.json` scene in `dir`, in file-name order.
pub fn read_scenes(dir: &Path) -> CliResult<Vec<(PathBuf, RawScene)>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| CliError::io(dir, e))?.path();
        if p.is_file() && p.extension().is_some_and(|x| x == "json") {
            paths.push(p);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::new(
            Code::NoScenes,
            format!("{}: no *.json scene files", dir.display()),
        ));
    }
    paths
        .into_iter()
        .map(|p| {
            let scene: RawScene =
                serde_json::from_str(&read_text(&p)?).map_err(|e| CliError::parse(&p, e))?;
            Ok((p, scene))
        })
        .collect()
}
