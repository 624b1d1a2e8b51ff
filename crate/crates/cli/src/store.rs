//! On-disk layout: instance and episode directories, manifests, CSV tables.

use crate::CliError;
use gtamp_core::experience::Episode;
use gtamp_core::motion::{Roadmap, RoadmapConfig};
use gtamp_core::world::{Environment, Instance};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

pub const MANIFEST: &str = "manifest.json";

#[derive(Serialize)]
struct InputFile {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    /// Hash of the executable that produced the directory.
    code_sha256: String,
    command: &'a str,
    argv: Vec<String>,
    config: &'a C,
    inputs: Vec<InputFile>,
    outputs: Vec<String>,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn code_hash() -> String {
    std::env::current_exe()
        .ok()
        .and_then(|p| std::fs::read(p).ok())
        .map(|b| hex::encode(Sha256::digest(&b)))
        .unwrap_or_default()
}

/// Writes `manifest.json` into `dir`, listing every input with its hash and
/// every file already present in `dir`.
pub fn write_manifest<C: Serialize>(dir: &Path, command: &str, config: &C, inputs: &[PathBuf]) -> Result<(), CliError> {
    let inputs = inputs
        .iter()
        .map(|p| {
            Ok(InputFile {
                path: p.display().to_string(),
                sha256: sha256_file(p)?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut outputs = Vec::new();
    list_outputs(dir, dir, &mut outputs)?;
    outputs.retain(|p| p != MANIFEST);
    outputs.sort();
    let m = Manifest {
        tool: "gtamp",
        version: env!("CARGO_PKG_VERSION"),
        code_sha256: code_hash(),
        command,
        argv: std::env::args().collect(),
        config,
        inputs,
        outputs,
    };
    let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
    write(&dir.join(MANIFEST), text.as_bytes())
}

fn list_outputs(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<(), CliError> {
    for entry in std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.is_dir() {
            list_outputs(root, &path, out)?;
        } else {
            out.push(path.strip_prefix(root).unwrap_or(&path).display().to_string());
        }
    }
    Ok(())
}

pub fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// JSON files under each path (a file or a directory, not recursive),
/// sorted, with manifests skipped.
pub fn json_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found = Vec::new();
            for entry in std::fs::read_dir(p).map_err(|e| CliError::io(p, e))? {
                let f = entry.map_err(|e| CliError::io(p, e))?.path();
                let is_json = f.extension().is_some_and(|x| x == "json");
                if is_json && f.file_name().is_some_and(|n| n != MANIFEST) {
                    found.push(f);
                }
            }
            found.sort();
            out.extend(found);
        } else if p.exists() {
            out.push(p.clone());
        } else {
            return Err(CliError::io(p, std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory")));
        }
    }
    Ok(out)
}

pub fn load_instances(paths: &[PathBuf]) -> Result<(Vec<Instance>, Vec<PathBuf>), CliError> {
    let files = json_files(paths)?;
    let instances = files
        .iter()
        .map(|f| Instance::load(f).map_err(|e| CliError::input(f, e)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((instances, files))
}

/// Episodes from the given files or directories. Directories written by
/// `collect` keep their episodes in an `episodes/` subdirectory.
pub fn load_episodes(paths: &[PathBuf]) -> Result<(Vec<Episode>, Vec<PathBuf>), CliError> {
    let expanded: Vec<PathBuf> = paths
        .iter()
        .map(|p| {
            let sub = p.join("episodes");
            if sub.is_dir() {
                sub
            } else {
                p.clone()
            }
        })
        .collect();
    let files = json_files(&expanded)?;
    let episodes = files
        .iter()
        .map(|f| Episode::load(f).map_err(|e| CliError::input(f, e)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((episodes, files))
}

/// One roadmap per distinct static layout.
#[derive(Default)]
pub struct Roadmaps {
    config: RoadmapConfig,
    built: Mutex<HashMap<String, Arc<Roadmap>>>,
}

impl Roadmaps {
    pub fn new(config: RoadmapConfig) -> Roadmaps {
        Roadmaps {
            config,
            built: Mutex::default(),
        }
    }

    pub fn get(&self, env: &Environment) -> Arc<Roadmap> {
        let key = serde_json::to_string(&(&env.workspace, &env.robot_shape, &env.fixed)).expect("layout serializes");
        let mut built = self.built.lock().expect("roadmap cache");
        built
            .entry(key)
            .or_insert_with(|| Arc::new(Roadmap::build(env, self.config)))
            .clone()
    }
}

/// Maps `f` over `items` on `workers` threads; output order follows input
/// order regardless of scheduling.
pub fn par_map<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, items.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                *slots[i].lock().expect("result slot") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("result slot").expect("every item ran"))
        .collect()
}

pub fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e.into()))?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::io(path, e.into()))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}
