use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use serde::Serialize;

use stance_core::corpus::{load_dataset, Corpus, Registry};
use stance_core::embeddings::EmbeddingKind;
use stance_core::io::write_json_atomic;
use stance_core::labelspace::{HardGroupTable, TableVariant};

use crate::args::Cli;

/// Registry, group table and corpus location shared by every command.
pub struct Context {
    pub data_root: Option<PathBuf>,
    pub registry: Registry,
    pub table: HardGroupTable,
    registry_source: String,
    argv: Vec<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    argv: &'a [String],
    data_root: Option<String>,
    registry: &'a str,
    label_groups: &'a str,
    seed: Option<u64>,
    config: serde_json::Value,
    outputs: &'a [&'a str],
}

impl Context {
    pub fn new(cli: &Cli) -> Result<Self> {
        let root_file = |name: &str| cli.data_root.as_ref().map(|r| r.join(name)).filter(|p| p.is_file());
        let (registry, registry_source) = match cli.registry.clone().or_else(|| root_file("registry.json")) {
            Some(path) => (
                Registry::from_file(&path).with_context(|| format!("reading registry {}", path.display()))?,
                path.display().to_string(),
            ),
            None => (Registry::builtin(), "builtin".to_string()),
        };
        let variant = if cli.verbatim_groups { TableVariant::Verbatim } else { TableVariant::Repaired };
        let table = match cli.groups.clone().or_else(|| root_file("label_groups.jsonl")) {
            Some(path) => HardGroupTable::from_file(&path, variant).with_context(|| format!("reading label groups {}", path.display()))?,
            None => HardGroupTable::builtin(variant),
        };
        Ok(Self {
            data_root: cli.data_root.clone(),
            registry,
            table,
            registry_source,
            argv: std::env::args().collect(),
        })
    }

    pub fn root(&self) -> Result<&Path> {
        match &self.data_root {
            Some(r) => Ok(r),
            None => bail!("no corpus root: pass --data-root or set STANCE_DATA_ROOT"),
        }
    }

    /// Loads the named datasets, or every registered dataset present under
    /// the root when `names` is empty.
    pub fn load(&self, names: &[String]) -> Result<Corpus> {
        let root = self.root()?;
        let mut datasets = Vec::new();
        if names.is_empty() {
            for d in self.registry.descriptors() {
                if root.join(&d.name).is_dir() {
                    datasets.push(load_dataset(root, d.clone())?);
                } else {
                    log::warn!("{} not found under {}", d.name, root.display());
                }
            }
            if datasets.is_empty() {
                bail!("no registered dataset found under {}", root.display());
            }
        } else {
            for name in names {
                let d = self
                    .registry
                    .get(name)
                    .with_context(|| format!("dataset `{name}` is not in the registry"))?;
                datasets.push(load_dataset(root, d.clone())?);
            }
        }
        Ok(Corpus::new(datasets)?)
    }

    /// Writes `manifest.json` into `out`, after the outputs it lists.
    pub fn write_manifest<C: Serialize>(&self, out: &Path, command: &str, config: &C, seed: Option<u64>, outputs: &[&str]) -> Result<()> {
        let manifest = Manifest {
            tool: "stance",
            version: env!("CARGO_PKG_VERSION"),
            command,
            argv: &self.argv,
            data_root: self.data_root.as_ref().map(|p| p.display().to_string()),
            registry: &self.registry_source,
            label_groups: self.table.version(),
            seed,
            config: serde_json::to_value(config)?,
            outputs,
        };
        write_json_atomic(&out.join("manifest.json"), &manifest)?;
        Ok(())
    }
}

pub fn embedding_kind(raw: &str) -> Result<EmbeddingKind> {
    serde_json::from_value(serde_json::Value::String(raw.to_string()))
        .with_context(|| format!("unknown embedding kind `{raw}` (expected static-word or contextual-encoder)"))
}
