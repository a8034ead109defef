use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::error::CliError;
use crate::figures::Table;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Override {
    pub key: String,
    pub value: String,
}

/// Everything that determines a run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<String>,
    pub out_dir: String,
    pub seed: u64,
    pub overrides: Vec<Override>,
    /// Command-specific arguments such as the swept parameter.
    pub arguments: BTreeMap<String, String>,
    pub version: String,
}

impl RunManifest {
    /// SHA-256 of the manifest together with the fully resolved configuration.
    pub fn hash(&self, config: &Config) -> String {
        let body = serde_json::to_vec(&(self, config)).expect("manifest serializes");
        format!("{:x}", Sha256::digest(&body))
    }
}

/// Output directory bound to one manifest; every file written carries its hash.
pub struct Output {
    pub dir: PathBuf,
    pub hash: String,
}

impl Output {
    /// Creates the directory and persists the manifest as `manifest_<stem>.json`.
    pub fn create(manifest: &RunManifest, config: &Config, stem: &str) -> Result<Self, CliError> {
        let dir = PathBuf::from(&manifest.out_dir);
        fs::create_dir_all(&dir)
            .map_err(|e| CliError::Config(format!("output directory {} is not writable: {e}", dir.display())))?;
        let out = Self { dir, hash: manifest.hash(config) };
        #[derive(Serialize)]
        struct Persisted<'a> {
            manifest: &'a RunManifest,
            config: &'a Config,
        }
        out.write_json(&format!("manifest_{stem}.json"), &Persisted { manifest, config })
            .map_err(|e| CliError::Config(format!("output directory {} is not writable: {e}", out.dir.display())))?;
        Ok(out)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// JSON object with a leading `manifest_hash` field.
    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut obj = serde_json::Map::new();
        obj.insert("manifest_hash".into(), Value::String(self.hash.clone()));
        match serde_json::to_value(value)? {
            Value::Object(m) => obj.extend(m),
            other => {
                obj.insert("data".into(), other);
            }
        }
        let mut text = serde_json::to_string_pretty(&Value::Object(obj))?;
        text.push('\n');
        fs::write(self.path(name), text)?;
        Ok(())
    }

    /// CSV with a header row, preceded by a `# manifest_hash=…` comment line.
    pub fn write_csv<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<(), CliError> {
        let mut file = fs::File::create(self.path(name))?;
        writeln!(file, "# manifest_hash={}", self.hash)?;
        let mut w = csv::Writer::from_writer(file);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_table(&self, name: &str, table: &Table) -> Result<(), CliError> {
        let mut file = fs::File::create(self.path(name))?;
        writeln!(file, "# manifest_hash={}", self.hash)?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(&table.headers)?;
        for r in &table.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(dir: &Path, name: &str) -> Result<T, CliError> {
    let path = dir.join(name);
    let text = fs::read_to_string(&path)
        .map_err(|_| CliError::MissingArtifact(format!("{} not found; run the producing command first", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::MissingArtifact(format!("{} is unreadable: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(seed: u64) -> RunManifest {
        RunManifest {
            command: "calibrate".into(),
            config_path: None,
            out_dir: "out".into(),
            seed,
            overrides: vec![],
            arguments: BTreeMap::new(),
            version: "0.1.0".into(),
        }
    }

    #[test]
    fn hash_tracks_manifest_and_config() {
        let c = Config::default();
        assert_eq!(manifest(1).hash(&c), manifest(1).hash(&c));
        assert_ne!(manifest(1).hash(&c), manifest(2).hash(&c));
        let c2 = Config { gamma: 4.0, ..Config::default() };
        assert_ne!(manifest(1).hash(&c), manifest(1).hash(&c2));
        assert_eq!(manifest(1).hash(&c).len(), 64);
    }

    #[test]
    fn csv_and_json_carry_the_hash() {
        let dir = tempfile::tempdir().unwrap();
        let out = Output { dir: dir.path().to_path_buf(), hash: "abc".into() };
        #[derive(Serialize)]
        struct Row {
            x: f64,
        }
        out.write_csv("t.csv", &[Row { x: 1.0 }, Row { x: 2.0 }]).unwrap();
        let text = fs::read_to_string(dir.path().join("t.csv")).unwrap();
        assert_eq!(text, "# manifest_hash=abc\nx\n1.0\n2.0\n");
        out.write_json("t.json", &serde_json::json!({"y": 3})).unwrap();
        let v: Value = read_json(dir.path(), "t.json").unwrap();
        assert_eq!(v["manifest_hash"], "abc");
        assert_eq!(v["y"], 3);
        assert!(matches!(read_json::<Value>(dir.path(), "none.json"), Err(CliError::MissingArtifact(_))));
    }
}
