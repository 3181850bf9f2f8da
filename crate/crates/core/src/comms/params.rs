use super::codec::valid_key;
use super::CommsError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoreFile {
    robot_id: u16,
    params: BTreeMap<String, f32>,
}

/// Persistent key/value parameters of one blimp.
///
/// Writes land on disk before `set` returns. A store without a backing path
/// lives in memory only.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    robot_id: u16,
    values: BTreeMap<String, f32>,
    path: Option<PathBuf>,
}

impl ParamStore {
    pub fn in_memory(robot_id: u16) -> Self {
        Self { robot_id, values: BTreeMap::new(), path: None }
    }

    /// `state_dir/robot_<id>.json`
    pub fn file_path(state_dir: &Path, robot_id: u16) -> PathBuf {
        state_dir.join(format!("robot_{robot_id}.json"))
    }

    /// Loads the store for `robot_id`, starting empty if no file exists yet.
    pub fn open(state_dir: &Path, robot_id: u16) -> Result<Self, CommsError> {
        let path = Self::file_path(state_dir, robot_id);
        let values = match fs::read_to_string(&path) {
            Ok(text) => {
                let f: StoreFile = serde_json::from_str(&text).map_err(|e| CommsError::StorageFailure(e.to_string()))?;
                if let Some(bad) = f.params.keys().find(|k| !valid_key(k)) {
                    return Err(CommsError::StorageFailure(format!("bad key {bad:?} in {}", path.display())));
                }
                f.params
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(CommsError::StorageFailure(e.to_string())),
        };
        Ok(Self { robot_id, values, path: Some(path) })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, key: &str) -> Result<f32, CommsError> {
        self.values.get(key).copied().ok_or_else(|| CommsError::KeyNotFound(key.to_string()))
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, f32)> {
        self.values.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Stores and persists. On a storage failure the in-memory value is rolled back.
    pub fn set(&mut self, key: &str, value: f32) -> Result<(), CommsError> {
        if !valid_key(key) {
            return Err(CommsError::InvalidKey(key.to_string()));
        }
        let previous = self.values.insert(key.to_string(), value);
        if let Err(e) = self.flush() {
            match previous {
                Some(v) => self.values.insert(key.to_string(), v),
                None => self.values.remove(key),
            };
            return Err(e);
        }
        Ok(())
    }

    fn flush(&self) -> Result<(), CommsError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let fail = |e: std::io::Error| CommsError::StorageFailure(format!("{}: {e}", path.display()));
        let dir = path.parent().unwrap_or(Path::new("."));
        fs::create_dir_all(dir).map_err(fail)?;
        let doc = StoreFile { robot_id: self.robot_id, params: self.values.clone() };
        let text = serde_json::to_string_pretty(&doc).expect("plain map serializes");
        let tmp = path.with_extension("json.tmp");
        let mut f = fs::File::create(&tmp).map_err(fail)?;
        f.write_all(text.as_bytes()).map_err(fail)?;
        f.sync_all().map_err(fail)?;
        fs::rename(&tmp, path).map_err(fail)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn survives_restart() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = ParamStore::open(dir.path(), 4).unwrap();
        s.set("ctl.k", 0.8).unwrap();
        drop(s);
        let s = ParamStore::open(dir.path(), 4).unwrap();
        assert_eq!(s.get("ctl.k").unwrap(), 0.8);
        let text = fs::read_to_string(dir.path().join("robot_4.json")).unwrap();
        assert!(text.contains("\"ctl.k\": 0.8"));
    }

    #[test]
    fn unknown_key() {
        let s = ParamStore::in_memory(0);
        assert_eq!(s.get("ctl.nope"), Err(CommsError::KeyNotFound("ctl.nope".into())));
    }

    #[test]
    fn last_write_wins() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = ParamStore::open(dir.path(), 1).unwrap();
        s.set("perc.p_act", 0.6).unwrap();
        s.set("perc.p_act", 0.75).unwrap();
        assert_eq!(ParamStore::open(dir.path(), 1).unwrap().get("perc.p_act").unwrap(), 0.75);
    }

    #[test]
    fn storage_failure_rolls_back() {
        let dir = tempfile::tempdir().unwrap();
        // a regular file where the state directory should be
        let blocker = dir.path().join("state");
        fs::write(&blocker, b"x").unwrap();
        let mut s = ParamStore { robot_id: 2, values: BTreeMap::new(), path: Some(blocker.join("robot_2.json")) };
        assert!(matches!(s.set("ctl.k", 1.0), Err(CommsError::StorageFailure(_))));
        assert!(s.get("ctl.k").is_err());
    }

    #[test]
    fn corrupt_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("robot_9.json"), "{not json").unwrap();
        assert!(matches!(ParamStore::open(dir.path(), 9), Err(CommsError::StorageFailure(_))));
    }
}
