//! Content-addressed response cache: an in-memory map backed by an optional
//! on-disk store so interrupted runs can resume without re-billing.

use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;
use std::sync::Mutex;

use super::canonical::GatewayValue;
use crate::error::Result;

pub struct ResponseCache {
    mem: Mutex<HashMap<String, GatewayValue>>,
    disk_dir: Option<PathBuf>,
}

impl ResponseCache {
    pub fn new(disk_dir: Option<PathBuf>) -> Self {
        ResponseCache {
            mem: Mutex::new(HashMap::new()),
            disk_dir,
        }
    }

    pub fn get(&self, key: &str) -> Result<Option<GatewayValue>> {
        if let Some(v) = self.mem.lock().unwrap().get(key) {
            return Ok(Some(v.clone()));
        }
        if let Some(dir) = &self.disk_dir {
            let path = entry_path(dir, key);
            if path.exists() {
                let bytes = fs::read(&path)?;
                let value: GatewayValue = serde_json::from_slice(&bytes)?;
                self.mem.lock().unwrap().insert(key.to_string(), value.clone());
                return Ok(Some(value));
            }
        }
        Ok(None)
    }

    pub fn put(&self, key: &str, value: &GatewayValue) -> Result<()> {
        self.mem
            .lock()
            .unwrap()
            .insert(key.to_string(), value.clone());
        if let Some(dir) = &self.disk_dir {
            let path = entry_path(dir, key);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            // temp + rename so concurrent writers of the same key stay atomic
            let tmp = path.with_extension(format!("tmp-{}", std::process::id()));
            fs::write(&tmp, serde_json::to_vec(value)?)?;
            fs::rename(&tmp, &path)?;
        }
        Ok(())
    }
}

fn entry_path(dir: &std::path::Path, key: &str) -> PathBuf {
    let shard = &key[..2.min(key.len())];
    dir.join(shard).join(format!("{key}.json"))
}
