//! JSON-lines model dump.
//!
//! Line 1 is a header object; every following line is one [`ModelEntry`],
//! sorted by condition then target. Reading a dump and writing it again
//! reproduces the same bytes.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CoOccurrenceModel, CondEntry, CondKey, Interner, ModelEntry};
use crate::error::{Error, Result};
use crate::features::FeatureSet;

pub const MODEL_FORMAT_VERSION: u32 = 1;
const FORMAT_NAME: &str = "svcpredict-model";

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    min_support: u32,
    built_from: String,
    features: FeatureSet,
    entries: usize,
}

impl CoOccurrenceModel {
    pub fn write_to(&self, w: impl Write) -> Result<()> {
        let mut w = BufWriter::new(w);
        let entries = self.entries();
        let header = Header {
            format: FORMAT_NAME.into(),
            version: MODEL_FORMAT_VERSION,
            min_support: self.min_support,
            built_from: self.built_from.clone(),
            features: self.features.clone(),
            entries: entries.len(),
        };
        let io = |e| Error::io("<model>", e);
        serde_json::to_writer(&mut w, &header).map_err(|e| Error::ModelFormat(e.to_string()))?;
        w.write_all(b"\n").map_err(io)?;
        for e in &entries {
            serde_json::to_writer(&mut w, e).map_err(|e| Error::ModelFormat(e.to_string()))?;
            w.write_all(b"\n").map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read_from(r: impl Read) -> Result<Self> {
        let mut lines = BufReader::new(r).lines();
        let bad = |m: String| Error::ModelFormat(m);
        let first = lines
            .next()
            .ok_or_else(|| bad("empty model file".into()))?
            .map_err(|e| Error::io("<model>", e))?;
        let header: Header =
            serde_json::from_str(&first).map_err(|e| bad(format!("header: {e}")))?;
        if header.format != FORMAT_NAME || header.version != MODEL_FORMAT_VERSION {
            return Err(bad(format!(
                "unsupported format {} v{}",
                header.format, header.version
            )));
        }
        let mut model = CoOccurrenceModel {
            interner: Interner::new(),
            table: Default::default(),
            min_support: header.min_support,
            features: header.features,
            built_from: header.built_from,
        };
        let mut count = 0usize;
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io("<model>", e))?;
            if line.is_empty() {
                continue;
            }
            let e: ModelEntry =
                serde_json::from_str(&line).map_err(|e| bad(format!("line {}: {e}", i + 2)))?;
            if e.joint_hosts == 0 || e.joint_hosts > e.cond_hosts || e.target == e.condition.port()
            {
                return Err(bad(format!("line {}: inconsistent counts", i + 2)));
            }
            if !e.condition.is_well_formed() {
                return Err(bad(format!("line {}: feature in wrong slot", i + 2)));
            }
            let key = CondKey {
                port: e.condition.port(),
                app: e.condition.app().map_or(0, |v| model.interner.intern(v)),
                net: e.condition.net().map_or(0, |v| model.interner.intern(v)),
            };
            let entry = model.table.entry(key).or_insert_with(|| CondEntry {
                cond_hosts: e.cond_hosts,
                targets: Vec::new(),
            });
            if entry.cond_hosts != e.cond_hosts {
                return Err(bad(format!("line {}: cond_hosts disagrees", i + 2)));
            }
            entry.targets.push((e.target, e.joint_hosts));
            count += 1;
        }
        if count != header.entries {
            return Err(bad(format!(
                "header announces {} entries, found {count}",
                header.entries
            )));
        }
        for entry in model.table.values_mut() {
            entry.targets.sort_unstable();
            if entry.targets.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(bad("duplicate entry".into()));
            }
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(f)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(f)
    }
}
