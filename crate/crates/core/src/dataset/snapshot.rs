//! Per-example provenance export: `id,label,corrupted,kind`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{CorruptionKind, Dataset};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub id: u64,
    pub label: usize,
    pub corrupted: bool,
    pub kind: CorruptionKind,
}

pub fn write_snapshot<W: Write>(dataset: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for ex in dataset.examples() {
        w.serialize(SnapshotRecord {
            id: ex.id,
            label: ex.label,
            corrupted: ex.corrupted(),
            kind: ex.corruption,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshot<R: Read>(input: R) -> Result<Vec<SnapshotRecord>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(Into::into))
        .collect()
}
