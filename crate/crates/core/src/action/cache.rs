//! Binary cache for action tables.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "HJACT" | version u16 | medium hash [32] | omega digest [32]
//! dim u8 | cells_per_unit u32 | steps_per_unit u32 | speed_cap f64 | radius f64 | nodes u8
//! source i64 x2 | horizon_steps u64
//! exact lo i64 x2 | exact hi i64 x2 | support lo i64 x2 | support hi i64 x2
//! values f64 (row-major over exact ∩ support)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use super::engine::{ActionEngine, ActionTable};
use super::lattice::{IndexBox, Lattice};
use crate::error::{Error, Result};
use crate::hash;
use crate::media::{EnvironmentSample, Medium};

const MAGIC: &[u8; 5] = b"HJACT";
const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ActionCacheHeader {
    pub version: u16,
    pub medium_hash: [u8; 32],
    pub omega_digest: [u8; 32],
    pub lattice: Lattice,
    pub source: [i64; 2],
    pub horizon_steps: u64,
    pub exact: IndexBox,
    pub support: IndexBox,
}

/// Content key of `(medium, omega, lattice, source, horizon)`.
pub fn table_cache_key(
    medium: &Medium,
    omega: &EnvironmentSample,
    lattice: &Lattice,
    source: [i64; 2],
    horizon_steps: usize,
) -> String {
    #[derive(Serialize)]
    struct Key<'a> {
        format: u16,
        medium: &'a crate::media::MediumDescriptor,
        omega: &'a EnvironmentSample,
        lattice: &'a Lattice,
        source: [i64; 2],
        horizon_steps: usize,
    }
    hash::content_hash(&Key {
        format: VERSION,
        medium: medium.descriptor(),
        omega,
        lattice,
        source,
        horizon_steps,
    })
}

fn medium_hash(medium: &Medium) -> [u8; 32] {
    let mut out = [0u8; 32];
    match hex::decode(medium.id()) {
        Ok(b) if b.len() == 32 => out.copy_from_slice(&b),
        _ => out = hash::sha256_bytes(medium.id().as_bytes()),
    }
    out
}

pub fn write_action_table(path: &Path, medium: &Medium, table: &ActionTable) -> Result<()> {
    let l = &table.lattice;
    let exact = table.field.exact_box();
    let support = table.field.support_box();
    let stored = exact.intersect(&support);
    let values = if stored.is_empty() {
        Vec::new()
    } else {
        table.field.values_in(stored)?
    };
    let mut buf = Vec::with_capacity(160 + 8 * values.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&medium_hash(medium));
    buf.extend_from_slice(&table.omega.digest());
    buf.push(l.dim as u8);
    buf.extend_from_slice(&l.cells_per_unit.to_le_bytes());
    buf.extend_from_slice(&l.steps_per_unit.to_le_bytes());
    buf.extend_from_slice(&l.speed_cap.to_le_bytes());
    buf.extend_from_slice(&l.radius.to_le_bytes());
    buf.push(l.quadrature_nodes as u8);
    for v in table.source {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&(table.horizon_steps as u64).to_le_bytes());
    for v in exact.lo.iter().chain(&exact.hi).chain(&support.lo).chain(&support.hi) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    // Write-then-rename so concurrent readers never see a partial file.
    let tmp = path.with_extension("tmp");
    std::fs::File::create(&tmp)?.write_all(&buf)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Cache("truncated file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
}

fn read_header(cur: &mut Cursor) -> Result<ActionCacheHeader> {
    if cur.take(5)? != MAGIC {
        return Err(Error::Cache("bad magic".into()));
    }
    let version = cur.u16()?;
    if version != VERSION {
        return Err(Error::Cache(format!("unsupported version {version}")));
    }
    let medium_hash = cur.array()?;
    let omega_digest = cur.array()?;
    let lattice = Lattice {
        dim: cur.u8()? as usize,
        cells_per_unit: cur.u32()?,
        steps_per_unit: cur.u32()?,
        speed_cap: cur.f64()?,
        radius: cur.f64()?,
        quadrature_nodes: cur.u8()? as usize,
    };
    let source = [cur.i64()?, cur.i64()?];
    let horizon_steps = cur.u64()?;
    let exact = IndexBox {
        lo: [cur.i64()?, cur.i64()?],
        hi: [cur.i64()?, cur.i64()?],
    };
    let support = IndexBox {
        lo: [cur.i64()?, cur.i64()?],
        hi: [cur.i64()?, cur.i64()?],
    };
    Ok(ActionCacheHeader {
        version,
        medium_hash,
        omega_digest,
        lattice,
        source,
        horizon_steps,
        exact,
        support,
    })
}

/// Reads a table written for `engine`'s medium, environment and lattice;
/// any header mismatch is an error.
pub fn read_action_table(path: &Path, engine: &ActionEngine) -> Result<ActionTable> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    let header = read_header(&mut cur)?;
    if header.medium_hash != medium_hash(engine.medium()) {
        return Err(Error::Cache("medium hash mismatch".into()));
    }
    if header.omega_digest != engine.omega().digest() {
        return Err(Error::Cache("environment digest mismatch".into()));
    }
    if &header.lattice != engine.lattice() {
        return Err(Error::Cache("lattice mismatch".into()));
    }
    let rest = &bytes[cur.pos..];
    if rest.len() % 8 != 0 {
        return Err(Error::Cache("trailing bytes".into()));
    }
    let values: Vec<f64> = rest
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let field = engine.delta_from_values(header.exact, header.support, &values)?;
    Ok(ActionTable {
        source: header.source,
        horizon_steps: header.horizon_steps as usize,
        omega: engine.omega().clone(),
        medium_id: engine.medium().id().to_string(),
        lattice: engine.lattice().clone(),
        field,
    })
}
