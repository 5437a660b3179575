//! On-disk cache of a dyadic system, keyed by its construction parameters.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::sphere::{self, SphereTree};
use super::DyadicSystem;
use crate::error::{LabError, Result};
use crate::geometry::{DomainGeometry, DomainKind};

const MAGIC: &[u8; 8] = b"TENTDYA1";

/// Parameters a cached system was built with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheKey {
    pub geometry: String,
    pub epsilon0: f64,
    pub delta0: f64,
    pub s: u32,
    pub delta: f64,
    pub shift: f64,
    pub max_level: usize,
}

impl CacheKey {
    pub fn of(system: &DyadicSystem) -> Self {
        let g = system.geom();
        CacheKey {
            geometry: g.kind().name().to_string(),
            epsilon0: g.epsilon0(),
            delta0: g.delta0(),
            s: system.s(),
            delta: system.delta(),
            shift: system.shift(),
            max_level: system.max_level(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SphereData {
    sample_size: usize,
    sample_seed: u64,
    nets: Vec<Vec<u32>>,
    parents: Vec<Vec<u32>>,
    owner: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct Body {
    key: CacheKey,
    sphere: Option<SphereData>,
}

pub fn encode(system: &DyadicSystem) -> Result<Vec<u8>> {
    let sphere = system.sphere_tree().map(|t| SphereData {
        sample_size: t.sample().len(),
        sample_seed: sphere::SPHERE_SAMPLE_SEED,
        nets: t.nets.clone(),
        parents: t.parents.clone(),
        owner: t.owner.clone(),
    });
    let body = Body { key: CacheKey::of(system), sphere };
    let payload = bincode::serialize(&body).map_err(|e| LabError::Cache(e.to_string()))?;
    let mut out = Vec::with_capacity(payload.len() + 20);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    Ok(out)
}

/// Decodes a cache; `expected` (when given) must match the stored key.
pub fn decode(bytes: &[u8], expected: Option<&CacheKey>) -> Result<DyadicSystem> {
    let corrupt = |why: &str| LabError::Cache(format!("corrupt cache file: {why}"));
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(corrupt("bad header"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    if bytes.len() != 16 + len + 4 {
        return Err(corrupt(&format!("expected {} bytes, found {}", 16 + len + 4, bytes.len())));
    }
    let payload = &bytes[16..16 + len];
    let crc = u32::from_le_bytes(bytes[16 + len..].try_into().unwrap());
    if crc32fast::hash(payload) != crc {
        return Err(corrupt("checksum mismatch"));
    }
    let body: Body = bincode::deserialize(payload).map_err(|e| corrupt(&e.to_string()))?;
    if let Some(want) = expected {
        if *want != body.key {
            return Err(LabError::Cache(format!("stale cache: built with {:?}, requested {:?}", body.key, want)));
        }
    }
    let k = &body.key;
    let geom = DomainGeometry::new(DomainKind::parse(&k.geometry)?, k.epsilon0, k.delta0)?;
    match (geom.kind(), body.sphere) {
        (DomainKind::Disc, None) => DyadicSystem::build(&geom, k.s, k.delta, k.shift, k.max_level),
        (DomainKind::Ball2, Some(data)) => {
            if data.nets.len() != k.max_level + 1 || data.parents.len() != k.max_level + 1 {
                return Err(corrupt("level count mismatch"));
            }
            let sample = Arc::new(sphere::uniform_sphere_sample(data.sample_size, data.sample_seed));
            let finest = data.nets[k.max_level].len();
            if data.owner.len() != data.sample_size || data.owner.iter().any(|&o| o as usize >= finest) {
                return Err(corrupt("owner table inconsistent"));
            }
            let separations = (0..=k.max_level).map(|l| k.delta / (k.s as f64).powi(l as i32)).collect();
            let tree = SphereTree { sample, nets: data.nets, parents: data.parents, owner: data.owner, separations };
            Ok(DyadicSystem::from_tree(&geom, k.s, k.delta, k.shift, k.max_level, tree))
        }
        _ => Err(corrupt("payload does not match geometry")),
    }
}

pub fn save(system: &DyadicSystem, path: &Path) -> Result<()> {
    let bytes = encode(system)?;
    std::fs::write(path, bytes).map_err(|e| LabError::Cache(format!("{}: {e}", path.display())))
}

pub fn load(path: &Path, expected: Option<&CacheKey>) -> Result<DyadicSystem> {
    let bytes = std::fs::read(path).map_err(|e| LabError::Cache(format!("{}: {e}", path.display())))?;
    decode(&bytes, expected)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disc_round_trip() {
        let sys = DyadicSystem::build(&DomainGeometry::disc(), 2, 0.4, 1.0 / 3.0, 5).unwrap();
        let bytes = encode(&sys).unwrap();
        let back = decode(&bytes, Some(&CacheKey::of(&sys))).unwrap();
        assert_eq!(back.num_cells(), sys.num_cells());
        assert_eq!(back.reference(17), sys.reference(17));
    }

    #[test]
    fn truncated_is_corrupt() {
        let sys = DyadicSystem::build(&DomainGeometry::disc(), 2, 0.4, 0.0, 3).unwrap();
        let bytes = encode(&sys).unwrap();
        let err = decode(&bytes[..bytes.len() - 3], None).unwrap_err();
        assert!(err.to_string().contains("corrupt"));
    }

    #[test]
    fn mismatched_key_is_stale() {
        let sys = DyadicSystem::build(&DomainGeometry::disc(), 2, 0.4, 0.0, 3).unwrap();
        let mut key = CacheKey::of(&sys);
        key.max_level = 4;
        let err = decode(&encode(&sys).unwrap(), Some(&key)).unwrap_err();
        assert!(err.to_string().contains("stale"));
    }
}
