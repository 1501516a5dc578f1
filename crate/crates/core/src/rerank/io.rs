//! `PRM1` model files.

use std::fs;
use std::path::Path;

use super::features::{FeatureSpace, Scaler};
use super::gbdt::{Ensemble, GbdtParams, Node, Tree};
use super::{RankModel, RerankError, SCHEMA_VERSION};
use crate::codec::{read_file, CodecError, Decoder, Encoder};

pub const PRM_MAGIC: &[u8; 4] = b"PRM1";
pub const PRM_VERSION: u16 = 1;

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("plain data serializes")
}

fn from_json<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, CodecError> {
    serde_json::from_str(s).map_err(|e| CodecError::Corrupt(e.to_string()))
}

pub fn encode_model(m: &RankModel) -> Vec<u8> {
    let mut e = Encoder::new();
    e.u32(m.schema_version);
    e.str(&json(&m.space));
    e.seq(&m.names, |e, n| e.str(n));
    e.seq(&m.scaler.min, |e, v| e.f64(*v));
    e.seq(&m.scaler.max, |e, v| e.f64(*v));
    e.str(&json(&m.params));
    let ens = &m.ensemble;
    e.len(ens.dim);
    e.f64(ens.beta);
    e.seq(&ens.gains, |e, v| e.f64(*v));
    e.seq(&ens.trees, |e, t| {
        e.seq(&t.nodes, |e, n| match *n {
            Node::Leaf { value } => {
                e.u8(0);
                e.f64(value);
            }
            Node::Split { feature, threshold, left, right } => {
                e.u8(1);
                e.u32(feature);
                e.f64(threshold);
                e.u32(left);
                e.u32(right);
            }
        })
    });
    e.finish(PRM_MAGIC, PRM_VERSION)
}

pub fn decode_model(bytes: &[u8]) -> Result<RankModel, RerankError> {
    let mut d = Decoder::open(bytes, PRM_MAGIC, PRM_VERSION)?;
    let schema_version = d.u32()?;
    if schema_version != SCHEMA_VERSION {
        return Err(CodecError::Corrupt(format!("feature schema {schema_version}, this build uses {SCHEMA_VERSION}")).into());
    }
    let space: FeatureSpace = from_json(&d.str()?)?;
    let names = d.seq(|d| d.str())?;
    let min = d.seq(|d| d.f64())?;
    let max = d.seq(|d| d.f64())?;
    let params: GbdtParams = from_json(&d.str()?)?;
    let dim = d.len()?;
    let beta = d.f64()?;
    let gains = d.seq(|d| d.f64())?;
    let trees = d.seq(|d| {
        let nodes = d.seq(|d| {
            Ok(match d.u8()? {
                0 => Node::Leaf { value: d.f64()? },
                1 => Node::Split { feature: d.u32()?, threshold: d.f64()?, left: d.u32()?, right: d.u32()? },
                t => return Err(CodecError::Corrupt(format!("unknown tree node tag {t}"))),
            })
        })?;
        Ok(Tree { nodes })
    })?;
    d.finish()?;
    if names.len() != dim || min.len() != dim || max.len() != dim || gains.len() != dim {
        return Err(CodecError::Corrupt("model sections disagree on feature count".into()).into());
    }
    if space.names() != names {
        return Err(RerankError::SchemaMismatch { expected: names.len(), found: space.dimension() });
    }
    for t in &trees {
        let n = t.nodes.len() as u32;
        let ok = !t.nodes.is_empty()
            && t.nodes.iter().enumerate().all(|(i, node)| match *node {
                Node::Leaf { .. } => true,
                Node::Split { feature, left, right, .. } => {
                    (feature as usize) < dim && left > i as u32 && right > i as u32 && left < n && right < n
                }
            });
        if !ok {
            return Err(CodecError::Corrupt("malformed tree".into()).into());
        }
    }
    Ok(RankModel {
        schema_version,
        space,
        names,
        scaler: Scaler { min, max },
        params,
        ensemble: Ensemble { dim, beta, trees, gains },
    })
}

pub fn save_model(path: impl AsRef<Path>, m: &RankModel) -> Result<(), RerankError> {
    fs::write(path, encode_model(m)).map_err(CodecError::from)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<RankModel, RerankError> {
    decode_model(&read_file(path.as_ref())?)
}
