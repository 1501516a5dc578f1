use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::*;
use crate::codec::{CodecError, Decoder, Encoder};

pub const SBC_MAGIC: &[u8; 4] = b"SBC1";
pub const SBC_VERSION: u16 = 1;

/// Station caches for every compiled city.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CacheSet {
    pub cities: BTreeMap<String, StationCache>,
}

fn encode_grid(e: &mut Encoder, g: &GridIndex) {
    e.f64(g.cell_size_m);
    e.f64(g.frame.origin.lat);
    e.f64(g.frame.origin.lon);
    let cells: Vec<_> = g.cells().collect();
    e.seq(&cells, |e, ((r, c), ids)| {
        e.u32(*r as u32);
        e.u32(*c as u32);
        e.seq(ids, |e, id| e.u32(*id));
    });
}

fn decode_grid(d: &mut Decoder) -> Result<GridIndex, CodecError> {
    let cell = d.f64()?;
    if !(cell > 0.0) {
        return Err(CodecError::Corrupt("non-positive grid cell size".into()));
    }
    let mut g = GridIndex::new(GeoPoint::new(d.f64()?, d.f64()?), cell);
    let n = d.len()?;
    for _ in 0..n {
        let key = (d.u32()? as i32, d.u32()? as i32);
        for id in d.seq(|d| d.u32())? {
            g.push_to_cell(key, id);
        }
    }
    Ok(g)
}

fn encode_cache(e: &mut Encoder, c: &StationCache) {
    e.str(&c.city);
    e.str(&serde_json::to_string(&c.config).expect("config serializes"));
    encode_grid(e, &c.intersection_grid);
    encode_grid(e, &c.segment_grid);
    encode_grid(e, &c.poi_grid);
    e.seq(&c.entries, |e, list| {
        e.seq(list, |e, en| {
            e.u32(en.station);
            e.f64(en.distance_m);
        })
    });
    e.seq(&c.projections, |e, p| {
        e.u32(p.station);
        e.str(&p.station_id);
        e.u32(p.segment);
        e.f64(p.offset_m);
        e.f64(p.walk_to_segment_m);
    });
    e.seq(&c.unprojectable, |e, s| e.u32(*s));
    e.seq(&c.poi_segments, |e, s| e.u32(*s));
    e.u64(c.road_fingerprint.0);
    e.u64(c.road_fingerprint.1);
}

fn decode_cache(d: &mut Decoder) -> Result<StationCache, CodecError> {
    let city = d.str()?;
    let config: BinderConfig = serde_json::from_str(&d.str()?).map_err(|e| CodecError::Corrupt(format!("binder config: {e}")))?;
    let intersection_grid = decode_grid(d)?;
    let segment_grid = decode_grid(d)?;
    let poi_grid = decode_grid(d)?;
    let entries = d.seq(|d| d.seq(|d| Ok(CacheEntry { station: d.u32()?, distance_m: d.f64()? })))?;
    let projections = d.seq(|d| {
        Ok(StationProjection {
            station: d.u32()?,
            station_id: d.str()?,
            segment: d.u32()?,
            offset_m: d.f64()?,
            walk_to_segment_m: d.f64()?,
        })
    })?;
    let unprojectable = d.seq(|d| d.u32())?;
    let poi_segments = d.seq(|d| d.u32())?;
    let road_fingerprint = (d.u64()?, d.u64()?);
    let mut by_segment: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for (i, p) in projections.iter().enumerate() {
        by_segment.entry(p.segment).or_default().push(i as u32);
    }
    let mut cache = StationCache {
        city,
        config,
        intersection_grid,
        segment_grid,
        poi_grid,
        entries,
        projections,
        by_segment,
        unprojectable,
        poi_segments,
        road_fingerprint,
        station_lookup: Vec::new(),
    };
    cache.index_stations();
    Ok(cache)
}

pub fn encode_cache_set(set: &CacheSet) -> Vec<u8> {
    let mut e = Encoder::new();
    let caches: Vec<&StationCache> = set.cities.values().collect();
    e.seq(&caches, |e, c| encode_cache(e, c));
    e.finish(SBC_MAGIC, SBC_VERSION)
}

pub fn decode_cache_set(bytes: &[u8]) -> Result<CacheSet, CodecError> {
    let mut d = Decoder::open(bytes, SBC_MAGIC, SBC_VERSION)?;
    let caches = d.seq(decode_cache)?;
    d.finish()?;
    Ok(CacheSet { cities: caches.into_iter().map(|c| (c.city.clone(), c)).collect() })
}

pub fn save_cache_set(set: &CacheSet, path: impl AsRef<Path>) -> Result<(), CodecError> {
    Ok(fs::write(path, encode_cache_set(set))?)
}

pub fn load_cache_set(path: impl AsRef<Path>) -> Result<CacheSet, CodecError> {
    decode_cache_set(&fs::read(path)?)
}
