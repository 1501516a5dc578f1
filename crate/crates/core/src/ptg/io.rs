use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use super::*;
use crate::codec::{CodecError, Decoder, Encoder};
use crate::geo::GeoPoint;

pub const PTG_MAGIC: &[u8; 4] = b"PTG1";
pub const PTG_VERSION: u16 = 1;

fn mode_code(m: TransportMode) -> u8 {
    match m {
        TransportMode::Bus => 0,
        TransportMode::Metro => 1,
        TransportMode::Ferry => 2,
        TransportMode::LightRail => 3,
        TransportMode::Walk => 4,
    }
}

fn mode_from(code: u8) -> Result<TransportMode, CodecError> {
    Ok(match code {
        0 => TransportMode::Bus,
        1 => TransportMode::Metro,
        2 => TransportMode::Ferry,
        3 => TransportMode::LightRail,
        4 => TransportMode::Walk,
        c => return Err(CodecError::Corrupt(format!("unknown mode code {c}"))),
    })
}

fn encode_city(e: &mut Encoder, g: &CityGraph) {
    e.str(&g.city);
    e.seq(&g.physical.stations, |e, s| {
        e.str(&s.id);
        e.str(&s.name);
        e.str(&s.city);
        e.f64(s.location.lat);
        e.f64(s.location.lon);
    });
    e.seq(&g.lines, |e, l| {
        e.str(&l.id);
        e.str(&l.name);
        e.u8(mode_code(l.mode));
        e.seq(&l.stops, |e, s| e.u32(*s));
        e.seq(&l.cumulative_m, |e, d| e.f64(*d));
        e.f64(l.headway_s);
        e.f64(l.speed_mps);
        e.f64(l.fare);
        e.u32(l.service_window[0]);
        e.u32(l.service_window[1]);
        e.f64(l.congestion);
    });
    e.seq(&g.physical.edges, |e, pe| {
        e.u32(pe.origin);
        e.u32(pe.dest);
        e.u32(pe.line);
        e.u32(pe.hops);
        e.f64(pe.length_m);
    });
    let topo = g.topology();
    e.seq(&topo.nodes, |e, n| {
        e.u32(n.physical);
        e.u32(n.line);
    });
    e.seq(&topo.edges, |e, ve| {
        e.u32(ve.from);
        e.u32(ve.to);
        e.u8(match ve.kind {
            EdgeKind::Ride => 0,
            EdgeKind::Transfer => 1,
        });
        e.u64(ve.physical_edge.map_or(u64::MAX, u64::from));
        e.f64(ve.walk_m);
    });
    for vg in &g.virtuals {
        e.u8(vg.cost_kind.index() as u8);
        e.seq(&vg.weights, |e, w| e.f64(*w));
    }
}

fn decode_city(d: &mut Decoder) -> Result<CityGraph, CodecError> {
    let city = d.str()?;
    let stations = d.seq(|d| {
        Ok(PhysicalStation { id: d.str()?, name: d.str()?, city: d.str()?, location: GeoPoint::new(d.f64()?, d.f64()?) })
    })?;
    let lines = d.seq(|d| {
        Ok(CompiledLine {
            id: d.str()?,
            name: d.str()?,
            mode: mode_from(d.u8()?)?,
            stops: d.seq(|d| d.u32())?,
            cumulative_m: d.seq(|d| d.f64())?,
            headway_s: d.f64()?,
            speed_mps: d.f64()?,
            fare: d.f64()?,
            service_window: [d.u32()?, d.u32()?],
            congestion: d.f64()?,
        })
    })?;
    let n_stations = stations.len();
    let mut idx = 0u32;
    let edges = d.seq(|d| {
        let pe = PhysicalEdge { id: idx, origin: d.u32()?, dest: d.u32()?, line: d.u32()?, hops: d.u32()?, length_m: d.f64()? };
        idx += 1;
        if pe.origin as usize >= n_stations || pe.dest as usize >= n_stations || pe.line as usize >= lines.len() {
            return Err(CodecError::Corrupt("physical edge out of range".into()));
        }
        Ok(pe)
    })?;
    let mut adjacency = vec![Vec::new(); n_stations];
    for e in &edges {
        adjacency[e.origin as usize].push(e.id);
    }
    let nodes = d.seq(|d| {
        let n = VirtualStation { physical: d.u32()?, line: d.u32()? };
        if n.physical as usize >= n_stations {
            return Err(CodecError::Corrupt("virtual node maps outside the station table".into()));
        }
        Ok(n)
    })?;
    let n_nodes = nodes.len();
    let vedges = d.seq(|d| {
        let from = d.u32()?;
        let to = d.u32()?;
        let kind = match d.u8()? {
            0 => EdgeKind::Ride,
            1 => EdgeKind::Transfer,
            k => return Err(CodecError::Corrupt(format!("unknown edge kind {k}"))),
        };
        let pe = d.u64()?;
        if from as usize >= n_nodes || to as usize >= n_nodes {
            return Err(CodecError::Corrupt("virtual edge out of range".into()));
        }
        Ok(VirtualEdge { from, to, kind, physical_edge: (pe != u64::MAX).then_some(pe as u32), walk_m: d.f64()? })
    })?;
    let n_edges = vedges.len();
    let topology = Arc::new(VirtualTopology::from_parts(nodes, vedges, n_stations));
    let mut graphs = Vec::with_capacity(3);
    for kind in CostKind::ALL {
        if d.u8()? as usize != kind.index() {
            return Err(CodecError::Corrupt("virtual graphs out of order".into()));
        }
        let weights = d.seq(|d| d.f64())?;
        if weights.len() != n_edges {
            return Err(CodecError::Corrupt("weight table does not match topology".into()));
        }
        graphs.push(VirtualGraph { cost_kind: kind, topology: topology.clone(), weights });
    }
    Ok(CityGraph {
        city,
        physical: PhysicalGraph { stations, edges, adjacency },
        lines,
        virtuals: graphs.try_into().expect("three cost kinds"),
    })
}

pub fn encode_ptg(ptg: &Ptg) -> Vec<u8> {
    let mut e = Encoder::new();
    e.u64(ptg.meta.dataset_hash);
    e.i64(ptg.meta.built_at);
    e.str(&serde_json::to_string(&ptg.meta.config).expect("config serializes"));
    let cities: Vec<&CityGraph> = ptg.cities.values().collect();
    e.seq(&cities, |e, g| encode_city(e, g));
    e.finish(PTG_MAGIC, PTG_VERSION)
}

pub fn decode_ptg(bytes: &[u8]) -> Result<Ptg, CodecError> {
    let mut d = Decoder::open(bytes, PTG_MAGIC, PTG_VERSION)?;
    let dataset_hash = d.u64()?;
    let built_at = d.i64()?;
    let config: WeightConfig = serde_json::from_str(&d.str()?).map_err(|e| CodecError::Corrupt(format!("weight config: {e}")))?;
    let cities = d.seq(decode_city)?;
    d.finish()?;
    let cities: BTreeMap<String, CityGraph> = cities.into_iter().map(|c| (c.city.clone(), c)).collect();
    Ok(Ptg { cities, meta: BuildMeta { dataset_hash, built_at, config } })
}

pub fn save_ptg(ptg: &Ptg, path: impl AsRef<Path>) -> Result<(), CodecError> {
    Ok(fs::write(path, encode_ptg(ptg))?)
}

pub fn load_ptg(path: impl AsRef<Path>) -> Result<Ptg, CodecError> {
    decode_ptg(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::six_station_city;

    fn fixture_ptg() -> Ptg {
        let mut sets = BTreeMap::new();
        sets.insert("demo".to_string(), six_station_city());
        compile_ptg(&sets, &WeightConfig::default()).unwrap()
    }

    #[test]
    fn round_trip_is_structurally_equal() {
        let ptg = fixture_ptg();
        let tmp = tempfile::NamedTempFile::new().unwrap();
        save_ptg(&ptg, tmp.path()).unwrap();
        assert_eq!(load_ptg(tmp.path()).unwrap(), ptg);
    }

    #[test]
    fn compile_is_byte_deterministic() {
        assert_eq!(encode_ptg(&fixture_ptg()), encode_ptg(&fixture_ptg()));
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let bytes = encode_ptg(&fixture_ptg());
        assert!(matches!(decode_ptg(&bytes[..bytes.len() / 2]), Err(CodecError::Corrupt(_))));
    }

    #[test]
    fn older_version_byte_is_rejected() {
        let mut bytes = encode_ptg(&fixture_ptg());
        bytes[4] = 0;
        let body = bytes.len() - 4;
        let crc = crc32fast::hash(&bytes[..body]);
        bytes[body..].copy_from_slice(&crc.to_le_bytes());
        assert!(matches!(decode_ptg(&bytes), Err(CodecError::VersionMismatch { found: 0, expected: 1 })));
    }
}
