use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::*;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing required file {0}")]
    MissingFile(PathBuf),
    #[error("{file}:{line}: {message}")]
    Schema { file: String, line: usize, message: String },
    #[error("dangling reference to {0:?}")]
    DanglingReference(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl DatasetError {
    pub(crate) fn invalid(file: &str, message: String) -> Self {
        DatasetError::Schema { file: file.to_string(), line: 0, message }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RoadRecord {
    Node(Intersection),
    Segment(RoadSegment),
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, DatasetError> {
    let file = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(line).map_err(|e| DatasetError::Schema {
            file: file.clone(),
            line: n + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

fn read_required<T: DeserializeOwned>(dir: &Path, name: &str) -> Result<Vec<T>, DatasetError> {
    let path = dir.join(name);
    if !path.is_file() {
        return Err(DatasetError::MissingFile(path));
    }
    read_jsonl(&path)
}

fn read_optional<T: DeserializeOwned>(dir: &Path, name: &str) -> Result<Vec<T>, DatasetError> {
    let path = dir.join(name);
    if path.is_file() {
        read_jsonl(&path)
    } else {
        Ok(Vec::new())
    }
}

/// Loads and validates one city directory.
///
/// The city id is taken from the stations' `city` field; a directory with no
/// stations falls back to the directory name.
pub fn load_city_dataset(dir: impl AsRef<Path>) -> Result<CityDataset, DatasetError> {
    let dir = dir.as_ref();
    let stations: Vec<PhysicalStation> = read_required(dir, "stations.jsonl")?;
    let lines: Vec<TransportLine> = read_required(dir, "lines.jsonl")?;
    let road_records: Vec<RoadRecord> = read_required(dir, "road.jsonl")?;
    let pois: Vec<Poi> = read_optional(dir, "pois.jsonl")?;
    let weather: Vec<WeatherRecord> = read_optional(dir, "weather.jsonl")?;

    let mut nodes = Vec::new();
    let mut segments = Vec::new();
    for r in road_records {
        match r {
            RoadRecord::Node(n) => nodes.push(n),
            RoadRecord::Segment(s) => segments.push(s),
        }
    }
    let road = RoadNetwork::new(nodes, segments)?;

    let city = match stations.first() {
        Some(s) => s.city.clone(),
        None => dir.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
    };
    if let Some(s) = stations.iter().find(|s| s.city != city) {
        return Err(DatasetError::invalid(
            "stations.jsonl",
            format!("station {} belongs to city {}, expected {}", s.id, s.city, city),
        ));
    }
    CityDataset::new(city, stations, lines, road, pois, weather)
}

/// Loads every city under `dir`: the directory itself when it holds a
/// `stations.jsonl`, otherwise each immediate subdirectory that does.
pub fn load_datasets(dir: impl AsRef<Path>) -> Result<BTreeMap<String, CityDataset>, DatasetError> {
    let dir = dir.as_ref();
    let mut dirs = Vec::new();
    if dir.join("stations.jsonl").is_file() {
        dirs.push(dir.to_path_buf());
    } else {
        for e in fs::read_dir(dir)? {
            let p = e?.path();
            if p.join("stations.jsonl").is_file() {
                dirs.push(p);
            }
        }
        dirs.sort();
    }
    if dirs.is_empty() {
        return Err(DatasetError::MissingFile(dir.join("stations.jsonl")));
    }
    let mut out = BTreeMap::new();
    for d in dirs {
        let ds = load_city_dataset(&d)?;
        if out.contains_key(&ds.city) {
            return Err(DatasetError::invalid("stations.jsonl", format!("city {} appears in two directories", ds.city)));
        }
        out.insert(ds.city.clone(), ds);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, &r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Writes `dataset` in the directory layout read by [`load_city_dataset`].
pub fn write_city_dataset(dir: impl AsRef<Path>, dataset: &CityDataset) -> io::Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    write_jsonl(&dir.join("stations.jsonl"), &dataset.stations)?;
    write_jsonl(&dir.join("lines.jsonl"), &dataset.lines)?;
    let road = dataset
        .road
        .intersections
        .iter()
        .cloned()
        .map(RoadRecord::Node)
        .chain(dataset.road.segments.iter().cloned().map(RoadRecord::Segment));
    write_jsonl(&dir.join("road.jsonl"), road)?;
    write_jsonl(&dir.join("pois.jsonl"), &dataset.pois)?;
    write_jsonl(&dir.join("weather.jsonl"), &dataset.weather)
}

/// A loaded query log plus the number of feedback records discarded because
/// they referenced routes that were never presented.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueryLog {
    pub entries: Vec<QueryLogEntry>,
    pub dropped_feedback: usize,
}

pub fn load_query_log(path: impl AsRef<Path>) -> Result<QueryLog, DatasetError> {
    let path = path.as_ref();
    let file = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    let text = fs::read_to_string(path)?;
    let mut log = QueryLog::default();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let schema = |message: String| DatasetError::Schema { file: file.clone(), line: n + 1, message };
        let mut entry: QueryLogEntry = serde_json::from_str(line).map_err(|e| schema(e.to_string()))?;
        if !entry.origin.is_valid() || !entry.destination.is_valid() {
            return Err(schema("invalid coordinates".into()));
        }
        let before = entry.feedback.len();
        let presented = &entry.presented_routes;
        entry.feedback.retain(|f| presented.iter().any(|r| r.route_id == f.route_id));
        log.dropped_feedback += before - entry.feedback.len();
        if entry.feedback.windows(2).any(|w| w[1].timestamp < w[0].timestamp) {
            return Err(schema("feedback timestamps decrease".into()));
        }
        log.entries.push(entry);
    }
    Ok(log)
}

pub fn write_query_log(path: impl AsRef<Path>, entries: &[QueryLogEntry]) -> io::Result<()> {
    write_jsonl(path.as_ref(), entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn write(dir: &Path, name: &str, body: &str) {
        fs::write(dir.join(name), body).unwrap();
    }

    fn minimal(dir: &Path) {
        write(
            dir,
            "stations.jsonl",
            r#"{"id":"A","location":{"lat":0.0,"lon":0.0},"name":"A","city":"c"}
{"id":"B","location":{"lat":0.0,"lon":0.01},"name":"B","city":"c"}
"#,
        );
        write(
            dir,
            "lines.jsonl",
            r#"{"id":"L","mode":"bus","stops":["A","B"],"headway_s":600,"speed_mps":8,"fare":2,"service_window":[300,1380]}
"#,
        );
        write(
            dir,
            "road.jsonl",
            r#"{"kind":"node","id":"u1","location":{"lat":0.0,"lon":0.0}}
{"kind":"node","id":"u2","location":{"lat":0.0,"lon":0.01}}
{"kind":"segment","id":"s1","from":"u1","to":"u2","length_m":1113.2}
"#,
        );
    }

    #[test]
    fn smallest_valid_dataset() {
        let tmp = tempfile::tempdir().unwrap();
        minimal(tmp.path());
        let ds = load_city_dataset(tmp.path()).unwrap();
        assert_eq!(ds.stations.len(), 2);
        assert_eq!(ds.lines.len(), 1);
        assert_eq!(ds.city, "c");
        assert!(ds.pois.is_empty() && ds.weather.is_empty());
    }

    #[test]
    fn unknown_station_is_dangling() {
        let tmp = tempfile::tempdir().unwrap();
        minimal(tmp.path());
        write(
            tmp.path(),
            "lines.jsonl",
            r#"{"id":"L","mode":"bus","stops":["A","X9"],"headway_s":600,"speed_mps":8,"fare":2,"service_window":[0,1439]}
"#,
        );
        match load_city_dataset(tmp.path()) {
            Err(DatasetError::DanglingReference(id)) => assert_eq!(id, "X9"),
            other => panic!("expected dangling reference, got {other:?}"),
        }
    }

    #[test]
    fn missing_lines_file() {
        let tmp = tempfile::tempdir().unwrap();
        minimal(tmp.path());
        fs::remove_file(tmp.path().join("lines.jsonl")).unwrap();
        assert!(matches!(load_city_dataset(tmp.path()), Err(DatasetError::MissingFile(_))));
    }

    #[test]
    fn schema_error_reports_line() {
        let tmp = tempfile::tempdir().unwrap();
        minimal(tmp.path());
        write(
            tmp.path(),
            "stations.jsonl",
            "{\"id\":\"A\",\"location\":{\"lat\":0,\"lon\":0},\"name\":\"A\",\"city\":\"c\"}\n{\"id\":3}\n",
        );
        match load_city_dataset(tmp.path()) {
            Err(DatasetError::Schema { file, line, .. }) => {
                assert_eq!(file, "stations.jsonl");
                assert_eq!(line, 2);
            }
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn walk_is_not_a_line_mode() {
        let tmp = tempfile::tempdir().unwrap();
        minimal(tmp.path());
        write(
            tmp.path(),
            "lines.jsonl",
            r#"{"id":"L","mode":"walk","stops":["A","B"],"headway_s":600,"speed_mps":8,"fare":2,"service_window":[0,1439]}
"#,
        );
        assert!(matches!(load_city_dataset(tmp.path()), Err(DatasetError::Schema { .. })));
    }

    #[test]
    fn six_station_fixture_loads_from_disk() {
        let tmp = tempfile::tempdir().unwrap();
        write_city_dataset(tmp.path(), &fixtures::six_station_city()).unwrap();
        let ds = load_city_dataset(tmp.path()).unwrap();
        assert_eq!(ds.stations.len(), 6);
        assert_eq!(ds.lines.len(), 3);
        assert_eq!(ds, fixtures::six_station_city());
    }

    fn summary() -> RouteSummary {
        RouteSummary {
            eta_s: 1200.0,
            wait_s: 300.0,
            fare: 2.0,
            ticket_available: true,
            in_service: true,
            distance_m: 5000.0,
            congestion: 0.1,
            start_walk_m: 100.0,
            end_walk_m: 50.0,
            transfer_walk_m: 0.0,
            on_transport_m: 4850.0,
            n_transfers: 0,
            modes: vec![TransportMode::Bus],
            signature: 1,
        }
    }

    fn entry(feedback: Vec<(&str, i64)>) -> QueryLogEntry {
        QueryLogEntry {
            query_id: "q1".into(),
            city: "c".into(),
            origin: GeoPoint::new(0.0, 0.0),
            destination: GeoPoint::new(0.0, 0.01),
            timestamp: 1_000,
            weather: None,
            presented_routes: ["1", "2", "3"]
                .iter()
                .map(|id| PresentedRoute { route_id: id.to_string(), summary: summary() })
                .collect(),
            feedback: feedback
                .into_iter()
                .map(|(id, ts)| Feedback { route_id: id.into(), kind: FeedbackKind::Favorite, timestamp: ts })
                .collect(),
        }
    }

    #[test]
    fn empty_log() {
        let tmp = tempfile::NamedTempFile::new().unwrap();
        let log = load_query_log(tmp.path()).unwrap();
        assert!(log.entries.is_empty());
        assert_eq!(log.dropped_feedback, 0);
    }

    #[test]
    fn feedback_order_is_preserved() {
        let tmp = tempfile::NamedTempFile::new().unwrap();
        write_query_log(tmp.path(), &[entry(vec![("2", 1010), ("1", 1020)])]).unwrap();
        let log = load_query_log(tmp.path()).unwrap();
        let ids: Vec<_> = log.entries[0].feedback.iter().map(|f| f.route_id.as_str()).collect();
        assert_eq!(ids, ["2", "1"]);
    }

    #[test]
    fn unknown_feedback_route_is_dropped_and_counted() {
        let tmp = tempfile::NamedTempFile::new().unwrap();
        write_query_log(tmp.path(), &[entry(vec![("2", 1010), ("7", 1020)])]).unwrap();
        let log = load_query_log(tmp.path()).unwrap();
        assert_eq!(log.entries.len(), 1);
        assert_eq!(log.entries[0].feedback.len(), 1);
        assert_eq!(log.dropped_feedback, 1);
    }

    #[test]
    fn decreasing_feedback_timestamps_rejected() {
        let tmp = tempfile::NamedTempFile::new().unwrap();
        write_query_log(tmp.path(), &[entry(vec![("2", 1020), ("1", 1010)])]).unwrap();
        assert!(matches!(load_query_log(tmp.path()), Err(DatasetError::Schema { line: 1, .. })));
    }
}
