//! Geographic primitives: coordinates, great-circle distance, a local planar
//! frame for segment projection, and a uniform grid index.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// A WGS84 coordinate in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub const fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    pub fn is_valid(&self) -> bool {
        self.lat.is_finite() && self.lon.is_finite() && (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lon)
    }

    /// Great-circle distance in meters.
    pub fn haversine_m(&self, other: &GeoPoint) -> f64 {
        let (phi1, phi2) = (self.lat.to_radians(), other.lat.to_radians());
        let dphi = phi2 - phi1;
        let dlambda = (other.lon - self.lon).to_radians();
        let a = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
        2.0 * EARTH_RADIUS_M * a.sqrt().min(1.0).asin()
    }

    /// Offsets this point by `east_m` / `north_m` meters (equirectangular).
    pub fn offset_m(&self, east_m: f64, north_m: f64) -> GeoPoint {
        let dlat = north_m / EARTH_RADIUS_M;
        let dlon = east_m / (EARTH_RADIUS_M * self.lat.to_radians().cos());
        GeoPoint::new(self.lat + dlat.to_degrees(), self.lon + dlon.to_degrees())
    }
}

/// Axis-aligned bounding box in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: GeoPoint,
    pub max: GeoPoint,
}

impl BoundingBox {
    pub fn contains(&self, p: &GeoPoint) -> bool {
        p.lat >= self.min.lat && p.lat <= self.max.lat && p.lon >= self.min.lon && p.lon <= self.max.lon
    }

    pub fn of_points<'a>(points: impl IntoIterator<Item = &'a GeoPoint>) -> Option<BoundingBox> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let mut bb = BoundingBox { min: first, max: first };
        for p in it {
            bb.min.lat = bb.min.lat.min(p.lat);
            bb.min.lon = bb.min.lon.min(p.lon);
            bb.max.lat = bb.max.lat.max(p.lat);
            bb.max.lon = bb.max.lon.max(p.lon);
        }
        Some(bb)
    }

    /// Grows the box by `margin_m` meters on every side.
    pub fn expand_m(&self, margin_m: f64) -> BoundingBox {
        BoundingBox { min: self.min.offset_m(-margin_m, -margin_m), max: self.max.offset_m(margin_m, margin_m) }
    }
}

/// Equirectangular projection around a reference point. Accurate to well
/// under a meter over city-sized extents, which is all segment projection
/// needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalFrame {
    pub origin: GeoPoint,
    cos_lat: f64,
}

impl LocalFrame {
    pub fn new(origin: GeoPoint) -> Self {
        Self { origin, cos_lat: origin.lat.to_radians().cos() }
    }

    /// Planar (east, north) meters relative to the frame origin.
    pub fn to_xy(&self, p: &GeoPoint) -> (f64, f64) {
        let x = (p.lon - self.origin.lon).to_radians() * EARTH_RADIUS_M * self.cos_lat;
        let y = (p.lat - self.origin.lat).to_radians() * EARTH_RADIUS_M;
        (x, y)
    }
}

/// Result of dropping a perpendicular from a point onto a straight segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Position along the segment in `[0, 1]`.
    pub t: f64,
    /// Planar distance from the point to the projected point, meters.
    pub distance_m: f64,
}

pub fn project_onto_segment(frame: &LocalFrame, p: &GeoPoint, a: &GeoPoint, b: &GeoPoint) -> Projection {
    let (px, py) = frame.to_xy(p);
    let (ax, ay) = frame.to_xy(a);
    let (bx, by) = frame.to_xy(b);
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((px - ax) * dx + (py - ay) * dy) / len2).clamp(0.0, 1.0) };
    let (cx, cy) = (ax + t * dx, ay + t * dy);
    Projection { t, distance_m: ((px - cx).powi(2) + (py - cy).powi(2)).sqrt() }
}

/// Row/column of a grid cell.
pub type Cell = (i32, i32);

/// Uniform square grid over a local frame; maps cells to member ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridIndex {
    pub cell_size_m: f64,
    pub frame: LocalFrame,
    cells: BTreeMap<Cell, Vec<u32>>,
}

impl GridIndex {
    pub fn new(origin: GeoPoint, cell_size_m: f64) -> Self {
        assert!(cell_size_m > 0.0, "cell size must be positive");
        Self { cell_size_m, frame: LocalFrame::new(origin), cells: BTreeMap::new() }
    }

    pub fn cell_of(&self, p: &GeoPoint) -> Cell {
        let (x, y) = self.frame.to_xy(p);
        ((y / self.cell_size_m).floor() as i32, (x / self.cell_size_m).floor() as i32)
    }

    pub fn insert(&mut self, id: u32, p: &GeoPoint) {
        let cell = self.cell_of(p);
        self.cells.entry(cell).or_default().push(id);
    }

    /// Registers `id` in every cell touched by the bounding box of `a`–`b`.
    pub fn insert_span(&mut self, id: u32, a: &GeoPoint, b: &GeoPoint) {
        let (ca, cb) = (self.cell_of(a), self.cell_of(b));
        for row in ca.0.min(cb.0)..=ca.0.max(cb.0) {
            for col in ca.1.min(cb.1)..=ca.1.max(cb.1) {
                self.cells.entry((row, col)).or_default().push(id);
            }
        }
    }

    pub fn push_to_cell(&mut self, cell: Cell, id: u32) {
        self.cells.entry(cell).or_default().push(id);
    }

    pub fn members(&self, cell: Cell) -> &[u32] {
        self.cells.get(&cell).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Ids in all cells within `radius_m` of `p` (a superset of the true
    /// disc), deduplicated and sorted.
    pub fn query_radius(&self, p: &GeoPoint, radius_m: f64) -> Vec<u32> {
        let (row, col) = self.cell_of(p);
        let reach = (radius_m / self.cell_size_m).floor() as i32 + 1;
        let mut out = Vec::new();
        for r in row - reach..=row + reach {
            for c in col - reach..=col + reach {
                out.extend_from_slice(self.members((r, c)));
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn len_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> impl Iterator<Item = (&Cell, &Vec<u32>)> {
        self.cells.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn haversine_one_degree_latitude() {
        let a = GeoPoint::new(0.0, 0.0);
        let b = GeoPoint::new(1.0, 0.0);
        assert!((a.haversine_m(&b) - 111_195.0).abs() < 5.0);
    }

    #[test]
    fn offset_round_trips_through_frame() {
        let o = GeoPoint::new(31.2, 121.4);
        let f = LocalFrame::new(o);
        let p = o.offset_m(750.0, -320.0);
        let (x, y) = f.to_xy(&p);
        assert!((x - 750.0).abs() < 1e-6 && (y + 320.0).abs() < 1e-6);
    }

    #[test]
    fn projection_clamps_to_endpoints() {
        let o = GeoPoint::new(40.0, -3.0);
        let f = LocalFrame::new(o);
        let b = o.offset_m(100.0, 0.0);
        let pr = project_onto_segment(&f, &o.offset_m(150.0, 30.0), &o, &b);
        assert_eq!(pr.t, 1.0);
        assert!((pr.distance_m - (50.0f64.powi(2) + 30.0f64.powi(2)).sqrt()).abs() < 1e-6);
    }

    #[test]
    fn every_point_lands_in_exactly_one_cell() {
        let o = GeoPoint::new(10.0, 10.0);
        let mut g = GridIndex::new(o, 500.0);
        for i in 0..50u32 {
            g.insert(i, &o.offset_m(i as f64 * 97.0, i as f64 * 41.0));
        }
        let total: usize = g.cells().map(|(_, v)| v.len()).sum();
        assert_eq!(total, 50);
        assert!(g.query_radius(&o, 100.0).contains(&0));
    }

    #[test]
    fn coordinate_validation() {
        assert!(GeoPoint::new(90.0, -180.0).is_valid());
        assert!(!GeoPoint::new(90.1, 0.0).is_valid());
        assert!(!GeoPoint::new(0.0, f64::NAN).is_valid());
    }
}
