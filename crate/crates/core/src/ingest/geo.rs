//! County geometries from GeoJSON and the point-in-county spatial join.

use std::collections::HashSet;
use std::io::Read;

use serde_json::{json, Value};

use crate::error::{Error, Result};

/// `[longitude, latitude]` in degrees.
pub type LonLat = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub min: LonLat,
    pub max: LonLat,
}

impl BBox {
    fn empty() -> Self {
        BBox {
            min: [f64::INFINITY; 2],
            max: [f64::NEG_INFINITY; 2],
        }
    }

    fn extend(&mut self, p: LonLat) {
        for (k, v) in p.into_iter().enumerate() {
            self.min[k] = self.min[k].min(v);
            self.max[k] = self.max[k].max(v);
        }
    }

    fn union(&mut self, other: &BBox) {
        self.extend(other.min);
        self.extend(other.max);
    }

    pub fn contains(&self, p: LonLat) -> bool {
        (self.min[0]..=self.max[0]).contains(&p[0]) && (self.min[1]..=self.max[1]).contains(&p[1])
    }
}

/// Simple polygon with optional holes. Rings are closed (first == last);
/// the outer ring runs counterclockwise and holes clockwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub outer: Vec<LonLat>,
    pub holes: Vec<Vec<LonLat>>,
}

impl Polygon {
    pub fn rings(&self) -> impl Iterator<Item = &Vec<LonLat>> {
        std::iter::once(&self.outer).chain(self.holes.iter())
    }

    /// Even-odd containment, with every boundary point counted as inside.
    pub fn contains(&self, p: LonLat) -> bool {
        if self.rings().any(|r| on_ring_boundary(r, p)) {
            return true;
        }
        let crossings = self.rings().filter(|r| crosses_odd(r, p)).count();
        crossings % 2 == 1
    }
}

/// Twice the signed area; positive for counterclockwise rings.
fn signed_area2(ring: &[LonLat]) -> f64 {
    ring.windows(2)
        .map(|w| w[0][0] * w[1][1] - w[1][0] * w[0][1])
        .sum()
}

/// Ray casting towards +x; true when the ray crosses the ring an odd number
/// of times.
fn crosses_odd(ring: &[LonLat], p: LonLat) -> bool {
    let mut inside = false;
    for w in ring.windows(2) {
        let (a, b) = (w[0], w[1]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

fn on_segment(a: LonLat, b: LonLat, p: LonLat) -> bool {
    let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    let scale = (b[0] - a[0]).abs().max((b[1] - a[1]).abs()).max(1.0);
    if cross.abs() > 1e-12 * scale {
        return false;
    }
    p[0] >= a[0].min(b[0])
        && p[0] <= a[0].max(b[0])
        && p[1] >= a[1].min(b[1])
        && p[1] <= a[1].max(b[1])
}

fn on_ring_boundary(ring: &[LonLat], p: LonLat) -> bool {
    ring.windows(2).any(|w| on_segment(w[0], w[1], p))
}

#[derive(Debug, Clone, PartialEq)]
pub struct County {
    pub fips: String,
    pub name: String,
    pub state: String,
    pub polygons: Vec<Polygon>,
    pub centroid: LonLat,
    pub bbox: BBox,
}

impl County {
    /// Validate rings, normalize orientation, and compute centroid and bounds.
    pub fn new(
        fips: impl Into<String>,
        name: impl Into<String>,
        state: impl Into<String>,
        mut polygons: Vec<Polygon>,
    ) -> Result<Self> {
        let fips = fips.into();
        if fips.len() != 5 || !fips.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::format("county", format!("fips `{fips}` is not 5 digits")));
        }
        if polygons.is_empty() {
            return Err(Error::format("county", format!("county {fips} has no polygons")));
        }
        let mut bbox = BBox::empty();
        let (mut area2, mut cx, mut cy) = (0.0, 0.0, 0.0);
        for poly in &mut polygons {
            for ring in std::iter::once(&mut poly.outer).chain(poly.holes.iter_mut()) {
                check_ring(ring).map_err(|m| Error::format("county", format!("{fips}: {m}")))?;
            }
            if signed_area2(&poly.outer) < 0.0 {
                poly.outer.reverse();
            }
            for hole in &mut poly.holes {
                if signed_area2(hole) > 0.0 {
                    hole.reverse();
                }
            }
            for ring in poly.rings() {
                for w in ring.windows(2) {
                    let c = w[0][0] * w[1][1] - w[1][0] * w[0][1];
                    area2 += c;
                    cx += (w[0][0] + w[1][0]) * c;
                    cy += (w[0][1] + w[1][1]) * c;
                }
                for &p in ring {
                    bbox.extend(p);
                }
            }
        }
        let centroid = if area2.abs() > 0.0 {
            [cx / (3.0 * area2), cy / (3.0 * area2)]
        } else {
            vertex_mean(&polygons)
        };
        Ok(County {
            fips,
            name: name.into(),
            state: state.into(),
            polygons,
            centroid,
            bbox,
        })
    }

    pub fn contains(&self, p: LonLat) -> bool {
        self.bbox.contains(p) && self.polygons.iter().any(|poly| poly.contains(p))
    }

    /// GeoJSON geometry object for this county.
    pub fn geometry_json(&self) -> Value {
        let ring = |r: &Vec<LonLat>| -> Value { r.iter().map(|p| json!([p[0], p[1]])).collect() };
        let poly = |p: &Polygon| -> Value { p.rings().map(ring).collect() };
        if self.polygons.len() == 1 {
            json!({"type": "Polygon", "coordinates": poly(&self.polygons[0])})
        } else {
            json!({"type": "MultiPolygon", "coordinates": self.polygons.iter().map(poly).collect::<Vec<_>>()})
        }
    }
}

fn vertex_mean(polygons: &[Polygon]) -> LonLat {
    let pts: Vec<LonLat> = polygons.iter().flat_map(|p| p.outer.iter().copied()).collect();
    let n = pts.len() as f64;
    [
        pts.iter().map(|p| p[0]).sum::<f64>() / n,
        pts.iter().map(|p| p[1]).sum::<f64>() / n,
    ]
}

fn check_ring(ring: &[LonLat]) -> std::result::Result<(), String> {
    if ring.len() < 4 {
        return Err(format!("ring has {} vertices, need at least 4", ring.len()));
    }
    if ring.first() != ring.last() {
        return Err("open ring".into());
    }
    if ring.iter().flatten().any(|v| !v.is_finite()) {
        return Err("non-finite coordinate".into());
    }
    Ok(())
}

/// Uniform grid over the bounding boxes of all counties.
#[derive(Debug, Clone)]
struct GridIndex {
    extent: BBox,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<usize>>,
}

impl GridIndex {
    fn build(counties: &[County]) -> Self {
        let mut extent = BBox::empty();
        for c in counties {
            extent.union(&c.bbox);
        }
        let side = ((counties.len() as f64).sqrt().ceil() as usize).max(1);
        let mut index = GridIndex {
            extent,
            nx: side,
            ny: side,
            cells: vec![Vec::new(); side * side],
        };
        for (i, c) in counties.iter().enumerate() {
            let (x0, y0) = index.cell_of(c.bbox.min);
            let (x1, y1) = index.cell_of(c.bbox.max);
            for gx in x0..=x1 {
                for gy in y0..=y1 {
                    index.cells[gy * index.nx + gx].push(i);
                }
            }
        }
        index
    }

    fn cell_of(&self, p: LonLat) -> (usize, usize) {
        let axis = |k: usize, n: usize| -> usize {
            let span = self.extent.max[k] - self.extent.min[k];
            if span <= 0.0 {
                return 0;
            }
            let f = (p[k] - self.extent.min[k]) / span * n as f64;
            (f.floor().max(0.0) as usize).min(n - 1)
        };
        (axis(0, self.nx), axis(1, self.ny))
    }

    fn candidates(&self, p: LonLat) -> &[usize] {
        if !self.extent.contains(p) {
            return &[];
        }
        let (gx, gy) = self.cell_of(p);
        &self.cells[gy * self.nx + gx]
    }
}

/// Immutable set of counties sorted by fips, with a bounding-box index.
#[derive(Debug, Clone)]
pub struct CountySet {
    counties: Vec<County>,
    index: GridIndex,
}

impl CountySet {
    pub fn new(mut counties: Vec<County>) -> Result<Self> {
        let mut seen = HashSet::new();
        for c in &counties {
            if !seen.insert(c.fips.clone()) {
                return Err(Error::format("counties", format!("duplicate fips {}", c.fips)));
            }
        }
        counties.sort_by(|a, b| a.fips.cmp(&b.fips));
        let index = GridIndex::build(&counties);
        Ok(Self { counties, index })
    }

    pub fn len(&self) -> usize {
        self.counties.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counties.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, County> {
        self.counties.iter()
    }

    pub fn get(&self, fips: &str) -> Option<&County> {
        self.counties
            .binary_search_by(|c| c.fips.as_str().cmp(fips))
            .ok()
            .map(|i| &self.counties[i])
    }

    /// Fips of the county containing `p`; the smallest fips wins on shared
    /// boundaries.
    pub fn locate(&self, p: LonLat) -> Option<&str> {
        // candidates are stored in fips order, so the first hit is the smallest
        self.index
            .candidates(p)
            .iter()
            .map(|&i| &self.counties[i])
            .find(|c| c.contains(p))
            .map(|c| c.fips.as_str())
    }
}

pub fn locate_county(point: LonLat, counties: &CountySet) -> Option<&str> {
    counties.locate(point)
}

#[derive(Debug, Clone)]
pub struct CountyParseOptions {
    pub fips_property: String,
    pub name_property: String,
    pub state_property: String,
}

impl Default for CountyParseOptions {
    fn default() -> Self {
        Self {
            fips_property: "GEOID".into(),
            name_property: "NAME".into(),
            state_property: "STUSPS".into(),
        }
    }
}

/// Parse a GeoJSON FeatureCollection of county polygons.
pub fn parse_counties<R: Read>(reader: R, opts: &CountyParseOptions) -> Result<CountySet> {
    let doc: Value = serde_json::from_reader(reader).map_err(|e| {
        if e.is_io() {
            Error::Io(e.into())
        } else {
            Error::format("counties", e.to_string())
        }
    })?;
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::format("counties", "not a GeoJSON FeatureCollection"))?;
    let mut counties = Vec::with_capacity(features.len());
    for (k, feature) in features.iter().enumerate() {
        counties.push(parse_feature(feature, k, opts)?);
    }
    CountySet::new(counties)
}

fn parse_feature(feature: &Value, k: usize, opts: &CountyParseOptions) -> Result<County> {
    let err = |m: String| Error::format("counties", format!("{m} at feature {k}"));
    let props = feature.get("properties").unwrap_or(&Value::Null);
    let fips = match props.get(&opts.fips_property) {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) if n.as_u64().is_some() => format!("{:05}", n.as_u64().unwrap()),
        _ => return Err(err(format!("missing fips property `{}`", opts.fips_property))),
    };
    let text = |key: &str| props.get(key).and_then(Value::as_str).unwrap_or_default().to_string();
    let geometry = feature.get("geometry").unwrap_or(&Value::Null);
    let coords = geometry.get("coordinates");
    let polygons = match (geometry.get("type").and_then(Value::as_str), coords) {
        (Some("Polygon"), Some(c)) => vec![parse_polygon(c).map_err(err)?],
        (Some("MultiPolygon"), Some(Value::Array(polys))) => polys
            .iter()
            .map(parse_polygon)
            .collect::<std::result::Result<_, _>>()
            .map_err(err)?,
        _ => return Err(err("non-polygonal geometry".into())),
    };
    County::new(fips, text(&opts.name_property), text(&opts.state_property), polygons)
        .map_err(|e| match e {
            Error::Format { message, .. } => err(message),
            other => other,
        })
}

fn parse_polygon(v: &Value) -> std::result::Result<Polygon, String> {
    let rings = v.as_array().ok_or("polygon coordinates are not an array")?;
    let mut parsed = Vec::with_capacity(rings.len());
    for ring in rings {
        let pts = ring.as_array().ok_or("ring is not an array")?;
        let mut out = Vec::with_capacity(pts.len());
        for p in pts {
            let xy = p.as_array().ok_or("vertex is not an array")?;
            match (xy.first().and_then(Value::as_f64), xy.get(1).and_then(Value::as_f64)) {
                (Some(x), Some(y)) => out.push([x, y]),
                _ => return Err("vertex is not a number pair".into()),
            }
        }
        if out.len() >= 2 && out.first() != out.last() {
            return Err("open ring".into());
        }
        parsed.push(out);
    }
    let mut iter = parsed.into_iter();
    let outer = iter.next().ok_or("polygon has no rings")?;
    Ok(Polygon {
        outer,
        holes: iter.collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn square(x0: f64, y0: f64, side: f64) -> Polygon {
        Polygon {
            outer: vec![
                [x0, y0],
                [x0, y0 + side],
                [x0 + side, y0 + side],
                [x0 + side, y0],
                [x0, y0],
            ],
            holes: vec![],
        }
    }

    fn two_counties() -> CountySet {
        CountySet::new(vec![
            County::new("01003", "B", "AL", vec![square(1.0, 0.0, 1.0)]).unwrap(),
            County::new("01001", "A", "AL", vec![square(0.0, 0.0, 1.0)]).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn orientation_is_normalized_ccw() {
        let c = County::new("01001", "A", "AL", vec![square(0.0, 0.0, 1.0)]).unwrap();
        assert!(signed_area2(&c.polygons[0].outer) > 0.0);
        assert_eq!(c.centroid, [0.5, 0.5]);
    }

    #[test]
    fn locate_inside_outside_and_shared_edge() {
        let set = two_counties();
        assert_eq!(set.locate([0.5, 0.5]), Some("01001"));
        assert_eq!(set.locate([1.5, 0.5]), Some("01003"));
        assert_eq!(set.locate([3.0, 0.5]), None);
        assert_eq!(set.locate([1.0, 0.5]), Some("01001"));
        assert_eq!(set.locate([1.0, 1.0]), Some("01001"));
    }

    #[test]
    fn holes_are_excluded() {
        let mut poly = square(0.0, 0.0, 4.0);
        poly.holes.push(square(1.0, 1.0, 2.0).outer);
        let c = County::new("02000", "H", "AK", vec![poly]).unwrap();
        assert!(c.contains([0.5, 0.5]));
        assert!(!c.contains([2.0, 2.0]));
        assert!(c.contains([1.0, 2.0]));
    }

    #[test]
    fn parse_errors_name_the_problem() {
        let feature = |fips: &str, ring: &str| {
            format!(
                r#"{{"type":"Feature","properties":{{"GEOID":"{fips}"}},"geometry":{{"type":"Polygon","coordinates":[{ring}]}}}}"#
            )
        };
        let closed = "[[0,0],[1,0],[1,1],[0,0]]";
        let open = "[[0,0],[1,0],[1,1],[0,1]]";
        let fc = |fs: Vec<String>| format!(r#"{{"type":"FeatureCollection","features":[{}]}}"#, fs.join(","));
        let opts = CountyParseOptions::default();

        let ok = parse_counties(fc(vec![feature("01001", closed), feature("01003", closed)]).as_bytes(), &opts).unwrap();
        assert_eq!(ok.len(), 2);

        let dup = parse_counties(fc(vec![feature("01001", closed), feature("01001", closed)]).as_bytes(), &opts)
            .unwrap_err();
        assert!(dup.to_string().contains("duplicate fips 01001"), "{dup}");

        let bad = parse_counties(fc(vec![feature("01001", closed), feature("01003", open)]).as_bytes(), &opts)
            .unwrap_err();
        assert!(bad.to_string().contains("open ring at feature 1"), "{bad}");

        let point = r#"{"type":"FeatureCollection","features":[{"type":"Feature","properties":{"GEOID":"01001"},"geometry":{"type":"Point","coordinates":[0,0]}}]}"#;
        let e = parse_counties(point.as_bytes(), &opts).unwrap_err();
        assert!(e.to_string().contains("non-polygonal geometry at feature 0"), "{e}");

        let nofips = r#"{"type":"FeatureCollection","features":[{"type":"Feature","properties":{},"geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,0]]]}}]}"#;
        let e = parse_counties(nofips.as_bytes(), &opts).unwrap_err();
        assert!(e.to_string().contains("missing fips"), "{e}");
    }
}
