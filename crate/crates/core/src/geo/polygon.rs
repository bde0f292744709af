//! Building footprints from GeoJSON and the point-to-footprint join.

use serde_json::Value;

use super::{BuildingTypeMap, GeoError, GeoPoint, InventoryRecord, LocalProjection, ReviewItem, SourcePoint};

/// One footprint; `rings[0]` of each part is the outer boundary, the rest
/// are holes. Coordinates are `[lon, lat]` degrees.
#[derive(Clone, Debug, PartialEq)]
pub struct TypedPolygon {
    pub feature_index: usize,
    pub id: Option<String>,
    pub building_type: String,
    pub parts: Vec<Vec<Vec<[f64; 2]>>>,
}

/// Why a feature was skipped.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureDiagnostic {
    pub feature_index: usize,
    pub message: String,
}

fn ring_area(ring: &[[f64; 2]]) -> f64 {
    let mut a = 0.0;
    for w in ring.windows(2) {
        a += w[0][0] * w[1][1] - w[1][0] * w[0][1];
    }
    a / 2.0
}

fn parse_ring(v: &Value) -> Result<Vec<[f64; 2]>, String> {
    let arr = v.as_array().ok_or("ring is not an array")?;
    let mut ring = Vec::with_capacity(arr.len());
    for p in arr {
        let c = p.as_array().filter(|c| c.len() >= 2).ok_or("position needs [lon, lat]")?;
        let lon = c[0].as_f64().ok_or("non-numeric coordinate")?;
        let lat = c[1].as_f64().ok_or("non-numeric coordinate")?;
        GeoPoint::new(lat, lon).map_err(|e| e.to_string())?;
        ring.push([lon, lat]);
    }
    if ring.len() < 4 {
        return Err(format!("ring has {} positions, need at least 4", ring.len()));
    }
    if ring.first() != ring.last() {
        return Err("ring is not closed".into());
    }
    if ring_area(&ring).abs() < 1e-18 {
        return Err("ring has zero area".into());
    }
    Ok(ring)
}

fn parse_polygon(v: &Value) -> Result<Vec<Vec<[f64; 2]>>, String> {
    let rings = v.as_array().ok_or("polygon coordinates are not an array")?;
    if rings.is_empty() {
        return Err("polygon has no rings".into());
    }
    rings.iter().map(parse_ring).collect()
}

/// Parse a FeatureCollection whose features carry a `building_type`
/// property. Invalid features are listed, not fatal.
pub fn parse_building_geojson(text: &str) -> Result<(Vec<TypedPolygon>, Vec<FeatureDiagnostic>), GeoError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| GeoError::GeoJson(e.to_string()))?;
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(GeoError::GeoJson("top level is not a FeatureCollection".into()));
    }
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| GeoError::GeoJson("missing `features` array".into()))?;
    let mut polys = Vec::new();
    let mut diags = Vec::new();
    for (i, f) in features.iter().enumerate() {
        let result = (|| -> Result<TypedPolygon, String> {
            let props = f.get("properties").ok_or("no properties")?;
            let building_type = match props.get("building_type") {
                Some(Value::String(s)) => s.clone(),
                Some(Value::Null) | None => return Err("missing building_type".into()),
                Some(other) => other.to_string(),
            };
            let geom = f.get("geometry").ok_or("no geometry")?;
            let coords = geom.get("coordinates").ok_or("geometry has no coordinates")?;
            let parts = match geom.get("type").and_then(Value::as_str) {
                Some("Polygon") => vec![parse_polygon(coords)?],
                Some("MultiPolygon") => coords
                    .as_array()
                    .ok_or("multipolygon coordinates are not an array")?
                    .iter()
                    .map(parse_polygon)
                    .collect::<Result<_, _>>()?,
                Some(t) => return Err(format!("unsupported geometry type {t}")),
                None => return Err("geometry has no type".into()),
            };
            let id = f.get("id").map(|v| v.as_str().map_or_else(|| v.to_string(), str::to_string));
            Ok(TypedPolygon { feature_index: i, id, building_type, parts })
        })();
        match result {
            Ok(p) => polys.push(p),
            Err(message) => diags.push(FeatureDiagnostic { feature_index: i, message }),
        }
    }
    Ok((polys, diags))
}

/// A footprint in local metres.
struct Planar {
    parts: Vec<Vec<Vec<[f64; 2]>>>,
    area: f64,
    bbox: [f64; 4],
}

fn to_planar(p: &TypedPolygon, proj: &LocalProjection) -> Planar {
    let parts: Vec<Vec<Vec<[f64; 2]>>> = p
        .parts
        .iter()
        .map(|rings| {
            rings
                .iter()
                .map(|ring| {
                    ring.iter()
                        .map(|&[lon, lat]| proj.project(&GeoPoint::new(lat, lon).expect("validated on parse")))
                        .collect()
                })
                .collect()
        })
        .collect();
    let mut area = 0.0;
    let mut bbox = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for rings in &parts {
        area += ring_area(&rings[0]).abs();
        for hole in &rings[1..] {
            area -= ring_area(hole).abs();
        }
        for q in &rings[0] {
            bbox = [bbox[0].min(q[0]), bbox[1].min(q[1]), bbox[2].max(q[0]), bbox[3].max(q[1])];
        }
    }
    Planar { parts, area, bbox }
}

fn in_ring(ring: &[[f64; 2]], x: f64, y: f64) -> bool {
    let mut inside = false;
    for w in ring.windows(2) {
        let ([x1, y1], [x2, y2]) = (w[0], w[1]);
        if (y1 > y) != (y2 > y) && x < x1 + (y - y1) * (x2 - x1) / (y2 - y1) {
            inside = !inside;
        }
    }
    inside
}

fn contains(p: &Planar, x: f64, y: f64) -> bool {
    if x < p.bbox[0] || x > p.bbox[2] || y < p.bbox[1] || y > p.bbox[3] {
        return false;
    }
    p.parts.iter().any(|rings| in_ring(&rings[0], x, y) && !rings[1..].iter().any(|h| in_ring(h, x, y)))
}

fn segment_distance(a: [f64; 2], b: [f64; 2], x: f64, y: f64) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((x - a[0]) * dx + (y - a[1]) * dy) / len2).clamp(0.0, 1.0) };
    (x - a[0] - t * dx).hypot(y - a[1] - t * dy)
}

fn boundary_distance(p: &Planar, x: f64, y: f64) -> f64 {
    p.parts
        .iter()
        .flatten()
        .flat_map(|ring| ring.windows(2))
        .map(|w| segment_distance(w[0], w[1], x, y))
        .fold(f64::INFINITY, f64::min)
}

/// Index of the polygon a point joins to: the smallest-area container, else
/// the nearest boundary within `max_distance_m`. Ties go to the lower index.
pub fn join_point(polys: &[TypedPolygon], proj: &LocalProjection, point: &GeoPoint, max_distance_m: f64) -> Option<usize> {
    let planar: Vec<Planar> = polys.iter().map(|p| to_planar(p, proj)).collect();
    join_planar(&planar, proj.project(point), max_distance_m)
}

fn join_planar(planar: &[Planar], [x, y]: [f64; 2], max_distance_m: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in planar.iter().enumerate() {
        if contains(p, x, y) && best.is_none_or(|(_, a)| p.area < a) {
            best = Some((i, p.area));
        }
    }
    if let Some((i, _)) = best {
        return Some(i);
    }
    let mut nearest: Option<(usize, f64)> = None;
    for (i, p) in planar.iter().enumerate() {
        if p.bbox[0] - x > max_distance_m
            || x - p.bbox[2] > max_distance_m
            || p.bbox[1] - y > max_distance_m
            || y - p.bbox[3] > max_distance_m
        {
            continue;
        }
        let d = boundary_distance(p, x, y);
        if d <= max_distance_m && nearest.is_none_or(|(_, bd)| d < bd) {
            nearest = Some((i, d));
        }
    }
    nearest.map(|(i, _)| i)
}

/// Label building points by the footprint they fall in (or lie near).
/// Points with no footprint go to review; an unmapped type string is an error.
pub fn spatial_join_buildings(
    points: Vec<SourcePoint>,
    polygons: &[TypedPolygon],
    types: &BuildingTypeMap,
    max_distance_m: f64,
    source: &str,
) -> Result<(Vec<InventoryRecord>, Vec<ReviewItem>), GeoError> {
    let Some(proj) = LocalProjection::about_centroid(points.iter().map(|p| &p.point)) else {
        return Ok((Vec::new(), Vec::new()));
    };
    let planar: Vec<Planar> = polygons.iter().map(|p| to_planar(p, &proj)).collect();
    let mut records = Vec::new();
    let mut review = Vec::new();
    for p in points {
        match join_planar(&planar, proj.project(&p.point), max_distance_m) {
            Some(i) => {
                let poly = &polygons[i];
                let label = types.classify(&poly.building_type)?;
                let mut attributes = p.attributes;
                attributes.insert("building_type".into(), poly.building_type.clone());
                records.push(InventoryRecord { id: p.id, point: p.point, label, source: source.to_string(), attributes });
            }
            None => review.push(ReviewItem {
                source: source.to_string(),
                id: p.id,
                reason: format!("no footprint within {max_distance_m} m"),
            }),
        }
    }
    Ok((records, review))
}

/// Footprints as their own building points, placed at the outer-ring
/// vertex mean of the largest part.
pub fn footprint_points(polygons: &[TypedPolygon]) -> Vec<SourcePoint> {
    polygons
        .iter()
        .map(|p| {
            let part = p
                .parts
                .iter()
                .max_by(|a, b| ring_area(&a[0]).abs().total_cmp(&ring_area(&b[0]).abs()))
                .expect("at least one part");
            let ring = &part[0][..part[0].len() - 1];
            let n = ring.len() as f64;
            let lon = ring.iter().map(|q| q[0]).sum::<f64>() / n;
            let lat = ring.iter().map(|q| q[1]).sum::<f64>() / n;
            SourcePoint {
                id: p.id.clone().unwrap_or_else(|| format!("feature{}", p.feature_index)),
                point: GeoPoint::new(lat, lon).expect("mean of valid coordinates"),
                attributes: Default::default(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::ClutterLabel;

    fn square(cx: f64, cy: f64, half: f64) -> String {
        format!(
            "[[[{a},{b}],[{c},{b}],[{c},{d}],[{a},{d}],[{a},{b}]]]",
            a = cx - half,
            b = cy - half,
            c = cx + half,
            d = cy + half
        )
    }

    fn collection(features: &[(String, &str)]) -> String {
        let fs: Vec<String> = features
            .iter()
            .map(|(coords, t)| {
                format!(r#"{{"type":"Feature","properties":{{"building_type":"{t}"}},"geometry":{{"type":"Polygon","coordinates":{coords}}}}}"#)
            })
            .collect();
        format!(r#"{{"type":"FeatureCollection","features":[{}]}}"#, fs.join(","))
    }

    fn pt(id: &str, lat: f64, lon: f64) -> SourcePoint {
        SourcePoint { id: id.into(), point: GeoPoint::new(lat, lon).unwrap(), attributes: Default::default() }
    }

    #[test]
    fn containment_and_distance() {
        let text = collection(&[(square(-75.7, 45.4, 0.0001), "residential")]);
        let (polys, diags) = parse_building_geojson(&text).unwrap();
        assert!(diags.is_empty());
        let (recs, review) = spatial_join_buildings(
            vec![pt("in", 45.4, -75.7), pt("far", 45.4018, -75.7), pt("anchor", 45.399, -75.7)],
            &polys,
            &BuildingTypeMap::default(),
            25.0,
            "osm",
        )
        .unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].label, ClutterLabel::Residential);
        assert_eq!(review.len(), 2);
    }

    #[test]
    fn nearest_within_radius() {
        let text = collection(&[(square(-75.7, 45.4, 0.0001), "industrial")]);
        let (polys, _) = parse_building_geojson(&text).unwrap();
        // ~11 m north of the top edge
        let (recs, _) =
            spatial_join_buildings(vec![pt("near", 45.4002, -75.7)], &polys, &BuildingTypeMap::default(), 25.0, "osm")
                .unwrap();
        assert_eq!(recs[0].label, ClutterLabel::NonResidential);
    }

    #[test]
    fn overlap_prefers_smaller() {
        let text = collection(&[
            (square(-75.7, 45.4, 0.001), "industrial"),
            (square(-75.7, 45.4, 0.0001), "house"),
        ]);
        let (polys, _) = parse_building_geojson(&text).unwrap();
        let (recs, _) =
            spatial_join_buildings(vec![pt("p", 45.4, -75.7)], &polys, &BuildingTypeMap::default(), 25.0, "osm").unwrap();
        assert_eq!(recs[0].label, ClutterLabel::Residential);
    }

    #[test]
    fn hole_excludes() {
        let outer = "[[-75.71,45.39],[-75.69,45.39],[-75.69,45.41],[-75.71,45.41],[-75.71,45.39]]";
        let hole = "[[-75.701,45.399],[-75.699,45.399],[-75.699,45.401],[-75.701,45.401],[-75.701,45.399]]";
        let text = collection(&[(format!("[{outer},{hole}]"), "retail")]);
        let (polys, _) = parse_building_geojson(&text).unwrap();
        let proj = LocalProjection::new(GeoPoint::new(45.4, -75.7).unwrap());
        assert_eq!(join_point(&polys, &proj, &GeoPoint::new(45.4, -75.7).unwrap(), 1.0), None);
        assert_eq!(join_point(&polys, &proj, &GeoPoint::new(45.405, -75.7).unwrap(), 1.0), Some(0));
    }

    #[test]
    fn invalid_rings_reported_per_feature() {
        let open = "[[[-75.7,45.4],[-75.69,45.4],[-75.69,45.41],[-75.7,45.41]]]".to_string();
        let short = "[[[-75.7,45.4],[-75.69,45.4],[-75.7,45.4]]]".to_string();
        let text = collection(&[(open, "house"), (square(-75.7, 45.4, 0.0001), "house"), (short, "house")]);
        let (polys, diags) = parse_building_geojson(&text).unwrap();
        assert_eq!(polys.len(), 1);
        assert_eq!(diags.iter().map(|d| d.feature_index).collect::<Vec<_>>(), vec![0, 2]);
        assert!(diags[0].message.contains("closed"));
    }

    #[test]
    fn unmapped_type_is_error() {
        let text = collection(&[(square(-75.7, 45.4, 0.0001), "castle")]);
        let (polys, _) = parse_building_geojson(&text).unwrap();
        let r = spatial_join_buildings(vec![pt("p", 45.4, -75.7)], &polys, &BuildingTypeMap::default(), 25.0, "osm");
        assert!(matches!(r, Err(GeoError::UnmappedBuildingType(s)) if s == "castle"));
    }

    #[test]
    fn footprint_centres() {
        let text = collection(&[(square(-75.7, 45.4, 0.0001), "house")]);
        let (polys, _) = parse_building_geojson(&text).unwrap();
        let pts = footprint_points(&polys);
        assert!((pts[0].point.lat() - 45.4).abs() < 1e-9);
        assert_eq!(pts[0].id, "feature0");
    }
}
