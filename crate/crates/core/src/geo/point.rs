use serde::{Deserialize, Serialize};

use super::GeoError;

/// Mean Earth radius in metres (IUGG).
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// WGS84 coordinate in degrees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if !lat.is_finite() || lat.abs() > 90.0 {
            return Err(GeoError::Coordinate(format!("latitude {lat} outside [-90, 90]")));
        }
        if !lon.is_finite() || lon.abs() > 180.0 {
            return Err(GeoError::Coordinate(format!("longitude {lon} outside [-180, 180]")));
        }
        Ok(Self { lat, lon })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

/// Equirectangular projection about a reference point, in metres
/// (x east, y north).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalProjection {
    origin: GeoPoint,
    cos_lat: f64,
}

impl LocalProjection {
    pub fn new(origin: GeoPoint) -> Self {
        Self { origin, cos_lat: origin.lat.to_radians().cos() }
    }

    /// Projection about the mean coordinate of `points`; `None` if empty.
    pub fn about_centroid<'a, I: IntoIterator<Item = &'a GeoPoint>>(points: I) -> Option<Self> {
        let (mut lat, mut lon, mut n) = (0.0, 0.0, 0usize);
        for p in points {
            lat += p.lat;
            lon += p.lon;
            n += 1;
        }
        if n == 0 {
            return None;
        }
        Some(Self::new(GeoPoint { lat: lat / n as f64, lon: lon / n as f64 }))
    }

    pub fn origin(&self) -> GeoPoint {
        self.origin
    }

    pub fn project(&self, p: &GeoPoint) -> [f64; 2] {
        [
            (p.lon - self.origin.lon).to_radians() * self.cos_lat * EARTH_RADIUS_M,
            (p.lat - self.origin.lat).to_radians() * EARTH_RADIUS_M,
        ]
    }

    pub fn unproject(&self, xy: [f64; 2]) -> Result<GeoPoint, GeoError> {
        let lat = self.origin.lat + (xy[1] / EARTH_RADIUS_M).to_degrees();
        let lon = self.origin.lon + (xy[0] / (EARTH_RADIUS_M * self.cos_lat)).to_degrees();
        GeoPoint::new(lat, lon)
    }

    pub fn distance(&self, a: &GeoPoint, b: &GeoPoint) -> f64 {
        let pa = self.project(a);
        let pb = self.project(b);
        (pa[0] - pb[0]).hypot(pa[1] - pb[1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_checks() {
        assert!(GeoPoint::new(95.0, 0.0).is_err());
        assert!(GeoPoint::new(0.0, -180.5).is_err());
        assert!(GeoPoint::new(f64::NAN, 0.0).is_err());
        assert!(GeoPoint::new(-90.0, 180.0).is_ok());
    }

    #[test]
    fn one_millidegree_of_latitude() {
        let o = GeoPoint::new(45.4, -75.7).unwrap();
        let proj = LocalProjection::new(o);
        let north = GeoPoint::new(45.401, -75.7).unwrap();
        let d = proj.distance(&o, &north);
        assert!((d - 111.195).abs() < 0.01, "{d}");
        let east = GeoPoint::new(45.4, -75.699).unwrap();
        let d = proj.distance(&o, &east);
        assert!((d - 111.195 * 45.4f64.to_radians().cos()).abs() < 0.01);
    }

    #[test]
    fn unproject_inverts() {
        let proj = LocalProjection::new(GeoPoint::new(44.23, -76.48).unwrap());
        let p = GeoPoint::new(44.2345, -76.4711).unwrap();
        let q = proj.unproject(proj.project(&p)).unwrap();
        assert!((p.lat() - q.lat()).abs() < 1e-12 && (p.lon() - q.lon()).abs() < 1e-12);
    }
}
