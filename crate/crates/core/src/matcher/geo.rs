use crate::error::{Error, Result};
use crate::records::GeoPoint;

/// Mean Earth radius.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Great-circle distance on a sphere of radius [`EARTH_RADIUS_KM`].
pub fn haversine_km(p1: GeoPoint, p2: GeoPoint) -> Result<f64> {
    for p in [p1, p2] {
        GeoPoint::new(p.lat, p.lon)?;
    }
    if p1 == p2 {
        return Ok(0.0);
    }
    let (lat1, lat2) = (p1.lat.to_radians(), p2.lat.to_radians());
    let half_dlat = (lat2 - lat1) / 2.0;
    let half_dlon = (p2.lon - p1.lon).to_radians() / 2.0;
    let h = half_dlat.sin().powi(2) + lat1.cos() * lat2.cos() * half_dlon.sin().powi(2);
    let d = 2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin();
    if d.is_finite() {
        Ok(d)
    } else {
        Err(Error::Coordinate { lat: p2.lat, lon: p2.lon })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn p(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint { lat, lon }
    }

    #[test]
    fn closed_form_arcs() {
        // one degree of meridian is R·π/180
        let meridian = EARTH_RADIUS_KM * PI / 180.0;
        assert!((meridian - 111.195).abs() < 0.001);
        assert!((haversine_km(p(0.0, 0.0), p(1.0, 0.0)).unwrap() - meridian).abs() < 1e-9);
        let half = EARTH_RADIUS_KM * PI;
        assert!((half - 20_015.087).abs() < 0.01);
        assert!((haversine_km(p(0.0, 0.0), p(0.0, 180.0)).unwrap() - half).abs() < 1e-6);
    }

    #[test]
    fn identical_points() {
        assert_eq!(haversine_km(p(44.96, -115.49), p(44.96, -115.49)).unwrap(), 0.0);
    }

    #[test]
    fn out_of_range_is_error() {
        assert!(haversine_km(p(91.0, 0.0), p(0.0, 0.0)).is_err());
        assert!(haversine_km(p(0.0, 0.0), p(0.0, -180.5)).is_err());
        assert!(haversine_km(p(f64::NAN, 0.0), p(0.0, 0.0)).is_err());
    }
}
