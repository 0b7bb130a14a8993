//! Physical constants shared by every module.

/// Earth gravitational parameter (km^3/s^2).
pub const MU_EARTH: f64 = 398_600.441_8;

/// Speed of light (km/s).
pub const SPEED_OF_LIGHT: f64 = 299_792.458;

/// Equatorial Earth radius (km), used for line-of-sight occlusion.
pub const EARTH_RADIUS: f64 = 6_378.137;

/// Geostationary orbit radius (km).
pub const GEO_RADIUS: f64 = 42_164.0;

/// Meters per kilometer; thrust (N) / mass (kg) is in m/s^2.
pub const METERS_PER_KM: f64 = 1_000.0;
