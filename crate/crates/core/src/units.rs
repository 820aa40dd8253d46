//! Physical constants and unit conversions.

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Spreading constant `(c / 4π)^2` in m²/s².
pub fn spreading_constant() -> f64 {
    let r = SPEED_OF_LIGHT / (4.0 * std::f64::consts::PI);
    r * r
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * db_to_linear(dbm)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    linear_to_db(w / 1e-3)
}

/// Rates inside the optimizer are carried in Gbit/s so that penalty factors of
/// order 10² are commensurate with the max-min objective.
pub const RATE_UNIT_BPS: f64 = 1e9;

/// Powers inside the optimizer are carried in mW.
pub const POWER_UNIT_W: f64 = 1e-3;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversions_round_trip() {
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-12);
        assert!((watts_to_dbm(dbm_to_watts(3.2)) - 3.2).abs() < 1e-12);
        assert!((db_to_linear(25.0) * db_to_linear(15.0) - 1e4).abs() < 1e-8);
    }

    #[test]
    fn spreading_constant_value() {
        // (c / 4π·1e12)^2 at 1 m
        let g = spreading_constant() / 1e24;
        assert!((g - 5.6911e-10).abs() / g < 1e-4);
    }
}
