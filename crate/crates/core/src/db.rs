//! Noise levels in decibels relative to shot noise.

/// `10·log₁₀(V)`.
pub fn to_db(v: f64) -> f64 {
    10.0 * libm::log10(v)
}

pub fn from_db(db: f64) -> f64 {
    libm::pow(10.0, db / 10.0)
}
