//! Unit conventions.
//!
//! All rates and energies inside the crate are angular frequencies in rad/µs;
//! times are in µs. Configuration surfaces quote ordinary frequency in MHz
//! (so `mhz(5.8)` is a 5.8 MHz tunneling rate) and convert by 2π, which works
//! out because 1 MHz = 1/µs.

use std::f64::consts::TAU;

/// Ordinary frequency in MHz to angular frequency in rad/µs.
pub fn mhz(f: f64) -> f64 {
    TAU * f
}

/// Angular frequency in rad/µs back to ordinary frequency in MHz.
pub fn to_mhz(w: f64) -> f64 {
    w / TAU
}

/// Nanoseconds to the internal µs time unit.
pub fn ns(t: f64) -> f64 {
    t * 1e-3
}

/// µs to nanoseconds.
pub fn to_ns(t: f64) -> f64 {
    t * 1e3
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        assert!((to_mhz(mhz(5.8)) - 5.8).abs() < 1e-12);
        assert!((mhz(5.8) - 36.44247478).abs() < 1e-6);
        assert!((ns(86.2) - 0.0862).abs() < 1e-15);
    }
}
