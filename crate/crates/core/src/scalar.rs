//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumCast, ToPrimitive};

/// Real scalar type a field, barcode or loss can be computed in.
///
/// Implemented for `f32` and `f64`. Values are assumed finite wherever the
/// crate orders them, so comparisons go through [`Real::total_cmp`].
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumCast + Default + Debug + Display + Sum + Send + Sync + 'static
{
    /// NPY type string of the little-endian encoding.
    const NPY_DESCR: &'static str;

    fn total_cmp(&self, other: &Self) -> std::cmp::Ordering;

    /// Monotone map into `u64`: `a < b` iff `a.order_bits() < b.order_bits()`,
    /// and `0.0` and `-0.0` map to the same key.
    fn order_bits(self) -> u64;

    fn from_f64_lossy(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("finite f64 converts to any Real")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_bits_is_monotone() {
        let vals = [-3.5f64, -1e-300, -0.0, 0.0, 1e-300, 0.25, 1.0, 7e10];
        for w in vals.windows(2) {
            assert!(w[0].order_bits() <= w[1].order_bits(), "{w:?}");
        }
        assert_eq!((-0.0f64).order_bits(), 0.0f64.order_bits());
        assert!(0.5f32.order_bits() < 0.75f32.order_bits());
    }
}

impl Real for f32 {
    const NPY_DESCR: &'static str = "<f4";

    fn total_cmp(&self, other: &Self) -> std::cmp::Ordering {
        f32::total_cmp(self, other)
    }

    fn order_bits(self) -> u64 {
        (self as f64).order_bits()
    }
}

impl Real for f64 {
    const NPY_DESCR: &'static str = "<f8";

    fn total_cmp(&self, other: &Self) -> std::cmp::Ordering {
        f64::total_cmp(self, other)
    }

    fn order_bits(self) -> u64 {
        let bits = if self == 0.0 { 0u64 } else { self.to_bits() };
        if bits >> 63 == 1 {
            !bits
        } else {
            bits | (1 << 63)
        }
    }
}
