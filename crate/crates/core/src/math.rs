//! Float helpers that compile with and without `std`.
//!
//! With the `std` feature the platform intrinsics are used; without it the
//! same functions come from `libm`.

#![allow(dead_code)]

macro_rules! forward {
    ($($name:ident => $libm:ident),* $(,)?) => {
        $(
            #[cfg(feature = "std")]
            #[inline]
            pub fn $name(x: f64) -> f64 {
                f64::$name(x)
            }

            #[cfg(not(feature = "std"))]
            #[inline]
            pub fn $name(x: f64) -> f64 {
                libm::$libm(x)
            }
        )*
    };
}

forward! {
    sqrt => sqrt,
    ln => log,
    log2 => log2,
    exp => exp,
    exp2 => exp2,
    ln_1p => log1p,
    floor => floor,
    ceil => ceil,
    round => round,
    sin => sin,
    cos => cos,
    abs => fabs,
}

#[cfg(feature = "std")]
#[inline]
pub fn atan2(y: f64, x: f64) -> f64 {
    f64::atan2(y, x)
}

#[cfg(not(feature = "std"))]
#[inline]
pub fn atan2(y: f64, x: f64) -> f64 {
    libm::atan2(y, x)
}

#[cfg(feature = "std")]
#[inline]
pub fn hypot(x: f64, y: f64) -> f64 {
    f64::hypot(x, y)
}

#[cfg(not(feature = "std"))]
#[inline]
pub fn hypot(x: f64, y: f64) -> f64 {
    libm::hypot(x, y)
}
