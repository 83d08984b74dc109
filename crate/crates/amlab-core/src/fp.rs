//! Float intrinsics routed through `std` or `libm`, so the rest of the
//! crate is oblivious to which build it is in.

#![allow(dead_code)]

macro_rules! unary {
    ($($name:ident / $libm:ident),* $(,)?) => {
        $(
            #[cfg(feature = "std")]
            #[inline(always)]
            pub(crate) fn $name(x: f64) -> f64 {
                f64::$name(x)
            }

            #[cfg(not(feature = "std"))]
            #[inline(always)]
            pub(crate) fn $name(x: f64) -> f64 {
                libm::$libm(x)
            }
        )*
    };
}

unary! {
    abs / fabs,
    sqrt / sqrt,
    exp / exp,
    ln / log,
    cos / cos,
    sin / sin,
    acos / acos,
    floor / floor,
}

#[cfg(feature = "std")]
#[inline(always)]
pub(crate) fn powf(x: f64, y: f64) -> f64 {
    f64::powf(x, y)
}

#[cfg(not(feature = "std"))]
#[inline(always)]
pub(crate) fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}
