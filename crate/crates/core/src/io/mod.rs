//! File formats and image preprocessing: PGM input, Gaussian smoothing and
//! binarization, CSV/VTK field export, parameter snapshots, experiment
//! configuration, and the synthetic fibre fixture.

pub mod config;
pub mod export;
pub mod fixture;
pub mod image;
pub mod pgm;
pub mod snapshot;

/// `printf("%.9e")` formatting: nine fraction digits and a signed exponent
/// of at least two digits.
pub fn fmt_sci(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{v:.9e}");
    let (mant, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mant}e{sign}{:02}", exp.abs())
}
