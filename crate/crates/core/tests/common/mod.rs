//! Oracles shared by the integration suites.
#![allow(dead_code, clippy::excessive_precision)]

use incentive_fdr::model::{DiscretePrior, ParameterPoint};
use incentive_fdr::Probability;

pub fn p(v: f64) -> Probability {
    Probability::new(v).unwrap()
}

/// Φ at x = −6 + 0.3i, from a 50-digit erf evaluation.
pub const PHI_REFERENCE: [(f64, f64); 41] = [
    (-6.0, 9.865876450376981407e-10),
    (-5.7, 5.9903714010635344298e-9),
    (-5.4, 3.3320448485428572848e-8),
    (-5.1, 1.6982674071475982739e-7),
    (-4.8, 7.9332815197559461615e-7),
    (-4.5, 3.3976731247300604017e-6),
    (-4.2, 0.000013345749015906338353),
    (-3.9, 0.000048096344017602717147),
    (-3.6, 0.00015910859015753387967),
    (-3.3, 0.00048342414238377720111),
    (-3.0, 0.0013498980316300945267),
    (-2.7, 0.0034669738030406684959),
    (-2.4, 0.0081975359245961294444),
    (-2.1, 0.017864420562816556784),
    (-1.8, 0.03593031911292580396),
    (-1.5, 0.066807201268858066004),
    (-1.2, 0.11506967022170826802),
    (-0.9, 0.18406012534675948855),
    (-0.6, 0.27425311775007358029),
    (-0.3, 0.38208857781104736269),
    (0.0, 0.5),
    (0.3, 0.61791142218895263731),
    (0.6, 0.72574688224992641971),
    (0.9, 0.81593987465324051145),
    (1.2, 0.88493032977829173198),
    (1.5, 0.933192798731141934),
    (1.8, 0.96406968088707419604),
    (2.1, 0.98213557943718344322),
    (2.4, 0.99180246407540387056),
    (2.7, 0.9965330261969593315),
    (3.0, 0.99865010196836990547),
    (3.3, 0.9995165758576162228),
    (3.6, 0.99984089140984246612),
    (3.9, 0.99995190365598239728),
    (4.2, 0.99998665425098409366),
    (4.5, 0.99999660232687526994),
    (4.8, 0.99999920667184802441),
    (5.1, 0.99999983017325928524),
    (5.4, 0.99999996667955151457),
    (5.7, 0.99999999400962859894),
    (6.0, 0.99999999901341235496),
];

/// Adaptive Simpson with a Richardson correction.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fm, fb) = (f(a), f((a + b) / 2.0), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = (a + b) / 2.0;
    let (lm, rm) = ((a + m) / 2.0, (m + b) / 2.0);
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

pub fn promising() -> DiscretePrior {
    DiscretePrior::two_point(1.0, 0.8).unwrap()
}

pub fn three_point() -> DiscretePrior {
    DiscretePrior::new(vec![
        (ParameterPoint::null(), 0.6),
        (ParameterPoint::nonnull(0.5).unwrap(), 0.25),
        (ParameterPoint::nonnull(2.5).unwrap(), 0.15),
    ])
    .unwrap()
}
