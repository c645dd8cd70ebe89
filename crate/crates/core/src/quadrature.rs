//! Adaptive Gauss–Kronrod (7/15) quadrature.

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Kronrod estimate, error estimate and the Kronrod estimate of the integral of |f|.
fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    let mut abs = WGK[7] * fc.abs();
    for i in 0..7 {
        let x = h * XGK[i];
        let (fl, fr) = (f(c - x), f(c + x));
        k += WGK[i] * (fl + fr);
        abs += WGK[i] * (fl.abs() + fr.abs());
        if i % 2 == 1 {
            g += WG[i / 2] * (fl + fr);
        }
    }
    (k * h, ((k - g) * h).abs(), abs * h.abs())
}

/// Integrate `f` over `[a, b]` to absolute tolerance `tol`.
///
/// Returns the estimate and the accumulated error bound. An interval is
/// accepted once its error is below its share of `tol` or at the rounding
/// level of the integrand, and after at most 40 bisections.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    integrate_depth(&f, a, b, tol, 40)
}

fn integrate_depth<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, max_depth: u32) -> (f64, f64) {
    let (value, err, abs) = kronrod(f, a, b);
    if err <= tol || err <= 50.0 * f64::EPSILON * abs || max_depth == 0 {
        return (value, err);
    }
    let m = 0.5 * (a + b);
    let (l, el) = integrate_depth(f, a, m, 0.5 * tol, max_depth - 1);
    let (r, er) = integrate_depth(f, m, b, 0.5 * tol, max_depth - 1);
    (l + r, el + er)
}
