//! Robin-boundary eigenproblem for drift–diffusion on a bounded interval.
//!
//! On `[0, L]` with downward drift `v` and surface adsorption rate `a` at both
//! walls, the substitution `p = exp(−u(z − z0)) q` with `u = v/(2D)` turns the
//! Fokker–Planck equation into a heat equation for `q` with Robin conditions
//! `q' = (κ − u) q` at `z = 0` and `q' = −(κ + u) q` at `z = L`, `κ = a/D`.
//! Its eigenfunctions are
//!
//! ```text
//! Z_n(z) = cos(s z) + (β/s) sin(s z),   β = κ − u,
//! ```
//!
//! with `s_n` the roots of `tan(sL)(s² − κ² + u²) = 2sκ`. The ground mode turns
//! hyperbolic (`s = iσ`) when `u` exceeds `u_c = √(2κ/L + κ²)` and affine at
//! `u = u_c`. The pure diffusion problem (lateral axis) is the case `u = 0`.

use thiserror::Error;

/// Default number of higher modes kept in series evaluations.
pub const DEFAULT_TERMS: usize = 10;

/// Relative distance to `u_c` inside which the ground mode is treated as affine.
pub const AFFINE_TOLERANCE: f64 = 1e-6;

const BISECTION_TOLERANCE: f64 = 1e-13;
const MAX_BISECTIONS: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("invalid boundary parameter {field} = {value}")]
    InvalidParameter { field: &'static str, value: f64 },
    #[error("failed to bracket eigenvalue {index} in ({lo}, {hi})")]
    Bracketing { index: usize, lo: f64, hi: f64 },
    #[error("mode index {index} out of range (spectrum holds {available} modes)")]
    IndexOutOfRange { index: usize, available: usize },
    #[error("position {position} outside [0, {length}]")]
    OutOfDomain { position: f64, length: f64 },
}

/// Reduced boundary parameters of one axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryParams {
    /// `u = v/(2D)` [1/m].
    pub drift: f64,
    /// `κ = a/D` [1/m].
    pub adsorption: f64,
    /// Interval length [m].
    pub length: f64,
}

impl BoundaryParams {
    pub fn new(drift: f64, adsorption: f64, length: f64) -> Result<Self, SpectralError> {
        if !(drift.is_finite() && drift >= 0.0) {
            return Err(SpectralError::InvalidParameter { field: "drift", value: drift });
        }
        if !(adsorption.is_finite() && adsorption >= 0.0) {
            return Err(SpectralError::InvalidParameter { field: "adsorption", value: adsorption });
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(SpectralError::InvalidParameter { field: "length", value: length });
        }
        Ok(Self { drift, adsorption, length })
    }

    /// `u_c = √(2κ/L + κ²)`.
    pub fn critical_drift(&self) -> f64 {
        critical_drift(self)
    }

    /// Slope coefficient `β = κ − u` of the eigenfunctions.
    fn slope(&self) -> f64 {
        self.adsorption - self.drift
    }
}

/// Drift at which the ground mode changes from trigonometric to hyperbolic.
pub fn critical_drift(params: &BoundaryParams) -> f64 {
    let k = params.adsorption;
    (2.0 * k / params.length + k * k).sqrt()
}

/// Form of one eigenmode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    /// `cos(sz) + (β/s) sin(sz)`, eigenvalue `s²`.
    Trigonometric { s: f64 },
    /// `cosh(σz) + (β/σ) sinh(σz)`, eigenvalue `−σ²`.
    Hyperbolic { sigma: f64 },
    /// `1 + βz`, eigenvalue 0.
    Affine,
}

impl Mode {
    /// Separation constant `s²` (negative for hyperbolic modes).
    pub fn eigenvalue_squared(&self) -> f64 {
        match *self {
            Mode::Trigonometric { s } => s * s,
            Mode::Hyperbolic { sigma } => -sigma * sigma,
            Mode::Affine => 0.0,
        }
    }

    fn value(&self, z: f64, p: &BoundaryParams) -> f64 {
        let beta = p.slope();
        match *self {
            Mode::Trigonometric { s } => {
                let (sn, cs) = (s * z).sin_cos();
                cs + beta / s * sn
            }
            Mode::Hyperbolic { sigma } if sigma * p.length > SPLIT_THRESHOLD => {
                let (grow, b) = split(sigma, p);
                grow(z) + b * (-sigma * z).exp()
            }
            Mode::Hyperbolic { sigma } => (sigma * z).cosh() + beta / sigma * (sigma * z).sinh(),
            Mode::Affine => 1.0 + beta * z,
        }
    }

    fn derivative(&self, z: f64, p: &BoundaryParams) -> f64 {
        let beta = p.slope();
        match *self {
            Mode::Trigonometric { s } => {
                let (sn, cs) = (s * z).sin_cos();
                -s * sn + beta * cs
            }
            Mode::Hyperbolic { sigma } if sigma * p.length > SPLIT_THRESHOLD => {
                let (grow, b) = split(sigma, p);
                sigma * (grow(z) - b * (-sigma * z).exp())
            }
            Mode::Hyperbolic { sigma } => sigma * (sigma * z).sinh() + beta * (sigma * z).cosh(),
            Mode::Affine => beta,
        }
    }

    /// `∫_0^L Z² dz` in a cancellation-free arrangement.
    fn norm(&self, p: &BoundaryParams) -> f64 {
        let alpha = -p.slope();
        let h = p.length;
        match *self {
            Mode::Trigonometric { s } => {
                let x = 2.0 * s * h;
                let sh = (s * h).sin();
                h / 2.0 + x.sin() / (4.0 * s) + alpha * alpha * x_minus_sin(x) / (4.0 * s.powi(3))
                    - alpha * sh * sh / (s * s)
            }
            Mode::Hyperbolic { sigma } if sigma * h > SPLIT_THRESHOLD => {
                let (u, k) = (p.drift, p.adsorption);
                let q = -(-2.0 * sigma * h).exp_m1();
                let (grow, b) = split(sigma, p);
                let a0 = grow(0.0);
                // A² (e^{2σh} − 1)/(2σ) with A e^{σh} kept finite
                let grow_sq = 4.0 * k * k * (-2.0 * sigma * h).exp() / (q * (sigma + k + u).powi(2)) / (2.0 * sigma);
                grow_sq + 2.0 * a0 * b * h + b * b * q / (2.0 * sigma)
            }
            Mode::Hyperbolic { sigma } => {
                let x = 2.0 * sigma * h;
                let sh = (sigma * h).sinh();
                h / 2.0 + x.sinh() / (4.0 * sigma) + alpha * alpha * sinh_minus_x(x) / (4.0 * sigma.powi(3))
                    - alpha * sh * sh / (sigma * sigma)
            }
            Mode::Affine => h - alpha * h * h + alpha * alpha * h.powi(3) / 3.0,
        }
    }

    /// `∫_a^b exp(−w z) Z(z) dz`.
    fn weighted_integral(&self, a: f64, b: f64, w: f64, p: &BoundaryParams) -> f64 {
        let beta = p.slope();
        match *self {
            Mode::Trigonometric { s } => {
                let denom = w * w + s * s;
                let anti = |z: f64| {
                    let (sn, cs) = (s * z).sin_cos();
                    (-w * z).exp() * ((s - beta * w / s) * sn - (w + beta) * cs) / denom
                };
                anti(b) - anti(a)
            }
            Mode::Hyperbolic { sigma } if sigma * p.length > SPLIT_THRESHOLD => {
                let c = b - a;
                let (grow, coef) = split(sigma, p);
                // growing part integrated back from b so nothing overflows
                let up = grow(b) * (-w * b).exp() * phi0(sigma - w, c);
                let down = coef * (-(w + sigma) * a).exp() * phi0(w + sigma, c);
                up + down
            }
            Mode::Hyperbolic { sigma } => {
                let c = b - a;
                let r = beta / sigma;
                let up = 0.5 * (1.0 + r) * (-(w - sigma) * a).exp() * phi0(w - sigma, c);
                let down = 0.5 * (1.0 - r) * (-(w + sigma) * a).exp() * phi0(w + sigma, c);
                up + down
            }
            Mode::Affine => {
                let c = b - a;
                (-w * a).exp() * ((1.0 + beta * a) * phi0(w, c) + beta * phi1(w, c))
            }
        }
    }

    /// Scale-free residual of the characteristic equation at this mode.
    fn residual(&self, params: &BoundaryParams) -> f64 {
        let (u, k, l) = (params.drift, params.adsorption, params.length);
        match *self {
            Mode::Trigonometric { s } => {
                let (sn, cs) = (s * l).sin_cos();
                (sn * (s * s - k * k + u * u) - 2.0 * k * s * cs).abs() / (s * s + k * k + u * u + 2.0 * k * s)
            }
            Mode::Hyperbolic { sigma } => {
                let t = (sigma * l).tanh();
                (t * (sigma * sigma + k * k - u * u) + 2.0 * sigma * k).abs()
                    / (sigma * sigma + k * k + u * u + 2.0 * k * sigma)
            }
            Mode::Affine => {
                let beta = k - u;
                let scale = beta.abs() + (k + u) * (1.0 + beta.abs() * l);
                if scale == 0.0 {
                    0.0
                } else {
                    (beta + (k + u) * (1.0 + beta * l)).abs() / scale
                }
            }
        }
    }
}

/// Above this `σL` hyperbolic modes are evaluated as `A e^{σz} + B e^{−σz}`.
const SPLIT_THRESHOLD: f64 = 1.0;

/// `z ↦ A e^{σz}` and `B` for a hyperbolic mode.
///
/// At the root `σ + κ − u = −4σκ / (expm1(2σL)(σ + κ + u))`, which keeps the
/// exponentially small `A` accurate where `σ + κ − u` cancels.
fn split(sigma: f64, p: &BoundaryParams) -> (impl Fn(f64) -> f64, f64) {
    let (u, k, l) = (p.drift, p.adsorption, p.length);
    let q = -(-2.0 * sigma * l).exp_m1();
    let scale = -2.0 * k / (q * (sigma + k + u));
    (move |z: f64| scale * (sigma * (z - 2.0 * l)).exp(), 0.5 * (sigma - k + u) / sigma)
}

/// `x − sin x`, accurate for small `x`.
fn x_minus_sin(x: f64) -> f64 {
    if x.abs() < 0.5 {
        let x2 = x * x;
        let mut term = x * x2 / 6.0;
        let mut sum = 0.0;
        for k in 1..12 {
            sum += term;
            term *= -x2 / ((2 * k + 2) as f64 * (2 * k + 3) as f64);
        }
        sum
    } else {
        x - x.sin()
    }
}

/// `sinh x − x`, accurate for small `x`.
fn sinh_minus_x(x: f64) -> f64 {
    if x.abs() < 0.5 {
        let x2 = x * x;
        let mut term = x * x2 / 6.0;
        let mut sum = 0.0;
        for k in 1..12 {
            sum += term;
            term *= x2 / ((2 * k + 2) as f64 * (2 * k + 3) as f64);
        }
        sum
    } else {
        x.sinh() - x
    }
}

/// `∫_0^c exp(−m x) dx`.
fn phi0(m: f64, c: f64) -> f64 {
    if m == 0.0 {
        c
    } else {
        -(-m * c).exp_m1() / m
    }
}

/// `∫_0^c x exp(−m x) dx`.
fn phi1(m: f64, c: f64) -> f64 {
    let y = m * c;
    if y.abs() < 0.5 {
        // Σ_k (−1)^k (k+1) y^k / (k+2)!
        let mut sum = 0.0;
        let mut power = 1.0;
        let mut factorial = 2.0;
        for k in 0..16 {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * (k + 1) as f64 * power / factorial;
            power *= y;
            factorial *= (k + 3) as f64;
        }
        c * c * sum
    } else {
        (-(-y).exp_m1() - y * (-y).exp()) / (m * m)
    }
}

/// Ground mode plus the first `count` higher modes of one axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    params: BoundaryParams,
    modes: Vec<Mode>,
}

/// Solve for the ground mode and `count` higher eigenvalues.
pub fn solve_eigenvalues(params: BoundaryParams, count: usize) -> Result<Spectrum, SpectralError> {
    solve_eigenvalues_with(params, count, AFFINE_TOLERANCE)
}

/// As [`solve_eigenvalues`], with an explicit relative tolerance for the affine branch.
pub fn solve_eigenvalues_with(
    params: BoundaryParams,
    count: usize,
    affine_tolerance: f64,
) -> Result<Spectrum, SpectralError> {
    let params = BoundaryParams::new(params.drift, params.adsorption, params.length)?;
    let (u, k, l) = (params.drift, params.adsorption, params.length);
    let step = std::f64::consts::PI / l;
    let tol = BISECTION_TOLERANCE * step;
    let f = |s: f64| (s * l).sin() * (s * s - k * k + u * u) - 2.0 * k * s * (s * l).cos();

    let mut modes = Vec::with_capacity(count + 1);
    let uc = params.critical_drift();
    let near_critical = if uc > 0.0 {
        ((u - uc) / uc).abs() < affine_tolerance
    } else {
        u < affine_tolerance / l
    };

    modes.push(if near_critical || (k == 0.0 && u == 0.0) {
        Mode::Affine
    } else if k == 0.0 {
        Mode::Hyperbolic { sigma: u }
    } else if u < uc {
        let s = bisect(&f, 0.0, step, tol, 0, |s| s < 1e-300)?;
        Mode::Trigonometric { s }
    } else {
        let h = |x: f64| (x * l).tanh() * (x * x + k * k - u * u) + 2.0 * x * k;
        let sigma = bisect(&h, 0.0, u, BISECTION_TOLERANCE * u, 0, |_| false)?;
        Mode::Hyperbolic { sigma }
    });

    for n in 1..=count {
        let s = if k == 0.0 {
            n as f64 * step
        } else {
            bisect(&f, n as f64 * step, (n + 1) as f64 * step, tol, n, |_| false)?
        };
        modes.push(Mode::Trigonometric { s });
    }
    Ok(Spectrum { params, modes })
}

/// Bisection on `[lo, hi]` for a continuous `f` that changes sign.
///
/// The value at `lo` may be an exact zero that is not a genuine root (e.g.
/// `s = 0`); in that case the sign just inside the interval is used.
fn bisect<F: Fn(f64) -> f64>(
    f: &F,
    lo: f64,
    hi: f64,
    tol: f64,
    index: usize,
    trivial: impl Fn(f64) -> bool,
) -> Result<f64, SpectralError> {
    let mut a = lo;
    let mut b = hi;
    let probe = if trivial(a) || f(a) == 0.0 { a + (b - a) * 1e-9 } else { a };
    let mut fa = f(probe);
    let fb = f(b);
    if !(fa.is_finite() && fb.is_finite()) || fa * fb > 0.0 || fa == 0.0 && fb == 0.0 {
        return Err(SpectralError::Bracketing { index, lo, hi });
    }
    if fb == 0.0 {
        return Ok(b);
    }
    for _ in 0..MAX_BISECTIONS {
        if b - a <= tol {
            break;
        }
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return Ok(m);
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

impl Spectrum {
    pub fn params(&self) -> &BoundaryParams {
        &self.params
    }

    /// Number of higher modes (the ground mode is index 0).
    pub fn terms(&self) -> usize {
        self.modes.len() - 1
    }

    pub fn ground(&self) -> Mode {
        self.modes[0]
    }

    pub fn mode(&self, n: usize) -> Result<Mode, SpectralError> {
        self.modes
            .get(n)
            .copied()
            .ok_or(SpectralError::IndexOutOfRange { index: n, available: self.modes.len() })
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    /// `s_n²` for mode `n`; negative for a hyperbolic ground mode.
    pub fn eigenvalue_squared(&self, n: usize) -> Result<f64, SpectralError> {
        Ok(self.mode(n)?.eigenvalue_squared())
    }

    fn check_position(&self, z: f64) -> Result<(), SpectralError> {
        if z.is_finite() && (0.0..=self.params.length).contains(&z) {
            Ok(())
        } else {
            Err(SpectralError::OutOfDomain { position: z, length: self.params.length })
        }
    }

    /// Eigenfunction `Z_n(z)`.
    pub fn eigenfunction(&self, n: usize, z: f64) -> Result<f64, SpectralError> {
        let mode = self.mode(n)?;
        self.check_position(z)?;
        Ok(mode.value(z, &self.params))
    }

    /// Derivative `Z_n'(z)`.
    pub fn eigenfunction_derivative(&self, n: usize, z: f64) -> Result<f64, SpectralError> {
        let mode = self.mode(n)?;
        self.check_position(z)?;
        Ok(mode.derivative(z, &self.params))
    }

    /// `‖Z_n‖² = ∫_0^L Z_n² dz`.
    pub fn mode_norm(&self, n: usize) -> Result<f64, SpectralError> {
        Ok(self.mode(n)?.norm(&self.params))
    }

    /// Scale-free residual of the characteristic equation for mode `n`.
    pub fn residual(&self, n: usize) -> Result<f64, SpectralError> {
        Ok(self.mode(n)?.residual(&self.params))
    }

    /// `∫_a^b exp(−w z) Z_n(z) dz` for `0 ≤ a ≤ b ≤ L`.
    pub fn weighted_integral(&self, n: usize, a: f64, b: f64, w: f64) -> Result<f64, SpectralError> {
        let mode = self.mode(n)?;
        self.check_position(a)?;
        self.check_position(b)?;
        Ok(mode.weighted_integral(a, b, w, &self.params))
    }
}

/// Modal expansion of a point source at `source` on one axis.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    spectrum: Spectrum,
    source: f64,
    norms: Vec<f64>,
    coefficients: Vec<f64>,
}

impl EigenSystem {
    pub fn new(params: BoundaryParams, count: usize, source: f64) -> Result<Self, SpectralError> {
        Self::from_spectrum(solve_eigenvalues(params, count)?, source)
    }

    pub fn from_spectrum(spectrum: Spectrum, source: f64) -> Result<Self, SpectralError> {
        spectrum.check_position(source)?;
        let params = spectrum.params;
        let norms: Vec<f64> = spectrum.modes.iter().map(|m| m.norm(&params)).collect();
        let coefficients = spectrum
            .modes
            .iter()
            .zip(&norms)
            .map(|(m, n)| m.value(source, &params) / n)
            .collect();
        Ok(Self { spectrum, source, norms, coefficients })
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn params(&self) -> &BoundaryParams {
        &self.spectrum.params
    }

    pub fn source(&self) -> f64 {
        self.source
    }

    pub fn terms(&self) -> usize {
        self.spectrum.terms()
    }

    /// Expansion coefficient `Z_n(source) / ‖Z_n‖²`.
    pub fn coefficient(&self, n: usize) -> Result<f64, SpectralError> {
        self.coefficients
            .get(n)
            .copied()
            .ok_or(SpectralError::IndexOutOfRange { index: n, available: self.coefficients.len() })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub(crate) fn mode_value(&self, n: usize, z: f64) -> f64 {
        self.spectrum.modes[n].value(z, &self.spectrum.params)
    }

    pub(crate) fn mode_weighted_integral(&self, n: usize, a: f64, b: f64, w: f64) -> f64 {
        self.spectrum.modes[n].weighted_integral(a, b, w, &self.spectrum.params)
    }
}

/// Expansion coefficients `a_n = Z_n(z0)/‖Z_n‖²` of a point source at `source`.
pub fn expansion_coefficients(spectrum: &Spectrum, source: f64) -> Result<Vec<f64>, SpectralError> {
    Ok(EigenSystem::from_spectrum(spectrum.clone(), source)?.coefficients)
}
