//! Independent reference solutions shared by the integration tests.

#![allow(dead_code)]

/// Finite-volume Crank–Nicolson solver for the vertical drift–diffusion problem
///
/// `∂p/∂t = v ∂p/∂z + D ∂²p/∂z²` on `[0, h]`, outward wall flux `a·p`,
/// unit mass released at `z0`. Four implicit-Euler half steps precede the
/// Crank–Nicolson steps to damp the rough initial data.
pub struct CrankNicolson {
    pub cells: usize,
    pub height: f64,
    pub diffusion: f64,
    pub drift: f64,
    pub adsorption: f64,
    pub dt: f64,
}

impl CrankNicolson {
    pub fn dz(&self) -> f64 {
        self.height / self.cells as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        let dz = self.dz();
        (0..self.cells).map(|i| (i as f64 + 0.5) * dz).collect()
    }

    /// Operator `A` of `dp/dt = A p` as (sub, diag, super) bands.
    fn operator(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.cells;
        let dz = self.dz();
        let (d, v, a) = (self.diffusion, self.drift, self.adsorption);
        let mut lo = vec![0.0; n];
        let mut di = vec![0.0; n];
        let mut up = vec![0.0; n];
        // interior face i+1/2: J = -D (p_{i+1} - p_i)/dz - v (p_i + p_{i+1})/2
        for i in 0..n - 1 {
            let jl = d / dz - 0.5 * v; // coefficient of p_i in J
            let jr = -d / dz - 0.5 * v; // coefficient of p_{i+1} in J
            // dp_i/dt -= J/dz, dp_{i+1}/dt += J/dz
            di[i] -= jl / dz;
            up[i] -= jr / dz;
            lo[i + 1] += jl / dz;
            di[i + 1] += jr / dz;
        }
        // bottom face: J = -a·p_face, p_face = p_0 / (1 + (a - v) dz / (2D))
        let bottom = a / (1.0 + (a - v) * dz / (2.0 * d));
        di[0] -= bottom / dz;
        // top face: J = a·p_face, p_face = p_{n-1} / (1 + (a + v) dz / (2D))
        let top = a / (1.0 + (a + v) * dz / (2.0 * d));
        di[n - 1] -= top / dz;
        (lo, di, up)
    }

    fn initial(&self, z0: f64) -> Vec<f64> {
        let dz = self.dz();
        let mut p = vec![0.0; self.cells];
        let x = (z0 / dz - 0.5).clamp(0.0, (self.cells - 1) as f64);
        let i = (x.floor() as usize).min(self.cells - 2);
        let f = x - i as f64;
        p[i] = (1.0 - f) / dz;
        p[i + 1] = f / dz;
        p
    }

    /// Cell densities at each of the (increasing) `times`.
    pub fn solve(&self, z0: f64, times: &[f64]) -> Vec<Vec<f64>> {
        let (lo, di, up) = self.operator();
        let mut p = self.initial(z0);
        let mut t = 0.0;
        let mut out = Vec::new();
        let half = 0.5 * self.dt;
        for _ in 0..4 {
            p = implicit_step(&lo, &di, &up, &p, half);
            t += half;
        }
        for &target in times {
            while t + 0.5 * self.dt < target {
                p = cn_step(&lo, &di, &up, &p, self.dt);
                t += self.dt;
            }
            assert!((t - target).abs() < 1e-9, "time grid misses {target}");
            out.push(p.clone());
        }
        out
    }
}

fn implicit_step(lo: &[f64], di: &[f64], up: &[f64], p: &[f64], dt: f64) -> Vec<f64> {
    let a: Vec<f64> = lo.iter().map(|x| -dt * x).collect();
    let b: Vec<f64> = di.iter().map(|x| 1.0 - dt * x).collect();
    let c: Vec<f64> = up.iter().map(|x| -dt * x).collect();
    thomas(&a, &b, &c, p)
}

fn cn_step(lo: &[f64], di: &[f64], up: &[f64], p: &[f64], dt: f64) -> Vec<f64> {
    let n = p.len();
    let h = 0.5 * dt;
    let rhs: Vec<f64> = (0..n)
        .map(|i| {
            let mut r = p[i] + h * di[i] * p[i];
            if i > 0 {
                r += h * lo[i] * p[i - 1];
            }
            if i + 1 < n {
                r += h * up[i] * p[i + 1];
            }
            r
        })
        .collect();
    let a: Vec<f64> = lo.iter().map(|x| -h * x).collect();
    let b: Vec<f64> = di.iter().map(|x| 1.0 - h * x).collect();
    let c: Vec<f64> = up.iter().map(|x| -h * x).collect();
    thomas(&a, &b, &c, &rhs)
}

/// Tridiagonal solve; `a[i]` multiplies `x[i-1]`, `c[i]` multiplies `x[i+1]`.
fn thomas(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Vec<f64> {
    let n = d.len();
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    cp[0] = c[0] / b[0];
    dp[0] = d[0] / b[0];
    for i in 1..n {
        let m = b[i] - a[i] * cp[i - 1];
        cp[i] = c[i] / m;
        dp[i] = (d[i] - a[i] * dp[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = dp[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = dp[i] - cp[i] * x[i + 1];
    }
    x
}
