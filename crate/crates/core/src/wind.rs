//! Spatially correlated Gaussian wind-error field on a regular grid with
//! first-order autoregressive time evolution, plus a nominal forecast wind.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Forecast wind. `from_deg` is the compass direction the wind blows from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NominalWind {
    pub points: Vec<NominalPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NominalPoint {
    pub t_s: f64,
    pub speed_mps: f64,
    pub from_deg: f64,
}

impl NominalPoint {
    fn components(&self) -> (f64, f64) {
        let from = self.from_deg.to_radians();
        (-self.speed_mps * from.sin(), -self.speed_mps * from.cos())
    }
}

impl NominalWind {
    pub fn calm() -> Self {
        NominalWind { points: Vec::new() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.windows(2).any(|w| !(w[1].t_s > w[0].t_s)) {
            return Err(Error::config("nominal wind times must be strictly increasing"));
        }
        Ok(())
    }

    /// East and north components at time `t_s`, interpolated linearly in
    /// components and held constant outside the timeline.
    pub fn at(&self, t_s: f64) -> (f64, f64) {
        match self.points.as_slice() {
            [] => (0.0, 0.0),
            [only] => only.components(),
            pts => {
                if t_s <= pts[0].t_s {
                    return pts[0].components();
                }
                let last = pts[pts.len() - 1];
                if t_s >= last.t_s {
                    return last.components();
                }
                let i = pts.partition_point(|p| p.t_s <= t_s) - 1;
                let (a, b) = (pts[i], pts[i + 1]);
                let f = (t_s - a.t_s) / (b.t_s - a.t_s);
                let (ax, ay) = a.components();
                let (bx, by) = b.components();
                (ax + f * (bx - ax), ay + f * (by - ay))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindConfig {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub extent_min_m: [f64; 3],
    pub extent_max_m: [f64; 3],
    /// `(altitude m, sigma m/s)` pairs, interpolated linearly.
    pub sigma_profile: Vec<[f64; 2]>,
    pub lambda_per_s: f64,
    pub beta_per_m: f64,
    pub gamma_per_m: f64,
    pub g_t_s: f64,
    pub nominal: Vec<NominalPoint>,
}

impl Default for WindConfig {
    fn default() -> Self {
        WindConfig {
            nx: 2,
            ny: 2,
            nz: 2,
            extent_min_m: [-30_000.0, -30_000.0, 0.0],
            extent_max_m: [30_000.0, 30_000.0, 12_000.0],
            sigma_profile: vec![[0.0, 1.5], [12_000.0, 4.0]],
            lambda_per_s: 6e-6,
            beta_per_m: 1.6e-6,
            gamma_per_m: 1.5e-5,
            g_t_s: 3600.0,
            nominal: Vec::new(),
        }
    }
}

impl WindConfig {
    pub fn calm() -> Self {
        WindConfig {
            sigma_profile: vec![[0.0, 0.0]],
            ..Default::default()
        }
    }

    pub fn nominal_wind(&self) -> NominalWind {
        NominalWind {
            points: self.nominal.clone(),
        }
    }

    pub fn sigma(&self, z_m: f64) -> f64 {
        interp_profile(&self.sigma_profile, z_m)
    }
}

fn interp_profile(profile: &[[f64; 2]], z: f64) -> f64 {
    match profile {
        [] => 0.0,
        [only] => only[1],
        pts => {
            if z <= pts[0][0] {
                return pts[0][1];
            }
            if z >= pts[pts.len() - 1][0] {
                return pts[pts.len() - 1][1];
            }
            let i = pts.partition_point(|p| p[0] <= z) - 1;
            let f = (z - pts[i][0]) / (pts[i + 1][0] - pts[i][0]);
            pts[i][1] + f * (pts[i + 1][1] - pts[i][1])
        }
    }
}

/// The current error vectors at every grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct WindState {
    pub w_x: Vec<f64>,
    pub w_y: Vec<f64>,
}

/// Grid geometry, correlation model and its factors. Immutable after
/// construction and shared by all workers.
#[derive(Debug, Clone)]
pub struct WindGrid {
    pub config: WindConfig,
    pub nominal: NominalWind,
    pub dt_s: f64,
    /// AR coefficient `exp(-dt / G_t)`.
    pub a: f64,
    nodes: Vec<[f64; 3]>,
    r_hat: DMatrix<f64>,
    chol_r: DMatrix<f64>,
    chol_q: DMatrix<f64>,
    // Packed lower triangles, row-major, for the hot loop.
    packed_r: Vec<f64>,
    packed_q: Vec<f64>,
    zero: bool,
}

fn pack_lower(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in 0..=i {
            out.push(m[(i, j)]);
        }
    }
    out
}

#[inline]
fn lower_matvec(packed: &[f64], v: &[f64], out: &mut [f64], accumulate_scale: Option<f64>) {
    let mut k = 0;
    for i in 0..out.len() {
        let mut s = 0.0;
        for vj in &v[..=i] {
            s += packed[k] * vj;
            k += 1;
        }
        out[i] = match accumulate_scale {
            Some(a) => a * out[i] + s,
            None => s,
        };
    }
}

impl WindGrid {
    pub fn new(config: WindConfig, dt_s: f64) -> Result<Self> {
        if config.nx == 0 || config.ny == 0 || config.nz == 0 {
            return Err(Error::config("wind grid dimensions must be positive"));
        }
        if (0..3).any(|d| !(config.extent_max_m[d] >= config.extent_min_m[d])) {
            return Err(Error::config("wind grid extents must be ordered"));
        }
        if !(config.g_t_s > 0.0) || !(dt_s > 0.0) {
            return Err(Error::config("wind G_t and time step must be positive"));
        }
        if config.sigma_profile.iter().any(|p| p[1] < 0.0)
            || config.sigma_profile.windows(2).any(|w| !(w[1][0] > w[0][0]))
        {
            return Err(Error::config(
                "sigma profile needs increasing altitudes and non-negative sigma",
            ));
        }
        let nominal = config.nominal_wind();
        nominal.validate()?;

        let axis = |d: usize, n: usize, i: usize| {
            if n == 1 {
                config.extent_min_m[d]
            } else {
                config.extent_min_m[d]
                    + (config.extent_max_m[d] - config.extent_min_m[d]) * i as f64 / (n - 1) as f64
            }
        };
        let mut nodes = Vec::with_capacity(config.nx * config.ny * config.nz);
        for iz in 0..config.nz {
            for iy in 0..config.ny {
                for ix in 0..config.nx {
                    nodes.push([axis(0, config.nx, ix), axis(1, config.ny, iy), axis(2, config.nz, iz)]);
                }
            }
        }
        let n = nodes.len();
        let a = (-dt_s / config.g_t_s).exp();
        let mut grid = WindGrid {
            config,
            nominal,
            dt_s,
            a,
            nodes,
            r_hat: DMatrix::zeros(n, n),
            chol_r: DMatrix::zeros(n, n),
            chol_q: DMatrix::zeros(n, n),
            packed_r: Vec::new(),
            packed_q: Vec::new(),
            zero: true,
        };
        let r_hat = DMatrix::from_fn(n, n, |i, j| grid.covariance(0.0, grid.nodes[i], 0.0, grid.nodes[j]));
        let max_diag = (0..n).map(|i| r_hat[(i, i)]).fold(0.0, f64::max);
        grid.r_hat = r_hat.clone();
        if max_diag > 0.0 {
            let chol = match r_hat.clone().cholesky() {
                Some(c) => c,
                None => {
                    let eps = 1e-8 * max_diag;
                    let jittered = &r_hat + DMatrix::identity(n, n) * eps;
                    jittered.cholesky().ok_or_else(|| {
                        Error::config("wind covariance is not positive definite after jitter")
                    })?
                }
            };
            grid.chol_r = chol.l();
            grid.chol_q = &grid.chol_r * (1.0 - a * a).sqrt();
            grid.zero = false;
        }
        grid.packed_r = pack_lower(&grid.chol_r);
        grid.packed_q = pack_lower(&grid.chol_q);
        Ok(grid)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[[f64; 3]] {
        &self.nodes
    }

    pub fn r_hat(&self) -> &DMatrix<f64> {
        &self.r_hat
    }

    pub fn chol_r(&self) -> &DMatrix<f64> {
        &self.chol_r
    }

    pub fn chol_q(&self) -> &DMatrix<f64> {
        &self.chol_q
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    /// Space-time covariance between `(t, p)` and `(t2, p2)`.
    pub fn covariance(&self, t: f64, p: [f64; 3], t2: f64, p2: [f64; 3]) -> f64 {
        let c = &self.config;
        let dxy = (p[0] - p2[0]).hypot(p[1] - p2[1]);
        c.sigma(p[2])
            * c.sigma(p2[2])
            * (-c.lambda_per_s * (t - t2).abs()).exp()
            * (-c.beta_per_m * dxy).exp()
            * (-c.gamma_per_m * (p[2] - p2[2]).abs()).exp()
    }

    pub fn zero_state(&self) -> WindState {
        WindState {
            w_x: vec![0.0; self.nodes.len()],
            w_y: vec![0.0; self.nodes.len()],
        }
    }

    /// Draws from the stationary distribution `N(0, R)` for each component.
    pub fn init_state<R: Rng + ?Sized>(&self, rng: &mut R) -> WindState {
        let mut st = self.zero_state();
        if self.zero {
            return st;
        }
        let n = self.nodes.len();
        let mut v = vec![0.0; n];
        for out in [&mut st.w_x, &mut st.w_y] {
            for vi in v.iter_mut() {
                *vi = rng.sample(StandardNormal);
            }
            lower_matvec(&self.packed_r, &v, out, None);
        }
        st
    }

    /// `W <- a W + Q v` with the supplied standard-normal vectors.
    pub fn step_with(&self, st: &mut WindState, v_x: &[f64], v_y: &[f64]) {
        if self.zero {
            for w in st.w_x.iter_mut().chain(st.w_y.iter_mut()) {
                *w *= self.a;
            }
            return;
        }
        lower_matvec(&self.packed_q, v_x, &mut st.w_x, Some(self.a));
        lower_matvec(&self.packed_q, v_y, &mut st.w_y, Some(self.a));
    }

    /// AR(1) update with fresh standard normals from `rng`.
    pub fn step_state<R: Rng + ?Sized>(&self, st: &mut WindState, rng: &mut R) {
        let mut noise = Vec::new();
        self.step_state_buffered(st, rng, &mut noise);
    }

    /// As [`WindGrid::step_state`], reusing `noise` as scratch space.
    #[inline]
    pub fn step_state_buffered<R: Rng + ?Sized>(&self, st: &mut WindState, rng: &mut R, noise: &mut Vec<f64>) {
        if self.zero {
            return;
        }
        let n = self.nodes.len();
        noise.resize(2 * n, 0.0);
        for v in noise.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let (vx, vy) = noise.split_at(n);
        self.step_with(st, vx, vy);
    }

    /// Trilinear interpolation of the error field; points outside the
    /// extents are clamped to the boundary.
    pub fn sample_error(&self, st: &WindState, x: f64, y: f64, z: f64) -> (f64, f64) {
        if self.zero && st.w_x.iter().chain(&st.w_y).all(|w| *w == 0.0) {
            return (0.0, 0.0);
        }
        let c = &self.config;
        let dims = [c.nx, c.ny, c.nz];
        let q = [x, y, z];
        let mut idx = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for d in 0..3 {
            if dims[d] == 1 {
                continue;
            }
            let span = c.extent_max_m[d] - c.extent_min_m[d];
            let f = if span > 0.0 {
                ((q[d] - c.extent_min_m[d]) / span).clamp(0.0, 1.0) * (dims[d] - 1) as f64
            } else {
                0.0
            };
            let i = (f.floor() as usize).min(dims[d] - 2);
            idx[d] = i;
            frac[d] = f - i as f64;
        }
        let (mut sx, mut sy) = (0.0, 0.0);
        for corner in 0..8usize {
            let mut w = 1.0;
            let mut off = [0usize; 3];
            for d in 0..3 {
                let bit = (corner >> d) & 1;
                if dims[d] == 1 {
                    if bit == 1 {
                        w = 0.0;
                    }
                    continue;
                }
                off[d] = idx[d] + bit;
                w *= if bit == 1 { frac[d] } else { 1.0 - frac[d] };
            }
            if w == 0.0 {
                continue;
            }
            let k = (off[2] * c.ny + off[1]) * c.nx + off[0];
            sx += w * st.w_x[k];
            sy += w * st.w_y[k];
        }
        (sx, sy)
    }

    /// Error field plus nominal wind.
    pub fn sample_at(&self, st: &WindState, x: f64, y: f64, z: f64, t_s: f64) -> (f64, f64) {
        let (ex, ey) = self.sample_error(st, x, y, z);
        let (nx, ny) = self.nominal.at(t_s);
        (ex + nx, ey + ny)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    fn grid() -> WindGrid {
        WindGrid::new(WindConfig::default(), 10.0).unwrap()
    }

    #[test]
    fn covariance_at_same_point_is_variance() {
        let g = grid();
        let p = [100.0, 200.0, 6000.0];
        let s = g.config.sigma(6000.0);
        assert!((s - 2.75).abs() < 1e-12);
        assert!((g.covariance(5.0, p, 5.0, p) - s * s).abs() < 1e-12);
        let far = g.covariance(0.0, p, 0.0, [1e9, 200.0, 6000.0]);
        let near = g.covariance(0.0, p, 0.0, [1e5, 200.0, 6000.0]);
        assert!(far < near && far < 1e-12);
    }

    #[test]
    fn factorisation_identity() {
        let g = grid();
        assert_eq!(g.node_count(), 8);
        let r = g.r_hat();
        let l = g.chol_r();
        let q = g.chol_q();
        let max = r.amax();
        assert!((l * l.transpose() - r).amax() <= 1e-8 * max);
        let recon = q * q.transpose() + r * (g.a * g.a);
        assert!((recon - r).amax() <= 1e-8 * max);
    }

    #[test]
    fn ar_coefficient_at_g_t() {
        let cfg = WindConfig::default();
        let g = WindGrid::new(cfg.clone(), cfg.g_t_s).unwrap();
        assert!((g.a - (-1.0f64).exp()).abs() < 1e-15);
        assert!((g.a - 0.367_88).abs() < 1e-5);
    }

    #[test]
    fn zero_noise_contracts_by_a() {
        let g = grid();
        let mut st = g.init_state(&mut stream(1, 0, 0, Purpose::RealizedWind, 0));
        let before = st.clone();
        let zeros = vec![0.0; g.node_count()];
        g.step_with(&mut st, &zeros, &zeros);
        for (b, a) in before.w_x.iter().zip(&st.w_x) {
            assert!((a - g.a * b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_sigma_gives_zero_field() {
        let g = WindGrid::new(WindConfig::calm(), 10.0).unwrap();
        let mut rng = stream(3, 0, 0, Purpose::RealizedWind, 0);
        let mut st = g.init_state(&mut rng);
        for _ in 0..10 {
            g.step_state(&mut st, &mut rng);
        }
        assert_eq!(g.sample_at(&st, 1.0, 2.0, 3.0, 0.0), (0.0, 0.0));
    }

    #[test]
    fn interpolation_identities() {
        let g = grid();
        let mut st = g.zero_state();
        for (k, n) in g.nodes().iter().enumerate() {
            st.w_x[k] = 0.001 * n[0] + 0.5;
            st.w_y[k] = k as f64;
        }
        for (k, n) in g.nodes().iter().enumerate() {
            let (sx, sy) = g.sample_error(&st, n[0], n[1], n[2]);
            assert!((sx - st.w_x[k]).abs() < 1e-12);
            assert!((sy - k as f64).abs() < 1e-12);
        }
        let (sx, _) = g.sample_error(&st, 1234.0, -50.0, 7000.0);
        assert!((sx - (0.001 * 1234.0 + 0.5)).abs() < 1e-9);
        // Clamped outside.
        let (sx, _) = g.sample_error(&st, 90_000.0, 0.0, 0.0);
        assert!((sx - (0.001 * 30_000.0 + 0.5)).abs() < 1e-9);
    }

    #[test]
    fn nominal_timeline() {
        let nom = NominalWind {
            points: vec![
                NominalPoint { t_s: 0.0, speed_mps: 10.0, from_deg: 270.0 },
                NominalPoint { t_s: 100.0, speed_mps: 20.0, from_deg: 270.0 },
            ],
        };
        // Westerly blows toward the east.
        let (x, y) = nom.at(50.0);
        assert!((x - 15.0).abs() < 1e-12 && y.abs() < 1e-12);
        assert!((nom.at(500.0).0 - 20.0).abs() < 1e-12);
        let bad = NominalWind {
            points: vec![nom.points[1], nom.points[0]],
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn evolution_is_reproducible() {
        let g = grid();
        let run = || {
            let mut rng = stream(11, 0, 0, Purpose::RealizedWind, 0);
            let mut st = g.init_state(&mut rng);
            for _ in 0..50 {
                g.step_state(&mut st, &mut rng);
            }
            st
        };
        assert_eq!(run(), run());
    }
}
