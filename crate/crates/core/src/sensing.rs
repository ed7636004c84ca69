//! Sampling schemes and the partial Fourier sensing operator.
//!
//! A measurement `l` probes the object with incident direction
//! `d = (cos theta, sin theta)` at frequency `omega` and records the far field
//! in direction `r = (cos theta~, sin theta~)`. Pixel `p` sits at `l * p` and
//! the matrix entry is `n^{-1/2} exp(i omega (d - r) . l p)`. The angles are
//! chosen so that this phase equals `pi (p1 xi + p2 zeta)` for a uniformly
//! drawn frequency `(xi, zeta)` in `[-1, 1]^2`.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, SQRT_2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fft::{grid_frequency, grid_index, GridTransform};
use crate::linalg::{hermitian_eigenvalues, CMatrix};
use crate::math::{abs, asin, atan2, cis, cos, norm_sqr, sin, sqrt};
use crate::C64;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Direction of the recorded field relative to the probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Multi-frequency, band-limited probes recorded in back-scatter.
    Backward,
    /// Single frequency `gamma * Omega` probes recorded near forward.
    Forward,
}

/// How the frequencies `(xi, zeta)` are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// i.i.d. uniform on `[-1, 1]^2`.
    #[default]
    Continuous,
    /// Without replacement from the half-shifted `2q x 2q` grid.
    OnGrid,
    /// Every point of the half-shifted `q x q` grid (`n = q^2`, orthonormal).
    Complete,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    pub n: usize,
    /// Bandwidth `Omega` in inverse length units.
    pub omega: f64,
    /// Grid spacing `l`.
    pub spacing: f64,
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(default)]
    pub mode: SamplingMode,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

impl SchemeConfig {
    /// Configuration with `Omega = pi / (sqrt 2 l)` and `gamma = 1`.
    pub fn new(scheme: Scheme, mode: SamplingMode, n: usize, spacing: f64, seed: u64) -> Self {
        Self { scheme, n, omega: bandwidth_for(spacing), spacing, gamma: 1.0, mode, seed }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    /// Checks the parameter ranges (not the bandwidth relation).
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfiguration("n must be positive".to_string()));
        }
        if !(self.spacing.is_finite() && self.spacing > 0.0) {
            return Err(Error::InvalidConfiguration("spacing must be positive".to_string()));
        }
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(Error::InvalidConfiguration("bandwidth must be positive".to_string()));
        }
        if !(self.gamma.is_finite() && self.gamma >= 1.0) {
            return Err(Error::InvalidConfiguration("gamma must be at least 1".to_string()));
        }
        Ok(())
    }

    /// Checks `Omega * l = pi / sqrt 2` to `1e-12` relative.
    pub fn check_bandwidth(&self) -> Result<()> {
        let target = PI / SQRT_2;
        let got = self.omega * self.spacing;
        if (got - target).abs() > 1e-12 * target {
            return Err(Error::InvalidConfiguration(alloc::format!(
                "bandwidth times spacing is {got}, expected pi/sqrt(2)"
            )));
        }
        Ok(())
    }
}

/// `Omega = pi / (sqrt 2 l)`.
pub fn bandwidth_for(spacing: f64) -> f64 {
    PI / (SQRT_2 * spacing)
}

/// One probe/record pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub xi: f64,
    pub zeta: f64,
    pub rho: f64,
    pub phi: f64,
    pub theta: f64,
    pub theta_tilde: f64,
    pub omega: f64,
}

impl Measurement {
    /// Angles and frequency for the frequency `(xi, zeta)` under `cfg`.
    pub fn from_frequency(xi: f64, zeta: f64, cfg: &SchemeConfig) -> Result<Self> {
        let rho = sqrt(xi * xi + zeta * zeta);
        if rho == 0.0 {
            return Err(invalid("zero frequency has no scattering geometry"));
        }
        if xi.abs() > 1.0 || zeta.abs() > 1.0 {
            return Err(invalid("frequency outside [-1, 1]^2"));
        }
        let phi = atan2(zeta, xi);
        let (theta, theta_tilde, omega) = match cfg.scheme {
            Scheme::Backward => (phi, phi - PI, cfg.omega * rho / SQRT_2),
            Scheme::Forward => {
                let a = asin(rho / (cfg.gamma * SQRT_2));
                (phi - PI / 2.0 + a, phi - PI / 2.0 - a, cfg.gamma * cfg.omega)
            }
        };
        Ok(Self { xi, zeta, rho, phi, theta, theta_tilde, omega })
    }

    /// Builds a record from raw angles, checking the back-scatter band limit
    /// `|sin((theta - theta~)/2)| >= rho / sqrt 2` for the backward scheme.
    pub fn from_angles(theta: f64, theta_tilde: f64, omega: f64, cfg: &SchemeConfig) -> Result<Self> {
        let half = (theta - theta_tilde) / 2.0;
        let s = sin(half);
        // omega (d - r) l = pi (xi, zeta)
        let k1 = omega * cfg.spacing * (cos(theta) - cos(theta_tilde)) / PI;
        let k2 = omega * cfg.spacing * (sin(theta) - sin(theta_tilde)) / PI;
        let rho = sqrt(k1 * k1 + k2 * k2);
        if cfg.scheme == Scheme::Backward {
            if omega > cfg.omega * (1.0 + 1e-12) {
                return Err(invalid("frequency exceeds the band limit"));
            }
            if s.abs() < rho / SQRT_2 * (1.0 - 1e-12) || rho == 0.0 {
                return Err(invalid("angles violate the back-scatter band-limit constraint"));
            }
        }
        if rho == 0.0 {
            return Err(invalid("zero frequency has no scattering geometry"));
        }
        Ok(Self { xi: k1, zeta: k2, rho, phi: atan2(k2, k1), theta, theta_tilde, omega })
    }

    /// `exp(i omega (d - r) . l p)` without the `n^{-1/2}` factor.
    pub fn physical_phasor(&self, p1: f64, p2: f64, spacing: f64) -> C64 {
        let dx = cos(self.theta) - cos(self.theta_tilde);
        let dy = sin(self.theta) - sin(self.theta_tilde);
        cis(self.omega * spacing * (p1 * dx + p2 * dy))
    }

    /// `exp(i pi (p1 xi + p2 zeta))`.
    pub fn fourier_phasor(&self, p1: f64, p2: f64) -> C64 {
        cis(PI * (p1 * self.xi + p2 * self.zeta))
    }
}

/// Ordered measurement records. Serializes as a bare JSON array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SamplingPlan {
    pub measurements: Vec<Measurement>,
}

/// Largest deviations from the plan invariants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanCheck {
    pub polar: f64,
    pub angle_sum: f64,
    pub scheme: f64,
    pub max_rho: f64,
    pub ok: bool,
}

fn wrap_angle(x: f64) -> f64 {
    let t = num_traits::Euclid::rem_euclid(&x, &(2.0 * PI));
    t.min(2.0 * PI - t)
}

impl SamplingPlan {
    pub fn new(measurements: Vec<Measurement>) -> Self {
        Self { measurements }
    }

    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }

    /// Draws a plan for a `q x q` grid.
    pub fn draw(cfg: &SchemeConfig, q: usize) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let n = cfg.n;
        let freqs: Vec<(f64, f64)> = match cfg.mode {
            SamplingMode::Continuous => (0..n)
                .map(|_| loop {
                    let xi: f64 = rng.random_range(-1.0..=1.0);
                    let zeta: f64 = rng.random_range(-1.0..=1.0);
                    if xi != 0.0 || zeta != 0.0 {
                        break (xi, zeta);
                    }
                })
                .collect(),
            SamplingMode::OnGrid => {
                let g = 2 * q;
                if n > g * g {
                    return Err(invalid(alloc::format!("on-grid plan needs n <= {}, got {n}", g * g)));
                }
                rand::seq::index::sample(&mut rng, g * g, n)
                    .into_iter()
                    .map(|k| (grid_frequency(k / g, g), grid_frequency(k % g, g)))
                    .collect()
            }
            SamplingMode::Complete => {
                if n != q * q {
                    return Err(invalid(alloc::format!("complete plan needs n = {}, got {n}", q * q)));
                }
                (0..n).map(|k| (grid_frequency(k / q, q), grid_frequency(k % q, q))).collect()
            }
        };
        let measurements = freqs
            .into_iter()
            .map(|(xi, zeta)| Measurement::from_frequency(xi, zeta, cfg))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { measurements })
    }

    /// Measures how far each record is from the scheme geometry.
    pub fn check_invariants(&self, cfg: &SchemeConfig) -> PlanCheck {
        let mut polar: f64 = 0.0;
        let mut angle_sum: f64 = 0.0;
        let mut scheme: f64 = 0.0;
        let mut max_rho: f64 = 0.0;
        for m in &self.measurements {
            let rho = sqrt(m.xi * m.xi + m.zeta * m.zeta);
            polar = polar
                .max((rho - m.rho).abs())
                .max((m.rho * cos(m.phi) - m.xi).abs())
                .max((m.rho * sin(m.phi) - m.zeta).abs());
            angle_sum = angle_sum.max(wrap_angle(m.theta + m.theta_tilde - 2.0 * m.phi - PI));
            max_rho = max_rho.max(m.rho);
            let s = sin((m.theta - m.theta_tilde) / 2.0).abs();
            let dev = match cfg.scheme {
                Scheme::Backward => {
                    let band = (m.omega - cfg.omega).max(0.0) / cfg.omega;
                    let shape = (m.theta_tilde - (m.theta - PI)).abs();
                    let freq = (m.omega - cfg.omega * m.rho / SQRT_2).abs() / cfg.omega;
                    let constraint = (m.rho / SQRT_2 - s).max(0.0);
                    band.max(shape).max(freq).max(constraint)
                }
                Scheme::Forward => {
                    let freq = (m.omega - cfg.gamma * cfg.omega).abs() / cfg.omega;
                    let half = (s - m.rho / (cfg.gamma * SQRT_2)).abs();
                    freq.max(half)
                }
            };
            scheme = scheme.max(dev);
        }
        let ok = polar <= 1e-12 && angle_sum <= 1e-12 && scheme <= 1e-12 && max_rho <= SQRT_2 + 1e-15;
        PlanCheck { polar, angle_sum, scheme, max_rho, ok }
    }
}

/// A linear map `C^cols -> C^rows`.
pub trait LinearMap {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    /// `out = A x`. Lengths are the caller's responsibility.
    fn apply_into(&self, x: &[C64], out: &mut [C64]);
    /// `out = A^* y`.
    fn adjoint_into(&self, y: &[C64], out: &mut [C64]);

    fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        if x.len() != self.cols() {
            return Err(Error::DimensionMismatch { expected: self.cols(), found: x.len() });
        }
        let mut out = vec![ZERO; self.rows()];
        self.apply_into(x, &mut out);
        Ok(out)
    }

    fn adjoint_apply(&self, y: &[C64]) -> Result<Vec<C64>> {
        if y.len() != self.rows() {
            return Err(Error::DimensionMismatch { expected: self.rows(), found: y.len() });
        }
        let mut out = vec![ZERO; self.cols()];
        self.adjoint_into(y, &mut out);
        Ok(out)
    }

    fn column(&self, j: usize) -> Vec<C64> {
        let mut e = vec![ZERO; self.cols()];
        e[j] = C64::new(1.0, 0.0);
        let mut out = vec![ZERO; self.rows()];
        self.apply_into(&e, &mut out);
        out
    }
}

impl LinearMap for CMatrix {
    fn rows(&self) -> usize {
        CMatrix::rows(self)
    }

    fn cols(&self) -> usize {
        CMatrix::cols(self)
    }

    fn apply_into(&self, x: &[C64], out: &mut [C64]) {
        out.copy_from_slice(&self.mul_vec(x));
    }

    fn adjoint_into(&self, y: &[C64], out: &mut [C64]) {
        out.copy_from_slice(&self.adjoint_mul_vec(y));
    }

    fn column(&self, j: usize) -> Vec<C64> {
        CMatrix::column(self, j)
    }
}

/// How a [`SensingOperator`] evaluates products.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Explicit,
    Separable,
    Grid,
}

#[derive(Debug, Clone)]
enum Repr {
    Explicit(CMatrix),
    /// Per-measurement phasors `a[l q + p] = exp(i pi p xi_l)` and the same for zeta.
    Separable { a: Vec<C64>, b: Vec<C64> },
    Grid { transform: GridTransform, index: Vec<usize> },
}

/// `Phi` with entries `n^{-1/2} exp(i pi (p1 xi_l + p2 zeta_l))`, `j = p1 q + p2`.
#[derive(Debug, Clone)]
pub struct SensingOperator {
    q: usize,
    spacing: f64,
    plan: SamplingPlan,
    scale: f64,
    repr: Repr,
}

impl SensingOperator {
    /// Builds the operator, using the fast grid path when every frequency
    /// lies on a half-shifted grid of side `2q` or `q`.
    pub fn new(plan: &SamplingPlan, q: usize, cfg: &SchemeConfig) -> Result<Self> {
        cfg.validate()?;
        cfg.check_bandwidth()?;
        if plan.is_empty() {
            return Err(invalid("empty sampling plan"));
        }
        if q == 0 {
            return Err(invalid("grid side must be positive"));
        }
        let mut op = Self {
            q,
            spacing: cfg.spacing,
            plan: plan.clone(),
            scale: 1.0 / sqrt(plan.len() as f64),
            repr: Repr::Separable { a: Vec::new(), b: Vec::new() },
        };
        op.repr = op.grid_repr().unwrap_or_else(|| op.separable_repr());
        Ok(op)
    }

    /// Rebuilds with the requested evaluation strategy.
    pub fn with_representation(mut self, rep: Representation) -> Result<Self> {
        self.repr = match rep {
            Representation::Explicit => Repr::Explicit(self.dense()),
            Representation::Separable => self.separable_repr(),
            Representation::Grid => self.grid_repr().ok_or_else(|| invalid("plan is not on a frequency grid"))?,
        };
        Ok(self)
    }

    fn separable_repr(&self) -> Repr {
        let q = self.q;
        let mut a = Vec::with_capacity(self.plan.len() * q);
        let mut b = Vec::with_capacity(self.plan.len() * q);
        for m in &self.plan.measurements {
            a.extend((0..q).map(|p| cis(PI * p as f64 * m.xi)));
            b.extend((0..q).map(|p| cis(PI * p as f64 * m.zeta)));
        }
        Repr::Separable { a, b }
    }

    fn grid_repr(&self) -> Option<Repr> {
        for n_grid in [2 * self.q, self.q] {
            let index: Option<Vec<usize>> = self
                .plan
                .measurements
                .iter()
                .map(|m| Some(grid_index(m.xi, n_grid)? * n_grid + grid_index(m.zeta, n_grid)?))
                .collect();
            if let Some(index) = index {
                return Some(Repr::Grid { transform: GridTransform::new(self.q, n_grid), index });
            }
        }
        None
    }

    pub fn representation(&self) -> Representation {
        match self.repr {
            Repr::Explicit(_) => Representation::Explicit,
            Repr::Separable { .. } => Representation::Separable,
            Repr::Grid { .. } => Representation::Grid,
        }
    }

    pub fn side(&self) -> usize {
        self.q
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn plan(&self) -> &SamplingPlan {
        &self.plan
    }

    /// Entry from the closed Fourier form.
    pub fn entry(&self, l: usize, j: usize) -> C64 {
        let (p1, p2) = ((j / self.q) as f64, (j % self.q) as f64);
        self.plan.measurements[l].fourier_phasor(p1, p2) * self.scale
    }

    /// Entry from the scattering geometry.
    pub fn physical_entry(&self, l: usize, j: usize) -> C64 {
        let (p1, p2) = ((j / self.q) as f64, (j % self.q) as f64);
        self.plan.measurements[l].physical_phasor(p1, p2, self.spacing) * self.scale
    }

    /// Dense `n x m` matrix from the closed form.
    pub fn dense(&self) -> CMatrix {
        let (n, m) = (self.plan.len(), self.q * self.q);
        let mut data = Vec::with_capacity(n * m);
        for l in 0..n {
            data.extend((0..m).map(|j| self.entry(l, j)));
        }
        CMatrix::from_row_major(n, m, data)
    }
}

impl LinearMap for SensingOperator {
    fn rows(&self) -> usize {
        self.plan.len()
    }

    fn cols(&self) -> usize {
        self.q * self.q
    }

    fn apply_into(&self, x: &[C64], out: &mut [C64]) {
        let q = self.q;
        match &self.repr {
            Repr::Explicit(a) => out.copy_from_slice(&a.mul_vec(x)),
            Repr::Separable { a, b } => {
                for (l, o) in out.iter_mut().enumerate() {
                    let al = &a[l * q..(l + 1) * q];
                    let bl = &b[l * q..(l + 1) * q];
                    let mut acc = ZERO;
                    for p1 in 0..q {
                        let inner: C64 = x[p1 * q..(p1 + 1) * q].iter().zip(bl).map(|(v, w)| v * w).sum();
                        acc += al[p1] * inner;
                    }
                    *o = acc * self.scale;
                }
            }
            Repr::Grid { transform, index } => {
                let g = transform.n_grid();
                let mut buf = vec![ZERO; g * g];
                transform.forward(x, &mut buf);
                for (o, &k) in out.iter_mut().zip(index) {
                    *o = buf[k] * self.scale;
                }
            }
        }
    }

    fn adjoint_into(&self, y: &[C64], out: &mut [C64]) {
        let q = self.q;
        match &self.repr {
            Repr::Explicit(a) => out.copy_from_slice(&a.adjoint_mul_vec(y)),
            Repr::Separable { a, b } => {
                out.fill(ZERO);
                for (l, yl) in y.iter().enumerate() {
                    let al = &a[l * q..(l + 1) * q];
                    let bl = &b[l * q..(l + 1) * q];
                    for p1 in 0..q {
                        let c = al[p1].conj() * yl * self.scale;
                        for (o, w) in out[p1 * q..(p1 + 1) * q].iter_mut().zip(bl) {
                            *o += c * w.conj();
                        }
                    }
                }
            }
            Repr::Grid { transform, index } => {
                let g = transform.n_grid();
                let mut buf = vec![ZERO; g * g];
                for (yl, &k) in y.iter().zip(index) {
                    buf[k] += yl * self.scale;
                }
                transform.adjoint(&buf, out);
            }
        }
    }

    fn column(&self, j: usize) -> Vec<C64> {
        (0..self.plan.len()).map(|l| self.entry(l, j)).collect()
    }
}

/// Born amplitude of point scatterers `A = (omega^2 / 4 pi) sum_j v_j exp(i omega r_j . (d - r))`.
pub fn scattering_amplitude_point(weights: &[C64], positions: &[(f64, f64)], m: &Measurement) -> C64 {
    let dx = cos(m.theta) - cos(m.theta_tilde);
    let dy = sin(m.theta) - sin(m.theta_tilde);
    let sum: C64 = weights
        .iter()
        .zip(positions)
        .map(|(v, (x1, x2))| v * cis(m.omega * (x1 * dx + x2 * dy)))
        .sum();
    sum * (m.omega * m.omega / (4.0 * PI))
}

/// Normalized datum `4 pi / (omega^2 sqrt n) * A`.
pub fn amplitude_to_datum(amplitude: C64, m: &Measurement, n: usize) -> C64 {
    amplitude * (4.0 * PI / (m.omega * m.omega * sqrt(n as f64)))
}

/// Largest `m` for which coherence is evaluated.
pub const COHERENCE_BUDGET: usize = 4096;

/// Mutual coherence of the sensing operator. The Gram entry only depends
/// on the pixel offset, so every offset is visited once.
pub fn mutual_coherence(op: &SensingOperator) -> Result<f64> {
    let q = op.q;
    if q * q > COHERENCE_BUDGET {
        return Err(Error::TooLarge(alloc::format!(
            "coherence of m = {} exceeds {COHERENCE_BUDGET}; estimate on sampled columns instead",
            q * q
        )));
    }
    if q < 2 {
        return Ok(0.0);
    }
    let n = op.plan.len() as f64;
    let mut best: f64 = 0.0;
    for d2 in 0..q as i64 {
        let start = if d2 == 0 { 1 } else { -(q as i64) + 1 };
        for d1 in start..q as i64 {
            let g: C64 = op
                .plan
                .measurements
                .iter()
                .map(|m| cis(PI * (d1 as f64 * m.xi + d2 as f64 * m.zeta)))
                .sum();
            best = best.max(abs(g) / n);
        }
    }
    Ok(best.min(1.0))
}

/// Mutual coherence from explicitly formed columns of any operator.
pub fn mutual_coherence_dense(op: &dyn LinearMap) -> Result<f64> {
    let m = op.cols();
    if m > COHERENCE_BUDGET {
        return Err(Error::TooLarge(alloc::format!(
            "coherence of m = {m} exceeds {COHERENCE_BUDGET}; estimate on sampled columns instead"
        )));
    }
    let cols: Vec<Vec<C64>> = (0..m).map(|j| op.column(j)).collect();
    let norms: Vec<f64> = cols.iter().map(|c| crate::math::norm2(c)).collect();
    let mut best: f64 = 0.0;
    for i in 0..m {
        for j in i + 1..m {
            let denom = norms[i] * norms[j];
            if denom > 0.0 {
                best = best.max(abs(crate::math::dot(&cols[i], &cols[j])) / denom);
            }
        }
    }
    Ok(best.min(1.0))
}

/// `C(m, k)`, saturating.
pub fn binomial(m: usize, k: usize) -> u128 {
    if k > m {
        return 0;
    }
    let k = k.min(m - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((m - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Restricted isometry defect `max(1 - lambda_min, lambda_max - 1)` of the
/// Gram matrix of the given columns.
pub fn isometry_defect(columns: &[&[C64]]) -> f64 {
    let k = columns.len();
    let mut g = CMatrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let v = crate::math::dot(columns[i], columns[j]);
            g[(i, j)] = v;
            g[(j, i)] = v.conj();
        }
    }
    let eig = hermitian_eigenvalues(&g);
    let (lo, hi) = (eig[0], eig[k - 1]);
    (1.0 - lo).max(hi - 1.0).max(0.0)
}

/// Lower bound on the order-`k` restricted isometry constant over random
/// supports, or over every support when `trials >= C(m, k)`.
pub fn ric_lower_bound(op: &dyn LinearMap, k: usize, trials: usize, seed: u64) -> Result<f64> {
    let m = op.cols();
    if k == 0 || k > m {
        return Err(invalid(alloc::format!("order {k} must be in 1..={m}")));
    }
    let mut cache: Vec<Option<Vec<C64>>> = vec![None; m];
    let defect = |support: &[usize], cache: &mut Vec<Option<Vec<C64>>>| {
        for &j in support {
            if cache[j].is_none() {
                cache[j] = Some(op.column(j));
            }
        }
        let cols: Vec<&[C64]> = support.iter().map(|&j| cache[j].as_deref().expect("cached")).collect();
        isometry_defect(&cols)
    };
    let mut best: f64 = 0.0;
    if (trials as u128) >= binomial(m, k) {
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            best = best.max(defect(&idx, &mut cache));
            // next combination in lexicographic order
            let mut i = k;
            while i > 0 && idx[i - 1] == m - k + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            idx[i - 1] += 1;
            for t in i..k {
                idx[t] = idx[t - 1] + 1;
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..trials {
            let mut support = rand::seq::index::sample(&mut rng, m, k).into_vec();
            support.sort_unstable();
            best = best.max(defect(&support, &mut cache));
        }
    }
    Ok(best)
}

/// Sum of squared moduli, used for column-norm checks.
pub fn column_norm_sqr(column: &[C64]) -> f64 {
    column.iter().map(|z| norm_sqr(*z)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(scheme: Scheme, mode: SamplingMode, n: usize, q: usize, seed: u64) -> SchemeConfig {
        SchemeConfig::new(scheme, mode, n, 1.0 / q as f64, seed)
    }

    #[test]
    fn backward_plan_geometry() {
        let c = cfg(Scheme::Backward, SamplingMode::Continuous, 200, 8, 1);
        let plan = SamplingPlan::draw(&c, 8).unwrap();
        for m in &plan.measurements {
            assert!(m.omega <= c.omega);
            assert_eq!(m.theta_tilde, m.theta - PI);
        }
        assert!(plan.check_invariants(&c).ok);
    }

    #[test]
    fn forward_plan_geometry() {
        let c = cfg(Scheme::Forward, SamplingMode::Continuous, 200, 8, 2).with_gamma(1.5);
        let plan = SamplingPlan::draw(&c, 8).unwrap();
        for m in &plan.measurements {
            assert_eq!(m.omega, 1.5 * c.omega);
            let expect = 2.0 * asin(m.rho / (1.5 * SQRT_2));
            assert!((m.theta - m.theta_tilde - expect).abs() < 1e-14);
        }
        assert!(plan.check_invariants(&c).ok);
    }

    #[test]
    fn plans_are_reproducible() {
        for mode in [SamplingMode::Continuous, SamplingMode::OnGrid] {
            let c = cfg(Scheme::Backward, mode, 50, 8, 77);
            assert_eq!(SamplingPlan::draw(&c, 8).unwrap(), SamplingPlan::draw(&c, 8).unwrap());
        }
    }

    #[test]
    fn on_grid_rejects_oversized_plans() {
        let c = cfg(Scheme::Backward, SamplingMode::OnGrid, 257, 8, 0);
        assert!(SamplingPlan::draw(&c, 8).is_err());
        let c = cfg(Scheme::Backward, SamplingMode::OnGrid, 256, 8, 0);
        assert!(SamplingPlan::draw(&c, 8).is_ok());
    }

    #[test]
    fn bandwidth_relation_enforced() {
        let mut c = cfg(Scheme::Backward, SamplingMode::Continuous, 10, 4, 0);
        let plan = SamplingPlan::draw(&c, 4).unwrap();
        c.omega *= 1.01;
        assert!(matches!(SensingOperator::new(&plan, 4, &c), Err(Error::InvalidConfiguration(_))));
    }

    #[test]
    fn exact_forward_sampling_rejected_in_backward_scheme() {
        let c = cfg(Scheme::Backward, SamplingMode::Continuous, 1, 8, 0);
        assert!(Measurement::from_angles(0.3, 0.3, 0.5 * c.omega, &c).is_err());
        let ok = Measurement::from_angles(0.3, 0.3 - PI, 0.5 * c.omega, &c).unwrap();
        assert!((ok.rho - 0.5 * SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn physical_and_fourier_forms_agree() {
        for scheme in [Scheme::Backward, Scheme::Forward] {
            let c = cfg(scheme, SamplingMode::Continuous, 40, 16, 9).with_gamma(1.3);
            let plan = SamplingPlan::draw(&c, 16).unwrap();
            let op = SensingOperator::new(&plan, 16, &c).unwrap();
            for l in 0..40 {
                for j in (0..256).step_by(7) {
                    assert!((op.entry(l, j) - op.physical_entry(l, j)).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn complete_plan_is_orthonormal() {
        let q = 6;
        let c = cfg(Scheme::Backward, SamplingMode::Complete, q * q, q, 0);
        let plan = SamplingPlan::draw(&c, q).unwrap();
        let op = SensingOperator::new(&plan, q, &c).unwrap();
        assert_eq!(op.representation(), Representation::Grid);
        let a = op.dense();
        let g = a.adjoint().matmul(&a);
        for i in 0..q * q {
            for j in 0..q * q {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((g[(i, j)] - C64::new(e, 0.0)).norm() < 1e-10);
            }
        }
        assert!(mutual_coherence(&op).unwrap() < 1e-10);
    }

    #[test]
    fn representations_agree() {
        let q = 8;
        for mode in [SamplingMode::Continuous, SamplingMode::OnGrid] {
            let c = cfg(Scheme::Forward, mode, 50, q, 5);
            let plan = SamplingPlan::draw(&c, q).unwrap();
            let op = SensingOperator::new(&plan, q, &c).unwrap();
            let dense = op.clone().with_representation(Representation::Explicit).unwrap();
            let sep = op.clone().with_representation(Representation::Separable).unwrap();
            let x: Vec<C64> = (0..q * q).map(|j| C64::new((j as f64).sin(), (j as f64 * 0.7).cos())).collect();
            let y: Vec<C64> = (0..50).map(|j| C64::new((j as f64).cos(), 0.2 * j as f64)).collect();
            let reference = dense.apply(&x).unwrap();
            let reference_adj = dense.adjoint_apply(&y).unwrap();
            for other in [&op, &sep] {
                for (u, v) in other.apply(&x).unwrap().iter().zip(&reference) {
                    assert!((u - v).norm() < 1e-10);
                }
                for (u, v) in other.adjoint_apply(&y).unwrap().iter().zip(&reference_adj) {
                    assert!((u - v).norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn unit_column_norms() {
        let c = cfg(Scheme::Backward, SamplingMode::Continuous, 30, 8, 3);
        let plan = SamplingPlan::draw(&c, 8).unwrap();
        let op = SensingOperator::new(&plan, 8, &c).unwrap();
        for j in 0..64 {
            assert!((column_norm_sqr(&op.column(j)) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn coherence_paths_agree() {
        let c = cfg(Scheme::Backward, SamplingMode::Continuous, 20, 5, 4);
        let plan = SamplingPlan::draw(&c, 5).unwrap();
        let op = SensingOperator::new(&plan, 5, &c).unwrap();
        let a = mutual_coherence(&op).unwrap();
        let b = mutual_coherence_dense(&op).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn identical_columns_have_unit_coherence() {
        let col = vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)];
        let m = CMatrix::from_columns(2, &[col.clone(), col]);
        assert!((mutual_coherence_dense(&m).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ric_of_unit_columns_at_order_one_is_zero() {
        let c = cfg(Scheme::Backward, SamplingMode::Continuous, 12, 4, 8);
        let plan = SamplingPlan::draw(&c, 4).unwrap();
        let op = SensingOperator::new(&plan, 4, &c).unwrap();
        assert!(ric_lower_bound(&op, 1, 100, 0).unwrap() < 1e-12);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(16, 2), 120);
        assert_eq!(binomial(5, 0), 1);
        assert_eq!(binomial(3, 4), 0);
        assert_eq!(binomial(200, 100), u128::MAX);
    }

    #[test]
    fn single_scatterer_at_origin() {
        let c = cfg(Scheme::Backward, SamplingMode::Continuous, 5, 8, 1);
        let plan = SamplingPlan::draw(&c, 8).unwrap();
        for m in &plan.measurements {
            let a = scattering_amplitude_point(&[C64::new(1.0, 0.0)], &[(0.0, 0.0)], m);
            assert!((a - C64::new(m.omega * m.omega / (4.0 * PI), 0.0)).norm() < 1e-15);
        }
    }
}
