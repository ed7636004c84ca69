//! Two-dimensional transforms between a `q x q` pixel grid and an `N x N`
//! half-shifted frequency grid `xi_k = (2k + 1) / N`.
//!
//! Since `exp(i pi p (2k+1)/N) = exp(i pi p (2 k0 + 1)/N) exp(2 pi i p u / N)`
//! with `k = k0 + u`, the sum over pixels is a pre-twiddle followed by a
//! zero-padded inverse DFT of size `N`. With the `fft` feature the DFT runs
//! through `rustfft`; otherwise a separable direct evaluation is used.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::cis;
use crate::C64;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Lowest grid offset `k0` so that `(2k+1)/N` for `k in k0..k0+N` lies in `[-1, 1]`.
pub fn grid_offset(n_grid: usize) -> i64 {
    -((n_grid as i64 + 1) / 2)
}

/// Frequency of grid index `u` on an `N`-point axis.
pub fn grid_frequency(u: usize, n_grid: usize) -> f64 {
    (2.0 * (grid_offset(n_grid) + u as i64) as f64 + 1.0) / n_grid as f64
}

/// Index `u` with `grid_frequency(u, N) == xi` when `xi` lies on the grid.
pub fn grid_index(xi: f64, n_grid: usize) -> Option<usize> {
    let t = (xi * n_grid as f64 - 1.0) / 2.0;
    let k = crate::math::round(t);
    if (t - k).abs() > 1e-9 {
        return None;
    }
    let u = k as i64 - grid_offset(n_grid);
    (0..n_grid as i64).contains(&u).then_some(u as usize)
}

#[derive(Clone)]
pub(crate) struct GridTransform {
    q: usize,
    n_grid: usize,
    twiddle: Vec<C64>,
    /// `table[u * q + p] = exp(2 pi i p u / N)`.
    #[cfg_attr(feature = "fft", allow(dead_code))]
    table: Vec<C64>,
    #[cfg(feature = "fft")]
    plans: (alloc::sync::Arc<dyn rustfft::Fft<f64>>, alloc::sync::Arc<dyn rustfft::Fft<f64>>),
}

impl core::fmt::Debug for GridTransform {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("GridTransform").field("q", &self.q).field("n_grid", &self.n_grid).finish()
    }
}

impl GridTransform {
    pub(crate) fn new(q: usize, n_grid: usize) -> Self {
        let k0 = grid_offset(n_grid) as f64;
        let nf = n_grid as f64;
        let pi = core::f64::consts::PI;
        let twiddle = (0..q).map(|p| cis(pi * p as f64 * (2.0 * k0 + 1.0) / nf)).collect();
        let mut table = Vec::with_capacity(n_grid * q);
        for u in 0..n_grid {
            for p in 0..q {
                // reduce the product first so the phase stays small
                let r = (p * u) % n_grid;
                table.push(cis(2.0 * pi * r as f64 / nf));
            }
        }
        #[cfg(feature = "fft")]
        let plans = {
            let mut planner = rustfft::FftPlanner::new();
            (planner.plan_fft_inverse(n_grid), planner.plan_fft_forward(n_grid))
        };
        Self {
            q,
            n_grid,
            twiddle,
            table,
            #[cfg(feature = "fft")]
            plans,
        }
    }

    pub(crate) fn n_grid(&self) -> usize {
        self.n_grid
    }

    /// `out[u1 * N + u2] = sum_p x_p exp(i pi (p1 xi_u1 + p2 xi_u2))`.
    pub(crate) fn forward(&self, x: &[C64], out: &mut [C64]) {
        #[cfg(feature = "fft")]
        self.forward_fft(x, out);
        #[cfg(not(feature = "fft"))]
        self.forward_direct(x, out);
    }

    /// Adjoint of [`Self::forward`].
    pub(crate) fn adjoint(&self, z: &[C64], out: &mut [C64]) {
        #[cfg(feature = "fft")]
        self.adjoint_fft(z, out);
        #[cfg(not(feature = "fft"))]
        self.adjoint_direct(z, out);
    }

    #[cfg_attr(feature = "fft", allow(dead_code))]
    pub(crate) fn forward_direct(&self, x: &[C64], out: &mut [C64]) {
        let (q, n) = (self.q, self.n_grid);
        // stage one along p2, giving t[p1][u2]
        let mut t = vec![ZERO; q * n];
        for p1 in 0..q {
            let row: Vec<C64> = (0..q).map(|p2| x[p1 * q + p2] * self.twiddle[p2]).collect();
            for u2 in 0..n {
                let w = &self.table[u2 * q..(u2 + 1) * q];
                t[p1 * n + u2] = row.iter().zip(w).map(|(a, b)| a * b).sum();
            }
        }
        for u1 in 0..n {
            let w = &self.table[u1 * q..(u1 + 1) * q];
            let o = &mut out[u1 * n..(u1 + 1) * n];
            o.fill(ZERO);
            for p1 in 0..q {
                let c = w[p1] * self.twiddle[p1];
                for (oi, ti) in o.iter_mut().zip(&t[p1 * n..(p1 + 1) * n]) {
                    *oi += c * ti;
                }
            }
        }
    }

    #[cfg_attr(feature = "fft", allow(dead_code))]
    pub(crate) fn adjoint_direct(&self, z: &[C64], out: &mut [C64]) {
        let (q, n) = (self.q, self.n_grid);
        let mut t = vec![ZERO; q * n];
        for p1 in 0..q {
            let c0 = self.twiddle[p1].conj();
            let acc = &mut t[p1 * n..(p1 + 1) * n];
            for u1 in 0..n {
                let c = c0 * self.table[u1 * q + p1].conj();
                for (a, zi) in acc.iter_mut().zip(&z[u1 * n..(u1 + 1) * n]) {
                    *a += c * zi;
                }
            }
        }
        for p1 in 0..q {
            for p2 in 0..q {
                let c0 = self.twiddle[p2].conj();
                let s: C64 = (0..n).map(|u2| self.table[u2 * q + p2].conj() * t[p1 * n + u2]).sum();
                out[p1 * q + p2] = c0 * s;
            }
        }
    }

    #[cfg(feature = "fft")]
    fn forward_fft(&self, x: &[C64], out: &mut [C64]) {
        let (q, n) = (self.q, self.n_grid);
        out.fill(ZERO);
        for p1 in 0..q {
            for p2 in 0..q {
                out[p1 * n + p2] = x[p1 * q + p2] * self.twiddle[p1] * self.twiddle[p2];
            }
        }
        self.transform_2d(out, q, &self.plans.0);
    }

    #[cfg(feature = "fft")]
    fn adjoint_fft(&self, z: &[C64], out: &mut [C64]) {
        let (q, n) = (self.q, self.n_grid);
        let mut buf = z.to_vec();
        self.transform_2d(&mut buf, n, &self.plans.1);
        for p1 in 0..q {
            for p2 in 0..q {
                out[p1 * q + p2] = buf[p1 * n + p2] * (self.twiddle[p1] * self.twiddle[p2]).conj();
            }
        }
    }

    /// In-place 2-D transform of an `N x N` buffer whose rows at or beyond
    /// `live_rows` are zero.
    #[cfg(feature = "fft")]
    fn transform_2d(&self, buf: &mut [C64], live_rows: usize, plan: &alloc::sync::Arc<dyn rustfft::Fft<f64>>) {
        let n = self.n_grid;
        let mut scratch = vec![ZERO; plan.get_inplace_scratch_len()];
        plan.process_with_scratch(&mut buf[..live_rows * n], &mut scratch);
        let mut col = vec![ZERO; n];
        for c in 0..n {
            for r in 0..n {
                col[r] = buf[r * n + c];
            }
            plan.process_with_scratch(&mut col, &mut scratch);
            for r in 0..n {
                buf[r * n + c] = col[r];
            }
        }
    }
}
