use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::{Field, Grid};
use crate::error::Result;
use crate::kernel::Kernel;

/// Output nodes per parallel work item. Each node's sum runs over the
/// offsets in a fixed order, so results do not depend on the chunking.
const CHUNK: usize = 1024;

/// Symmetric weights `w_j`, `|j| ≤ r`, sampling `J(jh) h` and renormalized
/// to unit sum.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteKernel {
    h: f64,
    radius: usize,
    weights: Vec<f64>,
}

impl DiscreteKernel {
    pub fn new(kernel: &Kernel, h: f64) -> Result<Self> {
        if !(h > 0.0 && h <= kernel.support() / 10.0 * (1.0 + 1e-12)) {
            return Err(crate::error::param(format!(
                "kernel discretization needs 0 < h ≤ d/10, got h = {h}, d = {}",
                kernel.support()
            )));
        }
        let radius = (kernel.support() / h - 1e-9).ceil() as usize;
        let half: Vec<f64> = (0..=radius).map(|j| kernel.eval(j as f64 * h) * h).collect();
        let total = half[0] + 2.0 * half[1..].iter().sum::<f64>();
        let half: Vec<f64> = half.iter().map(|w| w / total).collect();
        let weights = (0..=2 * radius).map(|k| half[(k as isize - radius as isize).unsigned_abs()]).collect();
        Ok(Self { h, radius, weights })
    }

    /// Largest offset `r`.
    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Weights for offsets `-r..=r`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, offset: isize) -> f64 {
        let k = offset + self.radius as isize;
        if k < 0 || k as usize >= self.weights.len() {
            return 0.0;
        }
        self.weights[k as usize]
    }

    pub fn nonzero_count(&self) -> usize {
        self.weights.iter().filter(|&&w| w != 0.0).count()
    }

    /// `Σ w_j (jh)^s`.
    pub fn moment(&self, s: i32) -> f64 {
        let r = self.radius as isize;
        (-r..=r).map(|j| self.weight(j) * (j as f64 * self.h).powi(s)).sum()
    }

    /// `Ĵ_h(ξ) = Σ w_j cos(ξ j h)`.
    pub fn symbol(&self, xi: f64) -> f64 {
        let mut s = self.weights[self.radius];
        for j in 1..=self.radius {
            s += 2.0 * self.weights[self.radius + j] * (xi * j as f64 * self.h).cos();
        }
        s
    }
}

pub fn discretize_kernel(kernel: &Kernel, grid: &Grid) -> Result<DiscreteKernel> {
    DiscreteKernel::new(kernel, grid.h())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ConvolutionMethod {
    #[default]
    Direct,
    Fft,
}

/// `out_i = Σ_j w_j u_{i-j}` with zero extension outside the grid.
pub fn convolve_into(u: &[f64], dk: &DiscreteKernel, out: &mut [f64]) {
    let n = u.len();
    let r = dk.radius as isize;
    out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
        let start = c * CHUNK;
        let len = chunk.len();
        chunk.fill(0.0);
        for j in -r..=r {
            let w = dk.weights[(j + r) as usize];
            if w == 0.0 {
                continue;
            }
            // i in [start, start+len) with 0 ≤ i - j < n
            let lo = (start as isize).max(j).max(0);
            let hi = ((start + len) as isize).min(n as isize + j);
            if hi <= lo {
                continue;
            }
            let (lo, hi) = (lo as usize, hi as usize);
            let src = &u[(lo as isize - j) as usize..(hi as isize - j) as usize];
            for (o, &v) in chunk[lo - start..hi - start].iter_mut().zip(src) {
                *o += w * v;
            }
        }
    });
}

/// Same sum as [`convolve_into`], evaluated with zero-padded FFTs.
pub fn convolve_fft_into(u: &[f64], dk: &DiscreteKernel, out: &mut [f64]) {
    let n = u.len();
    let r = dk.radius;
    let len = (n + 2 * r).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let mut a: Vec<Complex64> = (0..len).map(|i| Complex64::new(if i < n { u[i] } else { 0.0 }, 0.0)).collect();
    let mut b = vec![Complex64::new(0.0, 0.0); len];
    for (k, &w) in dk.weights.iter().enumerate() {
        b[k] = Complex64::new(w, 0.0);
    }
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y;
    }
    inv.process(&mut a);
    let scale = 1.0 / len as f64;
    for (i, o) in out.iter_mut().enumerate() {
        *o = a[i + r].re * scale;
    }
}

pub fn convolve_with(field: &Field, dk: &DiscreteKernel, method: ConvolutionMethod) -> Field {
    let mut out = vec![0.0; field.len()];
    match method {
        ConvolutionMethod::Direct => convolve_into(field.values(), dk, &mut out),
        ConvolutionMethod::Fft => convolve_fft_into(field.values(), dk, &mut out),
    }
    Field::from_parts(Arc::clone(field.grid()), out, field.time())
}

pub fn convolve(field: &Field, dk: &DiscreteKernel) -> Field {
    convolve_with(field, dk, ConvolutionMethod::Direct)
}

/// `out = J*u - u` at every node, without masking.
pub fn apply_l_into(u: &[f64], dk: &DiscreteKernel, out: &mut [f64]) {
    convolve_into(u, dk, out);
    for (o, v) in out.iter_mut().zip(u) {
        *o -= v;
    }
}

pub fn apply_l(field: &Field, dk: &DiscreteKernel) -> Field {
    let mut out = vec![0.0; field.len()];
    apply_l_into(field.values(), dk, &mut out);
    Field::from_parts(Arc::clone(field.grid()), out, field.time())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{GridMode, HoleGeometry};
    use crate::kernel::heat_kernel_derivative;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn setup(h: f64) -> (Arc<Grid>, DiscreteKernel) {
        let k = Kernel::poly3(1.0).unwrap();
        let grid = Arc::new(Grid::new(20.0, h, HoleGeometry::empty(), &k, GridMode::Cauchy).unwrap());
        let dk = discretize_kernel(&k, &grid).unwrap();
        (grid, dk)
    }

    fn interior(grid: &Grid, i: usize) -> bool {
        grid.x(i).abs() < grid.half_extent() - 1.5
    }

    #[test]
    fn weights_are_normalized_and_symmetric() {
        let (_, dk) = setup(0.1);
        assert_eq!(dk.radius(), 10);
        assert_eq!(dk.weights().len(), 21);
        // J vanishes at ±d, so the two outermost weights are zero
        assert_eq!(dk.nonzero_count(), 19);
        assert_abs_diff_eq!(dk.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        for j in 0..=10 {
            assert_eq!(dk.weight(j), dk.weight(-j));
            assert!(dk.weight(j) >= 0.0);
        }
    }

    #[test]
    fn discrete_second_moment_converges() {
        let m = |h| setup(h).1.moment(2);
        let (m1, m2) = (m(0.1), m(0.05));
        assert!((m1 - 1.0 / 9.0).abs() <= 0.01);
        // at least second order; the vanishing edge derivatives of poly3
        // actually give fourth order
        let ratio = (m1 - 1.0 / 9.0).abs() / (m2 - 1.0 / 9.0).abs();
        assert!(ratio > 3.5, "ratio {ratio}");
    }

    #[test]
    fn constants_and_linear_functions_are_harmonic() {
        let (grid, dk) = setup(0.1);
        let c = convolve(&Field::from_fn(grid.clone(), 0.0, |_| 3.0), &dk);
        let lin = convolve(&Field::from_fn(grid.clone(), 0.0, |x| x), &dk);
        for i in (0..grid.len()).filter(|&i| interior(&grid, i)) {
            assert_abs_diff_eq!(c.values()[i], 3.0, epsilon = 1e-14);
            assert_abs_diff_eq!(lin.values()[i], grid.x(i), epsilon = 1e-13);
        }
    }

    #[test]
    fn impulse_returns_weights() {
        let (grid, dk) = setup(0.1);
        let k = grid.center_index();
        let mut f = Field::zeros(grid.clone(), 0.0);
        f.values_mut()[k] = 1.0;
        let out = convolve(&f, &dk);
        for j in -12isize..=12 {
            assert_eq!(out.values()[(k as isize + j) as usize], dk.weight(j));
        }
    }

    #[test]
    fn operator_on_quadratic_and_gaussian() {
        let (grid, dk) = setup(0.1);
        let lq = apply_l(&Field::from_fn(grid.clone(), 0.0, |x| x * x), &dk);
        let one = apply_l(&Field::from_fn(grid.clone(), 0.0, |_| 1.0), &dk);
        for i in (0..grid.len()).filter(|&i| interior(&grid, i)) {
            assert_abs_diff_eq!(lq.values()[i], dk.moment(2), epsilon = 1e-12);
            assert!((lq.values()[i] - 1.0 / 9.0).abs() < 0.01);
            assert_abs_diff_eq!(one.values()[i], 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn operator_on_gaussian_matches_taylor_expansion() {
        let (grid, dk) = setup(0.05);
        let (t, q) = (10.0, 1.0 / 18.0);
        let m4 = Kernel::poly3(1.0).unwrap().moment(4).unwrap();
        let m6 = Kernel::poly3(1.0).unwrap().moment(6).unwrap();
        let deriv = |x: f64, n| heat_kernel_derivative(x, t, q, n).unwrap();
        let g = Field::from_fn(grid.clone(), t, |x| deriv(x, 0));
        let lg = apply_l(&g, &dk);
        let sup = |n| (0..grid.len()).map(|i| deriv(grid.x(i), n).abs()).fold(0.0f64, f64::max);
        let (mut second, mut fourth) = (0.0f64, 0.0f64);
        for i in 0..grid.len() {
            let x = grid.x(i);
            let r2 = lg.values()[i] - q * deriv(x, 2);
            second = second.max(r2.abs());
            fourth = fourth.max((r2 - m4 / 24.0 * deriv(x, 4)).abs());
        }
        // Taylor remainders, with slack for the O(h^4) lattice error
        assert!(second <= m4 / 24.0 * sup(4) + 1e-6, "{second}");
        assert!(fourth <= m6 / 720.0 * sup(6) + 1e-6, "{fourth}");
        assert!(second <= 1.2e-3, "{second}");
    }

    #[test]
    fn short_trailing_chunk_matches_fft() {
        // 2·CHUNK + 5 nodes with radius 100: the last chunk is narrower than the kernel
        let k = Kernel::poly3(1.0).unwrap();
        let grid = Arc::new(Grid::new(10.26, 0.01, HoleGeometry::empty(), &k, GridMode::Cauchy).unwrap());
        assert_eq!(grid.len(), 2 * CHUNK + 5);
        let dk = discretize_kernel(&k, &grid).unwrap();
        let f = Field::from_fn(grid, 0.0, |x| 1.0 + x.sin());
        let a = convolve_with(&f, &dk, ConvolutionMethod::Direct);
        let b = convolve_with(&f, &dk, ConvolutionMethod::Fft);
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() <= 1e-12, "{x} {y}");
        }
    }

    fn bump_field(grid: &Arc<Grid>, coeffs: &[f64]) -> Field {
        // supported in |x| < 10, away from the grid ends
        Field::from_fn(grid.clone(), 0.0, |x| {
            if x.abs() >= 10.0 {
                return 0.0;
            }
            coeffs.iter().enumerate().map(|(k, c)| c * (0.7 * k as f64 * x).sin()).sum::<f64>() * (1.0 - x * x / 100.0)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn fft_path_matches_direct(values in proptest::collection::vec(-5.0f64..5.0, 401)) {
            let (grid, dk) = setup(0.1);
            let f = Field::new(grid, values, 0.0).unwrap();
            let a = convolve_with(&f, &dk, ConvolutionMethod::Direct);
            let b = convolve_with(&f, &dk, ConvolutionMethod::Fft);
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn convolution_is_linear(
            u in proptest::collection::vec(-1.0f64..1.0, 401),
            v in proptest::collection::vec(-1.0f64..1.0, 401),
            alpha in -3.0f64..3.0,
            beta in -3.0f64..3.0,
        ) {
            let (grid, dk) = setup(0.1);
            let combo: Vec<f64> = u.iter().zip(&v).map(|(a, b)| alpha * a + beta * b).collect();
            let cu = convolve(&Field::new(grid.clone(), u, 0.0).unwrap(), &dk);
            let cv = convolve(&Field::new(grid.clone(), v, 0.0).unwrap(), &dk);
            let cc = convolve(&Field::new(grid, combo, 0.0).unwrap(), &dk);
            for i in 0..cc.len() {
                let lin = alpha * cu.values()[i] + beta * cv.values()[i];
                prop_assert!((cc.values()[i] - lin).abs() <= 1e-12);
            }
        }

        #[test]
        fn self_adjoint_and_mass_preserving(
            a in proptest::collection::vec(-1.0f64..1.0, 4),
            b in proptest::collection::vec(-1.0f64..1.0, 4),
        ) {
            let (grid, dk) = setup(0.1);
            let u = bump_field(&grid, &a);
            let v = bump_field(&grid, &b);
            let ju = convolve(&u, &dk);
            let jv = convolve(&v, &dk);
            let lhs: f64 = ju.values().iter().zip(v.values()).map(|(x, y)| x * y).sum();
            let rhs: f64 = u.values().iter().zip(jv.values()).map(|(x, y)| x * y).sum();
            prop_assert!((lhs - rhs).abs() <= 1e-12);
            let mass_l: f64 = apply_l(&u, &dk).values().iter().sum::<f64>() * grid.h();
            prop_assert!(mass_l.abs() <= 1e-12);
        }
    }
}
