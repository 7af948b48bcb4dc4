//! Three-dimensional complex FFTs on row-major buffers.

use std::ops::Range;
use std::sync::Arc;

use ndarray::ArrayView3;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Smallest integer `>= n` whose only prime factors are 2, 3, 5 and 7.
pub fn smooth_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5, 7] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// Planned forward/inverse transforms for one 3-D shape.
pub struct Fft3 {
    shape: [usize; 3],
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
}

impl Fft3 {
    pub fn new(shape: [usize; 3]) -> Self {
        let mut planner = FftPlanner::new();
        let forward = shape.map(|n| planner.plan_fft_forward(n));
        let inverse = shape.map(|n| planner.plan_fft_inverse(n));
        Self {
            shape,
            forward,
            inverse,
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.forward_supported(data, self.shape);
    }

    /// Inverse transform, normalized so that `inverse(forward(x)) == x`.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.inverse_window(data, [0, 0, 0], self.shape);
    }

    /// Forward transform of data that vanishes outside the corner box
    /// `[0, extent)`; skips the lines that are still zero.
    pub fn forward_supported(&self, data: &mut [Complex64], extent: [usize; 3]) {
        self.check(data);
        let [n0, n1, n2] = self.shape;
        let e = [0, 1, 2].map(|ax| extent[ax].min(self.shape[ax]));
        for y in 0..e[1] {
            self.strided(data, &self.forward[0], n0, n1 * n2, y * n2, 0..e[2]);
        }
        for x in 0..n0 {
            self.strided(data, &self.forward[1], n1, n2, x * n1 * n2, 0..e[2]);
        }
        self.contiguous(data, &self.forward[2]);
    }

    /// Normalized inverse that is exact inside the box `[lo, hi)` only;
    /// entries outside it are left unspecified.
    pub fn inverse_window(&self, data: &mut [Complex64], lo: [usize; 3], hi: [usize; 3]) {
        self.check(data);
        let [n0, n1, n2] = self.shape;
        self.contiguous(data, &self.inverse[2]);
        for x in 0..n0 {
            self.strided(data, &self.inverse[1], n1, n2, x * n1 * n2, lo[2]..hi[2]);
        }
        for y in lo[1]..hi[1] {
            self.strided(data, &self.inverse[0], n0, n1 * n2, y * n2, lo[2]..hi[2]);
        }
        let scale = 1.0 / self.len() as f64;
        for x in lo[0]..hi[0] {
            for y in lo[1]..hi[1] {
                let row = (x * n1 + y) * n2;
                for v in &mut data[row + lo[2]..row + hi[2]] {
                    *v *= scale;
                }
            }
        }
    }

    fn check(&self, data: &[Complex64]) {
        assert_eq!(data.len(), self.len(), "buffer does not match FFT shape");
    }

    /// All lines along the last axis.
    fn contiguous(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        if self.shape[2] > 1 {
            let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
            plan.process_with_scratch(data, &mut scratch);
        }
    }

    /// Lines of length `len` and element stride `stride` starting at
    /// `base + z` for `z` in `zs`, gathered a block at a time.
    fn strided(
        &self,
        data: &mut [Complex64],
        plan: &Arc<dyn Fft<f64>>,
        len: usize,
        stride: usize,
        base: usize,
        zs: Range<usize>,
    ) {
        const BLOCK: usize = 16;
        if len < 2 || zs.is_empty() {
            return;
        }
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        let mut buf = vec![Complex64::default(); BLOCK * len];
        let mut z0 = zs.start;
        while z0 < zs.end {
            let width = BLOCK.min(zs.end - z0);
            for k in 0..len {
                let row = base + k * stride + z0;
                for (b, v) in data[row..row + width].iter().enumerate() {
                    buf[b * len + k] = *v;
                }
            }
            plan.process_with_scratch(&mut buf[..width * len], &mut scratch);
            for k in 0..len {
                let row = base + k * stride + z0;
                for (b, v) in data[row..row + width].iter_mut().enumerate() {
                    *v = buf[b * len + k];
                }
            }
            z0 += width;
        }
    }
}

/// Copies a real array into the corner of a zero-padded complex buffer.
pub fn embed(src: ArrayView3<f64>, shape: [usize; 3]) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); shape.iter().product()];
    let (s1, s2) = (shape[1], shape[2]);
    for ((i, j, k), v) in src.indexed_iter() {
        out[(i * s1 + j) * s2 + k] = Complex64::new(*v, 0.0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Full linear convolution `c[n] = sum_m a[m] b[n - m]`, output shape
    /// `a.dim + b.dim - 1` per axis.
    fn convolve_full(a: ArrayView3<f64>, b: ArrayView3<f64>) -> Array3<f64> {
        let (da, db) = (a.dim(), b.dim());
        let out = [da.0 + db.0 - 1, da.1 + db.1 - 1, da.2 + db.2 - 1];
        let shape = out.map(smooth_size);
        let plan = Fft3::new(shape);
        let mut fa = embed(a, shape);
        let mut fb = embed(b, shape);
        plan.forward(&mut fa);
        plan.forward(&mut fb);
        for (x, y) in fa.iter_mut().zip(&fb) {
            *x *= *y;
        }
        plan.inverse(&mut fa);
        Array3::from_shape_fn((out[0], out[1], out[2]), |(i, j, k)| {
            fa[(i * shape[1] + j) * shape[2] + k].re
        })
    }

    /// Cross-correlation `c[d] = sum_w a[w] b[w - d]` for lags
    /// `d in [-(max_lag), max_lag]` per axis, returned with lag `d` stored at
    /// index `d + max_lag`.
    fn cross_correlate(a: ArrayView3<f64>, b: ArrayView3<f64>, max_lag: [usize; 3]) -> Array3<f64> {
        let (da, db) = (a.dim(), b.dim());
        let dims = [da.0.max(db.0), da.1.max(db.1), da.2.max(db.2)];
        let shape = [
            smooth_size(dims[0] + max_lag[0]),
            smooth_size(dims[1] + max_lag[1]),
            smooth_size(dims[2] + max_lag[2]),
        ];
        let plan = Fft3::new(shape);
        let mut fa = embed(a, shape);
        let mut fb = embed(b, shape);
        plan.forward(&mut fa);
        plan.forward(&mut fb);
        for (x, y) in fa.iter_mut().zip(&fb) {
            *x *= y.conj();
        }
        plan.inverse(&mut fa);
        let wrap = |d: isize, n: usize| -> usize { d.rem_euclid(n as isize) as usize };
        Array3::from_shape_fn(
            (2 * max_lag[0] + 1, 2 * max_lag[1] + 1, 2 * max_lag[2] + 1),
            |(i, j, k)| {
                let d0 = wrap(i as isize - max_lag[0] as isize, shape[0]);
                let d1 = wrap(j as isize - max_lag[1] as isize, shape[1]);
                let d2 = wrap(k as isize - max_lag[2] as isize, shape[2]);
                fa[(d0 * shape[1] + d1) * shape[2] + d2].re
            },
        )
    }

    fn random(dims: (usize, usize, usize), rng: &mut ChaCha8Rng) -> Array3<f64> {
        Array3::from_shape_fn(dims, |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn smooth_sizes() {
        assert_eq!(smooth_size(1), 1);
        assert_eq!(smooth_size(11), 12);
        assert_eq!(smooth_size(121), 125);
        assert_eq!(smooth_size(64), 64);
    }

    #[test]
    fn roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let shape = [3, 5, 4];
        let orig: Vec<Complex64> = (0..60)
            .map(|_| Complex64::new(rng.gen(), rng.gen()))
            .collect();
        let plan = Fft3::new(shape);
        let mut data = orig.clone();
        plan.forward(&mut data);
        plan.inverse(&mut data);
        for (a, b) in data.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn pruned_transforms_match_full() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let shape = [6, 7, 5];
        let small = random((3, 4, 2), &mut rng);
        let plan = Fft3::new(shape);
        let mut full = embed(small.view(), shape);
        let mut pruned = full.clone();
        plan.forward(&mut full);
        plan.forward_supported(&mut pruned, [3, 4, 2]);
        for (a, b) in full.iter().zip(&pruned) {
            assert!((a - b).norm() < 1e-12);
        }
        let (lo, hi) = ([2, 1, 3], [5, 7, 4]);
        let mut windowed = full.clone();
        plan.inverse(&mut full);
        plan.inverse_window(&mut windowed, lo, hi);
        for x in lo[0]..hi[0] {
            for y in lo[1]..hi[1] {
                for z in lo[2]..hi[2] {
                    let i = (x * shape[1] + y) * shape[2] + z;
                    assert!((full[i] - windowed[i]).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn convolution_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random((4, 3, 5), &mut rng);
        let b = random((2, 3, 3), &mut rng);
        let c = convolve_full(a.view(), b.view());
        assert_eq!(c.dim(), (5, 5, 7));
        for ((n0, n1, n2), v) in c.indexed_iter() {
            let mut s = 0.0;
            for ((m0, m1, m2), x) in a.indexed_iter() {
                let (k0, k1, k2) = (
                    n0 as isize - m0 as isize,
                    n1 as isize - m1 as isize,
                    n2 as isize - m2 as isize,
                );
                if k0 >= 0 && k1 >= 0 && k2 >= 0 {
                    if let Some(y) = b.get((k0 as usize, k1 as usize, k2 as usize)) {
                        s += x * y;
                    }
                }
            }
            assert!((s - v).abs() < 1e-10, "{s} vs {v}");
        }
    }

    #[test]
    fn correlation_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random((5, 4, 6), &mut rng);
        let b = random((5, 4, 6), &mut rng);
        let lag = [2, 3, 2];
        let c = cross_correlate(a.view(), b.view(), lag);
        for ((i, j, k), v) in c.indexed_iter() {
            let d = [i as isize - 2, j as isize - 3, k as isize - 2];
            let mut s = 0.0;
            for ((w0, w1, w2), x) in a.indexed_iter() {
                let u = [w0 as isize - d[0], w1 as isize - d[1], w2 as isize - d[2]];
                if u.iter().all(|&q| q >= 0) {
                    if let Some(y) = b.get((u[0] as usize, u[1] as usize, u[2] as usize)) {
                        s += x * y;
                    }
                }
            }
            assert!((s - v).abs() < 1e-10);
        }
    }
}
