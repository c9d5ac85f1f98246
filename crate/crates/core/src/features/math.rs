//! Numeric kernels behind the feature families.

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// Length the Fourier input is padded or truncated to.
pub const DFT_LEN: usize = 32;

pub fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

/// Midpoint of the two central values for even lengths.
pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}

/// Most frequent value; ties go to the smallest.
pub fn mode(xs: &[f64]) -> Option<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let mut best: Option<(f64, usize)> = None;
    let mut i = 0;
    while i < v.len() {
        let j = v[i..].iter().position(|&x| x != v[i]).map_or(v.len(), |p| i + p);
        if best.is_none_or(|(_, n)| j - i > n) {
            best = Some((v[i], j - i));
        }
        i = j;
    }
    best.map(|(x, _)| x)
}

/// Population standard deviation.
pub fn std_dev(xs: &[f64]) -> Option<f64> {
    let m = mean(xs)?;
    Some((xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt())
}

/// Forward DFT of `s` zero-padded or truncated to [`DFT_LEN`], unnormalized.
pub fn dft(s: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = (0..DFT_LEN).map(|i| Complex64::new(s.get(i).copied().unwrap_or(0.0), 0.0)).collect();
    FftPlanner::new().plan_fft_forward(DFT_LEN).process(&mut buf);
    buf
}

/// Argument in (-pi, pi].
pub fn angle(z: Complex64) -> f64 {
    let a = z.im.atan2(z.re);
    if a == -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        a
    }
}

/// Least-squares polynomial through `(i / (n - 1), y_i)`, ascending powers.
/// Underdetermined systems get the minimum-norm solution.
pub fn polyfit(ys: &[f64], degree: usize) -> Option<Vec<f64>> {
    let n = ys.len();
    if n == 0 {
        return None;
    }
    let cols = degree + 1;
    let x = |i: usize| if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
    let a = DMatrix::from_fn(n, cols, |r, c| x(r).powi(c as i32));
    let b = DVector::from_column_slice(ys);
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * f64::EPSILON * n.max(cols) as f64;
    let sol = svd.solve(&b, eps).ok()?;
    Some(sol.iter().copied().collect())
}

/// Gaussian-weighted share of each of `slices` contiguous index slices.
/// Slice `k` spans `[k*n/slices, (k+1)*n/slices)`; its weight peaks at 1 in
/// the slice centre with sigma equal to a quarter of the slice length.
pub fn gauss_slices(sizes: &[f64], slices: usize) -> Vec<f64> {
    let n = sizes.len();
    (0..slices)
        .map(|k| {
            let (lo, hi) = (k * n / slices, (k + 1) * n / slices);
            let slice = &sizes[lo..hi];
            let total: f64 = slice.iter().sum();
            if slice.is_empty() || total == 0.0 {
                return 0.0;
            }
            let len = slice.len() as f64;
            let centre = (len - 1.0) / 2.0;
            let sigma = len / 4.0;
            let weighted: f64 = slice
                .iter()
                .enumerate()
                .map(|(i, s)| s * (-((i as f64 - centre).powi(2)) / (2.0 * sigma * sigma)).exp())
                .sum();
            weighted / total
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft(s: &[f64], n: usize) -> Vec<(f64, f64)> {
        (0..n)
            .map(|k| {
                let mut re = 0.0;
                let mut im = 0.0;
                for (j, &v) in s.iter().take(n).enumerate() {
                    let th = -2.0 * std::f64::consts::PI * (k * j) as f64 / n as f64;
                    re += v * th.cos();
                    im += v * th.sin();
                }
                (re, im)
            })
            .collect()
    }

    #[test]
    fn order_statistics() {
        let v = [60.0, 1514.0, 60.0];
        assert_eq!(mode(&v), Some(60.0));
        assert_eq!(median(&v), Some(60.0));
        assert_eq!(median(&[1.0, 4.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(mode(&[3.0, 1.0, 3.0, 1.0]), Some(1.0));
        assert_eq!(std_dev(&[100.0, 100.0]), Some(0.0));
        assert_eq!(std_dev(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]), Some(2.0));
        assert_eq!(mean(&[]), None);
        assert_eq!(mode(&[]), None);
    }

    #[test]
    fn dft_matches_naive_sum() {
        let s = [60.0, 60.0, 60.0, 1514.0];
        let fast = dft(&s);
        for (k, (re, im)) in naive_dft(&s, DFT_LEN).into_iter().enumerate() {
            assert!((fast[k].re - re).abs() < 1e-9 && (fast[k].im - im).abs() < 1e-9, "k={k}");
        }
    }

    #[test]
    fn dft_of_constant_is_impulse() {
        let x = dft(&[7.0; DFT_LEN]);
        assert!((x[0].norm() - 7.0 * DFT_LEN as f64).abs() < 1e-9);
        assert!(x[1..].iter().all(|z| z.norm() < 1e-9));
        assert!(dft(&[]).iter().all(|z| z.norm() == 0.0 && angle(*z) == 0.0));
    }

    #[test]
    fn polyfit_recovers_line() {
        let ys: Vec<f64> = (0..10).map(|i| 100.0 + 50.0 * i as f64 / 9.0).collect();
        let c = polyfit(&ys, 3).unwrap();
        let normal = normal_equations(&ys, 3);
        for (k, want) in [100.0, 50.0, 0.0, 0.0].into_iter().enumerate() {
            assert!((c[k] - want).abs() < 1e-6, "{c:?}");
            assert!((c[k] - normal[k]).abs() < 1e-6);
        }
        assert_eq!(
            polyfit(&[500.0; 3], 3).unwrap().iter().map(|c| c.round()).collect::<Vec<_>>(),
            [500.0, 0.0, 0.0, 0.0]
        );
        let single = polyfit(&[60.0], 8).unwrap();
        assert!((single[0] - 60.0).abs() < 1e-9 && single[1..].iter().all(|c| c.abs() < 1e-9));
    }

    #[allow(clippy::needless_range_loop)]
    fn normal_equations(ys: &[f64], degree: usize) -> Vec<f64> {
        let n = ys.len();
        let m = degree + 1;
        let x: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let mut a = vec![vec![0.0; m + 1]; m];
        for r in 0..m {
            for c in 0..m {
                a[r][c] = x.iter().map(|xi| xi.powi((r + c) as i32)).sum();
            }
            a[r][m] = x.iter().zip(ys).map(|(xi, y)| xi.powi(r as i32) * y).sum();
        }
        for p in 0..m {
            let piv = (p..m).max_by(|&i, &j| a[i][p].abs().total_cmp(&a[j][p].abs())).unwrap();
            a.swap(p, piv);
            for r in 0..m {
                if r != p {
                    let f = a[r][p] / a[p][p];
                    for c in p..=m {
                        a[r][c] -= f * a[p][c];
                    }
                }
            }
        }
        (0..m).map(|r| a[r][m] / a[r][r]).collect()
    }

    #[test]
    fn gauss_slice_scores() {
        assert_eq!(gauss_slices(&[], 8), vec![0.0; 8]);
        assert_eq!(gauss_slices(&[1500.0], 1), vec![1.0]);
        let g = gauss_slices(&[10.0; 24], 8);
        let sigma: f64 = 0.75;
        let want = (1.0 + 2.0 * (-1.0 / (2.0 * sigma * sigma)).exp()) / 3.0;
        assert!(g.iter().all(|v| (v - want).abs() < 1e-12), "{g:?}");
        let one = gauss_slices(&[5.0], 8);
        assert_eq!(one.iter().filter(|v| **v == 1.0).count(), 1);
    }
}
