//! Derivative-free minimizers used as references for the closed forms.
//!
//! They only assume the function is unimodal on the searched interval (or,
//! for the grid variants, that the grid resolves its basins), never its
//! algebraic form.

use nalgebra::{DMatrix, DVector};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search on `[lo, hi]` down to a relative width `tol`;
/// returns the better interior point.
pub fn golden_section<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if hi - lo <= tol * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        x1
    } else {
        x2
    }
}

/// Expands from `x0` in the downhill direction until the function rises,
/// staying inside `[lo, hi]`. The returned interval contains a minimizer of
/// any function that is unimodal on the domain.
pub fn bracket<F: Fn(f64) -> f64>(f: &F, x0: f64, step: f64, lo: f64, hi: f64) -> (f64, f64) {
    let clamp = |x: f64| x.clamp(lo, hi);
    let a0 = clamp(x0);
    let fa = f(a0);
    let mut dir = step.abs().max(1e-12);
    let mut b = clamp(a0 + dir);
    let mut fb = f(b);
    if fb > fa || b == a0 {
        dir = -dir;
        let c = clamp(a0 + dir);
        let fc = f(c);
        if fc >= fa || c == a0 {
            let span = step.abs();
            return (clamp(a0 - span), clamp(a0 + span));
        }
        b = c;
        fb = fc;
    }
    let mut a = a0;
    for _ in 0..400 {
        dir *= 2.0;
        let c = clamp(b + dir);
        let fc = f(c);
        if fc > fb || c == b {
            return (a.min(c), a.max(c));
        }
        a = b;
        b = c;
        fb = fc;
    }
    (a.min(b), a.max(b))
}

/// Three-point parabolic step around `x`, kept only if it lowers `f`. Exact
/// for quadratics, so it removes the flat-bottom imprecision of golden search.
pub fn parabolic_polish<F: Fn(f64) -> f64>(f: &F, mut x: f64, h: f64, lo: f64, hi: f64) -> f64 {
    for scale in [1.0, 1e-2] {
        let h = h * scale;
        if !(x - h >= lo && x + h <= hi) {
            continue;
        }
        let (fm, f0, fp) = (f(x - h), f(x), f(x + h));
        let curv = fp - 2.0 * f0 + fm;
        if curv > 0.0 {
            let cand = (x - h * (fp - fm) / (2.0 * curv)).clamp(lo, hi);
            if f(cand) <= f0 {
                x = cand;
            }
        }
    }
    x
}

/// Minimizes a function of one variable over `[lo, hi]` (either end may be
/// infinite). Finite intervals are scanned on `grid` points first; otherwise
/// the search brackets from `start`.
pub fn minimize_1d<F: Fn(f64) -> f64>(f: &F, start: f64, lo: f64, hi: f64, grid: usize) -> f64 {
    minimize_1d_tol(f, start, lo, hi, grid, 1e-14)
}

/// [`minimize_1d`] with a coarser golden-section stopping width.
pub fn minimize_1d_tol<F: Fn(f64) -> f64>(f: &F, start: f64, lo: f64, hi: f64, grid: usize, tol: f64) -> f64 {
    let (a, b) = if lo.is_finite() && hi.is_finite() && grid >= 2 {
        let step = (hi - lo) / (grid - 1) as f64;
        let mut best = (0, f64::INFINITY);
        for k in 0..grid {
            let v = f(lo + k as f64 * step);
            if v < best.1 {
                best = (k, v);
            }
        }
        let k = best.0 as f64;
        ((lo + (k - 1.0) * step).max(lo), (lo + (k + 1.0) * step).min(hi))
    } else {
        let scale = 0.1 * (1.0 + start.abs());
        bracket(f, start, scale, lo, hi)
    };
    let x = golden_section(f, a, b, tol);
    let h = ((b - a) * 1e-3).max(1e-7 * (1.0 + x.abs()));
    parabolic_polish(f, x, h, lo, hi)
}

/// Minimizes a `2π`-periodic function: scans `grid` points of one period,
/// then refines around the best one without clamping, so a minimizer near
/// the seam is not cut off.
pub fn minimize_periodic<F: Fn(f64) -> f64>(f: &F, grid: usize, tol: f64) -> f64 {
    let step = std::f64::consts::TAU / grid.max(3) as f64;
    let mut best = (0.0, f64::INFINITY);
    for k in 0..grid.max(3) {
        let t = -std::f64::consts::PI + k as f64 * step;
        let v = f(t);
        if v < best.1 {
            best = (t, v);
        }
    }
    let (lo, hi) = (best.0 - step, best.0 + step);
    let x = golden_section(f, lo, hi, tol);
    let x = parabolic_polish(f, x, 1e-3 * step, lo, hi);
    (x + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI
}

/// Cyclic coordinate descent over the box `[lo, hi]^n`. Converges to the
/// global minimizer of a convex function.
pub fn coordinate_descent_box<F: Fn(&[f64]) -> f64>(f: &F, mut x: Vec<f64>, lo: f64, hi: f64) -> Vec<f64> {
    for _ in 0..2000 {
        let mut moved = 0.0f64;
        for i in 0..x.len() {
            let t = minimize_1d(
                &|t| {
                    let mut y = x.clone();
                    y[i] = t;
                    f(&y)
                },
                x[i],
                lo,
                hi,
                65,
            );
            moved = moved.max((t - x[i]).abs());
            x[i] = t;
        }
        if moved < 1e-12 {
            break;
        }
    }
    x
}

/// Minimizes a convex function over `[lo, hi]^n` by visiting every face of
/// the box: each coordinate is pinned to a bound or left free, the free ones
/// are solved by [`newton_fd`], and the best feasible point wins. Exact for
/// convex quadratics; `3^n` faces, so only for small `n`.
pub fn box_face_minimizer<F: Fn(&[f64]) -> f64>(f: &F, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    assert!(n <= 8, "face enumeration is exponential in the dimension");
    let slack = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
    let mut best = (f64::INFINITY, vec![lo; n]);
    for code in 0..3usize.pow(n as u32) {
        let mut kind = Vec::with_capacity(n);
        let mut c = code;
        for _ in 0..n {
            kind.push(c % 3);
            c /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| kind[i] == 2).collect();
        let mut x: Vec<f64> = kind.iter().map(|&k| if k == 0 { lo } else if k == 1 { hi } else { 0.5 * (lo + hi) }).collect();
        if !free.is_empty() {
            let sub = |z: &[f64]| {
                let mut y = x.clone();
                for (&i, &v) in free.iter().zip(z) {
                    y[i] = v;
                }
                f(&y)
            };
            let z = newton_fd(&sub, free.iter().map(|&i| x[i]).collect(), 1e-3 * (hi - lo), 6);
            if z.iter().any(|&v| v < lo - slack || v > hi + slack) {
                continue;
            }
            for (&i, &v) in free.iter().zip(&z) {
                x[i] = v.clamp(lo, hi);
            }
        }
        let v = f(&x);
        if v < best.0 {
            best = (v, x);
        }
    }
    best.1
}

/// Newton's method with central-difference gradient and Hessian. One step
/// is exact for a quadratic up to the rounding of the differences.
pub fn newton_fd<F: Fn(&[f64]) -> f64>(f: &F, mut x: Vec<f64>, h: f64, steps: usize) -> Vec<f64> {
    let n = x.len();
    let eval = |x: &[f64], d: &[(usize, f64)]| {
        let mut y = x.to_vec();
        for &(i, v) in d {
            y[i] += v;
        }
        f(&y)
    };
    for _ in 0..steps {
        let f0 = f(&x);
        let mut g = DVector::zeros(n);
        let mut hess = DMatrix::zeros(n, n);
        for i in 0..n {
            let fp = eval(&x, &[(i, h)]);
            let fm = eval(&x, &[(i, -h)]);
            g[i] = (fp - fm) / (2.0 * h);
            hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
            for j in 0..i {
                let v = (eval(&x, &[(i, h), (j, h)]) - eval(&x, &[(i, h), (j, -h)]) - eval(&x, &[(i, -h), (j, h)])
                    + eval(&x, &[(i, -h), (j, -h)]))
                    / (4.0 * h * h);
                hess[(i, j)] = v;
                hess[(j, i)] = v;
            }
        }
        let Some(step) = hess.lu().solve(&g) else { break };
        let cand: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a - s).collect();
        if f(&cand) <= f0 {
            x = cand;
        } else {
            break;
        }
    }
    x
}

/// Minimizes `f` on the unit sphere of `R^n` by projected gradient descent
/// with central-difference gradients and backtracking.
pub fn sphere_descent<F: Fn(&[f64]) -> f64>(f: &F, start: Vec<f64>) -> Vec<f64> {
    let unit = |v: &[f64]| {
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.iter().map(|a| a / n).collect::<Vec<f64>>()
    };
    let mut x = unit(&start);
    let mut fx = f(&x);
    let mut step = 1.0;
    let h = 1e-6;
    for _ in 0..20_000 {
        let mut g: Vec<f64> = (0..x.len())
            .map(|i| {
                let mut p = x.clone();
                let mut m = x.clone();
                p[i] += h;
                m[i] -= h;
                (f(&p) - f(&m)) / (2.0 * h)
            })
            .collect();
        let radial: f64 = g.iter().zip(&x).map(|(a, b)| a * b).sum();
        for (gi, xi) in g.iter_mut().zip(&x) {
            *gi -= radial * xi;
        }
        let gn = g.iter().map(|a| a * a).sum::<f64>().sqrt();
        if gn < 1e-11 {
            break;
        }
        let mut accepted = false;
        while step > 1e-18 {
            let cand = unit(&x.iter().zip(&g).map(|(a, b)| a - step * b).collect::<Vec<f64>>());
            let fc = f(&cand);
            if fc < fx {
                x = cand;
                fx = fc;
                step *= 2.0;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    x
}
