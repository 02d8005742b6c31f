//! Exact proximal map of the edge total variation with zero boundary data.
//!
//! Solves `min_x  1/2 sum_i (x_i - f_i)^2 + lam (|x_1| + sum_i |x_{i+1} - x_i| + |x_n|)`
//! by dynamic programming over the derivative of the partial value function.
//! That derivative is piecewise affine and non-decreasing with possible
//! jumps; each stage adds the data term, then clamps to `[-lam, lam]` and
//! records where the clamp takes effect. Backtracking clamps the successor
//! into the recorded interval. Cost is linear in `n` (amortized).

use std::collections::VecDeque;

use crate::discrete_space::{divergence_values, gradient_values, ScalarField};

#[derive(Clone, Copy, Debug)]
struct Knot {
    at: f64,
    da: f64,
    db: f64,
}

/// Derivative of a value function: affine `a x + b` left of the first
/// knot, each knot adds `da x + db` to the right of its position.
struct PiecewiseDerivative {
    knots: VecDeque<Knot>,
    left: (f64, f64),
    right: (f64, f64),
}

impl PiecewiseDerivative {
    /// `lam * sign(x)`, the subgradient of `lam |x|`.
    fn signum(lam: f64) -> Self {
        let mut knots = VecDeque::new();
        knots.push_back(Knot {
            at: 0.0,
            da: 0.0,
            db: 2.0 * lam,
        });
        Self {
            knots,
            left: (0.0, -lam),
            right: (0.0, lam),
        }
    }

    fn add_affine(&mut self, a: f64, b: f64) {
        self.left.0 += a;
        self.left.1 += b;
        self.right.0 += a;
        self.right.1 += b;
    }

    /// Adds `lam * sign(x)`.
    fn add_signum(&mut self, lam: f64) {
        self.add_affine(0.0, -lam);
        let knot = Knot {
            at: 0.0,
            da: 0.0,
            db: 2.0 * lam,
        };
        let pos = self.knots.iter().position(|k| k.at > 0.0).unwrap_or(self.knots.len());
        self.knots.insert(pos, knot);
        self.right.1 += 2.0 * lam;
    }

    /// Leftmost point where the (set-valued) derivative reaches `level`,
    /// consuming the knots left of it. Returns the point and the affine
    /// piece active just right of it.
    fn pop_left_until(&mut self, level: f64) -> (f64, (f64, f64)) {
        let (mut a, mut b) = self.left;
        let mut prev = f64::NEG_INFINITY;
        while let Some(&k) = self.knots.front() {
            let before = a * k.at + b;
            if before >= level {
                return (root_in(a, b, level, prev), (a, b));
            }
            self.knots.pop_front();
            a += k.da;
            b += k.db;
            if a * k.at + b >= level {
                return (k.at, (a, b));
            }
            prev = k.at;
        }
        (root_in(a, b, level, prev), (a, b))
    }

    /// Rightmost point where the derivative reaches `level`, consuming the
    /// knots right of it.
    fn pop_right_until(&mut self, level: f64) -> (f64, (f64, f64)) {
        let (mut a, mut b) = self.right;
        let mut next = f64::INFINITY;
        while let Some(&k) = self.knots.back() {
            let after = a * k.at + b;
            if after <= level {
                return (root_in(a, b, level, next), (a, b));
            }
            self.knots.pop_back();
            a -= k.da;
            b -= k.db;
            if a * k.at + b <= level {
                return (k.at, (a, b));
            }
            next = k.at;
        }
        (root_in(a, b, level, next), (a, b))
    }

    /// Replaces the derivative by `clamp(D, -lam, lam)` and returns the
    /// interval where no clamping occurs.
    fn clamp(&mut self, lam: f64) -> (f64, f64) {
        let (lo, (a, b)) = self.pop_left_until(-lam);
        self.knots.push_front(Knot {
            at: lo,
            da: a,
            db: b + lam,
        });
        self.left = (0.0, -lam);
        let (hi, (a, b)) = self.pop_right_until(lam);
        self.knots.push_back(Knot {
            at: hi,
            da: -a,
            db: lam - b,
        });
        self.right = (0.0, lam);
        (lo, hi)
    }

    /// Point where the derivative crosses zero.
    fn root(&mut self) -> f64 {
        self.pop_left_until(0.0).0
    }
}

/// Solution of `a x + b = level`; a flat piece resolves to its left end.
#[inline]
fn root_in(a: f64, b: f64, level: f64, fallback: f64) -> f64 {
    if a > 0.0 {
        (level - b) / a
    } else {
        fallback
    }
}

/// Minimizer of `1/2 |x - f|^2 + lam TV0(x)`, where `TV0` includes the jumps
/// to the zero boundary values.
pub fn tv_denoise_dirichlet(f: &[f64], lam: f64) -> Vec<f64> {
    let n = f.len();
    if n == 0 || lam == 0.0 {
        return f.to_vec();
    }
    let mut deriv = PiecewiseDerivative::signum(lam);
    let mut bounds = Vec::with_capacity(n.saturating_sub(1));
    for &fk in &f[..n - 1] {
        deriv.add_affine(1.0, -fk);
        bounds.push(deriv.clamp(lam));
    }
    deriv.add_affine(1.0, -f[n - 1]);
    deriv.add_signum(lam);
    let mut x = vec![0.0; n];
    x[n - 1] = deriv.root();
    for k in (0..n - 1).rev() {
        let (lo, hi) = bounds[k];
        x[k] = x[k + 1].clamp(lo, hi);
    }
    x
}

/// Result of one TV proximal step.
#[derive(Clone, Debug)]
pub struct TvProxOutcome {
    pub u: ScalarField,
    /// Edge flux `sigma` with `|sigma| <= 1` certifying optimality.
    pub flux: Vec<f64>,
    pub duality_gap: f64,
}

/// `argmin_u 1/2 |u - rhs|_h^2 + dt TV(u)` with a duality-gap certificate.
pub fn prox_tv(dt: f64, rhs: &ScalarField) -> TvProxOutcome {
    let grid = *rhs.grid();
    let h = grid.h();
    let f = rhs.values();
    let x = tv_denoise_dirichlet(f, dt / h);
    let u = ScalarField::from_vec_unchecked(grid, x);
    if dt == 0.0 {
        return TvProxOutcome {
            flux: vec![0.0; grid.n_edges()],
            u,
            duality_gap: 0.0,
        };
    }
    let flux = recover_flux(&u, rhs, dt);
    let duality_gap = tv_duality_gap(&u, rhs, dt, &flux);
    TvProxOutcome {
        u,
        flux,
        duality_gap,
    }
}

/// Dual variable from the optimality condition `u - f = dt div sigma`,
/// with the free constant fixed by the edges where `grad u != 0`.
fn recover_flux(u: &ScalarField, f: &ScalarField, dt: f64) -> Vec<f64> {
    let h = u.grid().h();
    let g = gradient_values(u.values(), h);
    let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut cumulative = Vec::with_capacity(g.len());
    let mut acc = 0.0;
    cumulative.push(0.0);
    for (ui, fi) in u.values().iter().zip(f.values()) {
        acc += h * (ui - fi) / dt;
        cumulative.push(acc);
    }
    let tol = 1e-12 * scale.max(1.0);
    let (mut sum, mut count) = (0.0, 0usize);
    for (ge, ce) in g.iter().zip(&cumulative) {
        if ge.abs() > tol {
            sum += ge.signum() - ce;
            count += 1;
        }
    }
    let offset = if count > 0 {
        sum / count as f64
    } else {
        let lo = cumulative.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = cumulative.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        -(lo + hi) / 2.0
    };
    cumulative.iter().map(|c| (c + offset).clamp(-1.0, 1.0)).collect()
}

/// Primal minus dual objective for a feasible flux.
pub fn tv_duality_gap(u: &ScalarField, f: &ScalarField, dt: f64, flux: &[f64]) -> f64 {
    let h = u.grid().h();
    let diff = u.sub(f);
    let tv: f64 = gradient_values(u.values(), h).iter().map(|g| g.abs()).sum::<f64>() * h;
    let primal = 0.5 * diff.dot_h(&diff) + dt * tv;
    let div = divergence_values(flux, h);
    let shifted: f64 = f
        .values()
        .iter()
        .zip(&div)
        .map(|(fi, di)| {
            let v = fi + dt * di;
            v * v
        })
        .sum::<f64>()
        * h;
    let dual = 0.5 * f.dot_h(f) - 0.5 * shifted;
    (primal - dual).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete_space::{total_variation, Grid1D};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn objective(x: &[f64], f: &[f64], lam: f64) -> f64 {
        let n = x.len();
        let mut tv = x[0].abs() + x[n - 1].abs();
        for w in x.windows(2) {
            tv += (w[1] - w[0]).abs();
        }
        0.5 * x.iter().zip(f).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() + lam * tv
    }

    #[test]
    fn single_node_soft_threshold() {
        assert_eq!(tv_denoise_dirichlet(&[3.0], 0.5), vec![2.0]);
        assert_eq!(tv_denoise_dirichlet(&[-0.5], 0.5), vec![0.0]);
        assert_eq!(tv_denoise_dirichlet(&[1.5], 0.0), vec![1.5]);
    }

    #[test]
    fn constant_data_shrinks_uniformly() {
        // interior jumps vanish; the two boundary jumps pull c down by 2 lam / n
        let x = tv_denoise_dirichlet(&[1.0; 4], 0.1);
        for v in &x {
            assert!((v - 0.95).abs() < 1e-14);
        }
        let x = tv_denoise_dirichlet(&[1.0; 4], 5.0);
        assert!(x.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn matches_grid_search_on_four_nodes() {
        let f = [0.7; 4];
        let lam = 0.3;
        let x = tv_denoise_dirichlet(&f, lam);
        // coarse-to-fine grid search, final spacing below 1e-4
        let mut center = [0.0; 4];
        let mut half = 1.0;
        let pts = 10i32;
        while half > 1e-5 {
            let step = half / pts as f64;
            let mut best = (f64::INFINITY, center);
            for i in -pts..=pts {
                for j in -pts..=pts {
                    for k in -pts..=pts {
                        for l in -pts..=pts {
                            let y = [
                                center[0] + i as f64 * step,
                                center[1] + j as f64 * step,
                                center[2] + k as f64 * step,
                                center[3] + l as f64 * step,
                            ];
                            let v = objective(&y, &f, lam);
                            if v < best.0 {
                                best = (v, y);
                            }
                        }
                    }
                }
            }
            center = best.1;
            half *= 0.5;
        }
        for (a, b) in x.iter().zip(center) {
            assert!((a - b).abs() < 1e-4, "{x:?} vs {center:?}");
        }
    }

    #[test]
    fn optimal_against_random_perturbations() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for trial in 0..50 {
            let n = 1 + trial % 17;
            let f: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let lam = rng.random_range(0.01..1.5);
            let x = tv_denoise_dirichlet(&f, lam);
            let best = objective(&x, &f, lam);
            for _ in 0..200 {
                let scale = 10f64.powi(-rng.random_range(1..6));
                let y: Vec<f64> = x.iter().map(|v| v + scale * rng.random_range(-1.0..1.0)).collect();
                assert!(objective(&y, &f, lam) >= best - 1e-13);
            }
        }
    }

    #[test]
    fn duality_gap_certifies_solution() {
        let grid = Grid1D::new(40, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let vals = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
            let f = ScalarField::new(grid, vals).unwrap();
            let dt = rng.random_range(1e-4..0.05);
            let out = prox_tv(dt, &f);
            assert!(out.duality_gap <= 1e-8, "gap {}", out.duality_gap);
            assert!(out.flux.iter().all(|s| s.abs() <= 1.0));
            assert!(total_variation(&out.u) <= total_variation(&f) + 1e-12);
        }
        let f = ScalarField::new(grid, vec![0.3; 40]).unwrap();
        assert_eq!(prox_tv(0.0, &f).u, f);
    }
}
