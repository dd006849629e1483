//! Derivative-free minimization (Nelder–Mead simplex).
//!
//! Objectives may return `+inf` (or NaN) to mark infeasible points; those
//! vertices are simply never accepted over a finite one.

#[derive(Debug, Clone)]
pub struct NelderMead {
    pub max_evals: usize,
    /// Stop when the spread of objective values across the simplex falls below this.
    pub f_tol: f64,
    /// ... and every vertex lies within this distance of the best one.
    pub x_tol: f64,
    /// Fresh-simplex restarts from the best point after convergence.
    pub restarts: usize,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self {
            max_evals: 5_000,
            f_tol: 1e-12,
            x_tol: 1e-9,
            restarts: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub point: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

impl NelderMead {
    pub fn minimize<F>(&self, mut f: F, x0: &[f64], steps: &[f64]) -> Minimum
    where
        F: FnMut(&[f64]) -> f64,
    {
        assert_eq!(x0.len(), steps.len());
        let mut best = self.run(&mut f, x0, steps, self.max_evals);
        let mut evals = best.evals;
        for _ in 0..self.restarts {
            if evals >= self.max_evals || !best.value.is_finite() {
                break;
            }
            let local: Vec<f64> = steps.iter().map(|s| s * 0.1).collect();
            let next = self.run(&mut f, &best.point, &local, self.max_evals - evals);
            evals += next.evals;
            let improved = best.value - next.value > self.f_tol * (1.0 + best.value.abs());
            if next.value <= best.value {
                best = Minimum { evals, ..next };
            } else {
                best.evals = evals;
            }
            if !improved {
                break;
            }
        }
        best.evals = evals;
        best
    }

    fn run<F>(&self, f: &mut F, x0: &[f64], steps: &[f64], budget: usize) -> Minimum
    where
        F: FnMut(&[f64]) -> f64,
    {
        let n = x0.len();
        let (alpha, gamma, rho, shrink) = (1.0, 2.0, 0.5, 0.5);

        let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        simplex.push(x0.to_vec());
        for i in 0..n {
            let mut v = x0.to_vec();
            v[i] += steps[i];
            simplex.push(v);
        }
        let mut values: Vec<f64> = simplex.iter().map(|v| sanitize(f(v))).collect();
        let mut evals = n + 1;
        let mut converged = false;

        let mut centroid = vec![0.0; n];
        let mut trial = vec![0.0; n];
        let mut trial2 = vec![0.0; n];

        while evals < budget {
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            simplex = order.iter().map(|&i| simplex[i].clone()).collect();
            values = order.iter().map(|&i| values[i]).collect();

            let f_best = values[0];
            let f_worst = values[n];
            let spread = f_worst - f_best;
            let size = simplex[1..]
                .iter()
                .map(|v| {
                    v.iter()
                        .zip(&simplex[0])
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            if f_best.is_finite()
                && spread.abs() <= self.f_tol * (1.0 + f_best.abs())
                && size <= self.x_tol
            {
                converged = true;
                break;
            }

            centroid.iter_mut().for_each(|c| *c = 0.0);
            for v in &simplex[..n] {
                for (c, x) in centroid.iter_mut().zip(v) {
                    *c += x / n as f64;
                }
            }

            for j in 0..n {
                trial[j] = centroid[j] + alpha * (centroid[j] - simplex[n][j]);
            }
            let f_r = sanitize(f(&trial));
            evals += 1;

            if f_r < values[0] {
                for j in 0..n {
                    trial2[j] = centroid[j] + gamma * (trial[j] - centroid[j]);
                }
                let f_e = sanitize(f(&trial2));
                evals += 1;
                if f_e < f_r {
                    simplex[n].copy_from_slice(&trial2);
                    values[n] = f_e;
                } else {
                    simplex[n].copy_from_slice(&trial);
                    values[n] = f_r;
                }
                continue;
            }
            if f_r < values[n - 1] {
                simplex[n].copy_from_slice(&trial);
                values[n] = f_r;
                continue;
            }

            // contraction, outside if the reflection beat the worst vertex
            let outside = f_r < values[n];
            for j in 0..n {
                trial2[j] = if outside {
                    centroid[j] + rho * (trial[j] - centroid[j])
                } else {
                    centroid[j] + rho * (simplex[n][j] - centroid[j])
                };
            }
            let f_c = sanitize(f(&trial2));
            evals += 1;
            let accept = if outside { f_c <= f_r } else { f_c < values[n] };
            if accept {
                simplex[n].copy_from_slice(&trial2);
                values[n] = f_c;
                continue;
            }

            let best = simplex[0].clone();
            for i in 1..=n {
                for j in 0..n {
                    simplex[i][j] = best[j] + shrink * (simplex[i][j] - best[j]);
                }
                values[i] = sanitize(f(&simplex[i]));
            }
            evals += n;
        }

        let (idx, _) = values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("simplex is non-empty");
        Minimum {
            point: simplex[idx].clone(),
            value: values[idx],
            evals,
            converged,
        }
    }
}

/// Golden-section search for the minimum of a unimodal function on `[lo, hi]`.
pub fn golden_section<F>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while (hi - lo).abs() > tol {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let nm = NelderMead {
            max_evals: 20_000,
            ..Default::default()
        };
        let m = nm.minimize(
            |x| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2),
            &[-1.2, 1.0],
            &[0.5, 0.5],
        );
        assert!(m.converged);
        assert!((m.point[0] - 1.0).abs() < 1e-6, "{:?}", m);
        assert!((m.point[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn infeasible_region_is_avoided() {
        let nm = NelderMead::default();
        let m = nm.minimize(
            |x| {
                if x[0] < 0.5 {
                    f64::INFINITY
                } else {
                    (x[0] - 0.2).powi(2)
                }
            },
            &[2.0],
            &[0.5],
        );
        assert!(m.value.is_finite());
        assert!((m.point[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn golden_section_parabola() {
        let (x, fx) = golden_section(|x| (x - 0.3).powi(2) + 1.0, -2.0, 2.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-6);
        assert!((fx - 1.0).abs() < 1e-14);
    }
}
