//! Linear-quadratic graphon benchmark with a Riccati oracle.
//!
//! Dynamics `dX = a dt + σ₀ dW` on a scalar state, running cost
//! `½a² + ½c(u)(x − m_G(u, μ))²`, no terminal cost. Splitting each label
//! into its mean `m_k` and centered part, the value is
//!
//! ```text
//! V(t, μ) = Σ_k λ_k ½ p_k(t) Var(μ^k) + ½ mᵀ Π(t) m + r(t)
//! p_k = √c_k tanh(√c_k (T − t))
//! Π' = Π Λ⁻¹ Π − DᵀΛCD,  Π(T) = 0,  D = I − A
//! r  = ½σ₀² Σ_k λ_k ln cosh(√c_k (T − t))
//! ```
//!
//! with `A` the row-normalized neighborhood weights, and the optimal feedback
//! is `a = −p_k (x − m_k) − (Λ⁻¹Π m)_k`.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::residual::CandidateValue;
use crate::calculus::{Component, Functional, Outer, Term, TestFunction, TimeFactor};
use crate::dynamics::{ActionSpace, MeanField, Policy, PolynomialModel};
use crate::error::{invalid, Result};
use crate::measure_space::io::fmt_f64;
use crate::measure_space::{Graphon, LabelGrid, MeasureCollection};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LqParams {
    /// `c(u_k)` per label.
    pub tracking: Vec<f64>,
    pub sigma0: f64,
    pub horizon: f64,
    #[serde(default = "default_oracle_steps")]
    pub oracle_steps: usize,
}

fn default_oracle_steps() -> usize {
    4000
}

#[derive(Debug)]
struct Tables {
    times: Vec<f64>,
    /// Per node, row-major `K×K`.
    mean_matrix: Vec<Vec<f64>>,
    mean_matrix_rate: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct LqBenchmark {
    grid: LabelGrid,
    graphon: Graphon,
    params: LqParams,
    /// `DᵀΛCD`, row-major.
    cost_matrix: Vec<f64>,
    tables: Arc<Tables>,
}

/// `ln cosh y` without overflow.
fn ln_cosh(y: f64) -> f64 {
    let a = y.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

fn riccati_rate(pi: &[f64], inv_weights: &[f64], q: &[f64], out: &mut [f64]) {
    let k = inv_weights.len();
    for i in 0..k {
        for j in 0..k {
            let mut s = 0.0;
            for l in 0..k {
                s += pi[i * k + l] * inv_weights[l] * pi[l * k + j];
            }
            out[i * k + j] = s - q[i * k + j];
        }
    }
}

pub fn build_lq_benchmark(grid: &LabelGrid, graphon: &Graphon, params: &LqParams) -> Result<LqBenchmark> {
    let k = grid.len();
    if graphon.size() != k {
        return Err(invalid("graphon size differs from the label grid"));
    }
    if params.tracking.len() != k || params.tracking.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
        return Err(invalid("one nonnegative tracking weight per label expected"));
    }
    if !(params.sigma0.is_finite() && params.sigma0 >= 0.0) {
        return Err(invalid("sigma0 must be nonnegative"));
    }
    if !(params.horizon.is_finite() && params.horizon > 0.0) {
        return Err(invalid("horizon must be positive"));
    }
    if params.oracle_steps < 4 {
        return Err(invalid("oracle_steps must be at least 4"));
    }
    let w = grid.weights();
    let mut d = vec![0.0; k * k];
    for u in 0..k {
        let row = graphon.mixture_weights(grid, u)?;
        for v in 0..k {
            d[u * k + v] = if u == v { 1.0 } else { 0.0 } - row[v];
        }
    }
    let mut cost_matrix = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            cost_matrix[i * k + j] = (0..k)
                .map(|l| d[l * k + i] * w[l] * params.tracking[l] * d[l * k + j])
                .sum();
        }
    }
    let inv_w: Vec<f64> = w.iter().map(|x| 1.0 / x).collect();

    // RK4 in reversed time s = T − t: dΠ/ds = −rate(Π).
    let n = params.oracle_steps;
    let h = params.horizon / n as f64;
    let f = |pi: &[f64], out: &mut [f64]| {
        riccati_rate(pi, &inv_w, &cost_matrix, out);
        out.iter_mut().for_each(|v| *v = -*v);
    };
    let mut pi = vec![0.0; k * k];
    let mut mean_matrix = vec![Vec::new(); n + 1];
    mean_matrix[n] = pi.clone();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![0.0; k * k], vec![0.0; k * k], vec![0.0; k * k], vec![0.0; k * k], vec![0.0; k * k]);
    for step in 0..n {
        f(&pi, &mut k1);
        for i in 0..k * k {
            tmp[i] = pi[i] + 0.5 * h * k1[i];
        }
        f(&tmp, &mut k2);
        for i in 0..k * k {
            tmp[i] = pi[i] + 0.5 * h * k2[i];
        }
        f(&tmp, &mut k3);
        for i in 0..k * k {
            tmp[i] = pi[i] + h * k3[i];
        }
        f(&tmp, &mut k4);
        for i in 0..k * k {
            pi[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        // Symmetrize against round-off drift.
        for i in 0..k {
            for j in i + 1..k {
                let s = 0.5 * (pi[i * k + j] + pi[j * k + i]);
                pi[i * k + j] = s;
                pi[j * k + i] = s;
            }
        }
        mean_matrix[n - step - 1] = pi.clone();
    }
    let mean_matrix_rate = mean_matrix
        .iter()
        .map(|p| {
            let mut r = vec![0.0; k * k];
            riccati_rate(p, &inv_w, &cost_matrix, &mut r);
            r
        })
        .collect();
    let times = (0..=n).map(|i| i as f64 * h).collect();
    Ok(LqBenchmark {
        grid: grid.clone(),
        graphon: graphon.clone(),
        params: params.clone(),
        cost_matrix,
        tables: Arc::new(Tables {
            times,
            mean_matrix,
            mean_matrix_rate,
        }),
    })
}

impl Tables {
    /// Hermite interpolation of entry `e` of the mean matrix.
    fn entry(&self, e: usize, t: f64) -> f64 {
        let n = self.times.len();
        let i = self.times.partition_point(|s| *s <= t).clamp(1, n - 1) - 1;
        let h = self.times[i + 1] - self.times[i];
        let s = (t - self.times[i]) / h;
        let (y0, y1) = (self.mean_matrix[i][e], self.mean_matrix[i + 1][e]);
        let (m0, m1) = (self.mean_matrix_rate[i][e] * h, self.mean_matrix_rate[i + 1][e] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * m0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * m1
    }
}

impl LqBenchmark {
    pub fn grid(&self) -> &LabelGrid {
        &self.grid
    }

    pub fn graphon(&self) -> &Graphon {
        &self.graphon
    }

    pub fn params(&self) -> &LqParams {
        &self.params
    }

    pub fn times(&self) -> &[f64] {
        &self.tables.times
    }

    /// `DᵀΛCD`.
    pub fn cost_matrix(&self) -> &[f64] {
        &self.cost_matrix
    }

    /// Coefficient model of the benchmark.
    pub fn model(&self, action_space: ActionSpace) -> Result<PolynomialModel> {
        PolynomialModel::graphon_lq(
            &self.grid,
            self.graphon.clone(),
            &self.params.tracking,
            self.params.sigma0,
            action_space,
        )
    }

    /// `p_k(t)` and `p_k'(t)`.
    pub fn variance_gain(&self, k: usize, t: f64) -> (f64, f64) {
        let c = self.params.tracking[k];
        let sc = c.sqrt();
        let p = sc * (sc * (self.params.horizon - t)).tanh();
        (p, p * p - c)
    }

    /// `r(t)` and `r'(t)`.
    pub fn offset(&self, t: f64) -> (f64, f64) {
        let s2 = self.params.sigma0 * self.params.sigma0;
        let mut r = 0.0;
        let mut dr = 0.0;
        for (k, w) in self.grid.weights().iter().enumerate() {
            let sc = self.params.tracking[k].sqrt();
            r += 0.5 * s2 * w * ln_cosh(sc * (self.params.horizon - t));
            dr -= 0.5 * s2 * w * self.variance_gain(k, t).0;
        }
        (r, dr)
    }

    /// `Π(t)` row-major.
    pub fn mean_matrix(&self, t: f64) -> Vec<f64> {
        let k = self.grid.len();
        (0..k * k).map(|e| self.tables.entry(e, t)).collect()
    }

    /// Oracle value `V(t, μ)` straight from the closed form.
    pub fn value(&self, t: f64, mu: &MeasureCollection) -> Result<f64> {
        if mu.dim() != 1 || mu.grid() != &self.grid {
            return Err(invalid("benchmark collections are scalar and live on the benchmark grid"));
        }
        let k = self.grid.len();
        let w = self.grid.weights();
        let m = mu.label_means();
        let pi = self.mean_matrix(t);
        let mut v = self.offset(t).0;
        for a in 0..k {
            let var = mu.measure(a).variance();
            v += w[a] * 0.5 * self.variance_gain(a, t).0 * var;
            for b in 0..k {
                v += 0.5 * m[a] * pi[a * k + b] * m[b];
            }
        }
        Ok(v)
    }

    /// Max over table nodes of the Riccati defect: the 5-point derivative
    /// of the tabulated `Π` and of the closed-form `p_k` against their
    /// right-hand sides.
    pub fn riccati_residual(&self) -> f64 {
        let t = &self.tables;
        let n = t.times.len();
        let h = t.times[1] - t.times[0];
        let kk = self.grid.len();
        let mut worst = 0.0f64;
        for i in 2..n - 2 {
            for e in 0..kk * kk {
                let y = |j: usize| t.mean_matrix[j][e];
                let fd = (-y(i + 2) + 8.0 * y(i + 1) - 8.0 * y(i - 1) + y(i - 2)) / (12.0 * h);
                worst = worst.max((fd - t.mean_matrix_rate[i][e]).abs());
            }
            for k in 0..kk {
                let p = |j: usize| self.variance_gain(k, t.times[j]).0;
                let fd = (-p(i + 2) + 8.0 * p(i + 1) - 8.0 * p(i - 1) + p(i - 2)) / (12.0 * h);
                worst = worst.max((fd - self.variance_gain(k, t.times[i]).1).abs());
            }
        }
        worst
    }

    fn table(&self, f: impl Fn(f64) -> (f64, f64)) -> TimeFactor {
        let (values, derivatives) = self.tables.times.iter().map(|t| f(*t)).unzip();
        TimeFactor::Table {
            times: self.tables.times.clone(),
            values,
            derivatives,
        }
    }

    /// The oracle value as a smooth test function.
    pub fn candidate(&self) -> CandidateValue {
        let k = self.grid.len();
        let w = self.grid.weights();
        let mut terms = Vec::new();
        let x_on = |l: usize, scale: f64| {
            Component::Quadratic {
                constant: 0.0,
                linear: vec![scale],
                quadratic: Vec::new(),
                label: None,
            }
            .on_label(l)
        };
        for a in 0..k {
            if self.params.tracking[a] == 0.0 {
                continue;
            }
            terms.push(Term {
                time: self.table(|t| {
                    let (p, dp) = self.variance_gain(a, t);
                    (0.5 * p, 0.5 * dp)
                }),
                // F(m₁, m₂) = m₂ − m₁² on (∫x, ∫x²) is the label variance.
                functional: Functional::CylindricalPerLabel {
                    outer: Outer::Quadratic {
                        constant: 0.0,
                        linear: vec![0.0, 1.0],
                        quadratic: vec![-2.0, 0.0, 0.0, 0.0],
                    },
                    components: vec![x_on(a, 1.0), Component::square_norm().on_label(a)],
                },
            });
        }
        for a in 0..k {
            for b in a..k {
                let e = a * k + b;
                let factor = if a == b { 0.5 } else { 1.0 };
                let rates = &self.tables.mean_matrix_rate;
                let values = &self.tables.mean_matrix;
                if values.iter().all(|p| p[e] == 0.0) {
                    continue;
                }
                terms.push(Term {
                    time: TimeFactor::Table {
                        times: self.tables.times.clone(),
                        values: values.iter().map(|p| factor * p[e]).collect(),
                        derivatives: rates.iter().map(|r| factor * r[e]).collect(),
                    },
                    // M_a·M_b with M_a = ∫_U ∫ x 1{u = a}/λ_a μ^u(dx) λ(du) = m_a.
                    functional: Functional::CylindricalOfCollection {
                        outer: Outer::Quadratic {
                            constant: 0.0,
                            linear: Vec::new(),
                            quadratic: vec![0.0, 1.0, 1.0, 0.0],
                        },
                        components: vec![x_on(a, 1.0 / w[a]), x_on(b, 1.0 / w[b])],
                    },
                });
            }
        }
        let function = TestFunction::new(1, terms).with_offset(self.table(|t| self.offset(t)));
        CandidateValue::new(function, "Riccati value of the LQ graphon benchmark")
    }

    /// Optimal feedback `a = −p_k(t)(x − m_k) − (Λ⁻¹Π(t)m)_k`, plus `shift`.
    pub fn feedback(&self, shift: f64) -> Policy {
        let this = self.clone();
        Policy::feedback(move |k: usize, t: f64, x: &[f64], env: &MeanField, out: &mut [f64]| {
            let kk = this.grid.len();
            let m = env.state_means();
            let mut s = 0.0;
            for l in 0..kk {
                s += this.tables.entry(k * kk + l, t) * m[l];
            }
            let p = this.variance_gain(k, t).0;
            out[0] = -p * (x[0] - m[k]) - s / this.grid.weight(k) + shift;
        })
    }

    /// Oracle trajectories every `every` table nodes: time, `p_k`, upper
    /// triangle of `Π`, `r`.
    pub fn write_oracle_csv<W: Write>(&self, out: W, every: usize) -> Result<()> {
        let k = self.grid.len();
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec!["time".to_string()];
        header.extend((0..k).map(|a| format!("p_{a}")));
        for a in 0..k {
            for b in a..k {
                header.push(format!("pi_{a}_{b}"));
            }
        }
        header.push("offset".into());
        wtr.write_record(&header)?;
        let n = self.tables.times.len();
        let mut rows: Vec<usize> = (0..n).step_by(every.max(1)).collect();
        if rows.last() != Some(&(n - 1)) {
            rows.push(n - 1);
        }
        for i in rows {
            let t = self.tables.times[i];
            let mut rec = vec![fmt_f64(t)];
            rec.extend((0..k).map(|a| fmt_f64(self.variance_gain(a, t).0)));
            for a in 0..k {
                for b in a..k {
                    rec.push(fmt_f64(self.tables.mean_matrix[i][a * k + b]));
                }
            }
            rec.push(fmt_f64(self.offset(t).0));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}
