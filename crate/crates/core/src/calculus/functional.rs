use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::measure_space::MeasureCollection;

/// Scalar function `φ(u, x)` on a label and a point of `ℝᵈ`, with analytic
/// gradient and Hessian in `x`. When `label` is set, `φ` vanishes on every
/// other label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Component {
    /// `c + ⟨l, x⟩ + ½ xᵀQx`. `quadratic` holds `d²` entries, one entry for
    /// `q·I`, or nothing.
    Quadratic {
        #[serde(default)]
        constant: f64,
        #[serde(default)]
        linear: Vec<f64>,
        #[serde(default)]
        quadratic: Vec<f64>,
        #[serde(default)]
        label: Option<usize>,
    },
    /// `A·exp(−|x − c|² / (2w²))`.
    Bump {
        amplitude: f64,
        center: Vec<f64>,
        width: f64,
        #[serde(default)]
        label: Option<usize>,
    },
}

impl Component {
    /// `x ↦ x_j`.
    pub fn coordinate(dim: usize, j: usize) -> Self {
        let mut linear = vec![0.0; dim];
        linear[j] = 1.0;
        Component::Quadratic {
            constant: 0.0,
            linear,
            quadratic: Vec::new(),
            label: None,
        }
    }

    /// `x ↦ |x|²`.
    pub fn square_norm() -> Self {
        Component::Quadratic {
            constant: 0.0,
            linear: Vec::new(),
            quadratic: vec![2.0],
            label: None,
        }
    }

    /// Restrict the support to one label.
    pub fn on_label(mut self, k: usize) -> Self {
        match &mut self {
            Component::Quadratic { label, .. } | Component::Bump { label, .. } => *label = Some(k),
        }
        self
    }

    fn label(&self) -> Option<usize> {
        match self {
            Component::Quadratic { label, .. } | Component::Bump { label, .. } => *label,
        }
    }

    fn active(&self, k: usize) -> bool {
        self.label().is_none_or(|l| l == k)
    }

    fn validate(&self, dim: usize, labels: usize) -> Result<()> {
        if let Some(l) = self.label() {
            if l >= labels {
                return Err(invalid(format!("component label {l} outside the grid")));
            }
        }
        match self {
            Component::Quadratic {
                constant,
                linear,
                quadratic,
                ..
            } => {
                if !linear.is_empty() && linear.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: linear.len(),
                    });
                }
                if !(quadratic.len() <= 1 || quadratic.len() == dim * dim) {
                    return Err(invalid("quadratic part needs 0, 1 or d² entries"));
                }
                if !constant.is_finite() || linear.iter().chain(quadratic).any(|v| !v.is_finite()) {
                    return Err(invalid("component coefficients must be finite"));
                }
            }
            Component::Bump {
                amplitude,
                center,
                width,
                ..
            } => {
                if center.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: center.len(),
                    });
                }
                if !(*width > 0.0 && width.is_finite() && amplitude.is_finite()) {
                    return Err(invalid("bump needs a finite amplitude and positive width"));
                }
            }
        }
        Ok(())
    }

    pub fn value(&self, k: usize, x: &[f64]) -> f64 {
        if !self.active(k) {
            return 0.0;
        }
        match self {
            Component::Quadratic {
                constant,
                linear,
                quadratic,
                ..
            } => {
                let mut v = *constant;
                for (l, xi) in linear.iter().zip(x) {
                    v += l * xi;
                }
                match quadratic.len() {
                    0 => {}
                    1 => v += 0.5 * quadratic[0] * x.iter().map(|a| a * a).sum::<f64>(),
                    _ => {
                        let d = x.len();
                        for i in 0..d {
                            for j in 0..d {
                                v += 0.5 * x[i] * quadratic[i * d + j] * x[j];
                            }
                        }
                    }
                }
                v
            }
            Component::Bump {
                amplitude,
                center,
                width,
                ..
            } => amplitude * (-dist_sq(x, center) / (2.0 * width * width)).exp(),
        }
    }

    /// `out += scale · ∇φ(k, x)`.
    pub fn add_gradient(&self, k: usize, x: &[f64], scale: f64, out: &mut [f64]) {
        if !self.active(k) || scale == 0.0 {
            return;
        }
        match self {
            Component::Quadratic {
                linear, quadratic, ..
            } => {
                for (o, l) in out.iter_mut().zip(linear) {
                    *o += scale * l;
                }
                match quadratic.len() {
                    0 => {}
                    1 => {
                        for (o, xi) in out.iter_mut().zip(x) {
                            *o += scale * quadratic[0] * xi;
                        }
                    }
                    _ => {
                        let d = x.len();
                        for i in 0..d {
                            let mut s = 0.0;
                            for j in 0..d {
                                s += 0.5 * (quadratic[i * d + j] + quadratic[j * d + i]) * x[j];
                            }
                            out[i] += scale * s;
                        }
                    }
                }
            }
            Component::Bump {
                amplitude,
                center,
                width,
                ..
            } => {
                let w2 = width * width;
                let e = amplitude * (-dist_sq(x, center) / (2.0 * w2)).exp();
                for ((o, xi), ci) in out.iter_mut().zip(x).zip(center) {
                    *o -= scale * e * (xi - ci) / w2;
                }
            }
        }
    }

    /// `out += scale · ∇²φ(k, x)`, row-major `d×d`.
    pub fn add_hessian(&self, k: usize, x: &[f64], scale: f64, out: &mut [f64]) {
        if !self.active(k) || scale == 0.0 {
            return;
        }
        let d = x.len();
        match self {
            Component::Quadratic { quadratic, .. } => match quadratic.len() {
                0 => {}
                1 => {
                    for i in 0..d {
                        out[i * d + i] += scale * quadratic[0];
                    }
                }
                _ => {
                    for i in 0..d {
                        for j in 0..d {
                            out[i * d + j] +=
                                scale * 0.5 * (quadratic[i * d + j] + quadratic[j * d + i]);
                        }
                    }
                }
            },
            Component::Bump {
                amplitude,
                center,
                width,
                ..
            } => {
                let w2 = width * width;
                let e = amplitude * (-dist_sq(x, center) / (2.0 * w2)).exp();
                for i in 0..d {
                    for j in 0..d {
                        let mut h = (x[i] - center[i]) * (x[j] - center[j]) / (w2 * w2);
                        if i == j {
                            h -= 1.0 / w2;
                        }
                        out[i * d + j] += scale * e * h;
                    }
                }
            }
        }
    }
}

fn dist_sq(x: &[f64], c: &[f64]) -> f64 {
    x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Outer function `F: ℝᵏ → ℝ` of cylindrical families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Outer {
    /// `c + ⟨l, m⟩ + ½ mᵀQm` with `Q` given as `k²` entries (or empty).
    Quadratic {
        #[serde(default)]
        constant: f64,
        #[serde(default)]
        linear: Vec<f64>,
        #[serde(default)]
        quadratic: Vec<f64>,
    },
    /// `s·exp(⟨w, m⟩)`.
    Exponential { scale: f64, weights: Vec<f64> },
}

impl Outer {
    fn validate(&self, k: usize) -> Result<()> {
        let ok = match self {
            Outer::Quadratic {
                constant,
                linear,
                quadratic,
            } => {
                (linear.is_empty() || linear.len() == k)
                    && (quadratic.is_empty() || quadratic.len() == k * k)
                    && constant.is_finite()
                    && linear.iter().chain(quadratic).all(|v| v.is_finite())
            }
            Outer::Exponential { scale, weights } => {
                weights.len() == k && scale.is_finite() && weights.iter().all(|v| v.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("outer function does not match {k} components")))
        }
    }

    /// `F(m)` and `∇F(m)`.
    fn eval(&self, m: &[f64]) -> (f64, Vec<f64>) {
        let k = m.len();
        match self {
            Outer::Quadratic {
                constant,
                linear,
                quadratic,
            } => {
                let mut v = *constant;
                let mut g = vec![0.0; k];
                for i in 0..k {
                    if let Some(l) = linear.get(i) {
                        v += l * m[i];
                        g[i] += l;
                    }
                }
                if !quadratic.is_empty() {
                    for i in 0..k {
                        for j in 0..k {
                            v += 0.5 * m[i] * quadratic[i * k + j] * m[j];
                            g[i] += 0.5 * (quadratic[i * k + j] + quadratic[j * k + i]) * m[j];
                        }
                    }
                }
                (v, g)
            }
            Outer::Exponential { scale, weights } => {
                let v = scale * weights.iter().zip(m).map(|(w, x)| w * x).sum::<f64>().exp();
                (v, weights.iter().map(|w| w * v).collect())
            }
        }
    }
}

/// Measure functional `μ ↦ v(μ)` on `L²_λ(P₂(ℝᵈ))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Functional {
    /// `∫_U ∫ φ(u, x) μ^u(dx) λ(du)`.
    Linear { component: Component },
    /// `∫_U F(∫φ₁(u,·)dμ^u, …, ∫φₖ(u,·)dμ^u) λ(du)`.
    CylindricalPerLabel { outer: Outer, components: Vec<Component> },
    /// `F(∫∫φ₁ dμ^u λ(du), …, ∫∫φₖ dμ^u λ(du))`.
    CylindricalOfCollection { outer: Outer, components: Vec<Component> },
    /// `∫_{Uᵏ} ∫ W(u₁,…,uₖ) Πᵢ φᵢ(uᵢ, xᵢ) Πᵢ μ^{uᵢ}(dxᵢ) λ(du₁)…λ(duₖ)`.
    /// `kernel` is a `K×K` label matrix and requires exactly two factors;
    /// without it `W ≡ 1`.
    Interaction {
        components: Vec<Component>,
        #[serde(default)]
        kernel: Option<Vec<f64>>,
    },
}

impl Functional {
    fn components(&self) -> std::slice::Iter<'_, Component> {
        match self {
            Functional::Linear { component } => std::slice::from_ref(component).iter(),
            Functional::CylindricalPerLabel { components, .. }
            | Functional::CylindricalOfCollection { components, .. }
            | Functional::Interaction { components, .. } => components.iter(),
        }
    }

    /// `true` when `v` is affine in `μ`.
    pub fn is_affine(&self) -> bool {
        match self {
            Functional::Linear { .. } => true,
            Functional::CylindricalPerLabel { outer, .. }
            | Functional::CylindricalOfCollection { outer, .. } => {
                matches!(outer, Outer::Quadratic { quadratic, .. } if quadratic.iter().all(|q| *q == 0.0))
            }
            Functional::Interaction { components, .. } => components.len() <= 1,
        }
    }

    fn validate(&self, dim: usize, labels: usize) -> Result<()> {
        for c in self.components() {
            c.validate(dim, labels)?;
        }
        match self {
            Functional::Linear { .. } => Ok(()),
            Functional::CylindricalPerLabel { outer, components }
            | Functional::CylindricalOfCollection { outer, components } => {
                if components.is_empty() {
                    return Err(invalid("cylindrical function needs at least one component"));
                }
                outer.validate(components.len())
            }
            Functional::Interaction { components, kernel } => {
                if components.is_empty() {
                    return Err(invalid("interaction function needs at least one factor"));
                }
                if let Some(w) = kernel {
                    if components.len() != 2 {
                        return Err(invalid("label kernels are supported for two factors only"));
                    }
                    if w.len() != labels * labels || w.iter().any(|v| !v.is_finite()) {
                        return Err(invalid("interaction kernel must be a finite K×K matrix"));
                    }
                }
                Ok(())
            }
        }
    }

    /// `v(μ)` and the per-label coefficients `c[k][i]` with
    /// `δv/δm(μ)(u_k, x) = Σᵢ c[k][i] φᵢ(u_k, x)`.
    fn expand(&self, mu: &MeasureCollection) -> (f64, Vec<Vec<f64>>) {
        let w = mu.grid().weights();
        let labels = mu.len();
        let comps: Vec<&Component> = self.components().collect();
        // m[k][i] = ∫ φᵢ(u_k, x) μ^k(dx)
        let m: Vec<Vec<f64>> = (0..labels)
            .map(|k| {
                comps
                    .iter()
                    .map(|c| mu.measure(k).integrate(|x| c.value(k, x)))
                    .collect()
            })
            .collect();
        let total = |i: usize| (0..labels).map(|k| w[k] * m[k][i]).sum::<f64>();
        match self {
            Functional::Linear { .. } => (total(0), vec![vec![1.0]; labels]),
            Functional::CylindricalPerLabel { outer, .. } => {
                let mut v = 0.0;
                let mut coef = Vec::with_capacity(labels);
                for k in 0..labels {
                    let (f, g) = outer.eval(&m[k]);
                    v += w[k] * f;
                    coef.push(g);
                }
                (v, coef)
            }
            Functional::CylindricalOfCollection { outer, .. } => {
                let big: Vec<f64> = (0..comps.len()).map(total).collect();
                let (f, g) = outer.eval(&big);
                (f, vec![g; labels])
            }
            Functional::Interaction { kernel: None, .. } => {
                let big: Vec<f64> = (0..comps.len()).map(total).collect();
                let v = big.iter().product();
                let g: Vec<f64> = (0..big.len())
                    .map(|i| {
                        big.iter()
                            .enumerate()
                            .filter(|(j, _)| *j != i)
                            .map(|(_, b)| b)
                            .product()
                    })
                    .collect();
                (v, vec![g; labels])
            }
            Functional::Interaction {
                kernel: Some(kern), ..
            } => {
                let mut v = 0.0;
                let mut coef = vec![vec![0.0; 2]; labels];
                for k in 0..labels {
                    for l in 0..labels {
                        let kl = kern[k * labels + l];
                        v += w[k] * w[l] * kl * m[k][0] * m[l][1];
                        coef[k][0] += w[l] * kl * m[l][1];
                        coef[l][1] += w[k] * kl * m[k][0];
                    }
                }
                (v, coef)
            }
        }
    }
}

/// Scalar time factor with analytic derivative.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TimeFactor {
    /// `Σ cᵢ tⁱ`.
    Polynomial { coefficients: Vec<f64> },
    /// `s·exp(r t)`.
    Exponential { scale: f64, rate: f64 },
    /// Cubic Hermite interpolation of tabulated values and derivatives;
    /// outside the table the end segments' cubics are extended.
    Table {
        times: Vec<f64>,
        values: Vec<f64>,
        derivatives: Vec<f64>,
    },
}

impl Default for TimeFactor {
    fn default() -> Self {
        TimeFactor::Polynomial {
            coefficients: vec![1.0],
        }
    }
}

impl TimeFactor {
    pub fn constant(c: f64) -> Self {
        TimeFactor::Polynomial {
            coefficients: vec![c],
        }
    }

    pub fn zero() -> Self {
        TimeFactor::Polynomial {
            coefficients: Vec::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            TimeFactor::Polynomial { coefficients } => {
                if coefficients.iter().any(|c| !c.is_finite()) {
                    return Err(invalid("time polynomial must be finite"));
                }
            }
            TimeFactor::Exponential { scale, rate } => {
                if !(scale.is_finite() && rate.is_finite()) {
                    return Err(invalid("time exponential must be finite"));
                }
            }
            TimeFactor::Table {
                times,
                values,
                derivatives,
            } => {
                if times.len() < 2 || values.len() != times.len() || derivatives.len() != times.len()
                {
                    return Err(invalid("time table needs ≥ 2 rows of equal length"));
                }
                if times.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(invalid("time table must be strictly increasing"));
                }
            }
        }
        Ok(())
    }

    /// Value and derivative at `t`.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        match self {
            TimeFactor::Polynomial { coefficients } => {
                let mut v = 0.0;
                let mut dv = 0.0;
                for (i, c) in coefficients.iter().enumerate().rev() {
                    v = v * t + c;
                    if i > 0 {
                        dv = dv * t + i as f64 * c;
                    }
                }
                (v, dv)
            }
            TimeFactor::Exponential { scale, rate } => {
                let v = scale * (rate * t).exp();
                (v, rate * v)
            }
            TimeFactor::Table {
                times,
                values,
                derivatives,
            } => {
                let i = times
                    .partition_point(|s| *s <= t)
                    .clamp(1, times.len() - 1)
                    - 1;
                let h = times[i + 1] - times[i];
                let s = (t - times[i]) / h;
                let (y0, y1) = (values[i], values[i + 1]);
                let (m0, m1) = (derivatives[i] * h, derivatives[i + 1] * h);
                let s2 = s * s;
                let s3 = s2 * s;
                let v = (2.0 * s3 - 3.0 * s2 + 1.0) * y0
                    + (s3 - 2.0 * s2 + s) * m0
                    + (-2.0 * s3 + 3.0 * s2) * y1
                    + (s3 - s2) * m1;
                let dv = (6.0 * s2 - 6.0 * s) * y0
                    + (3.0 * s2 - 4.0 * s + 1.0) * m0
                    + (-6.0 * s2 + 6.0 * s) * y1
                    + (3.0 * s2 - 2.0 * s) * m1;
                (v, dv / h)
            }
        }
    }
}

/// One separable term `τ(t)·v(μ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    #[serde(default)]
    pub time: TimeFactor,
    pub functional: Functional,
}

/// `v(t, μ) = Σ τᵢ(t)·vᵢ(μ) + offset(t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestFunction {
    pub dim: usize,
    pub terms: Vec<Term>,
    #[serde(default = "TimeFactor::zero")]
    pub offset: TimeFactor,
}

impl TestFunction {
    pub fn new(dim: usize, terms: Vec<Term>) -> Self {
        Self {
            dim,
            terms,
            offset: TimeFactor::zero(),
        }
    }

    /// Time-independent single functional.
    pub fn single(dim: usize, functional: Functional) -> Self {
        Self::new(
            dim,
            vec![Term {
                time: TimeFactor::default(),
                functional,
            }],
        )
    }

    pub fn with_offset(mut self, offset: TimeFactor) -> Self {
        self.offset = offset;
        self
    }

    pub fn validate(&self, labels: usize) -> Result<()> {
        if self.dim == 0 {
            return Err(invalid("test function dimension must be positive"));
        }
        self.offset.validate()?;
        for term in &self.terms {
            term.time.validate()?;
            term.functional.validate(self.dim, labels)?;
        }
        Ok(())
    }

    pub fn is_affine(&self) -> bool {
        self.terms.iter().all(|t| t.functional.is_affine())
    }

    /// Everything needed to evaluate `v`, `∂ₜv` and the flat derivative with
    /// its `x`-derivatives at `(t, μ)`.
    pub fn prepare(&self, t: f64, mu: &MeasureCollection) -> Result<Prepared<'_>> {
        if mu.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: mu.dim(),
            });
        }
        self.validate(mu.len())?;
        let (mut value, mut time_derivative) = self.offset.eval(t);
        let mut pieces = Vec::with_capacity(self.terms.len());
        for term in &self.terms {
            let (tau, dtau) = term.time.eval(t);
            let (v, coef) = term.functional.expand(mu);
            value += tau * v;
            time_derivative += dtau * v;
            let comps: Vec<&Component> = term.functional.components().collect();
            pieces.push((comps, tau, coef));
        }
        Ok(Prepared {
            dim: self.dim,
            value,
            time_derivative,
            pieces,
        })
    }

    pub fn evaluate(&self, t: f64, mu: &MeasureCollection) -> Result<f64> {
        Ok(self.prepare(t, mu)?.value)
    }

    /// `δv/δm(t, μ)(u_k, x)`.
    pub fn flat_derivative(&self, t: f64, mu: &MeasureCollection, k: usize, x: &[f64]) -> Result<f64> {
        let p = self.prepare(t, mu)?;
        check_point(&p, mu, k, x)?;
        Ok(p.flat(k, x))
    }

    /// `∂ₓ δv/δm(t, μ)(u_k, x)`.
    pub fn grad_x_flat(&self, t: f64, mu: &MeasureCollection, k: usize, x: &[f64]) -> Result<Vec<f64>> {
        let p = self.prepare(t, mu)?;
        check_point(&p, mu, k, x)?;
        let mut g = vec![0.0; self.dim];
        p.add_gradient(k, x, 1.0, &mut g);
        Ok(g)
    }

    /// `∂ₓ² δv/δm(t, μ)(u_k, x)`, row-major.
    pub fn hess_x_flat(&self, t: f64, mu: &MeasureCollection, k: usize, x: &[f64]) -> Result<Vec<f64>> {
        let p = self.prepare(t, mu)?;
        check_point(&p, mu, k, x)?;
        let mut h = vec![0.0; self.dim * self.dim];
        p.add_hessian(k, x, 1.0, &mut h);
        Ok(h)
    }
}

fn check_point(p: &Prepared, mu: &MeasureCollection, k: usize, x: &[f64]) -> Result<()> {
    if k >= mu.len() {
        return Err(invalid(format!("label index {k} outside the grid")));
    }
    if x.len() != p.dim {
        return Err(Error::DimensionMismatch {
            expected: p.dim,
            got: x.len(),
        });
    }
    Ok(())
}

type Piece<'a> = (Vec<&'a Component>, f64, Vec<Vec<f64>>);

/// A test function frozen at `(t, μ)`.
#[derive(Debug)]
pub struct Prepared<'a> {
    dim: usize,
    pub value: f64,
    pub time_derivative: f64,
    pieces: Vec<Piece<'a>>,
}

impl Prepared<'_> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn flat(&self, k: usize, x: &[f64]) -> f64 {
        let mut v = 0.0;
        for (comps, tau, coef) in &self.pieces {
            for (c, a) in comps.iter().zip(&coef[k]) {
                v += tau * a * c.value(k, x);
            }
        }
        v
    }

    pub fn add_gradient(&self, k: usize, x: &[f64], scale: f64, out: &mut [f64]) {
        for (comps, tau, coef) in &self.pieces {
            for (c, a) in comps.iter().zip(&coef[k]) {
                c.add_gradient(k, x, scale * tau * a, out);
            }
        }
    }

    pub fn add_hessian(&self, k: usize, x: &[f64], scale: f64, out: &mut [f64]) {
        for (comps, tau, coef) in &self.pieces {
            for (c, a) in comps.iter().zip(&coef[k]) {
                c.add_hessian(k, x, scale * tau * a, out);
            }
        }
    }

    /// `⟨δv/δm, ν − μ⟩ = ∫_U ∫ δv/δm(u, x) (ν^u − μ^u)(dx) λ(du)`.
    pub fn pairing(&self, mu: &MeasureCollection, nu: &MeasureCollection) -> f64 {
        let w = mu.grid().weights();
        (0..mu.len())
            .map(|k| {
                let a = nu.measure(k).integrate(|x| self.flat(k, x));
                let b = mu.measure(k).integrate(|x| self.flat(k, x));
                w[k] * (a - b)
            })
            .sum()
    }
}
