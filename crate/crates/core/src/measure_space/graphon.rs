use serde::{Deserialize, Serialize};

use super::collection::MeasureCollection;
use super::empirical::EmpiricalMeasure;
use super::grid::LabelGrid;
use crate::error::{invalid, Error, Result};

/// Interaction kernel `G: U×U → [0,1]` tabulated on a label grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Graphon {
    size: usize,
    kernel: Vec<f64>,
    /// `‖G(u_k,·)‖₁ = Σⱼ G(u_k,u_j) λⱼ`.
    row_degree: Vec<f64>,
}

/// What to do when a kernel row has zero degree.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ZeroDegree {
    #[default]
    Error,
    /// Substitute the Dirac mass at the origin.
    DiracAtOrigin,
}

impl Graphon {
    /// Tabulate `kernel(u, v)` on the grid labels.
    pub fn from_fn(grid: &LabelGrid, kernel: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let k = grid.len();
        let mut m = Vec::with_capacity(k * k);
        for &u in grid.labels() {
            for &v in grid.labels() {
                m.push(kernel(u, v));
            }
        }
        Self::from_matrix(grid, m)
    }

    pub fn from_matrix(grid: &LabelGrid, kernel: Vec<f64>) -> Result<Self> {
        let k = grid.len();
        if kernel.len() != k * k {
            return Err(Error::DimensionMismatch {
                expected: k * k,
                got: kernel.len(),
            });
        }
        if let Some(g) = kernel.iter().find(|g| !(0.0..=1.0).contains(*g)) {
            return Err(invalid(format!("graphon value {g} outside [0,1]")));
        }
        let row_degree = (0..k)
            .map(|r| {
                (0..k)
                    .map(|c| kernel[r * k + c] * grid.weight(c))
                    .sum::<f64>()
            })
            .collect();
        Ok(Self {
            size: k,
            kernel,
            row_degree,
        })
    }

    pub fn constant(grid: &LabelGrid, c: f64) -> Result<Self> {
        Self::from_fn(grid, |_, _| c)
    }

    /// `G(u, v) = 1{u = v}`: every label interacts with itself only.
    pub fn identity(grid: &LabelGrid) -> Result<Self> {
        let k = grid.len();
        let m = (0..k * k)
            .map(|i| if i / k == i % k { 1.0 } else { 0.0 })
            .collect();
        Self::from_matrix(grid, m)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn value(&self, u: usize, v: usize) -> f64 {
        self.kernel[u * self.size + v]
    }

    pub fn row_degree(&self) -> &[f64] {
        &self.row_degree
    }

    /// Normalized mixture weights `G(u,v_j) λ_j / ‖G(u,·)‖₁` of row `u`.
    pub fn mixture_weights(&self, grid: &LabelGrid, u: usize) -> Result<Vec<f64>> {
        let deg = self.row_degree[u];
        if deg <= 0.0 {
            return Err(Error::ZeroDegree { label: u });
        }
        Ok((0..self.size)
            .map(|j| self.value(u, j) * grid.weight(j) / deg)
            .collect())
    }

    /// Smallest row degree; positive iff every neighborhood is defined.
    pub fn min_degree(&self) -> f64 {
        self.row_degree.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Lipschitz factor of `μ ↦ m_G(u, μ)` w.r.t. the collection metric:
    /// `max_u (Σⱼ G(u,vⱼ)² λⱼ)^{1/2} / ‖G(u,·)‖₁` (Cauchy-Schwarz).
    pub fn mean_lipschitz(&self, grid: &LabelGrid) -> f64 {
        (0..self.size)
            .map(|u| {
                let s: f64 = (0..self.size)
                    .map(|j| self.value(u, j).powi(2) * grid.weight(j))
                    .sum();
                s.sqrt() / self.row_degree[u]
            })
            .fold(0.0, f64::max)
    }

    /// Mean of the neighborhood mixture of row `u`, from per-label means
    /// (flat `K×dim`). Linear in the means, so no atoms are touched.
    pub fn neighborhood_mean(
        &self,
        grid: &LabelGrid,
        u: usize,
        label_means: &[f64],
        dim: usize,
        out: &mut [f64],
    ) {
        let deg = self.row_degree[u];
        out.iter_mut().for_each(|o| *o = 0.0);
        for j in 0..self.size {
            let w = self.value(u, j) * grid.weight(j) / deg;
            if w == 0.0 {
                continue;
            }
            for (o, m) in out.iter_mut().zip(&label_means[j * dim..(j + 1) * dim]) {
                *o += w * m;
            }
        }
    }
}

/// `∫ G(u,v)/‖G(u,·)‖₁ μ^v λ(dv)` as an explicit weighted mixture.
pub fn graphon_neighborhood(
    graphon: &Graphon,
    mu: &MeasureCollection,
    u_index: usize,
    zero_degree: ZeroDegree,
) -> Result<EmpiricalMeasure> {
    let grid = mu.grid();
    if graphon.size() != grid.len() {
        return Err(Error::GridMismatch);
    }
    if u_index >= grid.len() {
        return Err(invalid(format!("label index {u_index} out of range")));
    }
    let dim = mu.dim();
    let weights = match graphon.mixture_weights(grid, u_index) {
        Ok(w) => w,
        Err(Error::ZeroDegree { .. }) if zero_degree == ZeroDegree::DiracAtOrigin => {
            return EmpiricalMeasure::dirac(&vec![0.0; dim]);
        }
        Err(e) => return Err(e),
    };
    let mut atoms = Vec::new();
    let mut atom_weights = Vec::new();
    for (j, m) in mu.per_label().iter().enumerate() {
        let wj = weights[j];
        if wj == 0.0 {
            continue;
        }
        atoms.extend_from_slice(m.atoms());
        atom_weights.extend(m.weights().iter().map(|w| w * wj));
    }
    let total: f64 = atom_weights.iter().sum();
    atom_weights.iter_mut().for_each(|w| *w /= total);
    EmpiricalMeasure::weighted(dim, atoms, atom_weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dirac_collection(grid: &LabelGrid, points: &[f64]) -> MeasureCollection {
        MeasureCollection::new(
            grid.clone(),
            points
                .iter()
                .map(|p| EmpiricalMeasure::dirac(&[*p]).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn constant_graphon_is_lambda_average() {
        let grid = LabelGrid::new(vec![0.2, 0.5, 0.9], vec![0.2, 0.3, 0.5]).unwrap();
        let g = Graphon::constant(&grid, 1.0).unwrap();
        let mu = dirac_collection(&grid, &[1.0, 2.0, 4.0]);
        let nb = graphon_neighborhood(&g, &mu, 1, ZeroDegree::Error).unwrap();
        let expect = 0.2 * 1.0 + 0.3 * 2.0 + 0.5 * 4.0;
        assert!((nb.mean()[0] - expect).abs() < 1e-14);
        assert!((nb.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_graphon_returns_own_measure() {
        let grid = LabelGrid::uniform(3, 1.0).unwrap();
        let g = Graphon::identity(&grid).unwrap();
        let mu = MeasureCollection::new(
            grid.clone(),
            vec![
                EmpiricalMeasure::uniform(1, vec![0.0, 1.0]).unwrap(),
                EmpiricalMeasure::uniform(1, vec![5.0, 6.0, 7.0]).unwrap(),
                EmpiricalMeasure::dirac(&[-1.0]).unwrap(),
            ],
        )
        .unwrap();
        let nb = graphon_neighborhood(&g, &mu, 1, ZeroDegree::Error).unwrap();
        assert_eq!(nb.atoms(), mu.measure(1).atoms());
        for w in nb.weights() {
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn product_graphon_mean_matches_hand_quadrature() {
        // G(u,v) = uv on {0.5, 1.0} with weights 1/2: row 0 degree
        // 0.5*(0.5*0.5 + 0.5*1.0) = 0.375, mixture weights (1/3, 2/3).
        let grid = LabelGrid::new(vec![0.5, 1.0], vec![0.5, 0.5]).unwrap();
        let g = Graphon::from_fn(&grid, |u, v| u * v).unwrap();
        let mu = dirac_collection(&grid, &[1.0, 3.0]);
        for u in 0..2 {
            let nb = graphon_neighborhood(&g, &mu, u, ZeroDegree::Error).unwrap();
            let lu = grid.label(u);
            let deg = 0.5 * lu * 0.5 + 0.5 * lu * 1.0;
            let oracle = (0.5 * lu * 0.5 * 1.0 + 0.5 * lu * 1.0 * 3.0) / deg;
            assert!((nb.mean()[0] - oracle).abs() < 1e-14);
            assert!((oracle - 7.0 / 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_degree_rows() {
        let grid = LabelGrid::uniform(2, 1.0).unwrap();
        let g = Graphon::from_matrix(&grid, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let mu = dirac_collection(&grid, &[1.0, 2.0]);
        assert!(matches!(
            graphon_neighborhood(&g, &mu, 0, ZeroDegree::Error),
            Err(Error::ZeroDegree { label: 0 })
        ));
        let d = graphon_neighborhood(&g, &mu, 0, ZeroDegree::DiracAtOrigin).unwrap();
        assert_eq!(d.atoms(), &[0.0]);
    }

    #[test]
    fn rejects_out_of_range_kernel() {
        let grid = LabelGrid::uniform(2, 1.0).unwrap();
        assert!(Graphon::from_matrix(&grid, vec![0.0, 1.5, 1.0, 1.0]).is_err());
    }
}
