//! Fisher-criterion spatiotemporal filters from between/within-class scatter.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{invalid, Error, Result};

/// `acc += scale * m mᵀ`.
pub(crate) fn add_gram(acc: &mut DMatrix<f64>, m: &DMatrix<f64>, scale: f64) {
    acc.gemm(scale, m, &m.transpose(), 1.0);
}

/// `H_b H_bᵀ` and `H_w H_wᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scatter {
    pub between: DMatrix<f64>,
    pub within: DMatrix<f64>,
}

impl Scatter {
    /// Builds both scatters from labelled trials. `H_b` stacks `(X̄_n - X̄)/√N_t` and
    /// `H_w` stacks `(X_i - X̄_class(i))/√N`, with `X̄` the mean of the class means.
    pub fn from_trials(trials: &[DMatrix<f64>], labels: &[usize]) -> Result<Scatter> {
        if trials.len() != labels.len() {
            return invalid("one label per trial required");
        }
        let first = trials.first().ok_or_else(|| Error::InvalidArgument("no trials".into()))?;
        let shape = first.shape();
        if trials.iter().any(|t| t.shape() != shape) {
            return invalid("trials differ in shape");
        }
        if trials.iter().any(|t| t.iter().any(|v| !v.is_finite())) {
            return invalid("trials contain non-finite values");
        }
        let mut groups: BTreeMap<usize, Vec<&DMatrix<f64>>> = BTreeMap::new();
        for (t, &l) in trials.iter().zip(labels) {
            groups.entry(l).or_default().push(t);
        }
        if groups.len() < 2 {
            return invalid("at least two classes are required");
        }
        let dim = shape.0;
        let means: Vec<DMatrix<f64>> = groups
            .values()
            .map(|g| g.iter().fold(DMatrix::zeros(shape.0, shape.1), |a, t| a + *t) / g.len() as f64)
            .collect();
        let grand = means.iter().fold(DMatrix::zeros(shape.0, shape.1), |a, m| a + m) / means.len() as f64;
        let mut between = DMatrix::zeros(dim, dim);
        for m in &means {
            add_gram(&mut between, &(m - &grand), 1.0 / means.len() as f64);
        }
        let mut within = DMatrix::zeros(dim, dim);
        for (g, m) in groups.values().zip(&means) {
            for t in g {
                add_gram(&mut within, &(*t - m), 1.0 / trials.len() as f64);
            }
        }
        Ok(Scatter { between, within })
    }

    pub fn dim(&self) -> usize {
        self.between.nrows()
    }

    /// `H_w H_wᵀ + ε I'` with `I' = tr(H_w H_wᵀ)/dim · I` (plain `I` when the trace is zero).
    pub fn regularized_within(&self, ridge: f64) -> DMatrix<f64> {
        let dim = self.dim();
        let tr = self.within.trace();
        let scale = if tr > 0.0 { tr / dim as f64 } else { 1.0 };
        &self.within + DMatrix::identity(dim, dim) * (ridge * scale)
    }
}

/// Leading generalised eigenvectors, eigenvalues descending, unit-norm columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherFilters {
    pub filters: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
}

pub fn solve_fisher(scatter: &Scatter, n_components: usize, ridge: f64) -> Result<FisherFilters> {
    let dim = scatter.dim();
    if n_components == 0 || n_components > dim {
        return invalid(format!("cannot keep {n_components} components of a {dim}-dim problem"));
    }
    if !(ridge >= 0.0) {
        return invalid("ridge must be non-negative");
    }
    if scatter.between.iter().chain(scatter.within.iter()).any(|v| !v.is_finite()) {
        return invalid("scatter matrices contain non-finite values");
    }
    let b = scatter.regularized_within(ridge);
    let chol = b
        .cholesky()
        .ok_or_else(|| Error::NumericalFailure("within-class scatter is not positive definite".into()))?;
    let l = chol.l();
    // C = L⁻¹ S_b L⁻ᵀ
    let left = l
        .solve_lower_triangular(&scatter.between)
        .ok_or_else(|| Error::NumericalFailure("triangular solve failed".into()))?;
    let c = l
        .solve_lower_triangular(&left.transpose())
        .ok_or_else(|| Error::NumericalFailure("triangular solve failed".into()))?;
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap_or(std::cmp::Ordering::Equal));
    let order = &order[..n_components];
    let v = eig.eigenvectors.select_columns(order);
    let mut w = l
        .transpose()
        .solve_upper_triangular(&v)
        .ok_or_else(|| Error::NumericalFailure("triangular solve failed".into()))?;
    for mut col in w.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
        // deterministic sign: largest-magnitude entry positive
        let imax = col.iamax();
        if col[imax] < 0.0 {
            col.neg_mut();
        }
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("non-finite filter coefficients".into()));
    }
    Ok(FisherFilters {
        filters: w,
        eigenvalues: order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect(),
    })
}

/// Spatiotemporal filter `W` maximising between- over within-class scatter.
pub fn fit_spatiotemporal_filter(
    trials: &[DMatrix<f64>],
    labels: &[usize],
    n_components: usize,
    ridge: f64,
) -> Result<DMatrix<f64>> {
    let scatter = Scatter::from_trials(trials, labels)?;
    Ok(solve_fisher(&scatter, n_components, ridge)?.filters)
}

/// `wᵀ A w / wᵀ B w`.
pub fn rayleigh_quotient(w: &[f64], a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let v = nalgebra::DVector::from_column_slice(w);
    let num = (v.transpose() * a * &v)[0];
    let den = (v.transpose() * b * &v)[0];
    num / den
}
