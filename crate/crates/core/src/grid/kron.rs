use nalgebra::DMatrix;
use super::{GridError, C64, CMatrix};

/// Network equivalent among retained nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedNetwork {
    /// `Y_GG − Y_GL · Y_LL⁻¹ · Y_LG` over the retained nodes.
    pub y_red: CMatrix,
    /// `−Y_LL⁻¹ · Y_LG`: maps retained-node voltages to eliminated-node voltages.
    pub recovery: CMatrix,
    /// Original indices of the retained nodes.
    pub kept: Vec<usize>,
    /// Original indices of the eliminated nodes, in matrix order.
    pub eliminated: Vec<usize>,
    /// Generator index behind each retained node (empty for a bare reduction).
    pub gens: Vec<usize>,
    /// Internal EMFs of those generators at the pre-disturbance point.
    pub gen_emf: Vec<C64>,
}

impl ReducedNetwork {
    /// Voltages at the eliminated nodes for the given retained-node voltages.
    pub fn recover(&self, kept_voltages: &[C64]) -> Vec<C64> {
        let e = nalgebra::DVector::from_column_slice(kept_voltages);
        (&self.recovery * e).iter().copied().collect()
    }

    /// Currents injected at the retained nodes.
    pub fn currents(&self, kept_voltages: &[C64]) -> Vec<C64> {
        let e = nalgebra::DVector::from_column_slice(kept_voltages);
        (&self.y_red * e).iter().copied().collect()
    }
}

/// Eliminates every node not listed in `keep` (which may be in any order; the
/// reduced matrix follows the order of `keep`).
pub fn kron_reduce(y: &CMatrix, keep: &[usize]) -> Result<ReducedNetwork, GridError> {
    let n = y.nrows();
    if y.ncols() != n {
        return Err(GridError::Dimension(format!("admittance matrix is {}x{}", n, y.ncols())));
    }
    let mut is_kept = vec![false; n];
    for &k in keep {
        if k >= n || is_kept[k] {
            return Err(GridError::Dimension(format!("invalid or repeated kept node {k}")));
        }
        is_kept[k] = true;
    }
    let elim: Vec<usize> = (0..n).filter(|&i| !is_kept[i]).collect();
    let (g, l) = (keep.len(), elim.len());

    let block = |rows: &[usize], cols: &[usize]| {
        DMatrix::from_fn(rows.len(), cols.len(), |r, c| y[(rows[r], cols[c])])
    };
    let y_gg = block(keep, keep);
    if l == 0 {
        return Ok(ReducedNetwork {
            y_red: y_gg,
            recovery: DMatrix::from_element(0, g, C64::new(0.0, 0.0)),
            kept: keep.to_vec(),
            eliminated: elim,
            gens: Vec::new(),
            gen_emf: Vec::new(),
        });
    }
    let y_gl = block(keep, &elim);
    let y_lg = block(&elim, keep);
    let y_ll = block(&elim, &elim);

    let lu = y_ll.lu();
    let diag: Vec<f64> = lu.u().diagonal().iter().map(|z| z.norm()).collect();
    let dmax = diag.iter().cloned().fold(0.0, f64::max);
    let dmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition = if dmin > 0.0 { dmax / dmin } else { f64::INFINITY };
    if !condition.is_finite() || condition > 1e14 {
        return Err(GridError::SingularReduction { condition });
    }
    let x = lu.solve(&y_lg).ok_or(GridError::SingularReduction { condition })?;
    let y_red = y_gg - &y_gl * &x;
    Ok(ReducedNetwork {
        y_red,
        recovery: -x,
        kept: keep.to_vec(),
        eliminated: elim,
        gens: Vec::new(),
        gen_emf: Vec::new(),
    })
}
