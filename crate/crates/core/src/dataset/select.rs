use super::DatasetError;

/// One-way ANOVA F statistic of one column against integer labels.
///
/// Columns with zero within-class scatter but distinct class means score
/// `+inf`; classes absent from `y` do not count.
pub fn anova_f(column: &[f64], y: &[u32], n_classes: usize) -> f64 {
    let mut count = vec![0usize; n_classes];
    let mut sum = vec![0.0; n_classes];
    for (&v, &c) in column.iter().zip(y) {
        count[c as usize] += 1;
        sum[c as usize] += v;
    }
    let n = column.len() as f64;
    let k = count.iter().filter(|&&c| c > 0).count() as f64;
    let grand = column.iter().sum::<f64>() / n;
    let means: Vec<f64> = sum.iter().zip(&count).map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 }).collect();
    let ssb: f64 = (0..n_classes).map(|c| count[c] as f64 * (means[c] - grand).powi(2)).sum();
    let ssw: f64 = column.iter().zip(y).map(|(&v, &c)| (v - means[c as usize]).powi(2)).sum();
    if ssw == 0.0 {
        return if ssb > 0.0 { f64::INFINITY } else { 0.0 };
    }
    (ssb / (k - 1.0)) / (ssw / (n - k))
}

/// Top-`k` columns of a row-major `n × dim` matrix by ANOVA F score, returned
/// in ascending column order. Constant columns never qualify; equal scores
/// prefer the lower index.
pub fn select_features(x: &[f32], dim: usize, y: &[u32], n_classes: usize, k: usize) -> Result<Vec<usize>, DatasetError> {
    let n = y.len();
    if x.len() != n * dim {
        return Err(DatasetError::Shape(format!("{} values for {n} rows of width {dim}", x.len())));
    }
    let mut per_class = vec![0usize; n_classes];
    for &c in y {
        if c as usize >= n_classes {
            return Err(DatasetError::Label { label: c, n_classes });
        }
        per_class[c as usize] += 1;
    }
    if per_class.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(DatasetError::Selection("feature ranking needs at least two classes".into()));
    }
    let mut scored: Vec<(usize, f64)> = Vec::with_capacity(dim);
    let mut column = vec![0.0; n];
    for j in 0..dim {
        for i in 0..n {
            column[i] = x[i * dim + j] as f64;
        }
        if column.iter().all(|&v| v == column[0]) {
            continue;
        }
        let f = anova_f(&column, y, n_classes);
        scored.push((j, if f.is_nan() { 0.0 } else { f }));
    }
    if k > scored.len() {
        return Err(DatasetError::Selection(format!(
            "requested {k} features but only {} non-constant columns remain",
            scored.len()
        )));
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut chosen: Vec<usize> = scored[..k].iter().map(|s| s.0).collect();
    chosen.sort_unstable();
    Ok(chosen)
}
