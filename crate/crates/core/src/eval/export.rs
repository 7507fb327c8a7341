use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};

use super::EvalError;
use crate::datagen::Example;
use crate::model::ModelParams;
use crate::nn::Tensor;

pub const REP_KINDS: [&str; 4] = ["h", "m_inv", "m_spc", "joint"];

/// Two leading principal-component coordinates per row.
///
/// Each component's sign is fixed so that its first non-negligible loading
/// is positive. Inputs with fewer than two columns get a zero second
/// coordinate.
pub fn pca_2d(x: &Tensor) -> Vec<[f64; 2]> {
    let (n, d) = (x.rows(), x.cols());
    if n == 0 {
        return Vec::new();
    }
    let mean: Vec<f64> = (0..d)
        .map(|j| (0..n).map(|i| x.get(i, j)).sum::<f64>() / n as f64)
        .collect();
    let centered = DMatrix::from_fn(n, d, |i, j| x.get(i, j) - mean[j]);
    let cov = centered.transpose() * &centered / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut comps: Vec<Vec<f64>> = order
        .iter()
        .take(2)
        .map(|&k| {
            let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            if let Some(first) = v.iter().find(|c| c.abs() > 1e-12) {
                if *first < 0.0 {
                    v.iter_mut().for_each(|c| *c = -*c);
                }
            }
            v
        })
        .collect();
    while comps.len() < 2 {
        comps.push(vec![0.0; d]);
    }
    (0..n)
        .map(|i| {
            let row = centered.row(i);
            let proj = |c: &[f64]| row.iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
            [proj(&comps[0]), proj(&comps[1])]
        })
        .collect()
}

/// Representation matrices `[h, m_inv, m_spc, m_inv + m_spc]` for `examples`.
pub fn representations(params: &ModelParams, examples: &[&Example]) -> Result<Vec<Tensor>, EvalError> {
    let mut kinds: Vec<Vec<Vec<f64>>> = vec![Vec::new(); 4];
    for chunk in examples.chunks(512) {
        let (out, _) = params.forward(chunk)?;
        let joint = out.m_inv.add(&out.m_spc)?;
        for (k, t) in [&out.h, &out.m_inv, &out.m_spc, &joint].iter().enumerate() {
            for i in 0..t.rows() {
                kinds[k].push(t.row(i).to_vec());
            }
        }
    }
    kinds
        .into_iter()
        .map(|rows| Tensor::from_rows(&rows).map_err(EvalError::from))
        .collect()
}

/// CSV text: `id,domain,label,rep_kind,c0..c{k-1},pca_x,pca_y`, one row per
/// example and representation kind. Narrower kinds leave trailing
/// component cells empty.
pub fn representations_csv(params: &ModelParams, examples: &[&Example]) -> Result<String, EvalError> {
    let reps = representations(params, examples)?;
    let width = reps.iter().map(Tensor::cols).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["id", "domain", "label", "rep_kind"].map(String::from).to_vec();
    header.extend((0..width).map(|j| format!("c{j}")));
    header.extend(["pca_x".to_string(), "pca_y".to_string()]);
    w.write_record(&header)?;
    for (kind, rep) in REP_KINDS.iter().zip(&reps) {
        let pca = pca_2d(rep);
        for (i, e) in examples.iter().enumerate() {
            let mut row = vec![
                i.to_string(),
                e.domain.to_string(),
                e.label.to_string(),
                kind.to_string(),
            ];
            row.extend(rep.row(i).iter().map(|v| format!("{v:?}")));
            row.extend(std::iter::repeat_n(String::new(), width - rep.cols()));
            row.extend(pca[i].iter().map(|v| format!("{v:?}")));
            w.write_record(&row)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| EvalError::Csv(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv of ascii"))
}

pub fn export_representations(
    params: &ModelParams,
    examples: &[&Example],
    path: &Path,
) -> Result<(), EvalError> {
    let text = representations_csv(params, examples)?;
    fs::write(path, text).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })
}
