use crate::error::{Error, Result};
use crate::nn::{Layer, ModelParams};
use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};

/// Pixel mean and the top `k` principal directions (rows, unit length, decreasing variance).
pub fn principal_components(images: ArrayView2<'_, f64>, k: usize) -> Result<(Array1<f64>, Array2<f64>)> {
    let (n, dim) = images.dim();
    if n == 0 || k > dim {
        return Err(Error::invalid(format!(
            "cannot take {k} components of {n} images of dimension {dim}"
        )));
    }
    let mean = images.mean_axis(Axis(0)).expect("non-empty");
    let centered = &images - &mean;
    let cov = centered.t().dot(&centered) / n as f64;
    let eig = SymmetricEigen::new(DMatrix::from_fn(dim, dim, |i, j| cov[[i, j]]));
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut comps = Array2::zeros((k, dim));
    for (r, &c) in order.iter().take(k).enumerate() {
        let v = eig.eigenvectors.column(c);
        // Fix the sign so the largest-magnitude entry is positive.
        let pivot = (0..dim).fold(0, |best, i| if v[i].abs() > v[best].abs() { i } else { best });
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..dim {
            comps[[r, i]] = sign * v[i];
        }
    }
    Ok((mean, comps))
}

/// Writes a PCA autoencoder into the four layers of `net`.
///
/// Each latent coordinate is carried through a ReLU layer as a `(+u, -u)` unit pair, so
/// the hidden width must be at least `2k`. The remaining hidden units keep their random
/// input weights with zero output weights. The decoder's sigmoid is linearized at the mean image.
pub fn embed_pca(net: &mut ModelParams, mean: &Array1<f64>, comps: &Array2<f64>) -> Result<()> {
    let k = comps.nrows();
    let layers = net.layers_mut();
    if layers.len() != 4 || layers[0].out_dim() < 2 * k || layers[2].out_dim() < 2 * k || layers[1].out_dim() != k {
        return Err(Error::invalid("PCA warm start needs hidden width >= 2 * latent_dim"));
    }
    let shift = comps.dot(mean);
    let [enc_in, enc_code, dec_in, dec_out] = layers else {
        unreachable!("checked above")
    };
    set_pair_rows(enc_in, comps, &(-&shift));
    let eye = Array2::<f64>::eye(k);
    set_pair_cols(enc_code, &eye);
    enc_code.bias.fill(0.0);
    set_pair_rows(dec_in, &eye, &Array1::zeros(k));

    let m = mean.mapv(|v| v.clamp(1e-3, 1.0 - 1e-3));
    let slope = m.mapv(|v| 1.0 / (v * (1.0 - v)));
    let back = comps.t().to_owned() * slope.view().insert_axis(Axis(1));
    set_pair_cols(dec_out, &back);
    dec_out.bias = m.mapv(|v| (v / (1.0 - v)).ln());
    Ok(())
}

fn set_pair_rows(layer: &mut Layer, rows: &Array2<f64>, bias: &Array1<f64>) {
    let k = rows.nrows();
    for r in 0..k {
        layer.weights.row_mut(r).assign(&rows.row(r));
        layer.weights.row_mut(k + r).assign(&(-&rows.row(r)));
        layer.bias[r] = bias[r];
        layer.bias[k + r] = -bias[r];
    }
}

/// Output weights that read `+u - u` from the unit pairs and ignore the other hidden units.
fn set_pair_cols(layer: &mut Layer, cols: &Array2<f64>) {
    let k = cols.ncols();
    layer.weights.fill(0.0);
    for c in 0..k {
        layer.weights.column_mut(c).assign(&cols.column(c));
        layer.weights.column_mut(k + c).assign(&(-&cols.column(c)));
    }
}
