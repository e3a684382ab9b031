use super::Image;
use crate::error::{Error, Result};

/// Crops to the square circumscribing the retina and resizes to `target × target`.
///
/// Where the field of view clips the disk the missing side is zero-padded, so
/// the square keeps the retina's full extent along the unclipped axis.
pub fn preprocess(image: &Image, target: usize) -> Result<Image> {
    if image.width == 0 || image.height == 0 || image.data.is_empty() {
        return Err(Error::invalid("empty pixel grid"));
    }
    if target == 0 {
        return Err(Error::invalid("target size must be positive"));
    }
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for y in 0..image.height {
        for x in 0..image.width {
            if image.get(x, y) > 0.0 {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
            }
        }
    }
    if x0 == usize::MAX {
        return Err(Error::DegenerateInput("no retina found in the pixel grid".into()));
    }
    let (bw, bh) = (x1 - x0 + 1, y1 - y0 + 1);
    let side = bw.max(bh);
    let sx = square_start(x0, x1, bw, side, image.width);
    let sy = square_start(y0, y1, bh, side, image.height);
    let scale = side as f64 / target as f64;
    let mut out = Vec::with_capacity(target * target);
    for oy in 0..target {
        for ox in 0..target {
            let fx = sx as f64 + (ox as f64 + 0.5) * scale - 0.5;
            let fy = sy as f64 + (oy as f64 + 0.5) * scale - 0.5;
            out.push(sample_bilinear(image, fx, fy).clamp(0.0, 1.0));
        }
    }
    Image::new(target, target, out)
}

/// Start of the square along one axis; may be negative when that axis is clipped.
fn square_start(lo: usize, hi: usize, extent: usize, side: usize, full: usize) -> i64 {
    let (lo, hi, extent, side) = (lo as i64, hi as i64, extent as i64, side as i64);
    if extent == side {
        return lo;
    }
    let missing = side - extent;
    let touches_low = lo == 0;
    let touches_high = hi == full as i64 - 1;
    match (touches_low, touches_high) {
        (true, false) => lo - missing,
        (false, true) => lo,
        _ => lo - missing / 2,
    }
}

/// Bilinear sample at continuous coordinates, zero outside the grid.
fn sample_bilinear(image: &Image, x: f64, y: f64) -> f64 {
    let xf = x.floor();
    let yf = y.floor();
    let (tx, ty) = (x - xf, y - yf);
    let at = |xi: i64, yi: i64| -> f64 {
        if xi < 0 || yi < 0 || xi >= image.width as i64 || yi >= image.height as i64 {
            0.0
        } else {
            image.get(xi as usize, yi as usize)
        }
    };
    let (xi, yi) = (xf as i64, yf as i64);
    // Skip zero-weight taps so a constant region stays exactly constant at its edge.
    let mut acc = 0.0;
    for (dx, wx) in [(0, 1.0 - tx), (1, tx)] {
        for (dy, wy) in [(0, 1.0 - ty), (1, ty)] {
            let w = wx * wy;
            if w != 0.0 {
                acc += w * at(xi + dx, yi + dy);
            }
        }
    }
    acc
}

/// Plain bilinear resize of the whole grid (no crop).
pub fn bilinear_resize(image: &Image, width: usize, height: usize) -> Result<Image> {
    if image.data.is_empty() || width == 0 || height == 0 {
        return Err(Error::invalid("bilinear resize needs non-empty grids"));
    }
    let (kx, ky) = (image.width as f64 / width as f64, image.height as f64 / height as f64);
    let mut out = Vec::with_capacity(width * height);
    for oy in 0..height {
        for ox in 0..width {
            let fx = ((ox as f64 + 0.5) * kx - 0.5).clamp(0.0, (image.width - 1) as f64);
            let fy = ((oy as f64 + 0.5) * ky - 0.5).clamp(0.0, (image.height - 1) as f64);
            out.push(sample_bilinear(image, fx, fy));
        }
    }
    Image::new(width, height, out)
}
