use alloc::vec::Vec;

use crate::linalg::Mat;
use crate::{Error, Result};

/// Fixed 2-D sinusoidal table with one row per grid cell (row-major order).
///
/// The first half of the channels encodes the row index and the second half
/// the column index. Each half is `[sin(p w_0) .. sin(p w_{m-1}), cos(p w_0) .. cos(p w_{m-1})]`
/// with `m = dim / 4` and `w_i = 10000^(-i / m)`.
pub fn sinusoidal_pos_2d(grid_h: usize, grid_w: usize, dim: usize) -> Result<Mat> {
    if dim % 4 != 0 || dim == 0 {
        return Err(Error::InvalidArgument(alloc::format!(
            "2-D sinusoidal encoding needs a positive dimension divisible by 4, got {dim}"
        )));
    }
    let quarter = dim / 4;
    let freqs: Vec<f64> = (0..quarter)
        .map(|i| 1.0 / libm::pow(10000.0, i as f64 / quarter as f64))
        .collect();
    let mut table = Mat::zeros(grid_h * grid_w, dim);
    for r in 0..grid_h {
        for c in 0..grid_w {
            let row = table.row_mut(r * grid_w + c);
            for (half, pos) in [(0usize, r as f64), (1, c as f64)] {
                let base = half * 2 * quarter;
                for (i, w) in freqs.iter().enumerate() {
                    row[base + i] = libm::sin(pos * w);
                    row[base + quarter + i] = libm::cos(pos * w);
                }
            }
        }
    }
    Ok(table)
}
