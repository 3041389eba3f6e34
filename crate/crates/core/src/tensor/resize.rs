use super::{Element, Tensor};
use crate::error::{Error, Result};

/// Per-output-index (input index, weight) lists for one axis.
fn axis_weights(input: usize, output: usize) -> Vec<Vec<(usize, f64)>> {
    if output >= input {
        // Nearest neighbour; exact replication for integer factors.
        return (0..output).map(|o| vec![(o * input / output, 1.0)]).collect();
    }
    if input.is_multiple_of(output) {
        let f = input / output;
        let w = 1.0 / f as f64;
        return (0..output)
            .map(|o| (o * f..(o + 1) * f).map(|i| (i, w)).collect())
            .collect();
    }
    // Fractional box filter: each output cell averages the input span it covers.
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let lo = o as f64 * scale;
            let hi = lo + scale;
            let mut taps = Vec::new();
            let mut i = lo.floor() as usize;
            while (i as f64) < hi && i < input {
                let overlap = (hi.min(i as f64 + 1.0) - lo.max(i as f64)).max(0.0);
                if overlap > 0.0 {
                    taps.push((i, overlap / scale));
                }
                i += 1;
            }
            taps
        })
        .collect()
}

/// Area resize over the last two axes (`…×H×W`).
///
/// Integer-factor downsampling is an exact block mean, upsampling is nearest
/// neighbour, and a same-size resize returns the input unchanged.
pub fn resize_area<T: Element>(input: &Tensor<T>, height: usize, width: usize) -> Result<Tensor<T>> {
    let rank = input.rank();
    if rank < 2 {
        return Err(Error::shape(
            "resize_area",
            format!("need at least 2 dims, got {:?}", input.shape()),
        ));
    }
    let (h, w) = (input.shape()[rank - 2], input.shape()[rank - 1]);
    let planes: usize = input.shape()[..rank - 2].iter().product();
    if height == 0 || width == 0 {
        return Err(Error::InvalidArgument(format!(
            "resize target {height}×{width} is empty"
        )));
    }
    if (h, w) == (height, width) {
        return Ok(input.clone());
    }
    let wy = axis_weights(h, height);
    let wx = axis_weights(w, width);
    let src = input.data();
    let mut out = Vec::with_capacity(planes * height * width);
    let mut rows = vec![T::zero(); h * width];
    for plane in src.chunks_exact(h * w) {
        for y in 0..h {
            let row = &plane[y * w..(y + 1) * w];
            for (ox, taps) in wx.iter().enumerate() {
                rows[y * width + ox] = taps.iter().map(|&(i, k)| row[i] * T::of(k)).sum();
            }
        }
        for taps in &wy {
            for ox in 0..width {
                out.push(taps.iter().map(|&(i, k)| rows[i * width + ox] * T::of(k)).sum());
            }
        }
    }
    let mut shape = input.shape()[..rank - 2].to_vec();
    shape.extend([height, width]);
    Tensor::new(shape, out)
}
