use crate::error::{Error, Result};
use crate::tensor::Tensor5;

pub const DEFAULT_FOLD_DIV: usize = 8;

/// Temporal shift with zero fill. With `fold = c / fold_div`, channels
/// `[0, fold)` move backward in time (`out[t] = in[t + 1]`), channels
/// `[fold, 2 * fold)` move forward (`out[t] = in[t - 1]`), and the rest are
/// copied.
pub fn temporal_shift(x: &Tensor5, fold_div: usize) -> Result<Tensor5> {
    shift_impl(x, fold_div, false)
}

/// Same folds as [`temporal_shift`] with the two directions exchanged.
/// Applying it after [`temporal_shift`] restores every interior frame.
pub fn temporal_shift_reverse(x: &Tensor5, fold_div: usize) -> Result<Tensor5> {
    shift_impl(x, fold_div, true)
}

fn shift_impl(x: &Tensor5, fold_div: usize, swapped: bool) -> Result<Tensor5> {
    let [n, c, t, h, w] = x.shape().0;
    if fold_div == 0 {
        return Err(Error::contract("temporal_shift", "fold_div must be >= 1"));
    }
    if c < fold_div {
        return Err(Error::contract(
            "temporal_shift",
            format!("channel count {c} is smaller than fold_div {fold_div}"),
        ));
    }
    let fold = c / fold_div;
    let hw = h * w;
    let mut out = Tensor5::zeros(x.shape());
    for b in 0..n {
        for ch in 0..c {
            let src = x.plane(b, ch);
            let dst = out.plane_mut(b, ch);
            // +1: read from the next frame, -1: read from the previous one
            let mut dir: i8 = if ch < fold {
                1
            } else if ch < 2 * fold {
                -1
            } else {
                0
            };
            if swapped {
                dir = -dir;
            }
            match dir {
                1 => {
                    if t > 1 {
                        dst[..(t - 1) * hw].copy_from_slice(&src[hw..]);
                    }
                }
                -1 => {
                    if t > 1 {
                        dst[hw..].copy_from_slice(&src[..(t - 1) * hw]);
                    }
                }
                _ => dst.copy_from_slice(src),
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape5;

    fn series(c: usize, t: usize) -> Tensor5 {
        Tensor5::from_fn(Shape5::new(1, c, t, 1, 1), |i| (i[1] * t + i[2] + 1) as f32)
    }

    #[test]
    fn four_channel_example() {
        let x = series(4, 3);
        let y = temporal_shift(&x, 4).unwrap();
        assert_eq!(y.plane(0, 0), &[2., 3., 0.]);
        assert_eq!(y.plane(0, 1), &[0., 4., 5.]);
        assert_eq!(y.plane(0, 2), x.plane(0, 2));
        assert_eq!(y.plane(0, 3), x.plane(0, 3));
    }

    #[test]
    fn fold_div_bounds() {
        let x = series(4, 3);
        assert!(temporal_shift(&x, 5).is_err());
        assert!(temporal_shift(&x, 0).is_err());
        let y = temporal_shift(&x, 4).unwrap();
        // exactly one channel each way
        let changed: Vec<usize> = (0..4).filter(|&c| y.plane(0, c) != x.plane(0, c)).collect();
        assert_eq!(changed, vec![0, 1]);
    }

    #[test]
    fn single_frame_shifted_channels_become_zero() {
        let x = series(8, 1);
        let y = temporal_shift(&x, 4).unwrap();
        for c in 0..4 {
            assert_eq!(y.plane(0, c), &[0.0]);
        }
        for c in 4..8 {
            assert_eq!(y.plane(0, c), x.plane(0, c));
        }
    }
}
