use super::{RasterGrid, RasterKind};
use crate::error::Result;

/// Binary dilation with a (2r+1)² square structuring element: a pixel is set
/// iff some set pixel lies within Chebyshev distance `radius`.
pub fn dilate_mask(mask: &RasterGrid, radius: usize) -> Result<RasterGrid> {
    mask.ensure_binary()?;
    let mask = if mask.kind() == RasterKind::Mask {
        mask.clone()
    } else {
        mask.clone().with_kind(RasterKind::Mask)?
    };
    if radius == 0 {
        return Ok(mask);
    }
    let (rows, cols) = mask.shape();
    let src = mask.data();

    // The square element separates into a row pass and a column pass.
    let mut horiz = vec![0.0f32; rows * cols];
    for r in 0..rows {
        let row = &src[r * cols..(r + 1) * cols];
        // running count of set pixels inside the window
        let mut count = 0usize;
        for c in 0..radius.min(cols) {
            count += (row[c] == 1.0) as usize;
        }
        for c in 0..cols {
            if c + radius < cols {
                count += (row[c + radius] == 1.0) as usize;
            }
            if c > radius {
                count -= (row[c - radius - 1] == 1.0) as usize;
            }
            horiz[r * cols + c] = if count > 0 { 1.0 } else { 0.0 };
        }
    }
    let mut out = vec![0.0f32; rows * cols];
    for c in 0..cols {
        let mut count = 0usize;
        for r in 0..radius.min(rows) {
            count += (horiz[r * cols + c] == 1.0) as usize;
        }
        for r in 0..rows {
            if r + radius < rows {
                count += (horiz[(r + radius) * cols + c] == 1.0) as usize;
            }
            if r > radius {
                count -= (horiz[(r - radius - 1) * cols + c] == 1.0) as usize;
            }
            out[r * cols + c] = if count > 0 { 1.0 } else { 0.0 };
        }
    }
    mask.with_data(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use proptest::prelude::*;

    fn mask(rows: usize, cols: usize, data: Vec<f32>) -> RasterGrid {
        RasterGrid::new(rows, cols, data, 0.5, (0.0, 0.0), None, RasterKind::Mask).unwrap()
    }

    fn brute(m: &RasterGrid, r: usize) -> Vec<f32> {
        let (rows, cols) = m.shape();
        let r = r as isize;
        let mut out = vec![0.0; rows * cols];
        for pr in 0..rows as isize {
            for pc in 0..cols as isize {
                let mut hit = false;
                for qr in 0..rows as isize {
                    for qc in 0..cols as isize {
                        if m.get(qr as usize, qc as usize) == 1.0
                            && (pr - qr).abs().max((pc - qc).abs()) <= r
                        {
                            hit = true;
                        }
                    }
                }
                out[(pr as usize) * cols + pc as usize] = hit as u8 as f32;
            }
        }
        out
    }

    #[test]
    fn single_pixel_grows_to_block() {
        let mut d = vec![0.0; 81];
        d[4 * 9 + 4] = 1.0;
        let out = dilate_mask(&mask(9, 9, d), 3).unwrap();
        for r in 0..9 {
            for c in 0..9 {
                let inside = (1..=7).contains(&r) && (1..=7).contains(&c);
                assert_eq!(out.get(r, c), inside as u8 as f32, "({r},{c})");
            }
        }
        assert_eq!(out.data().iter().filter(|&&v| v == 1.0).count(), 49);
    }

    #[test]
    fn zero_radius_and_empty_mask() {
        let m = mask(3, 3, vec![0., 1., 0., 0., 0., 0., 1., 0., 0.]);
        assert_eq!(dilate_mask(&m, 0).unwrap(), m);
        let z = mask(5, 4, vec![0.0; 20]);
        assert_eq!(dilate_mask(&z, 3).unwrap(), z);
    }

    #[test]
    fn non_binary_rejected() {
        let g = RasterGrid::new(1, 2, vec![0.0, 0.5], 0.5, (0.0, 0.0), None, RasterKind::Dsm).unwrap();
        assert!(matches!(dilate_mask(&g, 1), Err(Error::Validation(_))));
    }

    fn mask_strategy() -> impl Strategy<Value = RasterGrid> {
        (1usize..=32, 1usize..=32).prop_flat_map(|(r, c)| {
            proptest::collection::vec(prop_oneof![4 => Just(0.0f32), 1 => Just(1.0f32)], r * c)
                .prop_map(move |d| mask(r, c, d))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn matches_brute_force(m in mask_strategy(), r in 0usize..=4) {
            let got = dilate_mask(&m, r).unwrap();
            prop_assert_eq!(got.data(), &brute(&m, r)[..]);
        }

        #[test]
        fn composes_additively(m in mask_strategy(), a in 0usize..=3, b in 0usize..=3) {
            let twice = dilate_mask(&dilate_mask(&m, a).unwrap(), b).unwrap();
            prop_assert_eq!(twice, dilate_mask(&m, a + b).unwrap());
        }

        #[test]
        fn monotone(m in mask_strategy(), r in 0usize..=4, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let bigger: Vec<f32> = m.data().iter().map(|&v| if v == 1.0 || rng.gen_bool(0.1) { 1.0 } else { 0.0 }).collect();
            let m2 = m.with_data(bigger).unwrap();
            let d1 = dilate_mask(&m, r).unwrap();
            let d2 = dilate_mask(&m2, r).unwrap();
            prop_assert!(d1.data().iter().zip(d2.data()).all(|(a, b)| *a <= *b));
        }
    }
}
