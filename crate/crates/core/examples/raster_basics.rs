//! `.r32` round trip, normalization, tiling and footprint dilation.

use dsm_refine::raster::{
    denormalize, dilate_mask, load_raster, normalize, tile, untile, write_raster, NormKind, NormSpec,
};
use dsm_refine::{RasterGrid, RasterKind, Result};

fn main() -> Result<()> {
    let dir = std::env::temp_dir().join("dsm_refine_raster_basics");
    let (rows, cols) = (300, 200);
    let heights: Vec<f32> = (0..rows * cols).map(|i| ((i / cols) as f32 * 0.1).sin() * 5.0 + 10.0).collect();
    let dsm = RasterGrid::new(rows, cols, heights, 0.5, (389_000.0, 5_820_000.0), Some(-9999.0), RasterKind::Dsm)?;

    let path = dir.join("dsm.r32");
    write_raster(&dsm, &path)?;
    let back = load_raster(&path)?;
    println!("round trip equal: {}", back == dsm);

    let spec = NormSpec::new(0.0, 20.0, NormKind::Height)?;
    let unit = normalize(&dsm, &spec)?;
    let restored = denormalize(&unit, &spec)?;
    let worst = dsm.data().iter().zip(restored.raster.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
    println!("normalize/denormalize max error: {worst:e} m");

    let (tiles, layout) = tile(&dsm, 128, 128)?;
    println!("{} tiles on a {:?} grid, padded by {}x{}", tiles.len(), layout.grid, layout.pad_rows, layout.pad_cols);
    println!("untile(tile(x)) == x: {}", untile(&tiles, &layout)? == dsm);

    let mut fp = vec![0.0; 81];
    fp[40] = 1.0;
    let footprints = RasterGrid::new(9, 9, fp, 0.5, (0.0, 0.0), None, RasterKind::Mask)?;
    let grown = dilate_mask(&footprints, 3)?;
    for r in 0..9 {
        let line: String = (0..9).map(|c| if grown.get(r, c) == 1.0 { '#' } else { '.' }).collect();
        println!("{line}");
    }
    Ok(())
}
