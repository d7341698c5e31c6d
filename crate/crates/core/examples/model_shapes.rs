//! Prints the block taps, branch maps and output of the network for an
//! input size, plus parameter counts for both backbone variants.
//!
//! cargo run --release --example model_shapes -- [width] [height]

use segdense::data::IrisImage;
use segdense::model::{build_model, BackboneConfig, BlockTapSet, ModelSpec};

fn main() -> segdense::Result<()> {
    let mut args = std::env::args().skip(1);
    let w: usize = args.next().map_or(224, |a| a.parse().expect("width"));
    let h: usize = args.next().map_or(224, |a| a.parse().expect("height"));
    let image = IrisImage::filled(w, h, 128)?;

    for backbone in [BackboneConfig::tiny(), BackboneConfig::full()] {
        let variant = backbone.variant;
        let mut model = build_model(&ModelSpec::new(backbone, 4), 0)?;
        println!("{variant:?}: {} parameters", model.num_parameters());
        let x = model.spec().preprocess.batch(&[&image])?;
        let trace = model.forward_trace(&x)?;
        for (i, tap) in trace.taps.taps.iter().enumerate() {
            println!(
                "  tap {} (stride {:2}): {:?}",
                i + 1,
                BlockTapSet::stride(i),
                tap.shape()
            );
        }
        for (b, map) in model.branches().iter().zip(&trace.branch_maps) {
            println!(
                "  branch on tap {} (x{} up): {:?}",
                b.tap() + 1,
                b.upsampling_factor(),
                map.shape()
            );
        }
        println!("  fused {:?} -> output {:?}", trace.fused.shape(), trace.logits.shape());
    }
    Ok(())
}
