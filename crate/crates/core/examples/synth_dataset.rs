//! Writes a small synthetic dataset (images, masks, manifest) and splits it
//! into subject-disjoint train and test manifests.
//!
//! cargo run --example synth_dataset -- [out_dir] [count]

use std::path::PathBuf;

use segdense::data::{
    load_manifest, split_by_subject, synthesize_sample, DatasetManifest, Eye, ManifestEntry, Phase, SynthConfig,
};

fn main() -> segdense::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "synth_out".into()));
    let count: usize = args.next().map_or(20, |a| a.parse().expect("count"));
    std::fs::create_dir_all(out.join("images")).map_err(|e| segdense::SegError::io(&out, e))?;
    std::fs::create_dir_all(out.join("masks")).map_err(|e| segdense::SegError::io(&out, e))?;

    let mut entries = Vec::new();
    for i in 0..count {
        let subject = i / 2;
        let phase = Phase::ALL[subject % 3];
        let sample = synthesize_sample(&SynthConfig::with_phase(phase), i as u64)?;
        let image_path = out.join("images").join(format!("eye{i:03}.png"));
        let mask_path = out.join("masks").join(format!("eye{i:03}.png"));
        sample.image.save_png(&image_path)?;
        sample.mask.as_ref().expect("synthetic mask").save_png(&mask_path)?;
        let iris = sample.mask.as_ref().map_or(0, |m| m.count_ones());
        println!("eye{i:03}  {:<12}  iris pixels {iris}", phase.as_str());
        entries.push(ManifestEntry {
            image_path,
            mask_path: Some(mask_path),
            subject_id: format!("s{subject:02}"),
            eye: if i % 2 == 0 { Eye::Left } else { Eye::Right },
            phase,
            sensor: "synthetic".into(),
        });
    }
    let manifest_path = out.join("manifest.tsv");
    DatasetManifest::new(entries)?.write(&manifest_path)?;

    let manifest = load_manifest(&manifest_path)?;
    let (train, test) = split_by_subject(&manifest, 0.7, 0)?;
    train.write(&out.join("train.tsv"))?;
    test.write(&out.join("test.tsv"))?;
    println!(
        "{} subjects: {} train / {} test",
        manifest.subjects().len(),
        train.subjects().len(),
        test.subjects().len()
    );
    Ok(())
}
