//! Fixtures shared by the benchmarks.

use grasp_core::contours::contour_to_mask;
use grasp_core::descriptors::{train_model, TrainingSample};
use grasp_core::io::{generate_scene, GarmentClass, SyntheticScene, SyntheticSceneSpec};
use grasp_core::{Contour, KnnModel, PipelineConfig};

pub fn scene(class: GarmentClass, seed: u64) -> SyntheticScene {
    generate_scene(&SyntheticSceneSpec::new(class, seed)).expect("default spec is valid")
}

/// Model trained on `per_class` scenes of each class.
pub fn model(per_class: u64, cfg: &PipelineConfig) -> KnnModel {
    let mut samples = Vec::new();
    for class in [GarmentClass::Shirt, GarmentClass::TShirt, GarmentClass::Pant] {
        for seed in 0..per_class {
            let s = scene(class, 1000 + seed);
            let outline = Contour::from_pixels(&s.annotation.polygon).expect("generator polygons are valid");
            let region = contour_to_mask(&outline, s.depth.width(), s.depth.height());
            samples.push(TrainingSample { region, depth: s.depth, label: s.annotation.label });
        }
    }
    train_model(&samples, &cfg.region).expect("synthetic samples are usable").0
}
