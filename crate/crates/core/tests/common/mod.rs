#![allow(dead_code)]

use difl::data::SynthConfig;
use difl::experiment::ExperimentConfig;
use difl::nn::Architecture;
use difl::training::TrainingConfig;

/// A few seconds per trial: 16 px images, narrow networks, two epochs.
pub fn tiny_config() -> ExperimentConfig {
    let extent = 16;
    let training = TrainingConfig {
        epochs: 2,
        min_epochs: 0,
        batch_size: 8,
        ..TrainingConfig::default()
    };
    ExperimentConfig {
        trials: 3,
        synth: SynthConfig {
            samples_per_class: 20,
            extent,
            ..SynthConfig::default()
        },
        architecture: Architecture::with_widths(extent, 8, 4),
        baseline: training.clone(),
        difl: training,
        ..ExperimentConfig::default()
    }
}
