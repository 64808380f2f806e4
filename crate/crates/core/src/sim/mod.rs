//! Room-acoustics simulation: image-method responses, source material and
//! scene rendering with ground truth.

pub mod rir;
pub mod scene;
pub mod signal;

pub use rir::{fft_convolve, image_method_rir, schroeder_rt60, RirSettings, Room};
pub use scene::{
    block_weights, frame_activity, place, sample_scenario, synthesize, GroundTruth, MixSpec,
    ScenarioConfig, Scene, SourceTruth, Trajectory,
};
pub use signal::{speech_shaped_noise, SourceSignal};
