//! Shared fixtures for the benchmarks.

use symrefine::pipeline::{rectify_scene, Rectified};
use symrefine::synth::{corrupt, generate_scenes, GeneratorSpec, NoiseSpec, Scene};

/// A clean scene, its degraded copy under the default noise and the
/// degraded scene's rectified canvas.
pub struct Fixture {
    pub clean: Scene,
    pub degraded: Scene,
    pub rectified: Rectified,
}

pub fn fixture(size: usize, seed: u64) -> Fixture {
    let clean = generate_scenes(&GeneratorSpec::default(), 1, size, size, seed)
        .expect("scene generation")
        .remove(0);
    let degraded = corrupt(&clean, &NoiseSpec::default()).expect("corruption");
    let rectified = rectify_scene(&degraded).expect("rectification");
    Fixture {
        clean,
        degraded,
        rectified,
    }
}
