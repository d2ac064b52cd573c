//! Fixtures shared by the benchmarks: a tuned-looking network on the
//! default stimulus (d = 100, 20 Hz, 0.5 s, m = 25, k = 4).

use wta_core::kernel::{InhibitionParams, KernelParams};
use wta_core::rng::stream;
use wta_core::spike::gen_poisson_template;
use wta_core::{Geometry, Network, NeuronConfig, PatternTemplate, Wiring};

pub struct Fixture {
    pub wiring: Wiring,
    pub neuron: NeuronConfig,
    pub kernel: KernelParams,
    pub inhibition: InhibitionParams,
    pub pattern: PatternTemplate,
}

impl Fixture {
    pub fn new(neurons: usize, seed: u64) -> Self {
        let mut rng = stream(seed, "bench", 0);
        let g = Geometry::new(neurons, 25, 4, 100).expect("valid geometry");
        let wiring = Wiring::random(g, &mut rng);
        let pattern =
            gen_poisson_template(100, 20.0, 0.5, 1.0, 0, &mut rng).expect("valid stimulus");
        // values close to what tuning produces for this stimulus
        let neuron = NeuronConfig {
            branches: 25,
            synapses_per_branch: 4,
            x_thr: 2.33,
            v_thr: 112.0,
            tau_m: 0.02,
        };
        Self {
            wiring,
            neuron,
            kernel: KernelParams::normalized(0.023315),
            inhibition: InhibitionParams::new(380.0, 0.31, 0.031).expect("valid kernel"),
            pattern,
        }
    }

    pub fn network(&self) -> Network<'_> {
        Network {
            wiring: &self.wiring,
            neuron: &self.neuron,
            kernel: &self.kernel,
            inhibition: Some(&self.inhibition),
            mismatch: None,
        }
    }
}
