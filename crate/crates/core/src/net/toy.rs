//! Small random networks in the VGG layout, for tests and demos.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::format::{encode_weights, Tensor};
use super::{load_network, Network};

/// Standard ImageNet channel means, RGB order.
pub const IMAGENET_MEAN: [f64; 3] = [123.68, 116.779, 103.939];

/// `levels` blocks of `[maxpool] conv3x3 relu tag`, the first block without
/// the pool. Weights are He-scaled Gaussians, biases zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToyNetwork {
    pub levels: usize,
    pub channels: usize,
    pub seed: u64,
}

impl ToyNetwork {
    pub fn new(levels: usize, channels: usize, seed: u64) -> Self {
        ToyNetwork {
            levels,
            channels,
            seed,
        }
    }

    pub fn manifest(&self) -> String {
        let mut out = format!(
            "# toy network: {} levels, {} channels, seed {}\nmean {} {} {}\n",
            self.levels, self.channels, self.seed, IMAGENET_MEAN[0], IMAGENET_MEAN[1], IMAGENET_MEAN[2]
        );
        let mut inputs = 3;
        for level in 1..=self.levels {
            if level > 1 {
                out.push_str("maxpool 2 2\n");
            }
            out.push_str(&format!(
                "conv conv{level}_1 {} {inputs} 3 3 1 1\nrelu\ntag relu{level}_1\n",
                self.channels
            ));
            inputs = self.channels;
        }
        out
    }

    pub fn tensors(&self) -> Vec<Tensor> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut tensors = Vec::with_capacity(2 * self.levels);
        let mut inputs = 3;
        for level in 1..=self.levels {
            let fan_in = inputs * 9;
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).unwrap();
            let weight: Vec<f32> = (0..self.channels * fan_in)
                .map(|_| normal.sample(&mut rng) as f32)
                .collect();
            tensors.push(Tensor::new(
                format!("conv{level}_1.weight"),
                vec![self.channels, inputs, 3, 3],
                weight,
            ));
            tensors.push(Tensor::new(
                format!("conv{level}_1.bias"),
                vec![self.channels],
                vec![0.0; self.channels],
            ));
            inputs = self.channels;
        }
        tensors
    }

    pub fn weights(&self) -> Vec<u8> {
        encode_weights(&self.tensors())
    }

    pub fn build(&self) -> Network {
        load_network(self.manifest().as_bytes(), &self.weights()).expect("toy network is valid")
    }
}
