//! Neural components of the vocoder: a small reverse-mode autodiff engine,
//! the multi-output generator, the two discriminator families, the training
//! objectives and the training loop.

pub mod checkpoint;
pub mod combd;
pub mod dataset;
pub mod disc;
pub mod error;
pub mod generator;
pub mod gradcheck;
pub mod graph;
pub mod kernels;
pub mod layers;
pub mod losses;
pub mod optim;
pub mod params;
pub mod pqmf;
pub mod sbd;
pub mod tensor;
pub mod trainer;

pub use checkpoint::Checkpoint;
pub use combd::{Combd, CombdConfig};
pub use disc::DiscriminatorOutput;
pub use error::{Error, Result};
pub use generator::{Generator, GeneratorConfig, MultiScaleOutputs};
pub use graph::{Bound, Gradients, Graph, Var};
pub use losses::{LossBundle, LossWeights};
pub use optim::{AdamW, AdamWConfig};
pub use params::{Init, ParamId, ParamStore};
pub use pqmf::GraphPqmf;
pub use sbd::{Sbd, SbdConfig};
pub use tensor::Tensor;
pub use trainer::{infer, load_generator, TrainConfig, Trainer};

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Generator32 = Generator<f32>;
pub type Generator64 = Generator<f64>;
pub type Combd32 = Combd<f32>;
pub type Combd64 = Combd<f64>;
pub type Sbd32 = Sbd<f32>;
pub type Sbd64 = Sbd<f64>;
pub type Trainer32 = Trainer<f32>;
pub type Trainer64 = Trainer<f64>;
