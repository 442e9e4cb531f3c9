use avocodo_core::Real;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{config_err, Result};
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
}

/// Named trainable tensors of one network, in registration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        self.params.push(Param { name: name.into(), value });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<T> {
        &mut self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    /// Overwrites values from `other`, matched by name and shape.
    pub fn copy_from(&mut self, other: &ParamStore<T>) -> Result<()> {
        if other.len() != self.len() {
            return config_err(format!("parameter count {} vs {}", other.len(), self.len()));
        }
        for (dst, src) in self.params.iter_mut().zip(&other.params) {
            if dst.name != src.name || dst.value.shape() != src.value.shape() {
                return config_err(format!("parameter {} does not match {}", dst.name, src.name));
            }
            dst.value = src.value.clone();
        }
        Ok(())
    }
}

/// Weight initialisation scheme for a layer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Zero-mean Gaussian with the given standard deviation.
    Normal(f64),
    /// `U(−1/√fan_in, 1/√fan_in)`.
    FanIn,
}

impl Init {
    pub fn sample<T: Real, R: Rng + ?Sized>(self, shape: Shape, fan_in: usize, rng: &mut R) -> Tensor<T> {
        let n: usize = shape.iter().product();
        let data = match self {
            Init::Normal(std) => {
                let dist = Normal::new(0.0, std).expect("finite standard deviation");
                (0..n).map(|_| T::lit(dist.sample(rng))).collect()
            }
            Init::FanIn => fan_in_uniform(n, fan_in, rng),
        };
        Tensor::new(shape, data).expect("shape product")
    }
}

pub(crate) fn fan_in_uniform<T: Real, R: Rng + ?Sized>(n: usize, fan_in: usize, rng: &mut R) -> Vec<T> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    (0..n).map(|_| T::lit(dist.sample(rng))).collect()
}
