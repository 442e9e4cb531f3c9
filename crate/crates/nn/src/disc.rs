use crate::graph::Var;

/// Score map and the hidden activations that feed feature matching.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorOutput<S = Var> {
    pub score: S,
    pub features: Vec<S>,
}

/// Slope of every discriminator activation.
pub const DISC_SLOPE: f64 = 0.1;

/// Same-padding for an odd kernel at dilation `d`.
pub(crate) fn same_pad(kernel: usize, dilation: usize) -> usize {
    dilation * (kernel - 1) / 2
}

/// Output length of a same-padded strided convolution.
pub fn strided_len(len: usize, stride: usize) -> usize {
    (len - 1) / stride + 1
}
