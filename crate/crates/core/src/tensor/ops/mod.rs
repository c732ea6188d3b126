//! Forward kernels. The matching differentiable versions are methods on
//! [`Graph`](crate::tensor::Graph).

mod attention;
mod conv;
mod deform;
pub(crate) mod linalg;
pub mod loss;
mod pointwise;
pub(crate) mod sample;

pub use attention::attention_1d;
pub use conv::{conv2d, conv3d};
pub use deform::deform_conv2d;
pub use pointwise::{concat, permute, sigmoid, softmax};
pub use sample::{bilinear_gather, bilinear_sample, upsample_bilinear};
