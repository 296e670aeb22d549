//! Feed-forward convolutional classifier: convolution, max-pooling, local
//! response normalization, ReLU, fully-connected layers, dropout and a
//! softmax output, trained with momentum SGD on the negative log-likelihood.

pub mod io;
mod layers;
mod model;
mod optim;
mod spec;
mod tensor;
mod train;

pub use layers::{log_sum_exp, softmax};
pub use model::{loss, loss_from_logits, Classifier, Gradients, Params, TrainedNetwork};
pub use optim::{sgd_step, LrSchedule, SgdState, TrainConfig};
pub use spec::{
    paper_architecture, toy_architecture, Activation, LayerKind, LayerSpec, LrnParams, NetworkSpec,
    Regularizer, Shape,
};
pub use tensor::Tensor;
pub use train::{batch_gradients, mean_pixel, train, train_from, PatchBank, TrainLog, TrainingSet};
