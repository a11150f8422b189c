//! Recurrent encoders and the comment classifier.

mod cells;
mod classifier;
mod encoder;
mod init;

pub use cells::{init_lstm, init_rcnn, lstm_param_names, rcnn_param_names, LstmNodes, RcnnNodes};
pub use classifier::{
    classifier_loss, classify_comment, classify_pooled, init_head, predict, train_classifier, ClassifierConfig, ClassifierModel,
    ClassifierNodes, ClassifierOutput, ClassifierTrainConfig, ClassifierTrainLog, EpochRecord,
};
pub use classifier::{ENCODER, HEAD, TABLE};
pub use encoder::{encode, init_encoder, param_count, CellKind, Encoded, EncoderConfig, Pooling};
pub use init::{glorot, uniform, zeros};
