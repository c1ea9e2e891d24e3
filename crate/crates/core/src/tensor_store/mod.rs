//! Problem data: routing matrices, traffic tensors, sparsity masks, the
//! on-disk instance format, the synthetic generator and preprocessing.

mod index;
mod instance;
mod io;
mod mask;
mod preprocess;
mod routing;
mod synth;

pub use index::{unvec_index, vec_index};
pub use instance::{TomographyInstance, TrafficTensor};
pub use io::{load_instance, load_traffic, save_instance, save_traffic, LINK_LOADS, TRUTH};
pub use mask::{IntervalMask, SparsityMask};
pub use preprocess::{apply_sparsity_protocol, repair_anomalies, Repaired};
pub use routing::RoutingMatrix;
pub use synth::{synthesize_instance, SynthConfig};

pub(crate) use io::{write_file, write_table};
