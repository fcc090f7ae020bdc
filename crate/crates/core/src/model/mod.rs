//! Layer graphs, weight collections and the trainable [`Net`].

mod layers;
mod net;
mod spec;
mod weights;

pub use net::{Batch, BatchStream, Net, SgdConfig};
pub use spec::{Blob, LayerKind, LayerSpec, NetParams};
pub use weights::WeightCollection;
