//! Label-free estimation of domain mismatch for perception models.
//!
//! Images are scored by how well a fixed reconstructor reproduces them
//! (PSNR). The distribution of scores over a source corpus forms a reference
//! histogram, and the 1-D earth mover's distance between it and the histogram
//! of a target corpus is the domain-mismatch (DM) value in dB. A DM above
//! twice the in-domain validation DM flags the target as out of scope.

pub mod hashing;
pub mod histogram;
pub mod imageio;
pub mod metrics;
pub mod observer;
pub mod rankcorr;
pub mod reconstruction;
pub mod synthcorpus;
pub mod transport;

pub use histogram::{BinningConfig, PerformanceHistogram};
pub use imageio::{Image, LabelMap, RawImage};
pub use metrics::{psnr, ConfusionAccumulator, PsnrConfig};
pub use observer::{
    build_reference, evaluate_batch, sliding_window_observe, DmReport, DomainReference, ObserverConfig, Verdict,
};
pub use rankcorr::{kendall_tau, PairedSeries, TauResult};
pub use reconstruction::Reconstructor;
pub use synthcorpus::{generate_corpus, perturb_labels, CorpusKind, CorpusSpec, Shift};
pub use transport::{dm_metric, emd_1d, emd_lp, DmResult};
