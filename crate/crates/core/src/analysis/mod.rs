//! Reports that turn landscapes and trajectories into checkable claims.

pub mod alignment;
pub mod capture;
pub mod coupling;
pub mod embedding;
pub mod four;
pub mod margin;

pub use alignment::{alignment_report, AlignmentReport};
pub use capture::{capture_probability_mc, CaptureReport};
pub use coupling::{phase1_coupling, CouplingReport};
pub use four::{four_neuron_init, summarize_four, train4, FourSummary};
pub use embedding::{embed_chi, group_prominent, reduce_to_p, EmbeddingGroup, EmbeddingMap};
pub use margin::{accuracy_time_detector, local_max_margin_probe, normalized_margin, theta_breve, MarginReport, ProbeReport};
