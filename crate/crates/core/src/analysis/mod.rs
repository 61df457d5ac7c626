//! Signal and bitstream analytics.

pub mod autocorr;
pub mod bitmap;
pub mod entropy;
pub mod fit;
pub mod levels;
pub mod markov;
pub mod psd;
pub mod tlp;

pub use autocorr::{autocorrelation, AutocorrSeries, Z95};
pub use bitmap::{bitmap_emit, bitmap_write, parse_pbm, PbmFormat};
pub use entropy::{shannon_entropy, EntropyReport, DEFAULT_BLOCK_SIZE};
pub use fit::{default_fit_band, fit_alpha, fit_lorentzian, fit_spectrum, AlphaFit, LorentzianFit};
pub use levels::{dwell_times, extract_levels, DwellTimeStats, LevelExtraction, DEFAULT_GUARD_SIGMAS};
pub use markov::{markov_predict, MarkovReport, MAX_ORDER};
pub use psd::{estimate_psd, PsdConfig, SpectrumEstimate, Window};
pub use tlp::{tlp, tlp_levels, CornerCounts, TlpMatrix};
