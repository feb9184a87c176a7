//! Full-reference metrics, the internal patch-feature Fréchet distance and
//! the early-stopping rule built on it.

mod features;
mod frechet;
mod metrics;
mod stop;

pub use features::{extract_patch_features, internal_fid, Region, FEATURE_DIM, PATCH, STRIDE};
pub use frechet::{frechet_distance, gaussian_stats, sym_eigen, FeatureStats};
pub use metrics::{psnr, ssim, PSNR_CAP};
pub use stop::{should_stop, StopPolicy};
