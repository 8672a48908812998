//! Landmark statistics: PCA representation, style-class clustering and the
//! Fréchet distance over coefficient sets.

pub mod fid;
pub mod kmeans;
pub mod pca;

pub use fid::compute_fid;
pub use kmeans::{fit_kmeans, ClusterModel, KMeansFit, DEFAULT_CLUSTERS};
pub use pca::{fit_pca, fit_pca_with, CoeffVector, PcaModel, PCA_COMPONENTS};
