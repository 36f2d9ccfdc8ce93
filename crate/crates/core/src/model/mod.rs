//! Training: Procrustes alignment, shape and appearance PCA, and assembly of
//! the combined model.

mod aam;
mod appearance;
mod pca;
mod procrustes;
mod shape;

pub use aam::{assemble_aam, train_aam, Aam, BasisMode, TrainConfig, TrainedAam, DROP_TOL};
pub use appearance::{
    train_appearance_model, AppearanceModel, AppearanceTraining, Photometric, FRAME_MARGIN,
};
pub use pca::{apply_sign_convention, gram_schmidt, pca, Pca};
pub use procrustes::{fit_similarity, procrustes_align, ProcrustesResult};
pub use shape::{train_shape_model, ShapeModel, PROCRUSTES_MAX_ITERS, PROCRUSTES_TOL};
