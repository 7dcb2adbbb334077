//! Comparison regressors: ordinary and ridge least squares, k-nearest
//! neighbours, and a plain feed-forward network.

pub mod knn;
pub mod linear;
pub mod nn;
pub mod search;

pub use knn::{fit_knn, predict_knn, KnnModel};
pub use linear::{fit_linear, LinearModel};
pub use nn::{fit_nn_regressor, NnRegressor};
pub use search::{select_k, select_ridge_alpha, KNN_K_GRID, RIDGE_ALPHA_GRID};
