pub mod dataset;
pub mod derivatives;
pub mod error;
pub mod functions;
pub mod gmm;
pub mod knn;
pub mod models;
pub mod vbsw;
pub mod bateman;
pub mod tbs;
pub mod experiments;
