pub mod certificates;
pub mod ellipsoid;
pub mod error;
pub mod games;
pub mod instances;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod lp;
pub mod problem;
pub mod quasar;
pub mod scalar;
pub mod solver;
