pub mod geometry;
pub mod linalg;
pub mod transport;
pub mod quantities;
pub mod harmonic;
pub mod eulerian;
pub mod campanato;
