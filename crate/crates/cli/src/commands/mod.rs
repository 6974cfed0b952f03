pub mod acceptance;
pub mod bounds;
pub mod delta;
pub mod scaling;
pub mod training;
