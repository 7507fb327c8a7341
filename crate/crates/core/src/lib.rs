pub mod datagen;
pub mod eval;
pub mod fixtures;
pub mod losses;
pub mod model;
pub mod nn;
pub mod scm;
pub mod seed;
mod toml_text;
pub mod training;
