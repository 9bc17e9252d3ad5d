pub mod explorer;
pub mod gridmap;
pub mod memory;
pub mod navctl;
pub mod simworld;
pub mod config;
pub mod eval;
