pub mod bench;
pub mod eval;
pub mod inspect;
pub mod train;
pub mod upscale;
