pub mod evaluate;
pub mod fit;
pub mod grid;
pub mod predict;
pub mod simulate;
pub mod train;
