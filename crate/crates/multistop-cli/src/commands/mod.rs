pub mod double;
pub mod exchange;
pub mod snell;
pub mod verify;
