pub mod cascade;
pub mod error;
pub mod gaussian;
pub mod heralding;
pub mod loss;
pub mod optimize;
pub mod oracle;
pub mod special;
pub mod synthesis;
pub mod verify;

pub use error::{Result, SfsError};
