pub mod gradsuite;
pub mod refimpl;
