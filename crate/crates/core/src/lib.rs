//! SE(3) pose estimation and tactile servo control.

pub mod liegroup;
pub mod uncertainty;
pub mod filter;
pub mod control;
pub mod gdnmath;
pub mod sim;
