//! Ground-node visual localization: a down-looking camera detects floor
//! markers, reads their identity codes, recovers its pose from the marker's
//! blob grid and falls back to back-projection through an odometry prior
//! when a code cannot be read. A synthetic warehouse renderer supplies
//! ground truth.

pub mod detector;
pub mod floorid;
pub mod geometry;
pub mod gridpose;
pub mod homography;
pub mod imaging;
pub mod nodecode;
pub mod pipeline;
pub mod simulator;
