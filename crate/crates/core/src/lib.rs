//! Household text-game simulator with plan, eliminate and track assists
//! around an action-attention policy trained by behavior cloning.

pub mod expert;
pub mod lexicon;
pub mod worldsim;
pub mod lmbridge;
pub mod eliminator;
pub mod metrics;
pub mod planner;
pub mod tracker;
pub mod agent;
pub mod harness;
