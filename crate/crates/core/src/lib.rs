//! Reward-teaching toolkit for reinforcement learning from demonstration.
//!
//! A learner running least-squares policy iteration is taught a reaching
//! skill from eight scalar rewards. Because the skills are discounted LQR
//! problems, the ideal rewards and the parameters they induce are known in
//! closed form, which makes it possible to score a teacher's rewards, build a
//! training curriculum around them, and run the full teaching protocol with
//! simulated teachers.

pub mod error;
pub mod experiment;
pub mod io;
pub mod lspi;
pub mod metrics;
pub mod phase;
pub mod record;
pub mod seeds;
pub mod skills;
pub mod teachers;
pub mod teaching;

pub use error::{Error, Result};
pub use phase::{Phase, SkillRole};
