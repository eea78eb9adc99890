//! Search-and-tracking of an evasive target on a terrain map: the world and
//! its A*-planning evader, a mixture-density tracking filter, scripted and
//! MADDPG-trained pursuit teams, and the data plumbing around them.

pub mod datastore;
pub mod evader;
pub mod filter;
pub mod geom;
pub mod maddpg;
pub mod ndgrad;
pub mod policies;
pub mod world;

use thiserror::Error;

/// Error type for the pipeline layers that span several modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    World(#[from] world::WorldError),
    #[error(transparent)]
    Filter(#[from] filter::FilterError),
    #[error(transparent)]
    Nd(#[from] ndgrad::NdError),
    #[error("config error: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
