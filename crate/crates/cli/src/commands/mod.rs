//! One module per subcommand; each takes the run context, does its work,
//! writes its reports, and leaves manifest emission to `main`.

pub mod augment;
pub mod gradcheck;
pub mod metrics;
pub mod paramcount;
pub mod postprocess;
pub mod ratio;
pub mod schedule;
pub mod toy;
