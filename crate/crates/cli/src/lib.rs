//! Pipeline around the `cotton-phenology` core: configuration, synthetic
//! data, command implementations and report figures.

pub mod commands;
pub mod config;
pub mod plots;
pub mod synth;
pub mod tables;

use cotton_phenology::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_BUDGET: i32 = 4;

/// Process exit status for a failed command.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } => EXIT_IO,
        Error::NotConverged { .. } | Error::BudgetExceeded { .. } => EXIT_BUDGET,
        _ => EXIT_VALIDATION,
    }
}
