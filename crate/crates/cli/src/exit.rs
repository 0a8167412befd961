// SPDX-License-Identifier: Apache-2.0

//! Process exit codes and the mapping from errors onto them.

use sealedinfer::Error;

pub const OK: u8 = 0;
pub const EVAL_FAILED: u8 = 1;
pub const USAGE: u8 = 2;
pub const PROTOCOL: u8 = 3;
pub const IO: u8 = 4;

/// A bad flag value or argument combination that clap cannot catch.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn core_code(e: &Error) -> u8 {
    if e.is_protocol() {
        return PROTOCOL;
    }
    match e {
        Error::Io(_) | Error::Parse(_) | Error::BadRandomness(_) | Error::RandomnessReused(_) => IO,
        Error::Exhausted { .. } | Error::ExhaustedAt { .. } | Error::WrongKey | Error::AheParams(_) => PROTOCOL,
        _ => USAGE,
    }
}

/// Exit code for a failed command: the first recognised cause wins.
pub fn code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return USAGE;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return core_code(e);
        }
        if cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() {
            return IO;
        }
    }
    IO
}
