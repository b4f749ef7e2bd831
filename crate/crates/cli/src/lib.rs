//! Command implementations behind the `roleablate` binary.
//!
//! Every command returns core errors unchanged so the binary can map them
//! to exit codes: 0 on success, 1 when an experiment fails, 2 for bad
//! inputs or configuration.

mod commands;
mod spec;

pub use commands::{
    cmd_analyze, cmd_ingest, cmd_replay, cmd_report, cmd_run, cmd_split, cmd_stats, cmd_synth, load_dataset,
    AnalyzeOptions, AnalyzeReport, IngestSummary, RunSummary, FAILED_MARKER,
};
pub use spec::{hash_path, ExperimentSpec, Manifest};

pub const EXIT_EXPERIMENT: u8 = 1;
pub const EXIT_INPUT: u8 = 2;

/// Exit code for an error: input errors anywhere in the chain give 2,
/// everything else 1.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    let core = err.chain().find_map(|e| e.downcast_ref::<roleablate::Error>());
    match core {
        Some(e) if e.is_input_error() => EXIT_INPUT,
        Some(_) => EXIT_EXPERIMENT,
        None if err.chain().any(|e| e.is::<serde_json::Error>()) => EXIT_INPUT,
        None => EXIT_EXPERIMENT,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use roleablate::Error;

    #[test]
    fn exit_codes_follow_error_kind() {
        let input = anyhow::Error::new(Error::InvalidConfig("x".into()).context("loading"));
        assert_eq!(exit_code(&input), EXIT_INPUT);
        let failed = anyhow::Error::new(Error::Training("diverged".into())).context("run 0");
        assert_eq!(exit_code(&failed), EXIT_EXPERIMENT);
        assert_eq!(exit_code(&anyhow::anyhow!("other")), EXIT_EXPERIMENT);
    }
}
