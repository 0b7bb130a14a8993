//! Command-line front end for the catmouse simulator: batch experiments,
//! the CRLB sweep, scenario ingestion and the environment server.

pub mod config;
pub mod experiment;
pub mod ingest;
pub mod server;
pub mod sweep;

pub use config::ExperimentConfig;
pub use experiment::{run_and_write, run_experiment, ExperimentOutput, RunRow, SummaryRow};
pub use sweep::{crlb_sweep, SweepConfig, SweepRow};

/// Fixed-width text table of a summary, one controller per line.
pub fn format_summary(rows: &[SummaryRow]) -> String {
    let mut s = format!(
        "{:<6} {:>5} {:>10} {:>9} {:>21} {:>8} {:>9} {:>7}\n",
        "ctrl", "n", "reward", "std", "ci95", "fuel", "cutoff", "in_tol"
    );
    for r in rows {
        s += &format!(
            "{:<6} {:>5} {:>10.2} {:>9.2} {:>10.2}..{:<10.2} {:>8.3} {:>9.2} {:>7.1}\n",
            r.controller,
            r.episodes,
            r.mean_reward,
            r.std_reward,
            r.ci95_low,
            r.ci95_high,
            r.mean_fuel,
            r.cutoff_fraction,
            r.mean_steps_within_tol
        );
    }
    s
}
