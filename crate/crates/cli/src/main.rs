use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use catmouse::control::ControllerKind;
use catmouse::env::CatSource;
use catmouse::ephemeris::{ScenarioTrack, EPHEMERIS_DT};
use catmouse_cli::ingest::{self, TleIngest};
use catmouse_cli::sweep::{crlb_sweep, write_sweep, SweepConfig};
use catmouse_cli::{format_summary, run_and_write, server, ExperimentConfig};
use chrono::DateTime;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "catmouse", version, about = "GEO cat-and-mouse evasion simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch experiment described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, value_delimiter = ',')]
        controllers: Option<Vec<ControllerKind>>,
    },
    /// Evaluate a trained policy weight file.
    EvalPolicy {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
        /// Use the mean action instead of sampling.
        #[arg(long)]
        deterministic: bool,
    },
    /// Mean localization bound per constellation size.
    CrlbSweep {
        #[arg(long, value_delimiter = ',', default_value = "30,60,100,150,200")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        sigma_d: Option<f64>,
        #[arg(long)]
        beam_deg: Option<f64>,
        #[arg(long, default_value = "crlb_table.csv")]
        out: PathBuf,
    },
    /// Build a Hill-frame scenario CSV from TLE files or ECEF tracks.
    IngestTle {
        #[arg(long, requires = "cat_tle", conflicts_with_all = ["mouse_track", "cat_track"])]
        mouse_tle: Option<PathBuf>,
        #[arg(long)]
        cat_tle: Option<PathBuf>,
        #[arg(long)]
        mouse_id: Option<u32>,
        #[arg(long)]
        cat_id: Option<u32>,
        /// Window start, RFC 3339; the later first epoch when omitted.
        #[arg(long)]
        start: Option<String>,
        #[arg(long, default_value_t = 24.0)]
        hours: f64,
        /// ECEF track CSV of the mouse (t_s,x_km,y_km,z_km).
        #[arg(long, requires = "cat_track")]
        mouse_track: Option<PathBuf>,
        #[arg(long)]
        cat_track: Option<PathBuf>,
        #[arg(long, default_value_t = EPHEMERIS_DT)]
        dt: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the environment over TCP (newline-delimited JSON).
    Serve {
        #[arg(long, default_value = "127.0.0.1:5555")]
        bind: String,
        /// Experiment config whose episode section is served.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Skip the per-episode step logs.
    #[arg(long)]
    no_logs: bool,
}

impl Overrides {
    fn apply(self, cfg: &mut ExperimentConfig) {
        if let Some(v) = self.runs {
            cfg.runs = v;
        }
        if let Some(v) = self.seeds {
            cfg.seeds = v;
        }
        if let Some(v) = self.output_dir {
            cfg.output_dir = v;
        }
        if let Some(v) = self.scenario {
            cfg.scenario = Some(v);
        }
        if self.threads.is_some() {
            cfg.threads = self.threads;
        }
        if self.no_logs {
            cfg.write_logs = false;
        }
    }
}

fn experiment(cfg: ExperimentConfig) -> Result<()> {
    let (out, paths) = run_and_write(&cfg)?;
    print!("{}", format_summary(&out.summary));
    println!("results: {}", paths.results.display());
    println!("runs:    {}", paths.runs.display());
    if let Some(l) = paths.logs {
        println!("logs:    {}", l.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Command::Run {
            config,
            overrides,
            controllers,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            overrides.apply(&mut cfg);
            if let Some(c) = controllers {
                cfg.controllers = c;
            }
            experiment(cfg)
        }
        Command::EvalPolicy {
            weights,
            config,
            overrides,
            deterministic,
        } => {
            let mut cfg = match config {
                Some(p) => ExperimentConfig::load(&p)?,
                None => ExperimentConfig::default(),
            };
            overrides.apply(&mut cfg);
            cfg.controllers = vec![ControllerKind::Rl];
            cfg.policy = Some(weights);
            cfg.controller.deterministic |= deterministic;
            experiment(cfg)
        }
        Command::CrlbSweep {
            sizes,
            samples,
            seed,
            sigma_d,
            beam_deg,
            out,
        } => {
            let d = SweepConfig::default();
            let cfg = SweepConfig {
                sizes,
                samples,
                seed,
                sigma_d: sigma_d.unwrap_or(d.sigma_d),
                beam_half_angle_deg: beam_deg.unwrap_or(d.beam_half_angle_deg),
                ..d
            };
            let rows = crlb_sweep(&cfg)?;
            for r in &rows {
                println!(
                    "{:>4} sats  sigma = ({:.4}, {:.4}, {:.4}) km  singular {:.3}  visible {:.1}",
                    r.num_sats, r.sigma_x_km, r.sigma_y_km, r.sigma_z_km, r.singular_fraction, r.mean_visible
                );
            }
            write_sweep(
                &rows,
                BufWriter::new(File::create(&out).with_context(|| format!("creating {}", out.display()))?),
            )?;
            println!("table: {}", out.display());
            Ok(())
        }
        Command::IngestTle {
            mouse_tle,
            cat_tle,
            mouse_id,
            cat_id,
            start,
            hours,
            mouse_track,
            cat_track,
            dt,
            out,
        } => {
            let rel = match (mouse_tle, cat_tle, mouse_track, cat_track) {
                (Some(m), Some(c), None, None) => {
                    let start = start
                        .map(|s| DateTime::parse_from_rfc3339(&s).map(|d| d.timestamp_millis() as f64 / 1e3))
                        .transpose()
                        .context("parsing --start")?;
                    ingest::from_tles(&TleIngest {
                        mouse: ingest::select(&ingest::load_tles(&m)?, mouse_id)?,
                        cat: ingest::select(&ingest::load_tles(&c)?, cat_id)?,
                        start,
                        duration: hours * 3600.0,
                        dt,
                    })?
                }
                (None, None, Some(m), Some(c)) => ingest::from_ecef_tracks(&m, &c, dt)?,
                _ => bail!("give either --mouse-tle/--cat-tle or --mouse-track/--cat-track"),
            };
            rel.track.save(&out)?;
            let warned = rel.warnings.iter().filter(|w| **w).count();
            println!("{} samples written to {}", rel.track.len(), out.display());
            if warned > 0 {
                eprintln!("warning: mouse orbit departs from circular at {warned} samples");
            }
            Ok(())
        }
        Command::Serve { bind, config, scenario } => {
            let cfg = match config {
                Some(p) => ExperimentConfig::load(&p)?,
                None => ExperimentConfig::default(),
            };
            let source = match scenario.or(cfg.scenario) {
                Some(p) => {
                    CatSource::Track(ScenarioTrack::load(&p).with_context(|| format!("loading {}", p.display()))?)
                }
                None => CatSource::Synthetic,
            };
            server::serve_env(bind, cfg.episode, source)
        }
    }
}
