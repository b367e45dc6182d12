use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use vlc_wdm::channel::{ChannelModel, ThreeDbCriterion};
use vlc_wdm::pipeline::{
    basis_name, detection_report, illuminance_csv, illuminance_report, illuminance_summaries, rate_curves,
    run_table2, scenario_csv, scenario_outcomes, RunConfig, SCHEMA_LINE,
};
use vlc_wdm::scene::{IntensityBasis, ReceiverKind};

#[derive(Parser, Debug)]
#[command(name = "vlcsim", version, about = "Multi-user RYGB laser VLC room simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run only this scenario (1-4).
    #[arg(long, global = true)]
    scenario: Option<u8>,
    #[arg(long, global = true, value_enum)]
    receiver: Option<ReceiverArg>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Double the reflecting element sizes.
    #[arg(long, global = true)]
    fast: bool,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Background photocurrent per photodetector, A.
    #[arg(long, global = true)]
    ibg: Option<f64>,
    /// Whether the luminous intensity figure is per LD or per unit.
    #[arg(long = "cd-per", global = true, value_enum)]
    cd_per: Option<CdPer>,
    #[arg(long, global = true, value_enum)]
    threedb: Option<ThreeDb>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// 3-dB bandwidth of the strongest link along both lanes.
    Table2,
    /// Tone identification statistics and histograms.
    Detect,
    /// Three-user scenarios with the mobile sweep.
    Scenarios,
    /// Floor illuminance map.
    Illuminance,
    /// Everything above.
    All,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ReceiverArg {
    Nir,
    Niadr,
    Both,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum CdPer {
    Ld,
    Unit,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ThreeDb {
    Sqrt2,
    Half,
}

fn run_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            RunConfig::from_toml(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = cli.scenario {
        cfg.scenarios = vec![s];
    }
    if let Some(r) = cli.receiver {
        cfg.receivers = match r {
            ReceiverArg::Nir => vec![ReceiverKind::NonImaging],
            ReceiverArg::Niadr => vec![ReceiverKind::AngleDiversity],
            ReceiverArg::Both => ReceiverKind::ALL.to_vec(),
        };
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.fast |= cli.fast;
    if let Some(i) = cli.ibg {
        cfg.noise.background_current = i;
    }
    if let Some(c) = cli.cd_per {
        cfg.scene.units.intensity_basis = match c {
            CdPer::Ld => IntensityBasis::Ld,
            CdPer::Unit => IntensityBasis::Unit,
        };
    }
    if let Some(t) = cli.threedb {
        cfg.threedb = match t {
            ThreeDb::Sqrt2 => ThreeDbCriterion::Sqrt2,
            ThreeDb::Half => ThreeDbCriterion::Half,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn kind_tag(kind: ReceiverKind) -> &'static str {
    match kind {
        ReceiverKind::NonImaging => "nir",
        ReceiverKind::AngleDiversity => "niadr",
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn table2(cfg: &RunConfig, model: &ChannelModel, out: &Path) -> Result<()> {
    write(out, "table2.csv", &run_table2(cfg, model)?)
}

fn detect(cfg: &RunConfig, model: &ChannelModel, out: &Path) -> Result<()> {
    for &kind in &cfg.receivers {
        let report = detection_report(cfg, model, kind)?;
        let tag = kind_tag(kind);
        write(out, &format!("detect_{tag}.txt"), &report.to_text())?;
        if let Some(est) = &report.estimate {
            for (which, h) in [("desired", &est.desired_histogram), ("undesired", &est.undesired_histogram)] {
                let body = format!("{SCHEMA_LINE}\n{}", h.to_delimited());
                write(out, &format!("hist_{tag}_{which}.csv"), &body)?;
            }
        }
    }
    Ok(())
}

fn scenarios(cfg: &RunConfig, model: &ChannelModel, out: &Path) -> Result<()> {
    let outcomes = scenario_outcomes(cfg, model)?;
    write(out, "scenarios.csv", &scenario_csv(&outcomes))?;
    for (name, body) in rate_curves(&outcomes) {
        write(out, &name, &body)?;
    }
    Ok(())
}

fn illuminance(cfg: &RunConfig, out: &Path) -> Result<()> {
    let summaries = illuminance_summaries(cfg)?;
    for s in &summaries {
        write(out, &format!("illuminance_{}.csv", basis_name(s.basis)), &illuminance_csv(&s.map))?;
    }
    let report = illuminance_report(&summaries);
    write(out, "illuminance_summary.txt", &report)?;
    print!("{report}");
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = run_config(cli).context("stage config")?;
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("stage config: worker pool")?;
    }
    fs::create_dir_all(&cli.out).with_context(|| format!("stage output: creating {}", cli.out.display()))?;
    let out = cli.out.as_path();
    let needs_model = cli.command != Command::Illuminance;
    let model = if needs_model {
        Some(cfg.build_model().context("stage scene")?)
    } else {
        None
    };
    let model = model.as_ref();
    let all = cli.command == Command::All;
    if all || cli.command == Command::Table2 {
        table2(&cfg, model.unwrap(), out).context("stage table2")?;
    }
    if all || cli.command == Command::Detect {
        detect(&cfg, model.unwrap(), out).context("stage detect")?;
    }
    if all || cli.command == Command::Scenarios {
        scenarios(&cfg, model.unwrap(), out).context("stage scenarios")?;
    }
    if all || cli.command == Command::Illuminance {
        illuminance(&cfg, out).context("stage illuminance")?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
