use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use oval::config::{Config, Knowledge, CONFIG_DIR_ENV};
use oval::eval::{
    ablation_table, curves, generate_lifelong_dataset, run_ablation, run_lifelong, Dataset, EvalReport, Variant,
};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "oval", version, about = "Lifelong open-vocabulary object navigation harness")]
struct Cli {
    /// Directory whose files override the built-in configs.
    #[arg(long, global = true, env = CONFIG_DIR_ENV)]
    config_dir: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Desk,
    PaperDefaults,
}

impl Profile {
    fn name(self) -> &'static str {
        match self {
            Profile::Desk => "desk",
            Profile::PaperDefaults => "paper-defaults",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    /// verify-stop, memory and probability-map removal
    System,
    /// each exploration factor removed
    Factors,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Config file; takes precedence over --profile.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "desk")]
    profile: Profile,
}

impl ConfigArgs {
    fn load(&self, dir: Option<&Path>) -> Result<Config> {
        Ok(match &self.config {
            Some(p) => Config::load_file(p)?,
            None => Config::profile(self.profile.name(), dir)?,
        })
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a lifelong dataset (scenes and episodes) as JSON.
    Generate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Run the full system on a dataset.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Dataset JSON; generated from --seed when omitted.
        #[arg(long)]
        episodes: Option<PathBuf>,
        /// Output stem; writes <stem>.json, <stem>.csv and <stem>.txt.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Compare toggle variants on identical episodes and seeds.
    Ablate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_enum, default_value = "system")]
        suite: Suite,
        /// Seeds 0..n, one dataset each.
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Re-emit tables and curve data from a saved report.
    Report {
        report: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
    Curves,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let dir = cli.config_dir.as_deref();
    let knowledge = Knowledge::load(dir)?;
    match cli.cmd {
        Cmd::Generate { cfg, seed, out } => {
            let c = cfg.load(dir)?;
            let d = generate_lifelong_dataset(seed, &c.dataset, &knowledge, c.run.success_radius)?;
            std::fs::write(&out, d.to_json()?).with_context(|| format!("writing {}", out.display()))?;
            eprintln!("{} scenes, {} episodes -> {}", d.scenes.len(), d.episodes.len(), out.display());
        }
        Cmd::Eval { cfg, seed, episodes, out } => {
            let c = cfg.load(dir)?;
            let d = match episodes {
                Some(p) => Dataset::from_json(
                    &std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?,
                )?,
                None => generate_lifelong_dataset(seed, &c.dataset, &knowledge, c.run.success_radius)?,
            };
            let r = run_lifelong(&d, &c, &knowledge, seed)?;
            match out {
                Some(stem) => write_report(&stem, &r)?,
                None => print!("{}", r.to_text()),
            }
        }
        Cmd::Ablate { cfg, suite, seeds, out } => {
            let c = cfg.load(dir)?;
            if seeds == 0 {
                bail!("--seeds must be positive");
            }
            let datasets = (0..seeds)
                .map(|s| generate_lifelong_dataset(s, &c.dataset, &knowledge, c.run.success_radius))
                .collect::<Result<Vec<_>, _>>()?;
            let variants = match suite {
                Suite::System => Variant::system_ablation(),
                Suite::Factors => Variant::factor_ablation(),
            };
            let a = run_ablation(&c, &knowledge, &variants, &datasets)?;
            let table = ablation_table(&a);
            if let Some(p) = out {
                std::fs::write(&p, serde_json::to_string_pretty(&a)?)?;
            }
            print!("{table}");
        }
        Cmd::Report { report, format } => {
            let r = EvalReport::from_json(&std::fs::read_to_string(&report)?)?;
            match format {
                Format::Text => print!("{}", r.to_text()),
                Format::Csv => print!("{}", r.to_csv()),
                Format::Curves => {
                    println!("target,episodes,sr,spl");
                    for c in curves(&r.records) {
                        println!("{},{},{:.4},{:.4}", c.index + 1, c.episodes, c.sr, c.spl);
                    }
                }
            }
        }
    }
    Ok(())
}

fn write_report(stem: &Path, r: &EvalReport) -> Result<()> {
    std::fs::write(stem.with_extension("json"), r.to_json()?)?;
    std::fs::write(stem.with_extension("csv"), r.to_csv())?;
    std::fs::write(stem.with_extension("txt"), r.to_text())?;
    Ok(())
}
