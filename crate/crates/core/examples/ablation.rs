//! Side-by-side ablation of verification, memory and the probability map on
//! a few seeds.
//!
//! cargo run --release --example ablation -- [seeds]

use oval::config::{Config, Knowledge};
use oval::eval::{ablation_table, generate_lifelong_dataset, run_ablation, Variant};

fn main() -> anyhow::Result<()> {
    let seeds: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(2);
    let k = Knowledge::builtin();
    let cfg = Config::profile("desk", None)?;
    let data = (0..seeds)
        .map(|s| generate_lifelong_dataset(s, &cfg.dataset, &k, cfg.run.success_radius))
        .collect::<Result<Vec<_>, _>>()?;
    let report = run_ablation(&cfg, &k, &Variant::system_ablation(), &data)?;
    print!("{}", ablation_table(&report));
    Ok(())
}
