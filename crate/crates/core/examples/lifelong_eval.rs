//! Lifelong evaluation on a small suite: episodes grouped by floor, map and
//! memory carried between consecutive goals. Prints SR/SPL by target index.
//!
//! cargo run --release --example lifelong_eval -- [seed] [out-stem]

use oval::config::{Config, Knowledge};
use oval::eval::{generate_lifelong_dataset, run_lifelong};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let k = Knowledge::builtin();
    let mut cfg = Config::profile("desk", None)?;
    cfg.dataset.scenes = 4;
    let data = generate_lifelong_dataset(seed, &cfg.dataset, &k, cfg.run.success_radius)?;
    let report = run_lifelong(&data, &cfg, &k, seed)?;
    print!("{}", report.to_text());
    for r in report.records.iter().filter(|r| r.index_in_group == 0) {
        let group: Vec<_> = report.records.iter().filter(|x| x.group == r.group).collect();
        let mem: Vec<String> = group.iter().map(|x| format!("{}→{}", x.memory_at_start, x.memory_at_end)).collect();
        println!("group {} memory per episode: {}", r.group, mem.join(" "));
    }
    if let Some(stem) = args.next() {
        std::fs::write(format!("{stem}.json"), report.to_json()?)?;
        std::fs::write(format!("{stem}.csv"), report.to_csv())?;
    }
    Ok(())
}
