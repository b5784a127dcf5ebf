use patchstitch::dataset::class_stats;

use crate::config::ConfigFile;
use crate::error::CliError;
use crate::{load_manifest, StatsArgs};

pub fn run(args: &StatsArgs) -> Result<(), CliError> {
    let cfg = ConfigFile::load(args.config.as_deref())?;
    cfg.check_keys(&["input", "csv"])?;
    let manifest = load_manifest(&args.input, &cfg)?;
    let stats = class_stats(&manifest);
    if args.json {
        println!(
            "{}",
            serde_json::to_string(&stats).expect("stats serialize")
        );
    } else {
        print!("{}", stats.to_table());
    }
    Ok(())
}
