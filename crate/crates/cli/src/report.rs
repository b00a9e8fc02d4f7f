//! `report`: runs every analysis named in the config and bundles them.
//!
//! Each section of the config is a table keyed like the matching command,
//! with that command's flags as keys:
//!
//! ```toml
//! output-dir = "report"
//!
//! [cp-ple]
//! input = "cp.csv"
//! thresholds = "1:17"
//!
//! [scaling]
//! input = "t2.csv"
//! ```

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{ArgMatches, Args};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::config::{merge, section};
use crate::fit::{
    self, CpPleArgs, DecayArgs, DiffusionArgs, RabiArgs, RamseyArgs, SaturationArgs, ScalingArgs, SweepFitArgs,
};
use crate::output::{envelope, require, write_json, write_table, Analysis, Status};
use crate::survey::{self, DamageArgs, InhomogeneousArgs, OccurrenceArgs, PlmapArgs};

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ReportArgs {
    /// Directory for report.json and one CSV per table.
    #[arg(short, long)]
    pub output_dir: Option<PathBuf>,
}

pub const SECTIONS: [&str; 12] = [
    "damage",
    "plmap",
    "saturation",
    "occurrence",
    "inhomogeneous",
    "diffusion",
    "cp-ple",
    "rabi",
    "desr",
    "ramsey",
    "decay",
    "scaling",
];

fn run_section(name: &str, table: &Value) -> Result<(Value, Analysis)> {
    macro_rules! run {
        ($ty:ty, $f:path) => {{
            let args: $ty = section(name, table)?;
            (serde_json::to_value(&args)?, $f(&args)?)
        }};
    }
    Ok(match name {
        "damage" => run!(DamageArgs, survey::damage),
        "plmap" => run!(PlmapArgs, survey::plmap),
        "saturation" => run!(SaturationArgs, fit::saturation),
        "occurrence" => run!(OccurrenceArgs, survey::occurrence),
        "inhomogeneous" => run!(InhomogeneousArgs, survey::inhomogeneous),
        "diffusion" => run!(DiffusionArgs, fit::diffusion),
        "cp-ple" => run!(CpPleArgs, fit::cp_ple),
        "rabi" => run!(RabiArgs, fit::rabi),
        "desr" => run!(SweepFitArgs, fit::desr),
        "ramsey" => run!(RamseyArgs, fit::ramsey),
        "decay" => run!(DecayArgs, fit::decay),
        "scaling" => run!(ScalingArgs, fit::scaling),
        other => bail!("unknown report section `{other}`"),
    })
}

pub fn report(parsed: ReportArgs, matches: &ArgMatches, config: Option<&Map<String, Value>>) -> Result<Status> {
    let mut top = Map::new();
    let mut sections = Map::new();
    for (k, v) in config.into_iter().flatten() {
        if SECTIONS.contains(&k.as_str()) {
            sections.insert(k.clone(), v.clone());
        } else {
            top.insert(k.clone(), v.clone());
        }
    }
    let args: ReportArgs = merge(parsed, matches, Some(&top))?;
    let dir = require(&args.output_dir, "output-dir")?;
    if sections.is_empty() {
        bail!("the config names no analyses; add sections such as [cp-ple] or [damage]");
    }
    std::fs::create_dir_all(dir)?;
    let Value::Object(mut echo) = serde_json::to_value(&args)? else {
        bail!("arguments do not serialize to a table");
    };
    let mut results = Map::new();
    let mut status = Status::Done;
    for name in SECTIONS {
        let Some(table) = sections.get(name) else { continue };
        let (resolved, analysis) = run_section(name, table)?;
        echo.insert(name.to_string(), resolved);
        status = status.and(Status::from_converged(analysis.converged));
        let mut files = Vec::new();
        for t in &analysis.tables {
            let path = write_table(dir, "", t)?;
            files.push(path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default());
        }
        results.insert(
            name.to_string(),
            json!({ "converged": analysis.converged, "tables": files, "result": analysis.result }),
        );
    }
    write_json(Some(&dir.join("report.json")), &envelope("report", &echo, Value::Object(results))?)?;
    Ok(status)
}
