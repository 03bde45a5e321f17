use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use fracnmp::folti::{ExplicitPlant, PlantParams};
use fracnmp::{FoTransferFunction, PlantSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Where the plant comes from: a JSON file or the benchmark circuit.
#[derive(Debug, Clone, Args, Serialize, Deserialize, PartialEq)]
pub struct PlantArgs {
    /// Plant JSON file (explicit coefficients or the benchmark shorthand)
    #[arg(long, value_name = "FILE", conflicts_with_all = ["benchmark", "r2c2", "r3c3"])]
    pub plant: Option<PathBuf>,

    /// Use the benchmark RC circuit (the default when no --plant is given)
    #[arg(long)]
    pub benchmark: bool,

    /// Benchmark R2*C2 time constant [s]
    #[arg(long, default_value_t = PlantParams::default().r2c2)]
    pub r2c2: f64,

    /// Benchmark R3*C3 time constant [s]
    #[arg(long, default_value_t = PlantParams::default().r3c3)]
    pub r3c3: f64,
}

impl PlantArgs {
    pub fn load(&self) -> Result<FoTransferFunction, CliError> {
        match &self.plant {
            Some(path) => load_plant_file(path),
            None => Ok(PlantSpec::Benchmark {
                benchmark: PlantParams {
                    r2c2: self.r2c2,
                    r3c3: self.r3c3,
                },
            }
            .build()?),
        }
    }

    pub fn input_files(&self) -> Vec<PathBuf> {
        self.plant.iter().cloned().collect()
    }
}

pub fn load_plant_file(path: &Path) -> Result<FoTransferFunction, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read plant file {}: {e}", path.display())))?;
    let spec = parse_plant(&text).map_err(|msg| CliError::Input(format!("{}: {msg}", path.display())))?;
    Ok(spec.build()?)
}

/// Parses plant JSON, reporting syntax and schema errors with line, column
/// and the offending field path.
pub fn parse_plant(text: &str) -> Result<PlantSpec, String> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| format!("invalid JSON: {e}"))?;
    let is_benchmark = value.as_object().map(|o| o.contains_key("benchmark")).unwrap_or(false);
    if is_benchmark {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Shorthand {
            benchmark: PlantParams,
        }
        let s: Shorthand = typed(text)?;
        Ok(PlantSpec::Benchmark { benchmark: s.benchmark })
    } else {
        Ok(PlantSpec::Explicit(typed::<ExplicitPlant>(text)?))
    }
}

fn typed<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T, String> {
    let mut de = serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        format!("field `{path}`: {}", e.into_inner())
    })
}
