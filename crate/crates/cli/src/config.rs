//! Run configuration file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Deserialize;
use welfare_bounds::data_io::{self, ImputationRate};
use welfare_bounds::inference::{InferenceConfig, MicroData};
use welfare_bounds::model::{EnrollmentShares, ProgramConfig};
use welfare_bounds::oracle::UtilityModel;
use welfare_bounds::Money;

use crate::InputError;

/// Student and school CSV files; relative paths resolve against the config file.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataFiles {
    pub students: PathBuf,
    pub schools: PathBuf,
    #[serde(default)]
    pub rounding: Money,
    #[serde(default)]
    pub pool_equal_tuition: bool,
    #[serde(default)]
    pub imputation: ImputationRate,
}

/// Program terms when the voucher schools come from the data files.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProgramTerms {
    pub tau_sq: Money,
    pub gov_cost: Money,
    pub admin_cost: Money,
    #[serde(default)]
    pub extra_offset: Money,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub program: Option<ProgramConfig>,
    pub terms: Option<ProgramTerms>,
    pub shares: Option<EnrollmentShares>,
    pub data: Option<DataFiles>,
    #[serde(default)]
    pub inference: InferenceConfig,
    pub model: Option<UtilityModel>,
}

/// Parsed configuration with the data, if any, already loaded.
pub struct Loaded {
    pub config: RunConfig,
    pub program: ProgramConfig,
    pub micro: Option<MicroData>,
    pub bytes: Vec<u8>,
}

impl Loaded {
    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| InputError(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: RunConfig = serde_json::from_slice(&bytes)
            .map_err(|e| InputError(format!("config {}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let mut micro = None;
        let mut from_data = None;
        if let Some(d) = &mut config.data {
            for p in [&mut d.students, &mut d.schools] {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
            let ds = data_io::load(&d.students, &d.schools, d.rounding, d.pool_equal_tuition)?;
            micro = Some(data_io::impute_missing(&ds, d.imputation)?);
            from_data = Some(ds.voucher_schools);
        }
        let program = match (&config.program, &config.terms, from_data) {
            (Some(p), None, _) => p.clone(),
            (None, Some(t), Some(schools)) => {
                ProgramConfig::new(schools, t.tau_sq, t.gov_cost, t.admin_cost)?.with_offset(t.extra_offset)?
            }
            (None, Some(_), None) => bail!(InputError("`terms` needs `data` to supply the voucher schools".into())),
            (Some(_), Some(_), _) => bail!(InputError("give either `program` or `terms`, not both".into())),
            (None, None, _) => bail!(InputError("config needs `program`, or `terms` with `data`".into())),
        };
        program.validate()?;
        config.inference.validate()?;
        if let Some(m) = &micro {
            if m.n_alternatives != program.n_alternatives() {
                bail!(InputError(format!(
                    "data have {} alternatives but the program has {}",
                    m.n_alternatives,
                    program.n_alternatives()
                )));
            }
        }
        Ok(Loaded { config, program, micro, bytes })
    }

    /// Shares from the data files, or the `shares` block.
    pub fn shares(&self) -> anyhow::Result<EnrollmentShares> {
        let s = match (&self.micro, &self.config.shares) {
            (Some(m), _) => m.shares(self.config.inference.weighted)?,
            (None, Some(s)) => s.clone(),
            (None, None) => bail!(InputError("config needs `shares` or `data`".into())),
        };
        s.check_against(&self.program)?;
        Ok(s)
    }

    /// Micro data for inference; share counts stand in when no files are given.
    pub fn micro_data(&self) -> anyhow::Result<MicroData> {
        match (&self.micro, &self.config.shares) {
            (Some(m), _) => Ok(m.clone()),
            (None, Some(s)) => MicroData::from_shares(s).context("rebuilding micro data from share counts"),
            (None, None) => bail!(InputError("inference needs `data`, or `shares` with counts".into())),
        }
    }
}
