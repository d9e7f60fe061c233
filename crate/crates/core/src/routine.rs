//! Routine files and the runner that executes tests and persists them.
//!
//! A routine is a sequence of `SET KEY=VALUE` lines, which change the
//! working configuration, and `RUN ingest|query|both` lines, which execute a
//! test with the configuration as it stands. Blank lines and `#` comments
//! are ignored. The whole file is checked, including every configuration a
//! `RUN` would see, before the first test starts.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use crate::adapter::{factory_for, ReferenceStore};
use crate::config::{Config, ParseMode, KEYS};
use crate::controller::{default_probe, run_test, TestKind};
use crate::error::{ConfigError, Error, Result};
use crate::ingestion::write_workload_dump;
use crate::monitor::{Probe, RemoteProbe};
use crate::persist::{self, Mode, RunRecord};
use crate::schema::derive_schema;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Directive {
    Set { key: String, value: String },
    Run(Mode),
}

pub fn parse_routine(text: &str) -> Result<Vec<Directive>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let syntax = |reason: String| ConfigError::Syntax {
            line: i + 1,
            reason,
        };
        let (word, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let rest = rest.trim();
        match word {
            "SET" => {
                let (k, v) = rest
                    .split_once('=')
                    .ok_or_else(|| syntax(format!("expected SET KEY=VALUE, got {line:?}")))?;
                let key = k.trim();
                if !KEYS.contains(&key) {
                    return Err(ConfigError::UnknownKey(key.to_string()));
                }
                out.push(Directive::Set {
                    key: key.to_string(),
                    value: v.trim().to_string(),
                });
            }
            "RUN" => {
                let mode = rest.parse().map_err(|e: Error| syntax(e.to_string()))?;
                out.push(Directive::Run(mode));
            }
            _ => return Err(syntax(format!("unknown directive {word:?}"))),
        }
    }
    Ok(out)
}

/// Resolve a routine against a starting configuration into the runs it
/// would perform, validating each one.
pub fn plan_routine(
    base: &Config,
    directives: &[Directive],
) -> Result<Vec<(Config, Mode)>, ConfigError> {
    let mut map: BTreeMap<String, String> = base
        .entries()
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    let mut plan = Vec::new();
    for d in directives {
        match d {
            Directive::Set { key, value } => {
                map.insert(key.clone(), value.clone());
            }
            Directive::Run(mode) => plan.push((Config::from_map(&map, ParseMode::Strict)?, *mode)),
        }
    }
    Ok(plan)
}

/// Executes runs and writes their records. The reference store is shared by
/// all runs, so a query run can follow an ingest run.
pub struct Runner {
    pub store: Arc<Mutex<ReferenceStore>>,
    /// Where run directories go; `None` keeps records in memory only.
    pub out_dir: Option<PathBuf>,
    /// Force environment cleanup off regardless of the config.
    pub no_cleanup: bool,
    /// Also write the generated records to `workload.csv`.
    pub dump_workload: bool,
    /// Pull monitor samples from this stats endpoint instead of local `/proc`.
    pub remote_monitor: Option<String>,
}

impl Default for Runner {
    fn default() -> Self {
        Runner {
            store: Arc::new(Mutex::new(ReferenceStore::new())),
            out_dir: None,
            no_cleanup: false,
            dump_workload: false,
            remote_monitor: None,
        }
    }
}

impl Runner {
    fn probe(&self, cfg: &Config) -> Result<Option<Box<dyn Probe>>> {
        if cfg.monitor_interval == 0 {
            return Ok(None);
        }
        Ok(Some(match &self.remote_monitor {
            Some(url) => Box::new(RemoteProbe::new(url)?),
            None => default_probe(cfg),
        }))
    }

    pub fn run(&self, cfg: &Config, mode: Mode) -> Result<RunRecord> {
        let mut cfg = cfg.clone();
        if self.no_cleanup {
            cfg.enable_cleanup = false;
        }
        cfg.validate()?;
        let factory = factory_for(&cfg, self.store.clone())?;
        let mut run = RunRecord {
            run_id: persist::new_run_id(&cfg),
            config: cfg.clone(),
            mode,
            ingest: None,
            query: None,
            dir: None,
        };
        if matches!(mode, Mode::Ingest | Mode::Both) {
            log::info!(
                "ingestion test: {} clients, {} epochs",
                cfg.client_number,
                cfg.epoch
            );
            run.ingest = Some(run_test(
                &cfg,
                TestKind::Ingest,
                factory.as_ref(),
                self.probe(&cfg)?,
            )?);
        }
        if matches!(mode, Mode::Query | Mode::Both) {
            log::info!(
                "query test: {} clients, {} queries each",
                cfg.client_number,
                cfg.epoch
            );
            run.query = Some(run_test(
                &cfg,
                TestKind::Query,
                factory.as_ref(),
                self.probe(&cfg)?,
            )?);
        }
        if let Some(out) = &self.out_dir {
            let dir = persist::persist(&mut run, out)?;
            if self.dump_workload && run.ingest.is_some() {
                let path = dir.join(persist::WORKLOAD_FILE);
                let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
                let schema = Arc::new(derive_schema(&cfg));
                write_workload_dump(&Arc::new(cfg.clone()), &schema, BufWriter::new(f))?;
            }
            log::info!("run {} written to {}", run.run_id, dir.display());
        }
        Ok(run)
    }

    /// Check the whole routine, then execute its runs in order.
    pub fn run_routine(&self, base: &Config, text: &str) -> Result<Vec<RunRecord>> {
        let plan = plan_routine(base, &parse_routine(text)?)?;
        plan.iter()
            .map(|(cfg, mode)| self.run(cfg, *mode))
            .collect()
    }
}
