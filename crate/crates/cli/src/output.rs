//! Deterministic output files: trajectory CSVs, summaries and the run
//! manifest. All floats print with shortest round-trip formatting, so a rerun
//! with the same config and seed is byte-identical.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use hybridq_core::hybrid::{HybridConfig, RecordRow, TrajectoryRecord};

use crate::error::CliError;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::Io {
            path: parent.display().to_string(),
            source: e,
        })?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    f.write_all(contents.as_bytes()).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for b in out {
        hex.push_str(&format!("{b:02x}"));
    }
    hex
}

/// Render a trajectory as CSV with `#`-prefixed header metadata.
pub fn trajectory_csv(record: &TrajectoryRecord<f64>, config: &HybridConfig<f64>) -> String {
    let meta = &record.meta;
    let mut out = String::new();
    out.push_str("# hybridq trajectory v1\n");
    out.push_str(&format!("# config_digest: {}\n", meta.config_digest));
    out.push_str(&format!(
        "# seed: {} stream_index: {}\n",
        meta.seed, meta.stream_index
    ));
    out.push_str(&format!(
        "# mode: {} convention: {} integrator: {}\n",
        mode_name(meta.mode),
        convention_name(meta.convention),
        integrator_name(meta.integrator),
    ));
    out.push_str(&format!(
        "# dt: {} output_stride: {} n_steps: {} noise_draws: {}\n",
        meta.dt, meta.output_stride, meta.n_steps, meta.noise_draws
    ));
    out.push_str(&format!(
        "# lambda: {} sigma: {} hbar: {}\n",
        config.coupling.lambda, config.coupling.sigma, config.basis.hbar
    ));
    out.push_str("# columns: t, X, P, <x>, <p>, Var(x), x_bar, prenorm, dW\n");
    out.push_str("# row semantics: state at t plus the increments of the step starting at t;\n");
    out.push_str("# the final row carries no step (dW = 0, prenorm = 1); x_bar = <x> when lambda = 0\n");
    out.push_str("t,x_cl,p_cl,x_expect,p_expect,x_var,x_bar,prenorm,dw\n");
    for r in &record.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.t, r.x_cl, r.p_cl, r.x_expect, r.p_expect, r.x_var, r.x_bar, r.prenorm, r.dw
        ));
    }
    out
}

fn mode_name(m: hybridq_core::hybrid::RunMode) -> &'static str {
    match m {
        hybridq_core::hybrid::RunMode::Hybrid => "hybrid",
        hybridq_core::hybrid::RunMode::MeanField => "mean-field",
        hybridq_core::hybrid::RunMode::Chain => "chain",
    }
}

fn convention_name(c: hybridq_core::sse::Convention) -> &'static str {
    match c {
        hybridq_core::sse::Convention::PaperLiteral => "paper-literal",
        hybridq_core::sse::Convention::ChainConsistent => "chain-consistent",
    }
}

fn integrator_name(i: hybridq_core::sse::Integrator) -> &'static str {
    match i {
        hybridq_core::sse::Integrator::SplitStep => "split-step",
        hybridq_core::sse::Integrator::EulerMaruyama => "euler-maruyama",
    }
}

/// Parse the data rows of a trajectory CSV (header comments skipped).
pub fn parse_trajectory_csv(text: &str) -> Result<Vec<RecordRow<f64>>, CliError> {
    let mut rows = Vec::new();
    for line in text.lines() {
        if line.starts_with('#') || line.starts_with('t') || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(CliError::Config {
                field: "<csv>".to_string(),
                reason: format!("expected 9 columns, got {}", fields.len()),
            });
        }
        let mut v = [0.0f64; 9];
        for (i, f) in fields.iter().enumerate() {
            v[i] = f.parse().map_err(|_| CliError::Config {
                field: "<csv>".to_string(),
                reason: format!("cannot parse {f:?}"),
            })?;
        }
        rows.push(RecordRow {
            t: v[0],
            x_cl: v[1],
            p_cl: v[2],
            x_expect: v[3],
            p_expect: v[4],
            x_var: v[5],
            x_bar: v[6],
            prenorm: v[7],
            dw: v[8],
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Everything needed to reproduce and verify a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub command: String,
    pub config: HybridConfig<f64>,
    pub config_digest: String,
    pub master_seed: u64,
    pub n_trajectories: usize,
    /// Per-trajectory noise streams are seeded by (master_seed, index).
    pub seed_derivation: String,
    pub outputs: Vec<OutputFile>,
    pub total_steps: u64,
    pub wall_clock_seconds: f64,
}

/// Collects output files, then writes the manifest last (the commit point).
pub struct ManifestBuilder {
    out_dir: PathBuf,
    manifest: RunManifest,
    started: std::time::Instant,
}

impl ManifestBuilder {
    pub fn new(
        out_dir: &Path,
        command: &str,
        config: &HybridConfig<f64>,
        master_seed: u64,
        n_trajectories: usize,
    ) -> Self {
        ManifestBuilder {
            out_dir: out_dir.to_path_buf(),
            manifest: RunManifest {
                artifact_version: ARTIFACT_VERSION.to_string(),
                command: command.to_string(),
                config: config.clone(),
                config_digest: config.digest(),
                master_seed,
                n_trajectories,
                seed_derivation: "chacha8(master_seed le64 || index le64 || \"hq-noise\")"
                    .to_string(),
                outputs: Vec::new(),
                total_steps: 0,
                wall_clock_seconds: 0.0,
            },
            started: std::time::Instant::now(),
        }
    }

    pub fn add_steps(&mut self, steps: u64) {
        self.manifest.total_steps += steps;
    }

    /// Write a file into the run directory and record its digest.
    pub fn emit(&mut self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.out_dir.join(name);
        write_file(&path, contents)?;
        self.manifest.outputs.push(OutputFile {
            path: name.to_string(),
            sha256: sha256_hex(contents.as_bytes()),
            bytes: contents.len(),
        });
        Ok(path)
    }

    /// Write the manifest; call once, after all outputs.
    pub fn finish(mut self) -> Result<RunManifest, CliError> {
        self.manifest.wall_clock_seconds = self.started.elapsed().as_secs_f64();
        let json =
            serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        write_file(&self.out_dir.join("manifest.json"), &json)?;
        Ok(self.manifest)
    }
}
