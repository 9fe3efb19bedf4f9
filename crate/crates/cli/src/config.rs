//! Strict-schema configuration file handling.
//!
//! A single TOML file describes a run; unknown keys are errors. Scalar
//! numerics can be overridden by environment variables and flags with
//! precedence flag > env > file > default.

use std::path::Path;

use serde::{Deserialize, Serialize};

use hybridq_core::classical::PotentialSpec;
use hybridq_core::hybrid::{
    ClassicalParams, CouplingParams, HybridConfig, NumericsParams, PacketSpec, RunMode,
};
use hybridq_core::oscillator::FockBasis;
use hybridq_core::sse::{Convention, Integrator};

use crate::error::CliError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuantumTable {
    dim: Option<usize>,
    mass: Option<f64>,
    omega: Option<f64>,
    hbar: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "kebab-case")]
enum PotentialTable {
    Free,
    Harmonic { stiffness: f64 },
    Polynomial { coeffs: Vec<f64> },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassicalTable {
    mass: Option<f64>,
    x0: Option<f64>,
    p0: Option<f64>,
    potential: Option<PotentialTable>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CouplingTable {
    lambda: Option<f64>,
    sigma: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PacketTable {
    x: f64,
    p: f64,
    #[serde(default)]
    amp_re: Option<f64>,
    #[serde(default)]
    amp_im: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NumericsTable {
    dt: Option<f64>,
    t_final: Option<f64>,
    output_stride: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunTable {
    mode: Option<RunMode>,
    convention: Option<Convention>,
    integrator: Option<Integrator>,
    seed: Option<u64>,
    frozen_x: Option<f64>,
}

/// On-disk schema. Only `coupling.lambda` and `coupling.sigma` are required;
/// everything else carries documented defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    quantum: Option<QuantumTable>,
    classical: Option<ClassicalTable>,
    coupling: Option<CouplingTable>,
    packets: Option<Vec<PacketTable>>,
    numerics: Option<NumericsTable>,
    run: Option<RunTable>,
}

/// Scalar overrides coming from flags or environment variables.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScalarOverrides {
    pub lambda: Option<f64>,
    pub sigma: Option<f64>,
    pub dt: Option<f64>,
    pub t_final: Option<f64>,
    pub dim: Option<usize>,
    pub seed: Option<u64>,
    pub output_stride: Option<usize>,
}

impl ScalarOverrides {
    /// Read the HYBRIDQ_* environment variables.
    pub fn from_env() -> Result<Self, CliError> {
        fn get<T: std::str::FromStr>(name: &str) -> Result<Option<T>, CliError> {
            match std::env::var(name) {
                Ok(v) => v.parse::<T>().map(Some).map_err(|_| CliError::Config {
                    field: name.to_string(),
                    reason: format!("cannot parse environment value {v:?}"),
                }),
                Err(_) => Ok(None),
            }
        }
        Ok(ScalarOverrides {
            lambda: get("HYBRIDQ_LAMBDA")?,
            sigma: get("HYBRIDQ_SIGMA")?,
            dt: get("HYBRIDQ_DT")?,
            t_final: get("HYBRIDQ_T_FINAL")?,
            dim: get("HYBRIDQ_DIM")?,
            seed: get("HYBRIDQ_SEED")?,
            output_stride: get("HYBRIDQ_OUTPUT_STRIDE")?,
        })
    }

    /// Later (higher-precedence) values win.
    pub fn layered_over(self, lower: ScalarOverrides) -> ScalarOverrides {
        ScalarOverrides {
            lambda: self.lambda.or(lower.lambda),
            sigma: self.sigma.or(lower.sigma),
            dt: self.dt.or(lower.dt),
            t_final: self.t_final.or(lower.t_final),
            dim: self.dim.or(lower.dim),
            seed: self.seed.or(lower.seed),
            output_stride: self.output_stride.or(lower.output_stride),
        }
    }
}

/// Parse and validate a config file, applying overrides.
pub fn parse_config(path: &Path, overrides: ScalarOverrides) -> Result<HybridConfig<f64>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    parse_config_str(&text, overrides)
}

pub fn parse_config_str(
    text: &str,
    overrides: ScalarOverrides,
) -> Result<HybridConfig<f64>, CliError> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| CliError::Config {
        field: "<file>".to_string(),
        reason: e.to_string(),
    })?;

    // required fields, reported together
    let coupling = file.coupling.clone().unwrap_or(CouplingTable {
        lambda: None,
        sigma: None,
    });
    let mut missing = Vec::new();
    if coupling.lambda.is_none() && overrides.lambda.is_none() {
        missing.push("coupling.lambda");
    }
    if coupling.sigma.is_none() && overrides.sigma.is_none() {
        missing.push("coupling.sigma");
    }
    if !missing.is_empty() {
        return Err(CliError::Config {
            field: missing.join(", "),
            reason: format!("missing required fields: {}", missing.join(", ")),
        });
    }

    let quantum = file.quantum.unwrap_or_default();
    let classical = file.classical.unwrap_or_default();
    let numerics = file.numerics.unwrap_or_default();
    let run = file.run.unwrap_or_default();

    let potential = match classical.potential {
        None | Some(PotentialTable::Free) => PotentialSpec::Free,
        Some(PotentialTable::Harmonic { stiffness }) => PotentialSpec::Harmonic { stiffness },
        Some(PotentialTable::Polynomial { coeffs }) => PotentialSpec::Polynomial { coeffs },
    };
    let packets = match file.packets {
        None => vec![PacketSpec {
            x: 0.0,
            p: 0.0,
            amp_re: 1.0,
            amp_im: 0.0,
        }],
        Some(list) => list
            .into_iter()
            .map(|p| PacketSpec {
                x: p.x,
                p: p.p,
                amp_re: p.amp_re.unwrap_or(1.0),
                amp_im: p.amp_im.unwrap_or(0.0),
            })
            .collect(),
    };

    let config = HybridConfig {
        basis: FockBasis {
            dim: overrides.dim.or(quantum.dim).unwrap_or(64),
            mass: quantum.mass.unwrap_or(1.0),
            omega: quantum.omega.unwrap_or(1.0),
            hbar: quantum.hbar.unwrap_or(1.0),
        },
        classical: ClassicalParams {
            mass: classical.mass.unwrap_or(1.0),
            potential,
            x0: classical.x0.unwrap_or(0.0),
            p0: classical.p0.unwrap_or(0.0),
        },
        coupling: CouplingParams {
            lambda: overrides.lambda.or(coupling.lambda).expect("checked above"),
            sigma: overrides.sigma.or(coupling.sigma).expect("checked above"),
        },
        initial_packets: packets,
        numerics: NumericsParams {
            dt: overrides.dt.or(numerics.dt).unwrap_or(1e-3),
            t_final: overrides.t_final.or(numerics.t_final).unwrap_or(1.0),
            output_stride: overrides
                .output_stride
                .or(numerics.output_stride)
                .unwrap_or(1),
        },
        convention: run.convention.unwrap_or(Convention::ChainConsistent),
        integrator: run.integrator.unwrap_or(Integrator::SplitStep),
        mode: run.mode.unwrap_or(RunMode::Hybrid),
        seed: overrides.seed.or(run.seed).unwrap_or(0),
        frozen_x: run.frozen_x,
    };
    config.validate().map_err(|e| CliError::Config {
        field: "<validation>".to_string(),
        reason: e.to_string(),
    })?;
    Ok(config)
}

/// Serialize a resolved config back into the file schema (round-trips through
/// [`parse_config_str`] to an equal config).
pub fn resolved_to_toml(config: &HybridConfig<f64>) -> String {
    let potential = match &config.classical.potential {
        PotentialSpec::Free => PotentialTable::Free,
        PotentialSpec::Harmonic { stiffness } => PotentialTable::Harmonic {
            stiffness: *stiffness,
        },
        PotentialSpec::Polynomial { coeffs } => PotentialTable::Polynomial {
            coeffs: coeffs.clone(),
        },
    };
    let file = ConfigFile {
        quantum: Some(QuantumTable {
            dim: Some(config.basis.dim),
            mass: Some(config.basis.mass),
            omega: Some(config.basis.omega),
            hbar: Some(config.basis.hbar),
        }),
        classical: Some(ClassicalTable {
            mass: Some(config.classical.mass),
            x0: Some(config.classical.x0),
            p0: Some(config.classical.p0),
            potential: Some(potential),
        }),
        coupling: Some(CouplingTable {
            lambda: Some(config.coupling.lambda),
            sigma: Some(config.coupling.sigma),
        }),
        packets: Some(
            config
                .initial_packets
                .iter()
                .map(|p| PacketTable {
                    x: p.x,
                    p: p.p,
                    amp_re: Some(p.amp_re),
                    amp_im: Some(p.amp_im),
                })
                .collect(),
        ),
        numerics: Some(NumericsTable {
            dt: Some(config.numerics.dt),
            t_final: Some(config.numerics.t_final),
            output_stride: Some(config.numerics.output_stride),
        }),
        run: Some(RunTable {
            mode: Some(config.mode),
            convention: Some(config.convention),
            integrator: Some(config.integrator),
            seed: Some(config.seed),
            frozen_x: config.frozen_x,
        }),
    };
    toml::to_string_pretty(&file).expect("config serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_reports_required_fields() {
        let err = parse_config_str("", ScalarOverrides::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("coupling.lambda"), "{msg}");
        assert!(msg.contains("coupling.sigma"), "{msg}");
    }

    #[test]
    fn minimal_file_gets_documented_defaults() {
        let cfg = parse_config_str(
            "[coupling]\nlambda = 1.0\nsigma = 1.0\n",
            ScalarOverrides::default(),
        )
        .unwrap();
        assert_eq!(cfg.basis.dim, 64);
        assert_eq!(cfg.basis.hbar, 1.0);
        assert_eq!(cfg.basis.mass, 1.0);
        assert_eq!(cfg.basis.omega, 1.0);
        assert_eq!(cfg.classical.mass, 1.0);
        assert_eq!(cfg.numerics.dt, 1e-3);
        assert_eq!(cfg.convention, Convention::ChainConsistent);
        assert_eq!(cfg.mode, RunMode::Hybrid);
        assert_eq!(cfg.initial_packets.len(), 1);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse_config_str(
            "[coupling]\nlambda = 1.0\nsigma = 1.0\nlamda = 2.0\n",
            ScalarOverrides::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("lamda"), "{err}");
    }

    #[test]
    fn roundtrip_reparses_to_equal_config() {
        let text = r#"
[quantum]
dim = 32

[classical]
mass = 2.0
potential = { kind = "harmonic", stiffness = 0.5 }

[coupling]
lambda = 0.7
sigma = 1.3

[[packets]]
x = -5.0
p = 0.0
amp_re = 0.7071067811865476

[[packets]]
x = 5.0
p = 0.0
amp_re = 0.7071067811865476

[numerics]
dt = 0.002
t_final = 2.0
output_stride = 10

[run]
mode = "chain"
seed = 9
"#;
        let cfg = parse_config_str(text, ScalarOverrides::default()).unwrap();
        let serialized = resolved_to_toml(&cfg);
        let cfg2 = parse_config_str(&serialized, ScalarOverrides::default()).unwrap();
        assert_eq!(cfg, cfg2);
        assert_eq!(cfg.digest(), cfg2.digest());
    }

    #[test]
    fn overrides_beat_file_values() {
        let over = ScalarOverrides {
            lambda: Some(2.5),
            dt: Some(5e-4),
            ..Default::default()
        };
        let cfg =
            parse_config_str("[coupling]\nlambda = 1.0\nsigma = 1.0\n", over).unwrap();
        assert_eq!(cfg.coupling.lambda, 2.5);
        assert_eq!(cfg.numerics.dt, 5e-4);
        assert_eq!(cfg.coupling.sigma, 1.0);
    }
}
