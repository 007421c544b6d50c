//! Flat `key = value` experiment configuration.
//!
//! One entry per line, `#` starts a comment. Keys carry a section prefix
//! (`ns.`, `criticality.`, `noether.`, `spde.`) when they belong to a single
//! experiment. Unknown keys are rejected. A handful of keys have defaults
//! that depend on the experiment; [`KEYS`] lists all of them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::CliError;

pub const EXPERIMENTS: [&str; 4] = ["ns-verify", "criticality", "noether", "spde-converge"];

/// A known key, its default and a one-line description.
pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub doc: &'static str,
}

macro_rules! keys {
    ($(($name:expr, $default:expr, $doc:expr)),* $(,)?) => {
        &[$(Key { name: $name, default: $default, doc: $doc }),*]
    };
}

/// Every accepted key. A default of `*` means the value depends on the
/// experiment, see [`experiment_default`].
pub const KEYS: &[Key] = keys![
    ("experiment", "ns-verify", "ns-verify | criticality | noether | spde-converge"),
    ("seed", "7", "master seed of the Brownian driver"),
    ("grid", "*", "grid side n (even, >= 4): 32, or 16 for spde-converge"),
    ("nu", "0.1", "viscosity"),
    ("dt", "0.001", "solver and flow time step"),
    ("t_final", "*", "horizon: 1 (ns-verify), 0.5 (criticality, noether), 0.25 (spde-converge)"),
    ("replicas", "*", "Monte Carlo replicas: 1 (ns-verify), 12 (criticality), 16 (noether), 256 (spde-converge)"),
    ("particles", "*", "particles per replica on a side x side grid: 12 (criticality), 16 (noether)"),
    ("branches", "32", "branches per particle in the generalized-derivative estimator"),
    ("eps-steps", "8", "branching window in solver steps"),
    ("init", "*", "initial field: taylor-green (ns-verify, spde-converge) or random (criticality, noether)"),
    ("init.kmax", "3", "largest |k_i| of the random initial field"),
    ("init.amplitude", "1.0", "max speed of the random initial field"),
    ("init.seed", "3", "seed of the random initial field"),
    ("out", "out", "output directory for reports"),
    ("report", "", "CSV series path; empty means <out>/<experiment>.csv"),
    ("save-trajectory", "", "directory for the trajectory checkpoint; empty disables"),
    ("save-ensemble", "", "file for the final flow ensemble checkpoint (criticality); empty disables"),
    ("ns.tol.linf", "1e-8", "max-norm error against the Taylor-Green decay"),
    ("ns.tol.residual", "1e-10", "max-norm momentum residual with the stored dv/dt"),
    ("ns.tol.divergence", "1e-10", "max-norm divergence of the velocity"),
    ("ns.tol.energy", "1e-10", "per-step energy-dissipation balance defect"),
    ("ns.tol.momentum", "1e-12", "drift of the mean momentum per unit time"),
    ("criticality.modes", "1,0;0,1;1,1;1,-1;2,0;0,2", "wavevectors of the perturbation basis, `k1,k2` separated by `;`"),
    ("criticality.envelope", "bump", "time envelope of the perturbations: bump | sin2"),
    ("criticality.epsilon-ladder", "0.04,0.02,0.01", "strictly decreasing eps values for the central differences"),
    ("criticality.sigma", "3", "standard errors allowed for |extrapolated dS|"),
    ("criticality.floor", "1e-12", "absolute roundoff floor added to every Monte Carlo band"),
    ("criticality.det-tol", "1e-4", "max |det grad g - 1| over particles and times"),
    ("criticality.multiplier-tol", "1e-4", "absolute allowance for multiplier probes"),
    ("criticality.control-amplitude", "0", "speed of the bump added to the drift for the negative control; 0 disables"),
    ("criticality.control-kappa", "4", "concentration of the control bump"),
    ("criticality.control-sigma", "5", "standard errors at least one control dS must exceed"),
    ("noether.symmetry", "translation-x", "translation-x | translation-y | custom"),
    ("noether.symmetry-file", "", "symmetry file for noether.symmetry = custom"),
    ("noether.force", "false", "compute the residual even when the invariance check fails"),
    ("noether.forcing", "0,0", "constant body force added to the momentum equation"),
    ("noether.residual-tol", "1e-10", "max |r(t)| over stored times"),
    ("noether.momentum-tol", "1e-12", "drift of the mean momentum per unit time"),
    ("noether.invariance-tol", "1e-6", "absolute allowance for the invariance defect"),
    ("noether.sigma", "3", "standard errors allowed for invariance and martingale checks"),
    ("noether.floor", "1e-12", "absolute roundoff floor for the martingale drift"),
    ("noether.det-tol", "1e-4", "max |det grad g - 1| for the invariance run"),
    ("noether.sample-every", "50", "invariance sampling stride in solver steps"),
    ("noether.probe-samples", "5", "probe times of the martingale check; 0 disables"),
    ("spde.scheme", "stratonovich-heun", "ito | stratonovich-heun"),
    ("spde.dt-ladder", "0.004,0.002,0.001", "time steps of the strong-error study, finest last"),
    ("spde.min-order", "0.9", "smallest accepted fitted strong order"),
];

/// Value of a `*` key for one experiment.
pub fn experiment_default(key: &str, experiment: &str) -> &'static str {
    match (key, experiment) {
        ("t_final", "ns-verify") => "1",
        ("t_final", "spde-converge") => "0.25",
        ("t_final", _) => "0.5",
        ("replicas", "ns-verify") => "1",
        ("replicas", "criticality") => "12",
        ("replicas", "spde-converge") => "256",
        ("replicas", _) => "16",
        ("particles", "criticality") => "12",
        ("particles", _) => "16",
        ("grid", "spde-converge") => "16",
        ("grid", _) => "32",
        ("init", "criticality" | "noether") => "random",
        ("init", _) => "taylor-green",
        _ => "",
    }
}

fn lookup(name: &str) -> Option<&'static Key> {
    KEYS.iter().find(|k| k.name == name)
}

/// Effective configuration: explicit entries over defaults.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn new() -> Self {
        Config::default()
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Config::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("line {}: expected `key = value`", lineno + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    /// `key=value` as given to `--set`.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), CliError> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("`{pair}` is not of the form key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        if lookup(key).is_none() {
            return Err(CliError::Usage(format!("unknown configuration key `{key}`")));
        }
        if key == "experiment" && !EXPERIMENTS.contains(&value) {
            return Err(CliError::Usage(format!(
                "unknown experiment `{value}` (expected one of {})",
                EXPERIMENTS.join(", ")
            )));
        }
        let choices: &[&str] = match key {
            "init" => &["taylor-green", "random"],
            "criticality.envelope" => &["bump", "sin2", "constant"],
            "noether.symmetry" => &["translation-x", "translation-y", "custom"],
            "spde.scheme" => &["ito", "stratonovich-heun"],
            _ => &[],
        };
        if !choices.is_empty() && !choices.contains(&value) {
            return Err(CliError::Usage(format!(
                "`{key}` must be one of {}, got `{value}`",
                choices.join(", ")
            )));
        }
        self.entries.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn experiment(&self) -> &str {
        self.entries.get("experiment").map(String::as_str).unwrap_or("ns-verify")
    }

    pub fn get(&self, key: &str) -> Result<&str, CliError> {
        if let Some(v) = self.entries.get(key) {
            return Ok(v);
        }
        let k = lookup(key).ok_or_else(|| CliError::Usage(format!("unknown configuration key `{key}`")))?;
        Ok(if k.default == "*" {
            experiment_default(key, self.experiment())
        } else {
            k.default
        })
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        let raw = self.get(key)?;
        raw.parse()
            .map_err(|_| CliError::Usage(format!("`{key}`: cannot parse `{raw}`")))
    }

    pub fn list(&self, key: &str) -> Result<Vec<f64>, CliError> {
        self.get(key)?
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| CliError::Usage(format!("`{key}`: cannot parse `{s}`")))
            })
            .collect()
    }

    pub fn pair(&self, key: &str) -> Result<[f64; 2], CliError> {
        match self.list(key)?.as_slice() {
            &[a, b] => Ok([a, b]),
            _ => Err(CliError::Usage(format!("`{key}` needs two comma-separated values"))),
        }
    }

    pub fn modes(&self, key: &str) -> Result<Vec<[i64; 2]>, CliError> {
        self.get(key)?
            .split(';')
            .map(|m| {
                let parts: Vec<&str> = m.split(',').map(str::trim).collect();
                match parts.as_slice() {
                    [a, b] => match (a.parse(), b.parse()) {
                        (Ok(a), Ok(b)) => Ok([a, b]),
                        _ => Err(CliError::Usage(format!("`{key}`: bad mode `{m}`"))),
                    },
                    _ => Err(CliError::Usage(format!("`{key}`: bad mode `{m}`"))),
                }
            })
            .collect()
    }

    /// Every key with its effective value, sorted.
    pub fn effective(&self) -> BTreeMap<String, String> {
        KEYS.iter()
            .map(|k| (k.name.to_string(), self.get(k.name).unwrap_or_default().to_string()))
            .collect()
    }

    /// The effective configuration in the file format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.effective() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

/// Default configuration file with every key documented.
pub fn documented_defaults() -> String {
    let mut s = String::new();
    for k in KEYS {
        let _ = writeln!(s, "# {}", k.doc);
        if k.default == "*" {
            let _ = writeln!(s, "# {} = {}", k.name, experiment_default(k.name, "ns-verify"));
        } else {
            let _ = writeln!(s, "{} = {}", k.name, k.default);
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_rejected() {
        assert!(Config::parse("gird = 32").is_err());
        assert!(Config::new().set_pair("noether.tolerance=1").is_err());
    }

    #[test]
    fn defaults_depend_on_experiment() {
        let mut c = Config::new();
        assert_eq!(c.get("t_final").unwrap(), "1");
        c.set("experiment", "spde-converge").unwrap();
        assert_eq!(c.get("replicas").unwrap(), "256");
        assert_eq!(c.get("t_final").unwrap(), "0.25");
    }

    #[test]
    fn round_trip() {
        let mut c = Config::parse("experiment = criticality\n# note\nseed = 11  # inline\n").unwrap();
        c.set_pair("criticality.modes=1,0;2,-1").unwrap();
        assert_eq!(c.modes("criticality.modes").unwrap(), vec![[1, 0], [2, -1]]);
        let back = Config::parse(&c.to_text()).unwrap();
        assert_eq!(back.effective(), c.effective());
        assert_eq!(back.parsed::<u64>("seed").unwrap(), 11);
    }

    #[test]
    fn documented_defaults_parse() {
        let c = Config::parse(&documented_defaults()).unwrap();
        assert_eq!(c.effective(), Config::new().effective());
    }

    #[test]
    fn bad_values() {
        assert!(Config::new().set("experiment", "nope").is_err());
        let c = Config::parse("criticality.modes = 1;2,0").unwrap();
        assert!(c.modes("criticality.modes").is_err());
        let c = Config::parse("grid = many").unwrap();
        assert!(c.parsed::<usize>("grid").is_err());
    }
}
