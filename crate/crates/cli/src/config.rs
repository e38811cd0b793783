//! Flat dotted-key configuration.
//!
//! Every key has a default; a file may set any subset and `--set key=value`
//! overrides both. Unknown keys and type mismatches are rejected with the key
//! path. The effective configuration is written back in the same format.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ns2d::forcing::ForcingSpec;
use ns2d::integrator::{checkpoint_load, suggest_dt, SimConfig};
use ns2d::spectral::{Field, Grid, GridSpec, Mode, VorticityState};
use toml::Value;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

type Res<T> = std::result::Result<T, ConfigError>;

fn err<T>(msg: impl Into<String>) -> Res<T> {
    Err(ConfigError(msg.into()))
}

/// Key, default (as TOML source) and one-line help.
const SCHEMA: &[(&str, &str, &str)] = &[
    ("grid.n", "64", "points per axis"),
    ("grid.scale", "1.0", "torus scale N, domain [0, 2πN)²"),
    ("grid.dealias_fraction", "0.6666666666666666", "retained fraction of modes per axis"),
    ("nu", "0.05", "viscosity"),
    ("tau", "0.0", "Ekman friction"),
    ("dt", "\"auto\"", "time step, auto = advective CFL estimate from the initial state"),
    ("dt_cfl", "0.5", "CFL number for automatic dt"),
    ("dt_max", "0.01", "upper bound for automatic dt"),
    ("t_end", "10.0", "final time"),
    ("seed", "0", "noise seed"),
    ("advection", "true", "include the nonlinear term"),
    ("output_every", "10", "record observables every this many steps"),
    ("snapshot_every", "0", "write a snapshot every this many steps, 0 for none"),
    ("initial", "\"\"", "snapshot file with the initial vorticity, empty for zero"),
    ("forcing.preset", "\"four_mode\"", "four_mode | shell | custom"),
    ("forcing.gamma", "0.5", "amplitude of every forced mode (four_mode and shell presets)"),
    ("forcing.modes", "[]", "custom forcing [[k1, k2, gamma], ...]"),
    ("forcing.shell", "[1.0, 2.0]", "shell preset wavenumber range [lo, hi]"),
    ("forcing.auto_reflect", "false", "add missing reflections -k to custom modes"),
    ("output.dir", "\"ns2d-out\"", "output directory, relative to the output root"),
    ("ensemble.members", "1", "independent noise realizations"),
    ("moments.eta_factors", "[0.25, 0.5, 1.0]", "exponential-moment η in units of ν/ε"),
    ("balance.burn_in", "\"auto\"", "discarded initial time, auto = 5/(ν/N²+τ)"),
    ("balance.batches", "20", "batches for the batch-means interval"),
    ("balance.tolerance", "0.1", "allowed relative balance residual"),
    ("spectrum.burn_in", "\"auto\"", "discarded initial time, auto = 5/(ν/N²+τ)"),
    ("spectrum.sample_every", "10", "steps between averaged states"),
    ("spectrum.fit", "[30.0, 70.0]", "direct-cascade fit range [κ_lo, κ_hi]"),
    ("spectrum.slope_range", "[-3.6, -2.6]", "accepted direct-cascade slope"),
    ("spectrum.check", "true", "assert the slope range"),
    ("spectrum.inverse_fit", "[2.0, 15.0]", "fit range below the forcing shell (reported only)"),
    ("contraction.cutoffs", "[4.0, 8.0, 16.0]", "projection cutoffs ℓ"),
    ("contraction.horizon", "0.1", "time T"),
    ("contraction.p", "1.0", "moment p"),
    ("contraction.samples", "8", "noise realizations"),
    ("contraction.tol", "1e-10", "Lanczos residual tolerance"),
    ("contraction.max_iter", "200", "Lanczos iteration cap"),
    ("contraction.max_ratio", "2.0", "allowed factor between estimate and Stokes prediction"),
    ("malliavin.interval", "1.0", "interval length t - s"),
    ("malliavin.galerkin_cutoff", "3.0", "Galerkin cutoff M_g"),
    ("malliavin.low_cutoff", "2.0", "cone projection cutoff ℓ"),
    ("malliavin.alpha", "0.1", "cone aperture α"),
    ("malliavin.samples", "50", "survey samples"),
    ("malliavin.init_radius", "4.0", "random initial vorticity: mode radius"),
    ("malliavin.init_amplitude", "0.1", "random initial vorticity: coefficient scale"),
    ("malliavin.stokes_control", "true", "repeat every sample without advection"),
    ("control.lambdas", "[0.0001, 0.01, 1.0, 100.0]", "Tikhonov shifts λ to scan"),
    ("control.intervals", "12", "number of unit intervals"),
    ("control.interval", "1.0", "interval length"),
    ("control.seeds", "20", "independent seeds per λ"),
    ("control.galerkin_cutoff", "3.0", "Galerkin cutoff M_g"),
    ("control.low_cutoff", "2.0", "cutoff for the reported low-mode norm"),
    ("control.init_radius", "4.0", "random initial vorticity: mode radius"),
    ("control.init_amplitude", "0.1", "random initial vorticity: coefficient scale"),
    ("control.max_rate", "0.9", "required geometric rate for the best λ"),
    ("control.max_residual", "1e-8", "allowed identity residual"),
    ("couple.low_cutoff", "2.0", "cutoff for the low/high distance split"),
    ("couple.radius", "4.0", "second copy: random perturbation mode radius"),
    ("couple.amplitude", "0.1", "second copy: random perturbation scale"),
];

fn parse_value(src: &str) -> Res<Value> {
    let doc: toml::Table = format!("v = {src}").parse().map_err(|e| ConfigError(format!("cannot parse value `{src}`: {e}")))?;
    Ok(doc["v"].clone())
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

/// Merged configuration with every key present.
#[derive(Clone, Debug)]
pub struct RunConfig {
    values: BTreeMap<String, Value>,
    /// Keys whose value was computed from others (`auto`).
    derived: BTreeMap<String, Value>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Res<RunConfig> {
        let mut values = BTreeMap::new();
        for (k, d, _) in SCHEMA {
            values.insert(k.to_string(), parse_value(d)?);
        }
        if let Some(p) = path {
            let text = std::fs::read_to_string(p).map_err(|e| ConfigError(format!("cannot read {}: {e}", p.display())))?;
            let table: toml::Table = text.parse().map_err(|e| ConfigError(format!("{}: {e}", p.display())))?;
            let mut flat = BTreeMap::new();
            flatten("", &table, &mut flat);
            for (k, v) in flat {
                set(&mut values, &k, v)?;
            }
        }
        for o in overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| ConfigError(format!("override `{o}` is not key=value")))?;
            let k = k.trim();
            let v = v.trim();
            let parsed = parse_value(v).or_else(|_| Ok::<_, ConfigError>(Value::String(v.to_string())))?;
            set(&mut values, k, parsed)?;
        }
        let cfg = RunConfig { values, derived: BTreeMap::new() };
        cfg.check_types()?;
        Ok(cfg)
    }

    fn check_types(&self) -> Res<()> {
        for (k, d, _) in SCHEMA {
            let default = parse_value(d)?;
            let v = &self.values[*k];
            let ok = match (&default, v) {
                (Value::Integer(_), Value::Integer(_)) => true,
                (Value::Float(_), Value::Float(_) | Value::Integer(_)) => true,
                (Value::Boolean(_), Value::Boolean(_)) => true,
                (Value::Array(_), Value::Array(_)) => true,
                (Value::String(s), Value::String(_)) if s != "auto" => true,
                (Value::String(s), Value::String(x)) if s == "auto" => x == "auto",
                (Value::String(s), Value::Float(_) | Value::Integer(_)) => s == "auto",
                _ => false,
            };
            if !ok {
                return err(format!("config key `{k}` expects {}, got `{v}`", kind(&default)));
            }
        }
        Ok(())
    }

    fn get(&self, key: &str) -> &Value {
        self.derived.get(key).unwrap_or_else(|| &self.values[key])
    }

    pub fn f64(&self, key: &str) -> Res<f64> {
        match self.get(key) {
            Value::Float(x) => Ok(*x),
            Value::Integer(i) => Ok(*i as f64),
            other => err(format!("config key `{key}` expects a number, got `{other}`")),
        }
    }

    pub fn usize(&self, key: &str) -> Res<usize> {
        match self.get(key) {
            Value::Integer(i) if *i >= 0 => Ok(*i as usize),
            other => err(format!("config key `{key}` expects a non-negative integer, got `{other}`")),
        }
    }

    pub fn u64(&self, key: &str) -> Res<u64> {
        match self.get(key) {
            Value::Integer(i) if *i >= 0 => Ok(*i as u64),
            other => err(format!("config key `{key}` expects a non-negative integer, got `{other}`")),
        }
    }

    pub fn bool(&self, key: &str) -> Res<bool> {
        match self.get(key) {
            Value::Boolean(b) => Ok(*b),
            other => err(format!("config key `{key}` expects a boolean, got `{other}`")),
        }
    }

    pub fn str(&self, key: &str) -> Res<&str> {
        match self.get(key) {
            Value::String(s) => Ok(s),
            other => err(format!("config key `{key}` expects a string, got `{other}`")),
        }
    }

    pub fn f64s(&self, key: &str) -> Res<Vec<f64>> {
        let Value::Array(a) = self.get(key) else { return err(format!("config key `{key}` expects an array")) };
        a.iter()
            .map(|v| match v {
                Value::Float(x) => Ok(*x),
                Value::Integer(i) => Ok(*i as f64),
                other => err(format!("config key `{key}` expects numbers, got `{other}`")),
            })
            .collect()
    }

    pub fn pair(&self, key: &str) -> Res<(f64, f64)> {
        match self.f64s(key)?.as_slice() {
            [a, b] => Ok((*a, *b)),
            _ => err(format!("config key `{key}` expects two numbers")),
        }
    }

    pub fn triples(&self, key: &str) -> Res<Vec<(Mode, f64)>> {
        let Value::Array(a) = self.get(key) else { return err(format!("config key `{key}` expects an array")) };
        a.iter()
            .map(|v| match v.as_array().map(|p| p.as_slice()) {
                Some([Value::Integer(x), Value::Integer(y), g]) => match g {
                    Value::Float(g) => Ok(((*x, *y), *g)),
                    Value::Integer(g) => Ok(((*x, *y), *g as f64)),
                    _ => err(format!("config key `{key}` expects [k1, k2, gamma], got `{v}`")),
                },
                _ => err(format!("config key `{key}` expects [k1, k2, gamma], got `{v}`")),
            })
            .collect()
    }

    /// A burn-in key: `auto` resolves to `5/(ν/N²+τ)` and is recorded.
    pub fn burn_in(&mut self, key: &str, sim: &SimConfig) -> Res<f64> {
        let t = match self.values.get(key) {
            Some(Value::String(_)) => ns2d::diagnostics::default_burn_in(sim),
            _ => self.f64(key)?,
        };
        self.derived.insert(key.to_string(), Value::Float(t));
        Ok(t)
    }

    pub fn forcing(&self) -> Res<ForcingSpec> {
        let scale = self.f64("grid.scale")?;
        let gamma = self.f64("forcing.gamma")?;
        let r = match self.str("forcing.preset")? {
            "four_mode" => {
                let modes: Vec<(Mode, f64)> =
                    [(1, 0), (-1, 0), (1, 1), (-1, -1)].into_iter().map(|m| (m, gamma)).collect();
                ForcingSpec::with_scale(&modes, scale)
            }
            "shell" => {
                let (lo, hi) = self.pair("forcing.shell")?;
                ForcingSpec::shell(lo, hi, gamma, scale)
            }
            "custom" => {
                let modes = self.triples("forcing.modes")?;
                if self.bool("forcing.auto_reflect")? {
                    ForcingSpec::auto_reflect(&modes, scale)
                } else {
                    ForcingSpec::with_scale(&modes, scale)
                }
            }
            other => return err(format!("config key `forcing.preset` must be four_mode, shell or custom, got `{other}`")),
        };
        r.map_err(|e| ConfigError(format!("forcing: {e}")))
    }

    /// Initial state from `initial`, zero when empty.
    pub fn initial(&self, grid: &Arc<Grid>) -> Res<Option<VorticityState>> {
        let path = self.str("initial")?;
        if path.is_empty() {
            return Ok(None);
        }
        checkpoint_load(Path::new(path), grid).map(Some).map_err(|e| ConfigError(format!("initial state {path}: {e}")))
    }

    /// Simulation settings and initial state. `auto` values are resolved
    /// and recorded: the time step from the initial state, burn-ins from
    /// the damping rate.
    pub fn sim(&mut self) -> Res<(SimConfig, Option<VorticityState>)> {
        let spec = GridSpec::with_dealias(self.usize("grid.n")?, self.f64("grid.scale")?, self.f64("grid.dealias_fraction")?)
            .map_err(|e| ConfigError(e.to_string()))?;
        let grid = Grid::new(spec).map_err(|e| ConfigError(e.to_string()))?;
        let forcing = self.forcing()?;
        let initial = self.initial(&grid)?;
        let (nu, tau) = (self.f64("nu")?, self.f64("tau")?);
        let dt = match self.values.get("dt") {
            Some(Value::String(_)) => {
                let zero = Field::zeros(&grid);
                let omega = initial.as_ref().map_or(&zero, |s| &s.field);
                suggest_dt(&grid, nu, tau, &forcing, omega, self.f64("dt_cfl")?, self.f64("dt_max")?)
            }
            _ => self.f64("dt")?,
        };
        self.derived.insert("dt".into(), Value::Float(dt));
        let mut sim = SimConfig::new(spec, nu, dt, self.f64("t_end")?, forcing);
        sim.tau = tau;
        sim.seed = self.u64("seed")?;
        sim.advection = self.bool("advection")?;
        sim.output_every = self.usize("output_every")?;
        let snap = self.usize("snapshot_every")?;
        sim.snapshot_every = (snap > 0).then_some(snap);
        sim.model().map_err(|e| ConfigError(e.to_string()))?;
        for key in ["balance.burn_in", "spectrum.burn_in"] {
            self.burn_in(key, &sim)?;
        }
        Ok((sim, initial))
    }

    /// Output directory under `root`.
    pub fn output_dir(&self, root: &Path) -> Res<PathBuf> {
        Ok(root.join(self.str("output.dir")?))
    }

    /// Every key in schema order as `key = value` lines.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, _, help) in SCHEMA {
            let _ = writeln!(s, "{k} = {}  # {help}", self.get(k));
        }
        s
    }
}

fn set(values: &mut BTreeMap<String, Value>, key: &str, v: Value) -> Res<()> {
    if !values.contains_key(key) {
        return err(format!("unknown config key `{key}`"));
    }
    values.insert(key.to_string(), v);
    Ok(())
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Integer(_) => "an integer",
        Value::Float(_) => "a number",
        Value::Boolean(_) => "a boolean",
        Value::Array(_) => "an array",
        Value::String(s) if s == "auto" => "a number or \"auto\"",
        _ => "a string",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        std::io::Write::write_all(&mut f, text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let f = write("grid.n = 64\nnu = 0.05\nforcing.preset = \"four_mode\"\n");
        let mut c = RunConfig::load(Some(f.path()), &[]).unwrap();
        let (sim, initial) = c.sim().unwrap();
        assert!(initial.is_none());
        assert_eq!(sim.grid.n, 64);
        assert_eq!(sim.forcing.dim(), 4);
        assert!(sim.dt > 0.0 && sim.dt <= 0.01);
        assert_eq!(c.f64("dt").unwrap(), sim.dt);
        assert!(c.render().contains("contraction.horizon = 0.1"));
        assert!(!c.render().contains("\"auto\""));
    }

    #[test]
    fn nested_tables_are_flattened() {
        let f = write("[grid]\nn = 32\n[forcing]\ngamma = 1.0\n");
        let c = RunConfig::load(Some(f.path()), &[]).unwrap();
        assert_eq!(c.usize("grid.n").unwrap(), 32);
        assert_eq!(c.f64("forcing.gamma").unwrap(), 1.0);
    }

    #[test]
    fn unknown_key_is_named() {
        let f = write("viscocity = 0.1\n");
        let e = RunConfig::load(Some(f.path()), &[]).unwrap_err();
        assert!(e.0.contains("`viscocity`"), "{}", e.0);
        let e = RunConfig::load(None, &["grid.m=3".into()]).unwrap_err();
        assert!(e.0.contains("`grid.m`"));
    }

    #[test]
    fn override_is_echoed() {
        let c = RunConfig::load(None, &["dt=0.005".into(), "initial=state.vort".into()]).unwrap();
        assert!(c.render().contains("dt = 0.005"));
        assert_eq!(c.str("initial").unwrap(), "state.vort");
    }

    #[test]
    fn type_errors_name_the_key() {
        let e = RunConfig::load(None, &["grid.n=\"big\"".into()]).unwrap_err();
        assert!(e.0.contains("`grid.n`"));
        let e = RunConfig::load(None, &["balance.burn_in=\"soon\"".into()]).unwrap_err();
        assert!(e.0.contains("`balance.burn_in`"));
        assert!(RunConfig::load(None, &["balance.burn_in=3".into()]).is_ok());
    }

    #[test]
    fn auto_burn_in_is_materialized() {
        let mut c = RunConfig::load(None, &["nu=0.1".into(), "tau=0.1".into()]).unwrap();
        let (sim, _) = c.sim().unwrap();
        assert!((c.burn_in("balance.burn_in", &sim).unwrap() - 25.0).abs() < 1e-12);
        assert!(c.render().contains("balance.burn_in = 25"));
    }

    #[test]
    fn explicit_dt_is_kept() {
        let mut c = RunConfig::load(None, &["dt=0.002".into()]).unwrap();
        assert_eq!(c.sim().unwrap().0.dt, 0.002);
    }

    #[test]
    fn rendered_config_round_trips() {
        let c = RunConfig::load(None, &["seed=7".into(), "forcing.preset=\"shell\"".into()]).unwrap();
        let f = write(&c.render());
        let d = RunConfig::load(Some(f.path()), &[]).unwrap();
        assert_eq!(c.render(), d.render());
    }

    #[test]
    fn invalid_forcing_is_a_config_error() {
        let c = RunConfig::load(None, &["forcing.preset=\"custom\"".into(), "forcing.modes=[[1,0,0.5]]".into()]).unwrap();
        assert!(c.forcing().is_err());
        let c = RunConfig::load(
            None,
            &["forcing.preset=\"custom\"".into(), "forcing.modes=[[1,0,0.5]]".into(), "forcing.auto_reflect=true".into()],
        )
        .unwrap();
        assert_eq!(c.forcing().unwrap().dim(), 2);
        let c = RunConfig::load(None, &["forcing.preset=\"custom\"".into(), "forcing.modes=[[1,0]]".into()]).unwrap();
        assert!(c.forcing().unwrap_err().0.contains("`forcing.modes`"));
    }
}
