//! Experiment configuration: JSON in, typed and cross-validated commands out.

use std::fmt;
use std::path::PathBuf;

use num_complex::Complex64;
use qs_trotter::brownian::BrownianExample;
use qs_trotter::focksim::DEFAULT_BUDGET;
use qs_trotter::json::{child, Decoder, JsonError, Violation};
use qs_trotter::numkit::CMatrix;
use qs_trotter::{CoefficientMatrix, Dyadic, Error, Kind, StepFunction};
use serde_json::{Map, Value};

pub const COMMANDS: [&str; 7] = ["check", "compose", "trotter-sweep", "fock-compare", "lie-check", "weyl-check", "brownian"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Format, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format '{other}', expected csv or json")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToySettings {
    pub horizon: Dyadic,
    pub slots: Vec<usize>,
    pub unitarize: bool,
    pub budget: usize,
}

#[derive(Debug, Clone)]
pub enum Command {
    Check { coefficients: Vec<CoefficientMatrix>, expect: Kind },
    Compose { coefficients: Vec<CoefficientMatrix>, expect: Kind },
    TrotterSweep { f1: CoefficientMatrix, f2: CoefficientMatrix, f: StepFunction, g: StepFunction, t: Dyadic, n_min: u32, n_max: u32 },
    LieCheck { z1: CMatrix, z2: CMatrix, t: f64, n_min: u32, n_max: u32 },
    FockCompare { coefficients: CoefficientMatrix, f: StepFunction, g: StepFunction, t: Dyadic, toy: ToySettings, max_ratio: f64 },
    WeylCheck { c: Vec<Complex64>, f: StepFunction, g: StepFunction, t: Dyadic, toy: ToySettings, conjugate: Option<(CoefficientMatrix, Vec<Complex64>)>, max_ratio: f64 },
    Brownian { example: BrownianExample, t: f64, n_paths: usize, n_steps: usize },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Check { .. } => "check",
            Command::Compose { .. } => "compose",
            Command::TrotterSweep { .. } => "trotter-sweep",
            Command::LieCheck { .. } => "lie-check",
            Command::FockCompare { .. } => "fock-compare",
            Command::WeylCheck { .. } => "weyl-check",
            Command::Brownian { .. } => "brownian",
        }
    }

    /// The tolerance used when neither the config nor `--tol` gives one.
    pub fn default_tol(&self) -> f64 {
        match self {
            Command::Check { .. } | Command::Compose { .. } => 1e-10,
            Command::TrotterSweep { .. } | Command::LieCheck { .. } => 1e-12,
            Command::FockCompare { .. } | Command::WeylCheck { .. } => 0.05,
            Command::Brownian { .. } => 3.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub command: Command,
    pub tol: Option<f64>,
    pub seed: u64,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Format,
}

impl ExperimentConfig {
    pub fn tol(&self) -> f64 {
        self.tol.unwrap_or_else(|| self.command.default_tol())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Malformed(String),
    Schema(Vec<Violation>),
    Dimension { pointer: String, message: String },
    Validation { pointer: String, message: String },
}

impl ConfigError {
    pub fn code(&self) -> &'static str {
        match self {
            ConfigError::Malformed(_) => "E_MALFORMED",
            ConfigError::Schema(_) => "E_SCHEMA",
            ConfigError::Dimension { .. } => "E_DIMENSION",
            ConfigError::Validation { .. } => "E_VALIDATION",
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Malformed(m) => write!(f, "{}: malformed JSON: {m}", self.code()),
            ConfigError::Schema(v) => {
                write!(f, "{}: {} schema violation(s)", self.code(), v.len())?;
                for x in v {
                    write!(f, "\n  {x}")?;
                }
                Ok(())
            }
            ConfigError::Dimension { pointer, message } | ConfigError::Validation { pointer, message } => {
                let at = if pointer.is_empty() { "/" } else { pointer };
                write!(f, "{}: {at}: {message}", self.code())
            }
        }
    }
}

impl std::error::Error for ConfigError {}

impl From<JsonError> for ConfigError {
    fn from(e: JsonError) -> ConfigError {
        match e {
            JsonError::Schema(v) => ConfigError::Schema(v),
            JsonError::Invalid { pointer, error } => semantic(pointer, error),
        }
    }
}

fn semantic(pointer: String, error: Error) -> ConfigError {
    match error {
        Error::Dimension(message) => ConfigError::Dimension { pointer, message },
        other => ConfigError::Validation { pointer, message: other.to_string() },
    }
}

const COMMON: [&str; 5] = ["command", "tol", "seed", "threads", "output"];

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let root: Value = serde_json::from_str(text).map_err(|e| ConfigError::Malformed(e.to_string()))?;
    let mut d = Decoder::new();
    let Some(o) = d.object(&root, "") else {
        return Err(ConfigError::Schema(d.violations));
    };
    let name = d.required(o, "", "command").and_then(|v| d.string(v, "/command")).map(str::to_owned);
    let Some(name) = name else {
        return Err(ConfigError::Schema(d.violations));
    };
    if !COMMANDS.contains(&name.as_str()) {
        d.violate("/command", format!("unknown command '{name}', expected one of {}", COMMANDS.join(", ")));
        return Err(ConfigError::Schema(d.violations));
    }
    let tol = o.get("tol").and_then(|v| d.number(v, "/tol"));
    let seed = o.get("seed").and_then(|v| v.as_u64().or_else(|| {
        d.violate("/seed", "expected a nonnegative integer");
        None
    }));
    let threads = o.get("threads").and_then(|v| d.uint(v, "/threads"));
    let (out, format) = output(&mut d, o);
    if let Some(t) = tol {
        if t <= 0.0 {
            d.violate("/tol", "tolerance must be positive");
        }
    }
    let command = command(&mut d, o, &name);
    let command = d.finish(command).map_err(ConfigError::from)?;
    let command = cross_validate(command)?;
    Ok(ExperimentConfig { command, tol, seed: seed.unwrap_or(0), threads, out, format })
}

fn output(d: &mut Decoder, o: &Map<String, Value>) -> (Option<PathBuf>, Format) {
    let mut path = None;
    let mut format = Format::Csv;
    if let Some(v) = o.get("output") {
        if let Some(oo) = d.object(v, "/output") {
            d.only_keys(oo, "/output", &["path", "format"]);
            path = oo.get("path").and_then(|p| d.string(p, "/output/path")).map(PathBuf::from);
            if let Some(f) = oo.get("format").and_then(|f| d.string(f, "/output/format")) {
                match f.parse() {
                    Ok(f) => format = f,
                    Err(m) => d.violate("/output/format", m),
                }
            }
        }
    }
    (path, format)
}

fn keys(d: &mut Decoder, o: &Map<String, Value>, own: &[&str]) {
    let allowed: Vec<&str> = COMMON.iter().chain(own).copied().collect();
    d.only_keys(o, "", &allowed);
}

fn level(d: &mut Decoder, o: &Map<String, Value>, key: &str) -> Option<u32> {
    let ptr = child("", key);
    let n = d.required(o, "", key).and_then(|v| d.uint(v, &ptr))?;
    if n > 60 {
        d.violate(&ptr, format!("level {n} exceeds 60"));
        return None;
    }
    Some(n as u32)
}

fn expect(d: &mut Decoder, o: &Map<String, Value>) -> Kind {
    match o.get("expect").map(|v| d.string(v, "/expect")) {
        None => Kind::Unitary,
        Some(Some("unitary")) => Kind::Unitary,
        Some(Some("contraction")) => Kind::Contraction,
        Some(Some(other)) => {
            d.violate("/expect", format!("expected 'unitary' or 'contraction', got '{other}'"));
            Kind::Unitary
        }
        Some(None) => Kind::Unitary,
    }
}

fn coefficient_list(d: &mut Decoder, o: &Map<String, Value>) -> Option<Vec<CoefficientMatrix>> {
    let list = d.required(o, "", "coefficients").and_then(|v| d.array(v, "/coefficients"))?;
    if list.is_empty() {
        d.violate("/coefficients", "need at least one coefficient matrix");
        return None;
    }
    let parsed: Vec<Option<CoefficientMatrix>> =
        list.iter().enumerate().map(|(i, v)| d.coefficients(v, &child("/coefficients", i))).collect();
    parsed.into_iter().collect()
}

fn field<T>(d: &mut Decoder, o: &Map<String, Value>, key: &str, parse: impl FnOnce(&mut Decoder, &Value, &str) -> Option<T>) -> Option<T> {
    let ptr = child("", key);
    let v = d.required(o, "", key)?;
    parse(d, v, &ptr)
}

fn toy(d: &mut Decoder, v: &Value, ptr: &str) -> Option<ToySettings> {
    let o = d.object(v, ptr)?;
    d.only_keys(o, ptr, &["horizon", "slots", "unitarize", "budget"]);
    let horizon = match o.get("horizon") {
        Some(h) => d.dyadic(h, &child(ptr, "horizon")),
        None => Some(Dyadic::ONE),
    };
    let sptr = child(ptr, "slots");
    let slots = d.required(o, ptr, "slots").and_then(|s| d.array(s, &sptr)).and_then(|a| {
        let v: Vec<Option<usize>> = a.iter().enumerate().map(|(i, x)| d.uint(x, &child(&sptr, i))).collect();
        v.into_iter().collect::<Option<Vec<usize>>>()
    });
    let unitarize = match o.get("unitarize") {
        Some(u) => d.boolean(u, &child(ptr, "unitarize")),
        None => Some(true),
    };
    let budget = match o.get("budget") {
        Some(b) => d.uint(b, &child(ptr, "budget")),
        None => Some(DEFAULT_BUDGET),
    };
    let slots = slots?;
    if slots.is_empty() {
        d.violate(&sptr, "need at least one slot count");
        return None;
    }
    Some(ToySettings { horizon: horizon?, slots, unitarize: unitarize?, budget: budget? })
}

fn max_ratio(d: &mut Decoder, o: &Map<String, Value>) -> f64 {
    o.get("max_ratio").and_then(|v| d.number(v, "/max_ratio")).unwrap_or(0.9)
}

fn command(d: &mut Decoder, o: &Map<String, Value>, name: &str) -> Option<Command> {
    match name {
        "check" | "compose" => {
            keys(d, o, &["coefficients", "expect"]);
            let expect = expect(d, o);
            let coefficients = coefficient_list(d, o)?;
            Some(if name == "check" { Command::Check { coefficients, expect } } else { Command::Compose { coefficients, expect } })
        }
        "trotter-sweep" => {
            keys(d, o, &["F1", "F2", "f", "g", "t", "n_min", "n_max"]);
            let f1 = field(d, o, "F1", |d, v, p| d.coefficients(v, p));
            let f2 = field(d, o, "F2", |d, v, p| d.coefficients(v, p));
            let f = field(d, o, "f", |d, v, p| d.step_function(v, p));
            let g = field(d, o, "g", |d, v, p| d.step_function(v, p));
            let t = field(d, o, "t", |d, v, p| d.dyadic(v, p));
            let (n_min, n_max) = (level(d, o, "n_min"), level(d, o, "n_max"));
            Some(Command::TrotterSweep { f1: f1?, f2: f2?, f: f?, g: g?, t: t?, n_min: n_min?, n_max: n_max? })
        }
        "lie-check" => {
            keys(d, o, &["Z1", "Z2", "t", "n_min", "n_max"]);
            let z1 = field(d, o, "Z1", |d, v, p| d.matrix(v, p));
            let z2 = field(d, o, "Z2", |d, v, p| d.matrix(v, p));
            let t = field(d, o, "t", |d, v, p| d.number(v, p));
            let (n_min, n_max) = (level(d, o, "n_min"), level(d, o, "n_max"));
            Some(Command::LieCheck { z1: z1?, z2: z2?, t: t?, n_min: n_min?, n_max: n_max? })
        }
        "fock-compare" => {
            keys(d, o, &["F", "f", "g", "t", "toy", "max_ratio"]);
            let coefficients = field(d, o, "F", |d, v, p| d.coefficients(v, p));
            let f = field(d, o, "f", |d, v, p| d.step_function(v, p));
            let g = field(d, o, "g", |d, v, p| d.step_function(v, p));
            let t = field(d, o, "t", |d, v, p| d.dyadic(v, p));
            let toy = field(d, o, "toy", toy);
            let max_ratio = max_ratio(d, o);
            Some(Command::FockCompare { coefficients: coefficients?, f: f?, g: g?, t: t?, toy: toy?, max_ratio })
        }
        "weyl-check" => {
            keys(d, o, &["c", "d", "F", "f", "g", "t", "toy", "max_ratio"]);
            let c = field(d, o, "c", |d, v, p| d.vector(v, p));
            let f = field(d, o, "f", |d, v, p| d.step_function(v, p));
            let g = field(d, o, "g", |d, v, p| d.step_function(v, p));
            let t = field(d, o, "t", |d, v, p| d.dyadic(v, p));
            let toy = field(d, o, "toy", toy);
            let conj_f = o.get("F").map(|v| d.coefficients(v, "/F"));
            let conj_d = o.get("d").map(|v| d.vector(v, "/d"));
            let conjugate = match (conj_f, conj_d) {
                (None, None) => Some(None),
                (Some(f), Some(dv)) => f.zip(dv).map(Some),
                _ => {
                    d.violate("", "'F' and 'd' must be given together");
                    None
                }
            };
            let max_ratio = max_ratio(d, o);
            Some(Command::WeylCheck { c: c?, f: f?, g: g?, t: t?, toy: toy?, conjugate: conjugate?, max_ratio })
        }
        "brownian" => {
            keys(d, o, &["H", "t", "n_paths", "n_steps"]);
            let hs = field(d, o, "H", |d, v, p| {
                let a = d.array(v, p)?;
                let m: Vec<Option<CMatrix>> = a.iter().enumerate().map(|(i, x)| d.matrix(x, &child(p, i))).collect();
                m.into_iter().collect::<Option<Vec<_>>>()
            });
            let t = field(d, o, "t", |d, v, p| d.number(v, p));
            let n_paths = field(d, o, "n_paths", |d, v, p| d.uint(v, p));
            let n_steps = field(d, o, "n_steps", |d, v, p| d.uint(v, p));
            let hs = hs?;
            let example = match BrownianExample::new(hs) {
                Ok(ex) => ex,
                Err(e) => {
                    d.reject("/H", e);
                    return None;
                }
            };
            Some(Command::Brownian { example, t: t?, n_paths: n_paths?, n_steps: n_steps? })
        }
        _ => unreachable!("command names are checked before dispatch"),
    }
}

fn dim_err(pointer: &str, message: String) -> ConfigError {
    ConfigError::Dimension { pointer: pointer.into(), message }
}

fn val_err(pointer: &str, message: String) -> ConfigError {
    ConfigError::Validation { pointer: pointer.into(), message }
}

fn check_toy(toy: &ToySettings) -> Result<(), ConfigError> {
    if let Some(i) = toy.slots.iter().position(|m| *m == 0 || !m.is_power_of_two()) {
        return Err(val_err(&format!("/toy/slots/{i}"), format!("slot count {} is not a power of two", toy.slots[i])));
    }
    if toy.horizon == Dyadic::ZERO {
        return Err(val_err("/toy/horizon", "horizon must be positive".into()));
    }
    Ok(())
}

fn cross_validate(command: Command) -> Result<Command, ConfigError> {
    match &command {
        Command::Check { .. } => {}
        Command::Compose { coefficients, .. } => {
            let dh = coefficients[0].dim_h();
            if let Some(i) = coefficients.iter().position(|f| f.dim_h() != dh) {
                return Err(dim_err(&format!("/coefficients/{i}"), format!("dim_h {} differs from {dh}", coefficients[i].dim_h())));
            }
        }
        Command::TrotterSweep { f1, f2, f, g, n_min, n_max, .. } => {
            if f1.dim_h() != f2.dim_h() {
                return Err(dim_err("/F2", format!("dim_h {} differs from F1's {}", f2.dim_h(), f1.dim_h())));
            }
            let k = f1.dim_k() + f2.dim_k();
            for (key, s) in [("/f", f), ("/g", g)] {
                if s.dim_k() != k {
                    return Err(dim_err(key, format!("dim_k {} but F1 and F2 need k1 + k2 = {k}", s.dim_k())));
                }
            }
            let order = f.order().max(g.order());
            if *n_min < order {
                return Err(val_err(
                    "/n_min",
                    format!("n_min = {n_min} is below the order {order} of the step functions; the dyadic Trotter product requires n >= order"),
                ));
            }
            if n_max < n_min {
                return Err(val_err("/n_max", format!("n_max = {n_max} is below n_min = {n_min}")));
            }
        }
        Command::LieCheck { z1, z2, n_min, n_max, t, .. } => {
            if !z1.is_square() || (z1.rows(), z1.cols()) != (z2.rows(), z2.cols()) {
                return Err(dim_err("/Z2", format!("Z1 is {}×{} and Z2 is {}×{}; need equal square shapes", z1.rows(), z1.cols(), z2.rows(), z2.cols())));
            }
            if n_max < n_min {
                return Err(val_err("/n_max", format!("n_max = {n_max} is below n_min = {n_min}")));
            }
            if *t < 0.0 {
                return Err(val_err("/t", "time must be nonnegative".into()));
            }
        }
        Command::FockCompare { coefficients, f, g, t, toy, .. } => {
            for (key, s) in [("/f", f), ("/g", g)] {
                if s.dim_k() != coefficients.dim_k() {
                    return Err(dim_err(key, format!("dim_k {} but F has dim_k {}", s.dim_k(), coefficients.dim_k())));
                }
            }
            check_toy(toy)?;
            if *t > toy.horizon {
                return Err(val_err("/t", format!("t = {t} exceeds the toy horizon {}", toy.horizon)));
            }
        }
        Command::WeylCheck { c, f, g, t, toy, conjugate, .. } => {
            for (key, s) in [("/f", f), ("/g", g)] {
                if s.dim_k() != c.len() {
                    return Err(dim_err(key, format!("dim_k {} but c has length {}", s.dim_k(), c.len())));
                }
            }
            if let Some((fc, dv)) = conjugate {
                if fc.dim_k() != c.len() || dv.len() != c.len() {
                    return Err(dim_err("/F", format!("F has dim_k {}, c and d have lengths {} and {}", fc.dim_k(), c.len(), dv.len())));
                }
            }
            check_toy(toy)?;
            if *t > toy.horizon {
                return Err(val_err("/t", format!("t = {t} exceeds the toy horizon {}", toy.horizon)));
            }
        }
        Command::Brownian { t, n_paths, n_steps, .. } => {
            if *t < 0.0 {
                return Err(val_err("/t", "time must be nonnegative".into()));
            }
            if *n_paths == 0 || *n_steps == 0 {
                return Err(val_err(if *n_paths == 0 { "/n_paths" } else { "/n_steps" }, "must be at least 1".into()));
            }
        }
    }
    Ok(command)
}
