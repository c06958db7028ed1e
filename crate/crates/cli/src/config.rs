//! Run configuration: flat `key = value` lines grouped under `[section]`
//! headers, with `#` comments. Keys before the first header are global.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use planar_ppv::{ModelKind, OscillatorModel, Vec2};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.column, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(line: usize, column: usize, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError { line, column, message: message.into() })
}

#[derive(Debug, Clone)]
struct Entry {
    key: String,
    value: String,
    line: usize,
    key_col: usize,
    value_col: usize,
}

impl Entry {
    fn fail<T>(&self, message: impl Into<String>) -> Result<T, ConfigError> {
        err(self.line, self.value_col, message)
    }

    fn f64(&self) -> Result<f64, ConfigError> {
        match self.value.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => self.fail(format!("`{}` expects a finite number, got `{}`", self.key, self.value)),
        }
    }

    fn positive(&self) -> Result<f64, ConfigError> {
        let v = self.f64()?;
        if v > 0.0 {
            Ok(v)
        } else {
            self.fail(format!("`{}` must be positive, got {v}", self.key))
        }
    }

    fn usize(&self) -> Result<usize, ConfigError> {
        self.value
            .parse()
            .or_else(|_| self.fail(format!("`{}` expects a non-negative integer, got `{}`", self.key, self.value)))
    }

    fn u64(&self) -> Result<u64, ConfigError> {
        self.value
            .parse()
            .or_else(|_| self.fail(format!("`{}` expects a non-negative integer, got `{}`", self.key, self.value)))
    }

    fn bool(&self) -> Result<bool, ConfigError> {
        match self.value.as_str() {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => self.fail(format!("`{}` expects true or false, got `{}`", self.key, self.value)),
        }
    }

    /// Comma-separated numbers, or `linspace(lo, hi, n)`.
    fn list(&self) -> Result<Vec<f64>, ConfigError> {
        let v = self.value.trim();
        if let Some(inner) = v.strip_prefix("linspace(").and_then(|s| s.strip_suffix(')')) {
            let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
            let (lo, hi, n) = match parts.as_slice() {
                [lo, hi, n] => (lo.parse::<f64>(), hi.parse::<f64>(), n.parse::<usize>()),
                _ => return self.fail("linspace takes three arguments: lo, hi, count"),
            };
            return match (lo, hi, n) {
                (Ok(lo), Ok(hi), Ok(n)) if n >= 2 && lo.is_finite() && hi.is_finite() => {
                    let last = (n - 1) as f64;
                    Ok((0..n).map(|i| (lo * (last - i as f64) + hi * i as f64) / last).collect())
                }
                (Ok(lo), Ok(_), Ok(1)) if lo.is_finite() => Ok(vec![lo]),
                _ => self.fail(format!("malformed linspace `{v}`")),
            };
        }
        let items: Result<Vec<f64>, _> = v.split(',').map(|s| s.trim().parse::<f64>()).collect();
        match items {
            Ok(xs) if !xs.is_empty() && xs.iter().all(|x| x.is_finite()) => Ok(xs),
            _ => self.fail(format!("`{}` expects a comma-separated list of numbers, got `{v}`", self.key)),
        }
    }

    fn vec2(&self) -> Result<Vec2, ConfigError> {
        match self.list()?.as_slice() {
            [x, y] => Ok(Vec2::new(*x, *y)),
            _ => self.fail(format!("`{}` expects two numbers `x, y`", self.key)),
        }
    }
}

#[derive(Debug, Clone)]
struct Section {
    name: String,
    line: usize,
    entries: Vec<Entry>,
}

impl Section {
    fn check_keys(&self, allowed: &[&str]) -> Result<(), ConfigError> {
        for e in &self.entries {
            if !allowed.contains(&e.key.as_str()) {
                let scope =
                    if self.name.is_empty() { "global scope".to_string() } else { format!("section [{}]", self.name) };
                return err(e.line, e.key_col, format!("unknown key `{}` in {scope}", e.key));
            }
        }
        Ok(())
    }

    fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }
}

fn lex(text: &str) -> Result<Vec<Section>, ConfigError> {
    let mut sections = vec![Section { name: String::new(), line: 0, entries: Vec::new() }];
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        let trimmed = content.trim();
        if trimmed.is_empty() {
            continue;
        }
        let indent = content.len() - content.trim_start().len();
        if let Some(rest) = trimmed.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                return err(line, indent + 1, "section header is missing `]`");
            };
            let name = name.trim();
            if sections.iter().any(|s| s.name == name) {
                return err(line, indent + 2, format!("section [{name}] appears twice"));
            }
            sections.push(Section { name: name.to_string(), line, entries: Vec::new() });
            continue;
        }
        let Some(eq) = content.find('=') else {
            return err(line, indent + 1, format!("expected `key = value`, got `{trimmed}`"));
        };
        let key = content[..eq].trim();
        let value_part = &content[eq + 1..];
        let value = value_part.trim();
        let key_col = indent + 1;
        let value_col = eq + 2 + (value_part.len() - value_part.trim_start().len());
        if key.is_empty() {
            return err(line, key_col, "missing key before `=`");
        }
        if value.is_empty() {
            return err(line, value_col, format!("missing value for `{key}`"));
        }
        let section = sections.last_mut().expect("global section always present");
        if section.get(key).is_some() {
            return err(line, key_col, format!("key `{key}` appears twice"));
        }
        section.entries.push(Entry { key: key.to_string(), value: value.to_string(), line, key_col, value_col });
    }
    Ok(sections)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleConfig {
    pub guess: Vec2,
    pub settle_time: f64,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LockScanConfig {
    pub amp: Vec2,
    pub eps: Vec<f64>,
    pub detuning: Vec<f64>,
    pub t_end: f64,
    pub rtol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    Isotropic,
    Directional(Vec2),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    pub kind: NoiseKind,
    pub sigma: f64,
    pub n_paths: usize,
    /// Run length in periods of the cycle.
    pub periods: f64,
    /// `None` means `T/100`.
    pub dt: Option<f64>,
    pub fp_cells: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsochronConfig {
    pub t_star: f64,
    pub offsets: Vec<f64>,
    /// `None` means `50/|μ₂|`.
    pub horizon: Option<f64>,
    pub svg: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: OscillatorModel,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub cycle: CycleConfig,
    pub grid: usize,
    /// Always checked; the section only adds `verify.csv`.
    pub verify_tol: f64,
    pub verify: bool,
    pub harmonics: Option<usize>,
    pub lock_scan: Option<LockScanConfig>,
    pub noise: Option<NoiseConfig>,
    pub isochron: Option<IsochronConfig>,
}

impl RunConfig {
    pub fn sections(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.verify {
            out.push("verify");
        }
        if self.harmonics.is_some() {
            out.push("ppv-fourier");
        }
        if self.lock_scan.is_some() {
            out.push("lock-scan");
        }
        if self.noise.is_some() {
            out.push("noise");
        }
        if self.isochron.is_some() {
            out.push("isochron");
        }
        out
    }
}

const EXPERIMENTS: &[&str] = &["verify", "ppv-fourier", "lock-scan", "noise", "isochron"];

fn default_guess(model: &OscillatorModel) -> Vec2 {
    match model.kind() {
        ModelKind::StuartLandau { .. } => Vec2::new(1.0, 0.0),
        ModelKind::Brusselator { a, b } => Vec2::new(a + 0.5, b / a),
        ModelKind::VanDerPol { .. } => Vec2::new(2.0, 0.0),
    }
}

/// Parses a configuration; `base_dir` anchors a relative `output_dir`.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<RunConfig, ConfigError> {
    let sections = lex(text)?;
    let global = &sections[0];
    global.check_keys(&["model", "seed", "output_dir"])?;
    for s in &sections[1..] {
        let known = ["params", "cycle", "basis"].contains(&s.name.as_str()) || EXPERIMENTS.contains(&s.name.as_str());
        if !known {
            return err(s.line, 2, format!("unknown section [{}]", s.name));
        }
    }
    let find = |name: &str| sections[1..].iter().find(|s| s.name == name);

    let Some(model_entry) = global.get("model") else {
        return err(1, 1, "missing required key `model`");
    };
    let mut params = BTreeMap::new();
    if let Some(p) = find("params") {
        for e in &p.entries {
            params.insert(e.key.clone(), e.f64()?);
        }
    }
    let model = match OscillatorModel::from_name(&model_entry.value, &params) {
        Ok(m) => m,
        Err(e) => {
            // point at the offending parameter when there is one
            let at = find("params")
                .and_then(|p| p.entries.iter().find(|en| e.to_string().contains(&format!("'{}'", en.key))))
                .map(|en| (en.line, en.key_col))
                .unwrap_or((model_entry.line, model_entry.value_col));
            return err(at.0, at.1, e.to_string());
        }
    };
    let seed = global.get("seed").map(Entry::u64).transpose()?.unwrap_or(0);
    let output_dir = base_dir.join(global.get("output_dir").map(|e| e.value.as_str()).unwrap_or("out"));

    let mut cycle = CycleConfig { guess: default_guess(&model), settle_time: 100.0, tol: 1e-10 };
    if let Some(s) = find("cycle") {
        s.check_keys(&["guess", "settle_time", "tol"])?;
        if let Some(e) = s.get("guess") {
            cycle.guess = e.vec2()?;
        }
        if let Some(e) = s.get("settle_time") {
            cycle.settle_time = e.f64()?;
            if cycle.settle_time < 0.0 {
                return e.fail("`settle_time` must be non-negative");
            }
        }
        if let Some(e) = s.get("tol") {
            cycle.tol = e.positive()?;
        }
    }

    let mut grid = 1024;
    if let Some(s) = find("basis") {
        s.check_keys(&["grid"])?;
        if let Some(e) = s.get("grid") {
            grid = e.usize()?;
            if grid < 16 {
                return e.fail("`grid` must be at least 16");
            }
        }
    }

    let mut verify_tol = 1e-5;
    let verify = find("verify").is_some();
    if let Some(s) = find("verify") {
        s.check_keys(&["tol"])?;
        if let Some(e) = s.get("tol") {
            verify_tol = e.positive()?;
        }
    }

    let harmonics = match find("ppv-fourier") {
        Some(s) => {
            s.check_keys(&["harmonics"])?;
            let k = s.get("harmonics").map(Entry::usize).transpose()?.unwrap_or(16);
            if k == 0 || k + 1 > grid / 2 {
                let (l, c) = s.get("harmonics").map(|e| (e.line, e.value_col)).unwrap_or((s.line, 1));
                return err(l, c, format!("`harmonics` must lie in 1..={} for grid {grid}", grid / 2 - 1));
            }
            Some(k)
        }
        None => None,
    };

    let lock_scan = match find("lock-scan") {
        Some(s) => {
            s.check_keys(&["amp", "eps", "detuning", "t_end", "rtol"])?;
            let need = |k: &str| {
                s.get(k).ok_or_else(|| ConfigError {
                    line: s.line,
                    column: 1,
                    message: format!("section [lock-scan] needs `{k}`"),
                })
            };
            let eps_e = need("eps")?;
            let eps = eps_e.list()?;
            if eps.iter().any(|&e| e < 0.0) {
                return eps_e.fail("`eps` values must be non-negative");
            }
            Some(LockScanConfig {
                amp: s.get("amp").map(Entry::vec2).transpose()?.unwrap_or(Vec2::new(1.0, 0.0)),
                eps,
                detuning: need("detuning")?.list()?,
                t_end: s.get("t_end").map(Entry::positive).transpose()?.unwrap_or(4000.0),
                rtol: s.get("rtol").map(Entry::positive).transpose()?.unwrap_or(1e-8),
            })
        }
        None => None,
    };

    let noise = match find("noise") {
        Some(s) => {
            s.check_keys(&["kind", "direction", "sigma", "n_paths", "periods", "dt", "fp_cells"])?;
            let kind = match s.get("kind").map(|e| (e, e.value.as_str())) {
                None | Some((_, "isotropic")) => {
                    if let Some(e) = s.get("direction") {
                        return err(e.line, e.key_col, "`direction` only applies to kind = directional");
                    }
                    NoiseKind::Isotropic
                }
                Some((_, "directional")) => {
                    let d = s.get("direction").map(Entry::vec2).transpose()?.unwrap_or(Vec2::new(0.0, 1.0));
                    if d.norm() == 0.0 {
                        let e = s.get("direction").expect("zero vector came from the config");
                        return e.fail("`direction` must be non-zero");
                    }
                    NoiseKind::Directional(d)
                }
                Some((e, other)) => return e.fail(format!("unknown noise kind `{other}` (isotropic, directional)")),
            };
            let sigma = s.get("sigma").map(Entry::f64).transpose()?.unwrap_or(0.05);
            if sigma < 0.0 {
                return s
                    .get("sigma")
                    .expect("negative sigma came from the config")
                    .fail("`sigma` must be non-negative");
            }
            let n_paths = s.get("n_paths").map(Entry::usize).transpose()?.unwrap_or(1024);
            if n_paths == 0 {
                return s.get("n_paths").expect("zero came from the config").fail("`n_paths` must be at least 1");
            }
            let fp_cells = s.get("fp_cells").map(Entry::usize).transpose()?.unwrap_or(400);
            if !(8..=4096).contains(&fp_cells) {
                return s.get("fp_cells").expect("value came from the config").fail("`fp_cells` must lie in 8..=4096");
            }
            Some(NoiseConfig {
                kind,
                sigma,
                n_paths,
                periods: s.get("periods").map(Entry::positive).transpose()?.unwrap_or(10.0),
                dt: s.get("dt").map(Entry::positive).transpose()?,
                fp_cells,
            })
        }
        None => None,
    };

    let isochron = match find("isochron") {
        Some(s) => {
            s.check_keys(&["t_star", "offsets", "horizon", "svg"])?;
            Some(IsochronConfig {
                t_star: s.get("t_star").map(Entry::f64).transpose()?.unwrap_or(0.0),
                offsets: s.get("offsets").map(Entry::list).transpose()?.unwrap_or(vec![-0.05, -0.02, 0.02, 0.05]),
                horizon: s.get("horizon").map(Entry::positive).transpose()?,
                svg: s.get("svg").map(Entry::bool).transpose()?.unwrap_or(true),
            })
        }
        None => None,
    };

    if !sections.iter().any(|s| EXPERIMENTS.contains(&s.name.as_str())) {
        let last = text.lines().count().max(1);
        return err(last, 1, format!("no experiment section; add one of {}", bracketed(EXPERIMENTS)));
    }

    Ok(RunConfig { model, seed, output_dir, cycle, grid, verify_tol, verify, harmonics, lock_scan, noise, isochron })
}

fn bracketed(names: &[&str]) -> String {
    names.iter().map(|s| format!("[{s}]")).collect::<Vec<_>>().join(", ")
}
