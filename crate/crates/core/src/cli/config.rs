//! Line-oriented experiment configuration.
//!
//! ```text
//! format_version = 1
//! subcommand = "converge"      # optional; must match the command line
//!
//! [physics]
//! dim = 3
//! gamma = 1.0
//! lambda = 1.0
//! epsilon = 0.1
//!
//! [grid]
//! points = 64
//! box_length = 10.0
//!
//! [data]
//! recipe = "gaussian-bump"
//! amplitude = 1.0
//! ...
//! ```
//!
//! Values are integers, decimals, `true`/`false`, double-quoted strings, or
//! comma-separated lists of numbers. `#` starts a comment. Unknown sections
//! and keys are errors, and every violation is reported.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::direct::{DtPolicy, DEFAULT_DT_CONSTANT};
use crate::error::{Error, Result};
use crate::grenier::GuardConfig;
use crate::grid::Grid;
use crate::physics::{check_gamma, DataRecipe, PhysicsParams};
use crate::validation::ScalingConfig;

pub const FORMAT_VERSION: i64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    Direct,
    Grenier,
    Wkb,
    Converge,
    DeltaStudy,
    Scaling,
    Selftest,
}

impl Subcommand {
    pub const ALL: [Subcommand; 7] = [
        Subcommand::Direct,
        Subcommand::Grenier,
        Subcommand::Wkb,
        Subcommand::Converge,
        Subcommand::DeltaStudy,
        Subcommand::Scaling,
        Subcommand::Selftest,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Subcommand::Direct => "direct",
            Subcommand::Grenier => "grenier",
            Subcommand::Wkb => "wkb",
            Subcommand::Converge => "converge",
            Subcommand::DeltaStudy => "delta-study",
            Subcommand::Scaling => "scaling",
            Subcommand::Selftest => "selftest",
        }
    }

    pub fn parse(s: &str) -> Option<Subcommand> {
        Subcommand::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Int,
    Float,
    Bool,
    Str,
    FloatList,
    IntList,
}

const SECTIONS: [&str; 7] = ["", "physics", "grid", "data", "numerics", "sweep", "output"];

/// `(section, key, kind)` in canonical order.
const SCHEMA: &[(&str, &str, Kind)] = &[
    ("", "format_version", Kind::Int),
    ("", "subcommand", Kind::Str),
    ("physics", "dim", Kind::Int),
    ("physics", "gamma", Kind::Float),
    ("physics", "lambda", Kind::Float),
    ("physics", "epsilon", Kind::Float),
    ("grid", "points", Kind::Int),
    ("grid", "box_length", Kind::Float),
    ("data", "recipe", Kind::Str),
    ("data", "amplitude", Kind::Float),
    ("data", "width", Kind::Float),
    ("data", "phase_amplitude", Kind::Float),
    ("data", "phase_width", Kind::Float),
    ("data", "re", Kind::Float),
    ("data", "im", Kind::Float),
    ("data", "modes", Kind::IntList),
    ("numerics", "t_final", Kind::Float),
    ("numerics", "dt", Kind::Float),
    ("numerics", "direct_dt", Kind::Float),
    ("numerics", "dt_constant", Kind::Float),
    ("numerics", "dt_factors", Kind::FloatList),
    ("numerics", "sample_spacing", Kind::Float),
    ("numerics", "delta", Kind::Float),
    ("numerics", "guard_s", Kind::Float),
    ("numerics", "guard_threshold", Kind::Float),
    ("numerics", "guard_grad_cap", Kind::Float),
    ("numerics", "s_prime", Kind::Float),
    ("numerics", "regularity", Kind::Float),
    ("numerics", "depth", Kind::Int),
    ("numerics", "orders", Kind::IntList),
    ("numerics", "scaling_s", Kind::Float),
    ("numerics", "scaling_dim", Kind::Int),
    ("numerics", "scaling_gamma", Kind::Float),
    ("numerics", "tau", Kind::Float),
    ("numerics", "tau_max", Kind::Float),
    ("numerics", "tau_tolerance", Kind::Float),
    ("numerics", "tau_steps", Kind::Int),
    ("numerics", "phase_deviation", Kind::Float),
    ("numerics", "oscillation_threshold", Kind::Float),
    ("numerics", "log_damping", Kind::Bool),
    ("numerics", "seed", Kind::Int),
    ("sweep", "epsilons", Kind::FloatList),
    ("sweep", "lambdas", Kind::FloatList),
    ("sweep", "deltas", Kind::FloatList),
    ("sweep", "h_values", Kind::FloatList),
    ("sweep", "k_values", Kind::FloatList),
    ("output", "dir", Kind::Str),
    ("output", "snapshots", Kind::Bool),
];

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Int(i64),
    Float(f64),
    Bool(bool),
    Str(String),
    FloatList(Vec<f64>),
    IntList(Vec<i64>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhysicsSection {
    pub dim: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSection {
    pub points: usize,
    pub box_length: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Numerics {
    pub t_final: Option<f64>,
    pub dt: Option<f64>,
    pub direct_dt: Option<f64>,
    pub dt_constant: Option<f64>,
    pub dt_factors: Option<Vec<f64>>,
    pub sample_spacing: Option<f64>,
    pub delta: Option<f64>,
    pub guard_s: Option<f64>,
    pub guard_threshold: Option<f64>,
    pub guard_grad_cap: Option<f64>,
    pub s_prime: Option<f64>,
    pub regularity: Option<f64>,
    pub depth: Option<usize>,
    pub orders: Option<Vec<usize>>,
    pub scaling_s: Option<f64>,
    pub scaling_dim: Option<usize>,
    pub scaling_gamma: Option<f64>,
    pub tau: Option<f64>,
    pub tau_max: Option<f64>,
    pub tau_tolerance: Option<f64>,
    pub tau_steps: Option<usize>,
    pub phase_deviation: Option<f64>,
    pub oscillation_threshold: Option<f64>,
    pub log_damping: Option<bool>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Sweep {
    pub epsilons: Option<Vec<f64>>,
    pub lambdas: Option<Vec<f64>>,
    pub deltas: Option<Vec<f64>>,
    pub h_values: Option<Vec<f64>>,
    pub k_values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct OutputSection {
    pub dir: Option<String>,
    pub snapshots: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub format_version: i64,
    pub subcommand: Option<Subcommand>,
    pub physics: PhysicsSection,
    pub grid: GridSection,
    pub data: DataRecipe,
    pub numerics: Numerics,
    pub sweep: Sweep,
    pub output: OutputSection,
}

/// Documented numeric defaults.
pub mod defaults {
    pub const GUARD_S: f64 = 4.0;
    pub const GUARD_THRESHOLD: f64 = 25.0;
    pub const GUARD_GRAD_CAP: f64 = 20.0;
    pub const S_PRIME: f64 = 1.0;
    pub const REGULARITY: f64 = 4.0;
    pub const DEPTH: usize = 2;
    pub const TAU_TOLERANCE: f64 = 1e-3;
    pub const TAU_STEPS: usize = 4;
    pub const PHASE_DEVIATION: f64 = 0.5;
    pub const OSCILLATION_THRESHOLD: f64 = 0.2;
}

type Entries = BTreeMap<(usize, usize), (Value, usize)>;

fn key_index(section: &str, key: &str) -> Option<usize> {
    SCHEMA.iter().position(|(s, k, _)| *s == section && *k == key)
}

fn strip_comment(line: &str) -> &str {
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        match c {
            '\\' if in_str && !escaped => {
                escaped = true;
                continue;
            }
            '"' if !escaped => in_str = !in_str,
            '#' if !in_str => return &line[..i],
            _ => {}
        }
        escaped = false;
    }
    line
}

fn parse_string(raw: &str) -> Option<String> {
    let inner = raw.strip_prefix('"')?.strip_suffix('"')?;
    let mut out = String::new();
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => match chars.next()? {
                '"' => out.push('"'),
                '\\' => out.push('\\'),
                _ => return None,
            },
            '"' => return None,
            c => out.push(c),
        }
    }
    Some(out)
}

fn parse_number(raw: &str) -> std::result::Result<f64, String> {
    let ok = raw
        .chars()
        .all(|c| c.is_ascii_digit() || matches!(c, '+' | '-' | '.' | 'e' | 'E'));
    match raw.parse::<f64>() {
        Ok(x) if ok && x.is_finite() => Ok(x),
        _ => Err(format!("`{raw}` is not a finite number")),
    }
}

fn parse_int(raw: &str) -> std::result::Result<i64, String> {
    raw.parse::<i64>()
        .map_err(|_| format!("`{raw}` is not an integer"))
}

fn parse_value(raw: &str, kind: Kind) -> std::result::Result<Value, String> {
    match kind {
        Kind::Str => parse_string(raw)
            .map(Value::Str)
            .ok_or_else(|| format!("expected a double-quoted string, got `{raw}`")),
        Kind::Bool => match raw {
            "true" => Ok(Value::Bool(true)),
            "false" => Ok(Value::Bool(false)),
            _ => Err(format!("expected true or false, got `{raw}`")),
        },
        Kind::Int => parse_int(raw).map(Value::Int),
        Kind::Float => parse_number(raw).map(Value::Float),
        Kind::FloatList | Kind::IntList => {
            let items: Vec<&str> = raw.split(',').map(str::trim).collect();
            if items.iter().any(|s| s.is_empty()) {
                return Err(format!("malformed list `{raw}`"));
            }
            if kind == Kind::FloatList {
                items
                    .iter()
                    .map(|s| parse_number(s))
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map(Value::FloatList)
            } else {
                items
                    .iter()
                    .map(|s| parse_int(s))
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map(Value::IntList)
            }
        }
    }
}

fn lex(text: &str, errors: &mut Vec<String>) -> (Entries, Vec<bool>) {
    let mut entries = Entries::new();
    let mut seen = vec![false; SECTIONS.len()];
    seen[0] = true;
    let mut section = 0usize;
    for (n, raw_line) in text.lines().enumerate() {
        let lineno = n + 1;
        let line = strip_comment(raw_line).trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                errors.push(format!("line {lineno}: malformed section header `{line}`"));
                continue;
            };
            match SECTIONS.iter().position(|s| !s.is_empty() && *s == name.trim()) {
                Some(i) if seen[i] => {
                    errors.push(format!("line {lineno}: duplicate section [{}]", name.trim()));
                    section = i;
                }
                Some(i) => {
                    seen[i] = true;
                    section = i;
                }
                None => {
                    errors.push(format!("line {lineno}: unknown section [{}]", name.trim()));
                    section = usize::MAX;
                }
            }
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            errors.push(format!("line {lineno}: expected `key = value`, got `{line}`"));
            continue;
        };
        if section == usize::MAX {
            continue;
        }
        let (key, value) = (key.trim(), value.trim());
        let sname = SECTIONS[section];
        let Some(k) = key_index(sname, key) else {
            let place = if sname.is_empty() {
                "at top level".to_string()
            } else {
                format!("in [{sname}]")
            };
            errors.push(format!("line {lineno}: unknown key `{key}` {place}"));
            continue;
        };
        if let Some((_, first)) = entries.get(&(section, k)) {
            errors.push(format!(
                "line {lineno}: duplicate key `{key}` (first set on line {first})"
            ));
            continue;
        }
        match parse_value(value, SCHEMA[k].2) {
            Ok(v) => {
                entries.insert((section, k), (v, lineno));
            }
            Err(msg) => errors.push(format!("line {lineno}: {key}: {msg}")),
        }
    }
    (entries, seen)
}

struct Reader<'a> {
    entries: &'a Entries,
    errors: Vec<String>,
}

impl Reader<'_> {
    fn get(&self, section: &str, key: &str) -> Option<&(Value, usize)> {
        let s = SECTIONS.iter().position(|x| *x == section)?;
        let k = key_index(section, key)?;
        self.entries.get(&(s, k))
    }

    fn line(&self, section: &str, key: &str) -> String {
        self.get(section, key)
            .map_or_else(String::new, |(_, l)| format!("line {l}: "))
    }

    fn float(&self, section: &str, key: &str) -> Option<f64> {
        match self.get(section, key) {
            Some((Value::Float(x), _)) => Some(*x),
            _ => None,
        }
    }

    fn int(&self, section: &str, key: &str) -> Option<i64> {
        match self.get(section, key) {
            Some((Value::Int(x), _)) => Some(*x),
            _ => None,
        }
    }

    fn count(&mut self, section: &str, key: &str) -> Option<usize> {
        let v = self.int(section, key)?;
        if v < 0 {
            let l = self.line(section, key);
            self.errors.push(format!("{l}{key} must be nonnegative, got {v}"));
            return None;
        }
        Some(v as usize)
    }

    fn boolean(&self, section: &str, key: &str) -> Option<bool> {
        match self.get(section, key) {
            Some((Value::Bool(x), _)) => Some(*x),
            _ => None,
        }
    }

    fn string(&self, section: &str, key: &str) -> Option<String> {
        match self.get(section, key) {
            Some((Value::Str(x), _)) => Some(x.clone()),
            _ => None,
        }
    }

    fn floats(&self, section: &str, key: &str) -> Option<Vec<f64>> {
        match self.get(section, key) {
            Some((Value::FloatList(x), _)) => Some(x.clone()),
            _ => None,
        }
    }

    fn ints(&self, section: &str, key: &str) -> Option<Vec<i64>> {
        match self.get(section, key) {
            Some((Value::IntList(x), _)) => Some(x.clone()),
            _ => None,
        }
    }

    fn require<T>(&mut self, section: &str, key: &str, v: Option<T>) -> Option<T> {
        if v.is_none() && self.get(section, key).is_none() {
            self.errors.push(format!("missing `{key}` in [{section}]"));
        }
        v
    }

    fn check(&mut self, section: &str, key: &str, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            let l = self.line(section, key);
            self.errors.push(format!("{l}{}", msg()));
        }
    }
}

fn positive(x: Option<f64>) -> bool {
    x.is_none_or(|v| v > 0.0)
}

fn read_data(r: &mut Reader) -> Option<DataRecipe> {
    let recipe = r.string("data", "recipe");
    let recipe = r.require("data", "recipe", recipe)?;
    let keys: &[&str] = match recipe.as_str() {
        "gaussian-bump" => &["amplitude", "width", "phase_amplitude", "phase_width"],
        "homogeneous" => &["re", "im"],
        "plane-modulated" => &["amplitude", "modes", "phase_amplitude", "phase_width"],
        other => {
            let l = r.line("data", "recipe");
            r.errors.push(format!(
                "{l}unknown recipe \"{other}\" (expected gaussian-bump, homogeneous or plane-modulated)"
            ));
            return None;
        }
    };
    for (_, key, _) in SCHEMA.iter().filter(|(s, k, _)| *s == "data" && *k != "recipe") {
        if !keys.contains(key) && r.get("data", key).is_some() {
            let l = r.line("data", key);
            r.errors
                .push(format!("{l}key `{key}` does not apply to recipe \"{recipe}\""));
        }
    }
    let mut missing = false;
    for key in keys {
        if r.get("data", key).is_none() {
            r.errors.push(format!("missing `{key}` in [data] for recipe \"{recipe}\""));
            missing = true;
        }
    }
    if missing {
        return None;
    }
    let f = |r: &Reader, k: &str| r.float("data", k).expect("checked");
    let out = match recipe.as_str() {
        "gaussian-bump" => DataRecipe::GaussianBump {
            amplitude: f(r, "amplitude"),
            width: f(r, "width"),
            phase_amplitude: f(r, "phase_amplitude"),
            phase_width: f(r, "phase_width"),
        },
        "homogeneous" => DataRecipe::Homogeneous {
            re: f(r, "re"),
            im: f(r, "im"),
        },
        _ => DataRecipe::PlaneModulated {
            amplitude: f(r, "amplitude"),
            modes: r.ints("data", "modes").expect("checked"),
            phase_amplitude: f(r, "phase_amplitude"),
            phase_width: f(r, "phase_width"),
        },
    };
    for key in ["width", "phase_width"] {
        let v = r.float("data", key);
        if keys.contains(&key) {
            r.check("data", key, positive(v), || format!("{key} must be positive"));
        }
    }
    Some(out)
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

/// Keys each subcommand needs, as `(section, key)`.
fn required_keys(sub: Subcommand) -> &'static [(&'static str, &'static str)] {
    match sub {
        Subcommand::Direct => &[("physics", "epsilon"), ("numerics", "t_final")],
        Subcommand::Grenier => &[
            ("numerics", "t_final"),
            ("numerics", "dt"),
            ("numerics", "sample_spacing"),
        ],
        Subcommand::Wkb => &[
            ("numerics", "t_final"),
            ("numerics", "dt"),
            ("numerics", "sample_spacing"),
        ],
        Subcommand::Converge => &[
            ("numerics", "t_final"),
            ("numerics", "dt"),
            ("numerics", "sample_spacing"),
            ("sweep", "epsilons"),
        ],
        Subcommand::DeltaStudy => &[
            ("physics", "epsilon"),
            ("numerics", "t_final"),
            ("numerics", "dt"),
            ("sweep", "deltas"),
        ],
        Subcommand::Scaling => &[
            ("numerics", "scaling_s"),
            ("numerics", "scaling_dim"),
            ("numerics", "scaling_gamma"),
            ("sweep", "h_values"),
            ("sweep", "k_values"),
        ],
        Subcommand::Selftest => &[],
    }
}

/// Parses and validates `text`; the subcommand comes from the file when
/// `subcommand` is absent.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    parse_config_for(text, None)
}

/// Parses `text` for `sub`, additionally checking the keys `sub` needs.
pub fn parse_config_for(text: &str, sub: Option<Subcommand>) -> Result<ExperimentConfig> {
    let mut errors = Vec::new();
    let (entries, seen) = lex(text, &mut errors);
    let mut r = Reader {
        entries: &entries,
        errors,
    };
    for (i, name) in SECTIONS.iter().enumerate().skip(1).take(3) {
        if !seen[i] {
            r.errors.push(format!("missing [{name}]"));
        }
    }
    match r.int("", "format_version") {
        None if r.get("", "format_version").is_none() => {
            r.errors.push("missing `format_version` (expected 1)".into())
        }
        Some(v) if v != FORMAT_VERSION => {
            let l = r.line("", "format_version");
            r.errors
                .push(format!("{l}unsupported format_version {v} (expected 1)"))
        }
        _ => {}
    }
    let file_sub = match r.string("", "subcommand") {
        Some(s) => match Subcommand::parse(&s) {
            Some(c) => Some(c),
            None => {
                let l = r.line("", "subcommand");
                r.errors.push(format!("{l}unknown subcommand \"{s}\""));
                None
            }
        },
        None => None,
    };
    if let (Some(a), Some(b)) = (file_sub, sub) {
        if a != b {
            let l = r.line("", "subcommand");
            r.errors.push(format!(
                "{l}config is for `{}` but `{}` was requested",
                a.as_str(),
                b.as_str()
            ));
        }
    }
    let sub = sub.or(file_sub);

    let dim = if seen[1] { r.count("physics", "dim") } else { None };
    let gamma = r.float("physics", "gamma");
    let lambda = r.float("physics", "lambda");
    let epsilon = r.float("physics", "epsilon");
    if seen[1] {
        r.require("physics", "dim", dim);
        r.require("physics", "gamma", gamma);
        r.require("physics", "lambda", lambda);
    }
    if let (Some(n), Some(g)) = (dim, gamma) {
        if let Err(e) = check_gamma(n, g) {
            let l = r.line("physics", "gamma");
            r.errors.push(format!("{l}{}", strip_kind(&e)));
        }
    }
    if let Some(e) = epsilon {
        r.check("physics", "epsilon", e > 0.0 && e <= 1.0, || {
            format!("ε must lie in (0, 1], got {e}")
        });
    }

    let points = if seen[2] { r.count("grid", "points") } else { None };
    let box_length = r.float("grid", "box_length");
    if seen[2] {
        r.require("grid", "points", points);
        r.require("grid", "box_length", box_length);
    }
    if let (Some(n), Some(m), Some(l)) = (dim, points, box_length) {
        if let Err(e) = Grid::new(n, m, l) {
            let line = r.line("grid", "points");
            r.errors.push(format!("{line}{}", strip_kind(&e)));
        }
    }

    let data = if seen[3] { read_data(&mut r) } else { None };
    if let (Some(DataRecipe::PlaneModulated { modes, .. }), Some(n)) = (&data, dim) {
        let ok = modes.len() == n;
        r.check("data", "modes", ok, || {
            format!("plane-modulated data needs {n} modes, got {}", modes.len())
        });
    }

    let numerics = Numerics {
        t_final: r.float("numerics", "t_final"),
        dt: r.float("numerics", "dt"),
        direct_dt: r.float("numerics", "direct_dt"),
        dt_constant: r.float("numerics", "dt_constant"),
        dt_factors: r.floats("numerics", "dt_factors"),
        sample_spacing: r.float("numerics", "sample_spacing"),
        delta: r.float("numerics", "delta"),
        guard_s: r.float("numerics", "guard_s"),
        guard_threshold: r.float("numerics", "guard_threshold"),
        guard_grad_cap: r.float("numerics", "guard_grad_cap"),
        s_prime: r.float("numerics", "s_prime"),
        regularity: r.float("numerics", "regularity"),
        depth: r.count("numerics", "depth"),
        orders: r.ints("numerics", "orders").map(|v| {
            v.into_iter().map(|o| o.max(0) as usize).collect()
        }),
        scaling_s: r.float("numerics", "scaling_s"),
        scaling_dim: r.count("numerics", "scaling_dim"),
        scaling_gamma: r.float("numerics", "scaling_gamma"),
        tau: r.float("numerics", "tau"),
        tau_max: r.float("numerics", "tau_max"),
        tau_tolerance: r.float("numerics", "tau_tolerance"),
        tau_steps: r.count("numerics", "tau_steps"),
        phase_deviation: r.float("numerics", "phase_deviation"),
        oscillation_threshold: r.float("numerics", "oscillation_threshold"),
        log_damping: r.boolean("numerics", "log_damping"),
        seed: r.count("numerics", "seed").map(|s| s as u64),
    };
    for key in [
        "t_final",
        "dt",
        "direct_dt",
        "dt_constant",
        "sample_spacing",
        "guard_threshold",
        "guard_grad_cap",
        "tau",
        "tau_max",
        "tau_tolerance",
    ] {
        let v = r.float("numerics", key);
        r.check("numerics", key, positive(v), || format!("{key} must be positive"));
    }
    if let Some(d) = numerics.delta {
        r.check("numerics", "delta", d >= 0.0, || "δ must be nonnegative".into());
    }
    if let Some(o) = r.ints("numerics", "orders") {
        r.check("numerics", "orders", o.iter().all(|&x| x >= 0), || {
            "orders must be nonnegative".into()
        });
    }
    if let Some(f) = &numerics.dt_factors {
        let ok = f.iter().all(|&x| x > 0.0) && strictly_decreasing(f) && f.len() >= 3;
        r.check("numerics", "dt_factors", ok, || {
            "dt_factors must be at least 3 positive, strictly decreasing values".into()
        });
    }
    if let (Some(t), Some(dt)) = (numerics.t_final, numerics.sample_spacing) {
        let n = (t / dt).round();
        r.check("numerics", "sample_spacing", n >= 1.0 && (n * dt - t).abs() <= 1e-9 * t.max(1.0), || {
            format!("sample_spacing {dt} does not divide t_final {t}")
        });
    }
    if let Some(n) = dim {
        let guard = GuardConfig {
            s: numerics.guard_s.unwrap_or(defaults::GUARD_S),
            threshold: numerics.guard_threshold.unwrap_or(defaults::GUARD_THRESHOLD),
            grad_cap: numerics.guard_grad_cap.unwrap_or(defaults::GUARD_GRAD_CAP),
        };
        if let Err(e) = guard.validate(n) {
            let l = r.line("numerics", "guard_s");
            r.errors.push(format!("{l}{}", strip_kind(&e)));
        }
    }
    if let Some(d) = numerics.depth {
        for &o in numerics.orders.iter().flatten() {
            r.check("numerics", "orders", o < d, || {
                format!("order {o} needs depth at least {}, depth is {d}", o + 1)
            });
        }
    }

    let sweep = Sweep {
        epsilons: r.floats("sweep", "epsilons"),
        lambdas: r.floats("sweep", "lambdas"),
        deltas: r.floats("sweep", "deltas"),
        h_values: r.floats("sweep", "h_values"),
        k_values: r.floats("sweep", "k_values"),
    };
    if let Some(e) = &sweep.epsilons {
        let ok = e.iter().all(|&x| x > 0.0 && x <= 1.0) && strictly_decreasing(e);
        r.check("sweep", "epsilons", ok, || {
            "epsilons must be strictly decreasing values in (0, 1]".into()
        });
    }
    if let Some(d) = &sweep.deltas {
        let ok = d.iter().all(|&x| x >= 0.0) && d.windows(2).all(|w| w[1] <= w[0]) && d.len() >= 2;
        r.check("sweep", "deltas", ok, || {
            "deltas must be at least two nonnegative values sorted decreasing".into()
        });
    }
    if let Some(h) = &sweep.h_values {
        let ok = h.iter().all(|&x| x > 0.0 && x <= 1.0) && strictly_decreasing(h);
        r.check("sweep", "h_values", ok, || {
            "h_values must be strictly decreasing values in (0, 1]".into()
        });
    }

    let output = OutputSection {
        dir: r.string("output", "dir"),
        snapshots: r.boolean("output", "snapshots"),
    };

    if let Some(sub) = sub {
        for (section, key) in required_keys(sub) {
            if r.get(section, key).is_none() {
                r.errors
                    .push(format!("`{}` needs `{key}` in [{section}]", sub.as_str()));
            }
        }
        if sub == Subcommand::Converge {
            if let Some(e) = &sweep.epsilons {
                r.check("sweep", "epsilons", e.len() >= 3, || {
                    "converge needs at least 3 epsilons".into()
                });
            }
        }
        if sub == Subcommand::Grenier && epsilon.is_none() && sweep.epsilons.is_none() {
            r.errors
                .push("`grenier` needs `epsilon` in [physics] or `epsilons` in [sweep]".into());
        }
        if sub == Subcommand::Scaling && numerics.tau.is_none() && numerics.tau_max.is_none() {
            r.errors
                .push("`scaling` needs `tau` or `tau_max` in [numerics]".into());
        }
    }

    if !r.errors.is_empty() {
        return Err(Error::Config(r.errors));
    }
    let config = ExperimentConfig {
        format_version: FORMAT_VERSION,
        subcommand: file_sub,
        physics: PhysicsSection {
            dim: dim.expect("validated"),
            gamma: gamma.expect("validated"),
            lambda: lambda.expect("validated"),
            epsilon,
        },
        grid: GridSection {
            points: points.expect("validated"),
            box_length: box_length.expect("validated"),
        },
        data: data.expect("validated"),
        numerics,
        sweep,
        output,
    };
    if sub == Some(Subcommand::Scaling) {
        config.scaling_config()?.validate()?;
    }
    Ok(config)
}

fn strip_kind(e: &Error) -> String {
    match e {
        Error::Constraint(m) | Error::InvalidGrid(m) | Error::Domain(m) => m.clone(),
        other => other.to_string(),
    }
}

fn fmt_float(x: f64) -> String {
    let s = format!("{x}");
    if s.contains(['.', 'e', 'E']) || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{s}.0")
    }
}

fn fmt_floats(v: &[f64]) -> String {
    v.iter().map(|x| fmt_float(*x)).collect::<Vec<_>>().join(", ")
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

impl ExperimentConfig {
    /// Canonical text: fixed section and key order, only explicit keys.
    pub fn to_canonical(&self) -> String {
        let mut out = String::new();
        let mut put = |key: &str, value: String| {
            writeln!(out, "{key} = {value}").expect("string write");
        };
        put("format_version", self.format_version.to_string());
        if let Some(s) = self.subcommand {
            put("subcommand", quote(s.as_str()));
        }
        let mut text = out;
        let mut section = |name: &str, items: Vec<(&str, Option<String>)>| {
            let items: Vec<(&str, String)> =
                items.into_iter().filter_map(|(k, v)| v.map(|v| (k, v))).collect();
            if items.is_empty() && !matches!(name, "physics" | "grid" | "data") {
                return;
            }
            writeln!(text, "\n[{name}]").expect("string write");
            for (k, v) in items {
                writeln!(text, "{k} = {v}").expect("string write");
            }
        };
        let p = &self.physics;
        section(
            "physics",
            vec![
                ("dim", Some(p.dim.to_string())),
                ("gamma", Some(fmt_float(p.gamma))),
                ("lambda", Some(fmt_float(p.lambda))),
                ("epsilon", p.epsilon.map(fmt_float)),
            ],
        );
        section(
            "grid",
            vec![
                ("points", Some(self.grid.points.to_string())),
                ("box_length", Some(fmt_float(self.grid.box_length))),
            ],
        );
        let data = match &self.data {
            DataRecipe::GaussianBump {
                amplitude,
                width,
                phase_amplitude,
                phase_width,
            } => vec![
                ("recipe", Some(quote("gaussian-bump"))),
                ("amplitude", Some(fmt_float(*amplitude))),
                ("width", Some(fmt_float(*width))),
                ("phase_amplitude", Some(fmt_float(*phase_amplitude))),
                ("phase_width", Some(fmt_float(*phase_width))),
            ],
            DataRecipe::Homogeneous { re, im } => vec![
                ("recipe", Some(quote("homogeneous"))),
                ("re", Some(fmt_float(*re))),
                ("im", Some(fmt_float(*im))),
            ],
            DataRecipe::PlaneModulated {
                amplitude,
                modes,
                phase_amplitude,
                phase_width,
            } => vec![
                ("recipe", Some(quote("plane-modulated"))),
                ("amplitude", Some(fmt_float(*amplitude))),
                ("phase_amplitude", Some(fmt_float(*phase_amplitude))),
                ("phase_width", Some(fmt_float(*phase_width))),
                (
                    "modes",
                    Some(modes.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(", ")),
                ),
            ],
        };
        section("data", data);
        let n = &self.numerics;
        let f = |x: Option<f64>| x.map(fmt_float);
        let u = |x: Option<usize>| x.map(|v| v.to_string());
        section(
            "numerics",
            vec![
                ("t_final", f(n.t_final)),
                ("dt", f(n.dt)),
                ("direct_dt", f(n.direct_dt)),
                ("dt_constant", f(n.dt_constant)),
                ("dt_factors", n.dt_factors.as_deref().map(fmt_floats)),
                ("sample_spacing", f(n.sample_spacing)),
                ("delta", f(n.delta)),
                ("guard_s", f(n.guard_s)),
                ("guard_threshold", f(n.guard_threshold)),
                ("guard_grad_cap", f(n.guard_grad_cap)),
                ("s_prime", f(n.s_prime)),
                ("regularity", f(n.regularity)),
                ("depth", u(n.depth)),
                (
                    "orders",
                    n.orders
                        .as_ref()
                        .map(|o| o.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")),
                ),
                ("scaling_s", f(n.scaling_s)),
                ("scaling_dim", u(n.scaling_dim)),
                ("scaling_gamma", f(n.scaling_gamma)),
                ("tau", f(n.tau)),
                ("tau_max", f(n.tau_max)),
                ("tau_tolerance", f(n.tau_tolerance)),
                ("tau_steps", u(n.tau_steps)),
                ("phase_deviation", f(n.phase_deviation)),
                ("oscillation_threshold", f(n.oscillation_threshold)),
                ("log_damping", n.log_damping.map(|b| b.to_string())),
                ("seed", n.seed.map(|s| s.to_string())),
            ],
        );
        let s = &self.sweep;
        let l = |x: &Option<Vec<f64>>| x.as_deref().map(fmt_floats);
        section(
            "sweep",
            vec![
                ("epsilons", l(&s.epsilons)),
                ("lambdas", l(&s.lambdas)),
                ("deltas", l(&s.deltas)),
                ("h_values", l(&s.h_values)),
                ("k_values", l(&s.k_values)),
            ],
        );
        section(
            "output",
            vec![
                ("dir", self.output.dir.as_deref().map(quote)),
                ("snapshots", self.output.snapshots.map(|b| b.to_string())),
            ],
        );
        text
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.physics.dim, self.grid.points, self.grid.box_length)
    }

    /// Physics with `epsilon`, or the configured one.
    pub fn physics_at(&self, epsilon: Option<f64>) -> Result<PhysicsParams> {
        let eps = epsilon
            .or(self.physics.epsilon)
            .or_else(|| self.sweep.epsilons.as_ref().and_then(|e| e.first().copied()))
            .ok_or_else(|| Error::Config(vec!["no ε configured".into()]))?;
        PhysicsParams::new(eps, self.physics.lambda, self.physics.gamma, self.physics.dim)
    }

    pub fn guard(&self) -> GuardConfig {
        let n = &self.numerics;
        GuardConfig {
            s: n.guard_s.unwrap_or(defaults::GUARD_S),
            threshold: n.guard_threshold.unwrap_or(defaults::GUARD_THRESHOLD),
            grad_cap: n.guard_grad_cap.unwrap_or(defaults::GUARD_GRAD_CAP),
        }
    }

    pub fn dt_policy(&self) -> DtPolicy {
        DtPolicy {
            constant: self.numerics.dt_constant.unwrap_or(DEFAULT_DT_CONSTANT),
        }
    }

    pub fn epsilons(&self) -> Vec<f64> {
        self.sweep
            .epsilons
            .clone()
            .or_else(|| self.physics.epsilon.map(|e| vec![e]))
            .unwrap_or_default()
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.sweep
            .lambdas
            .clone()
            .unwrap_or_else(|| vec![self.physics.lambda])
    }

    pub fn scaling_config(&self) -> Result<ScalingConfig> {
        let n = &self.numerics;
        let missing = |k: &str| Error::Config(vec![format!("`scaling` needs `{k}`")]);
        Ok(ScalingConfig {
            s: n.scaling_s.ok_or_else(|| missing("scaling_s"))?,
            gamma: n.scaling_gamma.ok_or_else(|| missing("scaling_gamma"))?,
            lambda: self.physics.lambda,
            dim: n.scaling_dim.ok_or_else(|| missing("scaling_dim"))?,
            h_values: self.sweep.h_values.clone().ok_or_else(|| missing("h_values"))?,
            k_values: self.sweep.k_values.clone().ok_or_else(|| missing("k_values"))?,
            tau: n.tau,
            log_damping: n.log_damping.unwrap_or(false),
            surrogate_dim: self.physics.dim,
            surrogate_gamma: self.physics.gamma,
            phase_deviation: n.phase_deviation.unwrap_or(defaults::PHASE_DEVIATION),
            tau_max: n.tau_max.unwrap_or(0.0),
            tau_tolerance: n.tau_tolerance.unwrap_or(defaults::TAU_TOLERANCE),
            tau_steps: n.tau_steps.unwrap_or(defaults::TAU_STEPS),
            oscillation_threshold: n
                .oscillation_threshold
                .unwrap_or(defaults::OSCILLATION_THRESHOLD),
            dt_policy: self.dt_policy(),
        })
    }
}
