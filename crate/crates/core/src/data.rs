//! Dataset CSVs, the flat config format, and the synthetic data generator.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Boiler, CostBasis, FuelParams, MuDirection, Plant, TechParams};
use crate::robust::RobustOptions;
use crate::uncertainty::{SetConfig, SetKind};

pub const PLANT_HEADER: &str = "id,name,lat,lon,emissions_t_per_yr";
pub const BOILER_HEADER: &str = "id,site,energy_mj_per_yr";

/// Boiler demands below this look like GWh rather than MJ.
const GWH_SUSPECT: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Tech,
    Fuel,
}

impl FromStr for DatasetKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tech" => Ok(DatasetKind::Tech),
            "fuel" => Ok(DatasetKind::Fuel),
            _ => Err(Error::InvalidArgument(format!("unknown dataset kind `{s}` (allowed: tech, fuel)"))),
        }
    }
}

fn parse_err(origin: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: origin.to_string(),
        line,
        msg: msg.into(),
    }
}

/// Reads records after checking the header verbatim. Leading `#` lines are
/// comments. Returns `(line number, fields)` per row.
fn read_rows(text: &str, path: &str, header: &str) -> Result<Vec<(usize, Vec<String>)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(text.as_bytes());
    let want: Vec<&str> = header.split(',').collect();
    let mut rows = Vec::new();
    let mut seen_header = false;
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let fields: Vec<String> = rec.iter().map(|f| f.trim().to_string()).collect();
        if !seen_header {
            if fields != want {
                return Err(parse_err(path, line, format!("expected header `{header}`, found `{}`", fields.join(","))));
            }
            seen_header = true;
            continue;
        }
        if fields.len() != want.len() {
            return Err(parse_err(
                path,
                line,
                format!("expected {} fields, found {}", want.len(), fields.len()),
            ));
        }
        rows.push((line, fields));
    }
    if !seen_header {
        return Err(parse_err(path, 1, format!("missing header `{header}`")));
    }
    Ok(rows)
}

fn number(path: &str, line: usize, field: &str, raw: &str) -> Result<f64> {
    let v: f64 = raw
        .parse()
        .map_err(|_| parse_err(path, line, format!("`{field}` is not a number: `{raw}`")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("`{field}` is not finite")));
    }
    Ok(v)
}

fn unique_id(path: &str, line: usize, seen: &mut BTreeSet<String>, id: &str) -> Result<()> {
    if id.is_empty() {
        return Err(parse_err(path, line, "empty id"));
    }
    if !seen.insert(id.to_string()) {
        return Err(parse_err(path, line, format!("duplicate id `{id}`")));
    }
    Ok(())
}

/// Reads a file, naming it in the error.
pub fn read_file(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    std::fs::read_to_string(path).map_err(|source| Error::File {
        path: path.display().to_string(),
        source,
    })
}

/// Writes a file, naming it in the error.
pub fn write_file(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, bytes).map_err(|source| Error::File {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_plants(path: impl AsRef<Path>) -> Result<Vec<Plant>> {
    let path = path.as_ref();
    parse_plants(&read_file(path)?, &path.display().to_string())
}

/// Plants from CSV text; `origin` labels errors.
pub fn parse_plants(text: &str, path: &str) -> Result<Vec<Plant>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (line, f) in read_rows(text, path, PLANT_HEADER)? {
        unique_id(path, line, &mut seen, &f[0])?;
        let lat = number(path, line, "lat", &f[2])?;
        let lon = number(path, line, "lon", &f[3])?;
        let emissions = number(path, line, "emissions_t_per_yr", &f[4])?;
        if !(-90.0..=90.0).contains(&lat) {
            return Err(parse_err(path, line, format!("latitude {lat} outside [-90, 90]")));
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(parse_err(path, line, format!("longitude {lon} outside [-180, 180]")));
        }
        if emissions <= 0.0 {
            return Err(parse_err(path, line, format!("plant `{}` has non-positive emissions {emissions}", f[0])));
        }
        out.push(Plant {
            id: f[0].clone(),
            name: f[1].clone(),
            lat,
            lon,
            emissions,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoilerData {
    pub boilers: Vec<Boiler>,
    /// Lint messages for rows that were accepted but look suspicious.
    pub warnings: Vec<String>,
}

pub fn load_boilers(path: impl AsRef<Path>) -> Result<BoilerData> {
    let path = path.as_ref();
    parse_boilers(&read_file(path)?, &path.display().to_string())
}

/// Boilers from CSV text; `origin` labels errors and warnings.
pub fn parse_boilers(text: &str, path: &str) -> Result<BoilerData> {
    let mut seen = BTreeSet::new();
    let mut boilers = Vec::new();
    let mut warnings = Vec::new();
    for (line, f) in read_rows(text, path, BOILER_HEADER)? {
        unique_id(path, line, &mut seen, &f[0])?;
        let demand = number(path, line, "energy_mj_per_yr", &f[2])?;
        if demand <= 0.0 {
            return Err(parse_err(path, line, format!("boiler `{}` has non-positive demand {demand}", f[0])));
        }
        if demand < GWH_SUSPECT {
            let msg = format!(
                "{path}:{line}: boiler `{}` demand {demand} MJ/yr is implausibly small; GWh/yr entered by mistake?",
                f[0]
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
        boilers.push(Boiler {
            id: f[0].clone(),
            site: f[1].clone(),
            demand,
        });
    }
    Ok(BoilerData { boilers, warnings })
}

/// Generator ranges. Both are desk-scale guesses, not measured data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticRanges {
    pub emissions: (f64, f64),
    pub demand_mj: (f64, f64),
}

impl Default for SyntheticRanges {
    fn default() -> Self {
        Self {
            emissions: (1e6, 1e7),
            demand_mj: (3.6e7, 1.8e9),
        }
    }
}

fn sig6(v: f64) -> String {
    format!("{v:.5e}")
}

/// Deterministic dataset text for `kind` with `n` rows.
pub fn generate_synthetic(kind: DatasetKind, n: usize, seed: u64, ranges: &SyntheticRanges) -> Result<String> {
    if n == 0 {
        return Err(Error::InvalidArgument("synthetic dataset needs at least one row".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::new();
    writeln!(out, "# synthetic {} dataset: n={n} seed={seed}", kind_name(kind)).unwrap();
    match kind {
        DatasetKind::Tech => {
            let (lo, hi) = ranges.emissions;
            writeln!(out, "# synthetic emissions uniform in [{}, {}] t/yr", sig6(lo), sig6(hi)).unwrap();
            writeln!(out, "# synthetic scalars: c0=88 $/t eta=0.63 lr=0.07 a0=1e5 t/yr").unwrap();
            writeln!(out, "{PLANT_HEADER}").unwrap();
            for i in 0..n {
                let lat = rng.random_range(36.0..70.0);
                let lon = rng.random_range(-10.0..30.0);
                let e = rng.random_range(lo..=hi);
                writeln!(out, "P{i:03},synthetic plant {i},{},{},{}", sig6(lat), sig6(lon), sig6(e)).unwrap();
            }
        }
        DatasetKind::Fuel => {
            let (lo, hi) = ranges.demand_mj;
            writeln!(out, "# synthetic demand uniform in [{}, {}] MJ/yr", sig6(lo), sig6(hi)).unwrap();
            writeln!(out, "# synthetic scalars: a0=1e6 t/yr").unwrap();
            writeln!(out, "{BOILER_HEADER}").unwrap();
            for j in 0..n {
                let w = rng.random_range(lo..=hi);
                writeln!(out, "B{j:03},synthetic site {},{}", j / 4, sig6(w)).unwrap();
            }
        }
    }
    Ok(out)
}

fn kind_name(kind: DatasetKind) -> &'static str {
    match kind {
        DatasetKind::Tech => "tech",
        DatasetKind::Fuel => "fuel",
    }
}

/// Synthetic plants, identical to loading the generated file.
pub fn synthetic_plants(n: usize, seed: u64) -> Result<Vec<Plant>> {
    let text = generate_synthetic(DatasetKind::Tech, n, seed, &SyntheticRanges::default())?;
    parse_plants(&text, "<synthetic>")
}

/// Synthetic boilers, identical to loading the generated file.
pub fn synthetic_boilers(n: usize, seed: u64) -> Result<Vec<Boiler>> {
    let text = generate_synthetic(DatasetKind::Fuel, n, seed, &SyntheticRanges::default())?;
    Ok(parse_boilers(&text, "<synthetic>")?.boilers)
}

/// SHA-256 of a file's bytes, hex encoded.
pub fn file_digest(path: impl AsRef<Path>) -> Result<String> {
    use sha2::{Digest, Sha256};
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| Error::File {
        path: path.display().to_string(),
        source,
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

const KEYS: &[&str] = &[
    "set.kind",
    "set.level",
    "set.omega",
    "solver.starts",
    "solver.upper_starts",
    "solver.seed",
    "solver.feas_tol",
    "solver.stat_tol",
    "solver.max_outer",
    "solver.max_inner",
    "robust.tol",
    "robust.max_iter",
    "robust.workers",
    "robust.seed",
    "model.eta",
    "model.c0",
    "model.a0",
    "model.lr",
    "model.mu",
    "model.cost_basis",
    "model.mu_direction",
    "model.t_max",
    "model.policy_weight",
    "model.lhv_f1",
    "model.lhv_f2",
    "model.c_f1",
    "model.eta_f2",
    "model.g_max",
];

/// Flat `key = value` settings. Unknown keys are rejected; anything absent
/// takes the default of the corresponding options struct.
///
/// Defaults: `set.kind = box`, `set.level = 0`, `set.omega = 0`,
/// `solver.starts = 16` (pessimization), `solver.upper_starts = 8`,
/// `solver.seed = 0`, `solver.feas_tol = 1e-8`, `solver.stat_tol = 1e-6`,
/// `solver.max_outer = 50`, `solver.max_inner = 1000`, `robust.tol = 1e-4`,
/// `robust.max_iter = 100`, `robust.workers` = all cores, `robust.seed = 0`.
/// `set.level.<symbol or family>` overrides the level per parameter.
/// Model keys default to the model's own parameter defaults; `model.eta`
/// and `model.t_max` only apply to the tech model, the `lhv`, `c_f1`,
/// `eta_f2` and `g_max` keys only to the fuel model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfigTable {
    values: BTreeMap<String, String>,
}

impl ConfigTable {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_string(),
                line,
                msg: format!("expected `key = value`, found `{content}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !(KEYS.contains(&key) || key.strip_prefix("set.level.").is_some_and(|s| !s.is_empty())) {
                return Err(Error::Parse {
                    path: origin.to_string(),
                    line,
                    msg: format!("unknown config key `{key}`"),
                });
            }
            if values.insert(key.to_string(), value.to_string()).is_some() {
                return Err(Error::Parse {
                    path: origin.to_string(),
                    line,
                    msg: format!("key `{key}` set twice"),
                });
            }
        }
        let table = Self { values };
        // Surface bad values at load time rather than at first use.
        table.set_config()?;
        table.robust_options()?;
        table.tech_params()?;
        table.fuel_params()?;
        table.workers()?;
        Ok(table)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("cannot parse `{key} = {raw}`"))),
        }
    }

    fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn set_config(&self) -> Result<SetConfig> {
        let kind = match self.values.get("set.kind") {
            Some(raw) => raw.parse::<SetKind>().map_err(|e| Error::Config(e.to_string()))?,
            None => SetKind::Box,
        };
        let mut per_symbol = BTreeMap::new();
        for (k, v) in &self.values {
            if let Some(sym) = k.strip_prefix("set.level.") {
                let level = v
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("cannot parse `{k} = {v}`")))?;
                per_symbol.insert(sym.to_string(), level);
            }
        }
        Ok(SetConfig {
            kind,
            level: self.get_or("set.level", 0.0)?,
            per_symbol,
            omega: self.get_or("set.omega", 0.0)?,
        })
    }

    pub fn robust_options(&self) -> Result<RobustOptions> {
        let d = RobustOptions::default();
        let mut o = RobustOptions {
            tol: self.get_or("robust.tol", d.tol)?,
            max_iter: self.get_or("robust.max_iter", d.max_iter)?,
            workers: self.get_or("robust.workers", d.workers)?,
            seed: self.get_or("robust.seed", d.seed)?,
            pessimize_starts: self.get_or("solver.starts", d.pessimize_starts)?,
            upper_starts: self.get_or("solver.upper_starts", d.upper_starts)?,
            solver: d.solver,
        };
        // `solver.seed` perturbs every derived seed alongside `robust.seed`.
        let solver_seed: u64 = self.get_or("solver.seed", 0)?;
        o.seed ^= solver_seed.rotate_left(32);
        o.solver.feas_tol = self.get_or("solver.feas_tol", o.solver.feas_tol)?;
        o.solver.stat_tol = self.get_or("solver.stat_tol", o.solver.stat_tol)?;
        o.solver.max_outer = self.get_or("solver.max_outer", o.solver.max_outer)?;
        o.solver.max_inner = self.get_or("solver.max_inner", o.solver.max_inner)?;
        if !(o.tol > 0.0) || o.max_iter == 0 || o.pessimize_starts == 0 || o.upper_starts == 0 {
            return Err(Error::Config(
                "robust.tol must be positive; robust.max_iter and start counts at least 1".into(),
            ));
        }
        Ok(o)
    }

    /// Explicit `robust.workers`, if set.
    pub fn workers(&self) -> Result<Option<usize>> {
        self.get("robust.workers")
    }

    pub fn tech_params(&self) -> Result<TechParams> {
        let d = TechParams::default();
        Ok(TechParams {
            eta: self.get_or("model.eta", d.eta)?,
            c0: self.get_or("model.c0", d.c0)?,
            a0: self.get_or("model.a0", d.a0)?,
            lr: self.get_or("model.lr", d.lr)?,
            mu: self.get_or("model.mu", d.mu)?,
            t_max: self.get("model.t_max")?.or(d.t_max),
            cost_basis: self.basis("model.cost_basis", d.cost_basis)?,
            mu_direction: self.direction(d.mu_direction)?,
            policy_weight: self.get_or("model.policy_weight", d.policy_weight)?,
        })
    }

    pub fn fuel_params(&self) -> Result<FuelParams> {
        let d = FuelParams::default();
        Ok(FuelParams {
            lhv_f1: self.get_or("model.lhv_f1", d.lhv_f1)?,
            lhv_f2: self.get_or("model.lhv_f2", d.lhv_f2)?,
            c_f1: self.get_or("model.c_f1", d.c_f1)?,
            c0: self.get_or("model.c0", d.c0)?,
            eta_f2: self.get_or("model.eta_f2", d.eta_f2)?,
            a0: self.get_or("model.a0", d.a0)?,
            lr: self.get_or("model.lr", d.lr)?,
            mu: self.get_or("model.mu", d.mu)?,
            g_max: self.get("model.g_max")?.or(d.g_max),
            cost_basis: self.basis("model.cost_basis", d.cost_basis)?,
            mu_direction: self.direction(d.mu_direction)?,
            policy_weight: self.get_or("model.policy_weight", d.policy_weight)?,
        })
    }

    fn basis(&self, key: &str, default: CostBasis) -> Result<CostBasis> {
        self.values.get(key).map_or(Ok(default), |v| v.parse())
    }

    fn direction(&self, default: MuDirection) -> Result<MuDirection> {
        self.values.get("model.mu_direction").map_or(Ok(default), |v| v.parse())
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ConfigTable> {
    let path = path.as_ref();
    ConfigTable::parse(&read_file(path)?, &path.display().to_string())
}
