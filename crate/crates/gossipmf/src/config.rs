//! Flat `key = value` run configuration.
//!
//! One setting per line, `#` starts a comment. A later value for a key
//! replaces an earlier one, except `churn` and `rating`, which accumulate.
//! Command-line overrides are appended after the file, so they win.
//!
//! ```text
//! seed = 7
//! dataset = synthetic            # synthetic | movielens | movielens_cv
//! synthetic.users = 100
//! synthetic.items = 100
//! synthetic.rank = 10
//! synthetic.missing = 0.2
//! engine = event                 # event | sequential | centralized
//! rank = 10
//! lambda = 0.05
//! eta = 0.02
//! eta.item.3 = 0.01
//! iterations = 200x              # absolute count, or a multiple of |ratings|
//! fanout = 10
//! peer_refresh = 1.0             # or `never`
//! broadcast_interval = 1.0
//! broadcast_phase = random       # random | staggered
//! delay = uniform 0.05 2.0       # or `fixed 0.1`
//! duration = time 1000           # or `deliveries 2000000` / `deliveries 250x`
//! sample_every = 10x
//! churn = 500 quit item 3
//! churn = 750 join item 3
//! rating = 120.5 4 17 3
//! clip = 1 5                     # or `none`
//! mean_center = false
//! metrics_out = out/run.csv
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gossipmf_core::sim::{
    BroadcastPhase, ChurnAction, ChurnEvent, DelayModel, Duration, NewRatingEvent, NodeId, SimConfig,
};
use gossipmf_core::Hyperparams;

use crate::error::{Error, Result};
use crate::movielens::{ML100K_ITEMS, ML100K_USERS};

/// Where the ratings come from.
#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSpec {
    /// Generated low-rank data.
    Synthetic {
        num_users: usize,
        num_items: usize,
        rank: usize,
        missing_frac: f64,
    },
    /// A single `u.data` file. Without `test` the error is measured on the
    /// training ratings themselves.
    MovieLens {
        path: PathBuf,
        test: Option<PathBuf>,
        num_users: usize,
        num_items: usize,
    },
    /// A directory with the five official folds.
    MovieLensCv {
        dir: PathBuf,
        num_users: usize,
        num_items: usize,
    },
}

impl DatasetSpec {
    fn is_movielens(&self) -> bool {
        !matches!(self, DatasetSpec::Synthetic { .. })
    }

    /// Matrix dimensions `(m, n)`.
    pub fn dims(&self) -> (usize, usize) {
        match *self {
            DatasetSpec::Synthetic { num_users, num_items, .. }
            | DatasetSpec::MovieLens { num_users, num_items, .. }
            | DatasetSpec::MovieLensCv { num_users, num_items, .. } => (num_users, num_items),
        }
    }
}

impl fmt::Display for DatasetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetSpec::Synthetic { num_users, num_items, rank, missing_frac } => {
                write!(f, "synthetic({num_users}x{num_items}, rank {rank}, {missing_frac} missing)")
            }
            DatasetSpec::MovieLens { path, .. } => write!(f, "movielens({})", path.display()),
            DatasetSpec::MovieLensCv { dir, .. } => write!(f, "movielens_cv({})", dir.display()),
        }
    }
}

/// Training engine.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Engine {
    /// Discrete-event gossip simulation.
    Event,
    /// Sampled single-sided updates on one machine.
    Sequential,
    /// Paired-update SGD; `iterations` counts pairs.
    Centralized,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Event => "event",
            Engine::Sequential => "sequential",
            Engine::Centralized => "centralized",
        }
    }
}

impl FromStr for Engine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "event" => Ok(Engine::Event),
            "sequential" => Ok(Engine::Sequential),
            "centralized" => Ok(Engine::Centralized),
            _ => Err(format!("unknown engine {s:?} (event, sequential, centralized)")),
        }
    }
}

/// A count that is either absolute or a multiple of the number of training
/// ratings, written `250000` or `200x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Budget {
    Absolute(u64),
    PerRating(f64),
}

impl Budget {
    /// The count for a training set of `num_ratings` entries.
    pub fn resolve(self, num_ratings: usize) -> u64 {
        match self {
            Budget::Absolute(k) => k,
            Budget::PerRating(f) => (f * num_ratings as f64).round() as u64,
        }
    }
}

impl FromStr for Budget {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if let Some(f) = s.strip_suffix('x') {
            match f.parse::<f64>() {
                Ok(f) if f >= 0.0 && f.is_finite() => Ok(Budget::PerRating(f)),
                _ => Err(format!("bad multiple {s:?}")),
            }
        } else {
            s.parse().map(Budget::Absolute).map_err(|_| format!("bad count {s:?}"))
        }
    }
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Budget::Absolute(k) => write!(f, "{k}"),
            Budget::PerRating(x) => write!(f, "{x}x"),
        }
    }
}

/// Stop condition of the event engine before it is resolved against a
/// dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DurationSpec {
    Time(f64),
    Deliveries(Budget),
}

/// A fully parsed run configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetSpec,
    pub engine: Engine,
    pub seed: u64,
    pub rank: usize,
    pub lambda: f64,
    pub eta: f64,
    pub eta_overrides: BTreeMap<NodeId, f64>,
    /// Updates for the sequential engines (pairs for `centralized`).
    pub iterations: Budget,
    /// `None` caps the default of 10 at the population sizes.
    pub fanout: Option<usize>,
    pub peer_refresh: Option<f64>,
    pub broadcast_interval: f64,
    pub broadcast_phase: BroadcastPhase,
    pub delay: DelayModel,
    pub duration: DurationSpec,
    pub sample_every: Budget,
    pub churn: Vec<ChurnEvent>,
    pub new_ratings: Vec<NewRatingEvent>,
    pub clip: Option<(f64, f64)>,
    pub mean_center: bool,
    pub metrics_out: Option<PathBuf>,
}

/// Ordered `key = value` pairs, with the line each came from (0 for
/// overrides).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawConfig {
    entries: Vec<(String, String, usize)>,
}

impl RawConfig {
    /// Splits config text into pairs.
    pub fn parse(text: &str) -> Result<Self> {
        let mut raw = RawConfig::default();
        for (idx, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected `key = value`", idx + 1)));
            };
            raw.entries.push((k.trim().to_string(), v.trim().to_string(), idx + 1));
        }
        Ok(raw)
    }

    /// Reads and splits a config file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RawConfig::parse(&text)
    }

    /// Appends an override.
    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.push((key.into(), value.into(), 0));
    }

    /// Appends a `key=value` override as given on the command line.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {pair:?} is not `key=value`")))?;
        self.set(k.trim(), v.trim());
        Ok(())
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v, _)| (k.as_str(), v.as_str()))
    }
}

fn at(line: usize, key: &str) -> String {
    if line == 0 {
        format!("override `{key}`")
    } else {
        format!("line {line} (`{key}`)")
    }
}

fn num<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{}: cannot parse {value:?}", at(line, key))))
}

impl RunConfig {
    /// Builds a config from raw pairs, applying defaults.
    ///
    /// `eta` defaults to 0.02 on synthetic data and 0.01 on MovieLens;
    /// `iterations` to `200x` and `60x` respectively.
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let mut last: BTreeMap<&str, (&str, usize)> = BTreeMap::new();
        let mut churn = Vec::new();
        let mut new_ratings = Vec::new();
        let mut eta_overrides = BTreeMap::new();
        for (k, v, line) in &raw.entries {
            let (k, v, line) = (k.as_str(), v.as_str(), *line);
            match k {
                "churn" => churn.push(parse_churn(v, line)?),
                "rating" => new_ratings.push(parse_new_rating(v, line)?),
                _ if k.starts_with("eta.") => {
                    let node = parse_node_key(k, line)?;
                    eta_overrides.insert(node, num::<f64>(k, v, line)?);
                }
                _ if KEYS.contains(&k) => {
                    last.insert(k, (v, line));
                }
                _ => return Err(Error::Config(format!("{}: unknown key", at(line, k)))),
            }
        }
        let get = |k: &str| last.get(k).copied();
        let get_num = |k: &str| -> Result<Option<f64>> {
            get(k).map(|(v, line)| num::<f64>(k, v, line)).transpose()
        };
        let get_usize = |k: &str| -> Result<Option<usize>> {
            get(k).map(|(v, line)| num::<usize>(k, v, line)).transpose()
        };
        let path = |k: &str| get(k).map(|(v, _)| PathBuf::from(v));

        let seed = match get("seed") {
            Some((v, line)) => num::<u64>("seed", v, line)?,
            None => {
                return Err(Error::Config(
                    "no seed given: set `seed` in the config or pass --seed".into(),
                ))
            }
        };

        let dataset = match get("dataset").map(|(v, _)| v).unwrap_or("synthetic") {
            "synthetic" => DatasetSpec::Synthetic {
                num_users: get_usize("synthetic.users")?.unwrap_or(100),
                num_items: get_usize("synthetic.items")?.unwrap_or(100),
                rank: get_usize("synthetic.rank")?.unwrap_or(10),
                missing_frac: get_num("synthetic.missing")?.unwrap_or(0.2),
            },
            kind @ ("movielens" | "movielens_cv") => {
                let data = path("data").ok_or_else(|| {
                    Error::Config(format!("dataset {kind} needs `data` (a file or fold directory)"))
                })?;
                let num_users = get_usize("data.users")?.unwrap_or(ML100K_USERS);
                let num_items = get_usize("data.items")?.unwrap_or(ML100K_ITEMS);
                if kind == "movielens" {
                    DatasetSpec::MovieLens { path: data, test: path("test_data"), num_users, num_items }
                } else {
                    DatasetSpec::MovieLensCv { dir: data, num_users, num_items }
                }
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown dataset {other:?} (synthetic, movielens, movielens_cv)"
                )))
            }
        };
        let movielens = dataset.is_movielens();

        let engine = match get("engine") {
            Some((v, line)) => v.parse().map_err(|e| Error::Config(format!("{}: {e}", at(line, "engine"))))?,
            None => Engine::Sequential,
        };
        let budget = |k: &str, default: Budget| -> Result<Budget> {
            match get(k) {
                Some((v, line)) => v.parse().map_err(|e| Error::Config(format!("{}: {e}", at(line, k)))),
                None => Ok(default),
            }
        };
        let hp = Hyperparams::default();

        let peer_refresh = match get("peer_refresh") {
            None | Some(("never", _)) => None,
            Some((v, line)) => Some(num::<f64>("peer_refresh", v, line)?),
        };
        let broadcast_phase = match get("broadcast_phase") {
            None | Some(("random", _)) => BroadcastPhase::Random,
            Some(("staggered", _)) => BroadcastPhase::Staggered,
            Some((v, line)) => {
                return Err(Error::Config(format!(
                    "{}: {v:?} is not random or staggered",
                    at(line, "broadcast_phase")
                )))
            }
        };
        let delay = match get("delay") {
            None => DelayModel::Fixed(0.1),
            Some((v, line)) => match split(v).as_slice() {
                ["fixed", d] => DelayModel::Fixed(num("delay", d, line)?),
                ["uniform", lo, hi] => DelayModel::Uniform {
                    min: num("delay", lo, line)?,
                    max: num("delay", hi, line)?,
                },
                _ => {
                    return Err(Error::Config(format!(
                        "{}: expected `fixed <d>` or `uniform <min> <max>`",
                        at(line, "delay")
                    )))
                }
            },
        };
        let duration = match get("duration") {
            None => DurationSpec::Time(1000.0),
            Some((v, line)) => match split(v).as_slice() {
                ["time", t] => DurationSpec::Time(num("duration", t, line)?),
                ["deliveries", k] => DurationSpec::Deliveries(
                    k.parse()
                        .map_err(|e| Error::Config(format!("{}: {e}", at(line, "duration"))))?,
                ),
                _ => {
                    return Err(Error::Config(format!(
                        "{}: expected `time <t>` or `deliveries <k>`",
                        at(line, "duration")
                    )))
                }
            },
        };
        let clip = match get("clip") {
            None | Some(("none", _)) => None,
            Some((v, line)) => match split(v).as_slice() {
                [lo, hi] => {
                    let (lo, hi) = (num::<f64>("clip", lo, line)?, num::<f64>("clip", hi, line)?);
                    if !(lo <= hi) {
                        return Err(Error::Config(format!("{}: lo must not exceed hi", at(line, "clip"))));
                    }
                    Some((lo, hi))
                }
                _ => return Err(Error::Config(format!("{}: expected `<lo> <hi>` or `none`", at(line, "clip")))),
            },
        };

        Ok(RunConfig {
            engine,
            seed,
            rank: get_usize("rank")?.unwrap_or(hp.rank),
            lambda: get_num("lambda")?.unwrap_or(hp.lambda),
            eta: get_num("eta")?.unwrap_or(if movielens { 0.01 } else { hp.eta }),
            eta_overrides,
            iterations: budget("iterations", Budget::PerRating(if movielens { 60.0 } else { 200.0 }))?,
            fanout: get_usize("fanout")?,
            peer_refresh,
            broadcast_interval: get_num("broadcast_interval")?.unwrap_or(1.0),
            broadcast_phase,
            delay,
            duration,
            sample_every: budget("sample_every", Budget::PerRating(10.0))?,
            churn,
            new_ratings,
            clip,
            mean_center: match get("mean_center") {
                Some((v, line)) => num::<bool>("mean_center", v, line)?,
                None => false,
            },
            metrics_out: path("metrics_out"),
            dataset,
        })
    }

    /// Parses config text.
    pub fn parse(text: &str) -> Result<Self> {
        RunConfig::from_raw(&RawConfig::parse(text)?)
    }

    /// The settings as `key = value` pairs that parse back to `self`.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: String| out.push((k.to_string(), v));
        put("seed", self.seed.to_string());
        match &self.dataset {
            DatasetSpec::Synthetic { num_users, num_items, rank, missing_frac } => {
                put("dataset", "synthetic".into());
                put("synthetic.users", num_users.to_string());
                put("synthetic.items", num_items.to_string());
                put("synthetic.rank", rank.to_string());
                put("synthetic.missing", missing_frac.to_string());
            }
            DatasetSpec::MovieLens { path, test, num_users, num_items } => {
                put("dataset", "movielens".into());
                put("data", path.display().to_string());
                if let Some(t) = test {
                    put("test_data", t.display().to_string());
                }
                put("data.users", num_users.to_string());
                put("data.items", num_items.to_string());
            }
            DatasetSpec::MovieLensCv { dir, num_users, num_items } => {
                put("dataset", "movielens_cv".into());
                put("data", dir.display().to_string());
                put("data.users", num_users.to_string());
                put("data.items", num_items.to_string());
            }
        }
        put("engine", self.engine.name().into());
        put("rank", self.rank.to_string());
        put("lambda", self.lambda.to_string());
        put("eta", self.eta.to_string());
        for (node, eta) in &self.eta_overrides {
            let key = match node {
                NodeId::User(i) => format!("eta.user.{i}"),
                NodeId::Item(j) => format!("eta.item.{j}"),
            };
            put(&key, eta.to_string());
        }
        put("iterations", self.iterations.to_string());
        if let Some(f) = self.fanout {
            put("fanout", f.to_string());
        }
        put(
            "peer_refresh",
            self.peer_refresh.map_or("never".into(), |t| t.to_string()),
        );
        put("broadcast_interval", self.broadcast_interval.to_string());
        put(
            "broadcast_phase",
            match self.broadcast_phase {
                BroadcastPhase::Random => "random",
                BroadcastPhase::Staggered => "staggered",
            }
            .into(),
        );
        put(
            "delay",
            match self.delay {
                DelayModel::Fixed(d) => format!("fixed {d}"),
                DelayModel::Uniform { min, max } => format!("uniform {min} {max}"),
            },
        );
        put(
            "duration",
            match self.duration {
                DurationSpec::Time(t) => format!("time {t}"),
                DurationSpec::Deliveries(b) => format!("deliveries {b}"),
            },
        );
        put("sample_every", self.sample_every.to_string());
        for c in &self.churn {
            let (kind, id) = match c.node {
                NodeId::User(i) => ("user", i),
                NodeId::Item(j) => ("item", j),
            };
            let action = match c.action {
                ChurnAction::Join => "join",
                ChurnAction::Quit => "quit",
            };
            put("churn", format!("{} {action} {kind} {id}", c.time));
        }
        for r in &self.new_ratings {
            put("rating", format!("{} {} {} {}", r.time, r.user, r.item, r.rating));
        }
        put(
            "clip",
            self.clip.map_or("none".into(), |(lo, hi)| format!("{lo} {hi}")),
        );
        put("mean_center", self.mean_center.to_string());
        if let Some(p) = &self.metrics_out {
            put("metrics_out", p.display().to_string());
        }
        out
    }

    /// Learning hyperparameters.
    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            rank: self.rank,
            lambda: self.lambda,
            eta: self.eta,
        }
    }

    /// Simulator configuration for a training set of `num_ratings` entries.
    /// New ratings are shifted by `-offset` to match mean-centered data.
    pub fn sim_config(&self, num_users: usize, num_items: usize, num_ratings: usize, offset: f64) -> SimConfig {
        let mut sim = SimConfig::new(num_users, num_items, self.seed);
        sim.rank = self.rank;
        sim.lambda = self.lambda;
        sim.eta = self.eta;
        sim.eta_overrides = self.eta_overrides.clone();
        if let Some(f) = self.fanout {
            sim.peer_fanout = f;
        }
        sim.peer_refresh_interval = self.peer_refresh;
        sim.broadcast_interval = self.broadcast_interval;
        sim.broadcast_phase = self.broadcast_phase;
        sim.delay = self.delay;
        sim.duration = match self.duration {
            DurationSpec::Time(t) => Duration::Time(t),
            DurationSpec::Deliveries(b) => Duration::Deliveries(b.resolve(num_ratings)),
        };
        sim.iteration_budget = self.iterations.resolve(num_ratings);
        sim.sample_every = Some(self.sample_every.resolve(num_ratings).max(1));
        sim.churn_events = self.churn.clone();
        sim.new_rating_events = self
            .new_ratings
            .iter()
            .map(|r| NewRatingEvent { rating: r.rating - offset, ..*r })
            .collect();
        sim
    }
}

const KEYS: &[&str] = &[
    "seed",
    "dataset",
    "synthetic.users",
    "synthetic.items",
    "synthetic.rank",
    "synthetic.missing",
    "data",
    "test_data",
    "data.users",
    "data.items",
    "engine",
    "rank",
    "lambda",
    "eta",
    "iterations",
    "fanout",
    "peer_refresh",
    "broadcast_interval",
    "broadcast_phase",
    "delay",
    "duration",
    "sample_every",
    "clip",
    "mean_center",
    "metrics_out",
];

fn split(v: &str) -> Vec<&str> {
    v.split_whitespace().collect()
}

fn parse_node_key(key: &str, line: usize) -> Result<NodeId> {
    let bad = || Error::Config(format!("{}: expected eta.user.<id> or eta.item.<id>", at(line, key)));
    let mut parts = key.splitn(3, '.').skip(1);
    let (Some(kind), Some(id)) = (parts.next(), parts.next()) else {
        return Err(bad());
    };
    let id: u32 = id.parse().map_err(|_| bad())?;
    match kind {
        "user" => Ok(NodeId::User(id)),
        "item" => Ok(NodeId::Item(id)),
        _ => Err(bad()),
    }
}

fn parse_churn(v: &str, line: usize) -> Result<ChurnEvent> {
    let bad = || Error::Config(format!("{}: expected `<time> join|quit user|item <id>`", at(line, "churn")));
    let [t, action, kind, id] = split(v)[..] else {
        return Err(bad());
    };
    let id: u32 = id.parse().map_err(|_| bad())?;
    Ok(ChurnEvent {
        time: num("churn", t, line)?,
        action: match action {
            "join" => ChurnAction::Join,
            "quit" => ChurnAction::Quit,
            _ => return Err(bad()),
        },
        node: match kind {
            "user" => NodeId::User(id),
            "item" => NodeId::Item(id),
            _ => return Err(bad()),
        },
    })
}

fn parse_new_rating(v: &str, line: usize) -> Result<NewRatingEvent> {
    let [t, user, item, rating] = split(v)[..] else {
        return Err(Error::Config(format!(
            "{}: expected `<time> <user> <item> <rating>`",
            at(line, "rating")
        )));
    };
    Ok(NewRatingEvent {
        time: num("rating", t, line)?,
        user: num("rating", user, line)?,
        item: num("rating", item, line)?,
        rating: num("rating", rating, line)?,
    })
}
