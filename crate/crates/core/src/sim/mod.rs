//! Gossip simulation of decentralized training.
//!
//! Two engines produce the same kind of [`RunOutput`]:
//!
//! * [`event`]: a deterministic discrete-event simulation of user nodes and
//!   item routers exchanging profile broadcasts and rating requests over a
//!   delayed network, with per-emitter staleness discard, churn and
//!   incremental ratings.
//! * [`sequential`]: the single-machine equivalent that repeatedly samples an
//!   observed rating and updates either its user or its item profile, plus the
//!   centralized paired-update SGD baseline used for comparison.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use crate::factor::{self, FactorMatrix, FactorVector, Hyperparams};
use crate::ratings::SparseRatings;
use crate::synthetic::DenseTruth;
use crate::{Error, Result};

pub mod event;
pub mod message;
pub mod node;
mod queue;
pub mod sequential;

pub use event::{run_event_sim, SimState};
pub use message::{stale_check, Acceptance, Message, MessageKind, Payload};
pub use node::{ItemDelivery, ItemNodeState, UserDelivery, UserNodeState};
pub use sequential::{centralized_sgd_baseline, run_centralized, run_fast_sequential, run_sequential_schedule};

/// Identity of a node. Users and item routers have separate id spaces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeId {
    /// A user node holding one rating row and one user profile.
    User(u32),
    /// A router hosting one item profile.
    Item(u32),
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::User(i) => write!(f, "user {i}"),
            NodeId::Item(j) => write!(f, "item {j}"),
        }
    }
}

/// Which profile of a rated pair gets updated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// Update `u_i` against `v_j`.
    User,
    /// Update `v_j` against `u_i`.
    Item,
}

/// Network delay of a single message.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DelayModel {
    /// Every message takes exactly this long.
    Fixed(f64),
    /// Delay drawn uniformly from `[min, max]`.
    Uniform {
        /// Shortest delay.
        min: f64,
        /// Longest delay.
        max: f64,
    },
}

/// When an event-engine run stops.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Duration {
    /// Process every event scheduled strictly before this simulated time.
    Time(f64),
    /// Stop after this many messages have been delivered.
    Deliveries(u64),
}

/// Offset of each node's first broadcast.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BroadcastPhase {
    /// Uniform in `[0, broadcast_interval)`, seeded.
    #[default]
    Random,
    /// Node `k` (users first, then items) starts at `k·interval/(m+n)`.
    /// Together with a short fixed delay this delivers one broadcast at a time.
    Staggered,
}

/// Join or quit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChurnAction {
    /// The node (re)enters with a fresh profile and peer list.
    Join,
    /// The node leaves; messages addressed to it are dropped.
    Quit,
}

/// A scheduled join or quit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChurnEvent {
    /// Simulated time of the event.
    pub time: f64,
    /// Affected node.
    pub node: NodeId,
    /// What happens.
    pub action: ChurnAction,
}

/// A rating given during the run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewRatingEvent {
    /// Simulated time of the event.
    pub time: f64,
    /// Rating user.
    pub user: u32,
    /// Rated item.
    pub item: u32,
    /// Value.
    pub rating: f64,
}

/// Everything that determines a simulation run.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    /// Latent dimension.
    pub rank: usize,
    /// Regularization weight.
    pub lambda: f64,
    /// Learning rate of every node without an override.
    pub eta: f64,
    /// Per-node learning rates.
    pub eta_overrides: BTreeMap<NodeId, f64>,
    /// Number of users `m`.
    pub num_users: usize,
    /// Number of items `n`.
    pub num_items: usize,
    /// Size of every peer list.
    pub peer_fanout: usize,
    /// Peer lists are redrawn this often; `None` keeps them fixed.
    pub peer_refresh_interval: Option<f64>,
    /// Time between two broadcasts of one node.
    pub broadcast_interval: f64,
    /// First-broadcast offsets.
    pub broadcast_phase: BroadcastPhase,
    /// Message delay.
    pub delay: DelayModel,
    /// Stop condition of the event engine.
    pub duration: Duration,
    /// Number of updates performed by the sequential engines.
    pub iteration_budget: u64,
    /// Trace sampling period in delivered messages (or iterations);
    /// `None` means `10·|Ω|`.
    pub sample_every: Option<u64>,
    /// Seed of every random stream.
    pub seed: u64,
    /// Scheduled joins and quits.
    pub churn_events: Vec<ChurnEvent>,
    /// Ratings added during the run.
    pub new_rating_events: Vec<NewRatingEvent>,
    /// Log every applied update (for equivalence checks).
    pub record_updates: bool,
    /// Log every accepted broadcast `(receiver, emitter, seq)`.
    pub record_acceptances: bool,
}

impl SimConfig {
    /// Defaults for an `m × n` problem: rank 10, `λ = 0.05`, `η = 0.02`,
    /// fanout 10 (capped by the population), fixed peers, unit broadcast
    /// interval, fixed delay 0.1.
    pub fn new(num_users: usize, num_items: usize, seed: u64) -> Self {
        let hp = Hyperparams::default();
        SimConfig {
            rank: hp.rank,
            lambda: hp.lambda,
            eta: hp.eta,
            eta_overrides: BTreeMap::new(),
            num_users,
            num_items,
            peer_fanout: 10.min(num_users).min(num_items).max(1),
            peer_refresh_interval: None,
            broadcast_interval: 1.0,
            broadcast_phase: BroadcastPhase::Random,
            delay: DelayModel::Fixed(0.1),
            duration: Duration::Time(100.0),
            iteration_budget: 0,
            sample_every: None,
            seed,
            churn_events: Vec::new(),
            new_rating_events: Vec::new(),
            record_updates: false,
            record_acceptances: false,
        }
    }

    /// Global hyperparameters.
    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            rank: self.rank,
            lambda: self.lambda,
            eta: self.eta,
        }
    }

    /// Learning rate of `node`.
    pub fn eta_for(&self, node: NodeId) -> f64 {
        self.eta_overrides.get(&node).copied().unwrap_or(self.eta)
    }

    pub(crate) fn sample_period(&self, num_ratings: usize) -> u64 {
        self.sample_every
            .unwrap_or(10 * num_ratings as u64)
            .max(1)
    }

    fn check_node(&self, node: NodeId) -> Result<()> {
        let ok = match node {
            NodeId::User(i) => (i as usize) < self.num_users,
            NodeId::Item(j) => (j as usize) < self.num_items,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(alloc::format!("unknown node {node}")))
        }
    }

    /// Checks the parameters shared by all engines.
    pub fn validate_common(&self, ratings: &SparseRatings) -> Result<()> {
        self.hyperparams().validate()?;
        if ratings.num_users() != self.num_users || ratings.num_items() != self.num_items {
            return Err(Error::Config(alloc::format!(
                "ratings are {}x{} but the config says {}x{}",
                ratings.num_users(),
                ratings.num_items(),
                self.num_users,
                self.num_items
            )));
        }
        for (&node, &eta) in &self.eta_overrides {
            self.check_node(node)?;
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::Config(alloc::format!("eta of {node} must be > 0")));
            }
        }
        if self.sample_every == Some(0) {
            return Err(Error::Config("sample_every must be positive".into()));
        }
        Ok(())
    }

    /// Full validation for the event engine, including a dry run of the
    /// churn and new-rating timeline.
    pub fn validate(&self, ratings: &SparseRatings) -> Result<()> {
        self.validate_common(ratings)?;
        if self.peer_fanout == 0 {
            return Err(Error::Config("peer_fanout must be at least 1".into()));
        }
        if self.peer_fanout > self.num_items || self.peer_fanout > self.num_users {
            return Err(Error::Config(alloc::format!(
                "peer_fanout {} exceeds the opposite-side population ({} users, {} items)",
                self.peer_fanout,
                self.num_users,
                self.num_items
            )));
        }
        if !(self.broadcast_interval > 0.0 && self.broadcast_interval.is_finite()) {
            return Err(Error::Config("broadcast_interval must be > 0".into()));
        }
        if let Some(iv) = self.peer_refresh_interval {
            if !(iv > 0.0 && iv.is_finite()) {
                return Err(Error::Config("peer_refresh_interval must be > 0".into()));
            }
        }
        match self.delay {
            DelayModel::Fixed(d) if d >= 0.0 && d.is_finite() => {}
            DelayModel::Uniform { min, max } if min >= 0.0 && min <= max && max.is_finite() => {}
            _ => return Err(Error::Config("delays must satisfy 0 <= min <= max".into())),
        }
        if let Duration::Time(t) = self.duration {
            if !(t >= 0.0) {
                return Err(Error::Config("duration must be >= 0".into()));
            }
        }
        self.validate_timeline(ratings)
    }

    fn validate_timeline(&self, ratings: &SparseRatings) -> Result<()> {
        enum Step<'a> {
            Churn(&'a ChurnEvent),
            Rate(&'a NewRatingEvent),
        }
        let time = |s: &Step<'_>| match s {
            Step::Churn(c) => c.time,
            Step::Rate(r) => r.time,
        };
        let mut steps: Vec<Step<'_>> = self
            .churn_events
            .iter()
            .map(Step::Churn)
            .chain(self.new_rating_events.iter().map(Step::Rate))
            .collect();
        if let Some(bad) = steps.iter().find(|s| !(time(s) >= 0.0 && time(s).is_finite())) {
            return Err(Error::Config(alloc::format!(
                "event time {} must be finite and >= 0",
                time(bad)
            )));
        }
        // Same order as the event queue: by time, churn before ratings at ties.
        steps.sort_by(|a, b| time(a).total_cmp(&time(b)));

        let mut users_alive = alloc::vec![true; self.num_users];
        let mut items_alive = alloc::vec![true; self.num_items];
        let mut rated: alloc::collections::BTreeSet<(u32, u32)> =
            ratings.entries().iter().map(|r| (r.user, r.item)).collect();
        for step in steps {
            match step {
                Step::Churn(c) => {
                    self.check_node(c.node)?;
                    let alive = match c.node {
                        NodeId::User(i) => &mut users_alive[i as usize],
                        NodeId::Item(j) => &mut items_alive[j as usize],
                    };
                    match (c.action, *alive) {
                        (ChurnAction::Quit, false) => {
                            return Err(Error::Config(alloc::format!(
                                "{} quits at t={} but is not alive",
                                c.node,
                                c.time
                            )))
                        }
                        (ChurnAction::Join, true) => {
                            return Err(Error::Config(alloc::format!(
                                "{} joins at t={} but is already alive",
                                c.node,
                                c.time
                            )))
                        }
                        (ChurnAction::Quit, true) => *alive = false,
                        (ChurnAction::Join, false) => *alive = true,
                    }
                }
                Step::Rate(r) => {
                    self.check_node(NodeId::User(r.user))?;
                    self.check_node(NodeId::Item(r.item))?;
                    if !r.rating.is_finite() {
                        return Err(Error::Config("new rating must be finite".into()));
                    }
                    if !users_alive[r.user as usize] {
                        return Err(Error::Config(alloc::format!(
                            "user {} adds a rating at t={} while not alive",
                            r.user,
                            r.time
                        )));
                    }
                    if !rated.insert((r.user, r.item)) {
                        return Err(Error::Config(alloc::format!(
                            "pair ({}, {}) is already rated",
                            r.user,
                            r.item
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// How the trace computes its `rms` column.
#[derive(Clone, Copy, Debug)]
pub enum Evaluation<'a> {
    /// No reference; `rms` is NaN.
    None,
    /// Full-matrix RMS against a dense truth.
    Truth(&'a DenseTruth),
    /// RMSE over held-out ratings.
    Holdout {
        /// Held-out triples.
        test: &'a SparseRatings,
        /// Optional prediction clamp.
        clip: Option<(f64, f64)>,
    },
}

impl Evaluation<'_> {
    /// Error of `(U, V)` under this evaluation.
    pub fn rms(&self, u: &FactorMatrix, v: &FactorMatrix) -> Result<f64> {
        match self {
            Evaluation::None => Ok(f64::NAN),
            Evaluation::Truth(theta) => factor::rms_full(u, v, theta),
            Evaluation::Holdout { test, clip } => factor::rmse_holdout(u, v, test, *clip),
        }
    }
}

/// One row of a metrics trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceSample {
    /// Simulated time, or iteration count for the sequential engines.
    pub time: f64,
    /// Messages delivered, or updates performed.
    pub delivered: u64,
    /// Training objective on the current ratings.
    pub objective: f64,
    /// Evaluation error.
    pub rms: f64,
}

/// Samples taken during a run, in order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsTrace {
    /// The samples.
    pub samples: Vec<TraceSample>,
}

impl MetricsTrace {
    pub(crate) fn record(
        &mut self,
        time: f64,
        delivered: u64,
        u: &FactorMatrix,
        v: &FactorMatrix,
        ratings: &SparseRatings,
        lambda: f64,
        eval: &Evaluation<'_>,
    ) -> Result<()> {
        if self.samples.last().is_some_and(|s| s.delivered == delivered && s.time == time) {
            return Ok(());
        }
        self.samples.push(TraceSample {
            time,
            delivered,
            objective: factor::objective(u, v, ratings, lambda)?,
            rms: eval.rms(u, v)?,
        });
        Ok(())
    }

    /// First sample.
    pub fn first(&self) -> Option<&TraceSample> {
        self.samples.first()
    }

    /// Last sample.
    pub fn last(&self) -> Option<&TraceSample> {
        self.samples.last()
    }
}

/// One applied single-sided update with all of its inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct UpdateRecord {
    /// Profile that changed.
    pub target: NodeId,
    /// Profile it was updated against.
    pub partner: NodeId,
    /// Rating of the pair.
    pub rating: f64,
    /// Learning rate of the target node.
    pub eta: f64,
    /// Target profile before the update.
    pub before: FactorVector,
    /// Partner profile used by the update.
    pub partner_profile: FactorVector,
    /// Target profile after the update.
    pub after: FactorVector,
}

/// An accepted profile broadcast.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AcceptedMessage {
    /// Receiving node.
    pub receiver: NodeId,
    /// Emitting node.
    pub emitter: NodeId,
    /// Sequence number of the accepted message.
    pub seq: u64,
}

/// Counters of a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SimStats {
    /// Messages handed to a live receiver (or sequential iterations).
    pub delivered: u64,
    /// Messages whose receiver was dead at delivery time.
    pub dropped_dead: u64,
    /// Broadcasts discarded by the staleness rule.
    pub discarded_stale: u64,
    /// Profile updates applied.
    pub updates_applied: u64,
    /// Rating requests sent by item routers.
    pub requests_sent: u64,
}

/// Final profiles and everything observed during a run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    /// User profiles `U`, one column per user.
    pub users: FactorMatrix,
    /// Item profiles `V`, one column per item.
    pub items: FactorMatrix,
    /// Sampled metrics.
    pub trace: MetricsTrace,
    /// Counters.
    pub stats: SimStats,
    /// Applied updates, when `record_updates` is set.
    pub update_log: Vec<UpdateRecord>,
    /// Accepted broadcasts, when `record_acceptances` is set.
    pub acceptance_log: Vec<AcceptedMessage>,
}
