//! Single-machine engines.
//!
//! With the staleness rule in place, the gossip protocol reduces to repeatedly
//! picking an observed rating and updating either its user profile or its item
//! profile, never both. [`run_fast_sequential`] does exactly that.
//! [`run_centralized`] is textbook SGD for comparison: both profiles of the
//! sampled pair move at once, from their old values.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::factor::{self, FactorMatrix, FactorVector, Hyperparams};
use crate::ratings::{Rating, SparseRatings};
use crate::rng::{self, Stream};
use crate::{Error, Result};

use super::{Evaluation, MetricsTrace, NodeId, RunOutput, Side, SimConfig, SimStats, UpdateRecord};

pub(crate) fn draw_initial_profiles(
    rng: &mut ChaCha8Rng,
    rank: usize,
    m: usize,
    n: usize,
) -> (FactorMatrix, FactorMatrix) {
    let u = FactorMatrix::random(rank, m, rng);
    let v = FactorMatrix::random(rank, n, rng);
    (u, v)
}

/// Initial `(U, V)` for `config`. Every engine starts from these.
pub fn initial_profiles(config: &SimConfig) -> (FactorMatrix, FactorMatrix) {
    let mut rng = rng::stream(config.seed, Stream::Profiles);
    draw_initial_profiles(&mut rng, config.rank, config.num_users, config.num_items)
}

/// One step of a sequential schedule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SampledUpdate {
    /// Profile to update.
    pub side: Side,
    /// User of the rated pair.
    pub user: u32,
    /// Item of the rated pair.
    pub item: u32,
}

impl SampledUpdate {
    /// The schedule step that reproduces a logged update.
    pub fn from_record(record: &UpdateRecord) -> Option<Self> {
        match (record.target, record.partner) {
            (NodeId::User(user), NodeId::Item(item)) => Some(SampledUpdate {
                side: Side::User,
                user,
                item,
            }),
            (NodeId::Item(item), NodeId::User(user)) => Some(SampledUpdate {
                side: Side::Item,
                user,
                item,
            }),
            _ => None,
        }
    }
}

struct Runner<'a> {
    config: &'a SimConfig,
    ratings: &'a SparseRatings,
    eval: Evaluation<'a>,
    users: FactorMatrix,
    items: FactorMatrix,
    trace: MetricsTrace,
    stats: SimStats,
    log: Vec<UpdateRecord>,
    period: u64,
}

impl<'a> Runner<'a> {
    fn new(config: &'a SimConfig, ratings: &'a SparseRatings, eval: Evaluation<'a>) -> Result<Self> {
        config.validate_common(ratings)?;
        let (users, items) = initial_profiles(config);
        let mut runner = Runner {
            config,
            ratings,
            eval,
            users,
            items,
            trace: MetricsTrace::default(),
            stats: SimStats::default(),
            log: Vec::new(),
            period: config.sample_period(ratings.len()),
        };
        runner.sample()?;
        Ok(runner)
    }

    fn sample(&mut self) -> Result<()> {
        let t = self.stats.delivered;
        self.trace.record(
            t as f64,
            t,
            &self.users,
            &self.items,
            self.ratings,
            self.config.lambda,
            &self.eval,
        )
    }

    fn single_sided(&mut self, side: Side, r: Rating) -> Result<()> {
        let lambda = self.config.lambda;
        let time = self.stats.delivered as f64;
        let (target, partner, target_id, partner_id) = match side {
            Side::User => (
                self.users.column_mut(r.user as usize),
                &self.items[r.item as usize],
                NodeId::User(r.user),
                NodeId::Item(r.item),
            ),
            Side::Item => (
                self.items.column_mut(r.item as usize),
                &self.users[r.user as usize],
                NodeId::Item(r.item),
                NodeId::User(r.user),
            ),
        };
        let eta = self.config.eta_for(target_id);
        let before = self.config.record_updates.then(|| target.clone());
        factor::step_in_place(target, partner, r.value, eta, lambda)
            .map_err(|_| Error::Diverged { node: target_id, time })?;
        if let Some(before) = before {
            self.log.push(UpdateRecord {
                target: target_id,
                partner: partner_id,
                rating: r.value,
                eta,
                before,
                partner_profile: partner.clone(),
                after: target.clone(),
            });
        }
        self.stats.updates_applied += 1;
        self.tick()
    }

    fn paired(&mut self, r: Rating) -> Result<()> {
        let (eta, lambda) = (self.config.eta, self.config.lambda);
        let time = self.stats.delivered as f64;
        let u = self.users.column_mut(r.user as usize);
        let v = self.items.column_mut(r.item as usize);
        paired_step_in_place(u, v, r.value, eta, lambda)
            .map_err(|_| Error::Diverged { node: NodeId::User(r.user), time })?;
        self.stats.updates_applied += 2;
        self.tick()
    }

    fn tick(&mut self) -> Result<()> {
        self.stats.delivered += 1;
        if self.stats.delivered.is_multiple_of(self.period) {
            self.sample()?;
        }
        Ok(())
    }

    fn finish(mut self) -> Result<RunOutput> {
        self.sample()?;
        Ok(RunOutput {
            users: self.users,
            items: self.items,
            trace: self.trace,
            stats: self.stats,
            update_log: self.log,
            acceptance_log: Vec::new(),
        })
    }
}

/// Textbook SGD step on one pair: both profiles move, each computed from the
/// old value of the other.
pub fn paired_step_in_place(
    u: &mut FactorVector,
    v: &mut FactorVector,
    x: f64,
    eta: f64,
    lambda: f64,
) -> Result<()> {
    let residual = factor::predict(u, v)? - x;
    let next = |a: f64, b: f64| a - eta * b * residual - eta * lambda * a;
    let finite = u
        .iter()
        .zip(v.iter())
        .all(|(&a, &b)| next(a, b).is_finite() && next(b, a).is_finite());
    if !finite {
        return Err(Error::NumericOverflow);
    }
    let mut nu = u.clone().into_inner();
    let mut nv = v.clone().into_inner();
    for k in 0..nu.len() {
        let (a, b) = (nu[k], nv[k]);
        nu[k] = next(a, b);
        nv[k] = next(b, a);
    }
    *u = FactorVector::new(nu);
    *v = FactorVector::new(nv);
    Ok(())
}

/// Draws `iteration_budget` observed ratings uniformly with replacement and,
/// for each, a fair coin choosing which of its two profiles to update.
pub fn run_fast_sequential(config: &SimConfig, ratings: &SparseRatings, eval: Evaluation<'_>) -> Result<RunOutput> {
    if ratings.is_empty() {
        return Err(Error::EmptyInput("ratings"));
    }
    let mut runner = Runner::new(config, ratings, eval)?;
    let mut rng = rng::stream(config.seed, Stream::Sampling);
    let entries = ratings.entries();
    for _ in 0..config.iteration_budget {
        let r = entries[rng.gen_range(0..entries.len())];
        let side = if rng.gen::<bool>() { Side::User } else { Side::Item };
        runner.single_sided(side, r)?;
    }
    runner.finish()
}

/// Applies a given schedule of single-sided updates. Every scheduled pair
/// must be observed in `ratings`.
pub fn run_sequential_schedule(
    config: &SimConfig,
    ratings: &SparseRatings,
    schedule: &[SampledUpdate],
    eval: Evaluation<'_>,
) -> Result<RunOutput> {
    let lookup: BTreeMap<(u32, u32), f64> = ratings
        .entries()
        .iter()
        .map(|r| ((r.user, r.item), r.value))
        .collect();
    let mut runner = Runner::new(config, ratings, eval)?;
    for s in schedule {
        let value = *lookup.get(&(s.user, s.item)).ok_or_else(|| {
            Error::Argument(alloc::format!("pair ({}, {}) is not rated", s.user, s.item))
        })?;
        runner.single_sided(s.side, Rating::new(s.user, s.item, value))?;
    }
    runner.finish()
}

/// Centralized paired-update SGD with `iteration_budget` sampled pairs, drawn
/// the same way as in [`run_fast_sequential`]. Uses the global `eta`.
pub fn run_centralized(config: &SimConfig, ratings: &SparseRatings, eval: Evaluation<'_>) -> Result<RunOutput> {
    if ratings.is_empty() {
        return Err(Error::EmptyInput("ratings"));
    }
    let mut runner = Runner::new(config, ratings, eval)?;
    let mut rng = rng::stream(config.seed, Stream::Sampling);
    let entries = ratings.entries();
    for _ in 0..config.iteration_budget {
        let r = entries[rng.gen_range(0..entries.len())];
        runner.paired(r)?;
    }
    runner.finish()
}

/// `(U, V)` after `iterations` paired SGD steps from the seeded initialization.
pub fn centralized_sgd_baseline(
    ratings: &SparseRatings,
    hyperparams: Hyperparams,
    iterations: u64,
    seed: u64,
) -> Result<(FactorMatrix, FactorMatrix)> {
    let mut config = SimConfig::new(ratings.num_users(), ratings.num_items(), seed);
    config.rank = hyperparams.rank;
    config.lambda = hyperparams.lambda;
    config.eta = hyperparams.eta;
    config.iteration_budget = iterations;
    config.sample_every = Some(u64::MAX);
    let out = run_centralized(&config, ratings, Evaluation::None)?;
    Ok((out.users, out.items))
}
