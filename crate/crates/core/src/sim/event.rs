//! The discrete-event gossip engine.
//!
//! Every node broadcasts its current profile to each peer once per
//! `broadcast_interval`. Messages arrive after a delay drawn from the delay
//! model; receivers apply the staleness rule and then a single-sided update
//! to their own profile. Events are processed in `(time, insertion)` order on
//! one thread, so a run is a pure function of its config and ratings.

use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::factor::{FactorMatrix, FactorVector};
use crate::ratings::{Rating, SparseRatings};
use crate::rng::{self, Stream};
use crate::{Error, Result};

use super::message::{Message, Payload};
use super::node::{ItemDelivery, ItemNodeState, UserDelivery, UserNodeState};
use super::queue::EventQueue;
use super::sequential::draw_initial_profiles;
use super::{
    AcceptedMessage, BroadcastPhase, ChurnAction, ChurnEvent, DelayModel, Duration, Evaluation,
    MetricsTrace, NewRatingEvent, NodeId, RunOutput, SimConfig, SimStats, UpdateRecord,
};

#[derive(Clone, Debug)]
enum Event {
    Deliver { to: NodeId, msg: Message },
    Broadcast { node: NodeId, incarnation: u32 },
    Churn(ChurnEvent),
    NewRating(NewRatingEvent),
}

/// What one broadcast put on the wire.
#[derive(Clone, Debug, PartialEq)]
pub struct BroadcastOutcome {
    /// Sequence number stamped on every copy.
    pub seq: u64,
    /// `(receiver, delivery time)` per copy, in peer-list order.
    pub deliveries: Vec<(NodeId, f64)>,
    /// When this node broadcasts next.
    pub next_broadcast: f64,
}

/// A message waiting in the queue.
#[derive(Clone, Debug, PartialEq)]
pub struct InFlight<'a> {
    /// Delivery time.
    pub time: f64,
    /// Receiver.
    pub to: NodeId,
    /// The message.
    pub msg: &'a Message,
}

/// Complete state of a running simulation.
pub struct SimState {
    config: SimConfig,
    ratings: SparseRatings,
    users: Vec<UserNodeState>,
    items: Vec<ItemNodeState>,
    next_seq: Vec<u64>,
    incarnation: Vec<u32>,
    next_refresh: Vec<f64>,
    queue: EventQueue<Event>,
    profile_rng: ChaCha8Rng,
    peer_rng: ChaCha8Rng,
    delay_rng: ChaCha8Rng,
    phase_rng: ChaCha8Rng,
    now: f64,
    stats: SimStats,
    update_log: Vec<UpdateRecord>,
    acceptance_log: Vec<AcceptedMessage>,
    trace: MetricsTrace,
    sample_period: u64,
}

fn draw_peers(rng: &mut ChaCha8Rng, population: usize, fanout: usize) -> Vec<u32> {
    rand::seq::index::sample(rng, population, fanout)
        .into_iter()
        .map(|p| p as u32)
        .collect()
}

impl SimState {
    /// Creates every node alive with seeded profiles and peer lists and
    /// schedules the first broadcasts, churn and new-rating events.
    pub fn new(config: SimConfig, ratings: &SparseRatings) -> Result<Self> {
        config.validate(ratings)?;
        let (m, n) = (config.num_users, config.num_items);
        let seed = config.seed;
        // Rejoins keep drawing from the stream the initial profiles came from.
        let mut profile_rng = rng::stream(seed, Stream::Profiles);
        let (u0, v0) = draw_initial_profiles(&mut profile_rng, config.rank, m, n);
        let mut peer_rng = rng::stream(seed, Stream::Peers);

        let rows = ratings.user_rows();
        let users: Vec<UserNodeState> = u0
            .columns()
            .iter()
            .zip(rows)
            .enumerate()
            .map(|(i, (profile, row))| UserNodeState {
                user_id: i as u32,
                profile: profile.clone(),
                ratings: row.into_iter().collect(),
                peers: draw_peers(&mut peer_rng, n, config.peer_fanout),
                eta: config.eta_for(NodeId::User(i as u32)),
                last_accepted: Default::default(),
                alive: true,
            })
            .collect();
        let items: Vec<ItemNodeState> = v0
            .columns()
            .iter()
            .enumerate()
            .map(|(j, profile)| ItemNodeState {
                item_id: j as u32,
                profile: profile.clone(),
                rating_cache: Default::default(),
                pending_requests: Default::default(),
                peers: draw_peers(&mut peer_rng, m, config.peer_fanout),
                eta: config.eta_for(NodeId::Item(j as u32)),
                last_accepted: Default::default(),
                alive: true,
            })
            .collect();

        let first_refresh = config.peer_refresh_interval.unwrap_or(f64::INFINITY);
        let mut state = SimState {
            sample_period: config.sample_period(ratings.len()),
            ratings: ratings.clone(),
            users,
            items,
            next_seq: alloc::vec![0; m + n],
            incarnation: alloc::vec![0; m + n],
            next_refresh: alloc::vec![first_refresh; m + n],
            queue: EventQueue::new(),
            profile_rng,
            peer_rng,
            delay_rng: rng::stream(seed, Stream::Delays),
            phase_rng: rng::stream(seed, Stream::Phases),
            now: 0.0,
            stats: SimStats::default(),
            update_log: Vec::new(),
            acceptance_log: Vec::new(),
            trace: MetricsTrace::default(),
            config,
        };

        let total = (m + n) as f64;
        for k in 0..m + n {
            let node = state.node_at(k);
            let phase = match state.config.broadcast_phase {
                BroadcastPhase::Random => state.random_phase(),
                BroadcastPhase::Staggered => k as f64 * state.config.broadcast_interval / total,
            };
            state.queue.push(phase, Event::Broadcast { node, incarnation: 0 });
        }
        for c in state.config.churn_events.clone() {
            state.queue.push(c.time, Event::Churn(c));
        }
        for r in state.config.new_rating_events.clone() {
            state.queue.push(r.time, Event::NewRating(r));
        }
        Ok(state)
    }

    fn random_phase(&mut self) -> f64 {
        self.phase_rng.gen::<f64>() * self.config.broadcast_interval
    }

    fn index(&self, node: NodeId) -> usize {
        match node {
            NodeId::User(i) => i as usize,
            NodeId::Item(j) => self.config.num_users + j as usize,
        }
    }

    fn node_at(&self, k: usize) -> NodeId {
        if k < self.config.num_users {
            NodeId::User(k as u32)
        } else {
            NodeId::Item((k - self.config.num_users) as u32)
        }
    }

    fn next_seq(&mut self, node: NodeId) -> u64 {
        let k = self.index(node);
        let seq = self.next_seq[k];
        self.next_seq[k] += 1;
        seq
    }

    fn draw_delay(&mut self) -> f64 {
        match self.config.delay {
            DelayModel::Fixed(d) => d,
            DelayModel::Uniform { min, max } => self.delay_rng.gen_range(min..=max),
        }
    }

    fn send(&mut self, to: NodeId, msg: Message) -> f64 {
        let at = self.now + self.draw_delay();
        self.queue.push(at, Event::Deliver { to, msg });
        at
    }

    /// The run's configuration.
    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    /// Current simulated time.
    pub fn now(&self) -> f64 {
        self.now
    }

    /// User node states.
    pub fn users(&self) -> &[UserNodeState] {
        &self.users
    }

    /// Item router states.
    pub fn items(&self) -> &[ItemNodeState] {
        &self.items
    }

    /// All ratings known to the system, including ones added during the run.
    pub fn ratings(&self) -> &SparseRatings {
        &self.ratings
    }

    /// Counters so far.
    pub fn stats(&self) -> SimStats {
        self.stats
    }

    /// Whether `node` is currently alive.
    pub fn is_alive(&self, node: NodeId) -> bool {
        match node {
            NodeId::User(i) => self.users[i as usize].alive,
            NodeId::Item(j) => self.items[j as usize].alive,
        }
    }

    /// Messages in the queue, in delivery order.
    pub fn in_flight(&self) -> Vec<InFlight<'_>> {
        self.queue
            .sorted()
            .into_iter()
            .filter_map(|(time, e)| match e {
                Event::Deliver { to, msg } => Some(InFlight { time, to: *to, msg }),
                _ => None,
            })
            .collect()
    }

    /// Current `(U, V)`, including the last profiles of dead nodes.
    pub fn profiles(&self) -> (FactorMatrix, FactorMatrix) {
        let rank = self.config.rank;
        let u = self.users.iter().map(|s| s.profile.clone()).collect();
        let v = self.items.iter().map(|s| s.profile.clone()).collect();
        (
            FactorMatrix::from_columns(rank, u).expect("profiles keep their rank"),
            FactorMatrix::from_columns(rank, v).expect("profiles keep their rank"),
        )
    }

    /// Sends the current profile of `node` to each peer with the node's next
    /// sequence number and schedules its next broadcast. Peer lists due for a
    /// refresh are redrawn first.
    pub fn schedule_broadcast(&mut self, node: NodeId) -> Result<BroadcastOutcome> {
        if !self.is_alive(node) {
            return Err(Error::Argument(alloc::format!("{node} is not alive")));
        }
        let k = self.index(node);
        if self.now >= self.next_refresh[k] {
            let fanout = self.config.peer_fanout;
            match node {
                NodeId::User(i) => {
                    self.users[i as usize].peers = draw_peers(&mut self.peer_rng, self.config.num_items, fanout)
                }
                NodeId::Item(j) => {
                    self.items[j as usize].peers = draw_peers(&mut self.peer_rng, self.config.num_users, fanout)
                }
            }
            self.next_refresh[k] = self.now + self.config.peer_refresh_interval.unwrap_or(f64::INFINITY);
        }

        let seq = self.next_seq(node);
        let (payload, peers): (Payload, Vec<NodeId>) = match node {
            NodeId::User(i) => {
                let s = &self.users[i as usize];
                (
                    Payload::UserProfile(s.profile.clone()),
                    s.peers.iter().map(|&p| NodeId::Item(p)).collect(),
                )
            }
            NodeId::Item(j) => {
                let s = &self.items[j as usize];
                (
                    Payload::ItemProfile(s.profile.clone()),
                    s.peers.iter().map(|&p| NodeId::User(p)).collect(),
                )
            }
        };
        let mut deliveries = Vec::with_capacity(peers.len());
        for to in peers {
            let msg = Message {
                emitter: node,
                seq,
                payload: payload.clone(),
            };
            deliveries.push((to, self.send(to, msg)));
        }
        let next_broadcast = self.now + self.config.broadcast_interval;
        let incarnation = self.incarnation[k];
        self.queue
            .push(next_broadcast, Event::Broadcast { node, incarnation });
        Ok(BroadcastOutcome {
            seq,
            deliveries,
            next_broadcast,
        })
    }

    /// Applies a join or quit at the current time.
    ///
    /// A quitting node keeps its state but receives nothing until it joins
    /// again. A joining node gets a fresh profile, peer list and empty
    /// rating caches; a user keeps their rating row, and every node keeps its
    /// sequence counter and its `last_accepted` map, so a message delayed
    /// across the outage is still recognized as stale.
    pub fn apply_churn(&mut self, node: NodeId, action: ChurnAction) -> Result<()> {
        let alive = self.is_alive(node);
        let k = self.index(node);
        match (action, alive) {
            (ChurnAction::Quit, true) => {
                match node {
                    NodeId::User(i) => self.users[i as usize].alive = false,
                    NodeId::Item(j) => self.items[j as usize].alive = false,
                }
                Ok(())
            }
            (ChurnAction::Join, false) => {
                let rank = self.config.rank;
                let profile = FactorVector::random(rank, &mut self.profile_rng);
                let fanout = self.config.peer_fanout;
                match node {
                    NodeId::User(i) => {
                        let peers = draw_peers(&mut self.peer_rng, self.config.num_items, fanout);
                        let s = &mut self.users[i as usize];
                        s.profile = profile;
                        s.peers = peers;
                        s.alive = true;
                    }
                    NodeId::Item(j) => {
                        let peers = draw_peers(&mut self.peer_rng, self.config.num_users, fanout);
                        let s = &mut self.items[j as usize];
                        s.profile = profile;
                        s.peers = peers;
                        s.rating_cache.clear();
                        s.pending_requests.clear();
                        s.alive = true;
                    }
                }
                self.incarnation[k] += 1;
                self.next_refresh[k] = self.now + self.config.peer_refresh_interval.unwrap_or(f64::INFINITY);
                let phase = match self.config.broadcast_phase {
                    BroadcastPhase::Random => self.random_phase(),
                    BroadcastPhase::Staggered => 0.0,
                };
                let incarnation = self.incarnation[k];
                self.queue
                    .push(self.now + phase, Event::Broadcast { node, incarnation });
                Ok(())
            }
            (ChurnAction::Quit, false) => Err(Error::Config(alloc::format!("{node} quits but is not alive"))),
            (ChurnAction::Join, true) => Err(Error::Config(alloc::format!("{node} joins but is already alive"))),
        }
    }

    /// Adds a rating for a previously unrated pair. The item router forgets
    /// whatever it knew about this user, so its next broadcast from them
    /// triggers a fresh request.
    pub fn add_rating(&mut self, user: u32, item: u32, rating: f64) -> Result<()> {
        let u = self
            .users
            .get(user as usize)
            .ok_or_else(|| Error::Config(alloc::format!("unknown user {user}")))?;
        if !u.alive {
            return Err(Error::Config(alloc::format!("user {user} is not alive")));
        }
        if u.ratings.contains_key(&item) {
            return Err(Error::Config(alloc::format!("pair ({user}, {item}) is already rated")));
        }
        self.ratings.push(Rating::new(user, item, rating))?;
        self.users[user as usize].ratings.insert(item, rating);
        let it = &mut self.items[item as usize];
        if it.alive {
            it.invalidate(user);
        }
        Ok(())
    }

    fn deliver(&mut self, to: NodeId, msg: Message) -> Result<()> {
        let lambda = self.config.lambda;
        let record = self.config.record_updates;
        match (to, &msg.payload) {
            (NodeId::User(i), Payload::ItemProfile(v)) => {
                let node = &mut self.users[i as usize];
                let before = record.then(|| node.profile.clone());
                let outcome = node
                    .deliver(&msg, lambda)
                    .map_err(|_| Error::Diverged { node: to, time: self.now })?;
                if outcome != UserDelivery::Discarded {
                    self.accepted(to, &msg);
                }
                if outcome == UserDelivery::Discarded {
                    self.stats.discarded_stale += 1;
                }
                if outcome == UserDelivery::Updated {
                    self.stats.updates_applied += 1;
                    if let Some(before) = before {
                        let NodeId::Item(j) = msg.emitter else { unreachable!() };
                        let node = &self.users[i as usize];
                        self.update_log.push(UpdateRecord {
                            target: to,
                            partner: msg.emitter,
                            rating: node.ratings[&j],
                            eta: node.eta,
                            before,
                            partner_profile: v.clone(),
                            after: node.profile.clone(),
                        });
                    }
                }
            }
            (NodeId::Item(j), Payload::UserProfile(u)) => {
                let node = &mut self.items[j as usize];
                let before = record.then(|| node.profile.clone());
                let outcome = node
                    .deliver(&msg, lambda)
                    .map_err(|_| Error::Diverged { node: to, time: self.now })?;
                match outcome {
                    ItemDelivery::Discarded => self.stats.discarded_stale += 1,
                    ItemDelivery::Accepted => self.accepted(to, &msg),
                    ItemDelivery::Updated => {
                        self.accepted(to, &msg);
                        self.stats.updates_applied += 1;
                        if let Some(before) = before {
                            let NodeId::User(l) = msg.emitter else { unreachable!() };
                            let node = &self.items[j as usize];
                            self.update_log.push(UpdateRecord {
                                target: to,
                                partner: msg.emitter,
                                rating: node.rating_cache[&l].expect("updated from a known rating"),
                                eta: node.eta,
                                before,
                                partner_profile: u.clone(),
                                after: node.profile.clone(),
                            });
                        }
                    }
                    ItemDelivery::Requested { user } => {
                        self.accepted(to, &msg);
                        self.stats.requests_sent += 1;
                        let seq = self.next_seq(to);
                        let req = Message {
                            emitter: to,
                            seq,
                            payload: Payload::RatingRequest { user, item: j },
                        };
                        self.send(NodeId::User(user), req);
                    }
                }
            }
            (NodeId::User(i), Payload::RatingRequest { user, item }) if *user == i => {
                let response = self.users[i as usize].handle_rating_request(*item);
                let seq = self.next_seq(to);
                let reply = Message {
                    emitter: to,
                    seq,
                    payload: response,
                };
                self.send(NodeId::Item(*item), reply);
            }
            (NodeId::Item(j), Payload::RatingResponse { user, item, rating }) if *item == j => {
                self.items[j as usize].handle_rating_response(*user, *rating);
            }
            _ => {
                return Err(Error::Argument(alloc::format!(
                    "{:?} from {} cannot be delivered to {to}",
                    msg.kind(),
                    msg.emitter
                )))
            }
        }
        Ok(())
    }

    fn accepted(&mut self, receiver: NodeId, msg: &Message) {
        if self.config.record_acceptances {
            self.acceptance_log.push(AcceptedMessage {
                receiver,
                emitter: msg.emitter,
                seq: msg.seq,
            });
        }
    }

    fn sample(&mut self, time: f64, eval: &Evaluation<'_>) -> Result<()> {
        let (u, v) = self.profiles();
        let delivered = self.stats.delivered;
        self.trace
            .record(time, delivered, &u, &v, &self.ratings, self.config.lambda, eval)
    }

    /// Processes the next event. Returns `false` when the queue is empty.
    pub fn step(&mut self, eval: &Evaluation<'_>) -> Result<bool> {
        let Some((time, event)) = self.queue.pop() else {
            return Ok(false);
        };
        self.now = time;
        match event {
            Event::Deliver { to, msg } => {
                if !self.is_alive(to) {
                    self.stats.dropped_dead += 1;
                    return Ok(true);
                }
                self.stats.delivered += 1;
                self.deliver(to, msg)?;
                if self.stats.delivered.is_multiple_of(self.sample_period) {
                    self.sample(time, eval)?;
                }
            }
            Event::Broadcast { node, incarnation } => {
                if self.is_alive(node) && self.incarnation[self.index(node)] == incarnation {
                    self.schedule_broadcast(node)?;
                }
            }
            Event::Churn(c) => self.apply_churn(c.node, c.action)?,
            Event::NewRating(r) => self.add_rating(r.user, r.item, r.rating)?,
        }
        Ok(true)
    }

    /// Runs until the configured duration is exhausted, sampling the trace at
    /// the start, every `sample_every` deliveries, and at the end.
    pub fn run(&mut self, eval: &Evaluation<'_>) -> Result<()> {
        self.sample(self.now, eval)?;
        loop {
            let done = match self.config.duration {
                Duration::Time(end) => self.queue.peek_time().is_none_or(|t| t >= end),
                Duration::Deliveries(k) => self.stats.delivered >= k || self.queue.len() == 0,
            };
            if done || !self.step(eval)? {
                break;
            }
        }
        if let Duration::Time(end) = self.config.duration {
            self.now = self.now.max(end);
        }
        self.sample(self.now, eval)
    }

    /// Final profiles, trace and logs.
    pub fn into_output(self) -> RunOutput {
        let (users, items) = self.profiles();
        RunOutput {
            users,
            items,
            trace: self.trace,
            stats: self.stats,
            update_log: self.update_log,
            acceptance_log: self.acceptance_log,
        }
    }
}

/// Builds the network for `config` and runs it to completion.
pub fn run_event_sim(config: &SimConfig, ratings: &SparseRatings, eval: Evaluation<'_>) -> Result<RunOutput> {
    let mut state = SimState::new(config.clone(), ratings)?;
    state.run(&eval)?;
    Ok(state.into_output())
}
