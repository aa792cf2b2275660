//! Per-node state machines.
//!
//! Only profile broadcasts go through the staleness rule. Rating requests and
//! responses carry no profile; they are matched against the router's pending
//! set instead, which already makes late or duplicated responses harmless.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use crate::factor::{self, FactorVector};
use crate::{Error, Result};

use super::message::{stale_check, Acceptance, Message, Payload};
use super::NodeId;

/// A user node: one rating row, one profile.
#[derive(Clone, Debug, PartialEq)]
pub struct UserNodeState {
    /// Index of this user.
    pub user_id: u32,
    /// Profile `u_i`.
    pub profile: FactorVector,
    /// The user's own ratings, item → value.
    pub ratings: BTreeMap<u32, f64>,
    /// Item routers this user broadcasts to.
    pub peers: Vec<u32>,
    /// Learning rate.
    pub eta: f64,
    /// Last accepted broadcast sequence number per emitter.
    pub last_accepted: BTreeMap<NodeId, u64>,
    /// Whether the node currently takes part.
    pub alive: bool,
}

/// Result of delivering an item broadcast to a user.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UserDelivery {
    /// Stale; nothing changed.
    Discarded,
    /// Accepted, but the user has not rated this item.
    Accepted,
    /// Accepted and the profile was updated.
    Updated,
}

/// Result of delivering a user broadcast to an item router.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ItemDelivery {
    /// Stale; nothing changed.
    Discarded,
    /// Accepted; the user is known not to have rated this item, or a request
    /// to them is already pending.
    Accepted,
    /// Accepted and the profile was updated.
    Updated,
    /// Accepted; the rating is unknown, so a request must be sent to `user`.
    Requested {
        /// User to ask.
        user: u32,
    },
}

fn broadcast_profile(msg: &Message, want_user: bool) -> Result<&FactorVector> {
    match (&msg.payload, want_user) {
        (Payload::UserProfile(p), true) | (Payload::ItemProfile(p), false) => Ok(p),
        _ => Err(Error::Argument(alloc::format!(
            "unexpected {:?} from {}",
            msg.kind(),
            msg.emitter
        ))),
    }
}

fn accept(last_accepted: &mut BTreeMap<NodeId, u64>, msg: &Message) -> bool {
    match stale_check(last_accepted.get(&msg.emitter).copied(), msg.seq) {
        Acceptance::Accept => {
            last_accepted.insert(msg.emitter, msg.seq);
            true
        }
        Acceptance::Discard => false,
    }
}

impl UserNodeState {
    /// Applies an item broadcast: `u_i` moves toward `v_j` iff the user rated
    /// item `j` and the message is not stale.
    pub fn deliver(&mut self, msg: &Message, lambda: f64) -> Result<UserDelivery> {
        debug_assert!(self.alive, "delivery to a dead user");
        let v = broadcast_profile(msg, false)?;
        let NodeId::Item(item) = msg.emitter else {
            return Err(Error::Argument("item broadcast from a user node".into()));
        };
        if !accept(&mut self.last_accepted, msg) {
            return Ok(UserDelivery::Discarded);
        }
        match self.ratings.get(&item) {
            Some(&x) => {
                factor::step_in_place(&mut self.profile, v, x, self.eta, lambda)?;
                Ok(UserDelivery::Updated)
            }
            None => Ok(UserDelivery::Accepted),
        }
    }

    /// Answers a router's rating request.
    pub fn handle_rating_request(&self, item: u32) -> Payload {
        Payload::RatingResponse {
            user: self.user_id,
            item,
            rating: self.ratings.get(&item).copied(),
        }
    }
}

/// An item router hosting one item profile.
#[derive(Clone, Debug, PartialEq)]
pub struct ItemNodeState {
    /// Index of the hosted item.
    pub item_id: u32,
    /// Profile `v_j`.
    pub profile: FactorVector,
    /// Ratings learned from users; `None` records that the user has not rated
    /// this item.
    pub rating_cache: BTreeMap<u32, Option<f64>>,
    /// Users asked for their rating who have not answered yet.
    pub pending_requests: BTreeSet<u32>,
    /// Users this router broadcasts to.
    pub peers: Vec<u32>,
    /// Learning rate.
    pub eta: f64,
    /// Last accepted broadcast sequence number per emitter.
    pub last_accepted: BTreeMap<NodeId, u64>,
    /// Whether the node currently takes part.
    pub alive: bool,
}

impl ItemNodeState {
    /// Applies a user broadcast. Known ratings update `v_j`; an unknown rating
    /// yields a request and the broadcast itself is not kept.
    pub fn deliver(&mut self, msg: &Message, lambda: f64) -> Result<ItemDelivery> {
        debug_assert!(self.alive, "delivery to a dead item router");
        let u = broadcast_profile(msg, true)?;
        let NodeId::User(user) = msg.emitter else {
            return Err(Error::Argument("user broadcast from an item node".into()));
        };
        if !accept(&mut self.last_accepted, msg) {
            return Ok(ItemDelivery::Discarded);
        }
        match self.rating_cache.get(&user) {
            Some(Some(x)) => {
                factor::step_in_place(&mut self.profile, u, *x, self.eta, lambda)?;
                Ok(ItemDelivery::Updated)
            }
            Some(None) => Ok(ItemDelivery::Accepted),
            None if self.pending_requests.contains(&user) => Ok(ItemDelivery::Accepted),
            None => {
                self.pending_requests.insert(user);
                Ok(ItemDelivery::Requested { user })
            }
        }
    }

    /// Stores a rating response. Responses from users without a pending
    /// request are ignored; returns whether the cache changed.
    pub fn handle_rating_response(&mut self, user: u32, rating: Option<f64>) -> bool {
        if !self.pending_requests.remove(&user) {
            return false;
        }
        self.rating_cache.insert(user, rating);
        true
    }

    /// Forgets what is known about `user`'s rating of this item, so the next
    /// broadcast from them triggers a fresh request.
    pub fn invalidate(&mut self, user: u32) {
        self.rating_cache.remove(&user);
        self.pending_requests.remove(&user);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn user(ratings: &[(u32, f64)]) -> UserNodeState {
        UserNodeState {
            user_id: 0,
            profile: FactorVector::new(vec![0.5, -0.25]),
            ratings: ratings.iter().copied().collect(),
            peers: vec![],
            eta: 0.1,
            last_accepted: BTreeMap::new(),
            alive: true,
        }
    }

    fn item() -> ItemNodeState {
        ItemNodeState {
            item_id: 2,
            profile: FactorVector::new(vec![0.3, 0.7]),
            rating_cache: BTreeMap::new(),
            pending_requests: BTreeSet::new(),
            peers: vec![],
            eta: 0.05,
            last_accepted: BTreeMap::new(),
            alive: true,
        }
    }

    fn item_msg(seq: u64) -> Message {
        Message {
            emitter: NodeId::Item(2),
            seq,
            payload: Payload::ItemProfile(FactorVector::new(vec![1.0, 2.0])),
        }
    }

    fn user_msg(user: u32, seq: u64) -> Message {
        Message {
            emitter: NodeId::User(user),
            seq,
            payload: Payload::UserProfile(FactorVector::new(vec![0.4, -1.0])),
        }
    }

    #[test]
    fn user_rated_item_updates_like_user_update() {
        let mut node = user(&[(2, 4.0)]);
        let expected = factor::user_update(
            &node.profile,
            &FactorVector::new(vec![1.0, 2.0]),
            4.0,
            0.1,
            0.05,
        )
        .unwrap();
        assert_eq!(node.deliver(&item_msg(3), 0.05).unwrap(), UserDelivery::Updated);
        assert_eq!(node.profile, expected);
        assert_eq!(node.last_accepted[&NodeId::Item(2)], 3);
    }

    #[test]
    fn unrated_item_only_advances_bookkeeping() {
        let mut node = user(&[(7, 4.0)]);
        let before = node.profile.clone();
        assert_eq!(node.deliver(&item_msg(1), 0.05).unwrap(), UserDelivery::Accepted);
        assert_eq!(node.profile, before);
        assert_eq!(node.last_accepted[&NodeId::Item(2)], 1);
    }

    #[test]
    fn stale_broadcast_changes_nothing() {
        let mut node = user(&[(2, 4.0)]);
        node.deliver(&item_msg(5), 0.0).unwrap();
        let snapshot = node.clone();
        assert_eq!(node.deliver(&item_msg(3), 0.0).unwrap(), UserDelivery::Discarded);
        assert_eq!(node.deliver(&item_msg(5), 0.0).unwrap(), UserDelivery::Discarded);
        assert_eq!(node, snapshot);
    }

    #[test]
    fn wrong_payload_is_an_error() {
        let mut node = user(&[]);
        assert!(node.deliver(&user_msg(1, 0), 0.0).is_err());
        let mut it = item();
        assert!(it.deliver(&item_msg(0), 0.0).is_err());
    }

    #[test]
    fn cached_rating_updates_like_item_update() {
        let mut it = item();
        it.rating_cache.insert(4, Some(3.0));
        let expected = factor::item_update(
            &it.profile,
            &FactorVector::new(vec![0.4, -1.0]),
            3.0,
            0.05,
            0.1,
        )
        .unwrap();
        assert_eq!(it.deliver(&user_msg(4, 0), 0.1).unwrap(), ItemDelivery::Updated);
        assert_eq!(it.profile, expected);
    }

    #[test]
    fn unknown_rating_emits_one_request() {
        let mut it = item();
        let before = it.profile.clone();
        assert_eq!(
            it.deliver(&user_msg(4, 0), 0.1).unwrap(),
            ItemDelivery::Requested { user: 4 }
        );
        assert_eq!(it.profile, before);
        assert!(it.pending_requests.contains(&4));
        // A second broadcast while the request is in flight asks nothing new.
        assert_eq!(it.deliver(&user_msg(4, 1), 0.1).unwrap(), ItemDelivery::Accepted);
    }

    #[test]
    fn known_absent_rating_is_silent() {
        let mut it = item();
        it.rating_cache.insert(4, None);
        let before = it.clone();
        assert_eq!(it.deliver(&user_msg(4, 0), 0.1).unwrap(), ItemDelivery::Accepted);
        assert_eq!(it.profile, before.profile);
        assert!(it.pending_requests.is_empty());
    }

    #[test]
    fn request_response_round_trip() {
        let u = user(&[(2, 5.0)]);
        let mut it = item();
        it.deliver(&user_msg(0, 0), 0.0).unwrap();
        let Payload::RatingResponse { user, rating, .. } = u.handle_rating_request(2) else {
            panic!("expected a response");
        };
        assert_eq!(rating, Some(5.0));
        assert!(it.handle_rating_response(user, rating));
        assert_eq!(it.rating_cache[&0], Some(5.0));
        assert!(it.pending_requests.is_empty());

        // duplicate response
        assert!(!it.handle_rating_response(user, Some(1.0)));
        assert_eq!(it.rating_cache[&0], Some(5.0));
    }

    #[test]
    fn unrated_response_records_known_absent() {
        let u = user(&[]);
        let mut it = item();
        it.deliver(&user_msg(0, 0), 0.0).unwrap();
        let Payload::RatingResponse { rating, .. } = u.handle_rating_request(2) else {
            panic!("expected a response");
        };
        assert!(it.handle_rating_response(0, rating));
        assert_eq!(it.rating_cache[&0], None);
    }

    #[test]
    fn invalidate_clears_cache_and_pending() {
        let mut it = item();
        it.rating_cache.insert(1, None);
        it.pending_requests.insert(2);
        it.invalidate(1);
        it.invalidate(2);
        assert!(it.rating_cache.is_empty() && it.pending_requests.is_empty());
        // a late answer to the invalidated request is ignored
        assert!(!it.handle_rating_response(2, None));
    }
}
