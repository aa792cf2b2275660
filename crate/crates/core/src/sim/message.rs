//! Messages and the per-emitter staleness rule.

use crate::factor::FactorVector;

use super::NodeId;

/// Body of a message.
#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    /// A user's current profile, sent to item routers.
    UserProfile(FactorVector),
    /// An item's current profile, sent to users.
    ItemProfile(FactorVector),
    /// An item router asks a user for their rating of the item.
    RatingRequest {
        /// Asked user.
        user: u32,
        /// Asking item.
        item: u32,
    },
    /// The answer; `None` means the user has not rated the item.
    RatingResponse {
        /// Answering user.
        user: u32,
        /// Item the answer is about.
        item: u32,
        /// The rating, if any.
        rating: Option<f64>,
    },
}

/// Message type tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MessageKind {
    /// [`Payload::UserProfile`].
    UserProfileBroadcast,
    /// [`Payload::ItemProfile`].
    ItemProfileBroadcast,
    /// [`Payload::RatingRequest`].
    RatingRequest,
    /// [`Payload::RatingResponse`].
    RatingResponse,
}

/// A message stamped with its emitter and the emitter's sequence number.
///
/// The pair `(emitter, seq)` stands in for a sender address plus timestamp:
/// every message a node emits gets the next value of that node's counter.
#[derive(Clone, Debug, PartialEq)]
pub struct Message {
    /// Sending node.
    pub emitter: NodeId,
    /// Strictly increasing per emitter.
    pub seq: u64,
    /// Body.
    pub payload: Payload,
}

impl Message {
    /// Type tag of the payload.
    pub fn kind(&self) -> MessageKind {
        match self.payload {
            Payload::UserProfile(_) => MessageKind::UserProfileBroadcast,
            Payload::ItemProfile(_) => MessageKind::ItemProfileBroadcast,
            Payload::RatingRequest { .. } => MessageKind::RatingRequest,
            Payload::RatingResponse { .. } => MessageKind::RatingResponse,
        }
    }
}

/// Outcome of [`stale_check`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Acceptance {
    /// Newer than anything accepted from this emitter.
    Accept,
    /// Not newer; drop it.
    Discard,
}

/// Accepts a message iff nothing was accepted from its emitter yet or its
/// sequence number is strictly greater than the last accepted one.
pub fn stale_check(last_accepted: Option<u64>, incoming: u64) -> Acceptance {
    match last_accepted {
        Some(last) if incoming <= last => Acceptance::Discard,
        _ => Acceptance::Accept,
    }
}
