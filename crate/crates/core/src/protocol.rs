//! Messages, mailboxes and issue tags of the inter-institution fabric.
//!
//! Messages sent during cycle `c` are delivered at the start of cycle `c+1`.

use std::fmt;

use crate::registry::{FormatId, MediaType};
use crate::world::Institution;

/// Run-scoped issue identifier: `(issuer << 32) | counter`.
pub type Tag = u64;

pub fn make_tag(sender: usize, counter: u32) -> Tag {
    ((sender as u64) << 32) | counter as u64
}

pub fn tag_issuer(tag: Tag) -> usize {
    (tag >> 32) as usize
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MigrationSuggestion {
    pub src: FormatId,
    pub dst: FormatId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MessageKind {
    Failure,
    Request,
    Propose,
    Inform,
}

impl MessageKind {
    pub fn name(self) -> &'static str {
        match self {
            MessageKind::Failure => "failure",
            MessageKind::Request => "request",
            MessageKind::Propose => "propose",
            MessageKind::Inform => "inform",
        }
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Payload {
    Format(FormatId),
    Suggestion(MigrationSuggestion),
    Empty,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Message {
    pub kind: MessageKind,
    /// Sending institution (for failures: the pastor's media-type index).
    pub sender: usize,
    pub tag: Tag,
    pub media_type: MediaType,
    pub payload: Payload,
}

/// A failure raised by a pastor: `alert` marks the single-renderer warning.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Failure {
    pub media_type: MediaType,
    pub format: FormatId,
    pub alert: bool,
}

impl Failure {
    pub fn message(&self) -> Message {
        Message {
            kind: MessageKind::Failure,
            sender: self.media_type.index(),
            tag: 0,
            media_type: self.media_type,
            payload: Payload::Format(self.format),
        }
    }
}

/// An open request awaiting suggestions from peers.
#[derive(Clone, Debug, PartialEq)]
pub struct Issue {
    pub tag: Tag,
    pub media_type: MediaType,
    pub format: FormatId,
    pub opened: u64,
    /// Non-empty proposals received so far, in arrival order.
    pub proposals: Vec<(usize, MigrationSuggestion)>,
    pub empty_replies: usize,
}

/// Message counters; every delivered message is either consumed or dropped.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MailCounters {
    pub sent: u64,
    pub delivered: u64,
    pub consumed: u64,
    pub dropped: u64,
}

#[derive(Clone, Debug, Default)]
pub struct PostOffice {
    pending: Vec<(usize, Message)>,
    inboxes: Vec<Vec<Message>>,
    counters: MailCounters,
    trace: Option<Vec<String>>,
}

impl PostOffice {
    pub fn new(institutions: usize) -> Self {
        Self {
            pending: Vec::new(),
            inboxes: vec![Vec::new(); institutions],
            counters: MailCounters::default(),
            trace: None,
        }
    }

    /// Records one line per sent message: `cycle,kind,sender,receiver,tag,payload`.
    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn take_trace(&mut self) -> Vec<String> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn counters(&self) -> MailCounters {
        self.counters
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    pub fn inbox(&self, inst: usize) -> &[Message] {
        &self.inboxes[inst]
    }

    pub fn send(&mut self, cycle: u64, to: usize, msg: Message) {
        self.counters.sent += 1;
        if let Some(trace) = &mut self.trace {
            trace.push(trace_line(cycle, to, &msg));
        }
        self.pending.push((to, msg));
    }

    /// Moves every message sent last cycle into its recipient's mailbox.
    pub fn deliver(&mut self) {
        self.counters.delivered += self.pending.len() as u64;
        for (to, msg) in self.pending.drain(..) {
            self.inboxes[to].push(msg);
        }
    }

    pub fn take_inbox(&mut self, inst: usize) -> Vec<Message> {
        std::mem::take(&mut self.inboxes[inst])
    }

    pub fn mark_consumed(&mut self, n: u64) {
        self.counters.consumed += n;
    }

    pub fn mark_dropped(&mut self, n: u64) {
        self.counters.dropped += n;
    }

    /// True when every delivered message has been consumed or dropped.
    pub fn reconciled(&self) -> bool {
        self.counters.delivered == self.counters.consumed + self.counters.dropped
            && self.inboxes.iter().all(Vec::is_empty)
    }
}

fn trace_line(cycle: u64, to: usize, msg: &Message) -> String {
    let payload = match msg.payload {
        Payload::Format(f) => format!("{}:{f}", msg.media_type),
        Payload::Suggestion(s) => format!("{}:{}>{}", msg.media_type, s.src, s.dst),
        Payload::Empty => format!("{}:empty", msg.media_type),
    };
    format!("{cycle},{},{},{to},{},{payload}", msg.kind, msg.sender, msg.tag)
}

/// Registers a new issue for (`t`, `format`) and sends a request to every
/// other institution in ascending id order.
pub fn broadcast_request(
    post: &mut PostOffice,
    inst: &mut Institution,
    institutions: usize,
    t: MediaType,
    format: FormatId,
    cycle: u64,
) -> Tag {
    let tag = make_tag(inst.id, inst.next_tag);
    inst.next_tag += 1;
    inst.open_issues.insert(
        tag,
        Issue {
            tag,
            media_type: t,
            format,
            opened: cycle,
            proposals: Vec::new(),
            empty_replies: 0,
        },
    );
    let msg = Message {
        kind: MessageKind::Request,
        sender: inst.id,
        tag,
        media_type: t,
        payload: Payload::Format(format),
    };
    for to in (0..institutions).filter(|&j| j != inst.id) {
        post.send(cycle, to, msg);
    }
    tag
}

pub fn send_propose(
    post: &mut PostOffice,
    cycle: u64,
    from: usize,
    to: usize,
    tag: Tag,
    t: MediaType,
    suggestion: Option<MigrationSuggestion>,
) {
    post.send(
        cycle,
        to,
        Message {
            kind: MessageKind::Propose,
            sender: from,
            tag,
            media_type: t,
            payload: suggestion.map_or(Payload::Empty, Payload::Suggestion),
        },
    );
}

pub fn send_inform_all(
    post: &mut PostOffice,
    cycle: u64,
    from: usize,
    institutions: usize,
    t: MediaType,
    suggestion: MigrationSuggestion,
) {
    let msg = Message {
        kind: MessageKind::Inform,
        sender: from,
        tag: 0,
        media_type: t,
        payload: Payload::Suggestion(suggestion),
    };
    for to in (0..institutions).filter(|&j| j != from) {
        post.send(cycle, to, msg);
    }
}

/// Attaches a propose to its open issue; returns false (stale) when the
/// issue is no longer open.
pub fn accept_propose(inst: &mut Institution, msg: &Message) -> bool {
    let Some(issue) = inst.open_issues.get_mut(&msg.tag) else {
        return false;
    };
    match msg.payload {
        Payload::Suggestion(s) => issue.proposals.push((msg.sender, s)),
        _ => issue.empty_replies += 1,
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::WorldParams;
    use crate::registry::FormatRegistry;
    use crate::world::World;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn world(n: usize) -> World {
        let reg = FormatRegistry::bundled(0);
        let params = WorldParams {
            institutions: n,
            ..WorldParams::default()
        };
        World::spawn(&params, &reg, None, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    #[test]
    fn tags_encode_the_issuer() {
        let tag = make_tag(7, 3);
        assert_eq!(tag, (7u64 << 32) | 3);
        assert_eq!(tag_issuer(tag), 7);
        assert_ne!(make_tag(1, 0), make_tag(0, 1));
    }

    #[test]
    fn request_reaches_every_other_institution() {
        let mut w = world(3);
        let mut post = PostOffice::new(3);
        let tag = broadcast_request(&mut post, &mut w.institutions[0], 3, MediaType::Audio, 4, 1);
        assert!(w.institutions[0].open_issues.contains_key(&tag));
        assert_eq!(post.pending(), 2);
        assert!(post.inbox(1).is_empty());
        post.deliver();
        assert!(post.inbox(0).is_empty());
        assert_eq!(post.inbox(1).len(), 1);
        assert_eq!(post.inbox(2).len(), 1);
        assert_eq!(post.inbox(1)[0].payload, Payload::Format(4));
    }

    #[test]
    fn two_requests_get_distinct_tags() {
        let mut w = world(3);
        let mut post = PostOffice::new(3);
        let a = broadcast_request(&mut post, &mut w.institutions[1], 3, MediaType::Audio, 4, 1);
        let b = broadcast_request(&mut post, &mut w.institutions[1], 3, MediaType::Audio, 5, 1);
        assert_ne!(a, b);
        assert_eq!(w.institutions[1].open_issues.len(), 2);
    }

    #[test]
    fn lone_institution_registers_issue_without_messages() {
        let mut w = world(1);
        let mut post = PostOffice::new(1);
        let tag = broadcast_request(&mut post, &mut w.institutions[0], 1, MediaType::Text, 0, 1);
        assert_eq!(post.counters().sent, 0);
        assert!(w.institutions[0].open_issues.contains_key(&tag));
    }

    #[test]
    fn propose_to_live_tag_is_delivered_next_cycle() {
        let mut w = world(2);
        let mut post = PostOffice::new(2);
        let tag = broadcast_request(&mut post, &mut w.institutions[0], 2, MediaType::Video, 3, 1);
        post.deliver();
        let req = post.take_inbox(1);
        post.mark_consumed(req.len() as u64);
        let s = MigrationSuggestion { src: 3, dst: 0 };
        send_propose(&mut post, 2, 1, 0, tag, MediaType::Video, Some(s));
        assert!(post.inbox(0).is_empty());
        post.deliver();
        let inbox = post.take_inbox(0);
        assert_eq!(inbox.len(), 1);
        assert!(accept_propose(&mut w.institutions[0], &inbox[0]));
        post.mark_consumed(1);
        assert_eq!(w.institutions[0].open_issues[&tag].proposals, vec![(1, s)]);
        assert!(post.reconciled());
    }

    #[test]
    fn propose_to_resolved_tag_is_dropped() {
        let mut w = world(2);
        let mut post = PostOffice::new(2);
        let tag = broadcast_request(&mut post, &mut w.institutions[0], 2, MediaType::Video, 3, 1);
        w.institutions[0].open_issues.remove(&tag);
        send_propose(&mut post, 2, 1, 0, tag, MediaType::Video, None);
        post.deliver();
        let inbox = post.take_inbox(0);
        assert!(!accept_propose(&mut w.institutions[0], &inbox[0]));
        post.mark_dropped(1);
        let req = post.take_inbox(1);
        post.mark_consumed(req.len() as u64);
        assert_eq!(post.counters().dropped, 1);
        assert!(post.reconciled());
    }

    #[test]
    fn inform_reaches_all_but_the_sender() {
        let mut post = PostOffice::new(50);
        send_inform_all(&mut post, 1, 3, 50, MediaType::Image, MigrationSuggestion { src: 1, dst: 2 });
        assert_eq!(post.pending(), 49);
        post.deliver();
        assert!(post.inbox(3).is_empty());
    }

    #[test]
    fn delivery_is_fifo_per_sender_and_traced() {
        let mut post = PostOffice::new(2);
        post.enable_trace();
        for f in 0..3 {
            post.send(
                5,
                1,
                Message {
                    kind: MessageKind::Request,
                    sender: 0,
                    tag: make_tag(0, f as u32),
                    media_type: MediaType::Audio,
                    payload: Payload::Format(f),
                },
            );
        }
        post.deliver();
        let got: Vec<_> = post.inbox(1).iter().map(|m| m.payload).collect();
        assert_eq!(got, vec![Payload::Format(0), Payload::Format(1), Payload::Format(2)]);
        let trace = post.take_trace();
        assert_eq!(trace[1], "5,request,0,1,1,audio:1");
    }
}
