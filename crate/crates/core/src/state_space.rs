//! Collision-free network states and their throughput.
//!
//! States are ordered lexicographically with `Sleep < Listen < Transmit` and
//! node 0 most significant, so a distribution over states can be addressed
//! by index across calls.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Enumeration is exponential in the node count.
pub const MAX_NODES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeState {
    Sleep,
    Listen,
    Transmit,
}

impl NodeState {
    pub fn symbol(self) -> char {
        match self {
            NodeState::Sleep => 's',
            NodeState::Listen => 'l',
            NodeState::Transmit => 'x',
        }
    }
}

impl fmt::Display for NodeState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            NodeState::Sleep => "sleep",
            NodeState::Listen => "listen",
            NodeState::Transmit => "transmit",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThroughputMode {
    #[default]
    Groupput,
    Anyput,
}

impl fmt::Display for ThroughputMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ThroughputMode::Groupput => "groupput",
            ThroughputMode::Anyput => "anyput",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ListenerStats {
    /// Number of listening nodes.
    pub c: usize,
    /// Someone listens.
    pub gamma: bool,
    /// Exactly one node transmits.
    pub nu: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NetworkState {
    pub states: Vec<NodeState>,
}

impl NetworkState {
    pub fn new(states: Vec<NodeState>) -> Self {
        Self { states }
    }

    /// Parses a compact string like `"xlls"`.
    pub fn parse(s: &str) -> Option<Self> {
        s.chars()
            .map(|c| match c {
                's' => Some(NodeState::Sleep),
                'l' => Some(NodeState::Listen),
                'x' => Some(NodeState::Transmit),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()
            .map(Self::new)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn transmitters(&self) -> usize {
        self.states.iter().filter(|&&s| s == NodeState::Transmit).count()
    }

    pub fn is_collision_free(&self) -> bool {
        self.transmitters() <= 1
    }

    pub fn listener_stats(&self) -> ListenerStats {
        listener_stats(self)
    }

    pub fn throughput(&self, mode: ThroughputMode) -> f64 {
        state_throughput(self, mode)
    }
}

impl fmt::Display for NetworkState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.states {
            write!(f, "{}", s.symbol())?;
        }
        Ok(())
    }
}

pub fn listener_stats(w: &NetworkState) -> ListenerStats {
    let c = w.states.iter().filter(|&&s| s == NodeState::Listen).count();
    ListenerStats { c, gamma: c >= 1, nu: w.transmitters() == 1 }
}

pub fn state_throughput(w: &NetworkState, mode: ThroughputMode) -> f64 {
    let st = listener_stats(w);
    if !st.nu {
        return 0.0;
    }
    match mode {
        ThroughputMode::Groupput => st.c as f64,
        ThroughputMode::Anyput => f64::from(u8::from(st.gamma)),
    }
}

/// Compact state: bit `i` of `listen` set when node `i` listens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StateCode {
    pub listen: u32,
    pub transmitter: Option<u8>,
}

impl StateCode {
    pub fn node(&self, i: usize) -> NodeState {
        if self.transmitter == Some(i as u8) {
            NodeState::Transmit
        } else if self.listen >> i & 1 == 1 {
            NodeState::Listen
        } else {
            NodeState::Sleep
        }
    }

    pub fn listeners(&self) -> usize {
        self.listen.count_ones() as usize
    }

    pub fn throughput(&self, mode: ThroughputMode) -> f64 {
        match (self.transmitter, mode) {
            (None, _) => 0.0,
            (Some(_), ThroughputMode::Groupput) => self.listeners() as f64,
            (Some(_), ThroughputMode::Anyput) => f64::from(u8::from(self.listen != 0)),
        }
    }
}

fn check_size(n: usize) -> Result<()> {
    if n == 0 || n > MAX_NODES {
        Err(Error::SizeGuard { n, cap: MAX_NODES })
    } else {
        Ok(())
    }
}

/// Number of collision-free states: (n+2)·2^(n−1).
pub fn state_count(n: usize) -> usize {
    if n == 0 {
        return 1;
    }
    (n + 2) << (n - 1)
}

// Completions of `m` remaining nodes, given whether a transmitter was already placed.
fn completions(m: usize, transmitter_used: bool) -> usize {
    if transmitter_used {
        1 << m
    } else {
        state_count(m)
    }
}

/// The canonical ordered collection of collision-free states for `n` nodes.
#[derive(Debug, Clone)]
pub struct StateSpace {
    n: usize,
    codes: Vec<StateCode>,
}

impl StateSpace {
    pub fn new(n: usize) -> Result<Self> {
        check_size(n)?;
        let mut codes = Vec::with_capacity(state_count(n));
        fill(n, 0, 0, None, &mut codes);
        debug_assert_eq!(codes.len(), state_count(n));
        Ok(Self { n, codes })
    }

    pub fn nodes(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn codes(&self) -> &[StateCode] {
        &self.codes
    }

    pub fn code(&self, idx: usize) -> StateCode {
        self.codes[idx]
    }

    pub fn state(&self, idx: usize) -> NetworkState {
        let c = self.codes[idx];
        NetworkState::new((0..self.n).map(|i| c.node(i)).collect())
    }

    pub fn index_of(&self, w: &NetworkState) -> Option<usize> {
        if w.len() != self.n {
            return None;
        }
        rank(w.states.iter().copied())
    }

    pub fn index_of_code(&self, code: StateCode) -> usize {
        rank((0..self.n).map(|i| code.node(i))).expect("codes are collision-free")
    }
}

fn fill(n: usize, i: usize, listen: u32, tx: Option<u8>, out: &mut Vec<StateCode>) {
    if i == n {
        out.push(StateCode { listen, transmitter: tx });
        return;
    }
    fill(n, i + 1, listen, tx, out);
    fill(n, i + 1, listen | 1 << i, tx, out);
    if tx.is_none() {
        fill(n, i + 1, listen, Some(i as u8), out);
    }
}

/// Lexicographic rank of a state among collision-free states of the same length.
fn rank(states: impl ExactSizeIterator<Item = NodeState>) -> Option<usize> {
    let n = states.len();
    let mut idx = 0;
    let mut used = false;
    for (i, s) in states.enumerate() {
        let rest = n - i - 1;
        match s {
            NodeState::Sleep => {}
            NodeState::Listen => idx += completions(rest, used),
            NodeState::Transmit => {
                if used {
                    return None;
                }
                idx += 2 * completions(rest, used);
                used = true;
            }
        }
    }
    Some(idx)
}

pub fn enumerate_states(n: usize) -> Result<Vec<NetworkState>> {
    let space = StateSpace::new(n)?;
    Ok((0..space.len()).map(|i| space.state(i)).collect())
}
