use std::collections::HashMap;
use std::fmt::Write as _;

use crate::io::{TokenId, BLANK};

pub type NodeId = u32;

pub const ROOT: NodeId = 0;

/// What a final node reports when a hypothesis completes its path.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Payload {
    /// Normalized text of the bias word, or of the term an alternate stands for.
    pub original_term: String,
    pub is_alternate: bool,
}

impl Payload {
    pub fn term(text: impl Into<String>) -> Self {
        Payload {
            original_term: text.into(),
            is_alternate: false,
        }
    }

    pub fn alternate_of(text: impl Into<String>) -> Self {
        Payload {
            original_term: text.into(),
            is_alternate: true,
        }
    }

    /// Decides which payload survives when two paths share a final node:
    /// a plain bias term beats an alternate, otherwise the smaller term wins.
    fn prefer(self, other: Payload) -> Payload {
        match (self.is_alternate, other.is_alternate) {
            (false, true) => self,
            (true, false) => other,
            _ if other.original_term < self.original_term => other,
            _ => self,
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    parent: NodeId,
    token: TokenId,
    depth: u32,
    children: Vec<(TokenId, NodeId)>,
    payload: Option<usize>,
}

/// Cursor of one hypothesis inside the automaton.
///
/// `accumulated_bonus` is the bonus collected since the last completed term;
/// it is taken back if the partial match fails. With no nested terms it equals
/// `beta * depth(node)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchState {
    pub node: NodeId,
    pub accumulated_bonus: f64,
    unsecured: u32,
}

impl MatchState {
    pub const fn root() -> Self {
        MatchState {
            node: ROOT,
            accumulated_bonus: 0.0,
            unsecured: 0,
        }
    }

    pub fn is_root(&self) -> bool {
        self.node == ROOT
    }
}

impl Default for MatchState {
    fn default() -> Self {
        Self::root()
    }
}

/// Result of feeding one token to the automaton.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub next: MatchState,
    pub delta: f64,
    /// Payload index of the term completed by this token, if any.
    pub completed: Option<Completion>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Completion {
    pub payload: usize,
    /// Number of tokens on the completed path.
    pub length: u32,
}

/// Deterministic token trie that adds a fixed log-domain bonus per matched
/// subword unit and retracts unearned bonus when a partial match fails.
#[derive(Debug, Clone)]
pub struct BiasAutomaton {
    beta: f64,
    nodes: Vec<Node>,
    payloads: Vec<Payload>,
    payload_ids: HashMap<Payload, usize>,
}

impl BiasAutomaton {
    pub fn new(beta: f64) -> Self {
        BiasAutomaton {
            beta,
            nodes: vec![Node {
                parent: ROOT,
                token: BLANK,
                depth: 0,
                children: Vec::new(),
                payload: None,
            }],
            payloads: Vec::new(),
            payload_ids: HashMap::new(),
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Number of nodes including the root.
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.len() == 1
    }

    pub fn payload(&self, id: usize) -> &Payload {
        &self.payloads[id]
    }

    pub fn depth(&self, node: NodeId) -> u32 {
        self.nodes[node as usize].depth
    }

    pub fn child(&self, node: NodeId, token: TokenId) -> Option<NodeId> {
        let children = &self.nodes[node as usize].children;
        children
            .binary_search_by_key(&token, |&(t, _)| t)
            .ok()
            .map(|i| children[i].1)
    }

    /// Adds a token path ending in `payload`. Empty paths and paths containing
    /// the blank are ignored.
    pub fn insert(&mut self, tokens: &[TokenId], payload: Payload) {
        if tokens.is_empty() || tokens.contains(&BLANK) {
            return;
        }
        let mut node = ROOT;
        for &tok in tokens {
            node = match self.child(node, tok) {
                Some(c) => c,
                None => {
                    let id = self.nodes.len() as NodeId;
                    let depth = self.nodes[node as usize].depth + 1;
                    self.nodes.push(Node {
                        parent: node,
                        token: tok,
                        depth,
                        children: Vec::new(),
                        payload: None,
                    });
                    let children = &mut self.nodes[node as usize].children;
                    let pos = children.partition_point(|&(t, _)| t < tok);
                    children.insert(pos, (tok, id));
                    id
                }
            };
        }
        let merged = match self.nodes[node as usize].payload {
            Some(existing) => self.payloads[existing].clone().prefer(payload),
            None => payload,
        };
        let id = match self.payload_ids.get(&merged) {
            Some(&id) => id,
            None => {
                self.payloads.push(merged.clone());
                self.payload_ids.insert(merged, self.payloads.len() - 1);
                self.payloads.len() - 1
            }
        };
        self.nodes[node as usize].payload = Some(id);
    }

    fn advance(&self, state: MatchState, child: NodeId) -> Step {
        let node = &self.nodes[child as usize];
        let unsecured = state.unsecured + 1;
        match node.payload {
            Some(payload) => {
                let next_node = if node.children.is_empty() { ROOT } else { child };
                Step {
                    next: MatchState {
                        node: next_node,
                        accumulated_bonus: 0.0,
                        unsecured: 0,
                    },
                    delta: self.beta,
                    completed: Some(Completion {
                        payload,
                        length: node.depth,
                    }),
                }
            }
            None => Step {
                next: MatchState {
                    node: child,
                    accumulated_bonus: self.beta * f64::from(unsecured),
                    unsecured,
                },
                delta: self.beta,
                completed: None,
            },
        }
    }

    /// Feeds one non-blank token.
    ///
    /// A matching arc earns `+beta`. On a mismatch below the root the
    /// unearned bonus is retracted and the token is retried once from the root.
    pub fn step(&self, state: MatchState, token: TokenId) -> Step {
        debug_assert_ne!(token, BLANK, "bias_step called with blank");
        if let Some(child) = self.child(state.node, token) {
            return self.advance(state, child);
        }
        if state.is_root() {
            return Step {
                next: state,
                delta: 0.0,
                completed: None,
            };
        }
        let retract = -self.beta * f64::from(state.unsecured);
        match self.child(ROOT, token) {
            Some(child) => {
                let mut step = self.advance(MatchState::root(), child);
                step.delta += retract;
                step
            }
            None => Step {
                next: MatchState::root(),
                delta: retract,
                completed: None,
            },
        }
    }

    /// Bonus to take back when a hypothesis ends inside a partial match.
    pub fn finish(&self, state: MatchState) -> f64 {
        -self.beta * f64::from(state.unsecured)
    }

    /// Total bonus of a token sequence, blanks skipped, finalization included.
    pub fn score_sequence(&self, tokens: &[TokenId]) -> f64 {
        let mut state = MatchState::root();
        let mut total = 0.0;
        for &t in tokens.iter().filter(|&&t| t != BLANK) {
            let step = self.step(state, t);
            total += step.delta;
            state = step.next;
        }
        total + self.finish(state)
    }

    /// One `node parent token is_final payload` line per node; the root uses
    /// `-` for parent and token, payloads print as `TERM:<text>` or `ALT:<text>`.
    pub fn debug_dump(&self) -> String {
        let mut out = String::new();
        for (id, node) in self.nodes.iter().enumerate() {
            let (parent, token) = if id == 0 {
                ("-".to_string(), "-".to_string())
            } else {
                (node.parent.to_string(), node.token.to_string())
            };
            let payload = match node.payload {
                Some(p) => {
                    let p = &self.payloads[p];
                    let kind = if p.is_alternate { "ALT" } else { "TERM" };
                    format!("{kind}:{}", p.original_term)
                }
                None => "-".to_string(),
            };
            let _ = writeln!(
                out,
                "{id} {parent} {token} {} {payload}",
                u8::from(node.payload.is_some())
            );
        }
        out
    }
}
