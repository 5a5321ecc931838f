use crate::error::{Error, Result};

pub type NodeId = usize;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Node {
    /// Sorted by label.
    children: Vec<(u32, NodeId)>,
    terminal: Option<usize>,
}

/// Prefix tree over label sequences. A node that ends a valid sequence
/// records the document it names; such nodes may still have children.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocIdTrie {
    nodes: Vec<Node>,
    terminals: usize,
}

impl DocIdTrie {
    pub const ROOT: NodeId = 0;

    pub fn from_sequences<I, S>(sequences: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, S)>,
        S: AsRef<[u32]>,
    {
        let mut trie = Self {
            nodes: vec![Node::default()],
            terminals: 0,
        };
        for (doc, seq) in sequences {
            let seq = seq.as_ref();
            if seq.is_empty() {
                return Err(Error::EmptyDocId);
            }
            let mut node = Self::ROOT;
            for &label in seq {
                node = match trie.child(node, label) {
                    Some(next) => next,
                    None => {
                        let next = trie.nodes.len();
                        trie.nodes.push(Node::default());
                        let children = &mut trie.nodes[node].children;
                        let at = children.partition_point(|(l, _)| *l < label);
                        children.insert(at, (label, next));
                        next
                    }
                };
            }
            if trie.nodes[node].terminal.is_some() {
                let text: String = seq.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(",");
                return Err(Error::DuplicateDocId(text));
            }
            trie.nodes[node].terminal = Some(doc);
            trie.terminals += 1;
        }
        Ok(trie)
    }

    pub fn child(&self, node: NodeId, label: u32) -> Option<NodeId> {
        let children = &self.nodes[node].children;
        children
            .binary_search_by_key(&label, |(l, _)| *l)
            .ok()
            .map(|i| children[i].1)
    }

    pub fn children(&self, node: NodeId) -> &[(u32, NodeId)] {
        &self.nodes[node].children
    }

    pub fn terminal(&self, node: NodeId) -> Option<usize> {
        self.nodes[node].terminal
    }

    pub fn terminal_count(&self) -> usize {
        self.terminals
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terminals == 0
    }

    /// Walks `seq` from the root.
    pub fn walk(&self, seq: &[u32]) -> Option<NodeId> {
        seq.iter().try_fold(Self::ROOT, |n, &l| self.child(n, l))
    }

    pub fn lookup(&self, seq: &[u32]) -> Option<usize> {
        self.walk(seq).and_then(|n| self.terminal(n))
    }

    /// Every accepted sequence with its document, in label order.
    pub fn sequences(&self) -> Vec<(Vec<u32>, usize)> {
        let mut out = Vec::with_capacity(self.terminals);
        let mut stack = vec![(Self::ROOT, Vec::new())];
        while let Some((node, path)) = stack.pop() {
            if let Some(doc) = self.nodes[node].terminal {
                out.push((path.clone(), doc));
            }
            for &(label, child) in self.nodes[node].children.iter().rev() {
                let mut p = path.clone();
                p.push(label);
                stack.push((child, p));
            }
        }
        out
    }
}
