use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense user id, valid in `[0, node_count)`.
pub type UserId = u32;

/// Directed follower graph over densely re-indexed users.
///
/// An edge `(a, b)` means `a` follows `b`. Adjacency lists are sorted and
/// deduplicated; self-loops are never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "GraphRepr", into = "GraphRepr")]
pub struct FollowerGraph {
    followees: Vec<Vec<UserId>>,
    external_ids: Vec<u64>,
    index: HashMap<u64, UserId>,
}

#[derive(Serialize, Deserialize)]
struct GraphRepr {
    external_ids: Vec<u64>,
    followees: Vec<Vec<UserId>>,
}

impl From<GraphRepr> for FollowerGraph {
    fn from(r: GraphRepr) -> Self {
        let index = r
            .external_ids
            .iter()
            .enumerate()
            .map(|(i, &e)| (e, i as UserId))
            .collect();
        FollowerGraph {
            followees: r.followees,
            external_ids: r.external_ids,
            index,
        }
    }
}

impl From<FollowerGraph> for GraphRepr {
    fn from(g: FollowerGraph) -> Self {
        GraphRepr {
            external_ids: g.external_ids,
            followees: g.followees,
        }
    }
}

impl Default for FollowerGraph {
    fn default() -> Self {
        Self::new()
    }
}

impl FollowerGraph {
    pub fn new() -> Self {
        FollowerGraph {
            followees: Vec::new(),
            external_ids: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// A graph whose external ids equal the dense ids `0..node_count`.
    pub fn with_nodes(node_count: usize) -> Self {
        let mut g = Self::new();
        for i in 0..node_count {
            g.intern(i as u64).expect("node count fits in u32");
        }
        g
    }

    /// Returns the dense id for `external`, registering it if unseen.
    pub fn intern(&mut self, external: u64) -> Result<UserId> {
        if let Some(&id) = self.index.get(&external) {
            return Ok(id);
        }
        let id = UserId::try_from(self.external_ids.len())
            .map_err(|_| Error::Invalid("more than u32::MAX users".into()))?;
        self.index.insert(external, id);
        self.external_ids.push(external);
        self.followees.push(Vec::new());
        Ok(id)
    }

    /// Adds `follower -> followee`. Self-loops are ignored.
    pub fn add_edge(&mut self, follower: UserId, followee: UserId) -> Result<()> {
        let n = self.node_count() as UserId;
        for id in [follower, followee] {
            if id >= n {
                return Err(Error::UnknownUser(id));
            }
        }
        if follower == followee {
            return Ok(());
        }
        let list = &mut self.followees[follower as usize];
        if let Err(pos) = list.binary_search(&followee) {
            list.insert(pos, followee);
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.external_ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.followees.iter().map(Vec::len).sum()
    }

    pub fn has_edge(&self, follower: UserId, followee: UserId) -> bool {
        self.followees
            .get(follower as usize)
            .is_some_and(|l| l.binary_search(&followee).is_ok())
    }

    pub fn followees(&self, user: UserId) -> &[UserId] {
        self.followees
            .get(user as usize)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn edges(&self) -> impl Iterator<Item = (UserId, UserId)> + '_ {
        self.followees
            .iter()
            .enumerate()
            .flat_map(|(a, l)| l.iter().map(move |&b| (a as UserId, b)))
    }

    pub fn dense_id(&self, external: u64) -> Option<UserId> {
        self.index.get(&external).copied()
    }

    pub fn external_id(&self, user: UserId) -> Option<u64> {
        self.external_ids.get(user as usize).copied()
    }
}

/// Parses whitespace-separated `follower followee` pairs. Blank lines and
/// `#` comments are skipped.
pub fn parse_follower_graph(reader: impl BufRead, path: &Path) -> Result<FollowerGraph> {
    let mut graph = FollowerGraph::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected 2 fields, found {}", fields.len()),
            ));
        }
        let mut ids = [0u64; 2];
        for (slot, field) in ids.iter_mut().zip(&fields) {
            *slot = field.parse::<u64>().map_err(|e| {
                Error::parse(path, lineno, format!("bad user id {field:?}: {e}"))
            })?;
        }
        let a = graph
            .intern(ids[0])
            .map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        let b = graph
            .intern(ids[1])
            .map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        graph.add_edge(a, b)?;
    }
    Ok(graph)
}

pub fn load_follower_graph(path: impl AsRef<Path>) -> Result<FollowerGraph> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_follower_graph(BufReader::new(file), path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<FollowerGraph> {
        parse_follower_graph(text.as_bytes(), Path::new("graph.txt"))
    }

    #[test]
    fn two_edges() {
        let g = parse("0 1\n1 2").unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 2);
        assert!(g.has_edge(0, 1));
        assert!(!g.has_edge(1, 0));
    }

    #[test]
    fn self_loop_dropped() {
        let g = parse("0 0").unwrap();
        assert_eq!(g.node_count(), 1);
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn parse_error_reports_line() {
        match parse("a b") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
        match parse("# header\n1 2\n3") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn overflowing_id_is_an_error() {
        assert!(matches!(
            parse("99999999999999999999999 1"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn duplicates_and_comments() {
        let g = parse("# comment\n10 20\n10 20 # again\n\n20 10\n").unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.dense_id(20), Some(1));
        assert_eq!(g.external_id(0), Some(10));
    }

    #[test]
    fn serde_round_trip_rebuilds_index() {
        let g = parse("5 7\n7 9\n").unwrap();
        let json = serde_json::to_string(&g).unwrap();
        let back: FollowerGraph = serde_json::from_str(&json).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.dense_id(9), Some(2));
    }
}
