use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::graph::{FollowerGraph, UserId};
use crate::error::{Error, Result};

/// Seconds since the Unix epoch.
pub type Timestamp = i64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CascadeEvent {
    pub user: UserId,
    pub time: Timestamp,
}

/// Time-ordered adoptions of one news item. The first event is the initiator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cascade {
    pub news_id: u64,
    events: Vec<CascadeEvent>,
}

impl Cascade {
    /// Sorts events by time (stable, so file order breaks ties) and keeps the
    /// earliest event of every user. Returns `None` when no events remain.
    pub fn new(news_id: u64, mut events: Vec<CascadeEvent>) -> Option<Self> {
        events.sort_by_key(|e| e.time);
        let mut seen = HashSet::with_capacity(events.len());
        events.retain(|e| seen.insert(e.user));
        if events.is_empty() {
            None
        } else {
            Some(Cascade { news_id, events })
        }
    }

    pub fn events(&self) -> &[CascadeEvent] {
        &self.events
    }

    pub fn initiator(&self) -> UserId {
        self.events[0].user
    }

    pub fn start_time(&self) -> Timestamp {
        self.events[0].time
    }

    pub fn reposters(&self) -> &[CascadeEvent] {
        &self.events[1..]
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn users(&self) -> impl Iterator<Item = UserId> + '_ {
        self.events.iter().map(|e| e.user)
    }

    /// The cascade as it looked at `until`: events with `time <= until`, minus
    /// the events of `exclude`. The initiator is always retained.
    pub fn snapshot(&self, until: Timestamp, exclude: Option<UserId>) -> Cascade {
        let mut events = Vec::with_capacity(self.events.len());
        events.push(self.events[0]);
        events.extend(
            self.events[1..]
                .iter()
                .take_while(|e| e.time <= until)
                .filter(|e| Some(e.user) != exclude),
        );
        Cascade {
            news_id: self.news_id,
            events,
        }
    }

    /// Keeps only events strictly before `cut`. `None` if the initiator is cut.
    pub fn truncated_before(&self, cut: Timestamp) -> Option<Cascade> {
        let events: Vec<_> = self
            .events
            .iter()
            .take_while(|e| e.time < cut)
            .copied()
            .collect();
        (!events.is_empty()).then(|| Cascade {
            news_id: self.news_id,
            events,
        })
    }
}

#[derive(Deserialize)]
struct RawEvent {
    u: u64,
    t: i64,
}

#[derive(Deserialize)]
struct RawCascade {
    news_id: u64,
    events: Vec<RawEvent>,
}

/// Result of reading a cascade file, with counts of what had to be discarded.
#[derive(Debug, Default)]
pub struct CascadeLoad {
    pub cascades: Vec<Cascade>,
    pub skipped_empty: usize,
    pub dropped_unknown_users: usize,
}

/// Reads JSON-lines cascades, mapping user ids through `graph`. Events of
/// users absent from the graph are dropped; cascades left without events are
/// skipped.
pub fn parse_cascades(
    reader: impl BufRead,
    path: &Path,
    graph: &FollowerGraph,
) -> Result<CascadeLoad> {
    let mut out = CascadeLoad::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawCascade =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        let mut events = Vec::with_capacity(raw.events.len());
        for ev in raw.events {
            match graph.dense_id(ev.u) {
                Some(user) => events.push(CascadeEvent { user, time: ev.t }),
                None => out.dropped_unknown_users += 1,
            }
        }
        match Cascade::new(raw.news_id, events) {
            Some(c) => out.cascades.push(c),
            None => out.skipped_empty += 1,
        }
    }
    if out.skipped_empty > 0 || out.dropped_unknown_users > 0 {
        log::warn!(
            "{}: skipped {} empty cascades, dropped {} events of unknown users",
            path.display(),
            out.skipped_empty,
            out.dropped_unknown_users
        );
    }
    Ok(out)
}

pub fn load_cascades(path: impl AsRef<Path>, graph: &FollowerGraph) -> Result<CascadeLoad> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_cascades(BufReader::new(file), path, graph)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str, nodes: usize) -> CascadeLoad {
        let g = FollowerGraph::with_nodes(nodes);
        parse_cascades(text.as_bytes(), Path::new("c.jsonl"), &g).unwrap()
    }

    #[test]
    fn events_are_sorted() {
        let l = load(
            r#"{"news_id": 7, "events": [{"u": 2, "t": 30}, {"u": 0, "t": 10}, {"u": 1, "t": 20}]}"#,
            3,
        );
        let c = &l.cascades[0];
        let times: Vec<_> = c.events().iter().map(|e| e.time).collect();
        assert_eq!(times, vec![10, 20, 30]);
        assert_eq!(c.initiator(), 0);
    }

    #[test]
    fn duplicate_user_keeps_earliest() {
        let l = load(
            r#"{"news_id": 1, "events": [{"u": 0, "t": 1}, {"u": 1, "t": 9}, {"u": 1, "t": 5}]}"#,
            2,
        );
        let c = &l.cascades[0];
        assert_eq!(c.len(), 2);
        assert_eq!(c.events()[1], CascadeEvent { user: 1, time: 5 });
    }

    #[test]
    fn empty_cascades_are_counted() {
        let mut text = String::new();
        for i in 0..10 {
            if i == 4 {
                text.push_str(&format!("{{\"news_id\": {i}, \"events\": []}}\n"));
            } else {
                text.push_str(&format!(
                    "{{\"news_id\": {i}, \"events\": [{{\"u\": 0, \"t\": {i}}}]}}\n"
                ));
            }
        }
        let l = load(&text, 1);
        assert_eq!(l.cascades.len(), 9);
        assert_eq!(l.skipped_empty, 1);
    }

    #[test]
    fn unknown_users_are_dropped() {
        let l = load(
            r#"{"news_id": 1, "events": [{"u": 0, "t": 1}, {"u": 55, "t": 2}]}"#,
            1,
        );
        assert_eq!(l.cascades[0].len(), 1);
        assert_eq!(l.dropped_unknown_users, 1);
    }

    #[test]
    fn malformed_json_reports_line() {
        let g = FollowerGraph::with_nodes(1);
        let err = parse_cascades("\n{oops".as_bytes(), Path::new("c"), &g).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn snapshot_is_causal_and_keeps_initiator() {
        let c = Cascade::new(
            0,
            vec![
                CascadeEvent { user: 3, time: 0 },
                CascadeEvent { user: 1, time: 10 },
                CascadeEvent { user: 2, time: 20 },
                CascadeEvent { user: 4, time: 30 },
            ],
        )
        .unwrap();
        let s = c.snapshot(20, Some(1));
        assert_eq!(s.users().collect::<Vec<_>>(), vec![3, 2]);
        let s = c.snapshot(20, Some(3));
        assert_eq!(s.users().collect::<Vec<_>>(), vec![3, 1, 2]);
        assert!(c.snapshot(25, None).events().iter().all(|e| e.time <= 25));
    }
}
