//! Seeded synthetic corpora with known structure.
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::distributions::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Cascade, CascadeEvent, FollowerGraph, NewsItem, Timestamp, UserId, WordEmbeddingTable};
use crate::error::{Error, Result};

const HOUR: i64 = 3600;
const DAY: i64 = 24 * HOUR;

/// Cascades confined to equally sized communities of consecutive user ids.
/// Returns the cascades and each user's community.
pub fn community_cascades(
    communities: usize,
    size: usize,
    cascades: usize,
    reposters: (usize, usize),
    seed: u64,
) -> (Vec<Cascade>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..communities * size).map(|u| u / size).collect();
    let mut out = Vec::with_capacity(cascades);
    for news in 0..cascades {
        let c = rng.gen_range(0..communities);
        let mut members: Vec<UserId> = ((c * size) as UserId..((c + 1) * size) as UserId).collect();
        members.shuffle(&mut rng);
        let k = rng.gen_range(reposters.0..=reposters.1).min(size - 1);
        let mut t = 0;
        let events = members[..=k]
            .iter()
            .map(|&user| {
                let ev = CascadeEvent { user, time: t };
                t += rng.gen_range(60..4 * HOUR);
                ev
            })
            .collect();
        out.push(Cascade::new(news as u64, events).expect("nonempty"));
    }
    (out, labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedConfig {
    pub users: usize,
    pub news: usize,
    pub groups: usize,
    pub days: i64,
    /// Adoptions per user.
    pub adoptions_per_user: usize,
    /// Chance an adoption targets the user's own group.
    pub in_group: f64,
    /// Chance a title carries its group's marker token.
    pub title_marker: f64,
    pub title_len: usize,
    pub vocab: usize,
    pub word_dim: usize,
    /// Followees per user inside the own group.
    pub followees: usize,
    /// Adoption delays are log-uniform in `[min, max]` seconds.
    pub delay_seconds: (f64, f64),
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            users: 200,
            news: 500,
            groups: 2,
            days: 60,
            adoptions_per_user: 20,
            in_group: 0.95,
            title_marker: 0.1,
            title_len: 6,
            vocab: 200,
            word_dim: 16,
            followees: 5,
            delay_seconds: (DAY as f64, 30.0 * DAY as f64),
        }
    }
}

/// Raw inputs as they would arrive from files.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub graph: FollowerGraph,
    pub cascades: Vec<Cascade>,
    pub news: Vec<NewsItem>,
    pub titles: Vec<String>,
    pub words: WordEmbeddingTable,
    pub user_group: Vec<usize>,
    pub news_group: Vec<usize>,
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Users in interest groups adopt mostly their own group's news, shortly or
/// long after release. Cascades stay inside the news item's group; titles
/// carry a group marker only some of the time.
pub fn planted_preference(cfg: &PlantedConfig, seed: u64) -> Result<SyntheticCorpus> {
    if cfg.groups == 0 || cfg.users < 2 * cfg.groups || cfg.news < cfg.groups || cfg.title_len == 0 {
        return Err(Error::Config("planted corpus is too small".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let user_group: Vec<usize> = (0..cfg.users).map(|u| u % cfg.groups).collect();
    let news_group: Vec<usize> = (0..cfg.news).map(|n| n % cfg.groups).collect();

    let mut graph = FollowerGraph::with_nodes(cfg.users);
    for u in 0..cfg.users {
        let peers: Vec<usize> = (0..cfg.users).filter(|&v| v != u && user_group[v] == user_group[u]).collect();
        for &v in peers.choose_multiple(&mut rng, cfg.followees.min(peers.len())) {
            graph.add_edge(u as UserId, v as UserId)?;
        }
        if graph.followees(u as UserId).is_empty() {
            let v = (u + 1) % cfg.users;
            graph.add_edge(u as UserId, v as UserId)?;
        }
    }

    let span = cfg.days * DAY;
    let release: Vec<Timestamp> = (0..cfg.news).map(|_| rng.gen_range(0..span)).collect();
    let by_group: Vec<Vec<usize>> = (0..cfg.groups)
        .map(|g| (0..cfg.news).filter(|&n| news_group[n] == g).collect())
        .collect();
    let mut events: Vec<Vec<CascadeEvent>> = (0..cfg.news)
        .map(|n| {
            let members: Vec<usize> = (0..cfg.users).filter(|&u| user_group[u] == news_group[n]).collect();
            let initiator = *members.choose(&mut rng).expect("group has users");
            vec![CascadeEvent {
                user: initiator as UserId,
                time: release[n],
            }]
        })
        .collect();
    let (lo, hi) = (cfg.delay_seconds.0.ln(), cfg.delay_seconds.1.ln());
    let delay = Uniform::new_inclusive(lo, hi);
    for u in 0..cfg.users {
        let mut taken = std::collections::HashSet::new();
        let mut tries = 0;
        while taken.len() < cfg.adoptions_per_user && tries < 50 * cfg.adoptions_per_user {
            tries += 1;
            let g = if rng.gen_bool(cfg.in_group) || cfg.groups == 1 {
                user_group[u]
            } else {
                let other = rng.gen_range(0..cfg.groups - 1);
                if other >= user_group[u] {
                    other + 1
                } else {
                    other
                }
            };
            let n = *by_group[g].choose(&mut rng).expect("group has news");
            if events[n][0].user as usize == u || !taken.insert(n) {
                continue;
            }
            let t = release[n] + delay.sample(&mut rng).exp().round() as i64;
            if t > span {
                taken.remove(&n);
                continue;
            }
            events[n].push(CascadeEvent { user: u as UserId, time: t });
        }
    }
    let cascades = events
        .into_iter()
        .enumerate()
        .map(|(n, ev)| Cascade::new(n as u64, ev).expect("initiator present"))
        .collect();

    let mut pairs: Vec<(String, Vec<f64>)> = (0..cfg.vocab)
        .map(|i| (format!("w{i}"), (0..cfg.word_dim).map(|_| gaussian(&mut rng) * 0.5).collect()))
        .collect();
    for g in 0..cfg.groups {
        pairs.push((format!("group{g}"), (0..cfg.word_dim).map(|_| gaussian(&mut rng)).collect()));
    }
    let words = WordEmbeddingTable::from_pairs(cfg.word_dim, pairs)?;
    let mut titles = Vec::with_capacity(cfg.news);
    let mut news = Vec::with_capacity(cfg.news);
    for n in 0..cfg.news {
        let mut toks: Vec<String> = (0..cfg.title_len)
            .map(|_| format!("w{}", rng.gen_range(0..cfg.vocab)))
            .collect();
        if rng.gen_bool(cfg.title_marker) {
            let at = rng.gen_range(0..cfg.title_len);
            toks[at] = format!("group{}", news_group[n]);
        }
        let title = toks.join(" ");
        news.push(NewsItem {
            news_id: n as u64,
            title_tokens: words.encode_title(&title, cfg.title_len.max(3)),
            publish_time: release[n],
        });
        titles.push(title);
    }
    Ok(SyntheticCorpus {
        graph,
        cascades,
        news,
        titles,
        words,
        user_group,
        news_group,
    })
}

/// Paths of the raw files written by [`SyntheticCorpus::write`].
#[derive(Debug, Clone)]
pub struct RawFiles {
    pub graph: PathBuf,
    pub cascades: PathBuf,
    pub news: PathBuf,
    pub words: PathBuf,
}

impl SyntheticCorpus {
    /// Writes the corpus in the raw input formats.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<RawFiles> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = RawFiles {
            graph: dir.join("graph.txt"),
            cascades: dir.join("cascades.jsonl"),
            news: dir.join("news.tsv"),
            words: dir.join("words.txt"),
        };
        let ext = |u: UserId| self.graph.external_id(u).expect("known user");
        let mut g = String::from("# follower followee\n");
        for (a, b) in self.graph.edges() {
            g.push_str(&format!("{} {}\n", ext(a), ext(b)));
        }
        write_file(&files.graph, g.as_bytes())?;
        let mut c = Vec::new();
        for cascade in &self.cascades {
            let events: Vec<_> = cascade
                .events()
                .iter()
                .map(|e| serde_json::json!({"u": ext(e.user), "t": e.time}))
                .collect();
            let line = serde_json::json!({"news_id": cascade.news_id, "events": events});
            writeln!(c, "{line}").expect("in-memory write");
        }
        write_file(&files.cascades, &c)?;
        let mut n = String::new();
        for (item, title) in self.news.iter().zip(&self.titles) {
            n.push_str(&format!("{}\t{}\t{}\n", item.news_id, item.publish_time, title));
        }
        write_file(&files.news, n.as_bytes())?;
        let mut w = format!("{} {}\n", self.words.len() - 2, self.words.dim());
        for (i, tok) in self.words.tokens().iter().enumerate().skip(2) {
            let v: Vec<String> = self.words.vector(i as u32).iter().map(|x| format!("{x:?}")).collect();
            w.push_str(&format!("{tok} {}\n", v.join(" ")));
        }
        write_file(&files.words, w.as_bytes())?;
        Ok(files)
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
