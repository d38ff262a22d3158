use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::cascade::{Cascade, Timestamp};
use super::graph::UserId;
use crate::error::{Error, Result};

/// Dense index of a news item (its position in the corpus article list).
pub type NewsIdx = u32;

const SECONDS_PER_DAY: i64 = 86_400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adoption {
    pub news: NewsIdx,
    pub time: Timestamp,
}

/// Time-ordered adoptions of one (pseudo-)user.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserHistory {
    pub user_id: UserId,
    /// Index of the time window this pseudo-user covers; 0 before windowing.
    pub window: u32,
    pub adoptions: Vec<Adoption>,
}

impl UserHistory {
    pub fn len(&self) -> usize {
        self.adoptions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adoptions.is_empty()
    }
}

/// Inverts cascades into per-user adoption histories. `cascades[i]` is news
/// item `i`. Adoption times are made strictly increasing by dropping later
/// same-second adoptions (the lower news index is kept).
pub fn collect_histories(cascades: &[Cascade]) -> Vec<UserHistory> {
    let mut by_user: BTreeMap<UserId, Vec<Adoption>> = BTreeMap::new();
    for (idx, c) in cascades.iter().enumerate() {
        for e in c.events() {
            by_user.entry(e.user).or_default().push(Adoption {
                news: idx as NewsIdx,
                time: e.time,
            });
        }
    }
    by_user
        .into_iter()
        .map(|(user_id, mut adoptions)| {
            adoptions.sort_by_key(|a| (a.time, a.news));
            adoptions.dedup_by_key(|a| a.time);
            UserHistory {
                user_id,
                window: 0,
                adoptions,
            }
        })
        .collect()
}

/// Splits every history into non-overlapping windows of `window_days`,
/// aligned to the user's first adoption, and keeps the `s_max` most recent
/// adoptions of each window. Empty windows produce no pseudo-user.
pub fn window_users(histories: &[UserHistory], window_days: u32, s_max: usize) -> Vec<UserHistory> {
    assert!(window_days > 0, "window_days must be positive");
    let span = window_days as i64 * SECONDS_PER_DAY;
    let mut out = Vec::new();
    for h in histories {
        let Some(first) = h.adoptions.first() else {
            continue;
        };
        let start = first.time;
        let mut current: Option<UserHistory> = None;
        for a in &h.adoptions {
            let w = ((a.time - start) / span) as u32;
            if current.as_ref().is_some_and(|c| c.window != w) {
                out.push(cap(current.take().unwrap(), s_max));
            }
            current
                .get_or_insert_with(|| UserHistory {
                    user_id: h.user_id,
                    window: w,
                    adoptions: Vec::new(),
                })
                .adoptions
                .push(*a);
        }
        if let Some(c) = current {
            out.push(cap(c, s_max));
        }
    }
    out
}

fn cap(mut h: UserHistory, s_max: usize) -> UserHistory {
    if h.adoptions.len() > s_max {
        h.adoptions.drain(..h.adoptions.len() - s_max);
    }
    h
}

/// Timeline split of pseudo-user histories. The three vectors are aligned
/// with the input: entry `p` holds pseudo-user `p`'s adoptions that fall in
/// that portion (possibly none).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<UserHistory>,
    pub validation: Vec<UserHistory>,
    pub test: Vec<UserHistory>,
    /// First timestamp of the test portion.
    pub test_cut: Timestamp,
    /// First timestamp of the validation portion (equals `test_cut` when the
    /// validation portion is empty).
    pub validation_cut: Timestamp,
}

pub fn count_adoptions(portion: &[UserHistory]) -> usize {
    portion.iter().map(UserHistory::len).sum()
}

/// Cuts the global timeline at the `train_frac` quantile of adoption times,
/// then takes the last `valid_frac` of the training adoptions as validation.
/// Adoptions sharing the cut timestamp all go to the later portion.
pub fn split_timeline(histories: &[UserHistory], train_frac: f64, valid_frac: f64) -> Result<DatasetSplit> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::Invalid(format!("train_frac must be in (0, 1), got {train_frac}")));
    }
    if !(0.0..1.0).contains(&valid_frac) {
        return Err(Error::Invalid(format!("valid_frac must be in [0, 1), got {valid_frac}")));
    }
    let mut times: Vec<Timestamp> = histories
        .iter()
        .flat_map(|h| h.adoptions.iter().map(|a| a.time))
        .collect();
    if times.len() < 2 {
        return Err(Error::Invalid(format!(
            "need at least 2 adoptions to split, found {}",
            times.len()
        )));
    }
    times.sort_unstable();
    let n = times.len();
    let k = ((train_frac * n as f64).round() as usize).clamp(1, n - 1);
    let test_cut = times[k];
    let train_times: Vec<_> = times.iter().copied().filter(|&t| t < test_cut).collect();
    if train_times.is_empty() {
        return Err(Error::Invalid(
            "degenerate timeline: no adoption precedes the test cut".into(),
        ));
    }
    let n_train = train_times.len();
    let n_valid = (valid_frac * n_train as f64).round() as usize;
    let validation_cut = if n_valid == 0 {
        test_cut
    } else {
        train_times[n_train - n_valid.min(n_train)]
    };
    if n_valid > 0 && train_times[0] >= validation_cut {
        return Err(Error::Invalid(
            "degenerate timeline: validation portion swallows all training adoptions".into(),
        ));
    }

    let portion = |keep: &dyn Fn(Timestamp) -> bool| -> Vec<UserHistory> {
        histories
            .iter()
            .map(|h| UserHistory {
                user_id: h.user_id,
                window: h.window,
                adoptions: h.adoptions.iter().copied().filter(|a| keep(a.time)).collect(),
            })
            .collect()
    };
    Ok(DatasetSplit {
        train: portion(&|t| t < validation_cut),
        validation: portion(&|t| t >= validation_cut && t < test_cut),
        test: portion(&|t| t >= test_cut),
        test_cut,
        validation_cut,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::cascade::CascadeEvent;
    use proptest::prelude::*;

    const DAY: i64 = SECONDS_PER_DAY;

    fn history(user: UserId, days: &[i64]) -> UserHistory {
        UserHistory {
            user_id: user,
            window: 0,
            adoptions: days
                .iter()
                .enumerate()
                .map(|(i, &d)| Adoption {
                    news: i as NewsIdx,
                    time: d * DAY,
                })
                .collect(),
        }
    }

    #[test]
    fn windows_follow_first_adoption() {
        let out = window_users(&[history(0, &[1, 50, 200])], 90, 20);
        assert_eq!(out.len(), 2);
        let days: Vec<Vec<i64>> = out
            .iter()
            .map(|h| h.adoptions.iter().map(|a| a.time / DAY).collect())
            .collect();
        assert_eq!(days, vec![vec![1, 50], vec![200]]);
        assert_eq!(out[0].window, 0);
        assert_eq!(out[1].window, 2);
    }

    #[test]
    fn windows_keep_most_recent() {
        let days: Vec<i64> = (0..25).collect();
        let out = window_users(&[history(3, &days)], 90, 20);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].len(), 20);
        assert_eq!(out[0].adoptions[0].time, 5 * DAY);
        assert_eq!(out[0].adoptions[19].time, 24 * DAY);
    }

    #[test]
    fn empty_input() {
        assert!(window_users(&[], 90, 20).is_empty());
    }

    #[test]
    fn collect_inverts_cascades() {
        let ev = |user, time| CascadeEvent { user, time };
        let cascades = vec![
            Cascade::new(10, vec![ev(0, 5), ev(1, 7)]).unwrap(),
            Cascade::new(11, vec![ev(1, 3), ev(2, 7)]).unwrap(),
            Cascade::new(12, vec![ev(2, 7)]).unwrap(),
        ];
        let hs = collect_histories(&cascades);
        assert_eq!(hs.len(), 3);
        let u1: Vec<_> = hs[1].adoptions.iter().map(|a| (a.news, a.time)).collect();
        assert_eq!(u1, vec![(1, 3), (0, 7)]);
        // user 2 adopted news 1 and 2 in the same second; the lower index stays
        assert_eq!(hs[2].adoptions, vec![Adoption { news: 1, time: 7 }]);
    }

    #[test]
    fn uniform_timeline_split() {
        let days: Vec<i64> = (0..100).collect();
        let s = split_timeline(&[history(0, &days)], 0.85, 0.10).unwrap();
        assert_eq!(count_adoptions(&s.test), 15);
        assert_eq!(count_adoptions(&s.validation), 9);
        assert_eq!(count_adoptions(&s.train), 76);
    }

    #[test]
    fn two_event_split() {
        let s = split_timeline(&[history(0, &[1, 2])], 0.5, 0.0).unwrap();
        assert_eq!(count_adoptions(&s.train), 1);
        assert_eq!(count_adoptions(&s.test), 1);
        assert_eq!(count_adoptions(&s.validation), 0);
    }

    #[test]
    fn degenerate_timeline_is_an_error() {
        assert!(split_timeline(&[history(0, &[4, 4, 4, 4])], 0.85, 0.1).is_err());
        assert!(split_timeline(&[history(0, &[1])], 0.5, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn windowing_partitions_adoptions(days in prop::collection::btree_set(0i64..2000, 0..80), window in 1u32..200) {
            let days: Vec<i64> = days.into_iter().collect();
            let h = history(9, &days);
            let out = window_users(std::slice::from_ref(&h), window, usize::MAX);
            let mut merged: Vec<Adoption> = out.iter().flat_map(|w| w.adoptions.iter().copied()).collect();
            merged.sort_by_key(|a| a.time);
            prop_assert_eq!(&merged, &h.adoptions);
            for w in &out {
                let span = w.adoptions.last().unwrap().time - w.adoptions[0].time;
                prop_assert!(span < window as i64 * DAY);
            }
        }

        #[test]
        fn split_respects_timeline(
            users in prop::collection::vec(prop::collection::btree_set(0i64..500, 1..30), 1..6),
            train_frac in 0.2f64..0.9,
            valid_frac in 0.0f64..0.5,
        ) {
            let hs: Vec<_> = users.iter().enumerate()
                .map(|(i, d)| history(i as UserId, &d.iter().copied().collect::<Vec<_>>()))
                .collect();
            if let Ok(s) = split_timeline(&hs, train_frac, valid_frac) {
                let max_of = |p: &[UserHistory]| p.iter().flat_map(|h| h.adoptions.iter().map(|a| a.time)).max();
                let min_of = |p: &[UserHistory]| p.iter().flat_map(|h| h.adoptions.iter().map(|a| a.time)).min();
                let train_max = max_of(&s.train).max(max_of(&s.validation));
                prop_assert!(train_max < min_of(&s.test));
                if let (Some(a), Some(b)) = (max_of(&s.train), min_of(&s.validation)) {
                    prop_assert!(a < b);
                }
                let total: usize = hs.iter().map(UserHistory::len).sum();
                prop_assert_eq!(count_adoptions(&s.train) + count_adoptions(&s.validation) + count_adoptions(&s.test), total);
            }
        }
    }
}
