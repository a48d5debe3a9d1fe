//! Rating-file ingestion: parse, coarse-grain to unary links, optional
//! removal of the highest-degree items, and seeded train/probe splits.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{build_graph, BipartiteGraph};
use crate::{Error, Result};

/// One `(user, item, rating)` row of a raw dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionRecord {
    pub user: String,
    pub item: String,
    pub rating: i64,
}

/// Field separator of a ratings file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Delimiter {
    /// Any run of spaces or tabs.
    Whitespace,
    /// A literal separator such as `"\t"`, `","` or `"::"`.
    Literal(String),
}

/// Column layout and rating scale of a ratings file. Columns are 0-based;
/// columns beyond those named (timestamps and the like) are ignored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingFormat {
    pub delimiter: Delimiter,
    pub user_column: usize,
    pub item_column: usize,
    pub rating_column: usize,
    pub min_rating: i64,
    pub max_rating: i64,
    /// Number of leading lines to skip (header rows).
    #[serde(default)]
    pub skip_lines: usize,
}

impl RatingFormat {
    /// `user<TAB>item<TAB>rating<TAB>timestamp`, ratings 1–5.
    pub fn movielens_100k() -> Self {
        Self {
            delimiter: Delimiter::Literal("\t".into()),
            user_column: 0,
            item_column: 1,
            rating_column: 2,
            min_rating: 1,
            max_rating: 5,
            skip_lines: 0,
        }
    }

    /// Comma-separated `user,item,rating`, ratings 1–10.
    pub fn ten_level_csv() -> Self {
        Self {
            delimiter: Delimiter::Literal(",".into()),
            user_column: 0,
            item_column: 1,
            rating_column: 2,
            min_rating: 1,
            max_rating: 10,
            skip_lines: 0,
        }
    }

    fn fields<'a>(&self, line: &'a str) -> Vec<&'a str> {
        match &self.delimiter {
            Delimiter::Whitespace => line.split_whitespace().collect(),
            Delimiter::Literal(sep) => line.split(sep.as_str()).map(str::trim).collect(),
        }
    }
}

fn parse_rating(field: &str) -> Option<i64> {
    if let Ok(v) = field.parse::<i64>() {
        return Some(v);
    }
    // "4.0" style ratings
    let v: f64 = field.parse().ok()?;
    (v.fract() == 0.0 && v.is_finite()).then_some(v as i64)
}

/// Parses ratings in file order. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn parse_ratings<R: BufRead>(
    reader: R,
    format: &RatingFormat,
) -> Result<Vec<InteractionRecord>> {
    let needed = format
        .user_column
        .max(format.item_column)
        .max(format.rating_column);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        if idx < format.skip_lines || line.trim().is_empty() {
            continue;
        }
        let fields = format.fields(line.trim_end_matches(['\r', '\n']));
        if fields.len() <= needed {
            return Err(Error::Parse {
                line: line_no,
                reason: format!(
                    "expected at least {} fields, found {}",
                    needed + 1,
                    fields.len()
                ),
            });
        }
        let user = fields[format.user_column];
        let item = fields[format.item_column];
        if user.is_empty() || item.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                reason: "empty user or item field".into(),
            });
        }
        let raw = fields[format.rating_column];
        let rating = parse_rating(raw).ok_or_else(|| Error::Parse {
            line: line_no,
            reason: format!("rating {raw:?} is not an integer"),
        })?;
        if rating < format.min_rating || rating > format.max_rating {
            return Err(Error::RatingOutOfScale {
                line: line_no,
                rating,
                min: format.min_rating,
                max: format.max_rating,
            });
        }
        out.push(InteractionRecord {
            user: user.to_string(),
            item: item.to_string(),
            rating,
        });
    }
    Ok(out)
}

/// Keeps `(user, item)` pairs whose best rating is at least `threshold`.
///
/// Repeated ratings of the same pair collapse to their maximum first, so a
/// pair is kept if any of its ratings qualifies. Output follows the order in
/// which pairs first appear.
pub fn coarse_grain(records: &[InteractionRecord], threshold: i64) -> Vec<(String, String)> {
    let mut best: HashMap<(&str, &str), i64> = HashMap::new();
    let mut order: Vec<(&str, &str)> = Vec::new();
    for r in records {
        let key = (r.user.as_str(), r.item.as_str());
        match best.get_mut(&key) {
            Some(v) => *v = (*v).max(r.rating),
            None => {
                best.insert(key, r.rating);
                order.push(key);
            }
        }
    }
    order
        .into_iter()
        .filter(|k| best[k] >= threshold)
        .map(|(u, i)| (u.to_string(), i.to_string()))
        .collect()
}

/// Drops every link of the `count` highest-degree items.
///
/// Items are ranked by degree, descending, then by index, ascending; the
/// first `count` go. Asking for more items than the links mention is an
/// error.
pub fn remove_top_degree_items(links: &[(u32, u32)], count: usize) -> Result<Vec<(u32, u32)>> {
    let unique: HashSet<(u32, u32)> = links.iter().copied().collect();
    let mut degree: BTreeMap<u32, usize> = BTreeMap::new();
    for &(_, i) in &unique {
        *degree.entry(i).or_default() += 1;
    }
    if count > degree.len() {
        return Err(Error::InvalidParameter(format!(
            "cannot remove {count} items from a link set holding {}",
            degree.len()
        )));
    }
    let mut ranked: Vec<(u32, usize)> = degree.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let removed: HashSet<u32> = ranked[..count].iter().map(|&(i, _)| i).collect();
    Ok(links
        .iter()
        .copied()
        .filter(|(_, i)| !removed.contains(i))
        .collect())
}

/// Numeric tokens sort numerically, everything else lexicographically after them.
fn token_order(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

/// Unary links over dense indices, with the original dataset tokens kept
/// alongside (`users[i]` is the token of user `i`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub users: Vec<String>,
    pub items: Vec<String>,
    pub links: Vec<(u32, u32)>,
}

impl Dataset {
    /// Coarse-grains `records` at `threshold`. Every user and item named in
    /// the records is part of the universe, including those left without a
    /// qualifying link; indices follow token order.
    pub fn from_records(records: &[InteractionRecord], threshold: i64) -> Self {
        let links = coarse_grain(records, threshold);
        Self::with_universe(
            records.iter().map(|r| r.user.as_str()),
            records.iter().map(|r| r.item.as_str()),
            &links,
        )
    }

    /// Indexes token links. Only users and items that appear in some link
    /// are part of the universe.
    pub fn from_token_links(links: &[(String, String)]) -> Self {
        Self::with_universe(
            links.iter().map(|(u, _)| u.as_str()),
            links.iter().map(|(_, i)| i.as_str()),
            links,
        )
    }

    fn with_universe<'a>(
        users: impl Iterator<Item = &'a str>,
        items: impl Iterator<Item = &'a str>,
        links: &[(String, String)],
    ) -> Self {
        let mut users: Vec<&str> = users.collect();
        let mut items: Vec<&str> = items.collect();
        for v in [&mut users, &mut items] {
            v.sort_by(|a, b| token_order(a, b));
            v.dedup();
        }
        let user_idx: HashMap<&str, u32> = users
            .iter()
            .enumerate()
            .map(|(k, &u)| (u, k as u32))
            .collect();
        let item_idx: HashMap<&str, u32> = items
            .iter()
            .enumerate()
            .map(|(k, &i)| (i, k as u32))
            .collect();
        let mut indexed: Vec<(u32, u32)> = links
            .iter()
            .map(|(u, i)| (user_idx[u.as_str()], item_idx[i.as_str()]))
            .collect();
        indexed.sort_unstable();
        indexed.dedup();
        Self {
            users: users.into_iter().map(String::from).collect(),
            items: items.into_iter().map(String::from).collect(),
            links: indexed,
        }
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn graph(&self) -> Result<BipartiteGraph> {
        build_graph(self.num_users(), self.num_items(), &self.links)
    }

    /// Removes the `count` highest-degree items from the links and from the
    /// item universe, re-indexing the remaining items. Users are kept.
    pub fn without_top_items(&self, count: usize) -> Result<Self> {
        if count == 0 {
            return Ok(self.clone());
        }
        let kept = remove_top_degree_items(&self.links, count)?;
        let surviving: HashSet<u32> = kept.iter().map(|&(_, i)| i).collect();
        let dropped: HashSet<u32> = self
            .links
            .iter()
            .map(|&(_, i)| i)
            .filter(|i| !surviving.contains(i))
            .collect();
        let mut remap = vec![u32::MAX; self.items.len()];
        let mut items = Vec::with_capacity(self.items.len() - dropped.len());
        for (old, token) in self.items.iter().enumerate() {
            if !dropped.contains(&(old as u32)) {
                remap[old] = items.len() as u32;
                items.push(token.clone());
            }
        }
        let links = kept.iter().map(|&(u, i)| (u, remap[i as usize])).collect();
        Ok(Self {
            users: self.users.clone(),
            items,
            links,
        })
    }
}

/// A training graph plus the held-out probe links.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: BipartiteGraph,
    /// Held-out links, sorted by (user, item).
    pub probe: Vec<(u32, u32)>,
    pub seed: u64,
    pub test_fraction: f64,
}

/// Moves a uniform random `round(test_fraction · |links|)` of the links into
/// the probe set.
///
/// The universe stays `users x items`: users or items whose every link lands
/// in the probe remain with training degree 0.
pub fn split(
    users: usize,
    items: usize,
    links: &[(u32, u32)],
    test_fraction: f64,
    seed: u64,
) -> Result<SplitDataset> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "test fraction {test_fraction} outside (0, 1)"
        )));
    }
    let mut unique = links.to_vec();
    unique.sort_unstable();
    unique.dedup();
    let total = unique.len();
    let probe_len = (test_fraction * total as f64).round() as usize;
    if probe_len == 0 {
        return Err(Error::InvalidParameter(format!(
            "test fraction {test_fraction} of {total} links selects no probe link"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_probe = vec![false; total];
    for k in index::sample(&mut rng, total, probe_len) {
        in_probe[k] = true;
    }
    let mut train = Vec::with_capacity(total - probe_len);
    let mut probe = Vec::with_capacity(probe_len);
    for (link, held_out) in unique.into_iter().zip(in_probe) {
        if held_out {
            probe.push(link);
        } else {
            train.push(link);
        }
    }
    Ok(SplitDataset {
        train: build_graph(users, items, &train)?,
        probe,
        seed,
        test_fraction,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub links: usize,
    /// links / (users · items)
    pub sparsity: f64,
}

pub fn dataset_stats(g: &BipartiteGraph) -> DatasetStats {
    let cells = g.num_users() as f64 * g.num_items() as f64;
    DatasetStats {
        users: g.num_users(),
        items: g.num_items(),
        links: g.num_links(),
        sparsity: if cells > 0.0 {
            g.num_links() as f64 / cells
        } else {
            0.0
        },
    }
}

/// Writes `user<TAB>item` lines.
pub fn write_links<W: Write>(mut out: W, links: &[(u32, u32)]) -> Result<()> {
    for &(u, i) in links {
        writeln!(out, "{u}\t{i}")?;
    }
    Ok(())
}

/// Reads `user<TAB>item` lines written by [`write_links`].
pub fn read_links<R: BufRead>(reader: R) -> Result<Vec<(u32, u32)>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let parse = |f: Option<&str>| -> Result<u32> {
            f.and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Parse {
                    line: idx + 1,
                    reason: format!("expected `user<TAB>item`, got {line:?}"),
                })
        };
        let u = parse(parts.next())?;
        let i = parse(parts.next())?;
        out.push((u, i));
    }
    Ok(out)
}

/// Writes `index<TAB>token` lines for an id side table.
pub fn write_id_map<W: Write>(mut out: W, tokens: &[String]) -> Result<()> {
    for (k, t) in tokens.iter().enumerate() {
        writeln!(out, "{k}\t{t}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(u: &str, i: &str, r: i64) -> InteractionRecord {
        InteractionRecord {
            user: u.into(),
            item: i.into(),
            rating: r,
        }
    }

    #[test]
    fn parses_movielens_layout() {
        let text = "196\t242\t3\t881250949\n186\t302\t3\t891717742\n";
        let recs = parse_ratings(text.as_bytes(), &RatingFormat::movielens_100k()).unwrap();
        assert_eq!(recs[0], rec("196", "242", 3));
        assert_eq!(recs.len(), 2);
    }

    #[test]
    fn empty_stream_gives_no_records() {
        let recs = parse_ratings("".as_bytes(), &RatingFormat::movielens_100k()).unwrap();
        assert!(recs.is_empty());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = "1\t2\t3\t0\n\n1\t2\n";
        match parse_ratings(text.as_bytes(), &RatingFormat::movielens_100k()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let text = "1\t2\tfive\t0\n";
        assert!(matches!(
            parse_ratings(text.as_bytes(), &RatingFormat::movielens_100k()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn out_of_scale_rating_rejected() {
        let text = "1\t2\t3\t0\n1\t3\t6\t0\n";
        assert!(matches!(
            parse_ratings(text.as_bytes(), &RatingFormat::movielens_100k()),
            Err(Error::RatingOutOfScale {
                line: 2,
                rating: 6,
                ..
            })
        ));
    }

    #[test]
    fn ten_level_csv_with_header_and_float_ratings() {
        let mut fmt = RatingFormat::ten_level_csv();
        fmt.skip_lines = 1;
        let text = "user,item,rating\nu1, a, 7\nu2,b,10.0\n";
        let recs = parse_ratings(text.as_bytes(), &fmt).unwrap();
        assert_eq!(recs, vec![rec("u1", "a", 7), rec("u2", "b", 10)]);
        let ws = RatingFormat {
            delimiter: Delimiter::Whitespace,
            ..RatingFormat::movielens_100k()
        };
        let recs = parse_ratings("1  2 \t 4\n".as_bytes(), &ws).unwrap();
        assert_eq!(recs, vec![rec("1", "2", 4)]);
    }

    #[test]
    fn coarse_grain_thresholds() {
        let recs = vec![rec("u", "a", 2), rec("u", "b", 3), rec("u", "c", 5)];
        let kept = coarse_grain(&recs, 3);
        assert_eq!(
            kept,
            vec![
                ("u".to_string(), "b".to_string()),
                ("u".to_string(), "c".to_string())
            ]
        );
        let ten: Vec<_> = (1..=10).map(|r| rec("u", &r.to_string(), r)).collect();
        let kept = coarse_grain(&ten, 6);
        assert_eq!(kept.len(), 5);
        assert_eq!(kept[0].1, "6");
    }

    #[test]
    fn coarse_grain_uses_max_of_duplicates() {
        let recs = vec![rec("u", "a", 5), rec("u", "a", 1), rec("u", "a", 4)];
        assert_eq!(coarse_grain(&recs, 3).len(), 1);
        let recs = vec![rec("u", "a", 1), rec("u", "a", 2)];
        assert!(coarse_grain(&recs, 3).is_empty());
    }

    #[test]
    fn remove_top_items_cases() {
        let links = vec![(0, 0), (1, 0)];
        assert_eq!(remove_top_degree_items(&links, 0).unwrap(), links);

        let star: Vec<(u32, u32)> = (0..5).map(|u| (u, 0)).collect();
        assert!(remove_top_degree_items(&star, 1).unwrap().is_empty());
        assert!(remove_top_degree_items(&star, 2).is_err());

        // degrees: item0 = 9, item1 = 5, item2 = 5, item3 = 1
        let mut links = Vec::new();
        for (item, deg) in [(0u32, 9u32), (1, 5), (2, 5), (3, 1)] {
            links.extend((0..deg).map(|u| (u, item)));
        }
        let kept = remove_top_degree_items(&links, 2).unwrap();
        let items: HashSet<u32> = kept.iter().map(|&(_, i)| i).collect();
        assert_eq!(items, HashSet::from([2, 3]));
    }

    #[test]
    fn dataset_indexing_is_numeric_aware() {
        let links = vec![
            ("10".to_string(), "b".to_string()),
            ("9".to_string(), "a".to_string()),
            ("9".to_string(), "b".to_string()),
        ];
        let ds = Dataset::from_token_links(&links);
        assert_eq!(ds.users, vec!["9", "10"]);
        assert_eq!(ds.items, vec!["a", "b"]);
        assert_eq!(ds.links, vec![(0, 0), (0, 1), (1, 1)]);
        let trimmed = ds.without_top_items(1).unwrap();
        assert_eq!(trimmed.items, vec!["a"]);
        assert_eq!(trimmed.users, vec!["9", "10"]);
        assert_eq!(trimmed.links, vec![(0, 0)]);
    }

    #[test]
    fn universe_includes_items_without_qualifying_ratings() {
        let recs = vec![rec("1", "a", 5), rec("2", "b", 1), rec("2", "a", 4)];
        let ds = Dataset::from_records(&recs, 3);
        assert_eq!(ds.users, vec!["1", "2"]);
        assert_eq!(ds.items, vec!["a", "b"]);
        assert_eq!(ds.links, vec![(0, 0), (1, 0)]);
        let g = ds.graph().unwrap();
        assert_eq!(g.item_degree(1), 0);
    }

    #[test]
    fn split_sizes_and_determinism() {
        let links: Vec<(u32, u32)> = (0..10).map(|k| (k % 3, k)).collect();
        let s = split(3, 10, &links, 0.1, 42).unwrap();
        assert_eq!(s.probe.len(), 1);
        assert_eq!(s.train.num_links(), 9);
        assert_eq!(s, split(3, 10, &links, 0.1, 42).unwrap());
        assert!(split(3, 10, &links, 0.01, 42).is_err());
    }

    #[test]
    fn split_keeps_probe_only_entities() {
        let links = vec![(0, 0), (0, 1), (1, 2)];
        // One of three links held out; find a seed that removes (1, 2).
        let s = (0..100)
            .map(|seed| split(2, 3, &links, 0.4, seed).unwrap())
            .find(|s| s.probe == vec![(1, 2)])
            .unwrap();
        assert_eq!(s.train.num_users(), 2);
        assert_eq!(s.train.num_items(), 3);
        assert_eq!(s.train.user_degree(1), 0);
        assert_eq!(s.train.item_degree(2), 0);
    }

    #[test]
    fn stats() {
        let g = build_graph(2, 2, &[(0, 0), (1, 1)]).unwrap();
        assert_eq!(dataset_stats(&g).sparsity, 0.5);
    }

    #[test]
    fn link_file_round_trip() {
        let links = vec![(0, 3), (2, 1)];
        let mut buf = Vec::new();
        write_links(&mut buf, &links).unwrap();
        assert_eq!(buf, b"0\t3\n2\t1\n");
        assert_eq!(read_links(buf.as_slice()).unwrap(), links);
        assert!(read_links("0 x\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn split_partitions_links(
            links in proptest::collection::vec((0u32..20, 0u32..20), 10..120),
            fraction in 0.05f64..0.9,
            seed in any::<u64>(),
        ) {
            let mut unique = links.clone();
            unique.sort_unstable();
            unique.dedup();
            prop_assume!((fraction * unique.len() as f64).round() >= 1.0);
            let s = split(20, 20, &links, fraction, seed).unwrap();
            let mut all = s.train.links();
            prop_assert!(s.probe.iter().all(|&(u, i)| !s.train.has_link(u, i)));
            all.extend_from_slice(&s.probe);
            all.sort_unstable();
            prop_assert_eq!(all, unique.clone());
            prop_assert_eq!(s.probe.len(), (fraction * unique.len() as f64).round() as usize);
        }

        #[test]
        fn coarse_grain_is_threshold_monotone(
            ratings in proptest::collection::vec((0u8..6, 0u8..6, 1i64..=5), 0..60),
            t in 1i64..5,
        ) {
            let recs: Vec<_> = ratings
                .iter()
                .map(|&(u, i, r)| rec(&u.to_string(), &i.to_string(), r))
                .collect();
            let low: HashSet<_> = coarse_grain(&recs, t).into_iter().collect();
            let high: HashSet<_> = coarse_grain(&recs, t + 1).into_iter().collect();
            prop_assert!(high.is_subset(&low));
        }
    }
}
