//! Immutable unary user–item network.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A user–item bipartite network with adjacency stored in both directions.
///
/// Users are `0..m`, items are `0..n`. Both adjacency tables are compressed
/// rows with ascending, duplicate-free neighbor lists, so `items_of_user(i)`
/// and `users_of_item(a)` are sorted slices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipartiteGraph {
    users: usize,
    items: usize,
    user_offsets: Vec<usize>,
    user_items: Vec<u32>,
    item_offsets: Vec<usize>,
    item_users: Vec<u32>,
}

/// Final resource (score) per item after diffusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceVector {
    pub values: Vec<f64>,
}

impl ResourceVector {
    pub fn zeros(n: usize) -> Self {
        Self {
            values: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Builds a graph over `users` x `items` from `(user, item)` links.
///
/// Duplicate links collapse to one. Any out-of-range endpoint is rejected and
/// the offending row (its position in `links`) is reported.
pub fn build_graph(users: usize, items: usize, links: &[(u32, u32)]) -> Result<BipartiteGraph> {
    for (row, &(u, i)) in links.iter().enumerate() {
        if u as usize >= users || i as usize >= items {
            return Err(Error::LinkOutOfRange {
                row,
                user: u,
                item: i,
                users,
                items,
            });
        }
    }
    let mut sorted = links.to_vec();
    sorted.sort_unstable();
    sorted.dedup();

    let mut user_offsets = vec![0usize; users + 1];
    let mut item_offsets = vec![0usize; items + 1];
    for &(u, i) in &sorted {
        user_offsets[u as usize + 1] += 1;
        item_offsets[i as usize + 1] += 1;
    }
    for k in 0..users {
        user_offsets[k + 1] += user_offsets[k];
    }
    for k in 0..items {
        item_offsets[k + 1] += item_offsets[k];
    }

    // `sorted` is ordered by (user, item), so user rows fill in ascending item order.
    let user_items: Vec<u32> = sorted.iter().map(|&(_, i)| i).collect();

    // Items are filled by scanning users in ascending order, which keeps each
    // item's user list sorted as well.
    let mut cursor = item_offsets.clone();
    let mut item_users = vec![0u32; sorted.len()];
    for &(u, i) in &sorted {
        let slot = &mut cursor[i as usize];
        item_users[*slot] = u;
        *slot += 1;
    }

    Ok(BipartiteGraph {
        users,
        items,
        user_offsets,
        user_items,
        item_offsets,
        item_users,
    })
}

impl BipartiteGraph {
    /// Number of users, `m`.
    pub fn num_users(&self) -> usize {
        self.users
    }

    /// Number of items, `n`.
    pub fn num_items(&self) -> usize {
        self.items
    }

    pub fn num_links(&self) -> usize {
        self.user_items.len()
    }

    pub fn items_of_user(&self, user: u32) -> &[u32] {
        let u = user as usize;
        &self.user_items[self.user_offsets[u]..self.user_offsets[u + 1]]
    }

    pub fn users_of_item(&self, item: u32) -> &[u32] {
        let i = item as usize;
        &self.item_users[self.item_offsets[i]..self.item_offsets[i + 1]]
    }

    pub fn user_degree(&self, user: u32) -> u32 {
        let u = user as usize;
        (self.user_offsets[u + 1] - self.user_offsets[u]) as u32
    }

    pub fn item_degree(&self, item: u32) -> u32 {
        let i = item as usize;
        (self.item_offsets[i + 1] - self.item_offsets[i]) as u32
    }

    pub fn user_degrees(&self) -> Vec<u32> {
        (0..self.users as u32)
            .map(|u| self.user_degree(u))
            .collect()
    }

    pub fn item_degrees(&self) -> Vec<u32> {
        (0..self.items as u32)
            .map(|i| self.item_degree(i))
            .collect()
    }

    pub fn has_link(&self, user: u32, item: u32) -> bool {
        self.items_of_user(user).binary_search(&item).is_ok()
    }

    /// All links in (user, item) order.
    pub fn links(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::with_capacity(self.num_links());
        for u in 0..self.users as u32 {
            out.extend(self.items_of_user(u).iter().map(|&i| (u, i)));
        }
        out
    }

    /// Smallest and largest degree among items with at least one link.
    pub fn linked_item_degree_range(&self) -> Option<(u32, u32)> {
        let mut range: Option<(u32, u32)> = None;
        for i in 0..self.items as u32 {
            let k = self.item_degree(i);
            if k == 0 {
                continue;
            }
            range = Some(match range {
                None => (k, k),
                Some((lo, hi)) => (lo.min(k), hi.max(k)),
            });
        }
        range
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn counts_degrees_on_both_sides() {
        let g = build_graph(2, 2, &[(0, 0), (0, 1), (1, 1)]).unwrap();
        assert_eq!(g.user_degrees(), vec![2, 1]);
        assert_eq!(g.item_degrees(), vec![1, 2]);
        assert_eq!(g.users_of_item(1), &[0, 1]);
    }

    #[test]
    fn duplicate_links_collapse() {
        let g = build_graph(1, 1, &[(0, 0), (0, 0)]).unwrap();
        assert_eq!(g.num_links(), 1);
        assert_eq!(g.user_degree(0), 1);
        assert_eq!(g.item_degree(0), 1);
    }

    #[test]
    fn out_of_range_link_reports_row() {
        let err = build_graph(2, 2, &[(0, 0), (1, 1), (0, 2)]).unwrap_err();
        match err {
            Error::LinkOutOfRange { row, item, .. } => {
                assert_eq!(row, 2);
                assert_eq!(item, 2);
            }
            other => panic!("unexpected error {other:?}"),
        }
        assert!(build_graph(2, 2, &[(2, 0)]).is_err());
    }

    #[test]
    fn degree_range_ignores_isolated_items() {
        let g = build_graph(3, 4, &[(0, 0), (1, 0), (2, 0), (0, 2)]).unwrap();
        assert_eq!(g.linked_item_degree_range(), Some((1, 3)));
        let empty = build_graph(1, 1, &[]).unwrap();
        assert_eq!(empty.linked_item_degree_range(), None);
    }

    fn arb_links() -> impl Strategy<Value = (usize, usize, Vec<(u32, u32)>)> {
        (1usize..15, 1usize..15).prop_flat_map(|(m, n)| {
            let links = proptest::collection::vec((0..m as u32, 0..n as u32), 0..80);
            (Just(m), Just(n), links)
        })
    }

    proptest! {
        #[test]
        fn adjacency_invariants_hold((m, n, links) in arb_links()) {
            let g = build_graph(m, n, &links).unwrap();
            let mut total_user = 0usize;
            for u in 0..m as u32 {
                let items = g.items_of_user(u);
                prop_assert!(items.windows(2).all(|w| w[0] < w[1]));
                prop_assert_eq!(g.user_degree(u) as usize, items.len());
                for &i in items {
                    prop_assert!(g.users_of_item(i).binary_search(&u).is_ok());
                }
                total_user += items.len();
            }
            let mut total_item = 0usize;
            for i in 0..n as u32 {
                let users = g.users_of_item(i);
                prop_assert!(users.windows(2).all(|w| w[0] < w[1]));
                prop_assert_eq!(g.item_degree(i) as usize, users.len());
                for &u in users {
                    prop_assert!(g.has_link(u, i));
                }
                total_item += users.len();
            }
            prop_assert_eq!(total_user, total_item);
        }

        #[test]
        fn rebuild_from_own_links_is_identity((m, n, links) in arb_links()) {
            let g = build_graph(m, n, &links).unwrap();
            let again = build_graph(m, n, &g.links()).unwrap();
            prop_assert_eq!(g, again);
        }
    }
}
