//! Uni-bit tries over IP prefixes: construction, leaf-pushing and
//! longest-prefix-match reference lookups.
//!
//! Keys and prefixes are stored left-aligned in a `u32`: bit `i` of a key
//! (0 = most significant) lives at machine bit `31 - i`. A runtime key
//! width between 1 and 32 bounds prefix lengths, which lets tests run
//! exhaustively over 8- or 16-bit universes while production inputs use
//! the full 32 bits.

use std::collections::HashMap;

use thiserror::Error;

use crate::tree::{NodeKind, Payload, SearchTree};

/// A routing entry: prefix bits, significant length and a next-hop id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Prefix {
    /// Prefix bits, left-aligned; bits beyond `len` are zero.
    pub bits: u32,
    pub len: u8,
    pub next_hop: u32,
}

impl Prefix {
    pub fn new(bits: u32, len: u8, next_hop: u32) -> Self {
        Prefix {
            bits: mask_to_len(bits, len),
            len,
            next_hop,
        }
    }

    /// True when the top `len` bits of `key` equal this prefix.
    pub fn matches(&self, key: u32) -> bool {
        self.len == 0 || (key ^ self.bits) >> (32 - self.len as u32) == 0
    }

    /// Identity of the prefix independent of its next hop.
    pub fn route(&self) -> (u32, u8) {
        (self.bits, self.len)
    }
}

/// Zeroes every bit of `bits` below the first `len`.
pub fn mask_to_len(bits: u32, len: u8) -> u32 {
    if len == 0 {
        0
    } else {
        bits & (u32::MAX << (32 - len as u32))
    }
}

/// Bit `i` (0 = most significant) of a left-aligned key.
#[inline]
pub fn key_bit(key: u32, i: usize) -> usize {
    ((key >> (31 - i)) & 1) as usize
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PrefixParseError {
    #[error("line {line}: expected `<addr>/<len> <next_hop>` or `<bits>* <next_hop>`, got {got:?}")]
    Shape { line: usize, got: String },
    #[error("line {line}: malformed address {got:?}")]
    Address { line: usize, got: String },
    #[error("line {line}: prefix length {len} exceeds 32")]
    Length { line: usize, len: u32 },
    #[error("line {line}: malformed next hop {got:?}")]
    NextHop { line: usize, got: String },
}

/// Parses one routing-table line, either `a.b.c.d/len hop` or a bit-string
/// form like `010* 3`. `line` is only used for error reporting.
pub fn parse_prefix(text: &str, line: usize) -> Result<Prefix, PrefixParseError> {
    let mut fields = text.split_whitespace();
    let (route, hop) = match (fields.next(), fields.next(), fields.next()) {
        (Some(r), Some(h), None) => (r, h),
        _ => {
            return Err(PrefixParseError::Shape {
                line,
                got: text.to_string(),
            })
        }
    };
    let next_hop = hop
        .parse::<u32>()
        .map_err(|_| PrefixParseError::NextHop {
            line,
            got: hop.to_string(),
        })?;

    if let Some(stripped) = route.strip_suffix('*') {
        // bit-string form; `*` alone is the default route
        let mut bits = 0u32;
        if stripped.len() > 32 {
            return Err(PrefixParseError::Length {
                line,
                len: stripped.len() as u32,
            });
        }
        for (i, ch) in stripped.chars().enumerate() {
            match ch {
                '0' => {}
                '1' => bits |= 1 << (31 - i),
                _ => {
                    return Err(PrefixParseError::Address {
                        line,
                        got: route.to_string(),
                    })
                }
            }
        }
        return Ok(Prefix::new(bits, stripped.len() as u8, next_hop));
    }

    let (addr, len) = route.split_once('/').ok_or_else(|| PrefixParseError::Shape {
        line,
        got: text.to_string(),
    })?;
    let len: u32 = len.parse().map_err(|_| PrefixParseError::Address {
        line,
        got: route.to_string(),
    })?;
    if len > 32 {
        return Err(PrefixParseError::Length { line, len });
    }
    let mut bits = 0u32;
    let mut octets = 0;
    for part in addr.split('.') {
        let v: u32 = part.parse().map_err(|_| PrefixParseError::Address {
            line,
            got: route.to_string(),
        })?;
        if v > 255 || octets == 4 {
            return Err(PrefixParseError::Address {
                line,
                got: route.to_string(),
            });
        }
        bits = (bits << 8) | v;
        octets += 1;
    }
    if octets != 4 {
        return Err(PrefixParseError::Address {
            line,
            got: route.to_string(),
        });
    }
    Ok(Prefix::new(bits, len as u8, next_hop))
}

/// Renders a prefix in the dotted-quad table format.
pub fn format_prefix(p: &Prefix) -> String {
    let b = p.bits;
    format!(
        "{}.{}.{}.{}/{} {}",
        b >> 24,
        (b >> 16) & 0xff,
        (b >> 8) & 0xff,
        b & 0xff,
        p.len,
        p.next_hop
    )
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TrieBuildError {
    #[error("duplicate prefix {bits:#010x}/{len}")]
    DuplicatePrefix { bits: u32, len: u8 },
    #[error("prefix length {len} exceeds key width {width}")]
    WidthExceeded { len: u8, width: u8 },
    #[error("key width {width} out of range 1..=32")]
    BadWidth { width: u8 },
}

/// Builds the uni-bit trie of a prefix set. Each prefix's payload sits on
/// the node at depth `len` along its bit path; internal path nodes are
/// created on demand and child cells stay empty where no prefix descends.
pub fn build_unibit_trie(prefixes: &[Prefix], key_width: u8) -> Result<SearchTree, TrieBuildError> {
    if key_width == 0 || key_width > 32 {
        return Err(TrieBuildError::BadWidth { width: key_width });
    }
    let mut tree = SearchTree::with_root(NodeKind::Leaf);
    let mut seen = HashMap::new();
    for p in prefixes {
        if p.len > key_width {
            return Err(TrieBuildError::WidthExceeded {
                len: p.len,
                width: key_width,
            });
        }
        if seen.insert(p.route(), p.next_hop).is_some() {
            return Err(TrieBuildError::DuplicatePrefix {
                bits: p.bits,
                len: p.len,
            });
        }
        let mut at = tree.root();
        for i in 0..p.len as usize {
            let bit = key_bit(p.bits, i);
            let next = tree
                .node(at)
                .children
                .get(bit)
                .copied()
                .flatten();
            at = match next {
                Some(c) => c,
                None => {
                    tree.node_mut(at).kind = NodeKind::Internal;
                    tree.add_child(at, bit, NodeKind::Leaf)
                }
            };
        }
        tree.node_mut(at).payload = Payload::NextHop(p.next_hop);
    }
    // ensure binary cell vectors on internal nodes
    for id in 0..tree.len() {
        if tree.node(id).kind == NodeKind::Internal && tree.node(id).children.len() < 2 {
            tree.node_mut(id).children.resize(2, None);
        }
    }
    tree.refresh_levels();
    Ok(tree)
}

/// Pushes stored prefixes down to the leaves. Every internal node of the
/// result has exactly two children and no payload; each leaf carries the
/// next hop inherited from its nearest ancestor-or-self prefix, or becomes
/// a [`NodeKind::Null`] leaf when nothing covers it.
pub fn leaf_push(tree: &SearchTree) -> SearchTree {
    let root_kind = if tree.node(tree.root()).is_terminal() {
        match tree.node(tree.root()).payload {
            Payload::None => NodeKind::Null,
            _ => NodeKind::Leaf,
        }
    } else {
        NodeKind::Internal
    };
    let mut out = SearchTree::with_root(root_kind);
    // stack of (source node, dest node, inherited hop)
    let mut stack = vec![(tree.root(), out.root(), None::<u32>)];
    while let Some((src, dst, inherited)) = stack.pop() {
        let node = tree.node(src);
        let hop = match node.payload {
            Payload::NextHop(h) => Some(h),
            _ => inherited,
        };
        if node.is_terminal() {
            out.node_mut(dst).payload = match hop {
                Some(h) => Payload::NextHop(h),
                None => Payload::None,
            };
            out.node_mut(dst).kind = if hop.is_some() {
                NodeKind::Leaf
            } else {
                NodeKind::Null
            };
            continue;
        }
        for bit in 0..2 {
            match node.children.get(bit).copied().flatten() {
                Some(child) => {
                    let kind = if tree.node(child).is_terminal() {
                        NodeKind::Leaf
                    } else {
                        NodeKind::Internal
                    };
                    let new = out.add_child(dst, bit, kind);
                    stack.push((child, new, hop));
                }
                None => {
                    // synthesized leaf inheriting the covering prefix
                    let kind = if hop.is_some() {
                        NodeKind::Leaf
                    } else {
                        NodeKind::Null
                    };
                    let new = out.add_child(dst, bit, kind);
                    out.node_mut(new).payload = match hop {
                        Some(h) => Payload::NextHop(h),
                        None => Payload::None,
                    };
                }
            }
        }
    }
    out.refresh_levels();
    out
}

/// Walks a trie with `key`, returning the next hop of the reached leaf.
/// Works on both raw tries (tracking the best payload seen on the path)
/// and leaf-pushed tries (payloads only at leaves).
pub fn trie_lookup(tree: &SearchTree, key: u32) -> Option<u32> {
    let mut best = None;
    let mut at = tree.root();
    let mut bit_index = 0;
    loop {
        let node = tree.node(at);
        if let Payload::NextHop(h) = node.payload {
            best = Some(h);
        }
        if node.is_terminal() {
            return best;
        }
        debug_assert!(bit_index < 32, "trie deeper than key width");
        match node.children.get(key_bit(key, bit_index)).copied().flatten() {
            Some(c) => {
                at = c;
                bit_index += 1;
            }
            None => return best,
        }
    }
}

/// Reference longest-prefix match by linear scan: next hop of the longest
/// prefix whose bits match `key`, or `None`.
pub fn lpm_oracle(prefixes: &[Prefix], key: u32) -> Option<u32> {
    prefixes
        .iter()
        .filter(|p| p.matches(key))
        .max_by_key(|p| p.len)
        .map(|p| p.next_hop)
}

/// Length-bucketed LPM table. Answers the same query as [`lpm_oracle`]
/// from a hash map per prefix length, which keeps exhaustive cross-checks
/// over large tables affordable. Independent of the trie structures.
pub struct LpmTable {
    by_len: Vec<HashMap<u32, u32>>,
}

impl LpmTable {
    pub fn new(prefixes: &[Prefix]) -> Self {
        let mut by_len: Vec<HashMap<u32, u32>> = (0..33).map(|_| HashMap::new()).collect();
        for p in prefixes {
            by_len[p.len as usize].insert(p.bits, p.next_hop);
        }
        LpmTable { by_len }
    }

    pub fn lookup(&self, key: u32) -> Option<u32> {
        for len in (0..=32u8).rev() {
            let m = &self.by_len[len as usize];
            if m.is_empty() {
                continue;
            }
            if let Some(&hop) = m.get(&mask_to_len(key, len)) {
                return Some(hop);
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn p(text: &str) -> Prefix {
        parse_prefix(text, 0).unwrap()
    }

    #[test]
    fn parse_default_route() {
        let pref = p("0.0.0.0/0 1");
        assert_eq!(pref.len, 0);
        assert_eq!(pref.next_hop, 1);
        let star = p("* 1");
        assert_eq!(star, pref);
    }

    #[test]
    fn parse_bit_string() {
        let pref = p("010* 3");
        assert_eq!(pref.len, 3);
        assert_eq!(pref.next_hop, 3);
        assert_eq!(pref.bits >> 29, 0b010);
    }

    #[test]
    fn parse_dotted_quad() {
        let pref = p("192.168.0.0/16 7");
        assert_eq!(pref.len, 16);
        assert_eq!(pref.bits >> 16, 0b1100_0000_1010_1000);
        assert_eq!(pref.bits & 0xffff, 0);
    }

    #[test]
    fn parse_masks_to_length() {
        let pref = p("255.255.255.255/8 2");
        assert_eq!(pref.bits, 0xff00_0000);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(
            parse_prefix("10.0.0.0/40 1", 3),
            Err(PrefixParseError::Length { line: 3, .. })
        ));
        assert!(parse_prefix("10.0.0/8 1", 0).is_err());
        assert!(parse_prefix("abc* 1", 0).is_err());
        assert!(parse_prefix("10.0.0.0/8", 0).is_err());
        assert!(parse_prefix("10.0.0.0/8 x", 0).is_err());
    }

    #[test]
    fn build_single_wildcard() {
        let t = build_unibit_trie(&[p("* 1")], 32).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.node(t.root()).payload, Payload::NextHop(1));
    }

    #[test]
    fn build_path_for_010() {
        let t = build_unibit_trie(&[p("010* 3")], 32).unwrap();
        // left, right, left from the root
        let n1 = t.node(t.root()).children[0].unwrap();
        let n2 = t.node(n1).children[1].unwrap();
        let n3 = t.node(n2).children[0].unwrap();
        assert_eq!(t.node(n3).payload, Payload::NextHop(3));
        assert_eq!(t.node(n3).depth, 3);
    }

    #[test]
    fn build_rejects_duplicates() {
        let e = build_unibit_trie(&[p("010* 3"), p("010* 4")], 32);
        assert!(matches!(e, Err(TrieBuildError::DuplicatePrefix { .. })));
    }

    #[test]
    fn leaf_push_keeps_single_leaf() {
        let t = build_unibit_trie(&[p("* 1")], 32).unwrap();
        let lp = leaf_push(&t);
        assert_eq!(lp.len(), 1);
        assert_eq!(lp.node(lp.root()).payload, Payload::NextHop(1));
    }

    #[test]
    fn leaf_push_hand_expansion() {
        // {0* -> 1, 01* -> 2}: root internal; left child internal with
        // leaves hop 1 (00 path) and hop 2 (01 path); right child null.
        let t = build_unibit_trie(&[p("0* 1"), p("01* 2")], 32).unwrap();
        let lp = leaf_push(&t);
        let root = lp.node(lp.root());
        assert_eq!(root.kind, NodeKind::Internal);
        assert!(root.payload.is_none());
        let left = lp.node(root.children[0].unwrap());
        let right = lp.node(root.children[1].unwrap());
        assert_eq!(right.kind, NodeKind::Null);
        assert_eq!(left.kind, NodeKind::Internal);
        let l0 = lp.node(left.children[0].unwrap());
        let l1 = lp.node(left.children[1].unwrap());
        assert_eq!(l0.payload, Payload::NextHop(1));
        assert_eq!(l1.payload, Payload::NextHop(2));
    }

    #[test]
    fn leaf_push_internal_nodes_are_binary() {
        let prefixes = vec![p("0* 1"), p("0101* 2"), p("1100* 3"), p("* 9")];
        let lp = leaf_push(&build_unibit_trie(&prefixes, 32).unwrap());
        for id in 0..lp.len() {
            let n = lp.node(id);
            match n.kind {
                NodeKind::Internal => {
                    assert_eq!(n.child_ids().count(), 2);
                    assert!(n.payload.is_none());
                }
                _ => assert!(n.is_terminal()),
            }
        }
    }

    #[test]
    fn oracle_empty_and_longest_wins() {
        assert_eq!(lpm_oracle(&[], 0x1234_5678), None);
        let set = vec![p("0* 1"), p("01* 2")];
        assert_eq!(lpm_oracle(&set, 0b0100 << 28), Some(2));
        assert_eq!(lpm_oracle(&set, 0b0000 << 28), Some(1));
        assert_eq!(lpm_oracle(&set, 0b1000 << 28), None);
    }

    fn random_prefixes(n: usize, width: u8, seed: u64) -> Vec<Prefix> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        while out.len() < n {
            let len = rng.gen_range(0..=width);
            let bits = mask_to_len(rng.gen::<u32>(), len);
            if seen.insert((bits, len)) {
                out.push(Prefix::new(bits, len, rng.gen_range(1..1000)));
            }
        }
        out
    }

    #[test]
    fn walk_matches_oracle_exhaustive_8bit() {
        let set = random_prefixes(120, 8, 7);
        let raw = build_unibit_trie(&set, 8).unwrap();
        let pushed = leaf_push(&raw);
        assert!(pushed.len() >= raw.len());
        for key in 0u32..256 {
            let key = key << 24;
            let want = lpm_oracle(&set, key);
            assert_eq!(trie_lookup(&raw, key), want);
            assert_eq!(trie_lookup(&pushed, key), want);
        }
    }

    #[test]
    fn walk_matches_oracle_sampled_32bit() {
        let set = random_prefixes(1000, 32, 11);
        let pushed = leaf_push(&build_unibit_trie(&set, 32).unwrap());
        let table = LpmTable::new(&set);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..5000 {
            let key = rng.gen::<u32>();
            let want = lpm_oracle(&set, key);
            assert_eq!(trie_lookup(&pushed, key), want);
            assert_eq!(table.lookup(key), want);
        }
    }

    #[test]
    fn stats_shape_of_synthetic_table() {
        let set = random_prefixes(2000, 32, 5);
        let pushed = leaf_push(&build_unibit_trie(&set, 32).unwrap());
        let stats = pushed.stats();
        assert_eq!(stats.total_nodes, pushed.len());
        assert_eq!(stats.by_depth.iter().sum::<usize>(), pushed.len());
        assert_eq!(stats.by_height.iter().sum::<usize>(), pushed.len());
        assert!(stats.by_depth.len() <= 33);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(40))]
        #[test]
        fn lookup_equals_oracle_16bit(seed in 0u64..500, n in 1usize..80) {
            let set = random_prefixes(n, 16, seed);
            let pushed = leaf_push(&build_unibit_trie(&set, 16).unwrap());
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
            for _ in 0..256 {
                let key = (rng.gen::<u32>() & 0xffff) << 16;
                proptest::prop_assert_eq!(trie_lookup(&pushed, key), lpm_oracle(&set, key));
            }
        }
    }
}
