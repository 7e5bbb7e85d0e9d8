//! Decision trees over 5-tuple range rules, in the style of multi-field
//! cutting classifiers: each internal node partitions its region into
//! equal-width cells on one or two header fields, leaves hold buckets of
//! rule ids, and empty cells become null leaves.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::tree::{NodeKind, Payload, SearchTree};

pub const FIELD_COUNT: usize = 5;

/// Field order used across rules, headers and cut specs.
pub const FIELD_NAMES: [&str; FIELD_COUNT] = ["src_ip", "dst_ip", "src_port", "dst_port", "proto"];

const FIELD_MAX: [u32; FIELD_COUNT] = [u32::MAX, u32::MAX, 65535, 65535, 255];

/// Closed integer range for one rule field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FieldRange {
    pub lo: u32,
    pub hi: u32,
}

impl FieldRange {
    pub fn new(lo: u32, hi: u32) -> Self {
        FieldRange { lo, hi }
    }

    pub fn full(field: usize) -> Self {
        FieldRange {
            lo: 0,
            hi: FIELD_MAX[field],
        }
    }

    pub fn contains(&self, v: u32) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn overlaps(&self, other: &FieldRange) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    pub fn span(&self) -> u64 {
        self.hi as u64 - self.lo as u64 + 1
    }
}

/// A classification rule. `priority` equals the rule's position in its
/// source file; lower values win.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub id: u32,
    pub priority: u32,
    pub fields: [FieldRange; FIELD_COUNT],
    pub action: u32,
}

impl Rule {
    pub fn matches(&self, header: &Header) -> bool {
        self.fields
            .iter()
            .zip(header.values())
            .all(|(r, v)| r.contains(v))
    }
}

/// A 5-tuple packet header point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Header {
    pub src_ip: u32,
    pub dst_ip: u32,
    pub src_port: u16,
    pub dst_port: u16,
    pub proto: u8,
}

impl Header {
    pub fn values(&self) -> [u32; FIELD_COUNT] {
        [
            self.src_ip,
            self.dst_ip,
            self.src_port as u32,
            self.dst_port as u32,
            self.proto as u32,
        ]
    }
}

/// Hyper-rectangle covered by a tree node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub ranges: [FieldRange; FIELD_COUNT],
}

impl Region {
    pub fn full() -> Self {
        Region {
            ranges: [
                FieldRange::full(0),
                FieldRange::full(1),
                FieldRange::full(2),
                FieldRange::full(3),
                FieldRange::full(4),
            ],
        }
    }

    pub fn intersects(&self, rule: &Rule) -> bool {
        self.ranges
            .iter()
            .zip(rule.fields.iter())
            .all(|(a, b)| a.overlaps(b))
    }

    pub fn contains(&self, header: &Header) -> bool {
        self.ranges
            .iter()
            .zip(header.values())
            .all(|(r, v)| r.contains(v))
    }
}

/// One cut dimension: `parts` equal-width partitions of `[lo, lo+span)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CutDim {
    pub field: usize,
    pub parts: u32,
    pub lo: u32,
    pub span: u64,
}

impl CutDim {
    fn cell_of(&self, v: u32) -> u32 {
        debug_assert!(v as u64 >= self.lo as u64 && ((v - self.lo) as u64) < self.span);
        ((v - self.lo) as u64 * self.parts as u64 / self.span) as u32
    }

    /// Closed value range of cell `c`; empty cells (possible when
    /// `span < parts`) come back as `None`.
    fn cell_range(&self, c: u32) -> Option<FieldRange> {
        let lo = self.lo as u64 + div_ceil(c as u64 * self.span, self.parts as u64);
        let hi = self.lo as u64 + div_ceil((c as u64 + 1) * self.span, self.parts as u64) - 1;
        if hi < lo {
            None
        } else {
            Some(FieldRange::new(lo as u32, hi as u32))
        }
    }
}

fn div_ceil(a: u64, b: u64) -> u64 {
    (a + b - 1) / b
}

/// Branching function of an internal decision-tree node. Cells are laid
/// out row-major with the first dimension most significant, so a single
/// cell index addresses the node's child block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CutSpec {
    pub dims: Vec<CutDim>,
}

impl CutSpec {
    pub fn cell_count(&self) -> usize {
        self.dims.iter().map(|d| d.parts as usize).product()
    }

    pub fn cell_index(&self, header: &Header) -> usize {
        let values = header.values();
        let mut idx = 0usize;
        for d in &self.dims {
            idx = idx * d.parts as usize + d.cell_of(values[d.field]) as usize;
        }
        idx
    }

    /// Region of cell `cell` within `parent`; `None` when any dimension's
    /// slice is empty.
    pub fn cell_region(&self, parent: &Region, cell: usize) -> Option<Region> {
        let mut region = *parent;
        let mut rest = cell;
        let mut strides = vec![1usize; self.dims.len()];
        for i in (0..self.dims.len()).rev() {
            if i + 1 < self.dims.len() {
                strides[i] = strides[i + 1] * self.dims[i + 1].parts as usize;
            }
        }
        for (d, stride) in self.dims.iter().zip(strides) {
            let c = (rest / stride) as u32;
            rest %= stride;
            region.ranges[d.field] = d.cell_range(c)?;
        }
        Some(region)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RuleParseError {
    #[error("line {line}: expected `@sip/len dip/len splo:sphi dplo:dphi proto/mask`, got {got:?}")]
    Shape { line: usize, got: String },
    #[error("line {line}: malformed field {field}: {got:?}")]
    Field {
        line: usize,
        field: &'static str,
        got: String,
    },
    #[error("line {line}: inverted range {lo}:{hi}")]
    InvertedRange { line: usize, lo: u32, hi: u32 },
}

fn parse_ip_prefix(tok: &str, line: usize, field: &'static str) -> Result<FieldRange, RuleParseError> {
    let err = || RuleParseError::Field {
        line,
        field,
        got: tok.to_string(),
    };
    let (addr, len) = tok.split_once('/').ok_or_else(err)?;
    let len: u32 = len.parse().map_err(|_| err())?;
    if len > 32 {
        return Err(err());
    }
    let mut bits: u32 = 0;
    let mut octets = 0;
    for part in addr.split('.') {
        let v: u32 = part.parse().map_err(|_| err())?;
        if v > 255 || octets == 4 {
            return Err(err());
        }
        bits = (bits << 8) | v;
        octets += 1;
    }
    if octets != 4 {
        return Err(err());
    }
    if len == 0 {
        return Ok(FieldRange::new(0, u32::MAX));
    }
    let mask = u32::MAX << (32 - len);
    let lo = bits & mask;
    Ok(FieldRange::new(lo, lo | !mask))
}

/// Parses one ClassBench-style rule line. Trailing extra fields (e.g. TCP
/// flag masks) are ignored; rule id and priority come from the caller.
pub fn parse_rule(text: &str, id: u32, line: usize) -> Result<Rule, RuleParseError> {
    let text = text.trim();
    let body = text.strip_prefix('@').unwrap_or(text);
    // normalize "lo : hi" to "lo:hi" before tokenizing
    let joined = body.replace(" : ", ":").replace("\t:\t", ":");
    let toks: Vec<&str> = joined.split_whitespace().collect();
    if toks.len() < 5 {
        return Err(RuleParseError::Shape {
            line,
            got: text.to_string(),
        });
    }
    let src_ip = parse_ip_prefix(toks[0], line, "src_ip")?;
    let dst_ip = parse_ip_prefix(toks[1], line, "dst_ip")?;
    let parse_ports = |tok: &str, field: &'static str| -> Result<FieldRange, RuleParseError> {
        let err = || RuleParseError::Field {
            line,
            field,
            got: tok.to_string(),
        };
        let (lo, hi) = tok.split_once(':').ok_or_else(err)?;
        let lo: u32 = lo.trim().parse().map_err(|_| err())?;
        let hi: u32 = hi.trim().parse().map_err(|_| err())?;
        if lo > hi {
            return Err(RuleParseError::InvertedRange { line, lo, hi });
        }
        if hi > 65535 {
            return Err(err());
        }
        Ok(FieldRange::new(lo, hi))
    };
    let src_port = parse_ports(toks[2], "src_port")?;
    let dst_port = parse_ports(toks[3], "dst_port")?;
    let proto_tok = toks[4];
    let perr = || RuleParseError::Field {
        line,
        field: "proto",
        got: proto_tok.to_string(),
    };
    let (v, mask) = proto_tok.split_once('/').ok_or_else(perr)?;
    let parse_hex = |s: &str| -> Result<u32, RuleParseError> {
        let s = s.trim();
        let digits = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X"));
        match digits {
            Some(d) => u32::from_str_radix(d, 16).map_err(|_| perr()),
            None => s.parse().map_err(|_| perr()),
        }
    };
    let v = parse_hex(v)?;
    let mask = parse_hex(mask)?;
    if v > 255 || mask > 255 {
        return Err(perr());
    }
    let proto = if mask == 0 {
        FieldRange::new(0, 255)
    } else {
        FieldRange::new(v, v)
    };
    Ok(Rule {
        id,
        priority: id,
        fields: [src_ip, dst_ip, src_port, dst_port, proto],
        action: id,
    })
}

/// Renders a rule back into the ClassBench line format.
pub fn format_rule(rule: &Rule) -> String {
    let ip = |r: &FieldRange| -> String {
        // width of the covered block decides the printed prefix length
        let span = r.span();
        let len = 32 - span.trailing_zeros().min(32);
        let b = r.lo;
        format!(
            "{}.{}.{}.{}/{}",
            b >> 24,
            (b >> 16) & 0xff,
            (b >> 8) & 0xff,
            b & 0xff,
            len
        )
    };
    let proto = &rule.fields[4];
    let proto_s = if proto.lo == 0 && proto.hi == 255 {
        "0x00/0x00".to_string()
    } else {
        format!("{:#04x}/0xFF", proto.lo)
    };
    format!(
        "@{}\t{}\t{} : {}\t{} : {}\t{}",
        ip(&rule.fields[0]),
        ip(&rule.fields[1]),
        rule.fields[2].lo,
        rule.fields[2].hi,
        rule.fields[3].lo,
        rule.fields[3].hi,
        proto_s
    )
}

/// Builder knobs. `space_factor` is accepted for interface compatibility
/// with the usual parameterization but this simplified builder bounds
/// growth by `max_cut_fanout` alone.
#[derive(Debug, Clone)]
pub struct HyperCutsParams {
    pub bucket_capacity: usize,
    pub max_cut_fanout: usize,
    pub space_factor: f64,
}

impl Default for HyperCutsParams {
    fn default() -> Self {
        HyperCutsParams {
            bucket_capacity: 16,
            max_cut_fanout: 16,
            space_factor: 1.0,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DTreeBuildError {
    #[error("rule set is empty")]
    EmptyRuleSet,
    #[error("bucket capacity and cut fanout must be at least 1 and 2")]
    BadParams,
}

/// A built classifier: the tree plus the rules its buckets refer to.
#[derive(Debug, Clone)]
pub struct DecisionTree {
    pub tree: SearchTree,
    pub rules: Vec<Rule>,
}

/// Picks the cut for one node: fields ranked by distinct clamped rule
/// endpoints, partition counts grown while the mean child rule count keeps
/// improving and the fanout cap allows.
fn choose_cut(rules: &[Rule], idx: &[u32], region: &Region, params: &HyperCutsParams) -> Option<CutSpec> {
    let mut endpoint_counts = [0usize; FIELD_COUNT];
    for f in 0..FIELD_COUNT {
        if region.ranges[f].span() < 2 {
            continue;
        }
        let mut endpoints = BTreeSet::new();
        for &r in idx {
            let rr = &rules[r as usize].fields[f];
            endpoints.insert(rr.lo.max(region.ranges[f].lo));
            endpoints.insert(rr.hi.min(region.ranges[f].hi));
        }
        endpoint_counts[f] = endpoints.len();
    }
    let cuttable: Vec<usize> = (0..FIELD_COUNT)
        .filter(|&f| endpoint_counts[f] >= 2)
        .collect();
    if cuttable.is_empty() {
        return None;
    }
    let mean = cuttable.iter().map(|&f| endpoint_counts[f]).sum::<usize>() as f64
        / cuttable.len() as f64;
    let mut chosen: Vec<usize> = cuttable
        .iter()
        .copied()
        .filter(|&f| endpoint_counts[f] as f64 >= mean)
        .collect();
    chosen.sort_by_key(|&f| (usize::MAX - endpoint_counts[f], f));
    chosen.truncate(2);

    let mut parts: Vec<u32> = vec![1; chosen.len()];
    // cost of a candidate = (sum of child rule counts, cell count);
    // compared as exact rationals
    let evaluate = |parts: &[u32]| -> (u64, u64) {
        let dims: Vec<CutDim> = chosen
            .iter()
            .zip(parts)
            .filter(|(_, &p)| p > 1)
            .map(|(&f, &p)| CutDim {
                field: f,
                parts: p,
                lo: region.ranges[f].lo,
                span: region.ranges[f].span(),
            })
            .collect();
        if dims.is_empty() {
            return (idx.len() as u64, 1);
        }
        let spec = CutSpec { dims };
        let cells = spec.cell_count();
        let mut total = 0u64;
        for c in 0..cells {
            if let Some(sub) = spec.cell_region(region, c) {
                total += idx
                    .iter()
                    .filter(|&&r| sub.intersects(&rules[r as usize]))
                    .count() as u64;
            }
        }
        (total, cells as u64)
    };

    let (mut best_total, mut best_cells) = evaluate(&parts);
    loop {
        let mut improved: Option<(usize, u64, u64)> = None;
        for (i, &f) in chosen.iter().enumerate() {
            let doubled = parts[i] * 2;
            let fanout: u64 = parts
                .iter()
                .enumerate()
                .map(|(j, &p)| if j == i { doubled as u64 } else { p as u64 })
                .product();
            if fanout > params.max_cut_fanout as u64 || doubled as u64 > region.ranges[f].span() {
                continue;
            }
            let mut cand = parts.clone();
            cand[i] = doubled;
            let (total, cells) = evaluate(&cand);
            // total/cells < best/bcells, cross-multiplied
            let beats_current = (total as u128) * (best_cells as u128)
                < (best_total as u128) * (cells as u128);
            let beats_other = match improved {
                Some((_, t, c)) => {
                    (total as u128) * (c as u128) < (t as u128) * (cells as u128)
                }
                None => true,
            };
            if beats_current && beats_other {
                improved = Some((i, total, cells));
            }
        }
        match improved {
            Some((i, total, cells)) => {
                parts[i] *= 2;
                best_total = total;
                best_cells = cells;
            }
            None => break,
        }
    }
    if best_cells <= 1 {
        return None;
    }
    let dims: Vec<CutDim> = chosen
        .iter()
        .zip(&parts)
        .filter(|(_, &p)| p > 1)
        .map(|(&f, &p)| CutDim {
            field: f,
            parts: p,
            lo: region.ranges[f].lo,
            span: region.ranges[f].span(),
        })
        .collect();
    Some(CutSpec { dims })
}

/// Builds a decision tree over `rules`. Every leaf bucket holds exactly
/// the rules intersecting the leaf's region, in priority order; cells with
/// no intersecting rule become null leaves. A bucket may exceed
/// `bucket_capacity` only when no cut reduces it.
pub fn build_hypercuts(
    rules: &[Rule],
    params: &HyperCutsParams,
) -> Result<DecisionTree, DTreeBuildError> {
    if rules.is_empty() {
        return Err(DTreeBuildError::EmptyRuleSet);
    }
    if params.bucket_capacity < 1 || params.max_cut_fanout < 2 {
        return Err(DTreeBuildError::BadParams);
    }
    let mut sorted: Vec<Rule> = rules.to_vec();
    sorted.sort_by_key(|r| r.priority);

    let mut tree = SearchTree::with_root(NodeKind::Leaf);
    let all: Vec<u32> = (0..sorted.len() as u32).collect();
    // (node, region, rule indices into `sorted`)
    let mut work = vec![(tree.root(), Region::full(), all)];
    while let Some((node, region, idx)) = work.pop() {
        let cut = if idx.len() <= params.bucket_capacity {
            None
        } else {
            choose_cut(&sorted, &idx, &region, params)
        };
        let cut = match cut {
            Some(c) => c,
            None => {
                tree.node_mut(node).kind = NodeKind::Leaf;
                tree.node_mut(node).payload =
                    Payload::Rules(idx.iter().map(|&r| sorted[r as usize].id).collect());
                continue;
            }
        };
        let cells = cut.cell_count();
        let mut child_sets: Vec<Vec<u32>> = Vec::with_capacity(cells);
        let mut child_regions: Vec<Option<Region>> = Vec::with_capacity(cells);
        let mut all_stuck = true;
        for c in 0..cells {
            match cut.cell_region(&region, c) {
                Some(sub) => {
                    let set: Vec<u32> = idx
                        .iter()
                        .copied()
                        .filter(|&r| sub.intersects(&sorted[r as usize]))
                        .collect();
                    if !set.is_empty() && set.len() < idx.len() {
                        all_stuck = false;
                    }
                    child_sets.push(set);
                    child_regions.push(Some(sub));
                }
                None => {
                    child_sets.push(Vec::new());
                    child_regions.push(None);
                }
            }
        }
        if all_stuck {
            // every populated cell replicates the whole set; cutting
            // further cannot shrink any bucket
            tree.node_mut(node).kind = NodeKind::Leaf;
            tree.node_mut(node).payload =
                Payload::Rules(idx.iter().map(|&r| sorted[r as usize].id).collect());
            continue;
        }
        tree.node_mut(node).kind = NodeKind::Internal;
        tree.node_mut(node).cut = Some(cut);
        for (c, (set, sub)) in child_sets.into_iter().zip(child_regions).enumerate() {
            if set.is_empty() {
                tree.add_child(node, c, NodeKind::Null);
            } else {
                let child = tree.add_child(node, c, NodeKind::Leaf);
                work.push((child, sub.unwrap(), set));
            }
        }
    }
    tree.refresh_levels();
    Ok(DecisionTree {
        tree,
        rules: sorted,
    })
}

impl DecisionTree {
    pub fn rule(&self, id: u32) -> &Rule {
        self.rules
            .iter()
            .find(|r| r.id == id)
            .expect("bucket refers to a known rule")
    }
}

/// Walks the tree for `header` and returns the id of the highest-priority
/// matching rule in the reached bucket, or `None` at a null leaf or when
/// nothing in the bucket matches.
pub fn classify(dt: &DecisionTree, header: &Header) -> Option<u32> {
    let tree = &dt.tree;
    let mut at = tree.root();
    loop {
        let node = tree.node(at);
        match node.kind {
            NodeKind::Null => return None,
            NodeKind::Leaf => {
                let ids = match &node.payload {
                    Payload::Rules(ids) => ids,
                    _ => return None,
                };
                return ids
                    .iter()
                    .copied()
                    .find(|&id| dt.rule(id).matches(header));
            }
            NodeKind::Internal => {
                let cut = node.cut.as_ref().expect("internal dtree node has a cut");
                let cell = cut.cell_index(header);
                at = node.children[cell].expect("dense child block");
            }
        }
    }
}

/// Reference classifier: scans rules in priority order, first full match
/// wins.
pub fn classify_oracle(rules: &[Rule], header: &Header) -> Option<u32> {
    rules
        .iter()
        .filter(|r| r.matches(header))
        .min_by_key(|r| r.priority)
        .map(|r| r.id)
}
