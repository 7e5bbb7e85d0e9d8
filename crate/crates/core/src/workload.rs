//! Workload acquisition: file ingestion for routing tables, rule sets and
//! traces, plus seeded synthetic generators for all three.
//!
//! Generators are pure functions of their parameters. The trace generator
//! layers a Zipf-distributed reuse-distance model over a key universe:
//! each draw picks a depth into the stack of previously seen keys (most
//! recent first) and re-emits that key, or the next unseen key when the
//! depth falls beyond the stack. Small exponents approach uniform draws;
//! larger exponents concentrate traffic on recently used keys, which is
//! the locality that result caching exploits.

use std::collections::HashSet;
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dtree::{format_rule, parse_rule, FieldRange, Header, Rule};
use crate::pipeline::Key;
use crate::trie::{format_prefix, mask_to_len, parse_prefix, Prefix};

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {} malformed lines, first: line {} ({})", failures.len(), failures[0].0, failures[0].1)]
    Parse {
        path: String,
        failures: Vec<(usize, String)>,
    },
}

/// Outcome of loading a routing table: the deduplicated set plus counts.
#[derive(Debug, Clone)]
pub struct TableLoad {
    pub prefixes: Vec<Prefix>,
    pub lines: usize,
    /// Later occurrences of an already-seen (bits, length) pair.
    pub duplicates: usize,
}

fn read_lines(path: &Path) -> Result<Vec<String>, WorkloadError> {
    let text = std::fs::read_to_string(path).map_err(|source| WorkloadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(text.lines().map(|l| l.to_string()).collect())
}

fn is_skippable(line: &str) -> bool {
    let t = line.trim();
    t.is_empty() || t.starts_with('#')
}

/// Loads a routing table: one `<dotted-quad>/<len> <next_hop>` per line,
/// `#` comments and blank lines ignored, duplicates dropped (first wins)
/// and counted. Any malformed line fails the load with line numbers.
pub fn load_routing_table(path: &Path) -> Result<TableLoad, WorkloadError> {
    let lines = read_lines(path)?;
    let mut prefixes = Vec::new();
    let mut seen = HashSet::new();
    let mut duplicates = 0;
    let mut failures = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if is_skippable(line) {
            continue;
        }
        match parse_prefix(line, i + 1) {
            Ok(p) => {
                if seen.insert(p.route()) {
                    prefixes.push(p);
                } else {
                    duplicates += 1;
                }
            }
            Err(e) => failures.push((i + 1, e.to_string())),
        }
    }
    if !failures.is_empty() {
        return Err(WorkloadError::Parse {
            path: path.display().to_string(),
            failures,
        });
    }
    Ok(TableLoad {
        prefixes,
        lines: lines.len(),
        duplicates,
    })
}

pub fn write_routing_table(path: &Path, prefixes: &[Prefix]) -> Result<(), WorkloadError> {
    let body: String = prefixes
        .iter()
        .map(|p| format_prefix(p) + "\n")
        .collect();
    std::fs::write(path, body).map_err(|source| WorkloadError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Loads a ClassBench-style rule set; ids and priorities follow line
/// order of the surviving (non-comment) lines.
pub fn load_ruleset(path: &Path) -> Result<Vec<Rule>, WorkloadError> {
    let lines = read_lines(path)?;
    let mut rules = Vec::new();
    let mut failures = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if is_skippable(line) {
            continue;
        }
        match parse_rule(line, rules.len() as u32, i + 1) {
            Ok(r) => rules.push(r),
            Err(e) => failures.push((i + 1, e.to_string())),
        }
    }
    if !failures.is_empty() {
        return Err(WorkloadError::Parse {
            path: path.display().to_string(),
            failures,
        });
    }
    Ok(rules)
}

pub fn write_ruleset(path: &Path, rules: &[Rule]) -> Result<(), WorkloadError> {
    let body: String = rules.iter().map(|r| format_rule(r) + "\n").collect();
    std::fs::write(path, body).map_err(|source| WorkloadError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_ipv4(s: &str) -> Option<u32> {
    let mut bits = 0u32;
    let mut octets = 0;
    for part in s.split('.') {
        let v: u32 = part.parse().ok()?;
        if v > 255 || octets == 4 {
            return None;
        }
        bits = (bits << 8) | v;
        octets += 1;
    }
    (octets == 4).then_some(bits)
}

fn format_ipv4(v: u32) -> String {
    format!("{}.{}.{}.{}", v >> 24, (v >> 16) & 0xff, (v >> 8) & 0xff, v & 0xff)
}

/// Loads a trace: one key per line, either a dotted-quad destination or a
/// five-field `sip dip sport dport proto` tuple.
pub fn load_trace(path: &Path) -> Result<Vec<Key>, WorkloadError> {
    let lines = read_lines(path)?;
    let mut keys = Vec::new();
    let mut failures = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if is_skippable(line) {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let parsed = match fields.len() {
            1 => parse_ipv4(fields[0]).map(Key::Ip),
            5 => {
                let sip = parse_ipv4(fields[0]);
                let dip = parse_ipv4(fields[1]);
                let sp = fields[2].parse::<u16>().ok();
                let dp = fields[3].parse::<u16>().ok();
                let proto = fields[4].parse::<u8>().ok();
                match (sip, dip, sp, dp, proto) {
                    (Some(src_ip), Some(dst_ip), Some(src_port), Some(dst_port), Some(proto)) => {
                        Some(Key::FiveTuple(Header {
                            src_ip,
                            dst_ip,
                            src_port,
                            dst_port,
                            proto,
                        }))
                    }
                    _ => None,
                }
            }
            _ => None,
        };
        match parsed {
            Some(k) => keys.push(k),
            None => failures.push((i + 1, format!("malformed trace line {line:?}"))),
        }
    }
    if !failures.is_empty() {
        return Err(WorkloadError::Parse {
            path: path.display().to_string(),
            failures,
        });
    }
    Ok(keys)
}

pub fn format_key(key: &Key) -> String {
    match key {
        Key::Ip(v) => format_ipv4(*v),
        Key::FiveTuple(h) => format!(
            "{} {} {} {} {}",
            format_ipv4(h.src_ip),
            format_ipv4(h.dst_ip),
            h.src_port,
            h.dst_port,
            h.proto
        ),
    }
}

pub fn write_trace(path: &Path, keys: &[Key]) -> Result<(), WorkloadError> {
    let body: String = keys.iter().map(|k| format_key(k) + "\n").collect();
    std::fs::write(path, body).map_err(|source| WorkloadError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Synthetic routing-table shape. Prefixes longer than `block_bits` share
/// one of `block_count` address blocks, which concentrates the trie the
/// way allocated address space does: thin above the block boundary, broad
/// below it, with most mass between /16 and /24.
#[derive(Debug, Clone)]
pub struct TableGenParams {
    pub entries: usize,
    pub seed: u64,
    pub block_bits: u8,
    pub block_count: usize,
}

impl TableGenParams {
    pub fn new(entries: usize, seed: u64) -> Self {
        TableGenParams {
            entries,
            seed,
            block_bits: 12,
            block_count: 4096,
        }
    }
}

// (length, relative weight): concentrated at 16..=24 with /24 dominant
const LEN_WEIGHTS: [(u8, u32); 15] = [
    (8, 20),
    (12, 25),
    (14, 35),
    (15, 45),
    (16, 900),
    (17, 300),
    (18, 550),
    (19, 650),
    (20, 900),
    (21, 850),
    (22, 1200),
    (23, 1100),
    (24, 5200),
    (26, 15),
    (28, 10),
];

/// Generates `entries` unique prefixes. Deterministic per parameter set.
pub fn gen_routing_table(params: &TableGenParams) -> Vec<Prefix> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let total_weight: u32 = LEN_WEIGHTS.iter().map(|&(_, w)| w).sum();
    let blocks: Vec<u32> = (0..params.block_count)
        .map(|_| {
            if params.block_bits == 0 {
                0
            } else {
                rng.gen::<u32>() & (u32::MAX << (32 - params.block_bits as u32))
            }
        })
        .collect();
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(params.entries);
    while out.len() < params.entries {
        let mut pick = rng.gen_range(0..total_weight);
        let mut len = 24u8;
        for &(l, w) in &LEN_WEIGHTS {
            if pick < w {
                len = l;
                break;
            }
            pick -= w;
        }
        let bits = if len <= params.block_bits {
            mask_to_len(rng.gen::<u32>(), len)
        } else {
            let block = blocks[rng.gen_range(0..blocks.len())];
            mask_to_len(block | (rng.gen::<u32>() >> params.block_bits), len)
        };
        if seen.insert((bits, len)) {
            out.push(Prefix::new(bits, len, rng.gen_range(1..256)));
        }
    }
    out
}

/// Generates an access-control-flavored rule set: prefix blocks on the
/// address fields, wildcard/exact/service-range ports, a few protocols.
pub fn gen_ruleset(entries: usize, seed: u64) -> Vec<Rule> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ip_field = |rng: &mut ChaCha8Rng| -> FieldRange {
        let len = *[0u32, 8, 8, 16, 16, 16, 24, 24, 32]
            .choose(rng)
            .expect("non-empty");
        if len == 0 {
            return FieldRange::new(0, u32::MAX);
        }
        let mask = u32::MAX << (32 - len);
        let lo = rng.gen::<u32>() & mask;
        FieldRange::new(lo, lo | !mask)
    };
    let port_field = |rng: &mut ChaCha8Rng| -> FieldRange {
        match rng.gen_range(0..5) {
            0 | 1 => FieldRange::new(0, 65535),
            2 => {
                let p = rng.gen_range(0..1024u32);
                FieldRange::new(p, p)
            }
            3 => FieldRange::new(1024, 65535),
            _ => FieldRange::new(0, 1023),
        }
    };
    (0..entries as u32)
        .map(|id| {
            let proto = match rng.gen_range(0..4) {
                0 => FieldRange::new(6, 6),
                1 => FieldRange::new(17, 17),
                2 => FieldRange::new(0, 255),
                _ => FieldRange::new(1, 1),
            };
            Rule {
                id,
                priority: id,
                fields: [
                    ip_field(&mut rng),
                    ip_field(&mut rng),
                    port_field(&mut rng),
                    port_field(&mut rng),
                    proto,
                ],
                action: id,
            }
        })
        .collect()
}

/// Samples up to `count` distinct addresses that match some prefix of the
/// table (the matchable address space).
pub fn matchable_ips(prefixes: &[Prefix], count: usize, seed: u64) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(count);
    if prefixes.is_empty() {
        return out;
    }
    let mut attempts = 0usize;
    while out.len() < count && attempts < count.saturating_mul(40) + 64 {
        attempts += 1;
        let p = &prefixes[rng.gen_range(0..prefixes.len())];
        let low = if p.len == 32 { 0 } else { rng.gen::<u32>() >> p.len };
        let key = p.bits | low;
        if seen.insert(key) {
            out.push(key);
        }
    }
    out
}

/// Samples up to `count` distinct headers matching some rule.
pub fn matchable_headers(rules: &[Rule], count: usize, seed: u64) -> Vec<Header> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(count);
    if rules.is_empty() {
        return out;
    }
    let mut attempts = 0usize;
    while out.len() < count && attempts < count.saturating_mul(40) + 64 {
        attempts += 1;
        let r = &rules[rng.gen_range(0..rules.len())];
        let pick = |rng: &mut ChaCha8Rng, f: usize| -> u32 {
            let fr = &r.fields[f];
            (fr.lo as u64 + rng.gen_range(0..fr.span())) as u32
        };
        let h = Header {
            src_ip: pick(&mut rng, 0),
            dst_ip: pick(&mut rng, 1),
            src_port: pick(&mut rng, 2) as u16,
            dst_port: pick(&mut rng, 3) as u16,
            proto: pick(&mut rng, 4) as u8,
        };
        if seen.insert(h) {
            out.push(h);
        }
    }
    out
}

/// Zipf(alpha) sampler over ranks `1..=n` via an inverse-CDF table.
struct ZipfRanks {
    cumulative: Vec<f64>,
}

impl ZipfRanks {
    fn new(n: usize, alpha: f64) -> Self {
        let mut cumulative = Vec::with_capacity(n);
        let mut acc = 0.0;
        for r in 1..=n {
            acc += (r as f64).powf(-alpha);
            cumulative.push(acc);
        }
        ZipfRanks { cumulative }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        let total = *self.cumulative.last().expect("non-empty universe");
        let u = rng.gen::<f64>() * total;
        // first rank whose cumulative weight covers u
        1 + self.cumulative.partition_point(|&c| c < u)
    }
}

/// Generates a trace of `length` keys over `universe` with the
/// reuse-distance model described in the module docs. `zipf_alpha = 0`
/// gives near-uniform draws; larger values increase temporal locality.
pub fn gen_trace(universe: &[Key], length: usize, zipf_alpha: f64, seed: u64) -> Vec<Key> {
    if universe.is_empty() || length == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fresh: Vec<usize> = (0..universe.len()).collect();
    fresh.shuffle(&mut rng);
    let mut next_fresh = 0usize;
    // most recent at the back; depth 1 = most recent
    let mut stack: Vec<usize> = Vec::new();
    let zipf = ZipfRanks::new(universe.len(), zipf_alpha);
    let mut out = Vec::with_capacity(length);
    for _ in 0..length {
        let depth = zipf.sample(&mut rng);
        let idx = if depth <= stack.len() {
            stack.remove(stack.len() - depth)
        } else {
            let i = fresh[next_fresh];
            next_fresh += 1;
            i
        };
        stack.push(idx);
        out.push(universe[idx]);
    }
    out
}

/// Distinct keys over trace length; 0 for an empty trace.
pub fn unique_ratio(trace: &[Key]) -> f64 {
    if trace.is_empty() {
        return 0.0;
    }
    let distinct: HashSet<&Key> = trace.iter().collect();
    distinct.len() as f64 / trace.len() as f64
}

/// Searches for the largest Zipf exponent whose trace still reaches the
/// target unique-key ratio (the ratio falls as the exponent grows).
/// Returns the exponent and the ratio it achieved.
pub fn calibrate_trace_alpha(
    universe: &[Key],
    length: usize,
    target_ratio: f64,
    seed: u64,
) -> (f64, f64) {
    let goal = target_ratio * 0.94;
    let ratio_at = |alpha: f64| unique_ratio(&gen_trace(universe, length, alpha, seed));
    let (mut lo, mut hi) = (0.0f64, 4.0f64);
    if ratio_at(hi) >= goal {
        return (hi, ratio_at(hi));
    }
    for _ in 0..16 {
        let mid = 0.5 * (lo + hi);
        if ratio_at(mid) >= goal {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, ratio_at(lo))
}
