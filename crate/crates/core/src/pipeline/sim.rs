//! Cycle-accurate model of the dual-entrance bidirectional linear
//! pipeline.
//!
//! Per cycle: occupants shift one stage along their direction (packets
//! leaving the far end complete), each entrance admits at most one queued
//! packet or scheduled write bubble, up to `input_width` trace arrivals
//! consult the cache and join their direction's queue, every occupied
//! stage performs its memory access (one forward and one reverse access
//! per stage at most — the dual-port discipline), and the output port
//! releases up to `input_width` finished packets.
//!
//! Packets ride the full pipeline regardless of where their walk
//! resolves, so pipe residency is exactly the stage count. Throughput is
//! measured over the span between the first and last output-port release,
//! which makes steady-state rates exact instead of diluted by fill and
//! drain.

use std::collections::{BTreeMap, VecDeque};

use crate::mapping::{Direction, SubtreeId};

use super::cache::LruCache;
use super::update::WriteBubble;
use super::{route, route_cell, step_entry, Key, PipelineError, PipelineImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueuePolicy {
    /// Arrivals beyond queue space hold the input stream back.
    Stall,
    /// Arrivals beyond queue space are discarded and counted.
    Drop,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    /// Parallel arrivals per cycle (the paper-style `P`).
    pub input_width: usize,
    /// Per-direction input queue capacity in packets (`Q`).
    pub queue_capacity: usize,
    /// Cache entries (`C`); 0 disables caching even when enabled.
    pub cache_capacity: usize,
    pub cache_enabled: bool,
    pub queue_policy: QueuePolicy,
    /// Hold completed packets until every earlier arrival has been
    /// released, restoring global input order at the output port.
    pub reorder_output: bool,
    /// Record per-cycle in-flight counts (costs memory on long runs).
    pub record_occupancy: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            input_width: 4,
            queue_capacity: 2,
            cache_capacity: 160,
            cache_enabled: true,
            queue_policy: QueuePolicy::Stall,
            reorder_output: true,
            record_occupancy: false,
        }
    }
}

/// Final state of one trace packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketOutcome {
    Delivered(Option<u32>),
    Dropped,
}

/// Arrival and release cycles of one packet (release = drop cycle for
/// dropped packets).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacketTiming {
    pub arrival: u64,
    pub release: u64,
}

/// Admission and completion cycles of one scheduled write bubble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BubbleTiming {
    pub admitted: u64,
    pub completed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimMetrics {
    pub cycles: u64,
    pub packets_in: u64,
    pub packets_out: u64,
    pub drops: u64,
    /// Arrival attempts deferred by a full queue under the stall policy.
    pub stalls: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub entered_forward: u64,
    pub entered_reverse: u64,
    /// Released packets whose sequence number preceded an earlier
    /// release; zero whenever reordering is on.
    pub order_violations: u64,
    /// Cycles where a stage saw more than one same-direction access;
    /// must stay zero.
    pub port_conflicts: u64,
    /// First-to-last release window.
    pub span_cycles: u64,
    /// `packets_out / span_cycles`.
    pub throughput_ppc: f64,
    /// Latency (release - arrival + 1) histogram.
    pub latency: BTreeMap<u64, u64>,
    /// Memory accesses per stage, `[forward, reverse]`.
    pub stage_busy: Vec<[u64; 2]>,
    /// `(cycle, forward in flight, reverse in flight)` when recorded.
    pub occupancy: Vec<(u64, usize, usize)>,
    /// Outcome per trace position.
    pub results: Vec<PacketOutcome>,
    /// Timing per trace position.
    pub packet_log: Vec<PacketTiming>,
    /// Timing per scheduled bubble, in schedule order.
    pub bubble_log: Vec<BubbleTiming>,
}

struct Packet {
    seq: usize,
    key: Key,
    skip: usize,
    addr: usize,
    consumed: usize,
    resolved: bool,
    result: Option<u32>,
    entered: u64,
    subtree: SubtreeId,
    /// Subtree update epoch at pipeline entry; a changed epoch at
    /// completion means an update overlapped this packet's flight and its
    /// result must not refill the cache.
    epoch_at_entry: u64,
}

enum Occupant {
    Packet(Packet),
    Bubble { schedule_idx: usize },
}

struct Lane {
    slots: Vec<Option<Occupant>>,
    queue: VecDeque<Packet>,
    /// Scheduled bubbles not yet admitted, front first.
    pending_bubbles: VecDeque<(u64, usize)>,
}

impl Lane {
    fn new(stages: usize) -> Self {
        Lane {
            slots: (0..stages).map(|_| None).collect(),
            queue: VecDeque::new(),
            pending_bubbles: VecDeque::new(),
        }
    }

    fn in_flight(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }
}

struct Done {
    seq: usize,
    result: Option<u32>,
    arrival: u64,
}

/// Runs the trace through the image with no updates scheduled.
pub fn simulate(
    image: &PipelineImage,
    trace: &[Key],
    config: &SimConfig,
) -> Result<SimMetrics, PipelineError> {
    let mut image = image.clone();
    run(&mut image, trace, &[], config)
}

/// Runs the trace while admitting the scheduled write bubbles. Each
/// schedule entry is `(no-earlier-than cycle, bubble)`; bubbles of one
/// direction are admitted in schedule order and take precedence over
/// packet admission for their entrance slot. The image is modified by the
/// bubbles' writes; callers keep their original.
pub fn simulate_with_updates(
    image: &PipelineImage,
    trace: &[Key],
    schedule: &[(u64, WriteBubble)],
    config: &SimConfig,
) -> Result<SimMetrics, PipelineError> {
    let mut image = image.clone();
    run(&mut image, trace, schedule, config)
}

fn run(
    image: &mut PipelineImage,
    trace: &[Key],
    schedule: &[(u64, WriteBubble)],
    config: &SimConfig,
) -> Result<SimMetrics, PipelineError> {
    if config.input_width == 0 {
        return Err(PipelineError::BadConfig {
            reason: "input width must be at least 1".into(),
        });
    }
    if config.queue_capacity == 0
        && config.queue_policy == QueuePolicy::Stall
        && !trace.is_empty()
    {
        return Err(PipelineError::BadConfig {
            reason: "stall policy needs queue capacity of at least 1".into(),
        });
    }
    if !schedule.windows(2).all(|w| w[0].0 <= w[1].0) {
        return Err(PipelineError::BadConfig {
            reason: "bubble schedule must be sorted by cycle".into(),
        });
    }
    for (_, b) in schedule {
        for (&stage, _) in &b.rows {
            if stage == 0 || stage > image.stage_count {
                return Err(PipelineError::BadConfig {
                    reason: format!("bubble {} targets stage {stage} out of range", b.id),
                });
            }
        }
    }

    let stage_count = image.stage_count;
    // install bubble rows into the per-stage tables
    for (_, b) in schedule {
        for (&stage, row) in &b.rows {
            image.bubble_tables[stage - 1].insert(b.id, row.clone());
        }
    }

    let mut fwd = Lane::new(stage_count);
    let mut rev = Lane::new(stage_count);
    for (i, (cycle, b)) in schedule.iter().enumerate() {
        match b.direction {
            Direction::Forward => fwd.pending_bubbles.push_back((*cycle, i)),
            Direction::Reverse => rev.pending_bubbles.push_back((*cycle, i)),
        }
    }

    let subtree_count = image.dit.len();
    let mut dirty: Vec<u32> = vec![0; subtree_count];
    let mut epoch: Vec<u64> = vec![0; subtree_count];

    let mut cache = LruCache::new(if config.cache_enabled {
        config.cache_capacity
    } else {
        0
    });

    let mut m = SimMetrics {
        cycles: 0,
        packets_in: 0,
        packets_out: 0,
        drops: 0,
        stalls: 0,
        cache_hits: 0,
        cache_misses: 0,
        entered_forward: 0,
        entered_reverse: 0,
        order_violations: 0,
        port_conflicts: 0,
        span_cycles: 0,
        throughput_ppc: 0.0,
        latency: BTreeMap::new(),
        stage_busy: vec![[0, 0]; stage_count],
        occupancy: Vec::new(),
        results: vec![PacketOutcome::Dropped; trace.len()],
        packet_log: vec![
            PacketTiming {
                arrival: 0,
                release: 0
            };
            trace.len()
        ],
        bubble_log: vec![
            BubbleTiming {
                admitted: 0,
                completed: 0
            };
            schedule.len()
        ],
    };

    let mut cursor = 0usize; // next trace index
    let mut done_pool: Vec<Done> = Vec::new();
    let mut reorder: BTreeMap<usize, Done> = BTreeMap::new();
    let mut completion_fifo: VecDeque<Done> = VecDeque::new();
    let mut next_release_seq = 0usize;
    let mut first_release: Option<u64> = None;
    let mut last_release: u64 = 0;
    let mut max_released_seq: Option<usize> = None;

    let budget = 8 * trace.len() as u64
        + 8 * schedule.len() as u64
        + 64 * stage_count as u64
        + 4096;
    let mut cycle: u64 = 0;

    loop {
        let idle = cursor >= trace.len()
            && fwd.queue.is_empty()
            && rev.queue.is_empty()
            && fwd.in_flight() == 0
            && rev.in_flight() == 0
            && fwd.pending_bubbles.is_empty()
            && rev.pending_bubbles.is_empty()
            && done_pool.is_empty()
            && reorder.is_empty()
            && completion_fifo.is_empty();
        if idle {
            break;
        }
        cycle += 1;
        if cycle > budget {
            return Err(PipelineError::Stuck { cycle });
        }

        // 1. shift: far-end occupants complete, the rest advance
        for (lane, dir) in [(&mut fwd, Direction::Forward), (&mut rev, Direction::Reverse)] {
            let exit_idx = match dir {
                Direction::Forward => stage_count - 1,
                Direction::Reverse => 0,
            };
            if let Some(occ) = lane.slots[exit_idx].take() {
                match occ {
                    Occupant::Packet(p) => {
                        debug_assert_eq!(cycle - p.entered, stage_count as u64);
                        let refill = dirty[p.subtree] == 0 && epoch[p.subtree] == p.epoch_at_entry;
                        if refill {
                            cache.insert(p.key, p.result);
                        }
                        done_pool.push(Done {
                            seq: p.seq,
                            result: p.result,
                            arrival: m.packet_log[p.seq].arrival,
                        });
                    }
                    Occupant::Bubble { schedule_idx } => {
                        let subtree = schedule[schedule_idx].1.subtree;
                        dirty[subtree] -= 1;
                        epoch[subtree] += 1;
                        m.bubble_log[schedule_idx].completed = cycle;
                    }
                }
            }
            match dir {
                Direction::Forward => {
                    for s in (0..stage_count - 1).rev() {
                        if lane.slots[s].is_some() {
                            lane.slots[s + 1] = lane.slots[s].take();
                        }
                    }
                }
                Direction::Reverse => {
                    for s in 1..stage_count {
                        if lane.slots[s].is_some() {
                            lane.slots[s - 1] = lane.slots[s].take();
                        }
                    }
                }
            }
        }

        // 2. admission: one occupant per entrance; bubbles first
        for (lane, dir) in [(&mut fwd, Direction::Forward), (&mut rev, Direction::Reverse)] {
            let entr = match dir {
                Direction::Forward => 0,
                Direction::Reverse => stage_count - 1,
            };
            debug_assert!(lane.slots[entr].is_none());
            if let Some(&(when, idx)) = lane.pending_bubbles.front() {
                if when <= cycle {
                    lane.pending_bubbles.pop_front();
                    let bubble = &schedule[idx].1;
                    dirty[bubble.subtree] += 1;
                    epoch[bubble.subtree] += 1;
                    let subtree = bubble.subtree;
                    cache.invalidate(|k| {
                        route_cell(&image.index, k)
                            .and_then(|c| image.index.cells().get(c).copied().flatten())
                            == Some(subtree)
                    });
                    m.bubble_log[idx].admitted = cycle;
                    lane.slots[entr] = Some(Occupant::Bubble { schedule_idx: idx });
                    continue;
                }
            }
            if let Some(mut p) = lane.queue.pop_front() {
                p.entered = cycle;
                p.epoch_at_entry = epoch[p.subtree];
                match dir {
                    Direction::Forward => m.entered_forward += 1,
                    Direction::Reverse => m.entered_reverse += 1,
                }
                lane.slots[entr] = Some(Occupant::Packet(p));
            }
        }

        // 3. intake: up to input_width arrivals, head-of-line order
        let mut taken = 0usize;
        while taken < config.input_width && cursor < trace.len() {
            let key = trace[cursor];
            let routed = route(image, &key);
            // cache consult happens before anything enters a queue
            if let Some(hit) = cache.get(&key) {
                m.cache_hits += 1;
                m.packets_in += 1;
                m.packet_log[cursor].arrival = cycle;
                done_pool.push(Done {
                    seq: cursor,
                    result: hit,
                    arrival: cycle,
                });
                cursor += 1;
                taken += 1;
                continue;
            }
            if config.cache_enabled && config.cache_capacity > 0 {
                m.cache_misses += 1;
            }
            match routed {
                None => {
                    // index answers immediately: no subtree to traverse
                    m.packets_in += 1;
                    m.packet_log[cursor].arrival = cycle;
                    cache.insert(key, None);
                    done_pool.push(Done {
                        seq: cursor,
                        result: None,
                        arrival: cycle,
                    });
                    cursor += 1;
                    taken += 1;
                }
                Some((subtree, dit)) => {
                    let lane = match dit.direction {
                        Direction::Forward => &mut fwd,
                        Direction::Reverse => &mut rev,
                    };
                    if lane.queue.len() >= config.queue_capacity {
                        match config.queue_policy {
                            QueuePolicy::Drop => {
                                m.packets_in += 1;
                                m.drops += 1;
                                m.packet_log[cursor].arrival = cycle;
                                m.packet_log[cursor].release = cycle;
                                m.results[cursor] = PacketOutcome::Dropped;
                                cursor += 1;
                                taken += 1;
                            }
                            QueuePolicy::Stall => {
                                m.stalls += 1;
                                break;
                            }
                        }
                        continue;
                    }
                    m.packets_in += 1;
                    m.packet_log[cursor].arrival = cycle;
                    lane.queue.push_back(Packet {
                        seq: cursor,
                        key,
                        skip: dit.distance,
                        addr: dit.addr,
                        consumed: image.initial_bits as usize,
                        resolved: false,
                        result: None,
                        entered: 0,
                        subtree,
                        epoch_at_entry: 0,
                    });
                    cursor += 1;
                    taken += 1;
                }
            }
        }

        // 4. stage operations: bubble writes first, then packet accesses
        for (lane, dir) in [(&mut fwd, Direction::Forward), (&mut rev, Direction::Reverse)] {
            for s in 0..stage_count {
                if let Some(Occupant::Bubble { schedule_idx }) = &lane.slots[s] {
                    let bubble = &schedule[*schedule_idx].1;
                    if let Some(row) = image.bubble_tables[s].get(&bubble.id).cloned() {
                        if row.write_enable {
                            for (i, e) in row.entries.iter().enumerate() {
                                let mem = &mut image.stages[s].entries;
                                let at = row.addr + i;
                                if at >= mem.len() {
                                    mem.resize(at + 1, super::Entry::Null);
                                }
                                mem[at] = e.clone();
                            }
                        }
                    }
                    let _ = dir;
                }
            }
        }
        if config.record_occupancy {
            m.occupancy.push((cycle, fwd.in_flight(), rev.in_flight()));
        }
        let mut access_this_cycle = vec![[0u32; 2]; stage_count];
        for (lane, dir) in [(&mut fwd, Direction::Forward), (&mut rev, Direction::Reverse)] {
            let di = match dir {
                Direction::Forward => 0,
                Direction::Reverse => 1,
            };
            for s in 0..stage_count {
                let occ = match &mut lane.slots[s] {
                    Some(Occupant::Packet(p)) => p,
                    _ => continue,
                };
                if occ.resolved {
                    continue;
                }
                if occ.skip > 0 {
                    occ.skip -= 1;
                    continue;
                }
                access_this_cycle[s][di] += 1;
                if access_this_cycle[s][di] > 1 {
                    m.port_conflicts += 1;
                }
                m.stage_busy[s][di] += 1;
                let entry = image.stages[s].entries[occ.addr].clone();
                match step_entry(image, &entry, &occ.key, s + 1, &mut occ.consumed, dir) {
                    Ok(result) => {
                        occ.resolved = true;
                        occ.result = result;
                    }
                    Err((next_stage, next_addr)) => {
                        // after the next shift the packet sits adjacent;
                        // the remaining gap becomes its skip budget
                        let next_adjacent = match dir {
                            Direction::Forward => s + 2,
                            Direction::Reverse => s,
                        };
                        occ.skip = next_stage.abs_diff(next_adjacent);
                        occ.addr = next_addr;
                    }
                }
            }
        }

        // 5. output port: up to input_width releases
        let mut release = |d: Done, m: &mut SimMetrics| {
            m.packets_out += 1;
            m.results[d.seq] = PacketOutcome::Delivered(d.result);
            m.packet_log[d.seq].release = cycle;
            *m.latency.entry(cycle - d.arrival + 1).or_insert(0) += 1;
            if let Some(prev) = max_released_seq {
                if d.seq < prev {
                    m.order_violations += 1;
                }
            }
            max_released_seq = Some(max_released_seq.map_or(d.seq, |p: usize| p.max(d.seq)));
            first_release.get_or_insert(cycle);
            last_release = cycle;
        };
        if config.reorder_output {
            for d in done_pool.drain(..) {
                reorder.insert(d.seq, d);
            }
            let mut released = 0;
            while released < config.input_width {
                // dropped packets never arrive; skip their slots
                while next_release_seq < trace.len()
                    && m.results[next_release_seq] == PacketOutcome::Dropped
                    && m.packet_log[next_release_seq].release > 0
                    && !reorder.contains_key(&next_release_seq)
                {
                    next_release_seq += 1;
                }
                match reorder.remove(&next_release_seq) {
                    Some(d) => {
                        release(d, &mut m);
                        next_release_seq += 1;
                        released += 1;
                    }
                    None => break,
                }
            }
        } else {
            done_pool.sort_by_key(|d| d.seq); // deterministic within-cycle order
            for d in done_pool.drain(..) {
                completion_fifo.push_back(d);
            }
            for _ in 0..config.input_width {
                match completion_fifo.pop_front() {
                    Some(d) => release(d, &mut m),
                    None => break,
                }
            }
        }
    }

    m.cycles = cycle;
    m.span_cycles = match first_release {
        Some(first) => last_release - first + 1,
        None => 0,
    };
    m.throughput_ppc = if m.span_cycles == 0 {
        0.0
    } else {
        m.packets_out as f64 / m.span_cycles as f64
    };
    Ok(m)
}
