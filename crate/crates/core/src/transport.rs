//! Exact integer transportation problems on dense bipartite supports.
//!
//! Primal-dual min-cost flow: Dijkstra on reduced costs to lift the node
//! potentials, then Dinic blocking flows on the zero-reduced-cost residual
//! graph. All arithmetic is integer, so the optimum is exact. With costs drawn
//! from a handful of small integers the number of phases stays tiny.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const INF: i64 = i64::MAX / 4;

/// Optimal plan of a transportation problem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportPlan {
    pub cost: i64,
    /// Row-major `supply.len() × demand.len()` shipped amounts.
    pub flow: Vec<i64>,
}

/// Minimum-cost plan shipping `supply` to `demand` with per-unit costs
/// `cost[i * demand.len() + j]`. Every source-target pair is an allowed route.
pub fn solve(supply: &[i64], demand: &[i64], cost: &[i64]) -> Result<TransportPlan> {
    let (na, nb) = (supply.len(), demand.len());
    if cost.len() != na * nb {
        return Err(Error::LengthMismatch {
            expected: na * nb,
            got: cost.len(),
        });
    }
    if supply.iter().chain(demand).any(|&m| m < 0) {
        return Err(Error::Infeasible("negative mass".into()));
    }
    if cost.iter().any(|&c| c < 0 || c >= INF / 4) {
        return Err(Error::Infeasible("costs must be non-negative and bounded".into()));
    }
    let total: i64 = supply.iter().sum();
    let total_demand: i64 = demand.iter().sum();
    if total != total_demand {
        return Err(Error::Infeasible(format!(
            "supply {total} differs from demand {total_demand}"
        )));
    }
    let mut net = Network::new(supply, demand, cost);
    let mut shipped = 0;
    while shipped < total {
        if !net.lift_potentials() {
            return Err(Error::Infeasible("sink unreachable".into()));
        }
        loop {
            let pushed = net.blocking_flow();
            if pushed == 0 {
                break;
            }
            shipped += pushed;
        }
    }
    let cost = net
        .flow
        .iter()
        .zip(cost)
        .map(|(f, c)| f * c)
        .sum::<i64>();
    Ok(TransportPlan {
        cost,
        flow: net.flow,
    })
}

struct Bits {
    words: usize,
    data: Vec<u64>,
}

impl Bits {
    fn new(rows: usize, cols: usize) -> Self {
        let words = cols.div_ceil(64).max(1);
        Self {
            words,
            data: vec![0; rows * words],
        }
    }

    #[inline]
    fn row(&self, r: usize) -> &[u64] {
        &self.data[r * self.words..(r + 1) * self.words]
    }

    #[inline]
    fn set(&mut self, r: usize, c: usize, on: bool) {
        let w = &mut self.data[r * self.words + c / 64];
        if on {
            *w |= 1 << (c % 64);
        } else {
            *w &= !(1 << (c % 64));
        }
    }

    /// First set bit of row `r` at column `from` or later.
    #[inline]
    fn next_set(&self, r: usize, from: usize) -> Option<usize> {
        let row = self.row(r);
        let mut wi = from / 64;
        if wi >= row.len() {
            return None;
        }
        let mut word = row[wi] & (!0u64 << (from % 64));
        loop {
            if word != 0 {
                return Some(wi * 64 + word.trailing_zeros() as usize);
            }
            wi += 1;
            if wi == row.len() {
                return None;
            }
            word = row[wi];
        }
    }
}

fn full_mask(n: usize) -> Vec<u64> {
    let mut mask = vec![!0u64; n.div_ceil(64).max(1)];
    let spare = mask.len() * 64 - n;
    if let Some(last) = mask.last_mut() {
        *last = if spare == 64 { 0 } else { *last >> spare };
    }
    mask
}

/// Priority queue for Dijkstra with non-negative integer keys: buckets for
/// small keys, a heap beyond.
#[derive(Default)]
struct MonotoneQueue {
    buckets: Vec<Vec<usize>>,
    cursor: usize,
    overflow: BinaryHeap<Reverse<(i64, usize)>>,
}

impl MonotoneQueue {
    const BUCKETS: i64 = 1024;

    fn push(&mut self, key: i64, v: usize) {
        if key < Self::BUCKETS {
            let k = key as usize;
            if self.buckets.len() <= k {
                self.buckets.resize_with(k + 1, Vec::new);
            }
            self.buckets[k].push(v);
        } else {
            self.overflow.push(Reverse((key, v)));
        }
    }

    fn pop(&mut self) -> Option<(i64, usize)> {
        while self.cursor < self.buckets.len() {
            if let Some(v) = self.buckets[self.cursor].pop() {
                return Some((self.cursor as i64, v));
            }
            self.cursor += 1;
        }
        self.overflow.pop().map(|Reverse(entry)| entry)
    }
}

/// Residual network of the bipartite problem. Source-side nodes are the
/// supplies `i`, sink-side nodes the demands `j`; the super source and sink
/// are implicit in `sent`/`received`.
struct Network<'a> {
    na: usize,
    nb: usize,
    supply: &'a [i64],
    demand: &'a [i64],
    cost: &'a [i64],
    flow: Vec<i64>,
    sent: Vec<i64>,
    received: Vec<i64>,
    pot_a: Vec<i64>,
    pot_b: Vec<i64>,
    pot_t: i64,
    /// `(i, j)` arcs with zero reduced cost.
    tight: Bits,
    /// Transposed: `(j, i)` tight arcs carrying positive flow (reverse arcs).
    reverse: Bits,
    level_a: Vec<u32>,
    level_b: Vec<u32>,
    level_t: u32,
    next_a: Vec<usize>,
    next_b: Vec<usize>,
}

impl<'a> Network<'a> {
    fn new(supply: &'a [i64], demand: &'a [i64], cost: &'a [i64]) -> Self {
        let (na, nb) = (supply.len(), demand.len());
        Self {
            na,
            nb,
            supply,
            demand,
            cost,
            flow: vec![0; na * nb],
            sent: vec![0; na],
            received: vec![0; nb],
            pot_a: vec![0; na],
            pot_b: vec![0; nb],
            pot_t: 0,
            tight: Bits::new(na, nb),
            reverse: Bits::new(nb, na),
            level_a: vec![0; na],
            level_b: vec![0; nb],
            level_t: 0,
            next_a: vec![0; na],
            next_b: vec![0; nb],
        }
    }

    #[inline]
    fn reduced(&self, i: usize, j: usize) -> i64 {
        self.cost[i * self.nb + j] + self.pot_a[i] - self.pot_b[j]
    }

    /// Dijkstra from the super source on reduced costs, then
    /// `π(v) += min(d(v), d(sink))`. Reduced costs are small non-negative
    /// integers in practice, so a bucket queue serves the low distances and a
    /// heap takes the rest. Returns false when the sink is unreachable.
    fn lift_potentials(&mut self) -> bool {
        let (na, nb) = (self.na, self.nb);
        // node ids: 0..na supplies, na..na+nb demands
        let mut queue = MonotoneQueue::default();
        let mut dist = vec![INF; na + nb];
        let mut done = vec![false; na + nb];
        let mut dt = INF;
        for i in 0..na {
            if self.sent[i] < self.supply[i] {
                dist[i] = -self.pot_a[i];
                queue.push(dist[i], i);
            }
        }
        while let Some((d, v)) = queue.pop() {
            if d >= dt {
                break;
            }
            if done[v] || dist[v] != d {
                continue;
            }
            done[v] = true;
            self.relax(v, d, &mut dist, &mut queue, &mut dt);
        }
        if dt >= INF {
            return false;
        }
        for (p, d) in self.pot_a.iter_mut().zip(&dist[..na]) {
            *p += (*d).min(dt);
        }
        for (p, d) in self.pot_b.iter_mut().zip(&dist[na..]) {
            *p += (*d).min(dt);
        }
        self.pot_t += dt;
        self.tight.data.fill(0);
        self.reverse.data.fill(0);
        for i in 0..na {
            let pa = self.pot_a[i];
            let costs = &self.cost[i * nb..(i + 1) * nb];
            let flows = &self.flow[i * nb..(i + 1) * nb];
            let words = self.tight.words;
            let tight_row = &mut self.tight.data[i * words..(i + 1) * words];
            for (j, (c, p)) in costs.iter().zip(&self.pot_b).enumerate() {
                if c + pa == *p {
                    tight_row[j / 64] |= 1 << (j % 64);
                    if flows[j] > 0 {
                        self.reverse.set(j, i, true);
                    }
                }
            }
        }
        true
    }

    fn relax(
        &self,
        v: usize,
        d: i64,
        dist: &mut [i64],
        queue: &mut MonotoneQueue,
        dt: &mut i64,
    ) {
        let (na, nb) = (self.na, self.nb);
        if v < na {
            let base = d + self.pot_a[v];
            let row = &self.cost[v * nb..(v + 1) * nb];
            for (j, ((c, p), slot)) in row
                .iter()
                .zip(&self.pot_b)
                .zip(&mut dist[na..])
                .enumerate()
            {
                let nd = base + c - p;
                if nd < *slot {
                    *slot = nd;
                    queue.push(nd, na + j);
                }
            }
        } else {
            let j = v - na;
            for i in 0..na {
                if self.flow[i * nb + j] > 0 {
                    let nd = d - self.reduced(i, j);
                    if nd < dist[i] {
                        dist[i] = nd;
                        queue.push(nd, i);
                    }
                }
            }
            if self.received[j] < self.demand[j] {
                *dt = (*dt).min(d + self.pot_b[j] - self.pot_t);
            }
        }
    }

    /// BFS levels over admissible arcs; returns whether the sink is reached.
    fn build_levels(&mut self) -> bool {
        let (na, nb) = (self.na, self.nb);
        self.level_a.fill(u32::MAX);
        self.level_b.fill(u32::MAX);
        self.level_t = u32::MAX;
        let mut unseen_a = full_mask(na);
        let mut unseen_b = full_mask(nb);
        // queue entries: (is_supply_side, index)
        let mut queue: Vec<(bool, usize)> = Vec::with_capacity(na + nb);
        for i in 0..na {
            if self.sent[i] < self.supply[i] && self.pot_a[i] == 0 {
                self.level_a[i] = 1;
                unseen_a[i / 64] &= !(1 << (i % 64));
                queue.push((true, i));
            }
        }
        let mut head = 0;
        while head < queue.len() {
            let (side_a, v) = queue[head];
            head += 1;
            if side_a {
                let lv = self.level_a[v] + 1;
                if lv > self.level_t {
                    break;
                }
                for (wi, (t, u)) in self.tight.row(v).iter().zip(unseen_b.iter_mut()).enumerate() {
                    let mut fresh = t & *u;
                    *u &= !fresh;
                    while fresh != 0 {
                        let j = wi * 64 + fresh.trailing_zeros() as usize;
                        fresh &= fresh - 1;
                        self.level_b[j] = lv;
                        queue.push((false, j));
                    }
                }
            } else {
                let lv = self.level_b[v] + 1;
                if self.received[v] < self.demand[v]
                    && self.pot_b[v] == self.pot_t
                    && self.level_t == u32::MAX
                {
                    self.level_t = lv;
                }
                if lv > self.level_t {
                    continue;
                }
                for (wi, (r, u)) in self.reverse.row(v).iter().zip(unseen_a.iter_mut()).enumerate() {
                    let mut fresh = r & *u;
                    *u &= !fresh;
                    while fresh != 0 {
                        let i = wi * 64 + fresh.trailing_zeros() as usize;
                        fresh &= fresh - 1;
                        self.level_a[i] = lv;
                        queue.push((true, i));
                    }
                }
            }
        }
        self.level_t != u32::MAX
    }

    fn blocking_flow(&mut self) -> i64 {
        if !self.build_levels() {
            return 0;
        }
        self.next_a.fill(0);
        self.next_b.fill(0);
        let mut total = 0;
        for i in 0..self.na {
            if self.level_a[i] != 1 {
                continue;
            }
            let room = self.supply[i] - self.sent[i];
            let pushed = self.push_from_a(i, room);
            self.sent[i] += pushed;
            total += pushed;
        }
        total
    }

    fn push_from_a(&mut self, i: usize, limit: i64) -> i64 {
        let nb = self.nb;
        let lv = self.level_a[i];
        let mut pushed = 0;
        while pushed < limit {
            let Some(j) = self.tight.next_set(i, self.next_a[i]) else {
                self.next_a[i] = nb;
                break;
            };
            self.next_a[i] = j;
            if self.level_b[j] == lv + 1 {
                let got = self.push_from_b(j, limit - pushed);
                if got > 0 {
                    let cell = i * nb + j;
                    if self.flow[cell] == 0 {
                        self.reverse.set(j, i, true);
                    }
                    self.flow[cell] += got;
                    pushed += got;
                    continue;
                }
            }
            self.next_a[i] = j + 1;
        }
        pushed
    }

    fn push_from_b(&mut self, j: usize, limit: i64) -> i64 {
        let (na, nb) = (self.na, self.nb);
        let lv = self.level_b[j];
        let mut pushed = 0;
        if lv + 1 == self.level_t && self.pot_b[j] == self.pot_t {
            let got = (self.demand[j] - self.received[j]).min(limit);
            self.received[j] += got;
            pushed += got;
        }
        if lv + 1 >= self.level_t {
            return pushed;
        }
        while pushed < limit {
            let Some(i) = self.reverse.next_set(j, self.next_b[j]) else {
                self.next_b[j] = na;
                break;
            };
            self.next_b[j] = i;
            if self.level_a[i] == lv + 1 {
                let cell = i * nb + j;
                let cap = self.flow[cell];
                let got = self.push_from_a(i, (limit - pushed).min(cap));
                if got > 0 {
                    self.flow[cell] -= got;
                    if self.flow[cell] == 0 {
                        self.reverse.set(j, i, false);
                    }
                    pushed += got;
                    continue;
                }
            }
            self.next_b[j] = i + 1;
        }
        pushed
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_route() {
        let plan = solve(&[3], &[3], &[2]).unwrap();
        assert_eq!(plan.cost, 6);
        assert_eq!(plan.flow, vec![3]);
    }

    #[test]
    fn prefers_cheap_routes() {
        // 2x2 with an obvious diagonal optimum
        let plan = solve(&[1, 1], &[1, 1], &[0, 5, 5, 0]).unwrap();
        assert_eq!(plan.cost, 0);
        let plan = solve(&[1, 1], &[1, 1], &[1, 0, 0, 1]).unwrap();
        assert_eq!(plan.cost, 0);
        assert_eq!(plan.flow, vec![0, 1, 1, 0]);
    }

    #[test]
    fn needs_rerouting() {
        // greedy on the cheapest cell is suboptimal here
        let cost = [1, 2, 2, 100];
        let plan = solve(&[1, 1], &[1, 1], &cost).unwrap();
        assert_eq!(plan.cost, 4);
    }

    #[test]
    fn unbalanced_is_infeasible() {
        assert!(matches!(solve(&[2], &[1], &[0]), Err(Error::Infeasible(_))));
        assert!(solve(&[1], &[1, 0], &[0]).is_err());
    }

    #[test]
    fn zero_mass_is_free() {
        let plan = solve(&[0, 0], &[0], &[3, 3]).unwrap();
        assert_eq!(plan.cost, 0);
    }

    /// Exhaustive search over all integer plans, filled cell by cell.
    fn brute_force(supply: &[i64], demand: &[i64], cost: &[i64]) -> i64 {
        fn rec(cell: usize, nb: usize, rows: &mut [i64], cols: &mut [i64], cost: &[i64]) -> i64 {
            if cell == cost.len() {
                return if rows.iter().chain(cols.iter()).all(|&r| r == 0) {
                    0
                } else {
                    i64::MAX
                };
            }
            let (i, j) = (cell / nb, cell % nb);
            let mut best = i64::MAX;
            for x in 0..=rows[i].min(cols[j]) {
                rows[i] -= x;
                cols[j] -= x;
                let rest = rec(cell + 1, nb, rows, cols, cost);
                if rest != i64::MAX {
                    best = best.min(rest + x * cost[cell]);
                }
                rows[i] += x;
                cols[j] += x;
            }
            best
        }
        rec(0, demand.len(), &mut supply.to_vec(), &mut demand.to_vec(), cost)
    }

    fn problem() -> impl Strategy<Value = (Vec<i64>, Vec<i64>, Vec<i64>)> {
        (1usize..=3, 1usize..=3).prop_flat_map(|(na, nb)| {
            (
                proptest::collection::vec(0i64..=3, na),
                proptest::collection::vec(0i64..=3, nb),
                proptest::collection::vec(0i64..=6, na * nb),
            )
                .prop_map(|(mut s, mut d, c)| {
                    // rebalance so that totals agree
                    let (ts, td): (i64, i64) = (s.iter().sum(), d.iter().sum());
                    if ts < td {
                        s[0] += td - ts;
                    } else {
                        d[0] += ts - td;
                    }
                    (s, d, c)
                })
        })
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn matches_exhaustive_search((s, d, c) in problem()) {
            let plan = solve(&s, &d, &c).unwrap();
            prop_assert_eq!(plan.cost, brute_force(&s, &d, &c));
            for (i, &si) in s.iter().enumerate() {
                prop_assert_eq!(plan.flow[i * d.len()..(i + 1) * d.len()].iter().sum::<i64>(), si);
            }
            for (j, &dj) in d.iter().enumerate() {
                prop_assert_eq!((0..s.len()).map(|i| plan.flow[i * d.len() + j]).sum::<i64>(), dj);
            }
            prop_assert!(plan.flow.iter().all(|&f| f >= 0));
        }

        #[test]
        fn large_costs_scale_the_optimum((s, d, c) in problem()) {
            let big: Vec<i64> = c.iter().map(|x| x * 5000 + 7).collect();
            let small = solve(&s, &d, &c).unwrap().cost;
            let total: i64 = s.iter().sum();
            prop_assert_eq!(solve(&s, &d, &big).unwrap().cost, small * 5000 + 7 * total);
        }
    }
}
