//! Exact discrete optimal transport by successive shortest augmenting
//! paths on the bipartite source/sink residual graph.

/// Largest grid (in cells) accepted by the exact solver.
pub const MAX_TRANSPORT_CELLS: usize = 256;

const MASS_EPS: f64 = 1e-15;

/// Minimal cost of moving distribution `a` onto `b` (equal total mass)
/// under the ground distance `dist`, which must be a metric.
///
/// Mass shared by both distributions at the same cell stays put, which is
/// optimal for a metric cost; only the surplus is routed.
pub fn transport_cost(a: &[f64], b: &[f64], dist: impl Fn(usize, usize) -> f64) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut sources = Vec::new();
    let mut supply = Vec::new();
    let mut sinks = Vec::new();
    let mut demand = Vec::new();
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        let d = x - y;
        if d > MASS_EPS {
            sources.push(i);
            supply.push(d);
        } else if d < -MASS_EPS {
            sinks.push(i);
            demand.push(-d);
        }
    }
    if sources.is_empty() || sinks.is_empty() {
        return 0.0;
    }
    let mut net = Network::new(&sources, &sinks, supply, demand, dist);
    while net.augment() {}
    net.total_cost()
}

struct Network {
    ns: usize,
    nt: usize,
    cost: Vec<f64>,
    flow: Vec<f64>,
    supply: Vec<f64>,
    demand: Vec<f64>,
    potential: Vec<f64>,
}

impl Network {
    fn new(
        sources: &[usize],
        sinks: &[usize],
        supply: Vec<f64>,
        demand: Vec<f64>,
        dist: impl Fn(usize, usize) -> f64,
    ) -> Self {
        let (ns, nt) = (sources.len(), sinks.len());
        let mut cost = Vec::with_capacity(ns * nt);
        for &s in sources {
            for &t in sinks {
                cost.push(dist(s, t));
            }
        }
        Self {
            ns,
            nt,
            cost,
            flow: vec![0.0; ns * nt],
            supply,
            demand,
            potential: vec![0.0; ns + nt + 2],
        }
    }

    // Node layout: 0 super source, 1..=ns sources, then sinks, then super sink.
    fn source_node(&self, s: usize) -> usize {
        1 + s
    }

    fn sink_node(&self, t: usize) -> usize {
        1 + self.ns + t
    }

    fn super_sink(&self) -> usize {
        1 + self.ns + self.nt
    }

    /// One Dijkstra pass plus augmentation; false once no path remains.
    fn augment(&mut self) -> bool {
        let n = self.ns + self.nt + 2;
        let sink_star = self.super_sink();
        let mut dist = vec![f64::INFINITY; n];
        let mut prev = vec![usize::MAX; n];
        let mut done = vec![false; n];
        dist[0] = 0.0;

        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..n {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            let pu = self.potential[u];
            if u == 0 {
                for s in 0..self.ns {
                    if self.supply[s] > MASS_EPS {
                        let v = self.source_node(s);
                        let rc = (pu - self.potential[v]).max(0.0);
                        relax(&mut dist, &mut prev, u, v, best + rc);
                    }
                }
            } else if u <= self.ns {
                let s = u - 1;
                for t in 0..self.nt {
                    let v = self.sink_node(t);
                    let rc = (self.cost[s * self.nt + t] + pu - self.potential[v]).max(0.0);
                    relax(&mut dist, &mut prev, u, v, best + rc);
                }
            } else if u < sink_star {
                let t = u - 1 - self.ns;
                for s in 0..self.ns {
                    if self.flow[s * self.nt + t] > MASS_EPS {
                        let v = self.source_node(s);
                        let rc = (-self.cost[s * self.nt + t] + pu - self.potential[v]).max(0.0);
                        relax(&mut dist, &mut prev, u, v, best + rc);
                    }
                }
                if self.demand[t] > MASS_EPS {
                    let rc = (pu - self.potential[sink_star]).max(0.0);
                    relax(&mut dist, &mut prev, u, sink_star, best + rc);
                }
            }
        }

        if !dist[sink_star].is_finite() {
            return false;
        }
        let reach_max = dist
            .iter()
            .copied()
            .filter(|d| d.is_finite())
            .fold(0.0, f64::max);
        for (p, d) in self.potential.iter_mut().zip(&dist) {
            *p += if d.is_finite() { *d } else { reach_max };
        }

        // Walk back from the super sink to find the bottleneck.
        let mut bottleneck = f64::INFINITY;
        let mut v = sink_star;
        while v != 0 {
            let u = prev[v];
            let cap = self.residual(u, v);
            bottleneck = bottleneck.min(cap);
            v = u;
        }
        if !(bottleneck > 0.0) {
            return false;
        }
        let mut v = sink_star;
        while v != 0 {
            let u = prev[v];
            self.push(u, v, bottleneck);
            v = u;
        }
        true
    }

    fn residual(&self, u: usize, v: usize) -> f64 {
        let sink_star = self.super_sink();
        if u == 0 {
            self.supply[v - 1]
        } else if v == sink_star {
            self.demand[u - 1 - self.ns]
        } else if u <= self.ns {
            f64::INFINITY
        } else {
            let t = u - 1 - self.ns;
            let s = v - 1;
            self.flow[s * self.nt + t]
        }
    }

    fn push(&mut self, u: usize, v: usize, amount: f64) {
        let sink_star = self.super_sink();
        if u == 0 {
            self.supply[v - 1] -= amount;
        } else if v == sink_star {
            self.demand[u - 1 - self.ns] -= amount;
        } else if u <= self.ns {
            let (s, t) = (u - 1, v - 1 - self.ns);
            self.flow[s * self.nt + t] += amount;
        } else {
            let (t, s) = (u - 1 - self.ns, v - 1);
            self.flow[s * self.nt + t] -= amount;
        }
    }

    fn total_cost(&self) -> f64 {
        self.flow
            .iter()
            .zip(&self.cost)
            .map(|(f, c)| f.max(0.0) * c)
            .sum()
    }
}

fn relax(dist: &mut [f64], prev: &mut [usize], u: usize, v: usize, candidate: f64) {
    if candidate < dist[v] {
        dist[v] = candidate;
        prev[v] = u;
    }
}
