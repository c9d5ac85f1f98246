//! Sliding-window context of a connection and neighbour counts.

use std::collections::HashMap;
use std::net::Ipv4Addr;

use thiserror::Error;

use crate::flows::TcpConnection;

pub const DEFAULT_CONTEXT_TAU_SECS: f64 = 300.0;
pub const MUTUAL_FLOW_HORIZON_SECS: f64 = 300.0;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ContextError {
    #[error("connection {0} is not part of the connection set")]
    UnknownCenter(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionContext {
    /// Id of the analysed connection.
    pub center: usize,
    pub tau: f64,
    /// Ids of the connections inside the window, ascending.
    pub members: Vec<usize>,
    /// Start-time distance to the next connection in start order, seconds.
    pub window_shift: f64,
}

impl ConnectionContext {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

fn position(all: &[TcpConnection], id: usize) -> Result<usize, ContextError> {
    match all.get(id) {
        Some(c) if c.id == id => Ok(id),
        _ => all.iter().position(|c| c.id == id).ok_or(ContextError::UnknownCenter(id)),
    }
}

/// Connections `c_j != center` with `c_j.t_s > center.t_s - tau/2` and
/// `c_j.t_e < center.t_s + tau/2`.
pub fn sliding_window(all: &[TcpConnection], center: usize, tau: f64) -> Result<ConnectionContext, ContextError> {
    let pos = position(all, center)?;
    let c = &all[pos];
    let half = tau / 2.0;
    let ts = c.t_s.secs();
    let mut members: Vec<usize> = all
        .iter()
        .filter(|o| o.id != c.id && o.t_s.secs() > ts - half && o.t_e.secs() < ts + half)
        .map(|o| o.id)
        .collect();
    members.sort_unstable();
    Ok(ConnectionContext { center: c.id, tau, members, window_shift: window_shift_after(all, pos) })
}

fn window_shift_after(all: &[TcpConnection], pos: usize) -> f64 {
    let ts = all[pos].t_s;
    all.iter()
        .filter(|o| o.t_s > ts || (o.t_s == ts && o.id > all[pos].id))
        .map(|o| o.t_s)
        .min()
        .map(|next| (next.micros() - ts.micros()) as f64 / 1e6)
        .unwrap_or(0.0)
}

/// Differences between consecutive start times, in start order.
pub fn window_shifts(all: &[TcpConnection]) -> Vec<f64> {
    let mut starts: Vec<i64> = all.iter().map(|c| c.t_s.micros()).collect();
    starts.sort_unstable();
    starts.windows(2).map(|w| (w[1] - w[0]) as f64 / 1e6).collect()
}

/// Contexts of every connection, equal to calling [`sliding_window`] for
/// each one but using a start-time index instead of a full scan.
pub fn sliding_windows(all: &[TcpConnection], tau: f64) -> Vec<ConnectionContext> {
    let mut order: Vec<usize> = (0..all.len()).collect();
    order.sort_by_key(|&i| (all[i].t_s, all[i].id));
    let starts: Vec<f64> = order.iter().map(|&i| all[i].t_s.secs()).collect();
    let half = tau / 2.0;
    let mut out = vec![None; all.len()];
    for (rank, &pos) in order.iter().enumerate() {
        let c = &all[pos];
        let ts = c.t_s.secs();
        // members start inside (ts - half, ts + half) because t_s <= t_e
        let lo = starts.partition_point(|&s| s <= ts - half);
        let hi = starts.partition_point(|&s| s < ts + half).max(lo);
        let mut members: Vec<usize> = order[lo..hi]
            .iter()
            .map(|&j| &all[j])
            .filter(|o| o.id != c.id && o.t_s.secs() > ts - half && o.t_e.secs() < ts + half)
            .map(|o| o.id)
            .collect();
        members.sort_unstable();
        let window_shift =
            order.get(rank + 1).map(|&j| (all[j].t_s.micros() - c.t_s.micros()) as f64 / 1e6).unwrap_or(0.0);
        out[pos] = Some(ConnectionContext { center: c.id, tau, members, window_shift });
    }
    out.into_iter().flatten().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Before,
    After,
}

/// Same-host-pair connections starting in `[t_s - h, t_s)` (before) or
/// `(t_e, t_e + h]` (after). The pair is unordered.
pub fn mutual_flows(all: &[TcpConnection], center: &TcpConnection, horizon: f64, side: Side) -> usize {
    let pair = center.host_pair();
    let h = (horizon * 1e6).round() as i64;
    let (lo, hi) = match side {
        Side::Before => (center.t_s.micros() - h, center.t_s.micros()),
        Side::After => (center.t_e.micros(), center.t_e.micros() + h),
    };
    all.iter()
        .filter(|o| o.id != center.id && o.host_pair() == pair)
        .filter(|o| {
            let t = o.t_s.micros();
            match side {
                Side::Before => t >= lo && t < hi,
                Side::After => t > lo && t <= hi,
            }
        })
        .count()
}

/// Start times grouped by unordered host pair, answering [`mutual_flows`]
/// queries without scanning every connection.
#[derive(Debug, Clone, Default)]
pub struct HostPairIndex {
    starts: HashMap<(Ipv4Addr, Ipv4Addr), Vec<(i64, usize)>>,
}

impl HostPairIndex {
    pub fn new(all: &[TcpConnection]) -> Self {
        let mut starts: HashMap<_, Vec<(i64, usize)>> = HashMap::new();
        for c in all {
            starts.entry(c.host_pair()).or_default().push((c.t_s.micros(), c.id));
        }
        for v in starts.values_mut() {
            v.sort_unstable();
        }
        HostPairIndex { starts }
    }

    pub fn count(&self, center: &TcpConnection, horizon: f64, side: Side) -> usize {
        let Some(v) = self.starts.get(&center.host_pair()) else {
            return 0;
        };
        let h = (horizon * 1e6).round() as i64;
        let (lo, hi) = match side {
            Side::Before => {
                let (lo, hi) = (center.t_s.micros() - h, center.t_s.micros());
                (v.partition_point(|&(t, _)| t < lo), v.partition_point(|&(t, _)| t < hi))
            }
            Side::After => {
                let (lo, hi) = (center.t_e.micros(), center.t_e.micros() + h);
                (v.partition_point(|&(t, _)| t <= lo), v.partition_point(|&(t, _)| t <= hi))
            }
        };
        v[lo..hi].iter().filter(|&&(_, id)| id != center.id).count()
    }
}
