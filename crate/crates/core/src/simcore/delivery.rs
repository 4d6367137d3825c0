use super::Topology;

/// Outcome of one ordered (transmitter, receiver) pair in one period.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Reception {
    pub tx: usize,
    pub rx: usize,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeriodDelivery {
    /// Grouped by receiver, transmitters ascending within each group.
    pub receptions: Vec<Reception>,
    /// True when at least one in-range receiver missed the transmission.
    pub tx_collided: Vec<bool>,
}

/// Resolves one period in which vehicle `i` transmits on `blocks[i]`.
///
/// `u -> v` succeeds iff `v` hears `u` and no other vehicle audible at `v`,
/// `v` itself included, used the same block.
pub fn deliver(blocks: &[usize], topology: &Topology, n_blocks: usize) -> PeriodDelivery {
    let layout = PairLayout::new(topology);
    let mut counts = vec![0u32; n_blocks];
    let mut rx_ok = vec![false; layout.n_pairs()];
    let mut tx_collided = vec![false; blocks.len()];
    layout.resolve(blocks, &mut counts, &mut rx_ok, &mut tx_collided, |_, _| {});

    let mut receptions = Vec::with_capacity(rx_ok.len());
    for v in 0..blocks.len() {
        for (k, u) in layout.transmitters(v).enumerate() {
            receptions.push(Reception {
                tx: u,
                rx: v,
                ok: rx_ok[layout.start[v] + k],
            });
        }
    }
    PeriodDelivery {
        receptions,
        tx_collided,
    }
}

/// Blocks vehicle `v` hears busy in a period, its own transmission excluded.
pub fn sense_period(blocks: &[usize], topology: &Topology, v: usize, n_blocks: usize) -> Vec<bool> {
    let (lo, hi) = topology.hearing_windows()[v];
    let mut busy = vec![false; n_blocks];
    for u in (lo..=hi).filter(|&u| u != v) {
        busy[blocks[u]] = true;
    }
    busy
}

/// Flat indexing of in-range ordered pairs: receiver `v` owns the slots
/// `start[v]..start[v + 1]`, one per transmitter in its window except itself.
#[derive(Debug, Clone)]
pub(crate) struct PairLayout {
    windows: Vec<(usize, usize)>,
    start: Vec<usize>,
}

impl PairLayout {
    pub(crate) fn new(topology: &Topology) -> Self {
        let windows = topology.hearing_windows();
        let mut start = Vec::with_capacity(windows.len() + 1);
        let mut acc = 0;
        start.push(0);
        for &(lo, hi) in &windows {
            acc += hi - lo;
            start.push(acc);
        }
        Self { windows, start }
    }

    pub(crate) fn n_pairs(&self) -> usize {
        *self.start.last().unwrap()
    }

    pub(crate) fn pair_start(&self, rx: usize) -> usize {
        self.start[rx]
    }

    pub(crate) fn transmitters(&self, rx: usize) -> impl Iterator<Item = usize> {
        let (lo, hi) = self.windows[rx];
        (lo..=hi).filter(move |&u| u != rx)
    }

    /// Sliding-window pass over receivers. `counts[b]` holds the number of
    /// transmitters on block `b` audible at the current receiver (itself
    /// included) when `at_receiver(v, counts)` is invoked.
    pub(crate) fn resolve(
        &self,
        blocks: &[usize],
        counts: &mut [u32],
        rx_ok: &mut [bool],
        tx_collided: &mut [bool],
        mut at_receiver: impl FnMut(usize, &[u32]),
    ) {
        counts.fill(0);
        tx_collided.fill(false);
        let (mut lo, mut hi) = (0usize, 0usize);
        for (v, &(wlo, whi)) in self.windows.iter().enumerate() {
            while hi <= whi {
                counts[blocks[hi]] += 1;
                hi += 1;
            }
            while lo < wlo {
                counts[blocks[lo]] -= 1;
                lo += 1;
            }
            let mut k = self.start[v];
            for u in wlo..=whi {
                if u == v {
                    continue;
                }
                let ok = counts[blocks[u]] == 1;
                rx_ok[k] = ok;
                tx_collided[u] |= !ok;
                k += 1;
            }
            at_receiver(v, counts);
        }
    }
}
