use std::ops::Range;

use crate::trajdata::FlowTensor;

/// Supplies the stand-in flows for inputs of absent players.
pub trait Masker: Sync {
    /// `(inflow, outflow)` used for `cell` at `interval` when masked.
    fn baseline(&self, interval: usize, cell: usize) -> (f64, f64);
}

/// Replaces flows with zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroMasker;

impl Masker for ZeroMasker {
    fn baseline(&self, _interval: usize, _cell: usize) -> (f64, f64) {
        (0.0, 0.0)
    }
}

const DAY_SECONDS: i64 = 86_400;

/// Mean flow of the cell over the other training intervals at the same
/// time-of-day slot; the cell's training-period mean when no other interval
/// shares the slot.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoricalMeanMasker {
    n_cells: usize,
    t0: i64,
    interval_seconds: i64,
    n_slots: usize,
    train: Range<usize>,
    // [slot][cell] sums over training intervals
    slot_in: Vec<f64>,
    slot_out: Vec<f64>,
    slot_count: Vec<usize>,
    mean_in: Vec<f64>,
    mean_out: Vec<f64>,
    // observed values, used to exclude the interval being masked
    tensor_in: Vec<u32>,
    tensor_out: Vec<u32>,
}

impl HistoricalMeanMasker {
    pub fn fit(tensor: &FlowTensor, train: Range<usize>) -> Self {
        let n_cells = tensor.grid.n_cells();
        let interval_seconds = tensor.axis.interval_seconds as i64;
        let n_slots = ((DAY_SECONDS + interval_seconds - 1) / interval_seconds).max(1) as usize;
        let train = train.start.min(tensor.n_intervals())..train.end.min(tensor.n_intervals());
        let mut m = HistoricalMeanMasker {
            n_cells,
            t0: tensor.axis.t0,
            interval_seconds,
            n_slots,
            train: train.clone(),
            slot_in: vec![0.0; n_slots * n_cells],
            slot_out: vec![0.0; n_slots * n_cells],
            slot_count: vec![0; n_slots],
            mean_in: vec![0.0; n_cells],
            mean_out: vec![0.0; n_cells],
            tensor_in: tensor.inflow.clone(),
            tensor_out: tensor.outflow.clone(),
        };
        for i in train.clone() {
            let s = m.slot(i);
            m.slot_count[s] += 1;
            for c in 0..n_cells {
                let (vi, vo) = m.observed(i, c);
                m.slot_in[s * n_cells + c] += vi;
                m.slot_out[s * n_cells + c] += vo;
                m.mean_in[c] += vi;
                m.mean_out[c] += vo;
            }
        }
        let n = train.len().max(1) as f64;
        m.mean_in
            .iter_mut()
            .chain(m.mean_out.iter_mut())
            .for_each(|v| *v /= n);
        m
    }

    fn slot(&self, interval: usize) -> usize {
        let t = self.t0 + interval as i64 * self.interval_seconds;
        (t.rem_euclid(DAY_SECONDS) / self.interval_seconds) as usize % self.n_slots
    }

    fn observed(&self, interval: usize, cell: usize) -> (f64, f64) {
        let o = interval * self.n_cells + cell;
        match (self.tensor_in.get(o), self.tensor_out.get(o)) {
            (Some(&i), Some(&out)) => (i as f64, out as f64),
            _ => (0.0, 0.0),
        }
    }
}

impl Masker for HistoricalMeanMasker {
    fn baseline(&self, interval: usize, cell: usize) -> (f64, f64) {
        let s = self.slot(interval);
        let mut count = self.slot_count[s];
        let mut sum_in = self.slot_in[s * self.n_cells + cell];
        let mut sum_out = self.slot_out[s * self.n_cells + cell];
        if self.train.contains(&interval) {
            let (vi, vo) = self.observed(interval, cell);
            sum_in -= vi;
            sum_out -= vo;
            count -= 1;
        }
        if count == 0 {
            return (self.mean_in[cell], self.mean_out[cell]);
        }
        (sum_in / count as f64, sum_out / count as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{BBox, GridSpec};
    use crate::trajdata::TimeAxis;

    fn tensor(values: &[u32], interval_seconds: u32) -> FlowTensor {
        let grid = GridSpec::new(BBox::new(0.0, 0.0, 1.0, 1.0), 1, 1).unwrap();
        let mut t = FlowTensor::zeros(
            grid,
            TimeAxis::new(0, interval_seconds, values.len()).unwrap(),
        );
        t.inflow = values.to_vec();
        t.outflow = values.iter().map(|v| v * 2).collect();
        t
    }

    #[test]
    fn same_slot_mean_excludes_the_interval_itself() {
        // 12-hour intervals: slots alternate 0,1,0,1,...
        let t = tensor(&[1, 10, 3, 20, 5, 30], 43_200);
        let m = HistoricalMeanMasker::fit(&t, 0..6);
        assert_eq!(m.baseline(0, 0), (4.0, 8.0));
        assert_eq!(m.baseline(3, 0), (20.0, 40.0));
        // outside the training range every same-slot interval counts
        let m = HistoricalMeanMasker::fit(&t, 0..4);
        assert_eq!(m.baseline(4, 0), (2.0, 4.0));
    }

    #[test]
    fn falls_back_to_training_mean() {
        let t = tensor(&[2, 4, 6, 8], 600);
        let m = HistoricalMeanMasker::fit(&t, 0..4);
        assert_eq!(m.baseline(1, 0), (5.0, 10.0));
    }
}
