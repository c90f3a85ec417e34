use std::collections::VecDeque;

use nalgebra::DVector;

use crate::robust::IniWindow;

/// One completed sample: the inputs applied, the predecessor velocity at the
/// time they were applied, and the measurement right after.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSample {
    pub u: Vec<f64>,
    pub predecessor_velocity: f64,
    pub velocities: Vec<f64>,
    pub spacings: Vec<f64>,
}

/// Sliding window of raw samples. Error coordinates are formed on read so
/// that the window follows a moving equilibrium.
#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    capacity: usize,
    samples: VecDeque<RawSample>,
}

impl HistoryBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, samples: VecDeque::with_capacity(capacity + 1) }
    }

    pub fn push(&mut self, s: RawSample) {
        self.samples.push_back(s);
        while self.samples.len() > self.capacity {
            self.samples.pop_front();
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.samples.len() == self.capacity
    }

    pub fn samples(&self) -> impl Iterator<Item = &RawSample> {
        self.samples.iter()
    }

    /// History in error coordinates about `v_star` and the given connected-vehicle spacings.
    pub fn ini_window(&self, v_star: f64, s_star: &[f64]) -> IniWindow {
        let u: Vec<f64> = self.samples.iter().flat_map(|s| s.u.iter().cloned()).collect();
        let eps: Vec<f64> = self.samples.iter().map(|s| s.predecessor_velocity - v_star).collect();
        let y: Vec<f64> = self
            .samples
            .iter()
            .flat_map(|s| {
                let mut row: Vec<f64> = s.velocities.iter().map(|v| v - v_star).collect();
                row.extend(s.spacings.iter().zip(s_star).map(|(x, st)| x - st));
                row
            })
            .collect();
        IniWindow { u: DVector::from_vec(u), eps: DVector::from_vec(eps), y: DVector::from_vec(y) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_keeps_latest_and_rebases() {
        let mut h = HistoryBuffer::new(2);
        for k in 0..3 {
            let k = k as f64;
            h.push(RawSample { u: vec![k], predecessor_velocity: 15.0 + k, velocities: vec![14.0 + k], spacings: vec![20.0 + k] });
        }
        assert!(h.is_full());
        let w = h.ini_window(15.0, &[20.0]);
        assert_eq!(w.u.as_slice(), &[1.0, 2.0]);
        assert_eq!(w.eps.as_slice(), &[1.0, 2.0]);
        assert_eq!(w.y.as_slice(), &[0.0, 1.0, 1.0, 2.0]);
    }
}
