use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::Vector;

/// Observations `(x_i, t_i)` with strictly increasing timestamps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimedSequence {
    times: Vec<f64>,
    values: Vec<Vector>,
}

impl TimedSequence {
    pub fn new(times: Vec<f64>, values: Vec<Vector>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::shape(
                "TimedSequence",
                format!("{} times", times.len()),
                format!("{} values", values.len()),
            ));
        }
        if let Some(first) = values.first() {
            let d = first.len();
            if let Some(bad) = values.iter().position(|v| v.len() != d) {
                return Err(Error::shape(
                    "TimedSequence",
                    format!("point 0 has dim {d}"),
                    format!("point {bad} has dim {}", values[bad].len()),
                ));
            }
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("timestamps must be finite"));
        }
        if let Some(i) = times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!(
                "timestamps must be strictly increasing (t[{i}] = {}, t[{}] = {})",
                times[i],
                i + 1,
                times[i + 1]
            )));
        }
        Ok(TimedSequence { times, values })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Feature dimension, `0` for an empty sequence.
    pub fn dim(&self) -> usize {
        self.values.first().map_or(0, |v| v.len())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[Vector] {
        &self.values
    }

    pub fn iter(&self) -> impl DoubleEndedIterator<Item = (f64, &Vector)> + ExactSizeIterator {
        self.times.iter().copied().zip(self.values.iter())
    }

    pub fn first_time(&self) -> Option<f64> {
        self.times.first().copied()
    }

    pub fn last_time(&self) -> Option<f64> {
        self.times.last().copied()
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> TimedSequence {
        TimedSequence {
            times: self.times[range.clone()].to_vec(),
            values: self.values[range].to_vec(),
        }
    }

    /// Same observations with every timestamp moved by `offset`.
    pub fn shifted(&self, offset: f64) -> TimedSequence {
        TimedSequence {
            times: self.times.iter().map(|t| t + offset).collect(),
            values: self.values.clone(),
        }
    }

    /// Same timestamps with values replaced.
    pub fn with_values(&self, values: Vec<Vector>) -> Result<TimedSequence> {
        TimedSequence::new(self.times.clone(), values)
    }

    /// Appends `other`, whose timestamps must all come after this one's.
    pub fn concat(&self, other: &TimedSequence) -> Result<TimedSequence> {
        let mut times = self.times.clone();
        times.extend_from_slice(&other.times);
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        TimedSequence::new(times, values)
    }
}
