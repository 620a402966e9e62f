//! Stacked curve prefixes: the network input.

use crate::error::{Error, Result};

/// The top-m values of each feature's sorted score curve, stacked along a
/// channel dimension (K rows of length m).
///
/// The curve tail is close to a constant level and carries little signal, so
/// only the prefix is kept. Curves shorter than m are extended with their
/// final value, which preserves the non-increasing row invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveStack {
    num_features: usize,
    prefix_len: usize,
    data: Vec<f64>,
}

impl CurveStack {
    pub fn new(num_features: usize, prefix_len: usize, data: Vec<f64>) -> Result<Self> {
        if num_features < 1 || prefix_len < 1 {
            return Err(Error::InvalidParameter(
                "curve stack needs at least one feature and one rank".into(),
            ));
        }
        if data.len() != num_features * prefix_len {
            return Err(Error::LengthMismatch {
                left: data.len(),
                right: num_features * prefix_len,
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: i });
        }
        let stack = Self {
            num_features,
            prefix_len,
            data,
        };
        for f in 0..num_features {
            if stack.row(f).windows(2).any(|w| w[0] < w[1]) {
                return Err(Error::DataContract(format!(
                    "curve stack row {f} is not non-increasing"
                )));
            }
        }
        Ok(stack)
    }

    /// Build from per-feature sorted curves, truncating to the top m and
    /// padding short curves with their last value.
    pub fn from_sorted_values(curves: &[&[f64]], prefix_len: usize) -> Result<Self> {
        if curves.is_empty() {
            return Err(Error::InvalidParameter("no curves given".into()));
        }
        let mut data = Vec::with_capacity(curves.len() * prefix_len);
        for curve in curves {
            if curve.is_empty() {
                return Err(Error::EmptyCurve);
            }
            let take = curve.len().min(prefix_len);
            data.extend_from_slice(&curve[..take]);
            data.extend(std::iter::repeat_n(curve[take - 1], prefix_len - take));
        }
        Self::new(curves.len(), prefix_len, data)
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn prefix_len(&self) -> usize {
        self.prefix_len
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, feature: usize) -> &[f64] {
        &self.data[feature * self.prefix_len..(feature + 1) * self.prefix_len]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncates_and_pads() {
        let long: Vec<f64> = vec![0.9, 0.8, 0.7, 0.6, 0.5];
        let short: Vec<f64> = vec![0.4, 0.2];
        let stack = CurveStack::from_sorted_values(&[&long, &short], 4).unwrap();
        assert_eq!(stack.row(0), &[0.9, 0.8, 0.7, 0.6]);
        assert_eq!(stack.row(1), &[0.4, 0.2, 0.2, 0.2]);
    }

    #[test]
    fn rejects_increasing_rows() {
        assert!(CurveStack::new(1, 3, vec![0.1, 0.5, 0.2]).is_err());
        assert!(CurveStack::new(1, 2, vec![0.5, f64::NAN]).is_err());
        assert!(CurveStack::new(2, 2, vec![0.5, 0.4]).is_err());
    }
}
