use super::{EncoderError, Result};

/// Per-block feature columns for a grid of views: `dim x K x K' x tau`.
/// Support maps are the `K = K' = 1` case.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    dim: usize,
    k: usize,
    k_prime: usize,
    tau: usize,
    /// Column-contiguous: index `((k * K' + k') * tau + t) * dim`.
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(dim: usize, k: usize, k_prime: usize, tau: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || k == 0 || k_prime == 0 || tau == 0 {
            return Err(EncoderError::ShapeMismatch(
                "feature map with an empty axis".into(),
            ));
        }
        if data.len() != dim * k * k_prime * tau {
            return Err(EncoderError::ShapeMismatch(format!(
                "{} values for a {dim}x{k}x{k_prime}x{tau} feature map",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(EncoderError::NonFinite);
        }
        Ok(Self {
            dim,
            k,
            k_prime,
            tau,
            data,
        })
    }

    /// Single-view map from `tau` columns.
    pub fn support(columns: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_views(vec![vec![columns]])
    }

    /// Map from columns indexed `[k][k'][t]`.
    pub fn from_views(views: Vec<Vec<Vec<Vec<f64>>>>) -> Result<Self> {
        let k = views.len();
        let k_prime = views.first().map_or(0, Vec::len);
        let tau = views.first().and_then(|v| v.first()).map_or(0, Vec::len);
        let dim = views
            .first()
            .and_then(|v| v.first())
            .and_then(|c| c.first())
            .map_or(0, Vec::len);
        let mut data = Vec::with_capacity(dim * k * k_prime * tau);
        for row in &views {
            if row.len() != k_prime {
                return Err(EncoderError::ShapeMismatch("ragged view grid".into()));
            }
            for cols in row {
                if cols.len() != tau {
                    return Err(EncoderError::ShapeMismatch(
                        "views disagree on block count".into(),
                    ));
                }
                for c in cols {
                    if c.len() != dim {
                        return Err(EncoderError::ShapeMismatch(
                            "columns disagree on dimension".into(),
                        ));
                    }
                    data.extend_from_slice(c);
                }
            }
        }
        Self::new(dim, k, k_prime, tau, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn k_prime(&self) -> usize {
        self.k_prime
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn is_single_view(&self) -> bool {
        self.k == 1 && self.k_prime == 1
    }

    /// Grid cell of the unshifted view.
    pub fn center(&self) -> (usize, usize) {
        (self.k / 2, self.k_prime / 2)
    }

    #[inline]
    pub fn column(&self, k: usize, k_prime: usize, t: usize) -> &[f64] {
        let start = ((k * self.k_prime + k_prime) * self.tau + t) * self.dim;
        &self.data[start..start + self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// The single-view map of grid cell `(k, k')`.
    pub fn view(&self, k: usize, k_prime: usize) -> FeatureMap {
        let start = ((k * self.k_prime + k_prime) * self.tau) * self.dim;
        FeatureMap {
            dim: self.dim,
            k: 1,
            k_prime: 1,
            tau: self.tau,
            data: self.data[start..start + self.tau * self.dim].to_vec(),
        }
    }

    pub fn center_view(&self) -> FeatureMap {
        let (k, kp) = self.center();
        self.view(k, kp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_and_views() {
        let views: Vec<Vec<Vec<Vec<f64>>>> = (0..3)
            .map(|k| {
                (0..1)
                    .map(|_| (0..2).map(|t| vec![k as f64, t as f64]).collect())
                    .collect()
            })
            .collect();
        let fm = FeatureMap::from_views(views).unwrap();
        assert_eq!((fm.dim(), fm.k(), fm.k_prime(), fm.tau()), (2, 3, 1, 2));
        assert_eq!(fm.column(2, 0, 1), &[2.0, 1.0]);
        assert_eq!(fm.center(), (1, 0));
        assert_eq!(fm.center_view().column(0, 0, 0), &[1.0, 0.0]);
    }

    #[test]
    fn rejects_ragged_input() {
        assert!(FeatureMap::support(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(FeatureMap::support(vec![]).is_err());
        assert!(matches!(
            FeatureMap::support(vec![vec![f64::NAN]]),
            Err(EncoderError::NonFinite)
        ));
    }
}
