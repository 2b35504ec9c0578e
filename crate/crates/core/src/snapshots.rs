use crate::error::{Error, Result};
use crate::linalg::{ensure_finite, Mat};

/// Paired snapshot matrices: column `i` of `y` is the successor of column `i` of `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    pub x: Mat,
    pub y: Mat,
    /// `(N, T)` when built from `N` trajectories of length `T`.
    pub provenance: Option<(usize, usize)>,
}

impl SnapshotSet {
    pub fn new(x: Mat, y: Mat) -> Result<Self> {
        if x.shape() != y.shape() {
            return Err(Error::invalid(format!(
                "X is {:?} but Y is {:?}",
                x.shape(),
                y.shape()
            )));
        }
        ensure_finite(&x, "X")?;
        ensure_finite(&y, "Y")?;
        Ok(SnapshotSet { x, y, provenance: None })
    }

    /// Builds the pair matrices from `p x T` trajectories. Column
    /// `(T-1) i + j` of `X` holds state `j` of trajectory `i` and the same
    /// column of `Y` holds state `j + 1` (all zero-based).
    pub fn from_trajectories(trajectories: &[Mat]) -> Result<Self> {
        let first = trajectories
            .first()
            .ok_or_else(|| Error::invalid("no trajectories supplied"))?;
        let (p, t) = first.shape();
        if t < 2 {
            return Err(Error::invalid("trajectories need at least two states"));
        }
        if trajectories.iter().any(|tr| tr.shape() != (p, t)) {
            return Err(Error::invalid("trajectories differ in shape"));
        }
        let n = trajectories.len();
        let m = n * (t - 1);
        let mut x = Mat::zeros(p, m);
        let mut y = Mat::zeros(p, m);
        for (i, tr) in trajectories.iter().enumerate() {
            for j in 0..t - 1 {
                x.set_column((t - 1) * i + j, &tr.column(j));
                y.set_column((t - 1) * i + j, &tr.column(j + 1));
            }
        }
        let mut set = SnapshotSet::new(x, y)?;
        set.provenance = Some((n, t));
        Ok(set)
    }

    /// Ambient state dimension.
    pub fn p(&self) -> usize {
        self.x.nrows()
    }

    /// Number of snapshot pairs.
    pub fn m(&self) -> usize {
        self.x.ncols()
    }
}
