use std::io::Write;

use nalgebra::DVector;

use crate::assembly::BlockLayout;
use crate::error::{Error, Result};

/// Streaming first and second moments of solution vectors.
///
/// The variance about a supplied reference mean uses denominator `M`; the
/// self-centred variance is kept alongside.
#[derive(Clone, Debug)]
pub struct MomentAccumulator {
    count: usize,
    mean: DVector<f64>,
    m2: DVector<f64>,
    reference: Option<DVector<f64>>,
    ref_sq: DVector<f64>,
}

impl MomentAccumulator {
    pub fn new(dim: usize, reference: Option<DVector<f64>>) -> Self {
        Self { count: 0, mean: DVector::zeros(dim), m2: DVector::zeros(dim), reference, ref_sq: DVector::zeros(dim) }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn push(&mut self, x: &DVector<f64>) {
        self.count += 1;
        let c = self.count as f64;
        for i in 0..x.len() {
            let d = x[i] - self.mean[i];
            self.mean[i] += d / c;
            self.m2[i] += d * (x[i] - self.mean[i]);
        }
        if let Some(r) = &self.reference {
            for i in 0..x.len() {
                self.ref_sq[i] += (x[i] - r[i]).powi(2);
            }
        }
    }

    /// Combine with an accumulator over a disjoint batch.
    pub fn merge(&mut self, other: &MomentAccumulator) {
        if other.count == 0 {
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * nb / n;
            self.m2[i] += other.m2[i] + d * d * na * nb / n;
        }
        self.ref_sq += &other.ref_sq;
        self.count += other.count;
    }

    pub fn finish(self, theta: f64) -> Result<MomentEstimate> {
        if self.count == 0 {
            return Err(Error::Dimension("no samples".into()));
        }
        let m = self.count as f64;
        let variance_self = self.m2.map(|v| (v / m).max(0.0));
        let variance = if self.reference.is_some() { self.ref_sq / m } else { variance_self.clone() };
        Ok(MomentEstimate { mean: self.mean, variance, variance_self, samples: self.count, theta })
    }
}

#[derive(Clone, Debug)]
pub struct MomentEstimate {
    pub mean: DVector<f64>,
    /// About the reference mean when one was supplied, else about `mean`.
    pub variance: DVector<f64>,
    pub variance_self: DVector<f64>,
    pub samples: usize,
    pub theta: f64,
}

/// Moments of a sequence of vectors in one pass.
pub fn estimate_moments<'a>(
    solutions: impl IntoIterator<Item = &'a DVector<f64>>,
    reference: Option<&DVector<f64>>,
    theta: f64,
) -> Result<MomentEstimate> {
    let mut it = solutions.into_iter().peekable();
    let dim = it.peek().map(|x| x.len()).ok_or_else(|| Error::Dimension("no samples".into()))?;
    let mut acc = MomentAccumulator::new(dim, reference.cloned());
    for x in it {
        if x.len() != dim {
            return Err(Error::Dimension(format!("sample of length {} among length {dim}", x.len())));
        }
        acc.push(x);
    }
    acc.finish(theta)
}

impl MomentEstimate {
    /// CSV keyed by global DOF with its block label and local index.
    pub fn write_csv<W: Write>(&self, layout: &BlockLayout, mut w: W) -> std::io::Result<()> {
        writeln!(w, "dof,block,local,mean,variance,variance_self")?;
        for i in 0..self.mean.len() {
            let (b, l) = layout.locate(i);
            writeln!(
                w,
                "{i},{},{l},{:.17e},{:.17e},{:.17e}",
                b.label(),
                self.mean[i],
                self.variance[i],
                self.variance_self[i]
            )?;
        }
        Ok(())
    }
}
