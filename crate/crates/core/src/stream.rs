//! The sample-feed abstraction shared by samplers, file ingestion, and the
//! update engine.
//!
//! A [`SampleSource`] hands out `d`-dimensional observations one at a time
//! into a caller-provided buffer, so hot loops run allocation-free. Sources
//! are finite or infinite; a finite source signals exhaustion by returning
//! `false`.

/// A stream of `d`-dimensional sample vectors.
pub trait SampleSource {
    /// Dimension of every sample this source produces.
    fn dim(&self) -> usize;

    /// Write the next sample into `buf` (length must equal [`dim`](Self::dim)).
    /// Returns `false` when the source is exhausted, leaving `buf` untouched.
    fn next_sample(&mut self, buf: &mut [f64]) -> bool;
}

/// An in-memory source over a list of row vectors; mainly for tests and for
/// replaying ingested files.
pub struct VecSource {
    dim: usize,
    rows: Vec<Vec<f64>>,
    next: usize,
}

impl VecSource {
    /// Wrap explicit rows. Panics if the rows are ragged; callers validate
    /// dimensions before constructing.
    pub fn new(dim: usize, rows: Vec<Vec<f64>>) -> Self {
        assert!(rows.iter().all(|r| r.len() == dim), "ragged sample rows");
        VecSource { dim, rows, next: 0 }
    }
}

impl SampleSource for VecSource {
    fn dim(&self) -> usize {
        self.dim
    }

    fn next_sample(&mut self, buf: &mut [f64]) -> bool {
        if self.next >= self.rows.len() {
            return false;
        }
        buf.copy_from_slice(&self.rows[self.next]);
        self.next += 1;
        true
    }
}

/// Adapter that applies a fixed linear map `x -> scale * x` to an inner
/// source; used by scale-invariance tests.
pub struct ScaledSource<S> {
    pub inner: S,
    pub scale: f64,
}

impl<S: SampleSource> SampleSource for ScaledSource<S> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn next_sample(&mut self, buf: &mut [f64]) -> bool {
        if !self.inner.next_sample(buf) {
            return false;
        }
        for v in buf.iter_mut() {
            *v *= self.scale;
        }
        true
    }
}

/// Skip the first `n` samples of a source; used to resume checkpointed runs
/// on replayable streams.
pub fn skip_samples(source: &mut dyn SampleSource, n: u64) -> u64 {
    let mut buf = vec![0.0; source.dim()];
    for k in 0..n {
        if !source.next_sample(&mut buf) {
            return k;
        }
    }
    n
}
