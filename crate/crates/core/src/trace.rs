//! Per-iteration trace records emitted by the two training layers.

/// One inner-bundle iteration.
#[derive(Debug, Clone, Copy)]
pub struct InnerRecord {
    pub iteration: usize,
    /// Running min_k J(w̄^k).
    pub objective_upper: f64,
    /// Cutting-plane lower bound J_K.
    pub objective_lower: f64,
    pub gap: f64,
    pub cuts: usize,
}

/// One outer (group-generation) iteration.
#[derive(Debug, Clone, Copy)]
pub struct OuterRecord {
    pub iteration: usize,
    pub pool_size: usize,
    pub objective: f64,
    pub gap: f64,
    pub cuts: usize,
}

/// Receives trace records; implementations decide where they go.
pub trait TraceSink {
    fn inner(&mut self, _record: &InnerRecord) {}
    fn outer(&mut self, _record: &OuterRecord) {}
}

/// Discards everything.
pub struct NullTrace;

impl TraceSink for NullTrace {}

/// Buffers records in memory; handy for tests and library callers.
#[derive(Default)]
pub struct MemoryTrace {
    pub inner: Vec<InnerRecord>,
    pub outer: Vec<OuterRecord>,
}

impl TraceSink for MemoryTrace {
    fn inner(&mut self, record: &InnerRecord) {
        self.inner.push(*record);
    }

    fn outer(&mut self, record: &OuterRecord) {
        self.outer.push(*record);
    }
}
