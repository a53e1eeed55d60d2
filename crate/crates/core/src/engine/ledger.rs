use crate::precision::Real;
use crate::statevec::{BatchedState, NarrowedState};

/// How fused-block outputs are kept for the backward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum LedgerMode {
    /// Stored at compute precision.
    #[default]
    Full,
    /// Stored in the half-width format of the compute precision; all
    /// arithmetic still runs at full precision.
    MemSave,
}

impl LedgerMode {
    /// Storage cost of one ledger entry in half state-vector units.
    pub fn entry_half_units(self) -> u64 {
        match self {
            LedgerMode::Full => 2,
            LedgerMode::MemSave => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub enum LedgerEntry<F: Real> {
    Full(BatchedState<F>),
    Narrow(NarrowedState<F>),
}

impl<F: Real> LedgerEntry<F> {
    pub fn half_units(&self) -> u64 {
        match self {
            LedgerEntry::Full(_) => 2,
            LedgerEntry::Narrow(_) => 1,
        }
    }

    pub fn bytes(&self) -> u64 {
        match self {
            LedgerEntry::Full(s) => s.bytes(),
            LedgerEntry::Narrow(s) => s.bytes(),
        }
    }
}

/// Stored outputs of the fused variational blocks of one forward pass,
/// keyed by op index. Constant blocks and intra-block intermediates never
/// appear here.
#[derive(Debug, Clone)]
pub struct StateLedger<F: Real> {
    mode: LedgerMode,
    entries: Vec<(usize, LedgerEntry<F>)>,
}

impl<F: Real> StateLedger<F> {
    pub fn new(mode: LedgerMode) -> Self {
        Self {
            mode,
            entries: Vec::new(),
        }
    }

    pub fn mode(&self) -> LedgerMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(usize, LedgerEntry<F>)] {
        &self.entries
    }

    pub(crate) fn push(&mut self, op_index: usize, entry: LedgerEntry<F>) {
        self.entries.push((op_index, entry));
    }

    pub(crate) fn last_full(&self) -> Option<&BatchedState<F>> {
        match self.entries.last() {
            Some((_, LedgerEntry::Full(s))) => Some(s),
            _ => None,
        }
    }

    pub fn get(&self, op_index: usize) -> Option<&LedgerEntry<F>> {
        self.entries
            .binary_search_by_key(&op_index, |(i, _)| *i)
            .ok()
            .map(|k| &self.entries[k].1)
    }

    pub fn half_units(&self) -> u64 {
        self.entries.iter().map(|(_, e)| e.half_units()).sum()
    }

    /// Stored size in state-vector units (narrowed entries count ½).
    pub fn units(&self) -> f64 {
        self.half_units() as f64 / 2.0
    }

    pub fn bytes(&self) -> u64 {
        self.entries.iter().map(|(_, e)| e.bytes()).sum()
    }
}
