//! Compute precisions and their narrowed storage formats.

use half::bf16;
use num_traits::Float;
use std::fmt::Debug;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Precision {
    Single,
    Double,
}

impl Precision {
    /// Code used by the raw dump format.
    pub fn code(self) -> u8 {
        match self {
            Precision::Single => 1,
            Precision::Double => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Precision::Single),
            2 => Some(Precision::Double),
            _ => None,
        }
    }

    /// Bytes per complex amplitude.
    pub fn amplitude_bytes(self) -> usize {
        match self {
            Precision::Single => 8,
            Precision::Double => 16,
        }
    }

    /// Per-sample norm tolerance after unitary evolution.
    pub fn norm_tolerance(self) -> f64 {
        match self {
            Precision::Single => 1e-6,
            Precision::Double => 1e-12,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Precision::Single => "single",
            Precision::Double => "double",
        }
    }
}

impl std::str::FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single" | "f32" | "complex64" => Ok(Precision::Single),
            "double" | "f64" | "complex128" => Ok(Precision::Double),
            other => Err(format!("unknown precision `{other}`")),
        }
    }
}

impl std::fmt::Display for Precision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Real scalar type used for amplitude components.
///
/// `Narrow` is the half-width storage format used by the memory-saving
/// ledger: bfloat16 for `f32`, `f32` for `f64`.
pub trait Real: Float + Default + Debug + Send + Sync + 'static {
    type Narrow: Copy + Default + Debug + Send + Sync + PartialEq + 'static;

    const PRECISION: Precision;

    fn of(x: f64) -> Self;
    fn f64(self) -> f64;

    /// Round-to-nearest-even into the narrow format. Overflow saturates to
    /// infinity; NaN stays NaN.
    fn narrow(self) -> Self::Narrow;
    /// Exact embedding back into the compute format.
    fn widen(x: Self::Narrow) -> Self;

    fn le_bytes(self, out: &mut Vec<u8>);
    fn from_le_slice(bytes: &[u8]) -> Self;
}

impl Real for f32 {
    type Narrow = bf16;
    const PRECISION: Precision = Precision::Single;

    #[inline(always)]
    fn of(x: f64) -> Self {
        x as f32
    }
    #[inline(always)]
    fn f64(self) -> f64 {
        self as f64
    }
    #[inline(always)]
    fn narrow(self) -> bf16 {
        bf16::from_f32(self)
    }
    #[inline(always)]
    fn widen(x: bf16) -> f32 {
        x.to_f32()
    }
    fn le_bytes(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn from_le_slice(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4-byte component"))
    }
}

impl Real for f64 {
    type Narrow = f32;
    const PRECISION: Precision = Precision::Double;

    #[inline(always)]
    fn of(x: f64) -> Self {
        x
    }
    #[inline(always)]
    fn f64(self) -> f64 {
        self
    }
    #[inline(always)]
    fn narrow(self) -> f32 {
        self as f32
    }
    #[inline(always)]
    fn widen(x: f32) -> f64 {
        x as f64
    }
    fn le_bytes(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn from_le_slice(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8-byte component"))
    }
}
