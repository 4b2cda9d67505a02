//! Phase-free Pauli strings, k-local operator pools, and statevector kernels.
//!
//! Qubit 0 is the least-significant bit of a basis index. A string is stored
//! as its sorted `(qubit, axis)` entries together with the bit masks used by
//! the kernels: `P|b> = i^{n_Y} (-1)^{popcount(b & z_mask)} |b ^ x_mask>`.

use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, MAX_DENSE_QUBITS};

/// Largest register a [`PauliString`] can address (bit-mask width).
pub const MAX_QUBITS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    fn letter(self) -> char {
        match self {
            Axis::X => 'X',
            Axis::Y => 'Y',
            Axis::Z => 'Z',
        }
    }

    fn from_letter(c: char) -> Option<Axis> {
        match c {
            'X' | 'x' => Some(Axis::X),
            'Y' | 'y' => Some(Axis::Y),
            'Z' | 'z' => Some(Axis::Z),
            _ => None,
        }
    }
}

/// Tensor product of single-qubit Pauli axes, identity on unlisted qubits.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PauliString {
    n_qubits: usize,
    entries: Vec<(usize, Axis)>,
    x_mask: u64,
    z_mask: u64,
    y_count: u32,
}

impl PauliString {
    /// Builds a string from `(qubit, axis)` pairs in any order.
    pub fn new(n_qubits: usize, entries: impl IntoIterator<Item = (usize, Axis)>) -> Result<Self> {
        if n_qubits > MAX_QUBITS {
            return Err(Error::Capacity {
                qubits: n_qubits,
                max: MAX_QUBITS,
            });
        }
        let mut entries: Vec<(usize, Axis)> = entries.into_iter().collect();
        entries.sort_unstable_by_key(|&(q, _)| q);
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::Parameter(format!("qubit {} listed twice", w[0].0)));
            }
        }
        let (mut x_mask, mut z_mask, mut y_count) = (0u64, 0u64, 0u32);
        for &(q, axis) in &entries {
            if q >= n_qubits {
                return Err(Error::Parameter(format!(
                    "qubit {q} out of range for {n_qubits} qubits"
                )));
            }
            match axis {
                Axis::X => x_mask |= 1 << q,
                Axis::Z => z_mask |= 1 << q,
                Axis::Y => {
                    x_mask |= 1 << q;
                    z_mask |= 1 << q;
                    y_count += 1;
                }
            }
        }
        Ok(Self {
            n_qubits,
            entries,
            x_mask,
            z_mask,
            y_count,
        })
    }

    /// Single-qubit string, e.g. `Z` on qubit 0.
    pub fn single(n_qubits: usize, qubit: usize, axis: Axis) -> Result<Self> {
        Self::new(n_qubits, [(qubit, axis)])
    }

    pub fn identity(n_qubits: usize) -> Self {
        Self {
            n_qubits,
            entries: Vec::new(),
            x_mask: 0,
            z_mask: 0,
            y_count: 0,
        }
    }

    /// Parses the text form `"X0 Z3"` (or `"I"` for the identity).
    pub fn parse(text: &str, n_qubits: usize) -> Result<Self> {
        let text = text.trim();
        if text == "I" || text.is_empty() {
            return Ok(Self::identity(n_qubits));
        }
        let mut entries = Vec::new();
        for token in text.split_whitespace() {
            let mut chars = token.chars();
            let axis = chars
                .next()
                .and_then(Axis::from_letter)
                .ok_or_else(|| Error::Parse(format!("bad Pauli token {token:?}")))?;
            let qubit: usize = chars
                .as_str()
                .parse()
                .map_err(|_| Error::Parse(format!("bad qubit index in {token:?}")))?;
            entries.push((qubit, axis));
        }
        Self::new(n_qubits, entries)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn weight(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(usize, Axis)] {
        &self.entries
    }

    pub fn x_mask(&self) -> u64 {
        self.x_mask
    }

    pub fn z_mask(&self) -> u64 {
        self.z_mask
    }

    /// Returns the same string on a register of `n_qubits` qubits.
    pub fn embed(&self, n_qubits: usize) -> Result<Self> {
        Self::new(n_qubits, self.entries.iter().copied())
    }

    #[inline]
    fn global_phase(&self) -> Complex64 {
        match self.y_count % 4 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        }
    }

    /// Coefficient of `|b ^ x_mask>` in `P|b>`.
    #[inline]
    fn phase(&self, global: Complex64, b: usize) -> Complex64 {
        if (b as u64 & self.z_mask).count_ones() % 2 == 1 {
            -global
        } else {
            global
        }
    }

    /// Writes `P·input` into `out`.
    pub fn apply_into(&self, input: &[Complex64], out: &mut [Complex64]) -> Result<()> {
        self.check_len(input.len())?;
        if out.len() != input.len() {
            return Err(Error::DimensionMismatch {
                expected: input.len(),
                got: out.len(),
            });
        }
        let g = self.global_phase();
        let x = self.x_mask as usize;
        for (b, amp) in input.iter().enumerate() {
            out[b ^ x] = self.phase(g, b) * amp;
        }
        Ok(())
    }

    /// In-place `e^{-iθP}` using `cos θ · I - i sin θ · P`.
    pub fn rotate_in_place(&self, amps: &mut [Complex64], theta: f64) -> Result<()> {
        self.check_len(amps.len())?;
        let (s, c) = theta.sin_cos();
        let minus_i_sin = Complex64::new(0.0, -s);
        let g = self.global_phase();
        let x = self.x_mask as usize;
        if x == 0 {
            for (b, amp) in amps.iter_mut().enumerate() {
                *amp *= c + minus_i_sin * self.phase(g, b);
            }
            return Ok(());
        }
        let high = 1usize << (usize::BITS - 1 - x.leading_zeros());
        for b in 0..amps.len() {
            if b & high != 0 {
                continue;
            }
            let partner = b ^ x;
            let a0 = amps[b];
            let a1 = amps[partner];
            // (P a)[b] = phase(partner) a[partner], (P a)[partner] = phase(b) a[b]
            amps[b] = c * a0 + minus_i_sin * self.phase(g, partner) * a1;
            amps[partner] = c * a1 + minus_i_sin * self.phase(g, b) * a0;
        }
        Ok(())
    }

    /// `<bra| P |ket>` without materialising `P|ket>`.
    pub fn expectation_between(&self, bra: &[Complex64], ket: &[Complex64]) -> Result<Complex64> {
        self.check_len(ket.len())?;
        if bra.len() != ket.len() {
            return Err(Error::DimensionMismatch {
                expected: ket.len(),
                got: bra.len(),
            });
        }
        let g = self.global_phase();
        let x = self.x_mask as usize;
        let mut acc = Complex64::new(0.0, 0.0);
        for (b, amp) in ket.iter().enumerate() {
            acc += bra[b ^ x].conj() * self.phase(g, b) * amp;
        }
        Ok(acc)
    }

    /// Dense `2^n × 2^n` matrix of the string.
    pub fn to_matrix(&self) -> Result<ComplexMatrix> {
        if self.n_qubits > MAX_DENSE_QUBITS {
            return Err(Error::Capacity {
                qubits: self.n_qubits,
                max: MAX_DENSE_QUBITS,
            });
        }
        let dim = 1usize << self.n_qubits;
        let g = self.global_phase();
        let x = self.x_mask as usize;
        let mut m = ComplexMatrix::zeros(dim);
        for b in 0..dim {
            m[(b ^ x, b)] = self.phase(g, b);
        }
        Ok(m)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        let expected = 1usize
            .checked_shl(self.n_qubits as u32)
            .ok_or(Error::Capacity {
                qubits: self.n_qubits,
                max: MAX_DENSE_QUBITS,
            })?;
        if len != expected {
            return Err(Error::DimensionMismatch { expected, got: len });
        }
        Ok(())
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.entries.is_empty() {
            return f.write_str("I");
        }
        for (i, (q, axis)) in self.entries.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{}{}", axis.letter(), q)?;
        }
        Ok(())
    }
}

/// Fixed, duplicate-free candidate set of generators.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorPool {
    n_qubits: usize,
    elements: Vec<PauliString>,
}

impl OperatorPool {
    pub fn from_elements(n_qubits: usize, elements: Vec<PauliString>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for p in &elements {
            if p.n_qubits() != n_qubits {
                return Err(Error::DimensionMismatch {
                    expected: n_qubits,
                    got: p.n_qubits(),
                });
            }
            if p.weight() == 0 {
                return Err(Error::Parameter("pool may not contain the identity".into()));
            }
            if !seen.insert(p.clone()) {
                return Err(Error::Parameter(format!("duplicate pool element {p}")));
            }
        }
        Ok(Self { n_qubits, elements })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn elements(&self) -> &[PauliString] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, PauliString> {
        self.elements.iter()
    }
}

/// All Pauli strings of weight `1..=max_weight` on `n_total` qubits, ordered
/// by (weight, qubit indices, axes).
pub fn pool_klocal(n_total: usize, max_weight: usize) -> Result<OperatorPool> {
    if n_total == 0 {
        return Err(Error::Parameter("pool needs at least one qubit".into()));
    }
    if !(1..=2).contains(&max_weight) {
        return Err(Error::Parameter(format!(
            "max_weight must be 1 or 2, got {max_weight}"
        )));
    }
    let mut elements = Vec::new();
    for q in 0..n_total {
        for axis in Axis::ALL {
            elements.push(PauliString::single(n_total, q, axis)?);
        }
    }
    if max_weight == 2 {
        for q1 in 0..n_total {
            for q2 in q1 + 1..n_total {
                for a1 in Axis::ALL {
                    for a2 in Axis::ALL {
                        elements.push(PauliString::new(n_total, [(q1, a1), (q2, a2)])?);
                    }
                }
            }
        }
    }
    Ok(OperatorPool {
        n_qubits: n_total,
        elements,
    })
}
