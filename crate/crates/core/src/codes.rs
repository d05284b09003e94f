//! Binary cyclic block codes: repetition and narrow-sense BCH.
//!
//! Vectors of up to 127 bits are packed into a [`Word`]; bit `i` of the word is
//! position `i` of the block. Every supported code is cyclic, so codewords are
//! `m(x) * g(x)` for the generator polynomial `g` and the syndrome of a vector
//! is its remainder modulo `g`.

use std::fmt;

use crate::{Error, Result};

/// Packed binary vector, position `i` at bit `i`.
pub type Word = u128;

/// Largest supported block length.
pub const MAX_BLOCK_LEN: usize = 127;

/// Largest `n_b - k_b` for which a coset-leader table is built.
pub const MAX_LEADER_REDUNDANCY: usize = 26;

/// Generator polynomials of the narrow-sense primitive BCH codes, with the
/// coefficient of `x^i` at bit `i`. Derived over GF(2^m) with the primitive
/// polynomials x^3+x+1, x^4+x+1, x^5+x^2+1, x^6+x+1 and x^7+x^3+1.
const BCH_TABLE: [(usize, usize, usize, Word); 5] = [
    (7, 4, 1, 0xb),
    (15, 5, 3, 0x537),
    (31, 6, 7, 0x32d_ea27),
    (63, 7, 15, 0x153_225b_1d0d_73df),
    (127, 8, 31, 0xe2_75a0_abd2_18d4_cf92_8b9b_bf6c_b08f),
];

/// Carry-less product of two GF(2) polynomials. The caller guarantees the
/// product degree stays below 128.
pub fn poly_mul(mut a: Word, mut b: Word) -> Word {
    let mut r = 0;
    while b != 0 {
        if b & 1 == 1 {
            r ^= a;
        }
        a <<= 1;
        b >>= 1;
    }
    r
}

fn degree(p: Word) -> u32 {
    127 - p.leading_zeros()
}

/// Remainder of `a` modulo `m` over GF(2).
pub fn poly_rem(mut a: Word, m: Word) -> Word {
    let dm = degree(m);
    while a != 0 && degree(a) >= dm {
        a ^= m << (degree(a) - dm);
    }
    a
}

#[inline]
pub fn mask(n: usize) -> Word {
    if n >= 128 {
        Word::MAX
    } else {
        (1u128 << n) - 1
    }
}

/// Renders `n` positions of `v`, position 0 first.
pub fn bits_to_string(v: Word, n: usize) -> String {
    (0..n).map(|i| if (v >> i) & 1 == 1 { '1' } else { '0' }).collect()
}

/// Parses a `0`/`1` string, position 0 first.
pub fn parse_bits(s: &str) -> Result<Word> {
    if s.len() > MAX_BLOCK_LEN {
        return Err(Error::Parameter(format!("bit string longer than {MAX_BLOCK_LEN}")));
    }
    s.chars().enumerate().try_fold(0, |acc, (i, c)| match c {
        '0' => Ok(acc),
        '1' => Ok(acc | (1 << i)),
        _ => Err(Error::Parameter(format!("invalid bit character {c:?}"))),
    })
}

/// Packs `bits` (values 0/1) into a word.
pub fn pack_bits(bits: &[u8]) -> Word {
    bits.iter()
        .enumerate()
        .fold(0, |acc, (i, &b)| acc | (Word::from(b & 1) << i))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodeKind {
    Repetition,
    Bch,
}

/// A binary linear `(n_b, k_b, t)` block code.
#[derive(Debug, Clone)]
pub struct LinearBlockCode {
    kind: CodeKind,
    n: usize,
    k: usize,
    t: usize,
    generator_poly: Word,
    codewords: Vec<Word>,
    unit_syndromes: Vec<Word>,
}

impl LinearBlockCode {
    fn from_generator(kind: CodeKind, n: usize, k: usize, t: usize, g: Word) -> Self {
        debug_assert_eq!(degree(g) as usize, n - k);
        let codewords = (0..1u64 << k).map(|m| poly_mul(Word::from(m), g)).collect();
        let unit_syndromes = (0..n).map(|i| poly_rem(1 << i, g)).collect();
        Self {
            kind,
            n,
            k,
            t,
            generator_poly: g,
            codewords,
            unit_syndromes,
        }
    }

    pub fn kind(&self) -> CodeKind {
        self.kind
    }

    /// Block length `n_b`.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Message length `k_b`.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Error-correction capability `t`.
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn generator_poly(&self) -> Word {
        self.generator_poly
    }

    /// Rows `x^i g(x)` of the `k_b x n_b` generator matrix.
    pub fn generator_rows(&self) -> Vec<Word> {
        (0..self.k).map(|i| self.generator_poly << i).collect()
    }

    /// Display label, `(5)` for repetition codes and `(15,5,3)` for BCH.
    pub fn name(&self) -> String {
        match self.kind {
            CodeKind::Repetition => format!("({})", self.n),
            CodeKind::Bch => format!("({},{},{})", self.n, self.k, self.t),
        }
    }

    /// Identifier accepted by [`code_by_name`].
    pub fn id(&self) -> String {
        match self.kind {
            CodeKind::Repetition => format!("rep{}", self.n),
            CodeKind::Bch => format!("bch{}_{}_{}", self.n, self.k, self.t),
        }
    }

    /// All `2^k_b` codewords in message-index order.
    pub fn codewords(&self) -> &[Word] {
        &self.codewords
    }

    /// Encodes a message given as an integer, bit `i` = message bit `i`.
    pub fn encode(&self, message: u64) -> Result<Word> {
        self.codewords
            .get(message as usize)
            .copied()
            .filter(|_| (message >> self.k) == 0)
            .ok_or_else(|| Error::Parameter(format!("message {message} does not fit in {} bits", self.k)))
    }

    /// Encodes a message given as `k_b` bits.
    pub fn encode_bits(&self, message: &[u8]) -> Result<Word> {
        if message.len() != self.k {
            return Err(Error::LengthMismatch {
                expected: self.k,
                actual: message.len(),
            });
        }
        Ok(self.codewords[pack_bits(message) as usize])
    }

    /// Coset identifier of `v`: its remainder modulo the generator polynomial.
    #[inline]
    pub fn syndrome(&self, v: Word) -> Word {
        let mut s = 0;
        let mut rest = v & mask(self.n);
        while rest != 0 {
            let i = rest.trailing_zeros() as usize;
            s ^= self.unit_syndromes[i];
            rest &= rest - 1;
        }
        s
    }

    /// Minimum Hamming weight of a nonzero codeword.
    pub fn minimum_distance(&self) -> u32 {
        self.codewords
            .iter()
            .skip(1)
            .map(|w| w.count_ones())
            .min()
            .unwrap_or(0)
    }
}

impl fmt::Display for LinearBlockCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// `n_b`-fold repetition code.
pub fn make_repetition(n: usize) -> Result<LinearBlockCode> {
    if n < 3 || n.is_multiple_of(2) || n > MAX_BLOCK_LEN {
        return Err(Error::Parameter(format!(
            "repetition length must be odd and in 3..={MAX_BLOCK_LEN}, got {n}"
        )));
    }
    Ok(LinearBlockCode::from_generator(
        CodeKind::Repetition,
        n,
        1,
        (n - 1) / 2,
        mask(n),
    ))
}

/// Narrow-sense binary BCH code for one of the supported parameter triples.
pub fn make_bch(n: usize, k: usize, t: usize) -> Result<LinearBlockCode> {
    BCH_TABLE
        .iter()
        .find(|&&(tn, tk, tt, _)| (tn, tk, tt) == (n, k, t))
        .map(|&(n, k, t, g)| LinearBlockCode::from_generator(CodeKind::Bch, n, k, t, g))
        .ok_or_else(|| Error::Parameter(format!("unsupported BCH parameters ({n},{k},{t})")))
}

/// Resolves `repN`, `bchN_K_T` or the display forms `(N)` and `(N,K,T)`.
pub fn code_by_name(name: &str) -> Result<LinearBlockCode> {
    let bad = || Error::Parameter(format!("unknown code name {name:?}"));
    if let Some(inner) = name.strip_prefix('(').and_then(|s| s.strip_suffix(')')) {
        let parts: Vec<usize> = inner
            .split(',')
            .map(|s| s.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        return match parts[..] {
            [n] => make_repetition(n),
            [n, k, t] => make_bch(n, k, t),
            _ => Err(bad()),
        };
    }
    if let Some(n) = name.strip_prefix("rep") {
        return make_repetition(n.parse().map_err(|_| bad())?);
    }
    if let Some(rest) = name.strip_prefix("bch") {
        let parts: Vec<usize> = rest
            .split('_')
            .map(|s| s.parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        if let [n, k, t] = parts[..] {
            return make_bch(n, k, t);
        }
    }
    Err(bad())
}

/// The nine codes evaluated in the reference table.
pub const STANDARD_CODES: [&str; 9] = [
    "rep3",
    "rep5",
    "rep7",
    "rep21",
    "bch7_4_1",
    "bch15_5_3",
    "bch31_6_7",
    "bch63_7_15",
    "bch127_8_31",
];

/// One minimum-weight representative per coset, indexed by syndrome.
#[derive(Debug, Clone)]
pub struct CosetLeaderSet {
    leaders: Vec<Word>,
}

impl CosetLeaderSet {
    pub fn leaders(&self) -> &[Word] {
        &self.leaders
    }

    pub fn len(&self) -> usize {
        self.leaders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaders.is_empty()
    }

    pub fn leader_for(&self, syndrome: Word) -> Word {
        self.leaders[syndrome as usize]
    }
}

/// Builds the coset-leader table by breadth-first search over syndromes.
///
/// Among minimum-weight vectors of a coset the numerically smallest word is
/// chosen. Fails with a capability error when `n_b - k_b` exceeds
/// [`MAX_LEADER_REDUNDANCY`].
pub fn coset_leaders(code: &LinearBlockCode) -> Result<CosetLeaderSet> {
    let r = code.n - code.k;
    if r > MAX_LEADER_REDUNDANCY {
        return Err(Error::Capability(format!(
            "coset leader table for {} needs 2^{r} entries",
            code.name()
        )));
    }
    let size = 1usize << r;
    const UNSET: u8 = u8::MAX;
    let mut leaders = vec![0 as Word; size];
    let mut weight = vec![UNSET; size];
    weight[0] = 0;
    let mut frontier = vec![0usize];
    let mut w = 0u8;
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for &s in &frontier {
            let leader = leaders[s];
            for i in 0..code.n {
                if (leader >> i) & 1 == 1 {
                    continue;
                }
                let cand = leader | (1 << i);
                let cs = s ^ code.unit_syndromes[i] as usize;
                if weight[cs] == UNSET {
                    weight[cs] = w + 1;
                    leaders[cs] = cand;
                    next.push(cs);
                } else if weight[cs] == w + 1 && cand < leaders[cs] {
                    leaders[cs] = cand;
                }
            }
        }
        frontier = next;
        w += 1;
    }
    Ok(CosetLeaderSet { leaders })
}
