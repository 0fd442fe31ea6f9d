//! Truncated tensor series over the alphabet `{0, .., d}` and signatures of
//! piecewise-linear paths.
//!
//! Coefficients are stored densely, level by level. Within level `k` the word
//! `i_1 .. i_k` sits at the base-`(d + 1)` value of its letters, so the flat
//! index of a word is `sum_{j < k} (d + 1)^j` plus that value.

use std::fmt;

use crate::error::{Error, Result};
use crate::paths::{AugmentedPath, LinearPath, TimeGrid};

/// A multi-index. The empty word addresses level 0.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Word(pub Vec<usize>);

impl Word {
    pub fn empty() -> Self {
        Word(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn letters(&self) -> &[usize] {
        &self.0
    }

    /// Parses a string of decimal digits, one letter per character.
    pub fn parse(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| {
                c.to_digit(10).map(|v| v as usize).ok_or_else(|| {
                    Error::InvalidArgument(format!("word letter {c:?} is not a digit"))
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(Word)
    }

    /// Inverse of [`word_index`].
    pub fn from_index(mut index: usize, alphabet: usize) -> Word {
        let mut level = 0;
        let mut size = 1;
        while index >= size {
            index -= size;
            size *= alphabet;
            level += 1;
        }
        let mut letters = vec![0; level];
        for slot in letters.iter_mut().rev() {
            *slot = index % alphabet;
            index /= alphabet;
        }
        Word(letters)
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut letters = self.0.clone();
        letters.extend_from_slice(&other.0);
        Word(letters)
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for letter in &self.0 {
            write!(f, "{letter}")?;
        }
        Ok(())
    }
}

impl From<&[usize]> for Word {
    fn from(letters: &[usize]) -> Self {
        Word(letters.to_vec())
    }
}

/// Offset of level `k` in the flat coefficient layout.
fn level_offset(alphabet: usize, level: usize) -> usize {
    (0..level).map(|j| alphabet.pow(j as u32)).sum()
}

/// Number of coefficients of levels `0..=order`.
pub fn series_len(alphabet: usize, order: usize) -> usize {
    level_offset(alphabet, order + 1)
}

/// Flat position of `word` for the given alphabet size `d + 1`.
pub fn word_index(word: &Word, alphabet: usize) -> Result<usize> {
    let mut value = 0;
    for &letter in word.letters() {
        if letter >= alphabet {
            return Err(Error::LetterOutOfAlphabet { letter, alphabet });
        }
        value = value * alphabet + letter;
    }
    Ok(level_offset(alphabet, word.len()) + value)
}

/// An element of the tensor algebra over `R^{d+1}` truncated at `order`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedTensorSeries {
    alphabet: usize,
    order: usize,
    coeffs: Vec<f64>,
}

impl TruncatedTensorSeries {
    pub fn zeros(alphabet: usize, order: usize) -> Self {
        assert!(alphabet >= 1, "alphabet must contain at least one letter");
        Self {
            alphabet,
            order,
            coeffs: vec![0.0; series_len(alphabet, order)],
        }
    }

    /// The multiplicative unit `(1, 0, 0, ..)`, i.e. the signature of a
    /// constant path.
    pub fn unit(alphabet: usize, order: usize) -> Self {
        let mut s = Self::zeros(alphabet, order);
        s.coeffs[0] = 1.0;
        s
    }

    pub fn from_coeffs(alphabet: usize, order: usize, coeffs: Vec<f64>) -> Result<Self> {
        if alphabet == 0 {
            return Err(Error::InvalidArgument("alphabet must be non-empty".into()));
        }
        let expected = series_len(alphabet, order);
        if coeffs.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficients given, alphabet {alphabet} at order {order} needs {expected}",
                coeffs.len()
            )));
        }
        Ok(Self {
            alphabet,
            order,
            coeffs,
        })
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn level(&self, k: usize) -> &[f64] {
        let start = level_offset(self.alphabet, k);
        &self.coeffs[start..start + self.alphabet.pow(k as u32)]
    }

    pub fn get(&self, word: &Word) -> Result<f64> {
        if word.len() > self.order {
            return Err(Error::InvalidArgument(format!(
                "word {word} is longer than the truncation order {}",
                self.order
            )));
        }
        Ok(self.coeffs[word_index(word, self.alphabet)?])
    }

    /// Iterates `(word, coefficient)` in storage order.
    pub fn iter_words(&self) -> impl Iterator<Item = (Word, f64)> + '_ {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| (Word::from_index(i, self.alphabet), *c))
    }

    /// Drops all levels above `order`.
    pub fn truncate(&self, order: usize) -> Self {
        let order = order.min(self.order);
        Self {
            alphabet: self.alphabet,
            order,
            coeffs: self.coeffs[..series_len(self.alphabet, order)].to_vec(),
        }
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.alphabet != other.alphabet || self.order != other.order {
            return Err(Error::DimensionMismatch(format!(
                "series over alphabet {} order {} vs alphabet {} order {}",
                self.alphabet, self.order, other.alphabet, other.order
            )));
        }
        Ok(())
    }

    /// The truncated tensor product: for every word `w` of length at most the
    /// order, the sum of `self[u] * other[v]` over all splittings `w = uv`.
    pub fn chen_product(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = Self::zeros(self.alphabet, self.order);
        chen_product_into(self, other, &mut out.coeffs);
        Ok(out)
    }

    /// Multiplies level `k` by `lambda^k`.
    pub fn dilate(&self, lambda: f64) -> Self {
        let mut out = self.clone();
        let mut scale = 1.0;
        for k in 0..=self.order {
            let start = level_offset(self.alphabet, k);
            let len = self.alphabet.pow(k as u32);
            for c in &mut out.coeffs[start..start + len] {
                *c *= scale;
            }
            scale *= lambda;
        }
        out
    }

    /// Coefficient-wise difference.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Self {
            alphabet: self.alphabet,
            order: self.order,
            coeffs,
        })
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Accumulates `a * b` into `out`, which must be zeroed and laid out like `a`.
pub(crate) fn chen_product_into(
    a: &TruncatedTensorSeries,
    b: &TruncatedTensorSeries,
    out: &mut [f64],
) {
    let alphabet = a.alphabet;
    let mut offsets = Vec::with_capacity(a.order + 2);
    let mut sizes = Vec::with_capacity(a.order + 1);
    let mut acc = 0;
    for k in 0..=a.order {
        offsets.push(acc);
        let size = alphabet.pow(k as u32);
        sizes.push(size);
        acc += size;
    }
    for n in 0..=a.order {
        let out_level = &mut out[offsets[n]..offsets[n] + sizes[n]];
        for k in 0..=n {
            let a_level = &a.coeffs[offsets[k]..offsets[k] + sizes[k]];
            let b_level = &b.coeffs[offsets[n - k]..offsets[n - k] + sizes[n - k]];
            let stride = sizes[n - k];
            for (u, &au) in a_level.iter().enumerate() {
                if au == 0.0 {
                    continue;
                }
                let dst = &mut out_level[u * stride..(u + 1) * stride];
                for (o, &bv) in dst.iter_mut().zip(b_level) {
                    *o += au * bv;
                }
            }
        }
    }
}

/// Signature of a single linear segment with increment `delta`: the
/// coefficient of `i_1 .. i_k` is `prod_l delta[i_l] / k!`.
pub fn segment_signature(delta: &[f64], order: usize) -> TruncatedTensorSeries {
    let alphabet = delta.len();
    let mut s = TruncatedTensorSeries::unit(alphabet, order);
    let mut prev_start = 0;
    let mut prev_len = 1;
    for k in 1..=order {
        let start = prev_start + prev_len;
        let inv_k = 1.0 / k as f64;
        for u in 0..prev_len {
            let base = s.coeffs[prev_start + u] * inv_k;
            for (i, &di) in delta.iter().enumerate() {
                s.coeffs[start + u * alphabet + i] = base * di;
            }
        }
        prev_start = start;
        prev_len *= alphabet;
    }
    s
}

/// Signature of the whole path: the ordered product of its segment
/// signatures. A path with a single point has the unit signature.
pub fn path_signature(path: &impl AsRef<LinearPath>, order: usize) -> TruncatedTensorSeries {
    let path = path.as_ref();
    let mut acc = TruncatedTensorSeries::unit(path.channels(), order);
    let mut scratch = TruncatedTensorSeries::zeros(path.channels(), order);
    for j in 0..path.segments() {
        let seg = segment_signature(&path.increment(j), order);
        scratch.coeffs.iter_mut().for_each(|c| *c = 0.0);
        chen_product_into(&acc, &seg, &mut scratch.coeffs);
        std::mem::swap(&mut acc, &mut scratch);
    }
    acc
}

/// Signatures over `[0, t_j]` for every `j = 1..N`, built incrementally.
pub fn prefix_signatures(path: &LinearPath, order: usize) -> Vec<TruncatedTensorSeries> {
    let mut rows = Vec::with_capacity(path.segments());
    let mut acc = TruncatedTensorSeries::unit(path.channels(), order);
    for j in 0..path.segments() {
        let seg = segment_signature(&path.increment(j), order);
        let mut next = TruncatedTensorSeries::zeros(path.channels(), order);
        chen_product_into(&acc, &seg, &mut next.coeffs);
        rows.push(next.clone());
        acc = next;
    }
    rows
}

/// Running signatures of an augmented path: row `j - 1` is the signature
/// over `[0, t_j]`.
#[derive(Debug, Clone)]
pub struct SignatureStream {
    grid: TimeGrid,
    rows: Vec<TruncatedTensorSeries>,
}

impl SignatureStream {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn rows(&self) -> &[TruncatedTensorSeries] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

pub fn signature_stream(x: &AugmentedPath, order: usize) -> SignatureStream {
    SignatureStream {
        grid: x.grid().clone(),
        rows: prefix_signatures(x.as_linear(), order),
    }
}

/// All interleavings of `a` and `b` that keep the internal order of each,
/// with multiplicity. There are `binomial(|a| + |b|, |a|)` of them.
pub fn shuffle_product(a: &Word, b: &Word) -> Vec<Word> {
    let mut out = Vec::new();
    let mut buf = Vec::with_capacity(a.len() + b.len());
    shuffle_rec(a.letters(), b.letters(), &mut buf, &mut out);
    out
}

fn shuffle_rec(a: &[usize], b: &[usize], buf: &mut Vec<usize>, out: &mut Vec<Word>) {
    if a.is_empty() || b.is_empty() {
        let mut w = buf.clone();
        w.extend_from_slice(a);
        w.extend_from_slice(b);
        out.push(Word(w));
        return;
    }
    buf.push(a[0]);
    shuffle_rec(&a[1..], b, buf, out);
    buf.pop();
    buf.push(b[0]);
    shuffle_rec(a, &b[1..], buf, out);
    buf.pop();
}

pub fn dilate_signature(s: &TruncatedTensorSeries, lambda: f64) -> TruncatedTensorSeries {
    s.dilate(lambda)
}
