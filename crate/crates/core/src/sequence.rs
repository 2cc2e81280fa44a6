//! Symbols, words and one-/two-sided sequences over a finite alphabet.
//!
//! A point of `A^ℕ` is represented as a finite head followed by a tail rule
//! (a constant symbol or a repeated word). Chains only ever prepend symbols,
//! so the head is stored most-recent-last to make prepending O(1).
//!
//! Text form is `head|tail`, e.g. `10|c0` (head `10`, then constant `0`) or
//! `1|p01` (head `1`, then `0101…`).

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// A symbol is an index into its [`Alphabet`].
pub type Symbol = u8;

/// An ordered finite alphabet. Symbols are rendered as single characters and
/// the order fixes the canonical (lexicographic) enumeration of words.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Alphabet {
    labels: Arc<[char]>,
}

impl Alphabet {
    pub fn new(labels: Vec<char>) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::Domain(format!(
                "alphabet needs at least 2 symbols, got {}",
                labels.len()
            )));
        }
        if labels.len() > usize::from(u8::MAX) {
            return Err(Error::Domain("alphabet too large".into()));
        }
        for (i, c) in labels.iter().enumerate() {
            if labels[..i].contains(c) {
                return Err(Error::Domain(format!("duplicate symbol {c:?}")));
            }
            if *c == '|' {
                return Err(Error::Domain("'|' is reserved".into()));
            }
        }
        Ok(Self { labels: labels.into() })
    }

    /// `{0, 1}`.
    pub fn binary() -> Self {
        Self { labels: Arc::from(['0', '1']) }
    }

    /// `{-1, +1}` rendered as `-` and `+`; symbol 0 is the minus spin.
    pub fn spins() -> Self {
        Self { labels: Arc::from(['-', '+']) }
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[char] {
        &self.labels
    }

    pub fn label(&self, s: Symbol) -> char {
        self.labels[usize::from(s)]
    }

    pub fn contains(&self, s: Symbol) -> bool {
        usize::from(s) < self.labels.len()
    }

    pub fn index_of(&self, c: char) -> Option<Symbol> {
        self.labels.iter().position(|&l| l == c).map(|i| i as Symbol)
    }

    fn check(&self, s: Symbol) -> Result<()> {
        if self.contains(s) {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "symbol {s} not in alphabet of size {}",
                self.size()
            )))
        }
    }

    /// Number of words of length `len`, or `None` on overflow.
    pub fn word_count(&self, len: usize) -> Option<u128> {
        (self.size() as u128).checked_pow(u32::try_from(len).ok()?)
    }

    /// Renders a word in this alphabet.
    pub fn render(&self, word: &[Symbol]) -> String {
        word.iter().map(|&s| self.label(s)).collect()
    }

    /// Parses a word written in this alphabet's labels.
    pub fn parse_word(&self, text: &str) -> Result<Word> {
        text.chars()
            .map(|c| {
                self.index_of(c)
                    .ok_or_else(|| Error::Parse(format!("symbol {c:?} not in alphabet {:?}", self.labels())))
            })
            .collect::<Result<Vec<_>>>()
            .map(Word::from)
    }
}

impl fmt::Debug for Alphabet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Alphabet({})", self.labels.iter().collect::<String>())
    }
}

/// Writes the digits of `index` in base `base` into `out`, most significant
/// first. This is the canonical enumeration of `A^out.len()`.
pub fn decode_word(mut index: usize, base: usize, out: &mut [Symbol]) {
    for slot in out.iter_mut().rev() {
        *slot = (index % base) as Symbol;
        index /= base;
    }
}

/// Inverse of [`decode_word`].
pub fn encode_word(word: &[Symbol], base: usize) -> usize {
    word.iter().fold(0, |acc, &s| acc * base + usize::from(s))
}

/// A finite word `w_0 w_1 … w_{n-1}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word(Vec<Symbol>);

impl Word {
    pub fn new(alphabet: &Alphabet, symbols: Vec<Symbol>) -> Result<Self> {
        for &s in &symbols {
            alphabet.check(s)?;
        }
        Ok(Self(symbols))
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.0
    }

    pub fn into_symbols(self) -> Vec<Symbol> {
        self.0
    }
}

impl From<Vec<Symbol>> for Word {
    fn from(v: Vec<Symbol>) -> Self {
        Self(v)
    }
}

impl std::ops::Index<usize> for Word {
    type Output = Symbol;
    fn index(&self, i: usize) -> &Symbol {
        &self.0[i]
    }
}

/// How a state continues after its head.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TailRule {
    Constant(Symbol),
    /// Repeats the word forever; never empty.
    Periodic(Word),
}

impl TailRule {
    pub fn periodic(word: Word) -> Result<Self> {
        if word.is_empty() {
            return Err(Error::Domain("periodic tail word must be non-empty".into()));
        }
        Ok(Self::Periodic(word))
    }

    pub fn coordinate(&self, j: usize) -> Symbol {
        match self {
            TailRule::Constant(s) => *s,
            TailRule::Periodic(w) => w[j % w.len()],
        }
    }

    /// Length of the smallest repeating unit as stored.
    pub fn period(&self) -> usize {
        match self {
            TailRule::Constant(_) => 1,
            TailRule::Periodic(w) => w.len(),
        }
    }

    fn check(&self, alphabet: &Alphabet) -> Result<()> {
        match self {
            TailRule::Constant(s) => alphabet.check(*s),
            TailRule::Periodic(w) => {
                if w.is_empty() {
                    return Err(Error::Domain("periodic tail word must be non-empty".into()));
                }
                w.symbols().iter().try_for_each(|&s| alphabet.check(s))
            }
        }
    }

    /// Drops the first tail symbol.
    fn advance(&mut self) {
        if let TailRule::Periodic(w) = self {
            w.0.rotate_left(1);
        }
    }
}

/// A point `x = x_0 x_1 …` of the one-sided shift space.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct State {
    alphabet: Alphabet,
    /// Head stored in reverse: `head_rev[len - 1]` is `x_0`.
    head_rev: Vec<Symbol>,
    tail: TailRule,
}

impl State {
    pub fn new(alphabet: &Alphabet, head: Word, tail: TailRule) -> Result<Self> {
        for &s in head.symbols() {
            alphabet.check(s)?;
        }
        tail.check(alphabet)?;
        let mut head_rev = head.into_symbols();
        head_rev.reverse();
        Ok(Self { alphabet: alphabet.clone(), head_rev, tail })
    }

    pub fn constant(alphabet: &Alphabet, s: Symbol) -> Result<Self> {
        Self::new(alphabet, Word::empty(), TailRule::Constant(s))
    }

    pub fn periodic(alphabet: &Alphabet, word: Word) -> Result<Self> {
        Self::new(alphabet, Word::empty(), TailRule::periodic(word)?)
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn tail(&self) -> &TailRule {
        &self.tail
    }

    pub fn head_len(&self) -> usize {
        self.head_rev.len()
    }

    /// The head in natural order `x_0 … x_{h-1}`.
    pub fn head(&self) -> Word {
        Word(self.head_rev.iter().rev().copied().collect())
    }

    pub fn coordinate(&self, i: usize) -> Symbol {
        let h = self.head_rev.len();
        if i < h {
            self.head_rev[h - 1 - i]
        } else {
            self.tail.coordinate(i - h)
        }
    }

    /// Writes `x_0 … x_{n-1}` into `out` (n = `out.len()`).
    pub fn fill_prefix(&self, out: &mut [Symbol]) {
        let h = self.head_rev.len();
        let from_head = out.len().min(h);
        for (slot, &s) in out[..from_head].iter_mut().zip(self.head_rev.iter().rev()) {
            *slot = s;
        }
        for (j, slot) in out[from_head..].iter_mut().enumerate() {
            *slot = self.tail.coordinate(j);
        }
    }

    /// `ι_n(x)`.
    pub fn prefix(&self, n: usize) -> Word {
        let mut out = vec![0; n];
        self.fill_prefix(&mut out);
        Word(out)
    }

    /// `a·x`.
    pub fn prepend(&self, a: Symbol) -> Result<State> {
        let mut next = self.clone();
        next.push_front(a)?;
        Ok(next)
    }

    /// In-place `x ← a·x`.
    pub fn push_front(&mut self, a: Symbol) -> Result<()> {
        self.alphabet.check(a)?;
        self.head_rev.push(a);
        Ok(())
    }

    /// Prepends a whole word so that the result starts with `word`.
    pub fn push_word(&mut self, word: &[Symbol]) -> Result<()> {
        for &a in word.iter().rev() {
            self.push_front(a)?;
        }
        Ok(())
    }

    /// `T x`.
    pub fn shift(&self) -> State {
        let mut next = self.clone();
        next.pop_front();
        next
    }

    /// In-place `x ← T x`, returning the removed `x_0`.
    pub fn pop_front(&mut self) -> Symbol {
        match self.head_rev.pop() {
            Some(s) => s,
            None => {
                let s = self.tail.coordinate(0);
                self.tail.advance();
                s
            }
        }
    }

    /// Builds a state from a natural-order head without validation.
    pub(crate) fn from_raw(alphabet: &Alphabet, head: Vec<Symbol>, tail: TailRule) -> Self {
        let mut head_rev = head;
        head_rev.reverse();
        Self { alphabet: alphabet.clone(), head_rev, tail }
    }

    /// Parses `head|tail`; the tail is `c<sym>` or `p<word>`.
    pub fn parse(alphabet: &Alphabet, text: &str) -> Result<State> {
        let (head, tail) = text
            .split_once('|')
            .ok_or_else(|| Error::Parse(format!("state {text:?} lacks '|'")))?;
        let head = alphabet.parse_word(head)?;
        let mut chars = tail.chars();
        let tail = match chars.next() {
            Some('c') => {
                let rest: Vec<char> = chars.collect();
                if rest.len() != 1 {
                    return Err(Error::Parse(format!("constant tail {tail:?} needs exactly one symbol")));
                }
                TailRule::Constant(
                    alphabet
                        .index_of(rest[0])
                        .ok_or_else(|| Error::Parse(format!("symbol {:?} not in alphabet", rest[0])))?,
                )
            }
            Some('p') => TailRule::periodic(alphabet.parse_word(chars.as_str())?)
                .map_err(|e| Error::Parse(e.to_string()))?,
            _ => return Err(Error::Parse(format!("tail {tail:?} must start with 'c' or 'p'"))),
        };
        State::new(alphabet, head, tail)
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let head: String = self.head_rev.iter().rev().map(|&s| self.alphabet.label(s)).collect();
        match &self.tail {
            TailRule::Constant(s) => write!(f, "{head}|c{}", self.alphabet.label(*s)),
            TailRule::Periodic(w) => write!(f, "{head}|p{}", self.alphabet.render(w.symbols())),
        }
    }
}

impl fmt::Debug for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "State({self})")
    }
}

/// Result of comparing two states up to a horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Agreement {
    /// `min(κ(x, y), horizon)`.
    pub value: usize,
    /// The states agree on all of `[0, horizon)`.
    pub saturated: bool,
}

/// Length of initial agreement κ(x, y), capped at `horizon`.
pub fn agreement_length(x: &State, y: &State, horizon: usize) -> Agreement {
    match (0..horizon).find(|&i| x.coordinate(i) != y.coordinate(i)) {
        Some(i) => Agreement { value: i, saturated: false },
        None => Agreement { value: horizon, saturated: true },
    }
}

/// A point of the two-sided space `A^ℤ`: an explicit window `[lo, hi]`
/// (containing 0) plus tails running left from `lo` and right from `hi`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BiState {
    alphabet: Alphabet,
    lo: i64,
    window: Vec<Symbol>,
    left_tail: TailRule,
    right_tail: TailRule,
}

impl BiState {
    /// `window[0]` sits at index `lo`.
    pub fn new(
        alphabet: &Alphabet,
        lo: i64,
        window: Word,
        left_tail: TailRule,
        right_tail: TailRule,
    ) -> Result<Self> {
        if window.is_empty() {
            return Err(Error::Domain("bi-infinite window must be non-empty".into()));
        }
        let hi = lo + window.len() as i64 - 1;
        if lo > 0 || hi < 0 {
            return Err(Error::Domain(format!("window [{lo}, {hi}] must contain 0")));
        }
        for &s in window.symbols() {
            alphabet.check(s)?;
        }
        left_tail.check(alphabet)?;
        right_tail.check(alphabet)?;
        Ok(Self { alphabet: alphabet.clone(), lo, window: window.into_symbols(), left_tail, right_tail })
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.lo + self.window.len() as i64 - 1
    }

    pub fn coordinate(&self, i: i64) -> Symbol {
        if i < self.lo {
            self.left_tail.coordinate((self.lo - 1 - i) as usize)
        } else if i > self.hi() {
            self.right_tail.coordinate((i - self.hi() - 1) as usize)
        } else {
            self.window[(i - self.lo) as usize]
        }
    }

    /// The non-destructive right shift, `(T̄x̄)_i = x̄_{i-1}`.
    pub fn shift_right(&self) -> BiState {
        let mut next = self.clone();
        next.lo += 1;
        if next.lo > 0 {
            // expose x̄_{-1}, which becomes the new coordinate 0
            let s = next.left_tail.coordinate(0);
            next.left_tail.advance();
            next.window.insert(0, s);
            next.lo = 0;
        }
        next
    }

    /// `π(x̄) = x̄_0 x̄_{-1} x̄_{-2} …`.
    pub fn project(&self) -> State {
        let head: Vec<Symbol> = (self.lo..=0).rev().map(|i| self.coordinate(i)).collect();
        State::from_raw(&self.alphabet, head, self.left_tail.clone())
    }
}
