//! Incremental Gaussian elimination over GF(2) with bitset rows.

/// Growable bit vector over edge indices.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BitRow {
    words: Vec<u64>,
}

impl BitRow {
    pub fn with_capacity(bits: usize) -> Self {
        Self { words: vec![0; bits.div_ceil(64)] }
    }

    pub fn from_indices(indices: impl IntoIterator<Item = usize>) -> Self {
        let mut row = BitRow::default();
        for i in indices {
            row.toggle(i);
        }
        row
    }

    pub fn toggle(&mut self, bit: usize) {
        let w = bit / 64;
        if w >= self.words.len() {
            self.words.resize(w + 1, 0);
        }
        self.words[w] ^= 1 << (bit % 64);
    }

    pub fn get(&self, bit: usize) -> bool {
        self.words.get(bit / 64).is_some_and(|w| w >> (bit % 64) & 1 == 1)
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Lowest set bit at or after word `from_word`.
    fn lowest_from(&self, from_word: usize) -> Option<usize> {
        self.words[from_word.min(self.words.len())..].iter().position(|&w| w != 0).map(|k| {
            let w = from_word + k;
            w * 64 + self.words[w].trailing_zeros() as usize
        })
    }

    pub fn lowest(&self) -> Option<usize> {
        self.lowest_from(0)
    }

    /// `self ^= other`, touching only words at or after `from_word`.
    fn xor_from(&mut self, other: &BitRow, from_word: usize) {
        if other.words.len() > self.words.len() {
            self.words.resize(other.words.len(), 0);
        }
        for (a, b) in self.words[from_word..].iter_mut().zip(&other.words[from_word..]) {
            *a ^= *b;
        }
    }

    pub fn xor(&mut self, other: &BitRow) {
        self.xor_from(other, 0);
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut bits = w;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let t = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(wi * 64 + t)
            })
        })
    }
}

/// Row-echelon basis keyed by each row's lowest set bit.
#[derive(Debug, Clone, Default)]
pub struct Eliminator {
    rows: Vec<BitRow>,
    /// `pivot_of[col]` is the row whose lowest bit is `col`.
    pivot_of: Vec<u32>,
}

const NO_ROW: u32 = u32::MAX;

impl Eliminator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    fn pivot(&self, col: usize) -> Option<usize> {
        match self.pivot_of.get(col) {
            Some(&r) if r != NO_ROW => Some(r as usize),
            _ => None,
        }
    }

    /// Reduces `row` against the basis; returns the residual's lowest bit,
    /// or `None` when `row` lies in the span.
    fn reduce(&self, row: &mut BitRow) -> Option<usize> {
        let mut word = 0;
        while let Some(col) = row.lowest_from(word) {
            match self.pivot(col) {
                Some(r) => {
                    word = col / 64;
                    row.xor_from(&self.rows[r], word);
                }
                None => return Some(col),
            }
        }
        None
    }

    /// True if `row` is not in the span of the inserted rows.
    pub fn is_independent(&self, row: &BitRow) -> bool {
        let mut r = row.clone();
        self.reduce(&mut r).is_some()
    }

    /// Inserts `row` if independent; returns whether the rank grew.
    pub fn insert(&mut self, mut row: BitRow) -> bool {
        match self.reduce(&mut row) {
            Some(col) => {
                if self.pivot_of.len() <= col {
                    self.pivot_of.resize(col + 1, NO_ROW);
                }
                self.pivot_of[col] = self.rows.len() as u32;
                self.rows.push(row);
                true
            }
            None => false,
        }
    }
}

/// Rank over GF(2) of a set of rows, computed from scratch.
pub fn rank_of(rows: impl IntoIterator<Item = BitRow>) -> usize {
    let mut e = Eliminator::new();
    for r in rows {
        e.insert(r);
    }
    e.rank()
}
