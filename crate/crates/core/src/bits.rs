//! Packed row-major bit matrix used for binary (upper-layer) centers.
//!
//! Row `s` holds one bit per center, so scoring an example only walks the
//! rows of the coordinates that are active in its code.

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    words_per_row: usize,
    words: Vec<u64>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let words_per_row = cols.div_ceil(64);
        BitMatrix {
            rows,
            cols,
            words_per_row,
            words: vec![0; rows * words_per_row],
        }
    }

    /// Builds a matrix from raw little-endian word storage. Returns `None`
    /// when the word count is wrong or padding bits past `cols` are set.
    pub fn from_words(rows: usize, cols: usize, words: Vec<u64>) -> Option<Self> {
        let words_per_row = cols.div_ceil(64);
        if words.len() != rows * words_per_row {
            return None;
        }
        let m = BitMatrix {
            rows,
            cols,
            words_per_row,
            words,
        };
        if cols % 64 != 0 {
            let pad_mask = !((1u64 << (cols % 64)) - 1);
            for r in 0..rows {
                if m.row_words(r)[words_per_row - 1] & pad_mask != 0 {
                    return None;
                }
            }
        }
        Some(m)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn words_per_row(&self) -> usize {
        self.words_per_row
    }

    #[inline]
    pub fn row_words(&self, row: usize) -> &[u64] {
        let start = row * self.words_per_row;
        &self.words[start..start + self.words_per_row]
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        debug_assert!(row < self.rows && col < self.cols);
        let w = self.words[row * self.words_per_row + col / 64];
        (w >> (col % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        debug_assert!(row < self.rows && col < self.cols);
        let w = &mut self.words[row * self.words_per_row + col / 64];
        let mask = 1u64 << (col % 64);
        if value {
            *w |= mask;
        } else {
            *w &= !mask;
        }
    }

    /// Calls `f(col)` for every set bit of `row`, in increasing column order.
    #[inline]
    pub fn for_each_one(&self, row: usize, mut f: impl FnMut(usize)) {
        for (wi, &word) in self.row_words(row).iter().enumerate() {
            let mut w = word;
            while w != 0 {
                let bit = w.trailing_zeros() as usize;
                f(wi * 64 + bit);
                w &= w - 1;
            }
        }
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// One-step cyclic rotation of a row: column `j` receives the old value
    /// of column `(j - 1) mod cols`.
    pub fn rotate_row(&mut self, row: usize) {
        if self.cols <= 1 {
            return;
        }
        let last = self.get(row, self.cols - 1);
        let start = row * self.words_per_row;
        let row_words = &mut self.words[start..start + self.words_per_row];
        let mut carry = 0u64;
        for w in row_words.iter_mut() {
            let next_carry = *w >> 63;
            *w = (*w << 1) | carry;
            carry = next_carry;
        }
        if self.cols % 64 != 0 {
            let mask = (1u64 << (self.cols % 64)) - 1;
            row_words[self.words_per_row - 1] &= mask;
        }
        row_words[0] = (row_words[0] & !1) | last as u64;
    }
}
