use super::IfsModel;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum WordKind {
    Open,
    Closed,
}

/// Admissible symbol sequence. Open words of length n carry n+1 letters;
/// closed words of period n carry n letters read cyclically.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Word {
    pub letters: Vec<usize>,
    pub kind: WordKind,
}

impl Word {
    pub fn open(letters: Vec<usize>) -> Word {
        Word { letters, kind: WordKind::Open }
    }

    pub fn closed(letters: Vec<usize>) -> Word {
        Word { letters, kind: WordKind::Closed }
    }

    /// Number of transitions (open) or the period (closed).
    pub fn len(&self) -> usize {
        match self.kind {
            WordKind::Open => self.letters.len().saturating_sub(1),
            WordKind::Closed => self.letters.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }
}

/// Lexicographic iterator over admissible words.
pub struct WordIter<'a> {
    model: &'a IfsModel,
    kind: WordKind,
    letters: Vec<usize>,
    started: bool,
    done: bool,
}

/// Every admissible word of length n (open) or period n (closed), lexicographically.
pub fn enumerate_words(model: &IfsModel, n: usize, kind: WordKind) -> WordIter<'_> {
    let len = match kind {
        WordKind::Open => n + 1,
        WordKind::Closed => n,
    };
    WordIter { model, kind, letters: vec![0; len], started: false, done: len == 0 }
}

impl WordIter<'_> {
    fn admissible(&self) -> bool {
        let l = &self.letters;
        if l.windows(2).any(|w| !self.model.allowed(w[0], w[1])) {
            return false;
        }
        self.kind == WordKind::Open || self.model.allowed(*l.last().unwrap(), l[0])
    }

    // odometer step with pruning on the first inadmissible transition
    fn advance(&mut self) -> bool {
        let n = self.model.n_symbols();
        let len = self.letters.len();
        let mut pos = len - 1;
        if let Some(bad) = self.letters.windows(2).position(|w| !self.model.allowed(w[0], w[1])) {
            pos = bad + 1;
            for p in (pos + 1)..len {
                self.letters[p] = n - 1;
            }
        }
        loop {
            if self.letters[pos] + 1 < n {
                self.letters[pos] += 1;
                for p in (pos + 1)..len {
                    self.letters[p] = 0;
                }
                return true;
            }
            if pos == 0 {
                return false;
            }
            pos -= 1;
        }
    }
}

impl Iterator for WordIter<'_> {
    type Item = Word;

    fn next(&mut self) -> Option<Word> {
        if self.done {
            return None;
        }
        if self.started && !self.advance() {
            self.done = true;
            return None;
        }
        self.started = true;
        loop {
            if self.admissible() {
                return Some(Word { letters: self.letters.clone(), kind: self.kind });
            }
            if !self.advance() {
                self.done = true;
                return None;
            }
        }
    }
}

/// Depth-first visit of all open words of length n starting at each letter;
/// `visit(letters)` is called on every complete word.
pub fn for_each_open_word<F: FnMut(&[usize])>(model: &IfsModel, n: usize, mut visit: F) {
    fn rec<F: FnMut(&[usize])>(m: &IfsModel, n: usize, buf: &mut Vec<usize>, visit: &mut F) {
        if buf.len() == n + 1 {
            visit(buf);
            return;
        }
        let last = *buf.last().unwrap();
        for j in 0..m.n_symbols() {
            if m.allowed(last, j) {
                buf.push(j);
                rec(m, n, buf, visit);
                buf.pop();
            }
        }
    }
    let mut buf = Vec::with_capacity(n + 1);
    for a in 0..model.n_symbols() {
        buf.push(a);
        rec(model, n, &mut buf, &mut visit);
        buf.pop();
    }
}
