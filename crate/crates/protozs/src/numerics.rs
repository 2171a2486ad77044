//! Exactly rounded floating-point summation.
//!
//! Prototype means and gradient accumulation sum many small terms; plain
//! sequential addition makes the result depend on summand order, which
//! breaks reproducibility guarantees like "a duplicated corpus trains
//! identically to doubled epochs". The accumulator here keeps a list of
//! non-overlapping partials (Shewchuk's error-free transformation) and
//! rounds once at the end, so the result is the correctly rounded value of
//! the exact real sum: order-independent, and exactly doubled when every
//! input appears twice.

/// Streaming exact-sum accumulator. Feed values with [`Fsum::add`], read
/// the correctly rounded total with [`Fsum::value`], and reuse the
/// allocation across sums with [`Fsum::reset`].
#[derive(Debug, Default, Clone)]
pub struct Fsum {
    partials: Vec<f64>,
}

impl Fsum {
    pub fn new() -> Self {
        Fsum::default()
    }

    pub fn reset(&mut self) {
        self.partials.clear();
    }

    pub fn add(&mut self, mut x: f64) {
        let mut i = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        self.partials.truncate(i);
        self.partials.push(x);
    }

    /// Correctly rounded sum of everything added so far. Rounds from the
    /// most significant partial down, with a half-even correction when the
    /// residual sits exactly on a rounding boundary.
    pub fn value(&self) -> f64 {
        let partials = &self.partials;
        let mut n = partials.len();
        if n == 0 {
            return 0.0;
        }
        n -= 1;
        let mut hi = partials[n];
        let mut lo = 0.0;
        while n > 0 {
            let x = hi;
            n -= 1;
            let y = partials[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
        hi
    }
}

/// Correctly rounded sum of an iterator of values.
pub fn fsum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = Fsum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}
