//! Small numeric helpers shared by the estimators.

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

/// `log2(max(p, 1 - p))`, the log-probability of the more likely bit value.
#[inline]
pub fn log2_dominant(p: f64) -> f64 {
    p.max(1.0 - p).log2()
}

/// `-log2(x)` returning `+0.0` instead of `-0.0` for `x == 1`.
#[inline]
pub fn neg_log2(x: f64) -> f64 {
    let v = -x.log2();
    if v == 0.0 {
        0.0
    } else {
        v
    }
}

/// Pascal triangle of binomial coefficients up to `n` (inclusive), exact in u128.
///
/// Valid for `n <= 127`, which covers every block length used here.
#[derive(Debug, Clone)]
pub struct BinomialTable {
    rows: Vec<Vec<u128>>,
}

impl BinomialTable {
    pub fn new(n: usize) -> Self {
        assert!(n <= 127, "binomial table limited to n <= 127");
        let mut rows: Vec<Vec<u128>> = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let mut row = vec![1u128; i + 1];
            for j in 1..i {
                row[j] = rows[i - 1][j - 1] + rows[i - 1][j];
            }
            rows.push(row);
        }
        Self { rows }
    }

    #[inline]
    pub fn get(&self, n: usize, k: usize) -> u128 {
        if k > n {
            0
        } else {
            self.rows[n][k]
        }
    }
}

/// `2^e` as u128 for `e <= 127`.
#[inline]
pub fn pow2(e: u32) -> u128 {
    1u128 << e
}
