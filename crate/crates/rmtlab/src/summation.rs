//! Compensated and pairwise summation.
//!
//! Quadrature accumulates tens of millions of panel contributions and the
//! Monte Carlo mergers combine per-worker partials in a fixed order; both use
//! the routines here so that results are independent of chunking and stable
//! to the last couple of ulps.

/// Neumaier's variant of Kahan summation. The compensation term also catches
/// the case where the running sum is smaller than the addend.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl std::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

/// Sums a slice by recursive halving. Error grows like log(n) instead of n,
/// and the result depends only on the slice contents, not on chunking.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BASE: usize = 32;
    if values.len() <= BASE {
        let mut acc = CompensatedSum::new();
        for &v in values {
            acc.add(v);
        }
        return acc.value();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Compensated sum of an iterator, convenience wrapper.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_beats_naive_on_ill_conditioned_input() {
        // 1 + 1e-16 repeated: naive summation loses every small addend.
        let mut acc = CompensatedSum::new();
        acc.add(1.0);
        for _ in 0..1000 {
            acc.add(1e-16);
        }
        acc.add(-1.0);
        let exact = 1000.0 * 1e-16;
        assert!((acc.value() - exact).abs() < 1e-26);
    }

    #[test]
    fn pairwise_matches_exact_on_harmonic_series() {
        let values: Vec<f64> = (1..=100_000).map(|k| 1.0 / k as f64).collect();
        let pairwise = pairwise_sum(&values);
        // Reference computed with compensation, which is good to the last ulp here.
        let reference = compensated_sum(values.iter().copied());
        assert!((pairwise - reference).abs() <= 1e-12 * reference.abs());
    }

    #[test]
    fn sums_are_chunking_independent() {
        let values: Vec<f64> = (0..4096)
            .map(|k| ((k * 2654435761u64 as usize) % 1000) as f64 * 1e-7 - 0.03)
            .collect();
        let whole = pairwise_sum(&values);
        let split = pairwise_sum(&values[..2048]) + pairwise_sum(&values[2048..]);
        assert!((whole - split).abs() <= 1e-13 * whole.abs().max(1.0));
    }
}
