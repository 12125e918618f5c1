//! Compensated summation, moments and histograms.

use num_complex::Complex64;

/// Neumaier-compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = Neumaier::default();
    values.into_iter().for_each(|v| s.add(v));
    s.value()
}

pub fn csum(values: impl IntoIterator<Item = Complex64>) -> Complex64 {
    let (mut re, mut im) = (Neumaier::default(), Neumaier::default());
    for v in values {
        re.add(v.re);
        im.add(v.im);
    }
    Complex64::new(re.value(), im.value())
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = sum(values.iter().copied()) / n;
    if values.len() < 2 {
        return (m, f64::INFINITY);
    }
    let var = sum(values.iter().map(|v| (v - m) * (v - m))) / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Complex mean with the standard error of its modulus-scale (`sqrt(E|z - m|^2 / n)`).
pub fn cmean_stderr(values: &[Complex64]) -> (Complex64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (Complex64::new(f64::NAN, f64::NAN), f64::NAN);
    }
    let m = csum(values.iter().copied()) / n;
    if values.len() < 2 {
        return (m, f64::INFINITY);
    }
    let var = sum(values.iter().map(|v| (v - m).norm_sqr())) / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Uniform bins on `[lo, hi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bins {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Bins {
    pub fn new(lo: f64, hi: f64, n: usize) -> Self {
        assert!(hi > lo && n > 0);
        Self { lo, hi, n }
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.n as f64
    }

    pub fn center(&self, k: usize) -> f64 {
        self.lo + (k as f64 + 0.5) * self.width()
    }

    pub fn edge(&self, k: usize) -> f64 {
        self.lo + k as f64 * self.width()
    }

    pub fn index(&self, x: f64) -> Option<usize> {
        if !(x >= self.lo && x < self.hi) {
            return None;
        }
        Some((((x - self.lo) / self.width()) as usize).min(self.n - 1))
    }

    pub fn counts(&self, xs: impl IntoIterator<Item = f64>) -> Vec<usize> {
        let mut c = vec![0; self.n];
        for x in xs {
            if let Some(k) = self.index(x) {
                c[k] += 1;
            }
        }
        c
    }
}

/// Total variation distance between an empirical histogram (all samples,
/// including those outside the bins) and bin probabilities.
pub fn tv_distance(counts: &[usize], n_samples: usize, probs: &[f64]) -> f64 {
    let n = n_samples as f64;
    let inside = sum(counts.iter().zip(probs).map(|(&c, &p)| (c as f64 / n - p).abs()));
    let outside_emp = 1.0 - counts.iter().sum::<usize>() as f64 / n;
    let outside_p = 1.0 - sum(probs.iter().copied());
    0.5 * (inside + (outside_emp - outside_p).abs())
}
