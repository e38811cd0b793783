//! Small sample statistics shared by the Monte Carlo diagnostics.

/// Sample mean with a normal-approximation 95% interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanCi {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    /// Standard error of the mean.
    pub stderr: f64,
    pub n: usize,
}

pub fn mean_ci(xs: &[f64]) -> MeanCi {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let stderr = if n > 1 {
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    MeanCi { mean, lo: mean - 1.96 * stderr, hi: mean + 1.96 * stderr, stderr, n }
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Mean of `xs` with a standard error from `batches` contiguous batch means,
/// which accounts for serial correlation in a time series.
pub fn batch_means(xs: &[f64], batches: usize) -> MeanCi {
    let b = batches.max(1).min(xs.len());
    let len = xs.len() / b;
    let means: Vec<f64> = (0..b).map(|i| xs[i * len..(i + 1) * len].iter().sum::<f64>() / len as f64).collect();
    let mut ci = mean_ci(&means);
    ci.mean = xs[..b * len].iter().sum::<f64>() / (b * len) as f64;
    ci.lo = ci.mean - 1.96 * ci.stderr;
    ci.hi = ci.mean + 1.96 * ci.stderr;
    ci
}

/// Ordinary least squares `y ≈ a + b x`; returns `(a, b, stderr of b)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let rss: f64 = x.iter().zip(y).map(|(u, v)| (v - a - b * u).powi(2)).sum();
    let se = if x.len() > 2 { (rss / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    (a, b, se)
}
