use std::f64::consts::PI;

/// Linear warmup to `peak` over `warmup` steps, then cosine decay to zero at
/// `total`. Defined for `0 <= step <= total`.
pub fn cosine_warmup_lr(step: usize, warmup: usize, total: usize, peak: f64) -> f64 {
    if step < warmup {
        return peak * step as f64 / warmup as f64;
    }
    if total <= warmup {
        return peak;
    }
    let progress = (step - warmup) as f64 / (total - warmup) as f64;
    peak * 0.5 * (1.0 + (PI * progress).cos())
}

/// `round(fraction * total)`, at least 1 and below `total` whenever
/// `total >= 2`.
pub fn warmup_steps(total: usize, fraction: f64) -> usize {
    let w = (fraction * total as f64).round() as usize;
    w.clamp(1, total.saturating_sub(1).max(1))
}
