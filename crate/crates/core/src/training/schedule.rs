use crate::error::{Error, Result};

/// Number of warmup steps: `ceil(warmup_fraction * total_steps)`.
pub fn warmup_steps(total_steps: u64, warmup_fraction: f64) -> u64 {
    (warmup_fraction * total_steps as f64).ceil() as u64
}

/// Learning rate for optimizer step `step` of `total_steps`: linear from 0 to
/// `peak_lr` over the warmup steps, then linear back to 0 at `total_steps`.
pub fn lr_at(step: u64, total_steps: u64, peak_lr: f64, warmup_fraction: f64) -> Result<f64> {
    if total_steps == 0 {
        return Err(Error::InvalidArgument(
            "total_steps must be positive".into(),
        ));
    }
    if step > total_steps {
        return Err(Error::InvalidArgument(format!(
            "step {step} is past total_steps {total_steps}"
        )));
    }
    if !(warmup_fraction > 0.0 && warmup_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "warmup_fraction {warmup_fraction} must lie in (0, 1)"
        )));
    }
    let warmup = warmup_steps(total_steps, warmup_fraction);
    if step < warmup {
        return Ok(peak_lr * step as f64 / warmup as f64);
    }
    if step >= total_steps {
        return Ok(0.0);
    }
    Ok(peak_lr * (total_steps - step) as f64 / (total_steps - warmup) as f64)
}
