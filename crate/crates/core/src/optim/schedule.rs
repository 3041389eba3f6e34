use crate::error::{Error, Result};

/// Constant `base_lr` for the first half of training, then linear decay to 0
/// at `total_steps`.
pub fn lr_schedule(step: u64, total_steps: u64, base_lr: f64) -> Result<f64> {
    if step > total_steps {
        return Err(Error::InvalidArgument(format!(
            "lr_schedule: step {step} beyond total {total_steps}"
        )));
    }
    if total_steps == 0 {
        return Ok(base_lr);
    }
    let half = total_steps as f64 / 2.0;
    let s = step as f64;
    if s <= half {
        Ok(base_lr)
    } else {
        Ok(base_lr * (total_steps as f64 - s) / (total_steps as f64 - half))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_points() {
        assert_eq!(lr_schedule(0, 200, 2e-4).unwrap(), 2e-4);
        assert_eq!(lr_schedule(100, 200, 2e-4).unwrap(), 2e-4);
        assert_eq!(lr_schedule(150, 200, 2e-4).unwrap(), 1e-4);
        assert_eq!(lr_schedule(200, 200, 2e-4).unwrap(), 0.0);
        assert!(lr_schedule(201, 200, 2e-4).is_err());
    }
}
