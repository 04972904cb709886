//! Learning-rate schedule: linear scaling with the batch size, ramped in
//! over a burn-in period.

pub const REF_BATCH: usize = 256;
pub const BURN_IN_EPOCHS: f64 = 5.0;

/// Target rate is `base_lr * batch_size / ref_batch`; the rate ramps
/// linearly from `base_lr` at epoch 0 to the target at `burn_in`, and is
/// constant afterwards. `epoch` may be fractional.
pub fn lr_schedule(epoch: f64, base_lr: f64, batch_size: usize) -> f64 {
    lr_schedule_with(epoch, base_lr, batch_size, REF_BATCH, BURN_IN_EPOCHS)
}

pub fn lr_schedule_with(
    epoch: f64,
    base_lr: f64,
    batch_size: usize,
    ref_batch: usize,
    burn_in: f64,
) -> f64 {
    let target = base_lr * batch_size as f64 / ref_batch as f64;
    if epoch >= burn_in {
        target
    } else {
        base_lr + (target - base_lr) * (epoch / burn_in).max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_batch_is_flat() {
        for e in [0.0, 1.0, 2.5, 5.0, 80.0] {
            assert_eq!(lr_schedule(e, 1e-3, 256), 1e-3);
        }
    }

    #[test]
    fn large_batch_reaches_scaled_target() {
        let lr = lr_schedule(5.0, 1e-3, 6000);
        assert!((lr - 1e-3 * 6000.0 / 256.0).abs() < 1e-15);
        assert_eq!(lr_schedule(12.0, 1e-3, 6000), lr);
    }

    #[test]
    fn ramp_midpoint_is_linear() {
        let base = 1e-3;
        let target = base * 1024.0 / 256.0;
        let lr = lr_schedule(2.5, base, 1024);
        assert!((lr - 0.5 * (base + target)).abs() < 1e-12);
    }
}
