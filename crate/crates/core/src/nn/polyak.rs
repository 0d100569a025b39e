use crate::error::{check_dim, Error, Result};

/// Target tracking: `target <- (1 - tau) * target + tau * online`, elementwise.
pub fn polyak_update(target: &mut [f64], online: &[f64], tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Argument(format!("polyak tau must lie in (0, 1], got {tau}")));
    }
    check_dim("polyak parameters", target.len(), online.len())?;
    if tau == 1.0 {
        target.copy_from_slice(online);
        return Ok(());
    }
    for (t, &o) in target.iter_mut().zip(online) {
        *t = (1.0 - tau) * *t + tau * o;
    }
    Ok(())
}
