//! Temporal smoothing of flow sequences.

use crate::error::{Error, Result};
use crate::field::MotionField;
use crate::raster::Raster;

/// Window length used to smooth pseudo ground-truth flow.
pub const DEFAULT_FLOW_WINDOW: usize = 30;

/// Centered moving average over a flow sequence.
///
/// Frame `i` averages frames `i - window/2 ..= i + window/2`, clipped to the
/// sequence. A pixel is valid in the output only if it is valid in every
/// averaged input.
pub fn average_flow_window(fields: &[MotionField], window: usize) -> Result<Vec<MotionField>> {
    let first = fields.first().ok_or(Error::EmptySequence)?;
    if window == 0 {
        return Err(Error::InvalidInput("window must be at least 1".into()));
    }
    let (w, h) = first.dims();
    if let Some(bad) = fields.iter().find(|f| f.dims() != (w, h)) {
        return Err(Error::DimensionMismatch {
            asset: "flow sequence".into(),
            want_w: w,
            want_h: h,
            got_w: bad.width(),
            got_h: bad.height(),
        });
    }
    let radius = window / 2;
    let n = fields.len();
    let out = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(radius);
            let hi = (i + radius).min(n - 1);
            let count = (hi - lo + 1) as f64;
            let mut data = Raster::filled(w, h, [0.0f64; 2]);
            let mut valid = Raster::filled(w, h, true);
            for f in &fields[lo..=hi] {
                for (k, (acc, p)) in data.data_mut().iter_mut().zip(f.data.data()).enumerate() {
                    acc[0] += p[0];
                    acc[1] += p[1];
                    if !f.valid.data()[k] {
                        valid.data_mut()[k] = false;
                    }
                }
            }
            for acc in data.data_mut() {
                acc[0] /= count;
                acc[1] /= count;
            }
            let mut field = MotionField { data, valid };
            field.clear_invalid();
            field
        })
        .collect();
    Ok(out)
}
