use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{Error, Result};

/// Sign of the exponent in `sum_t x[t] exp(sign * 2 pi i s t / n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Negative,
    Positive,
}

/// A reusable transform of one fixed length and sign.
pub struct DftPlan {
    fft: Arc<dyn Fft<f64>>,
    scratch_len: usize,
}

impl DftPlan {
    pub fn new(len: usize, sign: Sign) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidInput(
                "transform length must be at least 1".into(),
            ));
        }
        let direction = match sign {
            Sign::Negative => FftDirection::Forward,
            Sign::Positive => FftDirection::Inverse,
        };
        let fft = FftPlanner::new().plan_fft(len, direction);
        let scratch_len = fft.get_inplace_scratch_len();
        Ok(Self { fft, scratch_len })
    }

    pub fn len(&self) -> usize {
        self.fft.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fft.len() == 0
    }

    /// Transforms `buf` in place (unnormalized).
    pub fn process(&self, buf: &mut [Complex64]) -> Result<()> {
        if buf.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: buf.len(),
            });
        }
        if buf.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidInput(
                "transform input has non-finite entries".into(),
            ));
        }
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.scratch_len];
        self.fft.process_with_scratch(buf, &mut scratch);
        Ok(())
    }
}

/// Unnormalized discrete Fourier transform with the given exponent sign.
pub fn dft(sequence: &[Complex64], sign: Sign) -> Result<Vec<Complex64>> {
    let plan = DftPlan::new(sequence.len(), sign)?;
    let mut buf = sequence.to_vec();
    plan.process(&mut buf)?;
    Ok(buf)
}

/// Inverse of `dft(_, Sign::Negative)`: positive exponent, scaled by `1/n`.
pub fn idft(spectrum: &[Complex64]) -> Result<Vec<Complex64>> {
    let mut out = dft(spectrum, Sign::Positive)?;
    let scale = 1.0 / out.len() as f64;
    out.iter_mut().for_each(|z| *z *= scale);
    Ok(out)
}
