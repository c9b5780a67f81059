//! Direct discrete Fourier transform.
//!
//! The spectral loss only ever transforms horizon-length columns (a few
//! hundred points at most), so an O(H²) direct summation is fast enough
//! and keeps correctness tied to the defining formula rather than to a
//! radix decomposition. Accumulation is always in `f64`.

/// One complex frequency bin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bin {
    pub re: f64,
    pub im: f64,
}

impl Bin {
    /// Complex modulus |re + i·im|.
    pub fn modulus(self) -> f64 {
        self.re.hypot(self.im)
    }
}

/// Computes X[k] = Σ_j x[j]·e^(−2πi·jk/H) for k = 0..H by direct
/// summation. The trig argument is reduced modulo H before the
/// multiply so large j·k products do not lose precision.
pub fn dft(x: &[f64]) -> Vec<Bin> {
    let h = x.len();
    let mut out = Vec::with_capacity(h);
    for k in 0..h {
        let mut re = 0.0;
        let mut im = 0.0;
        for (j, &v) in x.iter().enumerate() {
            let theta = std::f64::consts::TAU * ((j * k) % h) as f64 / h as f64;
            re += v * theta.cos();
            im -= v * theta.sin();
        }
        out.push(Bin { re, im });
    }
    out
}
