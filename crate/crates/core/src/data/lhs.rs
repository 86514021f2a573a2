use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

/// Latin hypercube design on `[0,1]^d`: every column places exactly one of
/// its `n` samples in each of `n` equal-width bins.
pub fn latin_hypercube<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(n, d);
    let mut bins: Vec<usize> = (0..n).collect();
    for j in 0..d {
        bins.shuffle(rng);
        for (i, &b) in bins.iter().enumerate() {
            out[(i, j)] = (b as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    out
}
