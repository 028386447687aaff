//! Synthetic concentric-shell classification data.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::Dataset;

fn gen_shells(
    name: &str,
    dim: usize,
    n: usize,
    radii: (f64, f64),
    noise_sd: f64,
    seed: u64,
) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::Data("need at least 2 points".into()));
    }
    if noise_sd < 0.0 {
        return Err(Error::Data(format!("noise sd must be >= 0, got {noise_sd}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    let n0 = n / 2;
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let (radius, label) = if i < n0 { (radii.0, 0) } else { (radii.1, 1) };
        // uniform direction: normalized Gaussian vector
        let mut dir = vec![0.0f64; dim];
        loop {
            let mut norm2 = 0.0;
            for d in dir.iter_mut() {
                *d = normal.sample(&mut rng);
                norm2 += *d * *d;
            }
            if norm2 > 1e-12 {
                let norm = norm2.sqrt();
                dir.iter_mut().for_each(|d| *d /= norm);
                break;
            }
        }
        let noise: f64 = normal.sample(&mut rng);
        let r = radius + noise_sd * noise;
        for d in &dir {
            features.push(r * d);
        }
        labels.push(label);
    }
    Dataset::new(name, Tensor::new(vec![n, dim], features)?, labels, 2)
}

/// 2-D points on two concentric circles with Gaussian radial noise.
pub fn gen_circles(n: usize, radii: (f64, f64), noise_sd: f64, seed: u64) -> Result<Dataset> {
    gen_shells("circles", 2, n, radii, noise_sd, seed)
}

/// 3-D points on two concentric spheres with Gaussian radial noise.
pub fn gen_spheres(n: usize, radii: (f64, f64), noise_sd: f64, seed: u64) -> Result<Dataset> {
    gen_shells("spheres", 3, n, radii, noise_sd, seed)
}
