//! Lewis–Shedler thinning of a nonhomogeneous Poisson process. The sample
//! mean count is compared with the integrated intensity.

use fiptiw::simgen::thinning_sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tau = 7.0;
    let lambda = |t: f64| 0.5 * t.sqrt();
    let bound = lambda(tau);
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    let first = thinning_sample(lambda, bound, tau, &mut rng)?;
    println!("one path: {first:.3?}");

    let paths = 5000;
    let mut total = 0;
    for _ in 0..paths {
        total += thinning_sample(lambda, bound, tau, &mut rng)?.len();
    }
    // Integral of 0.5 sqrt(t) over (0, tau].
    let expected = tau.powf(1.5) / 3.0;
    println!(
        "mean count {:.3} over {paths} paths, expected {expected:.3}",
        total as f64 / paths as f64
    );

    match thinning_sample(lambda, 0.5, tau, &mut rng) {
        Err(e) => println!("bound below the intensity is rejected: {e}"),
        Ok(_) => println!("bound violation went undetected on this path"),
    }
    Ok(())
}
