//! Poisson rate coding of a static image and the resulting spike statistics.
//!
//! cargo run --example poisson_encoding

use hm2bp::data::{poisson_steps, prototype_images};
use hm2bp::TimeGrid;

fn main() -> hm2bp::Result<()> {
    let grid = TimeGrid::mnist();
    let image = &prototype_images(1, 1, 12, 0.0, 5)[0];
    for scale in [0.1, 0.5] {
        let steps = poisson_steps(&image.pixels, &grid, scale, 42);
        let total: usize = steps.iter().map(Vec::len).sum();
        let lit = image.pixels.iter().filter(|&&p| p > 0).count();
        println!("scale {scale}: {total} spikes over {} steps from {lit} lit pixels", grid.n_steps());
        // Expected count per pixel is scale * intensity / 255 * n_steps.
        for j in image.pixels.iter().enumerate().filter(|(_, &p)| p > 0).map(|(j, _)| j).take(4) {
            let expected = scale * image.pixels[j] as f64 / 255.0 * grid.n_steps() as f64;
            println!("  pixel {j:>3} intensity {:>3}: {:>3} spikes (expected {expected:.1})", image.pixels[j], steps[j].len());
        }
    }
    // Same seed, same trains; a different seed draws new ones.
    assert_eq!(poisson_steps(&image.pixels, &grid, 0.5, 1), poisson_steps(&image.pixels, &grid, 0.5, 1));
    Ok(())
}
