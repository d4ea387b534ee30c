//! Writes a synthetic N-MNIST event file, reads it back, bins it onto the
//! simulation grid and stores the result in a spike cache.
//!
//! cargo run --example nmnist_binning

use hm2bp::data::{self, nmnist, CachedSample, Event};
use hm2bp::TimeGrid;

fn main() -> hm2bp::Result<()> {
    let dir = std::env::temp_dir().join("hm2bp-nmnist-example");
    // The loader expects one directory per digit, even when some are empty.
    for d in 0..10 {
        std::fs::create_dir_all(dir.join("Train").join(d.to_string()))?;
    }
    let digit_dir = dir.join("Train").join("3");

    // A bar sweeping left to right for 300 ms, ON events on the leading edge.
    let mut bytes = Vec::new();
    for t in (0..300_000u32).step_by(1_500) {
        let x = (t / 10_000) as u8 + 2;
        for y in 10..24u8 {
            bytes.extend_from_slice(&Event { x, y, on: true, timestamp_us: t }.to_bytes());
            bytes.extend_from_slice(&Event { x: x.saturating_sub(2), y, on: false, timestamp_us: t + 700 }.to_bytes());
        }
    }
    let file = digit_dir.join("00001.bin");
    std::fs::write(&file, &bytes)?;

    let listed = data::list_nmnist_dir(&dir.join("Train"))?;
    let sample = data::load_nmnist(&listed[0].0)?;
    println!("{} events, label {:?}", sample.events.len(), sample.label);

    let grid = TimeGrid::nmnist();
    let steps = data::nmnist_to_steps(&sample, nmnist::DEFAULT_REDUCTION_US, &grid);
    let active = steps.iter().filter(|s| !s.is_empty()).count();
    let spikes: usize = steps.iter().map(Vec::len).sum();
    println!(
        "{} channels, {active} active, {spikes} spikes on a {} x {} ms grid",
        steps.len(),
        grid.n_steps(),
        grid.dt_ms()
    );

    let cache = dir.join("train.spkc");
    data::write_cache(&cache, &grid, &[CachedSample { label: listed[0].1 as u32, steps: steps.clone() }])?;
    let (g, back) = data::read_cache(&cache)?;
    assert_eq!(back[0].steps, steps);
    println!("cache {} holds {} sample(s), {} steps", cache.display(), back.len(), g.n_steps());
    Ok(())
}
