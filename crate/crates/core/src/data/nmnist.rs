//! N-MNIST event files.
//!
//! Each event is 40 bits packed into 5 bytes:
//!
//! ```text
//! byte 0      x address (0..34)
//! byte 1      y address (0..34)
//! byte 2      bit 7: polarity (1 = ON), bits 6..0: timestamp bits 22..16
//! byte 3      timestamp bits 15..8
//! byte 4      timestamp bits 7..0
//! ```
//!
//! Timestamps are in microseconds. The distribution stores one file per
//! sample under `Train/<digit>/` and `Test/<digit>/`.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::spike::{SpikeTrain, TimeGrid};

pub const SENSOR_SIDE: usize = 34;
pub const N_CHANNELS: usize = 2 * SENSOR_SIDE * SENSOR_SIDE;
/// Timestamp reduction factor mapping microseconds onto 0.6 ms bins.
pub const DEFAULT_REDUCTION_US: u32 = 600;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub x: u8,
    pub y: u8,
    pub on: bool,
    pub timestamp_us: u32,
}

impl Event {
    pub fn channel(&self) -> usize {
        self.on as usize * SENSOR_SIDE * SENSOR_SIDE + self.y as usize * SENSOR_SIDE + self.x as usize
    }

    pub fn to_bytes(&self) -> [u8; 5] {
        let ts = self.timestamp_us & 0x7f_ffff;
        [
            self.x,
            self.y,
            ((self.on as u8) << 7) | (ts >> 16) as u8,
            (ts >> 8) as u8,
            ts as u8,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventSample {
    pub events: Vec<Event>,
    pub label: Option<u8>,
}

pub fn parse_events(bytes: &[u8]) -> Result<Vec<Event>> {
    if bytes.len() % 5 != 0 {
        return Err(Error::data(format!(
            "n-mnist: {} bytes is not a whole number of 5-byte events",
            bytes.len()
        )));
    }
    let mut events: Vec<Event> = bytes
        .chunks_exact(5)
        .map(|b| {
            let ev = Event {
                x: b[0],
                y: b[1],
                on: b[2] & 0x80 != 0,
                timestamp_us: ((b[2] as u32 & 0x7f) << 16) | ((b[3] as u32) << 8) | b[4] as u32,
            };
            if ev.x as usize >= SENSOR_SIDE || ev.y as usize >= SENSOR_SIDE {
                Err(Error::data(format!("n-mnist: event address ({}, {}) outside 34x34", ev.x, ev.y)))
            } else {
                Ok(ev)
            }
        })
        .collect::<Result<_>>()?;
    events.sort_by_key(|e| e.timestamp_us);
    Ok(events)
}

/// Loads one sample file; the label is taken from a single-digit parent
/// directory name when present.
pub fn load_nmnist(path: &Path) -> Result<EventSample> {
    let bytes = std::fs::read(path).map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    let events = parse_events(&bytes).map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    let label = path
        .parent()
        .and_then(|p| p.file_name())
        .and_then(|n| n.to_str())
        .and_then(|n| n.parse::<u8>().ok());
    Ok(EventSample { events, label })
}

/// Sample files of a split directory (`Train` or `Test`) as `(path, label)`,
/// ordered by label then file name.
pub fn list_nmnist_dir(split_dir: &Path) -> Result<Vec<(PathBuf, u8)>> {
    let mut out = Vec::new();
    for digit in 0u8..10 {
        let dir = split_dir.join(digit.to_string());
        if !dir.is_dir() {
            return Err(Error::data(format!("{}: missing class directory", dir.display())));
        }
        let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(|e| Error::data(format!("{}: {e}", dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "bin"))
            .collect();
        files.sort();
        out.extend(files.into_iter().map(|p| (p, digit)));
    }
    Ok(out)
}

/// Bins events into per-channel step lists on a grid of `grid.n_steps()`
/// bins of `reduction_us` microseconds each. Events past the window are
/// dropped; repeated events in one bin collapse into one spike.
pub fn nmnist_to_steps(sample: &EventSample, reduction_us: u32, grid: &TimeGrid) -> Vec<Vec<u32>> {
    let mut steps = vec![Vec::new(); N_CHANNELS];
    for ev in &sample.events {
        let bin = ev.timestamp_us / reduction_us;
        if bin as usize >= grid.n_steps() {
            continue;
        }
        steps[ev.channel()].push(bin);
    }
    for s in steps.iter_mut() {
        s.sort_unstable();
        s.dedup();
    }
    steps
}

pub fn nmnist_to_trains(sample: &EventSample, reduction_us: u32, grid: &TimeGrid) -> Vec<SpikeTrain> {
    nmnist_to_steps(sample, reduction_us, grid)
        .iter()
        .map(|s| crate::lif::steps_to_train(s, grid))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn encode(events: &[Event]) -> Vec<u8> {
        events.iter().flat_map(|e| e.to_bytes()).collect()
    }

    #[test]
    fn bit_layout() {
        let ev = parse_events(&[3, 5, 0x81, 0x02, 0x03]).unwrap()[0];
        assert_eq!((ev.x, ev.y, ev.on), (3, 5, true));
        assert_eq!(ev.timestamp_us, 0x01_0203);
        assert_eq!(ev.channel(), 1156 + 5 * 34 + 3);
        assert_eq!(ev.to_bytes(), [3, 5, 0x81, 0x02, 0x03]);
    }

    #[test]
    fn binning_examples() {
        let grid = TimeGrid::nmnist();
        let ev = Event {
            x: 0,
            y: 0,
            on: false,
            timestamp_us: 1200,
        };
        let s = EventSample {
            events: vec![ev, Event { timestamp_us: 1500, ..ev }, Event { timestamp_us: 400_000, ..ev }],
            label: None,
        };
        let steps = nmnist_to_steps(&s, 600, &grid);
        assert_eq!(steps.len(), 2312);
        assert_eq!(steps[0], vec![2]);
        let trains = nmnist_to_trains(&s, 600, &grid);
        assert!((trains[0].times()[0] - 1.2).abs() < 1e-12);

        let empty = EventSample {
            events: Vec::new(),
            label: None,
        };
        let t = nmnist_to_trains(&empty, 600, &grid);
        assert_eq!(t.len(), 2312);
        assert!(t.iter().all(|x| x.is_empty()));
    }

    #[test]
    fn malformed_files() {
        assert!(parse_events(&[0, 0, 0, 0]).is_err());
        assert!(parse_events(&[34, 0, 0, 0, 0]).is_err());
    }

    #[test]
    fn label_from_directory() {
        let dir = tempfile::tempdir().unwrap();
        let sub = dir.path().join("7");
        std::fs::create_dir(&sub).unwrap();
        let path = sub.join("00001.bin");
        std::fs::write(&path, [1, 2, 0, 0, 10]).unwrap();
        let s = load_nmnist(&path).unwrap();
        assert_eq!(s.label, Some(7));
        assert_eq!(s.events.len(), 1);
    }

    proptest! {
        #[test]
        fn binning_ignores_event_order(
            raw in prop::collection::vec((0u8..34, 0u8..34, any::<bool>(), 0u32..320_000), 0..200),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let events: Vec<Event> = raw.iter().map(|&(x, y, on, t)| Event { x, y, on, timestamp_us: t }).collect();
            let mut shuffled = events.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let grid = TimeGrid::nmnist();
            let a = nmnist_to_steps(&EventSample { events: parse_events(&encode(&events)).unwrap(), label: None }, 600, &grid);
            let b = nmnist_to_steps(&EventSample { events: shuffled, label: None }, 600, &grid);
            prop_assert_eq!(a, b);
        }
    }
}
