//! Seeded random streams.
//!
//! Every consumer of randomness derives its own ChaCha8 stream from the run
//! seed, so results never depend on evaluation order:
//!
//! | purpose                 | stream id                         |
//! |-------------------------|-----------------------------------|
//! | augmentation            | `(epoch << 32) \| sample_index`   |
//! | weight init             | `1 << 63`                         |
//! | per-epoch shuffle       | `(1 << 62) \| epoch`              |
//! | synthetic sample `i`    | `(1 << 61) \| i`                  |
//! | dataset split           | `1 << 60`                         |
//!
//! `sample_index` is the position of the sample in the training set (not
//! in the shuffled order), and epochs are numbered from 0.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const INIT: u64 = 1 << 63;
const SHUFFLE: u64 = 1 << 62;
const GENERATE: u64 = 1 << 61;
const SPLIT: u64 = 1 << 60;

pub fn stream(seed: u64, id: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub fn augment_rng(seed: u64, epoch: usize, sample_index: usize) -> Rng {
    debug_assert!(epoch < 1 << 28 && sample_index < 1 << 32);
    stream(seed, ((epoch as u64) << 32) | sample_index as u64)
}

pub fn init_rng(seed: u64) -> Rng {
    stream(seed, INIT)
}

pub fn shuffle_rng(seed: u64, epoch: usize) -> Rng {
    stream(seed, SHUFFLE | epoch as u64)
}

pub fn sample_rng(seed: u64, index: usize) -> Rng {
    stream(seed, GENERATE | index as u64)
}

pub fn split_rng(seed: u64) -> Rng {
    stream(seed, SPLIT)
}
