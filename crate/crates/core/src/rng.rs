//! Labeled random substreams derived from one root seed.
//!
//! Every consumer of randomness draws from its own ChaCha stream so that, for
//! example, adding evaluation runs never perturbs the disturbance dataset.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stream {
    Dataset = 1,
    ForwardPass = 2,
    Evaluation = 3,
    Tuning = 4,
    Benchmark = 5,
}

impl Stream {
    pub const ALL: [Stream; 5] =
        [Stream::Dataset, Stream::ForwardPass, Stream::Evaluation, Stream::Tuning, Stream::Benchmark];

    pub fn label(self) -> &'static str {
        match self {
            Stream::Dataset => "dataset",
            Stream::ForwardPass => "forward-pass",
            Stream::Evaluation => "evaluation",
            Stream::Tuning => "tuning",
            Stream::Benchmark => "benchmark",
        }
    }
}

/// RNG for `(seed, stream, index)`; the index separates runs within a stream.
pub fn substream(seed: u64, stream: Stream, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stream as u64) << 40) | (index & ((1 << 40) - 1)));
    rng
}
