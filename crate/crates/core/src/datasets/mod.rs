//! Sequence samples, the synthetic moving-digits generator, the nephogram
//! preprocessing pipeline and the on-disk formats.

mod format;
mod mnistpp;
mod nephogram;
mod sample;
mod split;

pub use format::{
    decode_container, decode_pgm, encode_container, encode_pgm, read_container, read_pgm, write_container, write_pgm,
    HEADER_LEN,
};
pub use mnistpp::{
    builtin_glyphs, gen_mnistpp, load_idx_glyphs, mnistpp_sample, trajectory, DigitPose, Glyph, GlyphSource,
    MnistPpConfig,
};
pub use nephogram::{
    background, build_sequences, load_frames, luma, parse_timestamp, prep_nephograms, segments, subtract_background,
    windows, BackgroundMode, NephoPipelineConfig, PrepReport, TimedFrame,
};
pub use sample::{SampleMeta, SequenceSample};
pub use split::split;
