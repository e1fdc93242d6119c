pub mod ais;
pub mod clustering;
pub mod data;
pub mod experiment;
pub mod mvnet;
pub mod numeric;
pub mod sampling;

/// Random-stream ids so each pipeline stage draws from its own sequence.
pub(crate) mod streams {
    pub const ANCHOR: u64 = 1;
    pub const AIS_INIT: u64 = 2;
    pub const AIS_BATCHES: u64 = 3;
    pub const MVNET_INIT: u64 = 4;
    pub const MVNET_BATCHES: u64 = 5;
    pub const KMEANS: u64 = 6;
    pub const SYNTH: u64 = 7;
}
