//! On-disk formats: bag files, JSON manifests, parameter checkpoints, and
//! binary PPM images.

pub mod bagfile;
pub mod checkpoint;
pub mod manifest;
pub mod ppm;
