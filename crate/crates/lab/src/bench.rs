//! Standard benchmark configs shipped with the crate.

/// Joint recovery on a 64-cell grid: a coarse 4x4 speed perturbation of up
/// to 5% over unit speed, two disks of pressure, a short fixed-speed warm
/// start at unit speed, and a wide region (`ε = 4`).
pub const JOINT_BENCHMARK: &str = include_str!("../configs/joint-benchmark.toml");
