//! Data files compiled into the binary.

pub const LEAP_HAND: &str = include_str!("../data/leap_hand.toml");
pub const ALLEGRO_HAND: &str = include_str!("../data/allegro_hand.toml");
pub const TYPE_LIBRARY: &str = include_str!("../data/type_library.toml");
pub const RETRIEVAL_BENCH: &str = include_str!("../data/retrieval_bench.toml");
pub const POUR_TRACK: &str = include_str!("../data/pour.track.toml");
