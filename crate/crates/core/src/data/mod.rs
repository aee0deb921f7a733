//! Loading, writing, synthesis and corruption of series.

mod corrupt;
mod csv_io;
mod lorenz;

pub use corrupt::{
    inject_long_term, inject_random, CorruptionMode, CorruptionSpec, GroundTruthPair,
};
pub use csv_io::{
    load_csv, load_csv_with_mask, load_pair, read_mask, read_table, save_pair, write_csv,
    write_mask, write_matrix, Table, CORRUPTED_FILE, EVAL_MASK_FILE, TRUTH_FILE,
};
pub use lorenz::{integrate, lorenz96, lorenz96_rhs, rk4_step, Lorenz96Config};
