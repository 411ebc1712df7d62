//! File formats: TensorFile, PGM images, key = value configuration and
//! dataset manifests.

mod config;
mod pgm;
mod tensor_file;

pub use config::{
    fmt_f64, fmt_opt, parse_list, read_x_csv, write_x_csv, DatasetManifest, KeyValues, ScenarioFile,
};
pub use pgm::{read_pgm, read_pgm_mask, write_pgm, GrayImage};
pub use tensor_file::{decode_tensor, encode_tensor, read_tensor, write_tensor, MAGIC};
