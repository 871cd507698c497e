//! Reading and writing `.gmbg` bag files.

use std::fs;
use std::path::Path;

use gasmil_core::codec::{self, BagHeader};
use gasmil_core::{FeatureBag, GroupLayout};

use crate::error::{CliError, Result};

pub fn write_bag(path: &Path, bag: &FeatureBag) -> Result<()> {
    let bytes = codec::encode_bag(bag)?;
    fs::write(path, bytes).map_err(CliError::io(path))
}

pub fn read_bag(path: &Path, layout: &GroupLayout) -> Result<FeatureBag> {
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    codec::decode_bag(&bytes, layout)
        .map_err(|e| CliError::malformed(path, e.to_string()))
}

pub fn read_bag_header(path: &Path) -> Result<BagHeader> {
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    codec::decode_bag_header(&bytes).map_err(|e| CliError::malformed(path, e.to_string()))
}
