//! Structure files.

pub mod extxyz;

pub use extxyz::{format_extxyz, parse_extxyz, read_extxyz, read_structures, write_extxyz, Column, Frame};
