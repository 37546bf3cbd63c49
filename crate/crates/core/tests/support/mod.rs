#![allow(dead_code)]

pub mod field;
pub mod histories;
pub mod linearize;
