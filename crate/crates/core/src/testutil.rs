//! Shared fixtures for unit tests.

use std::sync::OnceLock;

use crate::domain::DomainSpec;
use crate::harmonic::{DriftConfig, DriftContext, TargetSpec};
use crate::C64;

pub fn disk_domain() -> DomainSpec {
    DomainSpec::unit_disk(2048, TargetSpec::Point { z: C64::new(0.5, 0.0) })
}

/// Unit disk, `z_e = 1/2`, observer `-1/2`, mesh `1/64`.
pub fn disk_context() -> &'static DriftContext {
    static CTX: OnceLock<DriftContext> = OnceLock::new();
    CTX.get_or_init(|| {
        let d = disk_domain();
        DriftContext::new(&d, DriftConfig::for_domain(&d, 1.0 / 64.0), &[C64::new(-0.5, 0.0)]).unwrap()
    })
}
