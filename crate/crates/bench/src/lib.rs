//! Fixtures shared by the benchmarks: models and states at representative sizes.

use mqsd_core::models::{build_duffing, build_shg, DuffingParams, ShgParams};
use mqsd_core::{CompiledModel, FockState, MqsdState, Result, TruncationPolicy};

/// Desk-scale second-harmonic model with a fixed-basis state of `caps`.
pub fn shg_fixed(caps: [usize; 2]) -> Result<(CompiledModel, FockState)> {
    let model = CompiledModel::new(&build_shg(&ShgParams::desk_scale())?);
    let state = MqsdState::coherent(&[(1.0, -0.5), (0.5, 0.5)], &[4, 4])?.to_fixed_basis(&caps)?;
    Ok((model, state))
}

/// Driven double well at scale 100 with a moving-basis state of local capacity `cap`.
pub fn duffing_moving(cap: usize) -> Result<(CompiledModel, MqsdState, TruncationPolicy)> {
    let model = CompiledModel::new(&build_duffing(&DuffingParams::default())?);
    let state = MqsdState::coherent(&[(80.0, 20.0)], &[cap])?;
    Ok((model, state, TruncationPolicy::new(5e-3, 2, 4, 200)))
}
