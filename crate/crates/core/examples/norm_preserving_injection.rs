//! Residual loading with and without norm preservation.

use tempofit::injection::{inject, norm_drift, DEFAULT_EPSILON};
use tempofit::kv_memory::MemorySnapshot;
use tempofit::retrieval::RetrievalResult;
use tempofit::{InjectionMode, Tensor4};

fn main() -> tempofit::Result<()> {
    let k_cur = Tensor4::new([1, 1, 1, 2], vec![3.0, 4.0])?;
    let k_ctx = Tensor4::new([1, 1, 1, 2], vec![0.0, 10.0])?;
    let snap = MemorySnapshot::new(k_ctx.clone(), k_ctx.clone(), vec![0])?;
    let result = RetrievalResult {
        weights: Tensor4::new([1, 1, 1, 1], vec![1.0])?,
        k_ctx: k_ctx.clone(),
        v_ctx: k_ctx,
    };

    for mode in [
        InjectionMode::ResidualPlain,
        InjectionMode::ResidualNormPreserving,
        InjectionMode::Concatenate,
    ] {
        let out = inject(
            &k_cur,
            &k_cur,
            Some(&snap),
            Some(&result),
            mode,
            DEFAULT_EPSILON,
        )?;
        println!(
            "{mode:?}: keys {:?}, attended {}, norm drift {:.4}",
            out.k_fused.data(),
            out.attended_length,
            norm_drift(&out.k_fused, &k_cur)
        );
    }

    let passthrough = inject(
        &k_cur,
        &k_cur,
        None,
        None,
        InjectionMode::ResidualNormPreserving,
        DEFAULT_EPSILON,
    )?;
    println!("empty history: {:?}", passthrough.k_fused.data());
    Ok(())
}
