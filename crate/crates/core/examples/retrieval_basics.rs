//! K-to-K retrieval over a small history, with and without the frame-gap bias.
//!
//! Every stored frame holds the same keys, so without the bias all timesteps
//! receive equal weight; with it the weights fall off with frame gap at a
//! per-head rate.

use tempofit::kv_memory::MemorySnapshot;
use tempofit::retrieval::{head_slopes, retrieve};
use tempofit::{FgtbParams, RetrievalMode, Tensor4};

fn main() -> tempofit::Result<()> {
    let (heads, s, d, frames) = (4, 2, 4, 4);
    let block = Tensor4::from_fn([1, heads, s, d], |[_, h, n, k]| {
        ((h + 2 * n + 3 * k) % 5) as f64 - 2.0
    })?;
    let parts: Vec<&Tensor4> = (0..frames).map(|_| &block).collect();
    let k_hist = Tensor4::concat_tokens(&parts)?;
    let v_hist = Tensor4::from_fn(k_hist.dims(), |[_, _, n, _]| (n / s) as f64)?;
    let taus: Vec<u64> = (0..frames as u64).flat_map(|t| [t; 2]).collect();
    let snap = MemorySnapshot::new(k_hist, v_hist, taus.clone())?;
    let t = frames as u64;

    println!("head slopes: {:?}", head_slopes(heads));
    for beta in [0.0, 0.5, 4.0] {
        let params = FgtbParams::standard(heads, s, beta)?;
        let r = retrieve(&block, None, Some(&snap), t, &params, RetrievalMode::KToK)?
            .expect("history present");
        println!("beta = {beta}");
        for h in 0..heads {
            let per_frame: Vec<String> = (0..frames as u64)
                .map(|tau| {
                    let w: f64 = r
                        .weights
                        .row(0, h, 0)
                        .iter()
                        .zip(&taus)
                        .filter(|(_, &x)| x == tau)
                        .map(|(w, _)| w)
                        .sum();
                    format!("{w:.3}")
                })
                .collect();
            println!("  head {h}: weight by tau {per_frame:?}");
        }
        println!(
            "  mass on newest frame: {:.4}",
            r.mass_on_timestep(&taus, t - 1)
        );
    }
    Ok(())
}
