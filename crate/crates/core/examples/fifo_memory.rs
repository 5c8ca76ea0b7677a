//! A single layer's FIFO buffer: writes, eviction and the oldest-first snapshot.

use tempofit::kv_memory::{LayerMemory, PrefixKV};
use tempofit::Tensor4;

fn main() -> tempofit::Result<()> {
    let mut memory = LayerMemory::new(3, 4)?;
    for t in 0..7u64 {
        let keys = Tensor4::from_fn([1, 2, 3, 4], |[_, h, n, k]| {
            (t * 100 + (h * 12 + n * 4 + k) as u64) as f64
        })?;
        let values = Tensor4::from_fn([1, 2, 3, 4], |_| -(t as f64))?;
        memory.write(PrefixKV::new(keys, values, t)?)?;
        println!(
            "t={t} stored {:?} ({} scalars)",
            memory.timesteps(),
            memory.scalar_count()
        );
    }

    let snap = memory.snapshot().expect("buffer is full");
    println!("history tokens: {}", snap.history_len());
    println!("token timesteps: {:?}", snap.token_timesteps());

    let stale = PrefixKV::new(
        Tensor4::zeros([1, 2, 3, 4])?,
        Tensor4::zeros([1, 2, 3, 4])?,
        6,
    )?;
    match memory.write(stale) {
        Err(e) => println!("rejected: {e}"),
        Ok(()) => unreachable!(),
    }
    println!("{}", serde_json::to_string_pretty(&memory.metadata())?);
    Ok(())
}
