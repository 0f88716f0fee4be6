use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sdmimo_core::channel::{draw_channel, ChannelConfig, ChannelRealization, UlaGeometry};
use sdmimo_core::ofdm::{sample_hold, Ofdm, OfdmParams};
use sdmimo_core::precoders::{slp_precode, zf_precode, SlpConfig, ZfVariant};
use sdmimo_core::sigma_delta::{modulate, ModulatorConfig};
use sdmimo_core::{CMat, Order, PaModel, QamConstellation, ShapingBudget};

const N: usize = 16;
const K: usize = 4;

struct Fixture {
    ofdm: Ofdm,
    params: OfdmParams,
    chan: ChannelRealization,
    s: CMat,
    pa: PaModel,
    budget: ShapingBudget,
}

fn fixture() -> Fixture {
    let params = OfdmParams { m: 64, m_s: 40, m_cp: 20, osf: 7 };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pa = PaModel::rapp_3gpp();
    let chan = draw_channel(&mut rng, UlaGeometry::new(N, 0.125).unwrap(), K, &ChannelConfig::default(), params, pa.gain).unwrap();
    let q = QamConstellation::new(2).unwrap();
    let s = CMat::from_fn(K, params.m_s, |_, _| q.random_symbol(&mut rng));
    Fixture {
        ofdm: Ofdm::new(params).unwrap(),
        params,
        chan,
        s,
        pa,
        budget: ShapingBudget::new(&pa, pa.r_max).unwrap(),
    }
}

fn bench_chain(c: &mut Criterion) {
    let f = fixture();
    let bound = f.budget.input_bound(Order::First);
    let zf = zf_precode(&f.chan.freq, &f.ofdm, &f.s, bound, ZfVariant::Tail).unwrap();
    let x_cp = f.ofdm.add_cp(&zf.x);
    let mc = ModulatorConfig::new(Order::First, true, f.pa, f.budget, N).unwrap();
    let u = modulate(&mc, &x_cp).unwrap().u;
    let fine = sample_hold(f.params.osf, &u);

    c.bench_function("pa_response_1e4", |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z: Vec<Complex64> = (0..10_000).map(|_| Complex64::from_polar(rng.random_range(0.0..0.2), rng.random_range(-3.0..3.0))).collect();
        b.iter(|| z.iter().map(|v| f.pa.respond(*v)).sum::<Complex64>())
    });
    c.bench_function("ofdm_synthesize", |b| b.iter(|| f.ofdm.synthesize(&zf.z).unwrap()));
    c.bench_function("tsd1_modulate", |b| b.iter(|| modulate(&mc, &x_cp).unwrap()));
    c.bench_function("propagate_clean", |b| b.iter(|| f.chan.propagate_clean(&fine).unwrap()));
    c.bench_function("zf_precode", |b| b.iter(|| zf_precode(&f.chan.freq, &f.ofdm, &f.s, bound, ZfVariant::Tail).unwrap()));

    let mut group = c.benchmark_group("slp");
    group.sample_size(10);
    let sigma = vec![0.01; K];
    group.bench_function("admm_30", |b| {
        b.iter_batched(
            SlpConfig::default,
            |cfg| slp_precode(&f.chan.freq, &f.ofdm, &f.s, bound, &sigma, 2, &cfg).unwrap(),
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

criterion_group!(benches, bench_chain);
criterion_main!(benches);
