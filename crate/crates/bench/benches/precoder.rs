use criterion::{criterion_group, criterion_main, Criterion};
use fhz_core::channelgen::generate_channels;
use fhz_core::precoder::wmmse_rb;
use fhz_core::{ChannelConfig, PrecoderConfig};

fn bench_wmmse(c: &mut Criterion) {
    let cfg = ChannelConfig::default();
    let h = generate_channels(&cfg).unwrap();
    let pc = PrecoderConfig::default();
    c.bench_function("wmmse_rb_desk", |b| {
        b.iter(|| wmmse_rb(h.rb(0), cfg.num_users, &pc).unwrap())
    });
}

fn bench_channels(c: &mut Criterion) {
    let cfg = ChannelConfig::default();
    c.bench_function("generate_channels_desk", |b| {
        b.iter(|| generate_channels(&cfg).unwrap())
    });
}

criterion_group!(benches, bench_wmmse, bench_channels);
criterion_main!(benches);
