use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use iconify::autodiff::{Padding, Tape};
use iconify::nn::{GeneratorConfig, GeneratorNet};
use iconify_bench::ramp;
use std::hint::black_box;

fn conv(c: &mut Criterion) {
    let mut g = c.benchmark_group("conv2d_3x3");
    for (ch, size) in [(32, 32), (64, 64), (256, 16)] {
        let x = ramp(&[1, ch, size, size]);
        let k = ramp(&[ch, ch, 3, 3]);
        let id = format!("{ch}ch_{size}px");
        g.bench_function(BenchmarkId::new("forward", &id), |b| {
            b.iter(|| {
                let mut t = Tape::<f32>::new();
                let (xv, kv) = (t.constant(x.clone()), t.constant(k.clone()));
                black_box(t.conv2d(xv, kv, 1, Padding::Zero(1)).unwrap());
            })
        });
        g.bench_function(BenchmarkId::new("forward_backward", &id), |b| {
            b.iter(|| {
                let mut t = Tape::<f32>::new();
                let (xv, kv) = (t.leaf(x.clone()), t.leaf(k.clone()));
                let y = t.conv2d(xv, kv, 1, Padding::Zero(1)).unwrap();
                let l = t.sum(y).unwrap();
                black_box(t.backward(l).unwrap());
            })
        });
    }
    g.finish();
}

fn generator(c: &mut Criterion) {
    let mut g = c.benchmark_group("generator_forward");
    g.sample_size(10);
    for (width, res, size) in [(8, 2, 32), (64, 6, 32), (64, 6, 128)] {
        let net = GeneratorNet::<f32>::build(
            GeneratorConfig {
                base_width: width,
                n_res_blocks: res,
            },
            size,
            0,
        )
        .unwrap();
        let x = ramp(&[1, 3, size, size]);
        g.bench_function(BenchmarkId::new(format!("ngf{width}_r{res}"), size), |b| {
            b.iter(|| black_box(net.apply(&x).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, conv, generator);
criterion_main!(benches);
