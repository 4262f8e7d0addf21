use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use uavtraj::exec::Exec;
use uavtraj::georef::AltitudeScale;
use uavtraj::kinematics::{enrich_all, KinematicsParams};
use uavtraj::model::assemble_trajectories;
use uavtraj::safety::{extract_conflicts, SafetyParams};
use uavtraj::stabilize::{apply_correction, detect_deflections, DeflectionParams};
use uavtraj::synth;

fn modes() -> Vec<(&'static str, Exec)> {
    let mut m = vec![("sequential", Exec::Sequential)];
    if cfg!(feature = "parallel") {
        m.push(("parallel", Exec::Parallel));
    }
    m
}

fn bench(c: &mut Criterion) {
    let sc = synth::corridor(150, 3);
    let scene = sc.scene_or_default();
    let out = synth::generate(&sc).unwrap();
    let trajs = assemble_trajectories(&out.records, sc.fps).unwrap();
    let scale = AltitudeScale::from_scene(&scene).unwrap();
    let kp = KinematicsParams::default();

    let mut g = c.benchmark_group("enrich_all");
    for (name, exec) in modes() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &e| {
            b.iter(|| enrich_all(black_box(&trajs), &scale, &kp, e))
        });
    }
    g.finish();

    let dsc = synth::builtin("deflection").unwrap();
    let dout = synth::generate(&dsc).unwrap();
    let dtrajs = assemble_trajectories(&dout.records, dsc.fps).unwrap();
    let events = detect_deflections(&dtrajs, &DeflectionParams::default());
    let mut g = c.benchmark_group("apply_correction");
    for (name, exec) in modes() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &e| {
            b.iter(|| apply_correction(black_box(&dtrajs), &events, dsc.image_w, dsc.image_h, e))
        });
    }
    g.finish();

    let psc = synth::random_following(11);
    let pscene = psc.scene_or_default();
    let pout = synth::generate(&psc).unwrap();
    let ptrajs = assemble_trajectories(&pout.records, psc.fps).unwrap();
    let pscale = AltitudeScale::from_scene(&pscene).unwrap();
    let enriched = enrich_all(&ptrajs, &pscale, &kp, Exec::Sequential);
    let sp = SafetyParams::default();
    let mut g = c.benchmark_group("extract_conflicts");
    g.sample_size(20);
    for (name, exec) in modes() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &e| {
            b.iter(|| extract_conflicts(black_box(&enriched), &pscene, &pscale, &sp, e))
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
