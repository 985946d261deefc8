use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use pcshape::defenses::outlier_remove;
use pcshape::geometry::{chamfer_distance, delaunay_3d, estimate_surface, farthest_point_sample, SurfaceIndex, VpTree};
use pcshape::net::SaliencyKind;
use pcshape_bench::{model, torus_cloud};

fn geometry(c: &mut Criterion) {
    let mut g = c.benchmark_group("geometry");
    g.sample_size(20);
    for n in [256, 1024] {
        let (cloud, mesh) = torus_cloud(n, 1);
        let (other, _) = torus_cloud(n, 2);
        g.bench_with_input(BenchmarkId::new("vptree_build", n), &cloud, |b, c| b.iter(|| VpTree::from_points(&c.points).unwrap()));
        let tree = VpTree::from_points(&cloud.points).unwrap();
        g.bench_with_input(BenchmarkId::new("vptree_10nn_all", n), &cloud, |b, c| {
            b.iter(|| c.iter().map(|&p| tree.k_nearest(p, 10, None).unwrap().len()).sum::<usize>())
        });
        g.bench_with_input(BenchmarkId::new("chamfer", n), &cloud, |b, c| b.iter(|| chamfer_distance(c, &other).unwrap()));
        g.bench_with_input(BenchmarkId::new("delaunay", n), &cloud, |b, c| b.iter(|| delaunay_3d(c).unwrap().len()));
        g.bench_with_input(BenchmarkId::new("alpha_shape", n), &cloud, |b, c| b.iter(|| estimate_surface(c).unwrap().mesh.len()));
        g.bench_with_input(BenchmarkId::new("fps_half", n), &cloud, |b, c| b.iter(|| farthest_point_sample(&c.points, n / 2, &[]).unwrap()));
        let index = SurfaceIndex::new(mesh).unwrap();
        g.bench_with_input(BenchmarkId::new("project_all", n), &other, |b, c| {
            b.iter(|| c.iter().map(|&p| index.distance(p)).sum::<f64>())
        });
        g.bench_with_input(BenchmarkId::new("outlier_remove", n), &cloud, |b, c| b.iter(|| outlier_remove(c, 10, 1.0).unwrap().len()));
    }
    g.finish();
}

fn network(c: &mut Criterion) {
    let mut g = c.benchmark_group("network");
    g.sample_size(20);
    let params = model(5, 3);
    for n in [256, 1024] {
        let (cloud, _) = torus_cloud(n, 4);
        g.bench_with_input(BenchmarkId::new("forward", n), &cloud, |b, c| b.iter(|| black_box(params.forward(c).unwrap())));
        g.bench_with_input(BenchmarkId::new("input_gradient", n), &cloud, |b, c| b.iter(|| params.input_gradient(c, 0).unwrap()));
        g.bench_with_input(BenchmarkId::new("param_gradient", n), &cloud, |b, c| b.iter(|| params.loss_and_param_gradient(c, 0).unwrap()));
        g.bench_with_input(BenchmarkId::new("probability_saliency", n), &cloud, |b, c| {
            b.iter(|| params.saliency(c, SaliencyKind::Probability, 0).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, geometry, network);
criterion_main!(benches);
