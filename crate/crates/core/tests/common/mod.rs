//! Shared fixtures and oracles for the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use chrono::{TimeZone, Utc};
use graphy::autodiff::{finite_diff_grad, Activation, Mlp, ParamStore, Tape, Tensor, Var};
use graphy::geo::{Graph, SensorMeta, WindRecord};
use graphy::model::{Batch, ConvectionModule, GraphContext, Normalizer, EDGE_FEATURES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GRAD_TOL: f64 = 1e-4;
pub const FD_STEP: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn hour(h: i64) -> chrono::DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap() + chrono::Duration::hours(h)
}

/// Sensors scattered over roughly 10 km around a fixed origin.
pub fn random_sensors(rng: &mut impl Rng, n: usize) -> Vec<SensorMeta> {
    (0..n)
        .map(|i| {
            SensorMeta::new(format!("s{i}"), 36.7 + rng.random_range(0.0..0.09), -119.8 + rng.random_range(0.0..0.11))
                .unwrap()
        })
        .collect()
}

pub fn random_wind(rng: &mut impl Rng) -> WindRecord {
    WindRecord::new(hour(0), rng.random_range(0.5..20.0), rng.random_range(0.0..360.0)).unwrap()
}

pub fn unit_norm() -> Normalizer {
    Normalizer { pm_mean: 0.0, pm_std: 1.0, wind_scale: 10.0, dist_scale: 5.0 }
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// A random graph with `blocks` samples of random edge triples.
pub fn random_batch(rng: &mut impl Rng, n: usize, blocks: usize, input_dim: usize) -> (GraphContext, Batch) {
    let ctx = GraphContext::new(Graph::build(random_sensors(rng, n)).unwrap()).unwrap();
    let norm = unit_norm();
    let mut edges = Vec::new();
    for _ in 0..blocks {
        edges.extend(ctx.edge_rows(&random_wind(rng), &norm));
    }
    let edges = Tensor::matrix(blocks * n * (n - 1), EDGE_FEATURES, edges).unwrap();
    let inputs = random_matrix(rng, blocks * n, input_dim);
    let batch = Batch::from_parts(inputs, edges, ctx.matrices.clone()).unwrap();
    (ctx, batch)
}

/// Replaces every parameter with fresh uniform(-1, 1) values.
pub fn randomize(store: &mut ParamStore, rng: &mut impl Rng) {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let s = store.tensor(id).shape().to_vec();
        let t = random_matrix(rng, s[0], s[1]);
        store.set(id, t).unwrap();
    }
}

fn weighted_loss<F>(f: &F, store: &ParamStore, input: &Tensor, weights: &Tensor) -> f64
where
    F: Fn(&mut Tape, &ParamStore, Var) -> Var,
{
    let mut tape = Tape::new();
    let x = tape.input(input.clone());
    let out = f(&mut tape, store, x);
    tape.value(out).data().iter().zip(weights.data()).map(|(a, b)| a * b).sum()
}

/// Central differences with step `FD_STEP`; coordinates that disagree are
/// retried with smaller steps, which only matters when a relu kink lies
/// inside the first stencil.
fn numeric_grad(mut eval: impl FnMut(&Tensor) -> f64, x: &Tensor, analytic: &Tensor) -> f64 {
    let coarse = finite_diff_grad(&mut eval, x, FD_STEP);
    let mut worst = 0.0f64;
    for k in 0..x.numel() {
        let a = analytic.data()[k];
        let rel = |n: f64| (a - n).abs() / a.abs().max(1.0);
        let mut best = rel(coarse.data()[k]);
        let mut h = FD_STEP;
        while best > GRAD_TOL && h > 1e-9 {
            h /= 10.0;
            let mut probe = x.clone();
            let orig = probe.data()[k];
            probe.data_mut()[k] = orig + h;
            let up = eval(&probe);
            probe.data_mut()[k] = orig - h;
            let down = eval(&probe);
            best = best.min(rel((up - down) / (2.0 * h)));
        }
        worst = worst.max(best);
    }
    worst
}

/// Max relative error between backward and finite differences, over the
/// input and every parameter, for `loss = sum(out * R)` with random `R`.
pub fn grad_check<F>(store: &ParamStore, input: &Tensor, rng: &mut impl Rng, f: F) -> f64
where
    F: Fn(&mut Tape, &ParamStore, Var) -> Var,
{
    let mut tape = Tape::new();
    let x = tape.input(input.clone());
    let out = f(&mut tape, store, x);
    let shape = tape.value(out).shape().to_vec();
    let weights = random_matrix(rng, shape[0], shape[1]);
    let wv = tape.constant(weights.clone());
    let prod = tape.mul(out, wv).unwrap();
    let loss = tape.sum(prod);
    let mut grads_store = store.clone();
    grads_store.zero_grad();
    let grads = tape.backward_into(loss, &mut grads_store).unwrap();

    let gx = grads.get(x).cloned().unwrap_or_else(|| Tensor::zeros(input.shape()));
    let mut worst = numeric_grad(|t| weighted_loss(&f, store, t, &weights), input, &gx);
    for id in store.ids() {
        let analytic = grads_store.get(id).grad.clone();
        let base = store.tensor(id).clone();
        let mut probe_store = store.clone();
        let err = numeric_grad(
            |t| {
                probe_store.set(id, t.clone()).unwrap();
                weighted_loss(&f, &probe_store, input, &weights)
            },
            &base,
            &analytic,
        );
        worst = worst.max(err);
    }
    worst
}

/// Plain dense MLP evaluation from stored weights, row by row.
pub fn mlp_rows(store: &ParamStore, mlp: &Mlp, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    rows.iter().map(|r| mlp_row(store, mlp, r)).collect()
}

pub fn mlp_row(store: &ParamStore, mlp: &Mlp, row: &[f64]) -> Vec<f64> {
    let mut h = row.to_vec();
    for layer in &mlp.layers {
        let w = store.tensor(layer.weight);
        let b = store.tensor(layer.bias);
        let mut out = b.data().to_vec();
        for (i, hv) in h.iter().enumerate() {
            for (o, wv) in out.iter_mut().zip(w.row(i)) {
                *o += hv * wv;
            }
        }
        if layer.activation == Activation::Relu {
            out.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        h = out;
    }
    h
}

fn tensor_rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

/// Straight-line convection layer: per-edge messages built from explicit
/// concatenations, summed (or averaged) per target, then the update MLP.
/// `edges[b][i][j]` holds the incoming edge feature of `j -> i`; returns the
/// outputs and the transformed edge features for the next layer.
pub fn convection_oracle(
    store: &ParamStore,
    module: &ConvectionModule,
    x: &Tensor,
    edges: &[Vec<Vec<Vec<f64>>>],
    nodes: usize,
    mean: bool,
) -> (Vec<Vec<f64>>, Vec<Vec<Vec<Vec<f64>>>>) {
    let xp = mlp_rows(store, &module.node_mlp, &tensor_rows(x));
    let we = store.tensor(module.edge_mlp.weight);
    let be = store.tensor(module.edge_mlp.bias);
    let edge_mlp = |e: &[f64]| -> Vec<f64> {
        let mut out = be.data().to_vec();
        for (k, ev) in e.iter().enumerate() {
            for (o, w) in out.iter_mut().zip(we.row(k)) {
                *o += ev * w;
            }
        }
        out
    };
    let mut outputs = Vec::new();
    let mut next = Vec::new();
    for (b, block) in edges.iter().enumerate() {
        let mut next_block = vec![vec![Vec::new(); nodes]; nodes];
        for i in 0..nodes {
            let xi = &xp[b * nodes + i];
            let mut m = vec![0.0; xi.len()];
            for j in 0..nodes {
                if j == i {
                    continue;
                }
                let xj = &xp[b * nodes + j];
                let e = edge_mlp(&block[i][j]);
                let mut cat: Vec<f64> = xi.iter().zip(&e).map(|(a, c)| a + c).collect();
                cat.extend(xj.iter().zip(&e).map(|(a, c)| a + c));
                let phi = mlp_row(store, &module.message_mlp, &cat);
                for (mv, p) in m.iter_mut().zip(&phi) {
                    *mv += p;
                }
                next_block[i][j] = e;
            }
            if mean {
                m.iter_mut().for_each(|v| *v /= (nodes - 1) as f64);
            }
            let mut c = m.clone();
            c.extend(xi.iter().zip(&m).map(|(a, mv)| a + mv));
            outputs.push(mlp_row(store, &module.update_mlp, &c));
        }
        next.push(next_block);
    }
    (outputs, next)
}

/// Raw edge triples of a batch as `[block][target][source]`.
pub fn raw_edges(batch: &Batch) -> Vec<Vec<Vec<Vec<f64>>>> {
    let n = batch.nodes;
    (0..batch.blocks)
        .map(|b| {
            (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| {
                            if i == j {
                                Vec::new()
                            } else {
                                let e = b * n * (n - 1) + graphy::autodiff::edge_index(n, i, j);
                                batch.edge_raw.row(e).to_vec()
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Dense symmetric eigenvalues via nalgebra.
pub fn symmetric_eigenvalues(t: &Tensor) -> Vec<f64> {
    let n = t.rows();
    let m = nalgebra::DMatrix::from_row_slice(n, n, t.data());
    let mut ev: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Gauss-Jordan elimination with partial pivoting on a dense system.
pub fn gauss_jordan(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        let d = a[col][col];
        for k in 0..n {
            a[col][k] /= d;
        }
        b[col] /= d;
        for r in 0..n {
            if r != col {
                let f = a[r][col];
                for k in 0..n {
                    a[r][k] -= f * a[col][k];
                }
                b[r] -= f * b[col];
            }
        }
    }
    b
}

pub fn arc(t: Tensor) -> Arc<Tensor> {
    Arc::new(t)
}

pub const GC_NODES: usize = 5;
pub const GC_HIDDEN: usize = 8;
pub const GC_LAYERS: usize = 2;
pub const GC_INSTANCES: u64 = 20;

/// Gradient check of the diffusion module on one random instance.
pub fn diffusion_grad_error(seed: u64) -> f64 {
    use graphy::model::DiffusionModule;
    let mut r = rng(seed);
    let (_, batch) = random_batch(&mut r, GC_NODES, 2, 1);
    let mut store = ParamStore::new();
    let m = DiffusionModule::new(&mut store, "diffusion", GC_HIDDEN, Activation::Relu, &mut r).unwrap();
    randomize(&mut store, &mut r);
    let x = random_matrix(&mut r, batch.rows(), GC_HIDDEN);
    grad_check(&store, &x, &mut r, |tape, s, xv| m.forward(tape, s, &batch, xv).unwrap())
}

/// Two chained convection layers, so both the raw and the composed edge
/// paths are covered.
pub fn convection_grad_error(seed: u64, aggregation: graphy::model::Aggregation) -> f64 {
    use graphy::model::EdgeAffine;
    let mut r = rng(seed);
    let (_, batch) = random_batch(&mut r, GC_NODES, 2, 1);
    let mut store = ParamStore::new();
    let c0 = ConvectionModule::new(&mut store, "c0", EDGE_FEATURES, GC_HIDDEN, aggregation, &mut r).unwrap();
    let c1 = ConvectionModule::new(&mut store, "c1", GC_HIDDEN, GC_HIDDEN, aggregation, &mut r).unwrap();
    randomize(&mut store, &mut r);
    let x = random_matrix(&mut r, batch.rows(), GC_HIDDEN);
    grad_check(&store, &x, &mut r, |tape, s, xv| {
        let (h, e) = c0.forward(tape, s, &batch, xv, EdgeAffine::default()).unwrap();
        c1.forward(tape, s, &batch, h, e).unwrap().0
    })
}

pub fn local_grad_error(seed: u64, norm: graphy::model::LocalNorm) -> f64 {
    use graphy::model::LocalModule;
    let mut r = rng(seed);
    let (_, batch) = random_batch(&mut r, GC_NODES, 2, 1);
    let mut store = ParamStore::new();
    let m = LocalModule::new(&mut store, "local", GC_HIDDEN, norm, Activation::Relu, &mut r).unwrap();
    randomize(&mut store, &mut r);
    let x = random_matrix(&mut r, batch.rows(), GC_HIDDEN);
    grad_check(&store, &x, &mut r, |tape, s, xv| m.forward(tape, s, &batch, xv).unwrap())
}

/// The fusion head with its three inputs packed side by side.
pub fn fusion_grad_error(seed: u64, mode: graphy::model::FusionMode) -> f64 {
    use graphy::model::FusionHead;
    let mut r = rng(seed);
    let (_, batch) = random_batch(&mut r, GC_NODES, 2, 1);
    let mut store = ParamStore::new();
    let m = FusionHead::new(&mut store, "fusion", GC_HIDDEN, mode, &mut r).unwrap();
    randomize(&mut store, &mut r);
    let d = GC_HIDDEN;
    let x = random_matrix(&mut r, batch.rows(), 3 * d);
    grad_check(&store, &x, &mut r, |tape, s, xv| {
        let parts = [
            tape.slice_cols(xv, 0, d).unwrap(),
            tape.slice_cols(xv, d, 2 * d).unwrap(),
            tape.slice_cols(xv, 2 * d, 3 * d).unwrap(),
        ];
        m.forward(tape, s, &batch, parts).unwrap().features
    })
}

/// Full stacked model, differentiated with respect to node inputs and all
/// parameters.
pub fn model_grad_error(seed: u64) -> f64 {
    use graphy::model::{GraPhyModel, ModelConfig};
    let mut r = rng(seed);
    let config = ModelConfig::custom(GC_LAYERS, GC_HIDDEN);
    let (_, batch) = random_batch(&mut r, GC_NODES, 2, config.input_dim());
    let mut model = GraPhyModel::new(config, seed).unwrap();
    randomize(&mut model.store, &mut r);
    let x = batch.node_inputs.clone();
    grad_check(&model.store.clone(), &x, &mut r, |tape, s, xv| {
        let mut m = model.clone();
        m.store = s.clone();
        m.forward_from(tape, &batch, xv).unwrap().0
    })
}

/// Worst excursion of `L_D` eigenvalues outside `[-1, 1]` and worst
/// `lambda_max` error against the dense oracle, over random graphs.
pub fn laplacian_spectrum_errors(instances: u64) -> (f64, f64) {
    use graphy::geo::GraphMatrices;
    let mut outside = 0.0f64;
    let mut lambda_err = 0.0f64;
    for seed in 0..instances {
        let mut r = rng(1000 + seed);
        let n = r.random_range(2..=10);
        let g = Graph::build(random_sensors(&mut r, n)).unwrap();
        let m = GraphMatrices::from_graph(&g).unwrap();
        let ev = symmetric_eigenvalues(&m.scaled_laplacian);
        outside = outside.max(ev[0].abs().max(ev[n - 1].abs()) - 1.0);
        let lev = symmetric_eigenvalues(&m.laplacian);
        lambda_err = lambda_err.max((lev[n - 1] - m.lambda_max).abs());
    }
    (outside.max(0.0), lambda_err)
}

/// Largest `||L_D X|| - ||X||` over random graphs and features (one
/// diffusion step with identity weights and activations).
pub fn diffusion_norm_growth(instances: u64) -> f64 {
    use graphy::geo::GraphMatrices;
    let mut worst = f64::NEG_INFINITY;
    for seed in 0..instances {
        let mut r = rng(2000 + seed);
        let n = r.random_range(2..=10);
        let g = Graph::build(random_sensors(&mut r, n)).unwrap();
        let m = GraphMatrices::from_graph(&g).unwrap();
        let x = random_matrix(&mut r, n, 4);
        let y = m.scaled_laplacian.matmul(&x).unwrap();
        worst = worst.max(y.norm() - x.norm());
    }
    worst
}

/// Worst deviation of fusion weights from positivity and unit row sums.
pub fn fusion_weight_errors(instances: u64) -> (f64, f64) {
    use graphy::model::{FusionHead, FusionMode};
    let mut min_w = f64::INFINITY;
    let mut sum_err = 0.0f64;
    for seed in 0..instances {
        let mut r = rng(3000 + seed);
        let (_, batch) = random_batch(&mut r, 6, 3, 1);
        let mut store = ParamStore::new();
        let mode = if seed % 2 == 0 { FusionMode::PerNode } else { FusionMode::PerLayer };
        let head = FusionHead::new(&mut store, "f", 8, mode, &mut r).unwrap();
        randomize(&mut store, &mut r);
        let mut tape = Tape::new();
        let parts = [0, 1, 2].map(|_| {
            let t = random_matrix(&mut r, batch.rows(), 8).map(|v| 5.0 * v);
            tape.constant(t)
        });
        let out = head.forward(&mut tape, &store, &batch, parts).unwrap();
        let w = tape.value(out.weights);
        for row in 0..w.rows() {
            let s: f64 = w.row(row).iter().sum();
            sum_err = sum_err.max((s - 1.0).abs());
            min_w = min_w.min(w.row(row).iter().copied().fold(f64::INFINITY, f64::min));
        }
    }
    (min_w, sum_err)
}

/// Max deviation between model outputs on a graph and on its node
/// permutation (compared after undoing the permutation).
pub fn permutation_error(seed: u64) -> f64 {
    use graphy::model::{GraPhyModel, ModelConfig, NodeWindow};
    use rand::seq::SliceRandom;
    let mut r = rng(4000 + seed);
    let n = 7;
    let sensors = random_sensors(&mut r, n);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut r);
    let permuted: Vec<SensorMeta> = perm.iter().map(|&k| sensors[k].clone()).collect();
    let readings: Vec<f64> = (0..n).map(|_| r.random_range(0.0..50.0)).collect();
    let observed: Vec<bool> = (0..n).map(|i| i != 2).collect();
    let p_readings: Vec<f64> = perm.iter().map(|&k| readings[k]).collect();
    let p_observed: Vec<bool> = perm.iter().map(|&k| observed[k]).collect();
    let wind = random_wind(&mut r);
    let norm = Normalizer { pm_mean: 20.0, pm_std: 10.0, wind_scale: 8.0, dist_scale: 4.0 };
    let model = GraPhyModel::new(ModelConfig::custom(3, 16), seed).unwrap();
    let run = |s: Vec<SensorMeta>, rd: &[f64], ob: &[bool]| {
        let ctx = GraphContext::new(Graph::build(s).unwrap()).unwrap();
        let w = NodeWindow { readings: rd, observed: ob, wind: &wind };
        let b = Batch::build(&ctx, &norm, 1, &[w]).unwrap();
        model.predict_standardized(&b).unwrap()
    };
    let a = run(sensors, &readings, &observed);
    let b = run(permuted, &p_readings, &p_observed);
    perm.iter().enumerate().map(|(pos, &k)| (b[pos] - a[k]).abs()).fold(0.0, f64::max)
}

fn random_points(r: &mut impl Rng, n: usize) -> Vec<(f64, f64)> {
    (0..n).map(|_| (r.random_range(0.0..10.0), r.random_range(0.0..10.0))).collect()
}

fn planar_dist(p: &[(f64, f64)]) -> Vec<f64> {
    let n = p.len();
    (0..n * n).map(|k| planar(p[k / n], p[k % n])).collect()
}

fn planar(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// IDW: worst error of the exactness rule and of the brute-force weights.
pub fn idw_errors(instances: u64) -> (f64, f64) {
    use graphy::baselines::idw;
    let (mut exact, mut brute) = (0.0f64, 0.0f64);
    for seed in 0..instances {
        let mut r = rng(5000 + seed);
        let p = random_points(&mut r, 4);
        let v: Vec<f64> = (0..4).map(|_| r.random_range(0.0..100.0)).collect();
        let k = (seed % 4) as usize;
        let to: Vec<f64> = p.iter().map(|&q| planar(q, p[k])).collect();
        exact = exact.max((idw(&to, &v, 1.0).unwrap() - v[k]).abs());
        let t = (r.random_range(0.0..10.0), r.random_range(0.0..10.0));
        let to: Vec<f64> = p.iter().map(|&q| planar(q, t)).collect();
        let w: Vec<f64> = to.iter().map(|d| 1.0 / d).collect();
        let total: f64 = w.iter().sum();
        let expect: f64 = w.iter().zip(&v).map(|(a, b)| a / total * b).sum();
        brute = brute.max((idw(&to, &v, 1.0).unwrap() - expect).abs());
    }
    (exact, brute)
}

/// Kriging: worst `|sum(lambda) - 1|`, worst exact-interpolation error
/// (nugget 0), and worst weight error against a Gauss-Jordan solve of the
/// hand-assembled 4x4 system.
pub fn kriging_errors(instances: u64) -> (f64, f64, f64) {
    kriging_errors_from(6000, instances)
}

pub fn kriging_errors_from(first_seed: u64, instances: u64) -> (f64, f64, f64) {
    use graphy::baselines::{fit_variogram, okriging, Variogram, VARIOGRAM_BINS};
    let (mut lsum, mut exact, mut oracle) = (0.0f64, 0.0f64, 0.0f64);
    for seed in first_seed..first_seed + instances {
        let mut r = rng(seed);
        let n = r.random_range(3..12);
        let p = random_points(&mut r, n);
        let v: Vec<f64> = (0..n).map(|_| r.random_range(0.0..100.0)).collect();
        let dist = planar_dist(&p);
        let t = (r.random_range(0.0..10.0), r.random_range(0.0..10.0));
        let to: Vec<f64> = p.iter().map(|&q| planar(q, t)).collect();
        let vg = fit_variogram(&dist, &v, VARIOGRAM_BINS).unwrap();
        let sol = okriging(&dist, &to, &v, &vg).unwrap();
        if !sol.fell_back {
            lsum = lsum.max((sol.weights.iter().sum::<f64>() - 1.0).abs());
        }
        let vg0 = Variogram { nugget: 0.0, slope: r.random_range(0.1..5.0) };
        let k = seed as usize % n;
        let to_k: Vec<f64> = p.iter().map(|&q| planar(q, p[k])).collect();
        let sol = okriging(&dist, &to_k, &v, &vg0).unwrap();
        exact = exact.max((sol.prediction - v[k]).abs());
        lsum = lsum.max((sol.weights.iter().sum::<f64>() - 1.0).abs());

        // N = 3, gamma(h) = h.
        let p3 = random_points(&mut r, 3);
        let d3 = planar_dist(&p3);
        let to3: Vec<f64> = p3.iter().map(|&q| planar(q, t)).collect();
        let mut a = vec![vec![0.0; 4]; 4];
        let mut b = vec![0.0; 4];
        for i in 0..3 {
            for j in 0..3 {
                a[i][j] = d3[i * 3 + j];
            }
            a[i][3] = 1.0;
            a[3][i] = 1.0;
            b[i] = to3[i];
        }
        b[3] = 1.0;
        let x = gauss_jordan(a, b);
        let sol = okriging(&d3, &to3, &[1.0, 2.0, 3.0], &Variogram { nugget: 0.0, slope: 1.0 }).unwrap();
        for i in 0..3 {
            oracle = oracle.max((sol.weights[i] - x[i]).abs());
        }
        oracle = oracle.max((sol.multiplier - x[3]).abs());
    }
    (lsum, exact, oracle)
}

/// GP: worst noiseless interpolation error at a training point and worst
/// error against the hand-solved two-point posterior mean.
pub fn gp_errors(instances: u64) -> (f64, f64) {
    use graphy::baselines::{gp_predict, GpModel, JITTER};
    let (mut interp, mut two) = (0.0f64, 0.0f64);
    for seed in 0..instances {
        let mut r = rng(7000 + seed);
        let n = r.random_range(2..10);
        let p = random_points(&mut r, n);
        let v: Vec<f64> = (0..n).map(|_| r.random_range(0.0..100.0)).collect();
        let dist = planar_dist(&p);
        let model = GpModel {
            mean: r.random_range(0.0..50.0),
            variance: r.random_range(10.0..400.0),
            lengthscale: r.random_range(1.0..20.0),
            noise: 0.0,
        };
        let k = seed as usize % n;
        let to: Vec<f64> = p.iter().map(|&q| planar(q, p[k])).collect();
        interp = interp.max((gp_predict(&dist, &to, &v, &model).unwrap() - v[k]).abs());

        let d = r.random_range(0.5..10.0);
        let (t1, t2) = (r.random_range(0.1..10.0), r.random_range(0.1..10.0));
        let (v1, v2) = (r.random_range(0.0..50.0), r.random_range(0.0..50.0));
        let m = GpModel { noise: r.random_range(0.0..2.0), ..model };
        let kf = |h: f64| m.variance * (-h / m.lengthscale).exp();
        let a = m.variance + m.noise + JITTER;
        let b = kf(d);
        let det = a * a - b * b;
        let (r1, r2) = (v1 - m.mean, v2 - m.mean);
        let expect = m.mean + (kf(t1) * (a * r1 - b * r2) + kf(t2) * (a * r2 - b * r1)) / det;
        let got = gp_predict(&[0.0, d, d, 0.0], &[t1, t2], &[v1, v2], &m).unwrap();
        two = two.max((got - expect).abs());
    }
    (interp, two)
}

/// Worst relative per-hour mass change with no wind, sources or decay.
pub fn mass_conservation_error() -> f64 {
    use graphy::data_io::{Grid, Simulator};
    let grid = Grid { width: 24, height: 20, cell_km: 0.5 };
    let mut sim = Simulator::new(grid, 0.3, 0.0, 0.0, Vec::new()).unwrap();
    let mut r = rng(8000);
    sim.field.iter_mut().for_each(|v| *v = r.random_range(0.0..100.0));
    let mut worst = 0.0f64;
    for _ in 0..24 {
        let before = sim.total_mass();
        sim.step_hour(0.0, 0.0).unwrap();
        worst = worst.max((sim.total_mass() - before).abs() / before);
    }
    worst
}

/// Worst distance (in cells) between the pulse's centre of mass and the
/// displacement `v t`, hour by hour over 10 hours of pure convection.
pub fn pulse_displacement_error_cells() -> f64 {
    use graphy::data_io::{Grid, Simulator};
    let grid = Grid { width: 64, height: 64, cell_km: 0.5 };
    let mut sim = Simulator::new(grid, 0.0, 0.0, 0.0, Vec::new()).unwrap();
    sim.field[grid.index(20, 12)] = 1000.0;
    let (u, v) = (1.3, 0.7);
    let (x0, y0) = sim.center_of_mass();
    let mut worst = 0.0f64;
    for t in 1..=10 {
        sim.step_hour(u, v).unwrap();
        let (x, y) = sim.center_of_mass();
        let err = ((x - x0 - u * t as f64).powi(2) + (y - y0 - v * t as f64).powi(2)).sqrt();
        worst = worst.max(err / grid.cell_km);
    }
    worst
}

/// Spatial variance of a diffusing pulse, hour by hour.
pub fn diffusion_variances() -> Vec<f64> {
    use graphy::data_io::{Grid, Simulator};
    let grid = Grid { width: 64, height: 64, cell_km: 0.5 };
    let mut sim = Simulator::new(grid, 0.3, 0.0, 0.0, Vec::new()).unwrap();
    sim.field[grid.index(32, 32)] = 500.0;
    let mut out = vec![sim.spatial_variance()];
    for _ in 0..20 {
        sim.step_hour(0.0, 0.0).unwrap();
        out.push(sim.spatial_variance());
    }
    out
}

/// Metric identities over random reports: returns the worst
/// `mae^2 - mse` (must be <= 0), the worst `|R^2 - 1|` for perfect
/// predictions, the worst SH translation and scaling errors, and the worst
/// bin-recombination error.
pub fn metric_identity_errors(instances: u64) -> [f64; 5] {
    use graphy::evaluation::{binned_mae, gt_edges, metrics, recombine, spatial_heterogeneity};
    let mut out = [f64::NEG_INFINITY, 0.0, 0.0, 0.0, 0.0];
    for seed in 0..instances {
        let mut r = rng(9000 + seed);
        let n = r.random_range(2..300);
        let truth: Vec<f64> = (0..n).map(|_| r.random_range(0.0..150.0)).collect();
        let mut truth = truth;
        truth[0] += 1.0;
        let pred: Vec<f64> = truth.iter().map(|t| t + r.random_range(-20.0..20.0)).collect();
        let m = metrics(&pred, &truth).unwrap();
        out[0] = out[0].max(m.mae * m.mae - m.mse);
        out[1] = out[1].max((metrics(&truth, &truth).unwrap().r2 - 1.0).abs());
        let sh = spatial_heterogeneity(&truth).unwrap();
        let shift = r.random_range(-100.0..100.0);
        let c = r.random_range(-5.0..5.0);
        let shifted: Vec<f64> = truth.iter().map(|v| v + shift).collect();
        let scaled: Vec<f64> = truth.iter().map(|v| v * c).collect();
        out[2] = out[2].max((spatial_heterogeneity(&shifted).unwrap() - sh).abs());
        out[3] = out[3].max((spatial_heterogeneity(&scaled).unwrap() - c * c * sh).abs() / (1.0 + c * c * sh));
        let abs: Vec<f64> = pred.iter().zip(&truth).map(|(p, t)| (p - t).abs()).collect();
        let max_t = truth.iter().copied().fold(0.0, f64::max);
        let b = binned_mae(&truth, &abs, &gt_edges(max_t)).unwrap();
        out[4] = out[4].max((recombine(&b).unwrap() - m.mae).abs());
    }
    out
}
