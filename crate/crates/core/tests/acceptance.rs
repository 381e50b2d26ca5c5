//! Release gate: ten numbered end-to-end checks across the whole pipeline.
//! Each test prints a single `ACCEPTANCE <n> <name>: PASS|FAIL` line (visible
//! under `cargo test --test acceptance -- --nocapture`) before asserting, and
//! heavy artifacts (packings, trained encoders) are built once and shared.

mod common;

use std::collections::HashSet;
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use hypack::packing::{boundary_grad, repulsion_grad};
use hypack::{
    boundary_loss, hack_train, hungarian, hyp_distance, hyp_distance_grad_u, hyperbolic_grad,
    knn_density, make_congealed_dataset, norm_density_profile, per_particle_radius,
    rank_sum_p_less, read_idx, repulsion_loss, select_subset, spearman, synth_clusters,
    synth_image_class, train_classifier, write_idx, BallParams, BallPoint, CongealSpec,
    CostMatrix, Dataset, DatasetItem, DensitySpec, EncoderParams, JitterKind, Layer, Metric,
    MlpSpec, PackOutcome, PackingSpec, ParticleSet, SelectionMode, SelectionSpec, Shape,
    TrainConfig,
};

fn report(n: u32, name: &str, pass: bool, detail: &str) {
    println!("ACCEPTANCE {n} {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "acceptance {n} {name} failed: {detail}");
}

/// Reference packing (n = 100) plus its wall-clock seconds.
fn pack100() -> &'static (PackOutcome, f64) {
    static CELL: OnceLock<(PackOutcome, f64)> = OnceLock::new();
    CELL.get_or_init(|| {
        let t0 = Instant::now();
        let out = hypack::pack(&PackingSpec::default(), &BallParams::unit()).expect("pack(100)");
        let secs = t0.elapsed().as_secs_f64();
        (out, secs)
    })
}

/// Shared n = 2000 packing for the density and congealing criteria.
fn particles2000() -> &'static ParticleSet {
    static CELL: OnceLock<ParticleSet> = OnceLock::new();
    CELL.get_or_init(|| {
        let spec = PackingSpec { n: 2000, ..Default::default() };
        hypack::pack(&spec, &BallParams::unit()).expect("pack(2000)").particles
    })
}

// ------------------------------------------------------------ criterion 1

#[test]
fn criterion_01_packing_uniformity() {
    let (out, secs) = pack100();
    let spec = out.particles.spec();
    assert_eq!(
        (spec.n, spec.r, spec.k, spec.lr, spec.epochs),
        (100, 0.76, 1.55, 0.01, 1000),
        "reference packing settings drifted"
    );
    let ratio = out.final_repulsion / out.initial_repulsion;

    let positions = out.particles.positions();
    let nn: Vec<f64> = (0..positions.len())
        .map(|i| {
            (0..positions.len())
                .filter(|&j| j != i)
                .map(|j| hyp_distance(positions[i].coords(), positions[j].coords()).unwrap())
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mean = nn.iter().sum::<f64>() / nn.len() as f64;
    let var = nn.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / nn.len() as f64;
    let cv = var.sqrt() / mean;
    let max_norm = positions.iter().map(BallPoint::norm).fold(0.0, f64::max);

    let pass = ratio <= 1e-3 && cv <= 0.15 && max_norm <= 0.76 && *secs <= 60.0;
    report(
        1,
        "packing-uniformity",
        pass,
        &format!(
            "repulsion ratio {ratio:.3e}, nn-distance cv {cv:.4}, max norm {max_norm:.6}, {secs:.2}s"
        ),
    );
}

// ------------------------------------------------------------ criterion 2

#[test]
fn criterion_02_radius_chain() {
    let spec = PackingSpec::default();
    let ball = BallParams::unit();
    let r_n = per_particle_radius(&spec, &ball).unwrap();

    // Independent re-derivation of the chain for r = 0.76, s = 1, n = 100.
    let (r, s, n) = (0.76_f64, 1.0_f64, 100.0_f64);
    let r_b = s * ((s + r) / (s - r)).ln();
    let a_b = 4.0 * std::f64::consts::PI * s * s * (r_b / (2.0 * s)).sinh().powi(2);
    let r_n_ref = 2.0 * s * (a_b / n / (4.0 * std::f64::consts::PI * s * s)).sqrt().asinh();

    let err_rb = (r_b - 1.992430).abs();
    let err_rn = (r_n - 0.233353).abs();
    let err_internal = (r_n - r_n_ref).abs();
    let pass = err_rb <= 1e-5 && err_rn <= 1e-5 && err_internal <= 1e-12;
    report(
        2,
        "radius-chain",
        pass,
        &format!(
            "r_B {r_b:.9} (|Δ| {err_rb:.2e}), r_n {r_n:.9} (|Δ| {err_rn:.2e}), re-derivation gap {err_internal:.2e}"
        ),
    );
}

// ------------------------------------------------------------ criterion 3

use common::brute_force_min;

#[test]
fn criterion_03_matching_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut mismatches = 0usize;
    for case in 0..200 {
        let b = 2 + case % 6;
        let rows: Vec<Vec<f64>> =
            (0..b).map(|_| (0..b).map(|_| rng.gen_range(0.0..10.0)).collect()).collect();
        let cost = CostMatrix::new(rows).unwrap();
        let perm = hungarian(&cost);
        if cost.total(&perm) != brute_force_min(&cost) {
            mismatches += 1;
        }
    }

    let rows: Vec<Vec<f64>> =
        (0..128).map(|_| (0..128).map(|_| rng.gen_range(0.0..10.0)).collect()).collect();
    let cost = CostMatrix::new(rows).unwrap();
    let t0 = Instant::now();
    let perm = hungarian(&cost);
    let ms = t0.elapsed().as_secs_f64() * 1e3;
    assert_eq!(perm.iter().copied().collect::<HashSet<_>>().len(), 128);

    let pass = mismatches == 0 && ms <= 50.0;
    report(
        3,
        "matching-oracle",
        pass,
        &format!("200 exhaustive cases, {mismatches} mismatches; 128x128 solve {ms:.2} ms"),
    );
}

// ------------------------------------------------------------ criterion 4

fn rel_err(analytic: &[f64], fd: &[f64]) -> f64 {
    let diff: f64 =
        analytic.iter().zip(fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let scale: f64 = fd.iter().map(|b| b * b).sum::<f64>().sqrt();
    diff / scale.max(1e-9)
}

/// Random interior point with norm below `max_norm`.
fn sample_point(rng: &mut ChaCha8Rng, dim: usize, max_norm: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-max_norm..max_norm)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n < max_norm && n > 0.05 {
            return v;
        }
    }
}

fn fd_distance_case(rng: &mut ChaCha8Rng) -> f64 {
    let dim = rng.gen_range(2..=4);
    let (u, v) = loop {
        let u = sample_point(rng, dim, 0.85);
        let v = sample_point(rng, dim, 0.85);
        let gap: f64 = u.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if gap > 0.05 {
            break (u, v);
        }
    };
    let mut analytic = vec![0.0; dim];
    hyp_distance_grad_u(&u, &v, &mut analytic);
    let h = 1e-6;
    let fd: Vec<f64> = (0..dim)
        .map(|i| {
            let mut up = u.clone();
            let mut dn = u.clone();
            up[i] += h;
            dn[i] -= h;
            (hyp_distance(&up, &v).unwrap() - hyp_distance(&dn, &v).unwrap()) / (2.0 * h)
        })
        .collect();
    rel_err(&analytic, &fd)
}

fn fd_packing_case(rng: &mut ChaCha8Rng, push_boundary: bool) -> f64 {
    let (r_n, k, r, margin) = (0.3, 1.55, 0.76, 0.01);
    let contact = 2.0 * r_n;
    let dim = 2;
    let (u, v) = loop {
        let mut u = sample_point(rng, dim, 0.7);
        let v = sample_point(rng, dim, 0.7);
        if push_boundary {
            // Rescale u so the boundary hinge is active but not marginal.
            let n = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            let target = rng.gen_range(0.77..0.80);
            for x in &mut u {
                *x *= target / n;
            }
        }
        let d = hyp_distance(&u, &v).unwrap();
        let norm_u = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        let norm_v = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let clear_of_kinks = d > 0.2 * contact
            && (d - contact).abs() > 0.1 * contact
            && (norm_u - (r - margin)).abs() > 0.01
            && (norm_v - (r - margin)).abs() > 0.01;
        if clear_of_kinks {
            break (u, v);
        }
    };

    let mut gu = vec![0.0; dim];
    let mut gv = vec![0.0; dim];
    repulsion_grad(&u, &v, r_n, k, &mut gu, &mut gv);
    let mut bu = vec![0.0; dim];
    let mut bv = vec![0.0; dim];
    boundary_grad(&u, r, margin, &mut bu);
    boundary_grad(&v, r, margin, &mut bv);
    let analytic: Vec<f64> = gu
        .iter()
        .zip(&bu)
        .map(|(a, b)| a + b)
        .chain(gv.iter().zip(&bv).map(|(a, b)| a + b))
        .collect();

    let loss = |u: &[f64], v: &[f64]| {
        let pu = BallPoint::new(u.to_vec()).unwrap();
        let pv = BallPoint::new(v.to_vec()).unwrap();
        repulsion_loss(&pu, &pv, r_n, k)
            + boundary_loss(&pu, r, margin)
            + boundary_loss(&pv, r, margin)
    };
    let h = 1e-6;
    let mut fd = Vec::with_capacity(2 * dim);
    for i in 0..dim {
        let mut up = u.clone();
        let mut dn = u.clone();
        up[i] += h;
        dn[i] -= h;
        fd.push((loss(&up, &v) - loss(&dn, &v)) / (2.0 * h));
    }
    for i in 0..dim {
        let mut up = v.clone();
        let mut dn = v.clone();
        up[i] += h;
        dn[i] -= h;
        fd.push((loss(&u, &up) - loss(&u, &dn)) / (2.0 * h));
    }
    rel_err(&analytic, &fd)
}

/// Smallest |pre-activation| across hidden layers, to keep finite differences
/// away from rectifier kinks.
fn min_preact_margin(params: &EncoderParams, x: &[f64]) -> f64 {
    let sizes = &params.spec().layer_sizes;
    let mut act = x.to_vec();
    let mut margin = f64::INFINITY;
    for (l, layer) in params.layers().iter().enumerate() {
        let n_in = sizes[l];
        let mut y = layer.b.clone();
        for (o, yo) in y.iter_mut().enumerate() {
            for (i, &ai) in act.iter().enumerate() {
                *yo += layer.w[o * n_in + i] * ai;
            }
        }
        if l + 1 < params.layers().len() {
            for z in &y {
                margin = margin.min(z.abs());
            }
            for z in &mut y {
                if *z < 0.0 {
                    *z = 0.0;
                }
            }
        }
        act = y;
    }
    margin
}

fn fd_encoder_case(rng: &mut ChaCha8Rng) -> f64 {
    let ball = BallParams::unit();
    let r_clip = 0.98;
    let (params, xs, targets) = loop {
        let seed = rng.gen::<u64>();
        let params = EncoderParams::glorot(MlpSpec::new(vec![3, 4, 2], seed).unwrap());
        let xs: Vec<Vec<f64>> =
            (0..2).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let targets: Vec<BallPoint> =
            (0..2).map(|_| BallPoint::new(sample_point(rng, 2, 0.5)).unwrap()).collect();
        let clear = xs.iter().zip(&targets).all(|(x, t)| {
            if min_preact_margin(&params, x) < 1e-3 {
                return false;
            }
            let out = params.forward(x).unwrap();
            let raw = hypack::exp_map0(&out, &ball);
            raw.norm() < 0.96
                && hyp_distance(raw.coords(), t.coords()).unwrap() > 1e-2
        });
        if clear {
            break (params, xs, targets);
        }
    };
    let refs: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
    let (grads, _) = hyperbolic_grad(&params, &refs, &targets, &ball, r_clip).unwrap();

    let spec = params.spec().clone();
    let layers = params.layers().to_vec();
    let loss_of = |layers: Vec<Layer>| {
        let p = EncoderParams::from_layers(spec.clone(), layers).unwrap();
        hyperbolic_grad(&p, &refs, &targets, &ball, r_clip).unwrap().1
    };

    let h = 1e-5;
    let mut analytic = Vec::new();
    let mut fd = Vec::new();
    for (l, layer) in layers.iter().enumerate() {
        for (idx, _) in layer.w.iter().enumerate() {
            analytic.push(grads.layers[l].w[idx]);
            let mut up = layers.clone();
            let mut dn = layers.clone();
            up[l].w[idx] += h;
            dn[l].w[idx] -= h;
            fd.push((loss_of(up) - loss_of(dn)) / (2.0 * h));
        }
        for (idx, _) in layer.b.iter().enumerate() {
            analytic.push(grads.layers[l].b[idx]);
            let mut up = layers.clone();
            let mut dn = layers.clone();
            up[l].b[idx] += h;
            dn[l].b[idx] -= h;
            fd.push((loss_of(up) - loss_of(dn)) / (2.0 * h));
        }
    }
    rel_err(&analytic, &fd)
}

#[test]
fn criterion_04_gradient_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(4_000);
    let mut worst_distance: f64 = 0.0;
    let mut worst_packing: f64 = 0.0;
    let mut worst_encoder: f64 = 0.0;
    for case in 0..100 {
        worst_distance = worst_distance.max(fd_distance_case(&mut rng));
        worst_packing = worst_packing.max(fd_packing_case(&mut rng, case % 3 == 0));
        worst_encoder = worst_encoder.max(fd_encoder_case(&mut rng));
    }
    let pass = worst_distance <= 1e-4 && worst_packing <= 1e-4 && worst_encoder <= 1e-4;
    report(
        4,
        "gradient-suite",
        pass,
        &format!(
            "100 configs/family, worst rel err: distance {worst_distance:.2e}, packing {worst_packing:.2e}, encoder {worst_encoder:.2e}"
        ),
    );
}

// ------------------------------------------------------------ criterion 5

#[test]
fn criterion_05_norm_density_trend() {
    let t0 = Instant::now();
    let particles = particles2000();
    let ds = synth_clusters(2000, &[vec![0.5, 0.5]], &[0.12], 0).unwrap();
    let cfg = TrainConfig { epochs: 200, ..Default::default() };
    let out = hack_train(&ds, particles, &cfg).unwrap();
    let feats = hypack::embed_all(&out.params, &ds, particles, cfg.r_clip).unwrap();

    let coords: Vec<Vec<f64>> = feats.iter().map(|p| p.coords().to_vec()).collect();
    let spec = DensitySpec::default();
    assert_eq!((spec.k, spec.metric), (10, Metric::Hyperbolic));
    let dens = knn_density(&coords, &spec).unwrap();
    let norms: Vec<f64> = feats.iter().map(BallPoint::norm).collect();
    let rho = spearman(&norms, &dens.densities).unwrap();

    let bins = norm_density_profile(&feats, &spec, 50).unwrap();
    let decile = |range: std::ops::Range<usize>| {
        let (mut num, mut den) = (0.0, 0usize);
        for b in &bins[range] {
            num += b.mean_density * b.count as f64;
            den += b.count;
        }
        num / den.max(1) as f64
    };
    let (first, last) = (decile(0..5), decile(45..50));
    let secs = t0.elapsed().as_secs_f64();

    let pass = rho <= -0.5 && first > last && secs <= 300.0;
    report(
        5,
        "norm-density-trend",
        pass,
        &format!(
            "spearman {rho:.4}, first-decile density {first:.3e} vs last-decile {last:.3e}, {secs:.1}s"
        ),
    );
}

// ------------------------------------------------------------ criterion 6

#[test]
fn criterion_06_congealed_norms() {
    let particles = particles2000();
    let mut details = Vec::new();
    let mut pass = true;
    // Five seeds at the headline mix plus two smaller congealed counts.
    for (m, seed) in
        [(500usize, 0u64), (500, 1), (500, 2), (500, 3), (500, 4), (100, 0), (300, 0)]
    {
        let class = synth_image_class(2000, 12, 12, 0, JitterKind::Uniform, 40 + seed).unwrap();
        let ds =
            make_congealed_dataset(&class, m, &CongealSpec::default(), 70 + seed).unwrap();
        let cfg = TrainConfig { epochs: 200, seed, ..Default::default() };
        let out = hack_train(&ds, particles, &cfg).unwrap();
        let feats = hypack::embed_all(&out.params, &ds, particles, cfg.r_clip).unwrap();

        let congealed: HashSet<usize> = ds.congealed_ids().into_iter().collect();
        let (mut cg, mut orig) = (Vec::new(), Vec::new());
        for (id, f) in feats.iter().enumerate() {
            if congealed.contains(&id) {
                cg.push(f.norm());
            } else {
                orig.push(f.norm());
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (mean_cg, mean_orig) = (mean(&cg), mean(&orig));
        let p = rank_sum_p_less(&cg, &orig).unwrap();

        let direction = mean_cg < mean_orig;
        let significant = m != 500 || p < 0.01;
        pass &= direction && significant;
        details.push(format!("m={m} seed={seed} p={p:.2e} Δ={:.3}", mean_orig - mean_cg));
    }
    report(6, "congealed-norms", pass, &details.join("; "));
}

// ------------------------------------------------------ criteria 7 and 8

struct SelectionContext {
    train: Dataset,
    test: Dataset,
    typical_ids: Vec<usize>,
    atypical_ids: Vec<usize>,
    pruned_ids: Vec<usize>,
    clf_spec: MlpSpec,
}

impl SelectionContext {
    /// Mean (clean, adversarial ε=0.07) test accuracy over classifier seeds 0–2.
    fn mean_accuracy(&self, ids: &[usize]) -> (f64, f64) {
        let mut clean = 0.0;
        let mut adv = 0.0;
        for seed in 0..3u64 {
            let (clf, _) =
                train_classifier(&self.train, ids, &self.clf_spec, 10, 0.1, seed).unwrap();
            clean += clf.accuracy(&self.test).unwrap() / 3.0;
            adv += hypack::adversarial_accuracy(&clf, &self.test, 0.07).unwrap() / 3.0;
        }
        (clean, adv)
    }
}

/// Two confusable image classes; a per-class embedding run marks each
/// instance typical or atypical by feature norm before any classifier sees a
/// label.
fn selection_context() -> &'static SelectionContext {
    static CELL: OnceLock<SelectionContext> = OnceLock::new();
    CELL.get_or_init(|| {
        let ball = BallParams::unit();
        let pack_spec = PackingSpec { n: 800, ..Default::default() };
        let particles = hypack::pack(&pack_spec, &ball).expect("pack(800)").particles;

        let classes = [0usize, 2];
        let mut train_items = Vec::new();
        let mut test_items = Vec::new();
        let mut typical_ids = Vec::new();
        let mut atypical_ids = Vec::new();
        let mut prune_ids = Vec::new();
        for (ci, &cls) in classes.iter().enumerate() {
            let tr = synth_image_class(800, 12, 12, cls, JitterKind::Amplitude, 10 + cls as u64)
                .unwrap();
            let te = synth_image_class(400, 12, 12, cls, JitterKind::Amplitude, 100 + cls as u64)
                .unwrap();
            let cfg = TrainConfig { epochs: 150, hidden: vec![48], ..Default::default() };
            let out = hack_train(&tr, &particles, &cfg).unwrap();
            let feats = hypack::embed_all(&out.params, &tr, &particles, cfg.r_clip).unwrap();
            let sel = |mode, fraction| {
                select_subset(&feats, &SelectionSpec { fraction, mode, angular_bins: 8 }).unwrap()
            };
            let offset = ci * 800;
            typical_ids.extend(sel(SelectionMode::Typical, 0.1).iter().map(|i| i + offset));
            atypical_ids.extend(sel(SelectionMode::Atypical, 0.1).iter().map(|i| i + offset));
            prune_ids.extend(sel(SelectionMode::Atypical, 0.01).iter().map(|i| i + offset));
            for item in tr.items() {
                train_items.push(DatasetItem {
                    id: item.id + offset,
                    vec: item.vec.clone(),
                    label: Some(ci as u8),
                    is_congealed: false,
                });
            }
            for item in te.items() {
                test_items.push(DatasetItem {
                    id: item.id + ci * 400,
                    vec: item.vec.clone(),
                    label: Some(ci as u8),
                    is_congealed: false,
                });
            }
        }
        let shape = Shape::Grid { h: 12, w: 12 };
        let train = Dataset::new(train_items, shape).unwrap();
        let test = Dataset::new(test_items, shape).unwrap();

        let prune: HashSet<usize> = prune_ids.into_iter().collect();
        let pruned_ids: Vec<usize> = (0..train.n()).filter(|i| !prune.contains(i)).collect();
        let clf_spec = MlpSpec::new(vec![144, 32, 2], 0).unwrap();
        SelectionContext { train, test, typical_ids, atypical_ids, pruned_ids, clf_spec }
    })
}

#[test]
fn criterion_07_selection_trend() {
    let ctx = selection_context();
    let (typical_acc, _) = ctx.mean_accuracy(&ctx.typical_ids);
    let (atypical_acc, _) = ctx.mean_accuracy(&ctx.atypical_ids);
    let pass = atypical_acc > typical_acc;
    report(
        7,
        "selection-trend",
        pass,
        &format!(
            "10% subsets over 3 seeds: atypical-trained {atypical_acc:.4} vs typical-trained {typical_acc:.4}"
        ),
    );
}

#[test]
fn criterion_08_robustness_trend() {
    let ctx = selection_context();
    let all_ids: Vec<usize> = (0..ctx.train.n()).collect();
    let (full_clean, full_adv) = ctx.mean_accuracy(&all_ids);
    let (pruned_clean, pruned_adv) = ctx.mean_accuracy(&ctx.pruned_ids);
    let clean_drop = full_clean - pruned_clean;
    let pass = pruned_adv >= full_adv && clean_drop <= 0.01;
    report(
        8,
        "robustness-trend",
        pass,
        &format!(
            "ε=0.07 over 3 seeds: adversarial {pruned_adv:.4} pruned vs {full_adv:.4} full, clean drop {clean_drop:.4}"
        ),
    );
}

// ------------------------------------------------------------ criterion 9

#[test]
fn criterion_09_density_hand_values() {
    let spec1 = DensitySpec { k: 1, metric: Metric::Euclidean, d: 1 };
    let est1 = knn_density(&[vec![0.0], vec![1.0], vec![3.0]], &spec1).unwrap();
    let err_d1 = (est1.densities[0] - 1.0 / 6.0)
        .abs()
        .max((est1.densities[1] - 1.0 / 6.0).abs())
        .max((est1.densities[2] - 1.0 / 12.0).abs());

    let spec2 = DensitySpec { k: 1, metric: Metric::Euclidean, d: 2 };
    let est2 = knn_density(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![3.0, 0.0]], &spec2).unwrap();
    let expected = 1.0 / (3.0 * std::f64::consts::PI);
    let err_d2 = (est2.densities[0] - expected).abs();

    let pass = err_d1 <= 1e-9 && err_d2 <= 1e-9;
    report(
        9,
        "density-hand-values",
        pass,
        &format!("d=1 max err {err_d1:.2e}, d=2 err {err_d2:.2e}"),
    );
}

// ----------------------------------------------------------- criterion 10

fn idx_round_trips(input: &[u8], dir: &std::path::Path, tag: &str) -> bool {
    let src = dir.join(format!("{tag}_in.idx"));
    let dst = dir.join(format!("{tag}_out.idx"));
    std::fs::write(&src, input).unwrap();
    let ds = read_idx(&src, None).unwrap();
    write_idx(&ds, &dst, None).unwrap();
    std::fs::read(&dst).unwrap() == input
}

#[test]
fn criterion_10_idx_round_trip() {
    let dir = tempfile::tempdir().unwrap();

    let mut fixture: Vec<u8> = vec![0, 0, 8, 3];
    for dim in [2u32, 2, 2] {
        fixture.extend(dim.to_be_bytes());
    }
    fixture.extend([0u8, 10, 255, 128, 7, 63, 200, 1]);
    let fixture_ok = idx_round_trips(&fixture, dir.path(), "fixture");

    // A real scanned-digit file is exercised when one is available locally.
    let candidates: Vec<PathBuf> = std::env::var_os("MNIST_IDX")
        .map(PathBuf::from)
        .into_iter()
        .chain(
            [
                "/root/data/train-images-idx3-ubyte",
                "/root/data/t10k-images-idx3-ubyte",
                "data/train-images-idx3-ubyte",
            ]
            .iter()
            .map(PathBuf::from),
        )
        .collect();
    let real = candidates.iter().find(|p| p.is_file());
    let (real_ok, real_note) = match real {
        Some(path) => {
            let bytes = std::fs::read(path).unwrap();
            (idx_round_trips(&bytes, dir.path(), "real"), format!("real file {}", path.display()))
        }
        None => (true, "no real scan file present, fixture only".to_string()),
    };

    let pass = fixture_ok && real_ok;
    report(
        10,
        "idx-round-trip",
        pass,
        &format!("2x2x2 fixture byte-identical: {fixture_ok}; {real_note}"),
    );
}
