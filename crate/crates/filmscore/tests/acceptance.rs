//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with the measured numbers.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the
//! per-criterion reports.

use std::time::Instant;

use ndarray::{Array1, Array2, Array3};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use filmscore::codec::{snr_db, Codec, StubCodec, Waveform};
use filmscore::decoder::{
    deinterleave, forward_logits, generate, interleave, schedule_cells, DecoderConfig,
    DecoderParams, Pattern, TokenMatrix,
};
use filmscore::fusion::{class_tokens, Conditioning, FusionConfig, FusionNodes, FusionParams};
use filmscore::inference::{generate_long, plan_windows, GenerateOptions};
use filmscore::metrics::extractors::{
    AudioClassifier, AudioEmbedder, HashProjectionClassifier, HashProjectionEmbedder,
};
use filmscore::metrics::{
    average_rank, density_coverage, frechet, prediction_kl, Direction, EmbeddingSet,
    PredictionSet, SourceTag,
};
use filmscore::nn::Graph;
use filmscore::training::{Batch, BatchItem, TrainConfig, Trainer};

const ALL_PATTERNS: [Pattern; 4] = [
    Pattern::Parallel,
    Pattern::Flatten,
    Pattern::Delay,
    Pattern::VallE,
];

fn synth_wave(seed: u64, sample_rate: u32, dur_s: f64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f1 = rng.random_range(100.0..2000.0);
    let f2 = rng.random_range(100.0..2000.0);
    let a1 = rng.random_range(0.1..0.4);
    let a2 = rng.random_range(0.05..0.3);
    let n = (dur_s * sample_rate as f64) as usize;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / sample_rate as f64;
            a1 * (2.0 * std::f64::consts::PI * f1 * t).sin()
                + a2 * (2.0 * std::f64::consts::PI * f2 * t).sin()
        })
        .collect();
    Waveform::new(samples, sample_rate).unwrap()
}

/// Criterion 1: evaluating a synthetic reference set against itself
/// reproduces the ground-truth row (zero distances, full coverage).
#[test]
fn criterion_01_metric_self_consistency() {
    let start = Instant::now();
    let waves: Vec<Waveform> = (0..64).map(|i| synth_wave(i, 8000, 1.0)).collect();

    let fad_embed = HashProjectionEmbedder::new(16, 101);
    let fd_embed = HashProjectionEmbedder::new(32, 202);
    let manifold_embed = HashProjectionEmbedder::new(24, 303);
    let tagger = HashProjectionClassifier::new(16, 404);

    let embed_all = |e: &HashProjectionEmbedder| -> Array2<f64> {
        let rows: Vec<Vec<f64>> = waves.iter().map(|w| e.embed(w).unwrap()).collect();
        Array2::from_shape_fn((rows.len(), e.dim()), |(i, j)| rows[i][j])
    };
    let fad_vecs = embed_all(&fad_embed);
    let fd_vecs = embed_all(&fd_embed);
    let manifold_vecs = embed_all(&manifold_embed);

    let gen = EmbeddingSet::new(fad_vecs.clone(), SourceTag::Generated).unwrap();
    let reference = EmbeddingSet::new(fad_vecs, SourceTag::Reference).unwrap();
    let fad = frechet(&gen, &reference).unwrap();

    let gen_fd = EmbeddingSet::new(fd_vecs.clone(), SourceTag::Generated).unwrap();
    let ref_fd = EmbeddingSet::new(fd_vecs, SourceTag::Reference).unwrap();
    let fd = frechet(&gen_fd, &ref_fd).unwrap();

    let gen_m = EmbeddingSet::new(manifold_vecs.clone(), SourceTag::Generated).unwrap();
    let ref_m = EmbeddingSet::new(manifold_vecs, SourceTag::Reference).unwrap();
    let (_, coverage) = density_coverage(&gen_m, &ref_m, 5).unwrap();

    let probs: Vec<Vec<f64>> = waves.iter().map(|w| tagger.predict(w).unwrap()).collect();
    let p = PredictionSet::new(Array2::from_shape_fn((64, 16), |(i, j)| probs[i][j])).unwrap();
    let kl = prediction_kl(&p, &p).unwrap();

    let elapsed = start.elapsed().as_secs_f64();
    assert!(kl <= 1e-6, "KL {kl}");
    assert!(fd <= 1e-4, "FD {fd}");
    assert!(fad <= 1e-4, "FAD {fad}");
    assert_eq!(coverage, 1.0, "coverage {coverage}");
    assert!(elapsed < 30.0, "took {elapsed:.1} s");
    println!(
        "criterion 1 PASS: self-eval KL {kl:.2e}, FD {fd:.2e}, FAD {fad:.2e}, coverage {coverage}, {elapsed:.2} s"
    );
}

mod frechet_oracle {
    //! An independent route to the Frechet statistic: Denman-Beavers
    //! iteration (Newton) for the matrix square root of the covariance
    //! product, with Gauss-Jordan inversion.

    use ndarray::{Array1, Array2};

    pub fn invert(a: &Array2<f64>) -> Array2<f64> {
        let n = a.nrows();
        let mut aug = Array2::zeros((n, 2 * n));
        aug.slice_mut(ndarray::s![.., ..n]).assign(a);
        for i in 0..n {
            aug[[i, n + i]] = 1.0;
        }
        for col in 0..n {
            let mut pivot = col;
            for r in (col + 1)..n {
                if aug[[r, col]].abs() > aug[[pivot, col]].abs() {
                    pivot = r;
                }
            }
            if pivot != col {
                for c in 0..2 * n {
                    let tmp = aug[[col, c]];
                    aug[[col, c]] = aug[[pivot, c]];
                    aug[[pivot, c]] = tmp;
                }
            }
            let p = aug[[col, col]];
            for c in 0..2 * n {
                aug[[col, c]] /= p;
            }
            for r in 0..n {
                if r != col {
                    let f = aug[[r, col]];
                    if f != 0.0 {
                        for c in 0..2 * n {
                            aug[[r, c]] -= f * aug[[col, c]];
                        }
                    }
                }
            }
        }
        aug.slice(ndarray::s![.., n..]).to_owned()
    }

    fn sqrtm(a: &Array2<f64>) -> Array2<f64> {
        let n = a.nrows();
        let mut y = a.clone();
        let mut z: Array2<f64> = Array2::eye(n);
        for _ in 0..100 {
            let yi = invert(&y);
            let zi = invert(&z);
            let y_next = 0.5 * (&y + &zi);
            let z_next = 0.5 * (&z + &yi);
            let delta: f64 = (&y_next - &y).iter().map(|v| v.abs()).sum();
            y = y_next;
            z = z_next;
            if delta < 1e-13 {
                break;
            }
        }
        y
    }

    fn stats(x: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
        let n = x.nrows();
        let d = x.ncols();
        let mean = x.sum_axis(ndarray::Axis(0)) / n as f64;
        let mut cov = Array2::zeros((d, d));
        for row in x.rows() {
            let c = &row - &mean;
            for i in 0..d {
                for j in 0..d {
                    cov[[i, j]] += c[i] * c[j];
                }
            }
        }
        cov /= (n - 1) as f64;
        (mean, cov)
    }

    pub fn frechet(gen: &Array2<f64>, reference: &Array2<f64>) -> f64 {
        let (mu_g, sig_g) = stats(gen);
        let (mu_r, sig_r) = stats(reference);
        let root = sqrtm(&sig_g.dot(&sig_r));
        let d = sig_g.nrows();
        let tr_root: f64 = (0..d).map(|i| root[[i, i]]).sum();
        let tr: f64 = (0..d).map(|i| sig_g[[i, i]] + sig_r[[i, i]]).sum();
        let mean_term: f64 = mu_g
            .iter()
            .zip(mu_r.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        mean_term + tr - 2.0 * tr_root
    }
}

/// Criterion 2: Frechet agrees with the independent matrix-square-root
/// oracle; symmetry and non-negativity hold on every case.
#[test]
fn criterion_02_frechet_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_rel: f64 = 0.0;
    for trial in 0..50 {
        let d = rng.random_range(1..=8usize);
        let n1 = rng.random_range((d + 2).max(4)..=64usize);
        let n2 = rng.random_range((d + 2).max(4)..=64usize);
        // Gaussian samples via Box-Muller with random shift/scale.
        let mut gauss = |n: usize, shift: f64| -> Array2<f64> {
            Array2::from_shape_fn((n, d), |_| {
                let u1: f64 = rng.random_range(1e-12..1.0);
                let u2: f64 = rng.random_range(0.0..1.0);
                shift
                    + (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            })
        };
        let a = gauss(n1, 0.0);
        let b = gauss(n2, 0.8);
        let set_a = EmbeddingSet::new(a.clone(), SourceTag::Generated).unwrap();
        let set_b = EmbeddingSet::new(b.clone(), SourceTag::Reference).unwrap();
        let got = frechet(&set_a, &set_b).unwrap();
        let rev = frechet(&set_b, &set_a).unwrap();
        let expected = frechet_oracle::frechet(&a, &b);
        let rel = (got - expected).abs() / expected.abs().max(1e-12);
        worst_rel = worst_rel.max(rel);
        assert!(rel <= 1e-5, "trial {trial}: {got} vs oracle {expected}");
        assert!(got >= 0.0, "trial {trial}: negative distance {got}");
        assert!(
            (got - rev).abs() <= 1e-6 * got.abs().max(1.0),
            "trial {trial}: asymmetric {got} vs {rev}"
        );
    }
    println!("criterion 2 PASS: 50 Frechet oracle checks, worst relative error {worst_rel:.2e}");
}

/// Criterion 3: density/coverage equals the brute-force definition exactly.
#[test]
fn criterion_03_density_coverage_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3030);
    let mut checked = 0usize;
    for _ in 0..200 {
        let d = rng.random_range(1..=6usize);
        let n_ref = rng.random_range(6..=32usize);
        let n_gen = rng.random_range(2..=32usize);
        let gen = Array2::from_shape_fn((n_gen, d), |_| rng.random_range(-1.0..1.0));
        let reference = Array2::from_shape_fn((n_ref, d), |_| rng.random_range(-1.0..1.0));
        for k in [1usize, 3, 5] {
            if k >= n_ref {
                continue;
            }
            let gen_set = EmbeddingSet::new(gen.clone(), SourceTag::Generated).unwrap();
            let ref_set = EmbeddingSet::new(reference.clone(), SourceTag::Reference).unwrap();
            let got = density_coverage(&gen_set, &ref_set, k).unwrap();

            // Brute-force oracle, straight from the definition.
            let dist = |a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>| -> f64 {
                a.iter()
                    .zip(b.iter())
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt()
            };
            let mut density_hits = 0usize;
            let mut covered = 0usize;
            for i in 0..n_ref {
                let mut ds: Vec<f64> = (0..n_ref)
                    .filter(|&j| j != i)
                    .map(|j| dist(reference.row(i), reference.row(j)))
                    .collect();
                ds.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let radius = ds[k - 1];
                let mut any = false;
                for j in 0..n_gen {
                    if dist(gen.row(j), reference.row(i)) < radius {
                        density_hits += 1;
                        any = true;
                    }
                }
                if any {
                    covered += 1;
                }
            }
            let expected = (
                density_hits as f64 / (k * n_gen) as f64,
                covered as f64 / n_ref as f64,
            );
            assert_eq!(got, expected, "k={k} n_ref={n_ref} n_gen={n_gen}");
            checked += 1;
        }
    }
    println!("criterion 3 PASS: {checked} density/coverage instances matched exactly");
}

/// Criterion 4: the published nine-row ablation table reproduces its AR
/// column under mean-rank ties within the documented tolerance.
#[test]
fn criterion_04_average_rank_reproduction() {
    let start = Instant::now();
    #[rustfmt::skip]
    let table = Array2::from_shape_vec((9, 6), vec![
        // kl, fd, fad, density, coverage, av-alignment
        0.820, 51.101, 4.117, 1.430, 0.740, 0.148,
        0.849, 41.131, 2.709, 1.406, 0.803, 0.181,
        0.843, 41.354, 2.413, 1.487, 0.840, 0.193,
        0.800, 51.540, 4.343, 1.271, 0.787, 0.145,
        0.830, 41.154, 2.562, 1.278, 0.823, 0.176,
        0.849, 40.032, 2.418, 1.538, 0.843, 0.193,
        0.819, 50.667, 4.069, 1.515, 0.743, 0.153,
        0.857, 42.106, 2.790, 1.476, 0.753, 0.187,
        0.824, 38.942, 2.299, 1.573, 0.843, 0.180,
    ])
    .unwrap();
    let directions = [
        Direction::LowerBetter,
        Direction::LowerBetter,
        Direction::LowerBetter,
        Direction::HigherBetter,
        Direction::HigherBetter,
        Direction::HigherBetter,
    ];
    let expected = [7.00, 5.33, 3.67, 7.17, 5.17, 2.84, 5.67, 6.00, 2.17];
    let ar = average_rank(&table, &directions).unwrap();
    let mut worst: f64 = 0.0;
    for (i, (&got, &want)) in ar.iter().zip(expected.iter()).enumerate() {
        let err = (got - want).abs();
        worst = worst.max(err);
        assert!(err <= 0.35, "row {i}: AR {got:.3} vs published {want}");
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 1.0, "took {elapsed:.3} s");
    println!(
        "criterion 4 PASS: AR column reproduced, worst deviation {worst:.3} (tolerance 0.35)"
    );
}

/// Criterion 5: interleave/deinterleave is a bijection for every pattern.
#[test]
fn criterion_05_interleaving_bijection() {
    let mut rng = ChaCha8Rng::seed_from_u64(5050);
    let mut trips = 0usize;
    while trips < 1000 {
        let k = rng.random_range(1..=8usize);
        let s = rng.random_range(1..=64usize);
        let vocab = rng.random_range(2..=128u32);
        let tokens = Array2::from_shape_fn((k, s), |_| rng.random_range(0..=vocab));
        let y = TokenMatrix::new(tokens, vocab).unwrap();
        for pattern in ALL_PATTERNS {
            let seq = interleave(&y, pattern);
            let back = deinterleave(&seq).expect("round trip decodes");
            assert_eq!(back, y, "pattern {} K={k} S={s}", pattern.name());
            trips += 1;
        }
    }
    println!("criterion 5 PASS: {trips} interleaving round trips, zero mismatches");
}

fn random_conditioning(rng: &mut ChaCha8Rng, rows: usize, m: usize) -> Conditioning {
    Conditioning::new(Array2::from_shape_fn((rows, m), |_| {
        rng.random_range(-1.0..1.0)
    }))
    .unwrap()
}

/// Criterion 6: future-token perturbations never move past-step logits, and
/// fixed-seed generation is bit-reproducible.
#[test]
fn criterion_06_causality_and_determinism() {
    let mut rng = ChaCha8Rng::seed_from_u64(6060);
    let config = DecoderConfig {
        n_layers: 2,
        hidden: 32,
        n_heads: 4,
        ff_mult: 2,
        vocab: 13,
        codebooks: 3,
    };
    let params = DecoderParams::init(config, 66).unwrap();
    for trial in 0..100 {
        let pattern = ALL_PATTERNS[trial % 4];
        let s = rng.random_range(2..=8usize);
        let z = random_conditioning(&mut rng, 4, 32);
        let tokens = Array2::from_shape_fn((3, s), |_| rng.random_range(0..13u32));
        let y = TokenMatrix::new(tokens.clone(), 13).unwrap();
        let base = forward_logits(&y, &z, &params, pattern).unwrap();

        let cells = schedule_cells(pattern, 3, s);
        let cut = 1 + rng.random_range(0..cells.len());
        let mut perturbed = tokens;
        let mut changed = false;
        for step_cells in cells.iter().skip(cut) {
            for &(kb, ts) in step_cells {
                perturbed[[kb, ts]] = rng.random_range(0..13);
                changed = true;
            }
        }
        if !changed {
            continue;
        }
        let y2 = TokenMatrix::new(perturbed, 13).unwrap();
        let after = forward_logits(&y2, &z, &params, pattern).unwrap();
        for step_cells in cells.iter().take(cut) {
            for &(kb, ts) in step_cells {
                for j in 0..14 {
                    let a = base[[kb, ts, j]];
                    let b = after[[kb, ts, j]];
                    assert!(
                        (a - b).abs() <= 1e-6,
                        "trial {trial} {}: cell ({kb},{ts})",
                        pattern.name()
                    );
                }
            }
        }
    }

    let z = random_conditioning(&mut rng, 4, 32);
    let a = generate(&z, 20, &params, Pattern::Delay, 5, 1.0, 4242, None).unwrap();
    let b = generate(&z, 20, &params, Pattern::Delay, 5, 1.0, 4242, None).unwrap();
    assert_eq!(a, b, "same-seed generations must be identical");
    println!("criterion 6 PASS: 100 causality trials clean, fixed-seed generation reproducible");
}

/// Criterion 7: fusion gradients match finite differences; every parameter
/// group of the full stack receives gradient on a random batch.
#[test]
fn criterion_07_gradient_integrity() {
    // (a) analytic vs central differences through the fused pipeline.
    let config = FusionConfig {
        dim: 8,
        refiner_heads: 2,
        cross_heads: 2,
        out_dim: 8,
    };
    let params = FusionParams::init(config, 7171).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7272);
    let long_sel = Array3::from_shape_fn((4, 2, 8), |_| rng.random_range(-1.0..1.0));
    let short_sel = Array3::from_shape_fn((4, 2, 8), |_| rng.random_range(-1.0..1.0));

    let forward = |p: &FusionParams| -> f64 {
        let mut g = Graph::new();
        let nodes = FusionNodes::bind(&mut g, p);
        let lt = g.leaf(class_tokens(long_sel.view()));
        let st = g.leaf(class_tokens(short_sel.view()));
        let out = nodes.condition_graph(&mut g, lt, st);
        g.value(out).sum()
    };
    let mut g = Graph::new();
    let nodes = FusionNodes::bind(&mut g, &params);
    let lt = g.leaf(class_tokens(long_sel.view()));
    let st = g.leaf(class_tokens(short_sel.view()));
    let out = nodes.condition_graph(&mut g, lt, st);
    let loss = g.sum_all(out);
    g.backward(loss).unwrap();
    let grads = nodes.grads(&g);
    let names: Vec<String> = params.tensors().iter().map(|(n, _)| n.clone()).collect();
    let step = 1e-4;
    let mut checked = 0usize;
    for (ti, name) in names.iter().enumerate() {
        let shape = params.tensors()[ti].1.raw_dim();
        let mut probe = ChaCha8Rng::seed_from_u64(9000 + ti as u64);
        for _ in 0..3 {
            let i = probe.random_range(0..shape[0]);
            let j = probe.random_range(0..shape[1]);
            let mut plus = params.clone();
            plus.tensors_mut()[ti].1[[i, j]] += step;
            let mut minus = params.clone();
            minus.tensors_mut()[ti].1[[i, j]] -= step;
            let numeric = (forward(&plus) - forward(&minus)) / (2.0 * step);
            let analytic = grads[ti][[i, j]];
            let denom = analytic.abs().max(numeric.abs()).max(1e-3);
            assert!(
                (analytic - numeric).abs() / denom <= 1e-3,
                "{name}[{i},{j}]: analytic {analytic}, numeric {numeric}"
            );
            checked += 1;
        }
    }

    // (b) non-zero gradient reaches every parameter group.
    let fusion = FusionParams::init(
        FusionConfig {
            out_dim: 16,
            ..config
        },
        7373,
    )
    .unwrap();
    let decoder = DecoderParams::init(
        DecoderConfig {
            n_layers: 2,
            hidden: 16,
            n_heads: 2,
            ff_mult: 2,
            vocab: 9,
            codebooks: 2,
        },
        7474,
    )
    .unwrap();
    let trainer = Trainer::new(
        fusion,
        decoder,
        Pattern::Delay,
        TrainConfig {
            warmup_steps: 1,
            total_steps: 10,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7575);
    let items = (0..2)
        .map(|_| BatchItem {
            long_sel: Array3::from_shape_fn((4, 2, 8), |_| rng.random_range(-1.0..1.0)),
            short_sel: Array3::from_shape_fn((3, 2, 8), |_| rng.random_range(-1.0..1.0)),
            target: TokenMatrix::new(
                Array2::from_shape_fn((2, 6), |_| rng.random_range(0..9u32)),
                9,
            )
            .unwrap(),
        })
        .collect();
    let (_, grads) = trainer.eval_grads(&Batch { items }).unwrap();
    for (name, grad) in &grads {
        assert!(
            grad.iter().any(|&x| x != 0.0),
            "parameter group {name} received zero gradient"
        );
    }
    println!(
        "criterion 7 PASS: {checked} finite-difference probes within 1e-3, {} parameter groups all live",
        grads.len()
    );
}

/// Criterion 8: a tiny fusion+decoder stack memorizes 8 synthetic pairs.
#[test]
fn criterion_08_tiny_overfit() {
    let start = Instant::now();
    let fusion_config = FusionConfig {
        dim: 16,
        refiner_heads: 2,
        cross_heads: 2,
        out_dim: 48,
    };
    let decoder_config = DecoderConfig {
        n_layers: 2,
        hidden: 48,
        n_heads: 4,
        ff_mult: 2,
        vocab: 24,
        codebooks: 2,
    };
    let fusion = FusionParams::init(fusion_config, 88).unwrap();
    let decoder = DecoderParams::init(decoder_config, 89).unwrap();
    let config = TrainConfig {
        peak_lr: 3e-3,
        floor_lr: 1e-4,
        warmup_steps: 50,
        total_steps: 500,
        batch_size: 8,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(fusion, decoder, Pattern::Delay, config).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(90);
    let items: Vec<BatchItem> = (0..8)
        .map(|_| BatchItem {
            long_sel: Array3::from_shape_fn((6, 2, 16), |_| rng.random_range(-1.0..1.0)),
            short_sel: Array3::from_shape_fn((4, 2, 16), |_| rng.random_range(-1.0..1.0)),
            target: TokenMatrix::new(
                Array2::from_shape_fn((2, 16), |_| rng.random_range(0..24u32)),
                24,
            )
            .unwrap(),
        })
        .collect();
    let batch = Batch { items };

    let mut first_loss = f64::NAN;
    let mut last_loss = f64::NAN;
    for step in 0..500 {
        let stats = trainer.train_step(&batch).unwrap();
        if step == 0 {
            first_loss = stats.loss;
        }
        last_loss = stats.loss;
    }
    let accuracy = trainer.eval_accuracy(&batch).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    assert!(
        accuracy >= 0.90,
        "teacher-forced accuracy {accuracy:.3} below 0.90"
    );
    assert!(
        last_loss < 0.5 * first_loss,
        "loss {first_loss:.3} -> {last_loss:.3} did not halve"
    );
    assert!(elapsed < 600.0, "took {elapsed:.0} s");
    println!(
        "criterion 8 PASS: accuracy {accuracy:.3}, loss {first_loss:.3} -> {last_loss:.3}, {elapsed:.1} s"
    );
}

/// Criterion 9: emitted spans tile arbitrary durations; the canonical 100 s
/// case starts windows at 0/25/50/75; full-length generation is
/// deterministic.
#[test]
fn criterion_09_sliding_window_tiling() {
    let mut rng = ChaCha8Rng::seed_from_u64(9090);
    for _ in 0..100 {
        let duration = rng.random_range(10.0..=600.0);
        let plan = plan_windows(duration, 30.0, 5.0).unwrap();
        let mut cursor = 0.0;
        for w in &plan.windows {
            assert!(
                (w.emit_start - cursor).abs() < 1e-9,
                "gap/overlap at {cursor} for duration {duration}"
            );
            assert!(w.emit_end > w.emit_start);
            cursor = w.emit_end;
        }
        assert!(
            (cursor - duration).abs() < 1e-9,
            "emitted spans cover {cursor} of {duration}"
        );
    }

    let plan = plan_windows(100.0, 30.0, 5.0).unwrap();
    let starts: Vec<f64> = plan.windows.iter().map(|w| w.t_start).collect();
    assert_eq!(starts, vec![0.0, 25.0, 50.0, 75.0]);

    // End-to-end determinism on a multi-window clip.
    let fusion = FusionParams::init(
        FusionConfig {
            dim: 8,
            refiner_heads: 2,
            cross_heads: 2,
            out_dim: 16,
        },
        91,
    )
    .unwrap();
    let decoder = DecoderParams::init(
        DecoderConfig {
            n_layers: 1,
            hidden: 16,
            n_heads: 2,
            ff_mult: 2,
            vocab: 17,
            codebooks: 2,
        },
        92,
    )
    .unwrap();
    let codec = StubCodec::new(800, 4.0, 2, 17).unwrap();
    let features = filmscore::frontend::FrameFeatures::new(Array3::from_shape_fn(
        (80, 2, 8),
        |_| rng.random_range(-1.0..1.0),
    ))
    .unwrap();
    let plan = plan_windows(40.0, 12.0, 3.0).unwrap();
    assert!(plan.windows.len() > 2);
    let opts = GenerateOptions {
        top_k: 5,
        temperature: 1.0,
        seed: 99,
        n_long_cap: 16,
    };
    let run = || {
        generate_long(
            &features,
            2.0,
            &fusion,
            &decoder,
            Pattern::Delay,
            &codec,
            &plan,
            &opts,
        )
        .unwrap()
    };
    let (t1, w1) = run();
    let (t2, w2) = run();
    assert_eq!(t1, t2);
    assert_eq!(w1.samples, w2.samples);
    assert_eq!(t1.steps(), 160); // 40 s * 4 tokens/s
    println!(
        "criterion 9 PASS: 100 random durations tile exactly, canonical starts 0/25/50/75, seeded long-form generation reproducible"
    );
}

mod fixtures;

/// Criterion 10: the hand-labeled 10-record manifest produces exactly the
/// expected verdicts and the pipeline is idempotent on its own output.
#[test]
fn criterion_10_curation_fixtures() {
    let outcome = fixtures::run_fixture_pipeline();
    fixtures::assert_expected_verdicts(&outcome);
    println!("criterion 10 PASS: 10-record fixture verdicts exact, pipeline idempotent");
}

/// Criterion 11: stub codec round-trip fidelity and token idempotence.
#[test]
fn criterion_11_stub_codec_fidelity() {
    // Band-limited tones at codec carriers: quantization-limited SNR.
    let codec = StubCodec::with_bins(32000, 40.0, 4, 1024, vec![11, 20]).unwrap();
    let n = 32000usize;
    let tones: Vec<(f64, f64, f64)> = vec![
        (440.0, 0.0, 0.20),  // sine at bin 11
        (440.0, 0.25, 0.15), // cosine-leaning phase at bin 11
        (800.0, 0.1, 0.18),  // bin 20
    ];
    let mut worst_snr = f64::INFINITY;
    for (freq, phase, amp) in tones {
        let samples: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / 32000.0;
                amp * (2.0 * std::f64::consts::PI * (freq * t + phase)).sin()
            })
            .collect();
        let wave = Waveform::new(samples, 32000).unwrap();
        let back = codec.decode(&codec.encode(&wave).unwrap()).unwrap();
        let snr = snr_db(&wave.samples, &back.samples);
        worst_snr = worst_snr.min(snr);
        assert!(snr >= 20.0, "{freq} Hz tone: SNR {snr:.1} dB");
    }

    // Exact token idempotence across random matrices.
    let mut rng = ChaCha8Rng::seed_from_u64(111);
    for _ in 0..20 {
        let tokens = Array2::from_shape_fn((4, 40), |_| rng.random_range(0..1024u32));
        let y = TokenMatrix::new(tokens, 1024).unwrap();
        let wave = codec.decode(&y).unwrap();
        let again = codec.encode(&wave).unwrap();
        assert_eq!(again, y);
    }
    println!("criterion 11 PASS: worst tone SNR {worst_snr:.1} dB, token idempotence exact on 20 matrices");
}

// Keep Array1 used by the oracle module from tripping unused-import lints
// in configurations where the oracle is pruned.
#[allow(dead_code)]
fn _array1_witness(_: Array1<f64>) {}
