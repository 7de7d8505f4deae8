//! Acceptance suite. Every criterion prints one `PASS` / `FAIL` line; the
//! ordering criterion is reported without gating.
//!
//! ```bash
//! cargo test -p csipred --test acceptance -- --nocapture
//! ```

use std::time::Instant;

use csipred::channel::{generate_users, ChannelConfig, ChannelSeries};
use csipred::cli::{self, gradcheck};
use csipred::codec::{flatten_frames, split_frames, train_codec, CodecHyper};
use csipred::dataset::{stack_rows, NormStats, SplitBounds};
use csipred::diff::DEFAULT_FD_EPS;
use csipred::eval::{evaluate_pipeline, nmse_db, rmse, sum_rate, zf_precoder, TransmissionModel};
use csipred::forecast::{test_predictions, train_forecaster, Arch, ModelConfig, ModelOptions, Predictor, TrainHyper};
use csipred::graph::spectral_diagnostics;
use csipred::numerics::{unitary_dft_matrix, Complex64, ComplexMatrix, RealMatrix, RngStream};
use csipred::stemgnn::{StemGnn, StemGnnConfig};
use csipred::tensor_io::{CompressedMeta, CompressedSeries};
use ndarray::{Array1, Array2};

struct Outcome {
    id: usize,
    pass: bool,
    gated: bool,
    detail: String,
}

fn outcome(id: usize, pass: bool, detail: String) -> Outcome {
    let o = Outcome {
        id,
        pass,
        gated: true,
        detail,
    };
    println!("criterion {}: {} {}", o.id, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    o
}

/// Cyclic Jacobi eigenvalues, kept separate from the library solver.
fn jacobi_eigenvalues(a: &RealMatrix) -> Vec<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[[i, j]].powi(2)).sum();
        let scale: f64 = m.iter().map(|v| v * v).sum();
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[[p, q]] == 0.0 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * m[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[[k, p]], m[[k, q]]);
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[[p, k]], m[[q, k]]);
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[[i, i]]).collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

fn random_matrix(rows: usize, cols: usize, rng: &mut RngStream) -> RealMatrix {
    Array2::from_shape_fn((rows, cols), |_| rng.normal())
}

fn complex_gaussian(rows: usize, cols: usize, rng: &mut RngStream) -> ComplexMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Array2::from_shape_fn((rows, cols), |_| Complex64::new(s * rng.normal(), s * rng.normal()))
}

/// Shared desk-scale data: four users and user 0's codes under a C = 32
/// codec fitted on all of them.
struct DeskData {
    users: Vec<ChannelSeries>,
    series: Vec<CompressedSeries>,
}

fn desk_data() -> DeskData {
    let users = generate_users(&ChannelConfig::desk_scale(), 4).unwrap();
    let codec = train_codec(&users, 32, &CodecHyper::default(), &mut RngStream::new(1)).unwrap().model;
    let series = vec![codec.encode_series(&users[0], "acceptance", 0).unwrap()];
    DeskData { users, series }
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let opts = ModelOptions::default();
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for model in ["stemgnn", "rnn", "lstm", "codec"] {
        let r = gradcheck(model, &opts, 12, 3, DEFAULT_FD_EPS, 1).unwrap();
        worst = worst.max(r.max_relative_error);
        parts.push(format!("{model} {:.2e}", r.max_relative_error));
        if r.max_relative_error >= 1e-4 {
            let coarse = gradcheck(model, &opts, 12, 3, 1e-5, 1).unwrap();
            println!(
                "  {model}: worst {} analytic {:.6e} numeric {:.6e}; at eps 1e-5 max error {:.2e}",
                r.worst_param, r.worst_pair.0, r.worst_pair.1, coarse.max_relative_error
            );
        }
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(1, worst < 1e-4 && secs < 300.0, format!("gradients at eps 1e-6: {} ({secs:.0}s)", parts.join(", ")))
}

fn criterion_2() -> Outcome {
    // DFT unitarity and Parseval
    let mut rng = RngStream::new(21);
    let mut dft_err = 0.0f64;
    for k in [1, 2, 3, 7, 12, 16, 31, 64] {
        let f = unitary_dft_matrix(k).unwrap();
        let fh = f.t().mapv(|z| z.conj());
        let prod = f.dot(&fh);
        for ((i, j), z) in prod.indexed_iter() {
            let target = if i == j { 1.0 } else { 0.0 };
            dft_err = dft_err.max((z - Complex64::new(target, 0.0)).norm());
        }
        let x: Array1<Complex64> = (0..k).map(|_| Complex64::new(rng.normal(), rng.normal())).collect();
        let y = x.dot(&f);
        let ex: f64 = x.iter().map(|z| z.norm_sqr()).sum();
        let ey: f64 = y.iter().map(|z| z.norm_sqr()).sum();
        dft_err = dft_err.max((ex - ey).abs() / ex);
    }

    // attention-derived graphs
    let (c, k) = (10, 12);
    let (mut lo, mut hi, mut cheb) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for g in 0..100u64 {
        let mut rng = RngStream::new(1000 + g);
        let model = StemGnn::new(StemGnnConfig::new(c, k, 3), &mut rng).unwrap();
        let x = random_matrix(c, k, &mut rng);
        let graph = model.latent_graph(&x).unwrap();
        for ev in jacobi_eigenvalues(&graph.laplacian) {
            lo = lo.min(ev);
            hi = hi.max(ev);
        }
        let diag = spectral_diagnostics(&graph).unwrap();
        let coeffs: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
        cheb = cheb.max(diag.filter_agreement(&graph, &x, &coeffs));
    }
    let pass = dft_err < 1e-10 && lo >= -1e-10 && hi <= 2.0 + 1e-10 && cheb < 1e-8;
    outcome(
        2,
        pass,
        format!("DFT error {dft_err:.1e}; eigenvalues in [{lo:.2e}, {hi:.4}] over 100 graphs; Chebyshev vs GFT {cheb:.1e}"),
    )
}

fn criterion_3(users: &[ChannelSeries]) -> Outcome {
    let flat: Vec<RealMatrix> = users.iter().map(|s| flatten_frames(&s.frames)).collect();
    let views: Vec<_> = flat.iter().map(|m| m.view()).collect();
    let mut train = stack_rows(&views, |len| SplitBounds::new(len).train());
    NormStats::fit(train.view()).unwrap().normalize_rows(&mut train);
    let cov = train.t().dot(&train) / train.nrows() as f64;
    let spectrum = jacobi_eigenvalues(&cov);
    let d = spectrum.len();
    let train_frames = split_frames(users, |b| b.train());
    let test_frames = split_frames(users, |b| b.test());

    let mut pass = true;
    let mut parts = Vec::new();
    for c in [d / 16, d / 8, d / 4] {
        let codec = train_codec(users, c, &CodecHyper::default(), &mut RngStream::new(1)).unwrap().model;
        let mse = codec.reconstruction_mse(&train_frames).unwrap();
        // ascending spectrum: the d - C smallest eigenvalues are discarded
        let pca = spectrum[..d - c].iter().sum::<f64>() / d as f64;
        let ratio = mse / pca;
        pass &= ratio <= 1.2;
        parts.push(format!("C={c} ratio {ratio:.3}"));
    }
    let full = train_codec(users, d, &CodecHyper::default(), &mut RngStream::new(1)).unwrap().model;
    let rebuilt: Vec<ComplexMatrix> = test_frames.iter().map(|h| full.decode(full.encode(h).unwrap().view()).unwrap()).collect();
    let nmse = nmse_db(&test_frames, &rebuilt).unwrap().db;
    pass &= nmse < -30.0;
    outcome(3, pass, format!("{}; gamma 1 test NMSE {nmse:.2} dB", parts.join(", ")))
}

fn criterion_4(users: &[ChannelSeries]) -> Outcome {
    let mut leak = 0.0f64;
    let mut check = |h: &ComplexMatrix| {
        let g = h.dot(&zf_precoder(h).unwrap());
        for ((k, j), z) in g.indexed_iter() {
            if k != j {
                leak = leak.max(z.norm());
            }
        }
    };
    // simulated channels, one U x N_t matrix per subcarrier and frame
    let n_sc = users[0].config.n_subcarriers;
    for t in (0..users[0].len()).step_by(97) {
        for sc in 0..n_sc {
            let h = Array2::from_shape_fn((users.len(), users[0].config.n_tx()), |(u, a)| users[u].frames[t][[sc, a]]);
            check(&h);
        }
    }
    let mut rng = RngStream::new(4);
    for _ in 0..200 {
        check(&complex_gaussian(4, 8, &mut rng));
    }

    let unit = Array2::from_elem((1, 1), Complex64::new(1.0, 0.0));
    let r1 = sum_rate(&unit, &zf_precoder(&unit).unwrap(), 1.0).unwrap();
    let phase = Array2::from_shape_fn((1, 4), |(_, a)| Complex64::from_polar(0.5, 0.7 * a as f64));
    let r2 = sum_rate(&phase, &zf_precoder(&phase).unwrap(), 1.0).unwrap();
    let pass = leak < 1e-10 && r1 == 1.0 && (r2 - 1.0).abs() < 1e-15;
    outcome(4, pass, format!("max leakage {leak:.1e}; unit-channel rate {r1} and {r2} bps/Hz"))
}

fn criterion_5(data: &DeskData) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for arch in Arch::ALL {
        let started = Instant::now();
        let cfg = ModelConfig::new(arch, 32, 12, 3, &ModelOptions::default());
        let out = train_forecaster(&cfg, &data.series, &TrainHyper::default(), &mut RngStream::new(1)).unwrap();
        let secs = started.elapsed().as_secs_f64();
        let ratio = out.best_val_rmse / out.init_val_rmse;
        pass &= ratio <= 0.5 && secs < 900.0;
        parts.push(format!(
            "{arch} {:.4}->{:.4} ({:.1}%, {secs:.0}s)",
            out.init_val_rmse,
            out.best_val_rmse,
            100.0 * ratio
        ));
    }
    outcome(5, pass, format!("validation RMSE init->best: {}", parts.join(", ")))
}

fn criterion_6() -> Outcome {
    let constants: Vec<f64> = (0..8).map(|j| 0.75 * j as f64 - 2.0).collect();
    let s = CompressedSeries {
        values: Array2::from_shape_fn((300, 8), |(_, j)| constants[j]),
        meta: CompressedMeta {
            config_hash: "constant".into(),
            user: 0,
            gamma: 0.25,
        },
    };
    let hyper = TrainHyper {
        max_epochs: 3,
        ..TrainHyper::default()
    };
    let mut worst = 0.0f64;
    for arch in Arch::ALL {
        let cfg = ModelConfig::new(arch, 8, 12, 3, &ModelOptions::default());
        let out = train_forecaster(&cfg, std::slice::from_ref(&s), &hyper, &mut RngStream::new(6)).unwrap();
        let pred = out.model.predict(s.values.slice(ndarray::s![40..52, ..])).unwrap();
        for row in pred.rows() {
            for (v, c) in row.iter().zip(&constants) {
                worst = worst.max((v - c).abs());
            }
        }
    }

    let channel = ChannelConfig {
        user_speed_mps: 0.0,
        ..ChannelConfig::desk_scale()
    };
    let users = generate_users(&channel, 1).unwrap();
    let codec = train_codec(&users, 32, &CodecHyper::default(), &mut RngStream::new(1)).unwrap().model;
    let series = vec![codec.encode_series(&users[0], "static", 0).unwrap()];
    let tx = TransmissionModel {
        snr_db: vec![10.0],
        users: 1,
    };
    let mut gap = 0.0f64;
    for arch in Arch::ALL {
        let cfg = ModelConfig::new(arch, 32, 12, 3, &ModelOptions::default());
        let out = train_forecaster(&cfg, &series, &hyper, &mut RngStream::new(6)).unwrap();
        let r = evaluate_pipeline(&users, &codec, &out.model, &tx).unwrap();
        gap = gap.max((r.nmse_db - r.codec_nmse_db).abs());
    }
    outcome(
        6,
        worst < 1e-3 && gap < 0.1,
        format!("constant-series error {worst:.1e}; zero-speed pipeline vs codec NMSE gap {gap:.2e} dB"),
    )
}

fn criterion_7(data: &DeskData) -> Outcome {
    let hyper = TrainHyper {
        max_epochs: 10,
        ..TrainHyper::default()
    };
    let mut violations = Vec::new();
    let mut parts = Vec::new();
    for p in [3, 5, 9] {
        let mut means = Vec::new();
        for arch in Arch::ALL {
            let mut per_seed = Vec::new();
            for seed in 1..=3 {
                let cfg = ModelConfig::new(arch, 32, 12, p, &ModelOptions::default());
                let out = train_forecaster(&cfg, &data.series, &hyper, &mut RngStream::new(seed)).unwrap();
                let (pred, truth) = test_predictions(&out.model, &data.series).unwrap();
                per_seed.push(rmse(&pred, &truth).unwrap());
            }
            let mean = per_seed.iter().sum::<f64>() / 3.0;
            println!("  P={p} {arch}: test RMSE per seed {per_seed:.4?}, mean {mean:.4}");
            means.push((arch, mean));
        }
        let stem = means[0].1;
        for &(arch, m) in &means[1..] {
            if stem > m {
                violations.push(format!("P={p} stemgnn {stem:.4} > {arch} {m:.4}"));
            }
        }
        parts.push(format!("P={p} {}", means.iter().map(|(a, m)| format!("{a} {m:.4}")).collect::<Vec<_>>().join(" ")));
    }
    let detail = if violations.is_empty() {
        format!("ordering holds ({})", parts.join("; "))
    } else {
        format!("ordering violated (reported, not gated): {}", violations.join("; "))
    };
    let mut o = outcome(7, violations.is_empty(), detail);
    o.gated = false;
    o
}

fn smoke_pipeline(dir: &std::path::Path) -> Vec<u8> {
    let mut cfg = csipred::config::ExperimentConfig::desk_scale();
    cfg.channel.n_timestamps = 400;
    cfg.codec.hyper.epochs = 20;
    cfg.forecaster.hyper.max_epochs = 3;
    cfg.eval.seeds = vec![1];
    let config = dir.join("config.json");
    std::fs::write(&config, cfg.to_json_pretty().unwrap()).unwrap();
    let c = config.to_str().unwrap();
    let w = dir.to_str().unwrap();
    let mut steps: Vec<Vec<&str>> = vec![
        vec!["generate", "--config", c],
        vec!["train-codec", "--config", c],
        vec!["encode", "--config", c],
    ];
    for arch in ["stemgnn", "rnn", "lstm"] {
        steps.push(vec!["train-forecaster", "--config", c, "--model", arch]);
        steps.push(vec!["evaluate", "--config", c, "--model", arch]);
    }
    steps.push(vec!["report", "--config", c]);
    for step in steps {
        let mut args = vec!["csipred", "--workdir", w];
        args.extend(step.iter().copied());
        assert_eq!(cli::run(&args), 0, "{step:?}");
    }
    std::fs::read(dir.join(csipred::report::METRICS_FILE)).unwrap()
}

fn criterion_8() -> Outcome {
    let started = Instant::now();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = smoke_pipeline(a.path());
    let second = smoke_pipeline(b.path());
    let secs = started.elapsed().as_secs_f64();
    outcome(
        8,
        first == second && secs < 1800.0,
        format!("metrics.json identical: {} ({} bytes, two runs {secs:.0}s)", first == second, first.len()),
    )
}

#[test]
fn acceptance_criteria() {
    let data = desk_data();
    let results = [
        criterion_1(),
        criterion_2(),
        criterion_3(&data.users),
        criterion_4(&data.users),
        criterion_5(&data),
        criterion_6(),
        criterion_7(&data),
        criterion_8(),
    ];
    let failed: Vec<usize> = results.iter().filter(|o| o.gated && !o.pass).map(|o| o.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
