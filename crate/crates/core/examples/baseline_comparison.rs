//! Train the graph forecaster and the RNN / LSTM baselines on identical
//! windows and compare test RMSE against a persistence forecast.
//!
//! ```bash
//! cargo run -p csipred --example baseline_comparison
//! ```

use csipred::channel::{generate_users, ChannelConfig};
use csipred::codec::{train_codec, CodecHyper};
use csipred::diff::Differentiable;
use csipred::eval::rmse;
use csipred::forecast::{test_predictions, train_forecaster, Arch, ModelConfig, ModelOptions, TrainHyper};
use csipred::numerics::{RealMatrix, RngStream};
use std::time::Instant;

fn main() -> csipred::Result<()> {
    let cfg = ChannelConfig::desk_scale();
    let users = generate_users(&cfg, 4)?;
    let codec = train_codec(&users, 32, &CodecHyper::default(), &mut RngStream::new(1))?.model;
    let series = vec![codec.encode_series(&users[0], "example", 0)?];
    let (k, p) = (12, 5);
    let hyper = TrainHyper {
        max_epochs: 15,
        ..TrainHyper::default()
    };

    println!("model    params   val init -> best   test RMSE   time");
    let mut truth_ref = Vec::new();
    for arch in Arch::ALL {
        let model_cfg = ModelConfig::new(arch, codec.n_latent(), k, p, &ModelOptions::default());
        let started = Instant::now();
        let out = train_forecaster(&model_cfg, &series, &hyper, &mut RngStream::new(3))?;
        let (pred, truth) = test_predictions(&out.model, &series)?;
        println!(
            "{:<8} {:>6}   {:>7.4} -> {:.4}   {:>9.4}   {:.1}s",
            arch.name(),
            out.model.model.params().scalar_count(),
            out.init_val_rmse,
            out.best_val_rmse,
            rmse(&pred, &truth)?,
            started.elapsed().as_secs_f64()
        );
        truth_ref = truth;
    }

    // repeat the last observed vector for all P steps
    let values = &series[0].values;
    let test = csipred::dataset::SplitBounds::new(values.nrows()).test();
    let persistence: Vec<RealMatrix> = (0..truth_ref.len())
        .map(|i| {
            let last = values.row(test.start + i + k - 1);
            RealMatrix::from_shape_fn((last.len(), p), |(c, _)| last[c])
        })
        .collect();
    println!("persist       -                       {:>9.4}", rmse(&persistence, &truth_ref)?);
    Ok(())
}
