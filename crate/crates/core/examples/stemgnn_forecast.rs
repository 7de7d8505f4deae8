//! Compress one user's channel and train the spectral-temporal graph
//! forecaster on it.
//!
//! ```bash
//! cargo run -p csipred --example stemgnn_forecast
//! ```

use csipred::channel::{generate_users, ChannelConfig};
use csipred::codec::{train_codec, CodecHyper};
use csipred::eval::rmse;
use csipred::forecast::{test_predictions, train_forecaster, Arch, ModelConfig, ModelOptions, Predictor, TrainHyper};
use csipred::numerics::RngStream;

fn main() -> csipred::Result<()> {
    let cfg = ChannelConfig::desk_scale();
    let users = generate_users(&cfg, 4)?;
    let codec = train_codec(&users, 32, &CodecHyper::default(), &mut RngStream::new(1))?.model;
    let series = vec![codec.encode_series(&users[0], "example", 0)?];

    let (k, p) = (12, 3);
    let model_cfg = ModelConfig::new(Arch::StemGnn, codec.n_latent(), k, p, &ModelOptions::default());
    let hyper = TrainHyper {
        max_epochs: 15,
        ..TrainHyper::default()
    };
    let out = train_forecaster(&model_cfg, &series, &hyper, &mut RngStream::new(2))?;
    println!("epoch  train loss   val RMSE");
    for r in &out.trace {
        println!("{:>5}  {:>10.4e}  {:>9.4}", r.epoch, r.train_loss, r.val_rmse);
    }
    println!("validation RMSE {:.4} -> {:.4}", out.init_val_rmse, out.best_val_rmse);

    let (pred, truth) = test_predictions(&out.model, &series)?;
    println!("test RMSE over {} windows: {:.4}", pred.len(), rmse(&pred, &truth)?);

    let history = series[0].values.slice(ndarray::s![100..100 + k, ..]);
    let next = out.model.predict(history)?;
    println!("forecast for t = {}..{}, first 4 latent dims:", 100 + k, 100 + k + p - 1);
    for (j, row) in next.rows().into_iter().enumerate() {
        let truth = series[0].values.row(100 + k + j);
        println!("  {:+.3?}  (true {:+.3?})", &row.to_vec()[..4], &truth.to_vec()[..4]);
    }
    Ok(())
}
