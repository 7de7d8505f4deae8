//! Full pipeline in-process: simulate, compress, forecast, precode, report.
//!
//! ```bash
//! cargo run -p csipred --example end_to_end
//! ```
//!
//! The same stages are available one at a time through the `csipred` binary.

use csipred::channel::{generate_users, ChannelConfig};
use csipred::checkpoint::{forecaster_checkpoint, forecaster_from_checkpoint, Checkpoint};
use csipred::codec::{train_codec, CodecHyper};
use csipred::eval::{evaluate_pipeline, parse_snr_grid, TransmissionModel};
use csipred::forecast::{train_forecaster, Arch, ModelConfig, ModelOptions, TrainHyper};
use csipred::numerics::RngStream;
use csipred::report::{write_report, RunRecord};

fn main() -> csipred::Result<()> {
    let mut cfg = ChannelConfig::desk_scale();
    cfg.n_timestamps = 800;
    let users = generate_users(&cfg, 4)?;
    let codec = train_codec(&users, 32, &CodecHyper::default(), &mut RngStream::new(1))?.model;
    let series = users
        .iter()
        .enumerate()
        .map(|(u, s)| codec.encode_series(s, "end-to-end", u))
        .collect::<csipred::Result<Vec<_>>>()?;
    let tx = TransmissionModel {
        snr_db: parse_snr_grid("-10:20:5")?,
        users: users.len(),
    };

    let out_dir = std::env::temp_dir().join("csipred_end_to_end");
    std::fs::create_dir_all(&out_dir)?;
    let mut runs = Vec::new();
    for arch in Arch::ALL {
        let model_cfg = ModelConfig::new(arch, codec.n_latent(), 12, 3, &ModelOptions::default());
        let hyper = TrainHyper {
            max_epochs: 8,
            ..TrainHyper::default()
        };
        let trained = train_forecaster(&model_cfg, &series, &hyper, &mut RngStream::new(2))?;

        // checkpoints round-trip bit-exactly, so evaluate the reloaded model
        let path = out_dir.join(format!("forecaster_{arch}.json"));
        forecaster_checkpoint(&trained.model, "end-to-end")?.save(&path)?;
        let reloaded = forecaster_from_checkpoint(&Checkpoint::load(&path)?)?;

        let report = evaluate_pipeline(&users, &codec, &reloaded, &tx)?;
        println!(
            "{:<8} rmse {:.4}  nmse {:>7.3} dB  (codec alone {:>7.3} dB)  rate @20 dB {:.3} of {:.3} bps/Hz",
            arch.name(),
            report.rmse,
            report.nmse_db,
            report.codec_nmse_db,
            report.sum_rate.last().unwrap_or(&f64::NAN),
            report.sum_rate_perfect.last().unwrap_or(&f64::NAN)
        );
        runs.push(RunRecord {
            config_hash: "end-to-end".into(),
            arch,
            seed: 2,
            report,
            trace: trained.trace,
        });
    }
    write_report(&out_dir, &runs)?;
    println!("metrics.json, sumrate.csv and losscurve.csv written to {}", out_dir.display());
    Ok(())
}
