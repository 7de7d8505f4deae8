//! Train the linear codec at several compression ratios and compare it with
//! the best rank-C linear projection (PCA).
//!
//! ```bash
//! cargo run -p csipred --example codec_compression
//! ```

use csipred::channel::{generate_users, ChannelConfig};
use csipred::codec::{flatten_frames, split_frames, train_codec, CodecHyper};
use csipred::dataset::{stack_rows, NormStats, SplitBounds};
use csipred::eval::nmse_db;
use csipred::numerics::{symmetric_eigh, ComplexMatrix, RealMatrix, RngStream, DEFAULT_EIGH_TOL};

fn main() -> csipred::Result<()> {
    let cfg = ChannelConfig::desk_scale();
    let users = generate_users(&cfg, 4)?;

    // PCA reference on the same normalised training rows the codec sees
    let flat: Vec<RealMatrix> = users.iter().map(|s| flatten_frames(&s.frames)).collect();
    let views: Vec<_> = flat.iter().map(|m| m.view()).collect();
    let mut train = stack_rows(&views, |len| SplitBounds::new(len).train());
    NormStats::fit(train.view())?.normalize_rows(&mut train);
    let cov = train.t().dot(&train) / train.nrows() as f64;
    let spectrum = symmetric_eigh(&cov, DEFAULT_EIGH_TOL)?.values;
    let d = spectrum.len();

    let train_frames = split_frames(&users, |b| b.train());
    let test_frames = split_frames(&users, |b| b.test());
    let hyper = CodecHyper {
        epochs: 40,
        ..CodecHyper::default()
    };
    println!("  C   gamma    codec MSE    PCA MSE   ratio   test NMSE");
    for c in [8, 16, 32, 64] {
        let codec = train_codec(&users, c, &hyper, &mut RngStream::new(7))?.model;
        let mse = codec.reconstruction_mse(&train_frames)?;
        let pca = spectrum.iter().take(d - c).sum::<f64>() / d as f64;
        // the pooled data has rank below d, so large C can reach zero error
        let ratio = if pca > 1e-12 {
            format!("{:>6.3}", mse / pca)
        } else {
            "     -".to_owned()
        };
        let rebuilt = test_frames
            .iter()
            .map(|h| codec.decode(codec.encode(h)?.view()))
            .collect::<csipred::Result<Vec<ComplexMatrix>>>()?;
        println!(
            "{c:>3}  {:>6.4}  {mse:>11.4e}  {:>9.3e}  {ratio}  {:>7.2} dB",
            codec.gamma(),
            pca.max(0.0),
            nmse_db(&test_frames, &rebuilt)?.db
        );
    }
    Ok(())
}
