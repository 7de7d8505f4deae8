//! Simulate a few users' multipath channels and inspect their statistics.
//!
//! ```bash
//! cargo run -p csipred --example channel_simulation
//! ```

use csipred::channel::{generate_users, ChannelConfig};
use csipred::tensor_io::Tensor;

/// Bessel J0 by its power series; plenty for arguments below 5.
fn bessel_j0(x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..30 {
        term *= -(x * x) / (4.0 * (k * k) as f64);
        sum += term;
    }
    sum
}

fn main() -> csipred::Result<()> {
    let cfg = ChannelConfig::desk_scale();
    println!(
        "{} antennas x {} subcarriers, {} paths, f_D = {:.2} Hz, {} frames every {} ms",
        cfg.n_tx(),
        cfg.n_subcarriers,
        cfg.n_paths,
        cfg.max_doppler_hz(),
        cfg.n_timestamps,
        cfg.csi_interval_s * 1e3
    );

    let users = generate_users(&cfg, 4)?;
    let jakes = bessel_j0(2.0 * std::f64::consts::PI * cfg.max_doppler_hz() * cfg.csi_interval_s);
    for (u, s) in users.iter().enumerate() {
        println!(
            "user {u}: mean |h|^2 = {:.3}, lag-1 correlation {:.4}, lag-20 {:.4}",
            s.mean_power(),
            s.autocorrelation(1),
            s.autocorrelation(20)
        );
    }
    println!("Jakes lag-1 reference J0(2 pi f_D dt) = {jakes:.4}");

    let path = std::env::temp_dir().join("csipred_channels_u0.bin");
    users[0].save(&path)?;
    let bytes = std::fs::metadata(&path)?.len();
    let back = csipred::channel::ChannelSeries::from_tensor(&Tensor::read(&path)?)?;
    println!("saved user 0 to {} ({bytes} bytes), round trip exact: {}", path.display(), back == users[0]);
    Ok(())
}
