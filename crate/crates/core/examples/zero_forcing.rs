//! Zero-forcing precoding with perfect and with noisy channel knowledge.
//!
//! ```bash
//! cargo run -p csipred --example zero_forcing
//! ```

use csipred::eval::{db_to_linear, parse_snr_grid, sum_rate, zf_precoder};
use csipred::numerics::{Complex64, ComplexMatrix, RngStream};
use ndarray::Array2;

fn gaussian(rows: usize, cols: usize, scale: f64, rng: &mut RngStream) -> ComplexMatrix {
    let s = scale / std::f64::consts::SQRT_2;
    Array2::from_shape_fn((rows, cols), |_| Complex64::new(s * rng.normal(), s * rng.normal()))
}

fn main() -> csipred::Result<()> {
    let (users, antennas, trials) = (4, 8, 500);
    let mut rng = RngStream::new(11);
    let grid = parse_snr_grid("-10:20:5")?;

    let h = gaussian(users, antennas, 1.0, &mut rng);
    let v = zf_precoder(&h)?;
    let g = h.dot(&v);
    let leak = (0..users)
        .flat_map(|k| (0..users).filter(move |&j| j != k).map(move |j| (k, j)))
        .map(|(k, j)| g[[k, j]].norm())
        .fold(0.0, f64::max);
    println!("perfect-CSI inter-user leakage: {leak:.2e}");

    println!("SNR dB   perfect   error 0.1   error 0.3");
    for &snr in &grid {
        let rho = db_to_linear(snr);
        let mut rates = [0.0; 3];
        for _ in 0..trials {
            let h = gaussian(users, antennas, 1.0, &mut rng);
            for (slot, err) in [0.0, 0.1, 0.3].into_iter().enumerate() {
                let estimate = &h + &gaussian(users, antennas, err, &mut rng);
                rates[slot] += sum_rate(&h, &zf_precoder(&estimate)?, rho)? / trials as f64;
            }
        }
        println!("{snr:>6}   {:>7.3}   {:>9.3}   {:>9.3}", rates[0], rates[1], rates[2]);
    }
    Ok(())
}
