//! Check every model's reverse pass against central finite differences.
//!
//! ```bash
//! cargo run -p csipred --example gradient_check
//! ```

use csipred::cli::gradcheck;
use csipred::diff::DEFAULT_FD_EPS;
use csipred::forecast::ModelOptions;
use std::time::Instant;

fn main() -> csipred::Result<()> {
    let opts = ModelOptions::default();
    for model in ["stemgnn", "rnn", "lstm", "codec"] {
        let started = Instant::now();
        let r = gradcheck(model, &opts, 12, 3, DEFAULT_FD_EPS, 1)?;
        println!(
            "{model:<8} {:>6} scalars  max relative error {:.2e} (at {})  {:.1}s",
            r.checked_scalars,
            r.max_relative_error,
            r.worst_param,
            started.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
