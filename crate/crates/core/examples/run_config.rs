//! Driving the sweep through a run configuration, as the command line does.
use neass::cli::{cmd_neass_sweep, ModelSpec, RunConfig};

fn main() {
    let out = std::env::temp_dir().join("neass-run-config-example");
    let config = RunConfig {
        model: ModelSpec::Haldane {
            t1: 1.0,
            t2: 0.1,
            phi: std::f64::consts::FRAC_PI_2,
            mass: 0.0,
        },
        n_max: 2,
        out_dir: out.clone(),
        ..RunConfig::default()
    };
    println!("{}", serde_json::to_string_pretty(&config).unwrap());
    match cmd_neass_sweep(&config) {
        Ok((report, code)) => {
            for f in &report.residual_fits {
                println!("n = {}: residual slope {:.3} (r2 {:.5})", f.n, f.slope, f.r_squared);
            }
            println!("exit code {code}, files in {}", out.display());
        }
        Err(e) => println!("{}", e.to_json()),
    }
}
