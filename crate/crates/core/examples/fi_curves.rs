//! Firing frequency against applied current, sweeping up and down, without
//! and with the M-current. Prints the excitability class and any bistable
//! window.
//!
//! ```text
//! cargo run --release --example fi_curves
//! ```

use mcurrent::dynamics::{fi_curve, fi_grid, Protocol};
use mcurrent::{NeuronModel, Preset};

fn main() -> mcurrent::Result<()> {
    let m = NeuronModel::preset(Preset::WangBuzsaki);
    for g_m in [0.0, 3.0] {
        let mg = m.with_g_m(g_m);
        let grid = fi_grid(&mg, 11).expect("rest state found");
        let fi = fi_curve(&mg, &grid, &Protocol::default())?;
        println!("g_M = {g_m}: class {:?}", fi.class);
        for (up, down) in fi.up.iter().zip(fi.down.iter().rev()) {
            println!(
                "  I = {:8.4}  up {:7.2} Hz  down {:7.2} Hz",
                up.i_app, up.frequency, down.frequency
            );
        }
        if let (Some(i), Some(f)) = (fi.onset_current, fi.onset_frequency) {
            println!("  onset at I = {i:.4} with {f:.2} Hz");
        }
        if let Some((lo, hi)) = fi.bistable_window() {
            println!("  rest and firing coexist on [{lo:.4}, {hi:.4}]");
        }
    }
    Ok(())
}
