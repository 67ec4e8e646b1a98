//! Firing frequency as the M-current conductance grows at fixed drive, for
//! each built-in model.
//!
//! ```text
//! cargo run --release --example f_gm
//! ```

use mcurrent::bifurcation::linspace;
use mcurrent::dynamics::{f_gm_curve, Protocol};
use mcurrent::{NeuronModel, Preset};

fn main() -> mcurrent::Result<()> {
    for (preset, i_app, g_max) in [
        (Preset::WangBuzsaki, 3.0, 3.0),
        (Preset::Stiefel, 0.5, 0.6),
        (Preset::Rtm, 80.0, 18.0),
    ] {
        let m = NeuronModel::preset(preset);
        let c = f_gm_curve(&m, i_app, &linspace(0.0, g_max, 7), &Protocol::default())?;
        println!("{preset} at I = {i_app}");
        for p in &c.points {
            println!("  g_M = {:6.2}  {:8.2} Hz", p.g_m, p.frequency);
        }
        println!("  monotone decreasing: {}", c.monotone_decreasing);
    }
    Ok(())
}
