//! BT, cusp and BTC points of the three built-in models, with the BT normal
//! form coefficients.
//!
//! ```text
//! cargo run --release --example codim_points
//! ```

use std::time::Instant;

use mcurrent::bifurcation::{find_bt, find_btc, find_cusp, normal_form, BifPoint};
use mcurrent::{NeuronModel, Preset};

fn show(p: &BifPoint) {
    let g_l = p.g_l.map(|g| format!("  g_L={g:.5}")).unwrap_or_default();
    let nf = match (p.alpha2, p.beta2) {
        (Some(a), Some(b)) => format!("  a2={a:+.4e} b2={b:+.4e}"),
        _ => String::new(),
    };
    let tag = if p.biophysical { "" } else { "  (g_M < 0)" };
    println!(
        "  {:<3} V={:9.4}  I={:9.4}  g_M={:9.5}{g_l}{nf}{tag}",
        p.kind.label(),
        p.v,
        p.i_app,
        p.g_m
    );
}

fn main() -> mcurrent::Result<()> {
    for preset in Preset::ALL {
        let m = NeuronModel::preset(preset);
        println!("{preset} (g_L = {})", m.leak.g);
        let t = Instant::now();
        let bt = find_bt(&m)?;
        let cusp = find_cusp(&m)?;
        let btc = find_btc(&m)?;
        for p in bt.iter().chain(&cusp).chain(&btc) {
            show(p);
        }
        for p in &bt {
            let nf = normal_form(&p.apply(&m), p.v)?;
            println!("  alpha2 / (p1 q0^2 I'') at V={:.4}: {:.10}", p.v, nf.alpha2_ratio);
        }
        println!("  ({:.0} ms)\n", t.elapsed().as_secs_f64() * 1e3);
    }
    Ok(())
}
