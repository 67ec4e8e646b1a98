//! Fold curve of the Wang-Buzsaki model in the (I_app, g_M) plane. The cusp
//! shows up as the turning point of g_M along the curve.
//!
//! ```text
//! cargo run --release --example fold_curve
//! ```

use mcurrent::bifurcation::{fold_curve, linspace};
use mcurrent::{NeuronModel, Preset};

fn main() {
    let m = NeuronModel::preset(Preset::WangBuzsaki);
    let curve = fold_curve(&m, &linspace(-70.0, -50.0, 41));
    println!("{:>9} {:>10} {:>10}", "V", "I_app", "g_M");
    for p in &curve.points {
        println!("{:9.3} {:10.5} {:10.5}", p.v, p.i_app, p.g_m);
    }
    if let Some(top) = curve.points.iter().max_by(|a, b| a.g_m.total_cmp(&b.g_m)) {
        println!("largest g_M on the fold: {:.5} at V = {:.3}", top.g_m, top.v);
    }
}
