//! Equilibrium branch of the Wang-Buzsaki model for several M-current
//! conductances, with its limit points and Hopf points.
//!
//! ```text
//! cargo run --release --example branch_diagram
//! ```

use mcurrent::bifurcation::{branch, linspace, rest_boundary};
use mcurrent::{NeuronModel, Preset};

fn main() {
    let base = NeuronModel::preset(Preset::WangBuzsaki);
    for g_m in [0.0, 0.1, 0.5, 1.0, 3.0] {
        let m = base.with_g_m(g_m);
        println!("g_M = {g_m}");
        for p in branch(&m, &linspace(-120.0, 60.0, 1801)) {
            if p.lp || p.hopf {
                let omega = p.omega.map(|w| format!("  omega = {w:.4}")).unwrap_or_default();
                println!("  {:<4} V = {:9.4}  I = {:9.5}{omega}", p.flags(), p.v, p.i_app);
            }
        }
        if let Some(p) = rest_boundary(&m) {
            let how = if p.hopf { "Hopf" } else { "saddle-node" };
            println!("  rest state lost through a {how} at I = {:.5}", p.i_app);
        }
    }
}
