//! Steady-state I-V curve of the Wang-Buzsaki model and its equilibria at a
//! few applied currents.
//!
//! ```text
//! cargo run --release --example equilibria
//! ```

use mcurrent::bifurcation::linspace;
use mcurrent::steady::{find_equilibria, u_of_v};
use mcurrent::{NeuronModel, Preset};

fn main() -> mcurrent::Result<()> {
    let m = NeuronModel::preset(Preset::WangBuzsaki).with_g_m(0.5);

    println!("V (mV), I_app = U(V) (uA/cm^2)");
    for v in linspace(-80.0, -40.0, 9) {
        println!("{v:7.1}  {:8.4}", u_of_v(&m, v));
    }

    for i_app in [-1.0, 0.3, 1.0, 3.0] {
        println!("\nI_app = {i_app}");
        for eq in find_equilibria(&m.with_i_app(i_app))? {
            let lead = eq.eigenvalues[0];
            println!(
                "  V = {:9.4}  {:<14} lambda_max = {:+.4e}{:+.4e}i",
                eq.v,
                eq.stability.label(),
                lead.re,
                lead.im
            );
        }
    }
    Ok(())
}
