//! Builds a model from a JSON description with kinetic expressions, then
//! inspects an expression and its derivative.
//!
//! ```text
//! cargo run --release --example custom_model
//! ```

use mcurrent::bifurcation::find_bt;
use mcurrent::expr::{diff_expr, parse_expr};
use mcurrent::{build_model, Preset};

fn main() -> mcurrent::Result<()> {
    let e = parse_expr("0.1*bern(-(V+34)/10)").expect("valid expression");
    let d = diff_expr(&e, 1);
    println!("alpha_n(V)  = {e}");
    println!("alpha_n'(V) = {d}");
    println!("alpha_n(-34) = {}  alpha_n'(-34) = {}", e.value(-34.0), d.value(-34.0));

    // the Wang-Buzsaki model with a steeper M-current activation
    let mut config = Preset::WangBuzsaki.config();
    if let Some(mc) = config.m_current.as_mut() {
        mc.winf = "1/(1+exp(-(V+35)/5))".into();
    }
    let m = build_model(&config.to_json())?;
    println!("\nstate: {:?}", m.state_names());
    for p in find_bt(&m)? {
        println!("BT at V = {:.4}  I = {:.4}  g_M = {:.5}", p.v, p.i_app, p.g_m);
    }
    Ok(())
}
