//! Voltage and M-current gate trace of a tonically firing Wang-Buzsaki
//! neuron, written as CSV to stdout, with the spike times on stderr.
//!
//! ```text
//! cargo run --release --example spike_trace > trace.csv
//! ```

use mcurrent::dynamics::{detect_spikes, firing_frequency, rest_state, simulate};
use mcurrent::ode::SolverOptions;
use mcurrent::{NeuronModel, Preset};

fn main() -> mcurrent::Result<()> {
    let m = NeuronModel::preset(Preset::WangBuzsaki).with_g_m(1.0).with_i_app(3.0);
    let mut init = rest_state(&m)?;
    init[0] = 0.0;
    let tr = simulate(&m, &init, 2000.0, &SolverOptions::default())?;

    let (v, w) = (tr.component(0), tr.component(1));
    println!("t,V,w");
    for i in 0..tr.len() {
        println!("{},{},{}", tr.t[i], v[i], w[i]);
    }
    eprintln!("spikes: {:?}", detect_spikes(&tr, 0.0));
    eprintln!("frequency: {:.2} Hz", firing_frequency(&tr));
    Ok(())
}
