//! Phase locking of two identical Wang-Buzsaki neurons coupled by
//! excitatory and inhibitory synapses, over a range of M-current
//! conductances and random initial voltages.
//!
//! ```text
//! cargo run --release --example synchrony
//! ```

use mcurrent::coupling::{sync_sweep, SynPreset, SynapseSpec, SyncOptions};
use mcurrent::{NeuronModel, Preset};

fn main() {
    let m = NeuronModel::preset(Preset::WangBuzsaki);
    let opts = SyncOptions {
        i_app: 6.0,
        t_end: 10_000.0,
        ..Default::default()
    };
    for preset in [SynPreset::Ex1Exc, SynPreset::Ex1Inh] {
        println!("{preset}");
        let syn = SynapseSpec::preset(preset, 0.1);
        for r in sync_sweep(&m, &syn, &[0.25, 0.5, 1.0], &opts) {
            let clusters: Vec<String> = r
                .clusters
                .iter()
                .map(|c| format!("{:.2} rad x{}", c.phi, c.count))
                .collect();
            println!("  g_M = {:.2}  {:<12} {}", r.g_m, r.class.label(), clusters.join(", "));
        }
    }
}
