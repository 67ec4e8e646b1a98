//! How the distance between the Bogdanov-Takens and cusp points in g_M
//! shrinks as the leak conductance approaches its BTC value.
//!
//! ```text
//! cargo run --release --example leak_gap
//! ```

use mcurrent::bifurcation::{bt_cusp_gap, find_btc};
use mcurrent::validation::{BTC_REFERENCE, BT_REFERENCE, CUSP_REFERENCE};
use mcurrent::{NeuronModel, Preset};

fn main() -> mcurrent::Result<()> {
    let m = NeuronModel::preset(Preset::WangBuzsaki);
    let v_btc = BTC_REFERENCE[0].2[0];
    let btc = find_btc(&m)?;
    let Some(p) = btc.iter().min_by(|a, b| (a.v - v_btc).abs().total_cmp(&(b.v - v_btc).abs())) else {
        println!("no BTC point");
        return Ok(());
    };
    let g_star = p.g_l.unwrap_or(m.leak.g);
    println!("BTC: V = {:.4}  g_L = {g_star:.5}  g_M = {:.5}", p.v, p.g_m);

    let (mut v_bt, mut v_cp) = (BT_REFERENCE[0].1[0], CUSP_REFERENCE[0].1[0]);
    for frac in [0.0, 0.2, 0.4, 0.6, 0.8, 0.95] {
        let g_l = m.leak.g + frac * (g_star - m.leak.g);
        let (bt, cp, gap) = bt_cusp_gap(&m.with_g_l(g_l), v_bt, v_cp)?;
        println!(
            "g_L = {g_l:.5}  BT at g_M = {:.5}  cusp at g_M = {:.5}  gap = {gap:.3e}",
            bt.g_m, cp.g_m
        );
        (v_bt, v_cp) = (bt.v, cp.v);
    }
    Ok(())
}
