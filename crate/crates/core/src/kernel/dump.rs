use std::io::Write;

use super::consistency::ChainRows;

/// Writes one line per admissible (state, control) row:
/// `formulation,axis1,x,regime,u,dt,transitions` where `transitions` is a
/// `;`-separated list of `axis1:x:regime:probability`.
pub fn write_kernel_dump<K: ChainRows, W: Write>(kernel: &K, header: &str, out: &mut W) -> std::io::Result<()> {
    writeln!(out, "{header}")?;
    writeln!(out, "formulation,axis1,x,regime,u,dt,transitions")?;
    let space = kernel.space();
    let formulation = kernel.formulation();
    for node in 0..space.node_count() {
        let here = space.coords(node);
        for c in 0..kernel.controls().len() {
            let Some((dt, entries)) = kernel.entries(node, c) else { continue };
            let moves: Vec<String> = entries
                .iter()
                .map(|&(t, p)| {
                    let there = space.coords(t);
                    format!("{}:{}:{}:{p:e}", there.axis1.unwrap_or(0.0), there.x, there.regime + 1)
                })
                .collect();
            writeln!(
                out,
                "{formulation},{},{},{},{},{dt:e},{}",
                here.axis1.map(|a| a.to_string()).unwrap_or_default(),
                here.x,
                here.regime + 1,
                kernel.controls().get(c),
                moves.join(";")
            )?;
        }
    }
    Ok(())
}
