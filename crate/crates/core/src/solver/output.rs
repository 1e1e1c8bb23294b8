use std::io::Write;

use super::Solution;

/// Writes `x,regime,V,u_star` (one-dimensional) or
/// `axis1,x,regime,V,u_star` (two-dimensional) after a `#` header line.
/// Regimes are numbered from 1.
pub fn write_solution_csv<W: Write>(solution: &Solution, header: &str, out: &mut W) -> std::io::Result<()> {
    let space = solution.values.space();
    let planar = !matches!(space, crate::grid::StateSpace::Line { .. });
    writeln!(out, "{header}")?;
    if planar {
        writeln!(out, "axis1,x,regime,V,u_star")?;
    } else {
        writeln!(out, "x,regime,V,u_star")?;
    }
    for node in 0..space.node_count() {
        let c = space.coords(node);
        let v = solution.values.at(node);
        let u = solution.policy.at(node);
        match c.axis1 {
            Some(a) => writeln!(out, "{a},{},{},{v:.12e},{u}", c.x, c.regime + 1)?,
            None => writeln!(out, "{},{},{v:.12e},{u}", c.x, c.regime + 1)?,
        }
    }
    Ok(())
}
