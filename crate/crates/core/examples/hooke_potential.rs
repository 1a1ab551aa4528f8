//! Tangent bond force, its potential, balance points and the inverse branches.

use diatomic_vp::hooke::{Branch, HookeModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let m = HookeModel::tangent(1.0)?;
    println!("{:>8} {:>14} {:>14}", "omega", "F^h", "U");
    for k in 1..10 {
        let w = k as f64 / 10.0;
        println!("{w:>8.2} {:>14.6e} {:>14.6e}", m.force(w)?, m.potential(w)?);
    }

    for level in [0.5, 1.0, 4.0] {
        let b = m.balance_points(level)?;
        println!("balance {level}: ({:.6}, {:.6})", b.omega_min, b.omega_max);
    }
    for u in [0.01, 1.0, 3.0] {
        let (l, r) = (
            m.inverse_potential(u, Branch::Left)?,
            m.inverse_potential(u, Branch::Right)?,
        );
        println!("U = {u}: omega in [{l:.6e}, {r:.6}]");
    }

    // a tabulated force goes through PCHIP and quadrature
    let table: String = (1..50)
        .map(|k| {
            let w = k as f64 / 50.0;
            format!("{w} {}\n", m.force(w).unwrap())
        })
        .collect();
    let t = HookeModel::from_table_str(1.0, &table)?;
    let report = t.validate(401);
    println!(
        "table model: U(0.8) = {:.6e}, failed hypotheses {:?}",
        t.potential(0.8)?,
        report.failed()
    );
    Ok(())
}
