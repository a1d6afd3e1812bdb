//! Random search for violations of the quadratic inequality behind the
//! a-priori estimates, over scalar and matrix-valued `(y, z)`.

use loggrowth_bsde::diagnostics::{check_lemma46, lemma46_sides};

fn main() -> loggrowth_bsde::Result<()> {
    for beta in [1.1, 1.5, 2.0] {
        let r = check_lemma46(beta, 1_000_000, 10.0, 7)?;
        println!(
            "beta = {beta}: {} scalar + {} matrix samples, {} violations, worst relative excess {:.3e}",
            r.scalar_samples, r.matrix_samples, r.violations, r.worst_relative_excess
        );
    }
    // Equality holds at |z| = 2A|y|/(β − 1).
    let (l, r) = lemma46_sides(1.5, 1.0, &[1.0], &[4.0], 1);
    println!("equality case: lhs = {l}, rhs = {r}");
    Ok(())
}
