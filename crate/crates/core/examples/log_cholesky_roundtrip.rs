//! Reduced Cholesky factors, log-Cholesky coordinates and geodesic distance
//! on a restricted manifold with a non-canonical index set.

use nalgebra::dmatrix;
use psdk::linalg::{reduced_cholesky, IndexSet};
use psdk::manifold::{
    from_log_cholesky, geodesic_distance, log_cholesky, map_h, membership_check, RPsdMatrix,
};

fn main() -> psdk::Result<()> {
    // rank 2 in R^4, built from a factor whose rows 1 and 3 are independent
    let f = dmatrix![
        0.0, 0.0;
        2.0, 0.5;
        1.0, -1.0;
        0.5, 1.5
    ];
    let a = &f * f.transpose();
    let idx = IndexSet::new(vec![1, 3], 4)?;

    let check = membership_check(&a, 2, &idx);
    println!("member of S*_{idx}(4, 2): {} (min pivot {:.3e})", check.is_member, check.min_pivot);
    // row 0 is zero, so the canonical manifold rejects it
    let canonical = membership_check(&a, 2, &IndexSet::canonical(2));
    println!("member of S*(4, 2): {} ({})", canonical.is_member, canonical.reason.unwrap_or_default());

    let n = reduced_cholesky(&a, 2, &idx)?;
    println!("reduced Cholesky factor N =\n{}", n.entries());

    let point = RPsdMatrix::new(a, 2, idx)?;
    let coords = log_cholesky(&point)?;
    println!("log-Cholesky coordinates =\n{}", coords.entries());
    let back = from_log_cholesky(&coords);
    println!("round-trip error: {:.2e}", (back.matrix() - point.matrix()).abs().max());

    let g = dmatrix![0.0, 0.0; 1.0, 0.0; 1.0, -1.0; 0.0, 2.0];
    let other = RPsdMatrix::new(&g * g.transpose(), 2, point.index_set().clone())?;
    println!("factor of second point =\n{}", map_h(&other)?.entries());
    println!("geodesic distance: {:.6}", geodesic_distance(&point, &other)?);
    Ok(())
}
