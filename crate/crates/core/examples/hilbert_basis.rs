//! Reduced-rank squared-exponential GP: Laplacian eigenfunctions on a box
//! weighted by the spectral density reproduce the kernel away from the boundary.

use hybrid_sysid::basis::{eigenvalues, eval_basis, prior_column_covariance, HilbertBasisConfig, KernelSpec};

fn main() -> hybrid_sysid::Result<()> {
    let (sigma2, ell) = (1.0, 0.4);
    let kernel = KernelSpec::squared_exponential(sigma2, vec![ell])?;
    for n in [5, 10, 20, 40] {
        let basis = HilbertBasisConfig::one_dim(3.0, n)?;
        let v = prior_column_covariance(&basis, &kernel)?;
        let (a, b) = (0.2, -0.3);
        let approx = (eval_basis(&basis, &[a]).transpose() * &v * eval_basis(&basis, &[b]))[(0, 0)];
        let exact = sigma2 * (-(a - b) * (a - b) / (2.0 * ell * ell)).exp();
        println!("n = {n:>2}: k({a}, {b}) ≈ {approx:.6} (exact {exact:.6})");
    }

    let odd = HilbertBasisConfig::antisymmetric(1.0, 4)?;
    println!("odd basis at ±0.3: {:?} / {:?}", eval_basis(&odd, &[0.3]).as_slice(), eval_basis(&odd, &[-0.3]).as_slice());

    let two_d = HilbertBasisConfig::smallest(vec![1.0, 2.0], 6)?;
    println!("2-D eigenvalues: {:?}", eigenvalues(&two_d).as_slice());
    Ok(())
}
