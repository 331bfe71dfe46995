//! Total variation, Wasserstein and MMD between two distributions, and the
//! matching Lipschitz constants of a test function.

use rqlab::ipm::IpmSpec;

pub fn run_example() -> rqlab::Result<()> {
    let mu = [0.5, 0.3, 0.2, 0.0];
    let nu = [0.1, 0.2, 0.3, 0.4];
    let f = [0.0, 1.0, 4.0, 9.0];
    let n = mu.len();
    for spec in [
        IpmSpec::tv(n),
        IpmSpec::discrete_wasserstein(n),
        IpmSpec::wasserstein(IpmSpec::line_metric(n), n)?,
    ] {
        let d = spec.distance(&mu, &nu)?;
        let rho = spec.rho(&f)?;
        let gap: f64 = mu.iter().zip(&nu).zip(&f).map(|((a, b), x)| (a - b) * x).sum();
        println!("{:<12} d={d:.4} rho(f)={rho:.4} |mu f - nu f|={:.4} <= {:.4}", spec.kind().to_string(), gap.abs(), rho * d);
    }
    let mmd = IpmSpec::mmd_default(n);
    println!("mmd          d={:.4} d^2={:.4}", mmd.distance(&mu, &nu)?, mmd.mmd_squared(&mu, &nu));
    Ok(())
}

fn main() -> rqlab::Result<()> {
    run_example()
}
