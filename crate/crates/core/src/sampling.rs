//! Seeded random draws from the Lyapunov and chart catalogs, for property
//! sweeps over many (H, M, p) combinations.
//!
//! Charts are drawn inside `[0.25, 2.5]^n` so that every f-divergence stays
//! in its positive domain for all admissible parameters.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::lyapunov::{make_f_divergence, make_quadratic, FDivergenceSpec, LyapunovFunction};
use crate::manifold::{tangent_frame, Chart, TangentFrame};
use crate::{Matrix, Vector};

pub const LYAPUNOV_KINDS: [&str; 4] = ["quadratic", "kl", "kl_shifted", "burg"];
pub const CHART_KINDS: [&str; 5] = ["line", "affine", "polynomial", "paraboloid", "convex_combination"];

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vector {
    Vector::from_fn(n, |_, _| rng.gen_range(lo..hi))
}

/// Random SPD matrix `AᵀA + n·0.1·I` with entries of `A` in `[-1, 1]`.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let a = Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    a.transpose() * &a + Matrix::identity(n, n) * (0.1 * n as f64)
}

pub fn random_lyapunov(rng: &mut ChaCha8Rng, kind: &str, n: usize) -> Result<LyapunovFunction> {
    let x_eq = uniform(rng, n, 0.5, 2.0);
    match kind {
        "quadratic" => make_quadratic(random_spd(rng, n), x_eq),
        "kl" => make_f_divergence(FDivergenceSpec::kl(x_eq)),
        "kl_shifted" => make_f_divergence(FDivergenceSpec::kl_shifted(x_eq)),
        "burg" => make_f_divergence(FDivergenceSpec::burg(x_eq)),
        other => Err(crate::Error::InvalidInput(format!("unknown Lyapunov kind {other}"))),
    }
}

/// Random chart with parameter box `[-0.5, 0.5]^m` (`[0, 1]` for convex
/// combinations). `m` is clamped to `1..n`.
pub fn random_chart(rng: &mut ChaCha8Rng, kind: &str, n: usize, m: usize) -> Result<Chart> {
    let m = m.clamp(1, n - 1);
    let chart = match kind {
        "line" => Chart::line(uniform(rng, n, 1.25, 1.75), uniform(rng, n, -1.0, 1.0))?,
        "affine" => {
            let dirs = Matrix::from_fn(n, m, |_, _| rng.gen_range(-1.0..1.0) / m as f64);
            Chart::affine(uniform(rng, n, 1.25, 1.75), dirs)?
        }
        "polynomial" => Chart::polynomial(vec![
            uniform(rng, n, 1.25, 1.75),
            uniform(rng, n, -1.0, 1.0),
            uniform(rng, n, -1.0, 1.0),
            uniform(rng, n, -0.5, 0.5),
        ])?,
        "paraboloid" => {
            let k = m.min(n - 1);
            let offset = uniform(rng, k + 1, 1.25, 1.75);
            let curvature = rng.gen_range(-1.0..1.0);
            if k + 1 < n {
                // embed the graph in the first k+1 coordinates of an affine copy
                let base = Chart::paraboloid(offset.clone(), curvature)?;
                let tail = uniform(rng, n - k - 1, 1.25, 1.75);
                let mix = Matrix::from_fn(n - k - 1, k + 1, |_, _| rng.gen_range(-0.2..0.2) / (k + 1) as f64);
                let chart = Chart::custom(
                    k,
                    n,
                    {
                        let base = base.clone();
                        let tail = tail.clone();
                        let mix = mix.clone();
                        move |p: &Vector| {
                            let head = base.embed(p).expect("dimension checked");
                            let rest = &tail + &mix * &head;
                            Vector::from_iterator(n, head.iter().chain(rest.iter()).copied())
                        }
                    },
                    Some(std::sync::Arc::new(move |p: &Vector| {
                        let j = base.jac(p).expect("dimension checked");
                        let lower = &mix * &j;
                        let mut out = Matrix::zeros(n, k);
                        out.rows_mut(0, k + 1).copy_from(&j);
                        out.rows_mut(k + 1, n - k - 1).copy_from(&lower);
                        out
                    })),
                )?;
                return chart.with_domain(vec![(-0.5, 0.5); k]);
            }
            Chart::paraboloid(offset, curvature)?
        }
        "convex_combination" => {
            return Chart::convex_combination(uniform(rng, n, 0.5, 2.5), uniform(rng, n, 0.5, 2.5));
        }
        other => return Err(crate::Error::InvalidInput(format!("unknown chart kind {other}"))),
    };
    let m = chart.m();
    chart.with_domain(vec![(-0.5, 0.5); m])
}

/// Uniform point of the chart's parameter box.
pub fn random_param(rng: &mut ChaCha8Rng, chart: &Chart) -> Vector {
    Vector::from_iterator(
        chart.m(),
        chart.param_domain().iter().map(|&(lo, hi)| rng.gen_range(lo..=hi)),
    )
}

/// A catalog function, a chart, and a transversal non-critical point on it.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub h: LyapunovFunction,
    pub chart: Chart,
    pub p: Vector,
    pub frame: TangentFrame,
}

/// Draws scenarios until one has a transversal, non-critical point.
pub fn random_scenario(rng: &mut ChaCha8Rng, h_kind: &str, chart_kind: &str, n: usize, m: usize) -> Result<Scenario> {
    loop {
        let h = random_lyapunov(rng, h_kind, n)?;
        let chart = random_chart(rng, chart_kind, n, m)?;
        for _ in 0..10 {
            let p = random_param(rng, &chart);
            let Ok(frame) = tangent_frame(&chart, &h, &p) else {
                continue;
            };
            if frame.transversality().transversal && frame.grad.norm() >= h.tol_grad(&frame.x) {
                return Ok(Scenario { h, chart, p, frame });
            }
        }
    }
}

/// Draws `H` kind, chart kind, `n ∈ 2..=max_n` and `m ∈ 1..n` uniformly.
pub fn random_catalog_scenario(rng: &mut ChaCha8Rng, max_n: usize, max_m: usize) -> Result<Scenario> {
    let h_kind = LYAPUNOV_KINDS[rng.gen_range(0..LYAPUNOV_KINDS.len())];
    let chart_kind = CHART_KINDS[rng.gen_range(0..CHART_KINDS.len())];
    let n = rng.gen_range(2..=max_n.max(2));
    let m = rng.gen_range(1..=max_m.clamp(1, n - 1));
    random_scenario(rng, h_kind, chart_kind, n, m)
}
