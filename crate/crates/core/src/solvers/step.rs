use super::Variant;

fn recip_or_inf(x: f64) -> f64 {
    if x > 0.0 {
        1.0 / x
    } else {
        f64::INFINITY
    }
}

/// Default constant step size for each solver.
///
/// * `DpSgd`: `min{1/(10L), 1/(μ + 25L(E−1))}`.
/// * `DpSvrg`: `min{1/(μ + 25L(E−1)), 1/(10L), 1/(L(3+2E)), 1/(μ + 24L(2E−1))}`.
/// * `DpAsvrg`, `μ > 0`: `ηL = min{2/(m/κ + √((m/κ)² + 108(E²−1))),
///   1/(1 + √(1 + 27(E²−1))), (m/((E²−1)²κ))^{1/3}}`.
/// * `DpAsvrg`, `μ = 0`: `ηL = ½·min{1/(1 + √(1 + 18(E²−1))),
///   √(ln S/S)/(3√(E²−1))}`, the second term only for `E > 1` and `S ≥ 2`.
///   The halving keeps the first momentum weight `1 − 2ηL/(1−ηL)` positive.
///
/// Terms that are infinite at `E = 1` are dropped.
pub fn default_step_size(variant: Variant, smoothness: f64, mu: f64, gap: usize, inner_m: usize, stages: usize) -> f64 {
    let l = smoothness;
    let e = gap as f64;
    match variant {
        Variant::DpSgd => (1.0 / (10.0 * l)).min(recip_or_inf(mu + 25.0 * l * (e - 1.0))),
        Variant::DpSvrg => [
            recip_or_inf(mu + 25.0 * l * (e - 1.0)),
            1.0 / (10.0 * l),
            1.0 / (l * (3.0 + 2.0 * e)),
            1.0 / (mu + 24.0 * l * (2.0 * e - 1.0)),
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min),
        Variant::DpAsvrg => {
            let e2 = e * e - 1.0;
            let eta_l = if mu >= super::MU_ZERO {
                let kappa = l / mu;
                let r = inner_m as f64 / kappa;
                let a = 2.0 / (r + (r * r + 108.0 * e2).sqrt());
                let b = 1.0 / (1.0 + (1.0 + 27.0 * e2).sqrt());
                let c = if e2 > 0.0 { (inner_m as f64 / (e2 * e2 * kappa)).cbrt() } else { f64::INFINITY };
                a.min(b).min(c)
            } else {
                let a = 1.0 / (1.0 + (1.0 + 18.0 * e2).sqrt());
                let s = stages as f64;
                let b = if e2 > 0.0 && stages >= 2 { (s.ln() / s).sqrt() / (3.0 * e2.sqrt()) } else { f64::INFINITY };
                0.5 * a.min(b)
            };
            eta_l / l
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_single_gap() {
        assert_eq!(default_step_size(Variant::DpSgd, 4.0, 0.0, 1, 1, 1), 1.0 / 40.0);
    }

    #[test]
    fn svrg_four_term_bracket() {
        let eta = default_step_size(Variant::DpSvrg, 1.0, 0.0, 2, 10, 1);
        assert!((eta - 1.0 / 72.0).abs() < 1e-16);
    }

    #[test]
    fn asvrg_unit_gap() {
        assert_eq!(default_step_size(Variant::DpAsvrg, 1.0, 0.0, 1, 1, 10), 0.25);
        let eta = default_step_size(Variant::DpAsvrg, 1.0, 0.01, 1, 400, 1);
        assert!((eta - 0.25).abs() < 1e-15);
        let eta = default_step_size(Variant::DpAsvrg, 1.0, 0.01, 1, 1000, 1);
        assert!((eta - 0.1).abs() < 1e-15);
    }
}
