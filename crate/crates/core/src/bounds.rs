//! Phase-error upper bound, asymptotic key rate and rate sweeps.

use std::io::Write;

use rayon::prelude::*;

use crate::source::{coherent_pchar, t_param, CoherentSourceSpec, PhotonStats};
use crate::{Error, Result};

/// `λ = 3 + √5`, the coefficient tying phase errors to bit errors.
pub const LAMBDA: f64 = 3.0 + 2.236_067_977_499_79;

/// Exact CSV header of a sweep.
pub const SWEEP_CSV_HEADER: &str = "eta,mu,a_percent,e_bit,Q,f_EC,t,sU1,sU3,sUge2,eph_upper,R";

/// Grid bounds and density for [`optimize_mu`].
pub const MU_GRID_MIN: f64 = 1e-6;
pub const MU_GRID_MAX: f64 = 1.0;
pub const MU_GRID_POINTS: usize = 400;
const GOLDEN_REL_WIDTH: f64 = 1e-6;

/// Binary entropy, saturated at 1 above one half.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::domain("x", x, "[0, 1]"));
    }
    Ok(entropy_unchecked(x))
}

fn entropy_unchecked(x: f64) -> f64 {
    if x > 0.5 {
        1.0
    } else if x <= 0.0 {
        0.0
    } else {
        -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
    }
}

/// Upper bounds on `Pr{wt(z)=1}`, `Pr{wt(z)=3}` and `Pr{wt(z)≥2}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SBounds {
    pub t: f64,
    pub s1: f64,
    pub s3: f64,
    pub s_ge2: f64,
}

/// Unclamped polynomials in `t`.
pub fn s_bounds_raw(stats: &PhotonStats) -> SBounds {
    let t = t_param(stats);
    SBounds {
        t,
        s1: stats.q1 + 3.0 * t,
        s3: stats.q3 + t.powi(3) + 6.0 * t * t + 3.0 * t,
        s_ge2: stats.q2 + t.powi(3) + 9.0 * t * t + 6.0 * t,
    }
}

/// The bounds clamped to `[0, 1]`.
pub fn s_bounds(stats: &PhotonStats) -> SBounds {
    let raw = s_bounds_raw(stats);
    SBounds {
        t: raw.t,
        s1: raw.s1.clamp(0.0, 1.0),
        s3: raw.s3.clamp(0.0, 1.0),
        s_ge2: raw.s_ge2.clamp(0.0, 1.0),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SecurityBound {
    pub t: f64,
    pub s_u1: f64,
    pub s_u3: f64,
    pub s_uge2: f64,
    /// Phase-error bound before clamping.
    pub eph_raw: f64,
    /// Phase-error bound clamped to `[0, 1]`.
    pub eph_upper: f64,
}

/// `e_ph^U = λ e_bit + (λ √(s1 s3) + s_{≥2}) / Q`.
pub fn phase_error_bound(q: f64, ebit: f64, stats: &PhotonStats) -> Result<SecurityBound> {
    if q == 0.0 {
        return Err(Error::NoDetections);
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::domain("Q", q, "(0, 1]"));
    }
    if !(0.0..=1.0).contains(&ebit) {
        return Err(Error::domain("e_bit", ebit, "[0, 1]"));
    }
    let s = s_bounds(stats);
    let eph_raw = LAMBDA * ebit + (LAMBDA * (s.s1 * s.s3).sqrt() + s.s_ge2) / q;
    Ok(SecurityBound {
        t: s.t,
        s_u1: s.s1,
        s_u3: s.s3,
        s_uge2: s.s_ge2,
        eph_raw,
        eph_upper: eph_raw.clamp(0.0, 1.0),
    })
}

/// Secret key rate per pulse, `max(0, Q (1 − f_EC − h(e_ph^U)) / 3)`.
pub fn key_rate(q: f64, f_ec: f64, eph_upper: f64) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    let h = entropy_unchecked(eph_upper.clamp(0.0, 1.0));
    (q * (1.0 - f_ec - h) / 3.0).max(0.0)
}

/// Detection rate of the coherent model, `2ημ e^{−2ημ}`.
pub fn closed_form_q(eta: f64, mu: f64) -> f64 {
    let m = 2.0 * eta * mu;
    m * (-m).exp()
}

/// How the error-correction cost is charged.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EcCost {
    /// Multiplier on `h(e_bit)`; 1 is the Shannon limit.
    pub efficiency: f64,
}

impl Default for EcCost {
    fn default() -> Self {
        EcCost { efficiency: 1.0 }
    }
}

impl EcCost {
    pub fn f_ec(&self, ebit: f64) -> f64 {
        self.efficiency * entropy_unchecked(ebit)
    }
}

/// One row of a rate sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KeyRatePoint {
    pub eta: f64,
    pub mu: f64,
    pub a: f64,
    pub ebit: f64,
    pub q: f64,
    pub f_ec: f64,
    pub bound: SecurityBound,
    pub rate: f64,
}

impl KeyRatePoint {
    pub fn csv_row(&self) -> String {
        let b = &self.bound;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.eta,
            self.mu,
            self.a,
            self.ebit,
            self.q,
            self.f_ec,
            b.t,
            b.s_u1,
            b.s_u3,
            b.s_uge2,
            b.eph_upper,
            self.rate
        )
    }
}

fn check_sweep_inputs(eta: f64, a: f64, ebit: f64) -> Result<()> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::domain("eta", eta, "(0, 1]"));
    }
    if !(0.0..100.0).contains(&a) {
        return Err(Error::domain("a", a, "[0, 100)"));
    }
    if !(0.0..=1.0).contains(&ebit) {
        return Err(Error::domain("e_bit", ebit, "[0, 1]"));
    }
    Ok(())
}

/// Evaluates the coherent-source pipeline at one operating point.
pub fn evaluate_point(eta: f64, mu: f64, a: f64, ebit: f64, ec: EcCost) -> Result<KeyRatePoint> {
    check_sweep_inputs(eta, a, ebit)?;
    let stats = coherent_pchar(&CoherentSourceSpec::new(mu, a, true)?)?;
    let q = closed_form_q(eta, mu);
    let f_ec = ec.f_ec(ebit);
    let bound = match phase_error_bound(q, ebit, &stats) {
        Ok(b) => b,
        // Q underflowed to zero: nothing is detected, so nothing is secret.
        Err(Error::NoDetections) => {
            let s = s_bounds(&stats);
            SecurityBound {
                t: s.t,
                s_u1: s.s1,
                s_u3: s.s3,
                s_uge2: s.s_ge2,
                eph_raw: f64::INFINITY,
                eph_upper: 1.0,
            }
        }
        Err(e) => return Err(e),
    };
    Ok(KeyRatePoint {
        eta,
        mu,
        a,
        ebit,
        q,
        f_ec,
        bound,
        rate: key_rate(q, f_ec, bound.eph_upper),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MuOptimum {
    pub mu: f64,
    pub rate: f64,
    /// False when every grid point gives zero rate; `mu` is then the grid
    /// minimum.
    pub positive: bool,
}

/// The log-spaced intensity grid scanned by [`optimize_mu`].
pub fn mu_grid() -> Vec<f64> {
    log_grid(MU_GRID_MIN, MU_GRID_MAX, MU_GRID_POINTS)
}

pub fn log_grid(start: f64, stop: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![start];
    }
    let (l0, l1) = (start.ln(), stop.ln());
    (0..count)
        .map(|i| {
            if i == 0 {
                start
            } else if i == count - 1 {
                stop
            } else {
                (l0 + (l1 - l0) * i as f64 / (count - 1) as f64).exp()
            }
        })
        .collect()
}

pub fn linear_grid(start: f64, stop: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![start];
    }
    (0..count)
        .map(|i| {
            if i == count - 1 {
                stop
            } else {
                start + (stop - start) * i as f64 / (count - 1) as f64
            }
        })
        .collect()
}

/// Maximizes the key rate over μ: a log grid scan followed by golden-section
/// refinement on the bracket around the best grid point.
pub fn optimize_mu(eta: f64, a: f64, ebit: f64, ec: EcCost) -> Result<MuOptimum> {
    check_sweep_inputs(eta, a, ebit)?;
    if ebit > 0.5 {
        return Err(Error::domain("e_bit", ebit, "[0, 0.5]"));
    }
    let rate = |mu: f64| evaluate_point(eta, mu, a, ebit, ec).map(|p| p.rate);
    let grid = mu_grid();
    let rates: Vec<f64> = grid.iter().map(|&mu| rate(mu)).collect::<Result<_>>()?;
    let (best, &best_rate) =
        rates.iter().enumerate().fold(
            (0, &rates[0]),
            |acc, (i, r)| if *r > *acc.1 { (i, r) } else { acc },
        );
    if best_rate <= 0.0 {
        return Ok(MuOptimum {
            mu: grid[0],
            rate: 0.0,
            positive: false,
        });
    }
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let (mu, r) = golden_section_max(lo, hi, |mu| rate(mu).unwrap_or(0.0));
    // The refinement must never lose to the grid.
    let (mu, r) = if r >= best_rate {
        (mu, r)
    } else {
        (grid[best], best_rate)
    };
    Ok(MuOptimum {
        mu,
        rate: r,
        positive: true,
    })
}

/// Golden-section search for the maximum of a unimodal `f` on `[lo, hi]`,
/// stopping at relative bracket width [`GOLDEN_REL_WIDTH`].
pub fn golden_section_max(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > GOLDEN_REL_WIDTH * 0.5 * (hi + lo).abs() {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MuPolicy {
    Fixed(f64),
    Optimized,
}

/// One point per `(η, a)` pair, η outer and `a` inner.
pub fn sweep(
    eta_grid: &[f64],
    a_list: &[f64],
    ebit: f64,
    policy: MuPolicy,
    ec: EcCost,
) -> Result<Vec<KeyRatePoint>> {
    if eta_grid.is_empty() || a_list.is_empty() {
        return Err(Error::Usage("sweep grids must be non-empty".into()));
    }
    let pairs: Vec<(f64, f64)> = eta_grid
        .iter()
        .flat_map(|&eta| a_list.iter().map(move |&a| (eta, a)))
        .collect();
    pairs
        .par_iter()
        .map(|&(eta, a)| {
            let mu = match policy {
                MuPolicy::Fixed(mu) => mu,
                MuPolicy::Optimized => optimize_mu(eta, a, ebit, ec)?.mu,
            };
            evaluate_point(eta, mu, a, ebit, ec)
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(points: &[KeyRatePoint], mut out: W) -> Result<()> {
    writeln!(out, "{SWEEP_CSV_HEADER}")?;
    for p in points {
        writeln!(out, "{}", p.csv_row())?;
    }
    Ok(())
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    // Values below were evaluated at 30 digits with an arbitrary-precision
    // library, independently of this module.
    const H_011: f64 = 0.499915958164527995640;
    const H_001: f64 = 0.080793135895911172825;
    const H_01: f64 = 0.468995593589281221254;

    fn coherent(mu: f64, a: f64) -> PhotonStats {
        coherent_pchar(&CoherentSourceSpec::new(mu, a, true).unwrap()).unwrap()
    }

    #[test]
    fn lambda_value() {
        assert_abs_diff_eq!(LAMBDA, 3.0 + 5f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn entropy_values() {
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.7).unwrap(), 1.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 1.0);
        assert_abs_diff_eq!(binary_entropy(0.11).unwrap(), H_011, epsilon = 1e-15);
        assert_abs_diff_eq!(binary_entropy(0.01).unwrap(), H_001, epsilon = 1e-15);
        assert!(binary_entropy(-0.01).is_err());
        assert!(binary_entropy(1.01).is_err());
    }

    #[test]
    fn s_bounds_zero_t_and_clamp() {
        let s = PhotonStats::new(0.8, 0.8, 0.8, 0.8, 0.3, 0.05, 0.004).unwrap();
        let b = s_bounds(&s);
        assert_eq!((b.s1, b.s3, b.s_ge2), (0.3, 0.004, 0.05));

        let b = s_bounds(&coherent(0.1, 0.0));
        assert_abs_diff_eq!(b.s1, 0.259181779318282, epsilon = 1e-14);
        assert_abs_diff_eq!(b.s3, 0.003599493183089, epsilon = 1e-14);
        assert_abs_diff_eq!(b.s_ge2, 0.036936313113767, epsilon = 1e-14);

        let extreme = PhotonStats::new(0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0).unwrap();
        let raw = s_bounds_raw(&extreme);
        assert_abs_diff_eq!(raw.s3, 1.140625, epsilon = 1e-15);
        assert_eq!(s_bounds(&extreme).s3, 1.0);
    }

    #[test]
    fn phase_error_cases() {
        let clean = PhotonStats::new(0.8, 0.8, 0.8, 0.8, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(phase_error_bound(0.1, 0.0, &clean).unwrap().eph_upper, 0.0);

        let q = closed_form_q(0.1, 0.1);
        let b = phase_error_bound(q, 0.01, &coherent(0.1, 0.0)).unwrap();
        assert_abs_diff_eq!(b.eph_raw, 10.0944916316903545, epsilon = 1e-9 * 10.1);
        assert_eq!(b.eph_upper, 1.0);

        assert!(matches!(
            phase_error_bound(0.0, 0.01, &clean),
            Err(Error::NoDetections)
        ));
        assert!(phase_error_bound(0.1, 1.5, &clean).is_err());
    }

    #[test]
    fn doubling_q_halves_additive_term() {
        let s = coherent(0.05, 3.0);
        let b1 = phase_error_bound(0.2, 0.01, &s).unwrap();
        let b2 = phase_error_bound(0.4, 0.01, &s).unwrap();
        let base = LAMBDA * 0.01;
        assert_abs_diff_eq!(
            b2.eph_raw - base,
            (b1.eph_raw - base) / 2.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn key_rate_cases() {
        assert_eq!(key_rate(0.3, 0.08, 0.5), 0.0);
        assert_eq!(key_rate(0.3, 0.08, 0.7), 0.0);
        assert_eq!(key_rate(0.0, 0.0, 0.0), 0.0);
        let r = key_rate(0.02, binary_entropy(0.01).unwrap(), 0.1);
        assert_abs_diff_eq!(r, 0.02 * (1.0 - H_001 - H_01) / 3.0, epsilon = 1e-17);
        assert_abs_diff_eq!(r, 0.003001408470098717, epsilon = 1e-15);
    }

    #[test]
    fn detection_rate_formula() {
        assert_abs_diff_eq!(
            closed_form_q(0.1, 0.1),
            0.019603973466135106,
            epsilon = 1e-16
        );
        assert!(closed_form_q(1e-9, 1e-9) < 1e-17);
        // Grid scan locates the maximum at ημ = 1/2.
        let best = linear_grid(0.01, 2.0, 20001)
            .into_iter()
            .map(|mu| (mu, closed_form_q(1.0, mu)))
            .fold((0.0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
        assert_abs_diff_eq!(best.0, 0.5, epsilon = 1e-3);
        assert_abs_diff_eq!(best.1, (-1f64).exp(), epsilon = 1e-8);
    }

    #[test]
    fn optimum_at_unit_transmission() {
        let opt = optimize_mu(1.0, 0.0, 0.01, EcCost::default()).unwrap();
        assert!(opt.positive && opt.rate > 0.0);
        assert!((0.001..=0.1).contains(&opt.mu), "{}", opt.mu);
        // Re-scan: no grid point beats the optimum.
        for mu in mu_grid() {
            let r = evaluate_point(1.0, mu, 0.0, 0.01, EcCost::default())
                .unwrap()
                .rate;
            assert!(r <= opt.rate, "mu={mu} r={r} > {}", opt.rate);
        }
    }

    #[test]
    fn infeasible_when_error_correction_eats_everything() {
        let opt = optimize_mu(0.5, 0.0, 0.2, EcCost::default()).unwrap();
        assert!(!opt.positive);
        assert_eq!(opt.rate, 0.0);
        assert_eq!(opt.mu, MU_GRID_MIN);
    }

    #[test]
    fn optimal_rate_decreases_with_fluctuation() {
        for eta in [1.0, 0.1, 0.01] {
            let rates: Vec<f64> = [0.0, 1.0, 3.0, 5.0]
                .iter()
                .map(|&a| optimize_mu(eta, a, 0.01, EcCost::default()).unwrap().rate)
                .collect();
            assert!(rates.windows(2).all(|w| w[0] >= w[1]), "{rates:?}");
        }
    }

    #[test]
    fn sweep_ordering_and_purity() {
        let points = sweep(
            &[0.5, 1e-6, 0.5],
            &[0.0, 1.0, 3.0, 5.0],
            0.01,
            MuPolicy::Optimized,
            EcCost::default(),
        )
        .unwrap();
        assert_eq!(points.len(), 12);
        assert_eq!(points[1].eta, 0.5);
        assert_eq!(points[1].a, 1.0);
        assert_eq!(&points[0..4], &points[8..12]);
        assert!(points[4..8].iter().all(|p| p.rate == 0.0));
        assert!(points[0..4].windows(2).all(|w| w[0].rate >= w[1].rate));
        assert!(sweep(&[], &[0.0], 0.01, MuPolicy::Optimized, EcCost::default()).is_err());
    }

    #[test]
    fn csv_header_and_round_trip_formatting() {
        let p = evaluate_point(0.3, 0.01, 1.0, 0.01, EcCost::default()).unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&[p], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), SWEEP_CSV_HEADER);
        let fields: Vec<f64> = lines
            .next()
            .unwrap()
            .split(',')
            .map(|f| f.parse().unwrap())
            .collect();
        assert_eq!(fields.len(), 12);
        assert_eq!(fields[4], p.q);
        assert_eq!(fields[11], p.rate);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn stats() -> impl Strategy<Value = PhotonStats> {
            (
                0.5f64..1.0,
                0.0f64..0.05,
                0.0f64..0.3,
                0.0f64..1.0,
                0.0f64..1.0,
            )
                .prop_map(|(p, gap, q1, f2, f3)| {
                    let q2 = q1 * f2;
                    PhotonStats::new(p - gap, p, p - gap, p, q1, q2, q2 * f3).unwrap()
                })
        }

        proptest! {
            #[test]
            fn eph_monotone(
                s in stats(), q in 0.01f64..1.0, e in 0.0f64..0.2,
                de in 0.0f64..0.1, dq in 0.0f64..0.1, dgap in 0.0f64..0.05
            ) {
                let base = phase_error_bound(q, e, &s).unwrap().eph_raw;
                prop_assert!(phase_error_bound(q, e + de, &s).unwrap().eph_raw >= base);
                let more_q = (q * (1.0 + dq)).min(1.0);
                prop_assert!(phase_error_bound(more_q, e, &s).unwrap().eph_raw <= base + 1e-15);
                let mut tails = s;
                tails.q1 = (s.q1 + dq).min(1.0);
                prop_assert!(phase_error_bound(q, e, &tails).unwrap().eph_raw >= base);
                let mut wider = s;
                wider.p_l0 = (s.p_l0 - dgap).max(0.0);
                wider.p_l1 = wider.p_l0;
                prop_assert!(phase_error_bound(q, e, &wider).unwrap().eph_raw >= base - 1e-15);
            }

            #[test]
            fn rate_monotone(q in 0.0f64..1.0, f in 0.0f64..0.5, e in 0.0f64..0.5, de in 0.0f64..0.2) {
                let r = key_rate(q, f, e);
                prop_assert!(r >= 0.0);
                prop_assert!(key_rate(q, f, e + de) <= r);
                prop_assert!(key_rate(q, f + de, e) <= r);
            }
        }
    }
}
