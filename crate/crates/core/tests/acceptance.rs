//! Acceptance suite: one PASS/FAIL line per criterion, followed by an
//! overall assertion. Oracles are computed here, independently of the
//! library code paths they check.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use psr::bloch::{self, FieldPair};
use psr::eigenwell::{self, IterationOptions, WellSpec};
use psr::master;
use psr::profile::{
    self, CenterData, ConservedPair, FluxState, Formulation, ProfileGrid, ProfileOptions, SolitonTag,
};
use psr::run::{self, Command, RunRequest};
use psr::scenario::{Scenario, ScenarioSet};
use psr::units::{self, DimensionlessParams};

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

fn criterion(n: usize, title: &str, f: impl FnOnce() -> Verdict) -> bool {
    let start = Instant::now();
    let v = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Verdict::new(false, format!("panicked: {msg}"))
    });
    println!(
        "criterion {n:>2} {} {title}: {} [{:.2} s]",
        if v.pass { "PASS" } else { "FAIL" },
        v.detail,
        start.elapsed().as_secs_f64()
    );
    v.pass
}

fn info(text: impl AsRef<str>) {
    println!("             info {}", text.as_ref());
}

fn preset(name: &str) -> Scenario {
    ScenarioSet::builtin().resolve(name, &[], None).expect("preset resolves")
}

fn fig1_center() -> CenterData {
    CenterData::stationary(1e-4, 1.0, ConservedPair::new(-1.0, 0.01))
}

fn fig3_center() -> CenterData {
    CenterData::stationary(0.01, 0.005, ConservedPair::new(-1.8, 0.0))
}

fn para_h2() -> DimensionlessParams {
    DimensionlessParams::para_h2(1000.0, 10.0)
}

fn preset_grid(name: &str) -> ProfileGrid {
    let s = preset(name);
    let pc = &s.profile;
    profile::integrate_profile(&pc.center, pc.span, &s.params, pc.formulation, &pc.options).expect("preset integrates")
}

/// Bloch matrix assembled from its definition, solved by full-pivot LU.
fn bloch_oracle(e: [f64; 4], p: &DimensionlessParams) -> Option<Vector3<f64>> {
    let (r, l) = (e[0] * e[0] + e[1] * e[1], e[2] * e[2] + e[3] * e[3]);
    let x = e[0] * e[2] - e[1] * e[3];
    let y = e[0] * e[3] + e[1] * e[2];
    let a = 2.0 * p.gamma_minus * (r + l);
    let (b, c) = (-4.0 * y, 4.0 * x);
    let antisym = Matrix3::new(0.0, a, -b, -a, 0.0, c, b, -c, 0.0);
    let ratio = p.tau1 / p.tau2;
    let m = p.tau1 * antisym - Matrix3::from_diagonal(&Vector3::new(ratio, ratio, 1.0));
    m.full_piv_lu().solve(&Vector3::new(0.0, 0.0, 1.0))
}

fn max_relative_difference(a: &ProfileGrid, b: &ProfileGrid) -> f64 {
    a.points
        .iter()
        .zip(&b.points)
        .map(|(p, q)| {
            let dr = (p.r - q.r).abs() / p.r.abs().max(f64::MIN_POSITIVE);
            let dl = (p.l - q.l).abs() / p.l.abs().max(f64::MIN_POSITIVE);
            dr.max(dl)
        })
        .fold(0.0, f64::max)
}

/// Numerov integration of `psi'' = f psi` from the left end; returns `psi`.
fn shoot(q: &[f64], dx: f64, h_sq: f64) -> Vec<f64> {
    let n = q.len();
    let c = dx * dx / 12.0;
    let f: Vec<f64> = q.iter().map(|v| (h_sq + v).min(6.0 / (dx * dx))).collect();
    let mut psi = vec![0.0; n];
    psi[1] = 1e-12;
    for i in 1..n - 1 {
        let next = (2.0 * psi[i] * (1.0 + 5.0 * c * f[i]) - psi[i - 1] * (1.0 - c * f[i - 1])) / (1.0 - c * f[i + 1]);
        psi[i + 1] = next;
        if psi[i + 1].abs() > 1e200 {
            let s = 1e-200;
            for v in psi.iter_mut().take(i + 2) {
                *v *= s;
            }
        }
    }
    psi
}

fn sign_changes(psi: &[f64]) -> usize {
    let peak = psi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut last = 0.0;
    let mut n = 0;
    for v in psi {
        if v.abs() <= 1e-10 * peak {
            continue;
        }
        if last != 0.0 && last * v < 0.0 {
            n += 1;
        }
        last = *v;
    }
    n
}

fn fit_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn c1_bloch_oracle() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x0b10_c4e5);
    let (mut worst, mut worst_norm, mut r3_range) = (0.0f64, 0.0f64, (f64::INFINITY, f64::NEG_INFINITY));
    let mut failures = 0usize;
    // norm excess split by whether T2 <= 2 T1 (the physical relaxation regime)
    let (mut norm_physical, mut norm_other, mut excess_physical, mut excess_other) = (0.0f64, 0.0f64, 0usize, 0usize);
    for _ in 0..100_000 {
        let p = DimensionlessParams::new(
            rng.gen_range(1.0..=20.0),
            rng.gen_range(0.1..=1.0),
            rng.gen_range(1.0..=1e3),
            rng.gen_range(0.1..=1e2),
        );
        let e: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-10.0..=10.0));
        let closed = bloch::steady_state_closed_form(&FieldPair { e }, &p);
        let Some(o) = bloch_oracle(e, &p) else {
            failures += 1;
            continue;
        };
        let scale = o.amax();
        let err = [closed.r1 - o[0], closed.r2 - o[1], closed.r3 - o[2]].iter().map(|d| d.abs()).fold(0.0, f64::max) / scale;
        worst = worst.max(err);
        let norm = closed.norm_sq();
        worst_norm = worst_norm.max(norm);
        let excess = norm > 1.0 + 1e-12;
        if p.tau2 <= 2.0 * p.tau1 {
            norm_physical = norm_physical.max(norm);
            excess_physical += excess as usize;
        } else {
            norm_other = norm_other.max(norm);
            excess_other += excess as usize;
        }
        r3_range = (r3_range.0.min(closed.r3), r3_range.1.max(closed.r3));
    }
    let elapsed = start.elapsed();
    info(format!(
        "|r|^2 > 1 + 1e-12 in {excess_physical} samples with tau2 <= 2 tau1 (max |r|^2 {norm_physical:.12}) and {excess_other} with tau2 > 2 tau1 (max {norm_other:.3})"
    ));
    let pass = failures == 0
        && worst <= 1e-10
        && r3_range.0 >= -1.0
        && r3_range.1 <= 0.0
        && worst_norm <= 1.0 + 1e-12
        && elapsed < Duration::from_secs(10);
    Verdict::new(
        pass,
        format!(
            "1e5 samples, max relative deviation {worst:.2e} (<= 1e-10), r3 in [{:.6}, {:.3e}], max |r|^2 - 1 = {:.2e} (<= 1e-12), {:.2} s (< 10 s)",
            r3_range.0,
            r3_range.1,
            worst_norm - 1.0,
            elapsed.as_secs_f64()
        ),
    )
}

fn c2_formulation_equivalence() -> Verdict {
    let p = para_h2();
    let opts = ProfileOptions::with_tol(1e-12).samples(2001);
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, c) in [("fig1", fig1_center()), ("fig3", fig3_center())] {
        let start = Instant::now();
        let four = profile::integrate_profile(&c, (0.0, 20.0), &p, Formulation::FourComponent, &opts);
        let flux = match profile::integrate_profile(&c, (0.0, 20.0), &p, Formulation::ReducedFlux, &opts) {
            Err(e @ psr::PsrError::Singularity { .. }) if c.hl.l == 0.0 => {
                // with l = 0 the amplitudes may cross zero; same equations in amplitude form
                info(format!("{name}: flux form stops ({e}); comparing the amplitude form of the reduced equations"));
                profile::integrate_profile(&c, (0.0, 20.0), &p, Formulation::Reduced, &opts)
            }
            other => other,
        };
        let elapsed = start.elapsed();
        match (four, flux) {
            (Ok(a), Ok(b)) => {
                let d = max_relative_difference(&a, &b);
                let ok = d <= 1e-6 && elapsed < Duration::from_secs(30);
                pass &= ok;
                parts.push(format!("{name} max relative |dR|,|dL| = {d:.3e} (<= 1e-6) in {:.2} s", elapsed.as_secs_f64()));
            }
            (a, b) => {
                pass = false;
                let e = a.err().or(b.err()).map(|e| e.to_string()).unwrap_or_default();
                parts.push(format!("{name} integration failed: {e}"));
            }
        }
    }
    Verdict::new(pass, parts.join("; "))
}

fn c3_conservation() -> Verdict {
    let p = para_h2();
    let grid = profile::integrate_profile(
        &fig1_center(),
        (0.0, 30.0),
        &p,
        Formulation::FourComponent,
        &ProfileOptions::with_tol(1e-12).samples(3001),
    )
    .expect("four-component integration");
    let report = profile::conserved_quantities(&grid);

    // exact invariants of the four-component system
    let w0 = grid.points[0].state.w_prime();
    let w_drift = grid.points.iter().map(|q| (q.state.w_prime() - w0).abs()).fold(0.0, f64::max);
    let (jr0, jl0) = (grid.points[0].state.flux_r(), grid.points[0].state.flux_l());
    let j_drift = grid
        .points
        .iter()
        .map(|q| (q.state.flux_r() - jr0).abs().max((q.state.flux_l() - jl0).abs()))
        .fold(0.0, f64::max);
    info(format!("four-component W' drift over [0, 30]: {w_drift:.3e}; separate flux J_R, J_L drift {j_drift:.3e}"));

    // the reduced second derivatives hold pointwise with local (h, l)
    let mut identity = 0.0f64;
    for q in &grid.points {
        let hl = q.state.conserved().expect("R + L above floor");
        let dd = profile::rhs_reduced(q.xi, &FluxState { r: q.r, l: q.l, dr: q.dr, dl: q.dl }, &hl, &p)
            .expect("reduced right-hand side");
        let s = q.state;
        let acc = profile::rhs_four_component(&s, &p).de;
        let r_dd = 2.0 * (s.de[0] * s.de[0] + s.de[1] * s.de[1] + s.e[0] * acc[0] + s.e[1] * acc[1]);
        let l_dd = 2.0 * (s.de[2] * s.de[2] + s.de[3] * s.de[3] + s.e[2] * acc[2] + s.e[3] * acc[3]);
        let scale = 1.0 + r_dd.abs().max(l_dd.abs());
        identity = identity.max((dd.dr - r_dd).abs() / scale).max((dd.dl - l_dd).abs() / scale);
    }
    info(format!("pointwise identity of reduced R'', L'' with local h(xi), l(xi): max deviation {identity:.3e}"));

    let pass = report.h_drift < 1e-8 && report.l_drift < 1e-8;
    Verdict::new(
        pass,
        format!(
            "reconstructed h drift {:.3e}, l drift {:.3e} (< 1e-8) over [0, 30] at tol 1e-12",
            report.h_drift, report.l_drift
        ),
    )
}

fn c4_fig1_reproduction() -> Verdict {
    let s = preset("fig1");
    let grid = preset_grid("fig1");
    let period = profile::detect_period(&grid);
    let report = profile::extract_solitons_with(&grid, s.profile.segment_tol, s.profile.pairing_fraction);
    let tags: Vec<SolitonTag> = report.segments.iter().map(|x| x.tag).collect();
    let alternating = tags.len() >= 4
        && tags.iter().all(|t| matches!(t, SolitonTag::Emitter | SolitonTag::Absorber))
        && tags.windows(2).all(|w| w[0] != w[1]);
    let min_deta = grid.points.iter().map(|q| q.deta).fold(f64::INFINITY, f64::min);
    let (cv, per) = period.as_ref().map(|p| (p.cv, p.period)).unwrap_or((f64::NAN, f64::NAN));
    let pass = cv < 0.01 && alternating && min_deta >= 0.0;
    let chain = report.chain();
    let shown: String = chain.chars().take(23).collect();
    Verdict::new(
        pass,
        format!(
            "period {per:.5} with CV {:.3e} (< 1%), {} segments {shown}... alternating = {alternating}, min deta/dxi {min_deta:.3e} (>= 0)",
            cv,
            tags.len()
        ),
    )
}

fn c5_degeneracy_and_activity() -> Verdict {
    let g4 = preset_grid("fig4");
    let max_r = g4.max_r();
    let split = g4.points.iter().map(|q| (q.r - q.l).abs()).fold(0.0, f64::max);
    let g6 = preset_grid("fig6");
    let deta = g6.max_deta();
    let ok4 = split <= 1e-6 * max_r;
    let ok6 = (0.1..=2.0).contains(&deta);
    Verdict::new(
        ok4 && ok6,
        format!(
            "fig4 max |R-L| = {split:.3e} (<= 1e-6 x max R = {:.3e}) ({}); fig6 max deta/dxi = {deta:.4} in [0.1, 2] ({})",
            1e-6 * max_r,
            if ok4 { "ok" } else { "violated" },
            if ok6 { "ok" } else { "violated" }
        ),
    )
}

fn c6_swap_symmetry() -> Verdict {
    let s = preset("fig1");
    let pc = &s.profile;
    let a = profile::integrate_profile(&pc.center, pc.span, &s.params, pc.formulation, &pc.options).unwrap();
    let b = profile::integrate_profile(&pc.center.swapped(), pc.span, &s.params, pc.formulation, &pc.options).unwrap();
    let d = a
        .points
        .iter()
        .zip(&b.points)
        .map(|(p, q)| (p.r - q.l).abs().max((p.l - q.r).abs()))
        .fold(0.0, f64::max);
    Verdict::new(d <= 1e-9, format!("max |R - L_swapped|, |L - R_swapped| = {d:.3e} (<= 1e-9) over {} samples", a.len()))
}

fn c7_linear_eigensolver() -> Verdict {
    let start = Instant::now();
    let p = DimensionlessParams::new(15.0, 0.64, 1000.0, 10.0);
    let well = WellSpec::new(10.0, 0.1, p);
    let pot = eigenwell::r3_ansatz(&well);
    let levels = eigenwell::solve_linear_bound_states(&pot, &p, 100).expect("linear levels");
    let (lo, hi) = (0.5 * (p.gamma_plus - p.gamma_minus), 0.5 * p.gamma_plus);

    let in_window = levels.iter().all(|l| l.h_sq > lo && l.h_sq < hi);
    let nodes_ok = levels.iter().all(|l| sign_changes(&l.psi_r) == l.level - 1);

    // dense scan of the shooting mismatch at the right end
    let q: Vec<f64> = pot.g().iter().map(|g| -0.5 * g).collect();
    let dx = pot.xi[1] - pot.xi[0];
    let scan = 4000;
    let mut count = 0;
    let mut last: Option<f64> = None;
    for i in 0..=scan {
        let e = lo + (hi - lo) * (i as f64 + 0.5) / (scan as f64 + 1.0);
        let end = *shoot(&q, dx, e).last().unwrap();
        if let Some(prev) = last {
            if prev * end < 0.0 {
                count += 1;
            }
        }
        last = Some(end);
    }
    let count_ok = count == levels.len();

    let mut worst_tail = 0.0f64;
    let mut tails_ok = true;
    for l in &levels {
        let kappa = (l.h_sq - lo).sqrt();
        let tp = l.xi[l.w.iter().rposition(|w| *w < 0.0).unwrap_or(0)];
        let end = *l.xi.last().unwrap();
        let pts: Vec<(f64, f64)> = l
            .xi
            .iter()
            .zip(&l.psi_r)
            .filter(|(x, v)| **x >= tp + 1.0 / kappa && **x <= end - 3.0 / kappa && v.abs() > 0.0)
            .map(|(x, v)| (*x, v.abs().ln()))
            .collect();
        if pts.len() < 10 {
            tails_ok = false;
            continue;
        }
        let rel = (fit_slope(&pts) + kappa).abs() / kappa;
        worst_tail = worst_tail.max(rel);
    }
    tails_ok &= worst_tail <= 0.05;
    let elapsed = start.elapsed();
    let pass = !levels.is_empty() && in_window && nodes_ok && count_ok && tails_ok && elapsed < Duration::from_secs(20);
    let hs: Vec<String> = levels.iter().map(|l| format!("{:.6}", l.h_sq)).collect();
    Verdict::new(
        pass,
        format!(
            "{} levels h^2 = [{}] in ({lo}, {hi}) = {in_window}, nodes k-1 = {nodes_ok}, dense-scan count {count}, worst tail slope error {:.2}% (<= 5%), {:.2} s (< 20 s)",
            levels.len(),
            hs.join(", "),
            100.0 * worst_tail,
            elapsed.as_secs_f64()
        ),
    )
}

fn c8_selfconsistent() -> Verdict {
    let well = WellSpec::new(10.0, 0.5, para_h2());
    let opts = IterationOptions { damping: 0.5, ..IterationOptions::default() };
    let r = eigenwell::selfconsistent_iterate(&well, &ConservedPair::new(-1.0, 0.0), &opts).expect("self-consistent run");
    let mid = r.r3.len() / 2;
    let (centre, e0, e1) = (r.r3[mid], r.r3[0], r.r3[r.r3.len() - 1]);
    let last = r.iterations.last().copied().unwrap_or(f64::NAN);
    let short = eigenwell::selfconsistent_iterate(
        &well,
        &ConservedPair::new(-1.0, 0.0),
        &IterationOptions { max_iter: 3, ..opts },
    );
    let flagged = matches!(&short, Ok(s) if !s.converged);
    let pass = r.converged && r.iterations.len() <= 50 && last < 1e-6 && centre > -0.5 && e0 < -0.95 && e1 < -0.95 && flagged;
    Verdict::new(
        pass,
        format!(
            "converged = {} in {} iterations (<= 50), last change {last:.2e} (< 1e-6), r3 centre {centre:.4} (> -0.5), edges {e0:.4}, {e1:.4} (< -0.95); 3-iteration cap flagged without error = {flagged}",
            r.converged,
            r.iterations.len()
        ),
    )
}

fn c9_static_certification() -> Verdict {
    let p = para_h2();
    let mut pass = true;
    let mut parts = Vec::new();
    let mut check = |label: &str, rms: Result<f64, String>| match rms {
        Ok(v) => {
            let ok = v < 1e-6;
            pass &= ok;
            info(format!("{label}: static residual rms {v:.3e} ({})", if ok { "ok" } else { "above 1e-6" }));
            if !ok {
                parts.push(format!("{label} {v:.2e}"));
            }
        }
        Err(e) => {
            pass = false;
            parts.push(format!("{label} error {e}"));
        }
    };
    for (name, c) in [("fig1 four-component", fig1_center()), ("fig3 four-component", fig3_center())] {
        let g = profile::integrate_profile(&c, (0.0, 20.0), &p, Formulation::FourComponent, &ProfileOptions::with_tol(1e-12).samples(4001))
            .unwrap();
        check(name, master::static_residual(&g, &p).map(|r| r.rms_residual).map_err(|e| e.to_string()));
    }
    for name in ["fig1", "fig3", "fig4", "fig6"] {
        let s = preset(name);
        let g = preset_grid(name);
        check(&format!("{name} reduced"), master::static_residual(&g, &s.params).map(|r| r.rms_residual).map_err(|e| e.to_string()));
    }
    let well = WellSpec::new(10.0, 0.5, p);
    let scf = eigenwell::selfconsistent_iterate(&well, &ConservedPair::new(-1.0, 0.0), &IterationOptions::default()).unwrap();
    let (er, el) = scf.fields();
    check(
        "self-consistent condensate",
        master::static_residual_fields(&scf.xi, &er, &el, &p).map(|r| r.rms_residual).map_err(|e| e.to_string()),
    );

    // refinement study on the four-component solution
    let mut res = Vec::new();
    for n in [1001, 2001, 4001] {
        let g = profile::integrate_profile(&fig1_center(), (0.0, 20.0), &p, Formulation::FourComponent, &ProfileOptions::with_tol(1e-12).samples(n))
            .unwrap();
        res.push(master::static_residual(&g, &p).unwrap().rms_residual);
    }
    let ratios: Vec<f64> = res.windows(2).map(|w| w[0] / w[1]).collect();
    let order_ok = ratios.iter().all(|r| (8.0..=32.0).contains(r));
    pass &= order_ok;
    let summary = format!(
        "halving spacing reduces residual by {} (~16x: {order_ok})",
        ratios.iter().map(|r| format!("{r:.1}x")).collect::<Vec<_>>().join(", ")
    );
    let detail = if parts.is_empty() { summary } else { format!("{summary}; above 1e-6: {}", parts.join(", ")) };
    Verdict::new(pass, detail)
}

fn c10_units() -> Verdict {
    let (spec, _) = units::preset_para_h2();
    let u = units::derive_units(&spec).unwrap();
    let ct0 = u.ct0_mm();
    let e0 = u.e0_sq_tw_per_mm2();
    let ok_ct0 = ((ct0 - 0.03) / 0.03).abs() <= 0.15;
    let ok_e0 = (e0 - 1.0).abs() <= 0.30;
    let mut scaling = 0.0f64;
    for k in [4.0, 100.0, 0.01] {
        let v = units::derive_units(&spec.rescaled_density(k)).unwrap();
        scaling = scaling
            .max((v.t0 * k.sqrt() / u.t0 - 1.0).abs())
            .max((v.l0 * k.sqrt() / u.l0 - 1.0).abs())
            .max((v.e0_sq / k.sqrt() / u.e0_sq - 1.0).abs());
    }
    let ok_scaling = scaling <= 1e-14;
    Verdict::new(
        ok_ct0 && ok_e0 && ok_scaling,
        format!(
            "c t0 = {ct0:.4} mm (0.03 +- 15%), E0^2 = {e0:.4} TW/mm^2 (1 +- 30%), density power laws max deviation {scaling:.1e}"
        ),
    )
}

fn files_equal(a: &std::path::Path, b: &std::path::Path, names: &[&str]) -> Result<(), String> {
    for n in names {
        let x = std::fs::read(a.join(n)).map_err(|e| format!("{n}: {e}"))?;
        let y = std::fs::read(b.join(n)).map_err(|e| format!("{n}: {e}"))?;
        if x != y {
            return Err(format!("{n} differs"));
        }
    }
    Ok(())
}

fn c11_determinism(suite_start: Instant) -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let mut problems = Vec::new();
    for (cmd, name, files) in [
        (Command::Profile, "fig1", vec!["profile.csv", "segments.csv"]),
        (Command::Eigen, "condensate", vec!["levels.csv", "selfconsistent.csv", "level_01.csv"]),
    ] {
        let (a, b) = (tmp.path().join(format!("{name}-a")), tmp.path().join(format!("{name}-b")));
        for d in [&a, &b] {
            let o = run::run(&RunRequest::new(cmd, name, d)).unwrap();
            assert_eq!(o.exit_code, 0);
        }
        if let Err(e) = files_equal(&a, &b, &files) {
            problems.push(format!("{name}: {e}"));
        }
    }
    let (s1, s4) = (tmp.path().join("sweep-1"), tmp.path().join("sweep-4"));
    for (d, t) in [(&s1, 1), (&s4, 4)] {
        let mut req = RunRequest::new(Command::Sweep, "well-size", d);
        req.threads = Some(t);
        run::run(&req).unwrap();
    }
    let mut sweep_files = vec!["sweep.csv".to_string()];
    for i in 0..4 {
        sweep_files.push(format!("cell_{i:04}/levels.csv"));
        sweep_files.push(format!("cell_{i:04}/level_01.csv"));
    }
    let refs: Vec<&str> = sweep_files.iter().map(String::as_str).collect();
    if let Err(e) = files_equal(&s1, &s4, &refs) {
        problems.push(format!("sweep across worker counts: {e}"));
    }
    let total = suite_start.elapsed();
    let pass = problems.is_empty() && total < Duration::from_secs(300);
    Verdict::new(
        pass,
        format!(
            "repeat runs and 1 vs 4 workers byte-identical = {}{}; suite wall time {:.1} s (< 300 s)",
            problems.is_empty(),
            if problems.is_empty() { String::new() } else { format!(" ({})", problems.join("; ")) },
            total.as_secs_f64()
        ),
    )
}

#[test]
fn acceptance_criteria() {
    let start = Instant::now();
    let results = [
        criterion(1, "Bloch closed form vs 3x3 solve", c1_bloch_oracle),
        criterion(2, "reduced-flux vs four-component profiles", c2_formulation_equivalence),
        criterion(3, "conservation of h and l", c3_conservation),
        criterion(4, "regular emitter/absorber chain", c4_fig1_reproduction),
        criterion(5, "degenerate movers and large activity", c5_degeneracy_and_activity),
        criterion(6, "R/L swap symmetry", c6_swap_symmetry),
        criterion(7, "linear bound states of the well", c7_linear_eigensolver),
        criterion(8, "self-consistent condensate", c8_selfconsistent),
        criterion(9, "static master-equation residual", c9_static_certification),
        criterion(10, "para-H2 scale units", c10_units),
        criterion(11, "determinism and runtime", || c11_determinism(start)),
    ];
    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, ok)| !**ok).map(|(i, _)| i + 1).collect();
    println!("acceptance: {} of {} criteria pass", results.len() - failed.len(), results.len());
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
