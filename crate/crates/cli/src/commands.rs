//! Each command composes library operations into a report.

use std::fmt::Write as _;

use qs_trotter::brownian::{brownian_coefficients, mc_vacuum_expectation};
use qs_trotter::focksim::{
    compare_with_semigroups, output_gram, simulate_cocycle, weyl_check, weyl_conjugated_vacuum, ProductState, ToyFockConfig,
};
use qs_trotter::json::{coefficients_to_json, matrix_to_json};
use qs_trotter::numkit::{expm, CMatrix};
use qs_trotter::trotter::{convergence_sweep, lie_product};
use qs_trotter::{CoefficientMatrix, Kind};
use serde_json::{json, Value};

use crate::config::{Command, ExperimentConfig, ToySettings};

#[derive(Debug, Clone)]
pub struct Report {
    pub passed: bool,
    pub summary: Vec<String>,
    pub csv: String,
    pub json: Value,
}

fn e(x: f64) -> String {
    format!("{x:.17e}")
}

fn ratio_cells(errors: &[f64]) -> Vec<String> {
    std::iter::once(String::new()).chain(errors.windows(2).map(|w| e(w[1] / w[0]))).collect()
}

fn ratios(errors: &[f64]) -> Vec<Option<f64>> {
    std::iter::once(None).chain(errors.windows(2).map(|w| Some(w[1] / w[0]))).collect()
}

fn verdict(passed: bool) -> &'static str {
    if passed {
        "PASS"
    } else {
        "FAIL"
    }
}

pub fn run(cfg: &ExperimentConfig) -> qs_trotter::Result<Report> {
    let tol = cfg.tol();
    match &cfg.command {
        Command::Check { coefficients, expect } => Ok(check(coefficients, *expect, tol, None)),
        Command::Compose { coefficients, expect } => {
            let composed = CoefficientMatrix::compose_many(coefficients)?;
            Ok(check(std::slice::from_ref(&composed), *expect, tol, Some(&composed)))
        }
        Command::TrotterSweep { f1, f2, f, g, t, n_min, n_max } => {
            let rep = convergence_sweep(f1, f2, f, g, *t, *n_min, *n_max)?;
            let exact = rep.max_error() <= tol;
            let passed = rep.strictly_decreasing() || exact;
            let rate = rep.estimated_rate().map_or("n/a".to_string(), |r| format!("{r:.3}"));
            let summary = vec![
                format!("trotter-sweep {}: {}", rep.description, verdict(passed)),
                format!(
                    "  levels {}..={}, max error {:.3e}, estimated rate {rate}, strictly decreasing {}",
                    n_min,
                    n_max,
                    rep.max_error(),
                    rep.strictly_decreasing()
                ),
            ];
            Ok(Report { passed, summary, csv: rep.to_csv(), json: rep.to_json() })
        }
        Command::LieCheck { z1, z2, t, n_min, n_max } => {
            let rows = (*n_min..=*n_max)
                .map(|n| lie_product(z1, z2, *t, 0.5f64.powi(n as i32)).map(|lp| (n, lp)))
                .collect::<qs_trotter::Result<Vec<_>>>()?;
            let errors: Vec<f64> = rows.iter().map(|(_, lp)| lp.error).collect();
            let rs = ratios(&errors);
            let commuting = errors.iter().all(|x| *x <= tol);
            let first_order = rs.iter().flatten().all(|q| (0.35..=0.65).contains(q));
            let passed = commuting || (first_order && errors.len() > 1);
            let mut csv = String::from("n,h,steps,error,ratio\n");
            for ((n, lp), r) in rows.iter().zip(ratio_cells(&errors)) {
                let _ = writeln!(csv, "{n},{},{},{},{r}", e(0.5f64.powi(*n as i32)), lp.steps, e(lp.error));
            }
            let summary = vec![format!(
                "lie-check: {} (max error {:.3e}, all ratios in [0.35, 0.65]: {first_order}, exact within {tol:e}: {commuting})",
                verdict(passed),
                errors.iter().copied().fold(0.0, f64::max)
            )];
            let json = json!({ "levels": (*n_min..=*n_max).collect::<Vec<_>>(), "errors": errors, "ratios": rs, "t": t });
            Ok(Report { passed, summary, csv, json })
        }
        Command::FockCompare { coefficients, f, g, t, toy, max_ratio } => {
            let rows = toy
                .slots
                .iter()
                .map(|m| {
                    let tc = toy_config(toy, *m, coefficients.dim_h(), coefficients.dim_k())?;
                    let cmp = compare_with_semigroups(coefficients, f, g, *t, &tc)?;
                    let u = simulate_cocycle(coefficients, &tc, *t)?;
                    let gram = output_gram(&u, &ProductState::vacuum(&tc))?;
                    Ok((*m, tc.delta(), cmp.error, gram.dist(&CMatrix::identity(coefficients.dim_h()))))
                })
                .collect::<qs_trotter::Result<Vec<_>>>()?;
            let errors: Vec<f64> = rows.iter().map(|r| r.2).collect();
            let last = *errors.last().expect("at least one slot count");
            let ratio_ok = ratios(&errors).iter().flatten().all(|q| *q <= *max_ratio);
            let passed = last <= tol && ratio_ok;
            let mut csv = String::from("m,delta,error,ratio,vacuum_norm_defect\n");
            for ((m, delta, err, defect), r) in rows.iter().zip(ratio_cells(&errors)) {
                let _ = writeln!(csv, "{m},{},{},{r},{}", e(*delta), e(*err), e(*defect));
            }
            let summary = vec![format!(
                "fock-compare: {} (error {last:.3e} at m = {} against {tol:e}, ratios ≤ {max_ratio}: {ratio_ok}; toy discretization chosen by this tool)",
                verdict(passed),
                rows.last().expect("nonempty").0,
            )];
            let json = json!({
                "slots": toy.slots,
                "errors": errors,
                "ratios": ratios(&errors),
                "vacuum_norm_defect": rows.iter().map(|r| r.3).collect::<Vec<_>>(),
            });
            Ok(Report { passed, summary, csv, json })
        }
        Command::WeylCheck { c, f, g, t, toy, conjugate, max_ratio } => {
            let dim_h = conjugate.as_ref().map_or(1, |(fc, _)| fc.dim_h());
            let mut weyl = Vec::new();
            let mut conj = Vec::new();
            for m in &toy.slots {
                let tc = toy_config(toy, *m, dim_h, c.len())?;
                weyl.push(weyl_check(c, *t, f, g, &tc)?);
                if let Some((fc, dv)) = conjugate {
                    conj.push(weyl_conjugated_vacuum(fc, c, dv, *t, &tc)?.error);
                }
            }
            let gaps: Vec<f64> = weyl.iter().map(|w| (w.analytic - w.toy).norm()).collect();
            let ok = |errs: &[f64]| {
                errs.last().is_none_or(|x| *x <= tol) && ratios(errs).iter().flatten().all(|q| *q <= *max_ratio)
            };
            let passed = ok(&gaps) && ok(&conj);
            let mut csv = String::from("m,analytic_re,analytic_im,toy_re,toy_im,error,ratio");
            csv.push_str(if conj.is_empty() { "\n" } else { ",conjugated_error,conjugated_ratio\n" });
            let conj_ratios = ratio_cells(&conj);
            for (i, ((m, w), r)) in toy.slots.iter().zip(&weyl).zip(ratio_cells(&gaps)).enumerate() {
                let _ = write!(csv, "{m},{},{},{},{},{},{r}", e(w.analytic.re), e(w.analytic.im), e(w.toy.re), e(w.toy.im), e(gaps[i]));
                if !conj.is_empty() {
                    let _ = write!(csv, ",{},{}", e(conj[i]), conj_ratios[i]);
                }
                csv.push('\n');
            }
            let mut summary = vec![format!(
                "weyl-check: {} (closed-form gap {:.3e} at the finest m)",
                verdict(passed),
                gaps.last().copied().unwrap_or(0.0)
            )];
            if let Some(x) = conj.last() {
                summary.push(format!("  conjugated vacuum element vs associated semigroup: {x:.3e}"));
            }
            let json = json!({
                "slots": toy.slots,
                "analytic": weyl.iter().map(|w| [w.analytic.re, w.analytic.im]).collect::<Vec<_>>(),
                "toy": weyl.iter().map(|w| [w.toy.re, w.toy.im]).collect::<Vec<_>>(),
                "errors": gaps,
                "conjugated_errors": conj,
            });
            Ok(Report { passed, summary, csv, json })
        }
        Command::Brownian { example, t, n_paths, n_steps } => {
            let k = brownian_coefficients(example)?.composed.k().clone();
            let target = expm(&k.scale_real(*t))?;
            let est = mc_vacuum_expectation(example, *t, *n_paths, *n_steps, cfg.seed)?;
            let z = est.max_z_score(&target);
            let passed = z <= tol;
            let n = example.dim_h();
            let mut csv = String::from("row,col,estimate_re,estimate_im,target_re,target_im,standard_error,z\n");
            for r in 0..n {
                for c in 0..n {
                    let (a, b, se) = (est.mean[(r, c)], target[(r, c)], est.standard_error[r * n + c]);
                    let zz = if se > 0.0 { (a - b).norm() / se } else { 0.0 };
                    let _ = writeln!(csv, "{r},{c},{},{},{},{},{},{}", e(a.re), e(a.im), e(b.re), e(b.im), e(se), e(zz));
                }
            }
            let summary = vec![format!(
                "brownian: {} ({} noises, {n_paths} paths, {n_steps} steps, seed {}, max |z| = {z:.3} against {tol})",
                verdict(passed),
                example.noises(),
                cfg.seed
            )];
            let json = json!({
                "estimate": matrix_to_json(&est.mean),
                "target": matrix_to_json(&target),
                "standard_error": est.standard_error,
                "max_z": z,
                "seed": cfg.seed,
            });
            Ok(Report { passed, summary, csv, json })
        }
    }
}

fn toy_config(toy: &ToySettings, m: usize, dim_h: usize, dim_k: usize) -> qs_trotter::Result<ToyFockConfig> {
    let cfg = ToyFockConfig::with_budget(toy.horizon, m, dim_h, dim_k, toy.budget)?;
    Ok(if toy.unitarize { cfg } else { cfg.without_unitarization() })
}

fn check(coefficients: &[CoefficientMatrix], expect: Kind, tol: f64, composed: Option<&CoefficientMatrix>) -> Report {
    let mut csv = String::from("index,dim_h,dim_k,isometry_residual,coisometry_residual,isometry_max_eig,coisometry_max_eig,passed\n");
    let mut summary = Vec::new();
    let mut rows = Vec::new();
    let mut passed = true;
    for (i, f) in coefficients.iter().enumerate() {
        let s = f.check_structure(tol);
        let c = f.check_contraction(tol);
        let ok = match expect {
            Kind::Contraction => c.passed(),
            _ => s.passed(),
        };
        passed &= ok;
        let _ = writeln!(
            csv,
            "{i},{},{},{},{},{},{},{ok}",
            f.dim_h(),
            f.dim_k(),
            e(s.isometry),
            e(s.coisometry),
            e(c.isometry_max_eig),
            e(c.coisometry_max_eig)
        );
        summary.push(format!(
            "{} #{i} ({}x{} on k of dim {}): residuals {:.3e} / {:.3e}, top eigenvalues {:.3e} / {:.3e}: {}",
            if composed.is_some() { "composed" } else { "coefficients" },
            f.dim_h(),
            f.dim_h(),
            f.dim_k(),
            s.isometry,
            s.coisometry,
            c.isometry_max_eig,
            c.coisometry_max_eig,
            verdict(ok)
        ));
        rows.push(json!({
            "isometry_residual": s.isometry,
            "coisometry_residual": s.coisometry,
            "isometry_max_eig": c.isometry_max_eig,
            "coisometry_max_eig": c.coisometry_max_eig,
            "passed": ok,
        }));
    }
    let expect_name = if expect == Kind::Contraction { "contraction" } else { "unitary" };
    summary.insert(0, format!("check ({expect_name} type, tol {tol:e}): {}", verdict(passed)));
    let mut json = json!({ "expect": expect_name, "tol": tol, "results": rows });
    if let Some(f) = composed {
        json["composed"] = coefficients_to_json(f);
    }
    Report { passed, summary, csv, json }
}
