use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Result};
use rayon::prelude::*;

use phasefield::extension::{extend_interface, verify_extension, Cutoff};
use phasefield::geometry::io::write_fields;
use phasefield::geometry::{ConformalTorus, ManifoldSpec, TensorField2, TrigSource, TrigVector};
use phasefield::potential::{surface_tension, DoubleWellPotential};
use phasefield::solver::{newton_solve, residual, seed_slab, ACProblem, ACSolution};
use phasefield::spectrum::{
    ac_eigenvalues, default_zero_mode_tol, jacobi_eigenvalues, jacobi_eigenvalues_hat, morse_index,
    semicontinuity_report, DomainMask, SemicontinuityOptions,
};
use phasefield::variation::{
    compare_routes, fd_second_variation, metric_variation_check, second_inner_variation_bilinear,
    second_inner_variation_formula,
};
use phasefield::varifold::{
    diffuse_measures, extract_interface, limit_tensor_pairing, second_variation_varifold, tensor_pairing,
    Interface,
};

use crate::config::ExperimentConfig;
use crate::report::{num, CheckRow, Csv, Summary};

const METRIC_DTS: [f64; 4] = [0.04, 0.02, 0.01, 0.005];

/// One experiment: its config, output directory and the solved family,
/// computed once and shared by the runs.
pub struct Session {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
    pub manifold: Arc<ConformalTorus>,
    pub potential: DoubleWellPotential,
    pub sigma: f64,
    family: Option<Vec<ACSolution>>,
}

impl Session {
    pub fn new(cfg: ExperimentConfig, out: &Path) -> Result<Self> {
        cfg.validate()?;
        let manifold = Arc::new(ConformalTorus::from_spec(&cfg.manifold)?);
        let potential = DoubleWellPotential::from_spec(&cfg.potential);
        let sigma = surface_tension(&potential, 1e-12)?;
        Ok(Session {
            cfg,
            out: out.to_path_buf(),
            manifold,
            potential,
            sigma,
            family: None,
        })
    }

    fn solve_on(&self, m: &Arc<ConformalTorus>, eps: f64, positions: &[f64]) -> Result<ACSolution> {
        let p = ACProblem::new(m.clone(), self.potential.clone(), eps)?;
        let seed = seed_slab(m, eps, self.cfg.seed.axis, positions, self.cfg.seed.first_sign)?;
        Ok(newton_solve(&p, &seed, self.cfg.tolerances.newton, 60)?)
    }

    /// Solutions for every epsilon, in config order.
    pub fn family(&mut self) -> Result<&[ACSolution]> {
        if self.family.is_none() {
            let sols = self
                .cfg
                .epsilons
                .par_iter()
                .map(|&e| self.solve_on(&self.manifold, e, &self.cfg.seed.positions))
                .collect::<Result<Vec<_>>>()?;
            self.family = Some(sols);
        }
        Ok(self.family.as_deref().unwrap())
    }

    fn mask(&self) -> Result<DomainMask> {
        Ok(match &self.cfg.mask {
            None => DomainMask::full(&self.manifold.grid),
            Some(b) => DomainMask::from_fn(&self.manifold.grid, |x| {
                b.lo.iter().zip(&b.hi).enumerate().all(|(a, (lo, hi))| *lo <= x[a] && x[a] < *hi)
            })?,
        })
    }

    /// The interface the seed transitions converge to: coordinate slices.
    pub fn limit_interface(&self) -> Result<Interface> {
        let k = self.cfg.seed.positions.len();
        Ok(Interface::slices(&self.manifold, self.cfg.seed.axis, &self.cfg.seed.positions, &vec![1; k], self.sigma)?)
    }

    /// `2σ Σ m_j |Γ_j|` over the limit slices.
    fn expected_energy(&self) -> Result<f64> {
        Ok(2.0 * self.sigma * self.limit_interface()?.weighted_size())
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn decreasing(v: &[f64], floor: f64) -> bool {
    v.windows(2).all(|w| w[1] < w[0] || (w[0] - w[1]).abs() <= floor)
}

pub fn run_solve(s: &mut Session) -> Result<Summary> {
    let mut sum = Summary::new("solve", &s.cfg.name);
    let target = s.expected_energy()?;
    let tol = s.cfg.tolerances.clone();
    let hyp = s.cfg.hypotheses.clone();
    let out = s.out.clone();
    let sols = s.family()?.to_vec();
    let mut csv = Csv::new(&["epsilon", "residual", "energy", "iterations", "transitions", "sup_abs_u", "energy_relative_error"]);
    for (j, sol) in sols.iter().enumerate() {
        let e = sol.epsilon();
        let res = residual(&sol.problem, &sol.u)?.sup_norm();
        let cert = sol.certificate();
        let rel = (sol.energy - target).abs() / target;
        csv.row(&[
            num(e),
            num(res),
            num(sol.energy),
            cert.iterations.to_string(),
            cert.transitions.to_string(),
            num(cert.sup_abs_u),
            num(rel),
        ]);
        sum.check(CheckRow::le(format!("residual eps={e}"), res, tol.residual, "solver: certified residual"));
        sum.check(CheckRow::le(format!("energy eps={e}"), rel, tol.energy, "solver: energy near 2 sigma times interface size"));
        sum.check(CheckRow::le(format!("sup|u| eps={e}"), cert.sup_abs_u, hyp.c0 + 1e-8, "hypothesis: |u| bounded by c0"));
        if let Some(e0) = hyp.e0 {
            sum.check(CheckRow::le(format!("energy bound eps={e}"), sol.energy, e0, "hypothesis: energy bounded by E0"));
        }
        let name = format!("solutions/u-{j}.csv");
        std::fs::create_dir_all(out.join("solutions"))?;
        write_fields(&out.join(&name), &sol.manifold().grid, &["u"], &[&sol.u], serde_json::to_value(&cert)?)?;
        sum.artifact(&name);
    }
    csv.write(&out.join("solve.csv"))?;
    sum.artifact("solve.csv");
    sum.write(&out)?;
    Ok(sum)
}

pub fn run_spectrum(s: &mut Session) -> Result<Summary> {
    let mut sum = Summary::new("spectrum", &s.cfg.name);
    let count = s.cfg.ell_max;
    let mask = s.mask()?;
    let itf = s.limit_interface()?;
    let jmask = if mask.is_full() { None } else { Some(&mask) };
    let weighted = jacobi_eigenvalues(&itf, jmask, count)?;
    let hat = jacobi_eigenvalues_hat(&itf, jmask, count)?;
    let p = s.cfg.hypotheses.p;
    let wtol = s.cfg.tolerances.weight_equivalence;
    let out = s.out.clone();
    let sols = s.family()?.to_vec();
    let mut csv = Csv::new(&["epsilon", "l", "eigenvalue", "scaled", "residual"]);
    let mut mcsv = Csv::new(&["epsilon", "morse_index"]);
    for sol in &sols {
        let e = sol.epsilon();
        let spec = ac_eigenvalues(sol, &mask, count)?;
        for (l, (v, r)) in spec.eigenvalues.iter().zip(&spec.residuals).enumerate() {
            csv.row(&[num(e), l.to_string(), num(*v), num(v / e), num(*r)]);
        }
        let mi = morse_index(sol, default_zero_mode_tol(e))?;
        mcsv.row(&[num(e), mi.to_string()]);
        if let Some(p) = p {
            sum.check(CheckRow::le(format!("morse index eps={e}"), mi as f64, p as f64, "hypothesis: Morse index bounded by p"));
        }
    }
    let mut jcsv = Csv::new(&["l", "weighted", "hat"]);
    let mut gap: f64 = 0.0;
    for (l, (a, b)) in weighted.eigenvalues.iter().zip(&hat.eigenvalues).enumerate() {
        jcsv.row(&[l.to_string(), num(*a), num(*b)]);
        gap = gap.max((a - b).abs());
    }
    sum.check(CheckRow::le("weighted vs rescaled Jacobi spectrum", gap, wtol, "spectrum: weight equivalence"));
    csv.write(&out.join("spectrum.csv"))?;
    mcsv.write(&out.join("morse.csv"))?;
    jcsv.write(&out.join("jacobi.csv"))?;
    for a in ["spectrum.csv", "morse.csv", "jacobi.csv"] {
        sum.artifact(a);
    }
    sum.write(&out)?;
    Ok(sum)
}

pub fn run_variation(s: &mut Session) -> Result<Summary> {
    let mut sum = Summary::new("variation", &s.cfg.name);
    let battery = s.cfg.validate_battery()?;
    let eps = s.cfg.variation_epsilon();
    let tol = s.cfg.tolerances.clone();
    let out = s.out.clone();
    let sols = s.family()?.to_vec();
    let sol = sols.iter().find(|x| x.epsilon() == eps).unwrap();
    let rows = route_table(sol, &battery, tol.fd_step)?;
    let mut csv = Csv::new(&["field", "formula", "bilinear", "fd", "bilinear_gap", "fd_gap"]);
    let (mut wb, mut wf): (f64, f64) = (0.0, 0.0);
    for (j, r) in rows.iter().enumerate() {
        let scale = 1.0 + r.0.abs();
        let (gb, gf) = ((r.0 - r.1).abs() / scale, (r.0 - r.2).abs() / scale);
        wb = wb.max(gb);
        wf = wf.max(gf);
        csv.row(&[j.to_string(), num(r.0), num(r.1), num(r.2), num(gb), num(gf)]);
    }
    sum.check(CheckRow::le("formula vs bilinear", wb, tol.bilinear, "variation: closed formula equals E''(u)(v,v) at critical points"));
    sum.check(CheckRow::le("formula vs finite differences", wf, tol.fd, "variation: closed formula equals d²/dt² E(u∘Φ^-t)"));
    csv.write(&out.join("variation.csv"))?;
    sum.artifact("variation.csv");
    sum.write(&out)?;
    Ok(sum)
}

/// `(formula, bilinear, fd)` per field, computed concurrently.
fn route_table(sol: &ACSolution, battery: &[TrigVector], h: f64) -> Result<Vec<(f64, f64, f64)>> {
    battery
        .par_iter()
        .map(|tv| {
            let m = sol.manifold();
            let x = tv.sample(&m.grid);
            let src = TrigSource { field: tv, lengths: &m.grid.lengths };
            let f = second_inner_variation_formula(&sol.problem, &sol.u, &x)?;
            let b = second_inner_variation_bilinear(sol, &x)?;
            let d = fd_second_variation(&sol.problem, &sol.u, &src, h)?.extrapolated;
            Ok((f, b, d))
        })
        .collect()
}

pub fn run_varifold(s: &mut Session) -> Result<Summary> {
    let mut sum = Summary::new("varifold", &s.cfg.name);
    let tol = s.cfg.tolerances.clone();
    let ext = s.cfg.extension.clone();
    let limit = s.limit_interface()?;
    let m = s.manifold.clone();
    let sigma = s.sigma;
    let out = s.out.clone();
    let sols = s.family()?.to_vec();
    let dim = m.dim();
    let mut tensors = vec![("g".to_string(), m.metric_tensor())];
    for a in 0..dim {
        tensors.push((format!("dx{}dx{}", a + 1, a + 1), TensorField2::coordinate_square(&m.grid, a)));
    }
    let mut csv = Csv::new(&["epsilon", "components", "multiplicities", "mass", "potential_mass", "defect", "defect_ratio", "tensor", "diffuse", "limit", "relative_error"]);
    let mut ratios = vec![];
    let mut errs = vec![vec![]; tensors.len()];
    let mut last_itf = None;
    for sol in &sols {
        let e = sol.epsilon();
        let itf = extract_interface(sol, 0.0)?;
        let mults: Vec<String> = itf.components.iter().map(|c| c.multiplicity.to_string()).collect();
        let d = diffuse_measures(sol);
        let ratio = d.defect / d.energy;
        ratios.push(ratio);
        for (t, (name, tensor)) in tensors.iter().enumerate() {
            let lim = limit_tensor_pairing(&m, &itf, tensor)?;
            let dif = tensor_pairing(sol, tensor)?;
            let scale = lim.abs().max(2.0 * itf.sigma * itf.weighted_size());
            let rel = (dif - lim).abs() / scale;
            errs[t].push(rel);
            csv.row(&[
                num(e),
                itf.components.len().to_string(),
                mults.join(" "),
                num(d.mass),
                num(d.potential_mass),
                num(d.defect),
                num(ratio),
                name.clone(),
                num(dif),
                num(lim),
                num(rel),
            ]);
        }
        let expected = limit.components.len();
        sum.check(CheckRow::holds(
            format!("components eps={e}"),
            itf.components.len() == expected && itf.components.iter().all(|c| c.multiplicity == 1),
            "varifold: one unit-multiplicity component per seed transition",
        ));
        last_itf = Some(itf);
    }
    for (t, (name, _)) in tensors.iter().enumerate() {
        sum.check(CheckRow::le(format!("pairing {name} at finest eps"), *errs[t].last().unwrap(), tol.pairing, "varifold: diffuse tensor pairing converges"));
        sum.check(CheckRow::holds(format!("pairing {name} decreasing"), decreasing(&errs[t], 1e-12), "varifold: diffuse tensor pairing converges"));
    }
    sum.check(CheckRow::le("defect ratio at finest eps", *ratios.last().unwrap(), tol.defect, "varifold: equipartition"));
    sum.check(CheckRow::holds("defect ratio decreasing", decreasing(&ratios, 0.0), "varifold: equipartition"));

    // extension-built field against the second variation of the limit
    let finest = sols.last().unwrap();
    let amps: Vec<Vec<f64>> = limit
        .components
        .iter()
        .map(|c| {
            (0..c.len())
                .map(|k| (2.0 * std::f64::consts::PI * ext.wavenumber as f64 * k as f64 / c.len() as f64).cos())
                .collect()
        })
        .collect();
    let cut = Cutoff { inner: ext.inner, outer: ext.outer };
    let x = extend_interface(&m, &limit, &amps, ext.delta, cut)?;
    let rep = verify_extension(&m, &limit, &x, Some(&amps))?;
    sum.check(CheckRow::le("extension normal derivative", rep.normal_derivative, tol.extension, "extension: vanishing normal-normal derivative"));
    let qv = second_variation_varifold(&limit, &amps)?;
    let built = second_inner_variation_formula(&finest.problem, &finest.u, &x)? / (2.0 * sigma);
    let rel = (built - qv).abs() / qv.abs().max(1e-300);
    sum.check(CheckRow::le("limit second variation", rel, tol.limit_variation, "varifold: second variation converges to Q_V"));
    let mut ecsv = Csv::new(&["epsilon", "delta2_e_over_2sigma", "q_v", "relative_error", "normal_derivative", "restriction_error"]);
    ecsv.row(&[num(finest.epsilon()), num(built), num(qv), num(rel), num(rep.normal_derivative), num(rep.restriction_error.unwrap_or(f64::NAN))]);

    csv.write(&out.join("varifold.csv"))?;
    ecsv.write(&out.join("limit_variation.csv"))?;
    if let Some(itf) = last_itf {
        std::fs::write(out.join("interface.json"), itf.to_json()? + "\n")?;
        sum.artifact("interface.json");
    }
    sum.artifact("varifold.csv");
    sum.artifact("limit_variation.csv");
    sum.write(&out)?;
    Ok(sum)
}

pub fn run_semicontinuity(s: &mut Session) -> Result<Summary> {
    let mut sum = Summary::new("semicontinuity", &s.cfg.name);
    let itf = s.limit_interface()?;
    let mask = s.mask()?;
    let count = s.cfg.ell_max;
    let opts = SemicontinuityOptions {
        tol: s.cfg.tolerances.semicontinuity,
        ..SemicontinuityOptions::default()
    };
    let out = s.out.clone();
    let sols = s.family()?.to_vec();
    let rep = semicontinuity_report(&sols, &itf, &mask, count, opts)?;
    let max_morse = rep.morse_indices.iter().cloned().max().unwrap_or(0);
    sum.check(CheckRow::le("upper bound violations", rep.violations.len() as f64, 0.0, "spectrum: lambda_l^eps/eps <= lambda_l + tol(1+|lambda_l|)"));
    sum.check(CheckRow::holds("slack nonincreasing", rep.slack_monotone, "spectrum: slack nonincreasing along the sweep"));
    sum.check(CheckRow::le("index of the limit", rep.limit_index as f64, max_morse as f64, "spectrum: index of the limit bounded by the Morse indices"));
    std::fs::write(out.join("semicontinuity.csv"), rep.to_csv())?;
    let mut mcsv = Csv::new(&["epsilon", "morse_index"]);
    for (e, m) in rep.epsilons.iter().zip(&rep.morse_indices) {
        mcsv.row(&[num(*e), m.to_string()]);
    }
    mcsv.write(&out.join("semicontinuity_morse.csv"))?;
    sum.artifact("semicontinuity.csv");
    sum.artifact("semicontinuity_morse.csv");
    sum.write(&out)?;
    Ok(sum)
}

pub fn run_formula_checks(s: &mut Session) -> Result<Summary> {
    let mut sum = Summary::new("verify-formulas", &s.cfg.name);
    let battery = s.cfg.validate_battery()?;
    let tol = s.cfg.tolerances.clone();
    let eps = s.cfg.variation_epsilon();
    let out = s.out.clone();
    let mut manifolds: Vec<(String, Arc<ConformalTorus>, Vec<f64>)> =
        vec![("config".into(), s.manifold.clone(), s.cfg.seed.positions.clone())];
    if let Some(c) = &s.cfg.conformal_check {
        let spec = ManifoldSpec {
            lengths: s.cfg.manifold.lengths.clone(),
            counts: s.cfg.manifold.counts.clone(),
            phi: Some(c.phi.clone()),
        };
        manifolds.push(("conformal".into(), Arc::new(ConformalTorus::from_spec(&spec)?), c.positions.clone()));
    }
    let mut mcsv = Csv::new(&["manifold", "item", "dt", "error", "order"]);
    let mut rcsv = Csv::new(&["manifold", "formula", "bilinear", "fd", "fd_pullback"]);
    for (label, m, positions) in &manifolds {
        let rep = metric_variation_check(m, &battery[0], &METRIC_DTS)?;
        for item in &rep.items {
            for (k, (dt, err)) in rep.dts.iter().zip(&item.errors).enumerate() {
                let order = if k == 0 { String::new() } else { num(item.orders[k - 1]) };
                mcsv.row(&[label.clone(), item.name.replace(' ', "_"), num(*dt), num(*err), order]);
            }
            // the coarsest pair is pre-asymptotic for O(1) fields; judge the finest
            let order = item.orders.last().copied().unwrap_or(f64::NAN);
            sum.check(CheckRow::ge(format!("{label}: {} order", item.name), order, tol.metric_order, "variation: metric derivative identities"));
        }
        let sol = if label == "config" {
            let sols = s.family()?;
            sols.iter().find(|x| x.epsilon() == eps).unwrap().clone()
        } else {
            s.solve_on(m, eps, positions)?
        };
        let r = compare_routes(&sol, &battery[0], tol.fd_step)?;
        rcsv.row(&[label.clone(), num(r.formula), num(r.bilinear), num(r.fd), num(r.fd_pullback)]);
        let scale = 1.0 + r.formula.abs();
        sum.check(CheckRow::le(format!("{label}: formula vs bilinear"), r.bilinear_error(), tol.bilinear, "variation: closed formula equals E''(u)(v,v) at critical points"));
        sum.check(CheckRow::le(format!("{label}: formula vs fd"), r.fd_error(), tol.fd, "variation: closed formula equals d²/dt² E(u∘Φ^-t)"));
        sum.check(CheckRow::le(
            format!("{label}: formula vs pulled-back fd"),
            (r.formula - r.fd_pullback).abs() / scale,
            tol.fd,
            "variation: closed formula equals d²/dt² of the pulled-back energy",
        ));
    }
    mcsv.write(&out.join("metric_variation.csv"))?;
    rcsv.write(&out.join("routes.csv"))?;
    sum.artifact("metric_variation.csv");
    sum.artifact("routes.csv");
    sum.write(&out)?;
    Ok(sum)
}

/// Every run in sequence, then one aggregated report.
pub fn run_report(s: &mut Session) -> Result<Summary> {
    let runs: [fn(&mut Session) -> Result<Summary>; 6] =
        [run_solve, run_spectrum, run_variation, run_varifold, run_semicontinuity, run_formula_checks];
    let mut sum = Summary::new("report", &s.cfg.name);
    let mut csv = Csv::new(&["command", "check", "value", "comparison", "tolerance", "passed", "invariant"]);
    for run in runs {
        let part = run(s)?;
        for c in &part.checks {
            csv.row(&[
                part.command.clone(),
                c.name.replace(',', ";"),
                num(c.value),
                c.comparison.clone(),
                num(c.tolerance),
                c.passed.to_string(),
                c.invariant.replace(',', ";"),
            ]);
        }
        sum.check(CheckRow::holds(part.command.clone(), part.passed, "all checks of the run"));
        sum.artifact(&format!("{}.json", part.command));
    }
    csv.write(&s.path("report.csv"))?;
    sum.artifact("report.csv");
    sum.write(&s.out)?;
    Ok(sum)
}

pub fn run_command(s: &mut Session, command: &str) -> Result<Summary> {
    match command {
        "solve" => run_solve(s),
        "spectrum" => run_spectrum(s),
        "variation" => run_variation(s),
        "varifold" => run_varifold(s),
        "semicontinuity" => run_semicontinuity(s),
        "verify-formulas" => run_formula_checks(s),
        "report" => run_report(s),
        other => bail!("unknown command {other}"),
    }
}
