//! One function per command. Each validates its budget keys, runs the
//! experiment and returns checks, a JSON payload and tables.

use nlsq_core::counting::{count_k, three_vector_scan, verify_psi_bound, CountQuery, DEFAULT_SIZE_CAP};
use nlsq_core::energy::{literal_derivative_terms, EnergyModel};
use nlsq_core::ensemble::{sample_mu_s, EnsembleSpec};
use nlsq_core::flow::{evolve_sampled, evolve_to, IntegratorSpec, Scheme};
use nlsq_core::grid::hamiltonian;
use nlsq_core::lattice::{mass, sobolev_norm, NormConvention};
use nlsq_core::smoothing::{counterexample_norms, divergence_scan, smoothing_experiment};
use nlsq_core::transport::{
    qn_moment_scan, transported_set_bound, weak_lq_report, weighted_density_scan, CutoffSettings, DensityBoundParams,
    EnergyCutoff,
};
use nlsq_core::tree::{cancellation_on, SignConfiguration, SingularParams, SingularSet};
use nlsq_core::{Mode, SpectralField};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{Command, RunConfig};
use crate::formats::{field_to_json, num, trajectory_lines, Table};
use crate::{Check, LabError, Outcome};

pub fn run(cfg: &RunConfig) -> Result<Outcome, LabError> {
    match cfg.command {
        Command::Sample => sample(cfg),
        Command::Evolve => evolve(cfg),
        Command::SmoothingScan => smoothing_scan(cfg),
        Command::EnergyDerivativeCheck => energy_derivative_check(cfg),
        Command::CountingVerify => counting_verify(cfg),
        Command::CancellationVerify => cancellation_verify(cfg),
        Command::PicardDivergence => picard_divergence(cfg),
        Command::MomentScan => moment_scan(cfg),
        Command::BoundEval => bound_eval(cfg),
    }
}

fn within_budget(cfg: &RunConfig, key: &str, budget_key: &str) -> Result<usize, LabError> {
    let (requested, budget) = (cfg.int(key), cfg.int(budget_key));
    if requested > budget {
        return Err(LabError::Budget { key: key.into(), requested, budget });
    }
    Ok(requested as usize)
}

fn cutoff(cfg: &RunConfig) -> u32 {
    cfg.int("cutoff") as u32
}

fn degree(cfg: &RunConfig) -> u32 {
    cfg.int("degree") as u32
}

/// The `index`-th field of the seeded ensemble.
fn seeded_field(cfg: &RunConfig, s: f64, n: u32, index: usize) -> Result<SpectralField, LabError> {
    Ok(sample_mu_s(&EnsembleSpec::new(s, n, index + 1, cfg.seed)?, index)?)
}

fn sample(cfg: &RunConfig) -> Result<Outcome, LabError> {
    let count = within_budget(cfg, "samples", "max_samples")?;
    let spec = EnsembleSpec::new(cfg.float("s"), cutoff(cfg), count, cfg.seed)?;
    let fields: Vec<SpectralField> =
        (0..count).into_par_iter().map(|i| sample_mu_s(&spec, i)).collect::<Result<_, _>>()?;
    let mut table = Table::new("samples", &["index", "mass", "hamiltonian", "h1_norm"]);
    let mut lines = String::new();
    let mut masses = Vec::with_capacity(count);
    for (i, u) in fields.iter().enumerate() {
        let m = mass(u);
        let h = hamiltonian(u, degree(cfg))?;
        table.push([i.to_string(), num(m), num(h), num(sobolev_norm(u, 1.0, NormConvention::Bracket)?)]);
        lines.push_str(&field_to_json(u));
        lines.push('\n');
        masses.push(m);
    }
    let mean_mass = masses.iter().sum::<f64>() / count.max(1) as f64;
    Ok(Outcome {
        checks: vec![],
        payload: json!({ "samples": count, "modes": spec_modes(&fields), "mean_mass": mean_mass }),
        tables: vec![table],
        files: vec![("samples.jsonl".into(), lines.into_bytes())],
    })
}

fn spec_modes(fields: &[SpectralField]) -> usize {
    fields.first().map_or(0, |u| u.coeffs().len())
}

fn scheme(cfg: &RunConfig) -> Scheme {
    match cfg.text("scheme") {
        "strang" => Scheme::StrangSplit,
        _ => Scheme::RK4Interaction,
    }
}

fn evolve(cfg: &RunConfig) -> Result<Outcome, LabError> {
    let n = cutoff(cfg);
    let phi = seeded_field(cfg, cfg.float("s"), n, cfg.int("sample_index") as usize)?;
    let spec = IntegratorSpec::new(scheme(cfg), cfg.float("dt"), n, degree(cfg))?;
    let states = evolve_sampled(&phi, cfg.float("t_final"), &spec, cfg.int("every") as usize)?;
    let (m0, h0) = (states[0].mass, states[0].hamiltonian);
    let mut table = Table::new("conservation", &["time", "mass", "hamiltonian"]);
    let (mut dm, mut dh) = (0.0f64, 0.0f64);
    for s in &states {
        dm = dm.max((s.mass - m0).abs() / m0);
        dh = dh.max((s.hamiltonian - h0).abs() / h0);
        table.push([num(s.time), num(s.mass), num(s.hamiltonian)]);
    }
    let tol = cfg.float("drift_tolerance");
    let last = states.last().expect("initial state");
    Ok(Outcome {
        checks: vec![
            Check::at_most("mass_drift", dm, tol, "mass at t = 0"),
            Check::at_most("hamiltonian_drift", dh, tol, "H_N at t = 0"),
        ],
        payload: json!({
            "snapshots": states.len(),
            "initial_mass": m0,
            "initial_hamiltonian": h0,
            "mass_drift": dm,
            "hamiltonian_drift": dh,
            "final_time": last.time,
        }),
        tables: vec![table],
        files: vec![("trajectory.jsonl".into(), trajectory_lines(&states).into_bytes())],
    })
}

fn smoothing_scan(cfg: &RunConfig) -> Result<Outcome, LabError> {
    let count = within_budget(cfg, "samples", "max_samples")?;
    let n = cutoff(cfg);
    let spec = EnsembleSpec::new(cfg.float("s"), n, count, cfg.seed)?;
    let ispec = IntegratorSpec::new(Scheme::RK4Interaction, cfg.float("dt"), n, 2)?;
    let s1 = cfg.float("s1");
    let reports = (0..count)
        .into_par_iter()
        .map(|i| {
            let phi = sample_mu_s(&spec, i)?;
            smoothing_experiment(&phi, cfg.float("t_final"), s1, &ispec, cfg.int("every") as usize)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut table = Table::new("smoothing", &["sample", "max_w_norm", "data_norm", "integrator_error"]);
    let mut worst: f64 = 0.0;
    let mut rows = Vec::new();
    for (i, r) in reports.iter().enumerate() {
        let ratio = r.max_w_norm() / r.data_norm;
        worst = worst.max(ratio);
        let err = r.integrator_error.unwrap_or(f64::NAN);
        table.push([i.to_string(), num(r.max_w_norm()), num(r.data_norm), num(err)]);
        rows.push(json!({ "max_w_norm": r.max_w_norm(), "data_norm": r.data_norm, "integrator_error": r.integrator_error }));
    }
    Ok(Outcome {
        checks: vec![Check::at_most("max_remainder_over_data", worst, 1.0, "||phi||_{H^s1}").report_only()],
        payload: json!({ "s1": s1, "samples": rows, "max_ratio": worst }),
        tables: vec![table],
        files: vec![],
    })
}

fn energy_derivative_check(cfg: &RunConfig) -> Result<Outcome, LabError> {
    let (n, m, s) = (cutoff(cfg), degree(cfg), cfg.float("s"));
    let budget = cfg.float("tuple_budget");
    let model = EnergyModel::with_budget(n, m, s, budget)?;
    let mut ws = model.workspace()?;
    let spec = IntegratorSpec::new(Scheme::RK4Interaction, cfg.float("dt"), n, m)?;
    let u0 = seeded_field(cfg, s, n, cfg.int("sample_index") as usize)?;
    let u_mid = evolve_to(&u0, cfg.float("t0"), &spec)?;
    let q = model.derivative_terms_u(&u_mid, &mut ws)?.total();
    // conj(u(-h)) is the forward flow of conj(u).
    let conj = u_mid.map_modes(|_, z| z.conj());
    let centered = |h: f64| -> Result<f64, LabError> {
        let up = evolve_to(&u_mid, h, &spec)?;
        let back = evolve_to(&conj, h, &spec)?.map_modes(|_, z| z.conj());
        Ok((model.energy(&up)? - model.energy(&back)?) / (2.0 * h))
    };
    let hs = cfg.floats("h_values");
    if hs.len() < 2 {
        return Err(LabError::Unsupported("h_values needs at least two steps".into()));
    }
    let diffs = hs.iter().map(|&h| centered(h)).collect::<Result<Vec<_>, _>>()?;
    let residuals: Vec<f64> = diffs.iter().map(|d| (d - q).abs()).collect();
    let mut table = Table::new("finite_difference", &["h", "centered", "q_n", "residual"]);
    for ((h, d), r) in hs.iter().zip(&diffs).zip(&residuals) {
        table.push([num(*h), num(*d), num(q), num(*r)]);
    }
    let mut checks = Vec::new();
    let mut ratios = Vec::new();
    for i in 1..hs.len() {
        let expected = (hs[i - 1] / hs[i]).powi(2);
        let ratio = residuals[i - 1] / residuals[i];
        ratios.push(ratio);
        checks.push(Check::at_most(
            &format!("order_ratio_{i}"),
            (ratio / expected - 1.0).abs(),
            cfg.float("ratio_tolerance"),
            "second-order convergence of the centered difference",
        ));
    }
    let k = hs.len() - 1;
    let r2 = (hs[k - 1] / hs[k]).powi(2);
    let extrapolated = (r2 * diffs[k] - diffs[k - 1]) / (r2 - 1.0);
    let floor = (extrapolated - q).abs() / (1.0 + q.abs());
    checks.push(Check::at_most("richardson_floor", floor, cfg.float("floor_tolerance"), "I + II + III"));

    let fields = cfg.int("literal_fields") as usize;
    let mut literal_gap = 0.0f64;
    if fields > 0 {
        if m != 2 {
            return Err(LabError::Unsupported("the literal double sum is implemented for degree 2 only".into()));
        }
        let ln = cfg.int("literal_cutoff") as u32;
        let small = EnergyModel::with_budget(ln, 2, s, budget)?;
        let mut ws = small.workspace()?;
        let fspec = EnsembleSpec::new(s, ln, fields, cfg.seed)?;
        for i in 0..fields {
            let v = sample_mu_s(&fspec, i)?;
            let t = 0.3 * i as f64;
            let fast = small.derivative_terms(&v, t, &mut ws)?;
            let slow = literal_derivative_terms(&v, t, s, ln, budget)?;
            for (a, b) in [(fast.term_i, slow.term_i), (fast.term_ii, slow.term_ii), (fast.term_iii, slow.term_iii)] {
                literal_gap = literal_gap.max((a - b).abs());
            }
        }
        checks.push(Check::at_most(
            "substitution_vs_literal",
            literal_gap,
            cfg.float("literal_tolerance"),
            "nested double sum with explicit phases",
        ));
    }
    Ok(Outcome {
        checks,
        payload: json!({
            "q_n": q,
            "h_values": hs,
            "centered": diffs,
            "residuals": residuals,
            "ratios": ratios,
            "extrapolated": extrapolated,
            "literal_fields": fields,
            "literal_max_gap": literal_gap,
        }),
        tables: vec![table],
        files: vec![],
    })
}

fn counting_verify(cfg: &RunConfig) -> Result<Outcome, LabError> {
    use nlsq_core::tree::Sign;
    let q = CountQuery::new(vec![1, 1], vec![Sign::Plus, Sign::Minus], Mode::new(1, 0), 1)?;
    let two = count_k(&q, DEFAULT_SIZE_CAP)?;
    let eps = cfg.float("epsilon");
    let scan = three_vector_scan(cfg.int("max_size") as u32, eps)?;
    let psi = verify_psi_bound(cfg.int("psi_max_norm") as u32, cfg.float("psi_s"), cfg.int("psi_length") as usize)?;
    let mut table = Table::new("three_vector", &["l1", "l2", "l3", "signs", "sup", "bound", "ratio"]);
    for row in &scan.rows {
        let signs: String = row.signs.iter().map(|s| if s.value() > 0 { '+' } else { '-' }).collect();
        let b = row.bound(eps);
        table.push([
            row.sizes[0].to_string(),
            row.sizes[1].to_string(),
            row.sizes[2].to_string(),
            signs,
            row.sup.to_string(),
            num(b),
            num(row.sup as f64 / b),
        ]);
    }
    Ok(Outcome {
        checks: vec![
            Check::at_most("two_vector_count_gap", (two as f64 - 2.0).abs(), 0.0, "hand count of the example"),
            Check::at_most("three_vector_constant", scan.constant, cfg.float("constant_limit"), "C L2^{1+eps} L3"),
            Check::at_most(
                "psi_bound_ratio",
                if psi.ratio.is_finite() { psi.ratio } else { f64::INFINITY },
                f64::MAX,
                "lambda_1^{2s-2} (|Omega| + lambda_3^2)",
            ),
        ],
        payload: json!({
            "two_vector_count": two,
            "three_vector_constant": scan.constant,
            "worst": scan.report(),
            "psi_bound": psi,
        }),
        tables: vec![table],
        files: vec![],
    })
}

fn cancellation_verify(cfg: &RunConfig) -> Result<Outcome, LabError> {
    let (n, m, s) = (cutoff(cfg), degree(cfg), cfg.float("s"));
    let n0 = 2 * m as usize - 1;
    let params = SingularParams::standard(n0, s);
    let count = cfg.int("fields") as usize;
    let fspec = EnsembleSpec::new(cfg.float("field_s"), n, count, cfg.seed)?;
    let fields: Vec<SpectralField> =
        (0..count).into_par_iter().map(|i| sample_mu_s(&fspec, i)).collect::<Result<_, _>>()?;
    let mut table = Table::new(
        "cancellation",
        &["configuration", "field", "residual", "completed_residual", "consistency", "rewrite_gap"],
    );
    let mut per_config = Vec::new();
    let (mut literal, mut completed, mut consistency) = (0.0f64, 0.0f64, 0.0f64);
    for c in SignConfiguration::ALL {
        let (tree, lp, lpp) = c.realize(n0)?;
        let set = SingularSet::new(&tree, lp, lpp, &params, n)?;
        let reports: Vec<_> = fields.par_iter().map(|v| cancellation_on(&set, &tree, lpp, v)).collect();
        let (mut a, mut b) = (0.0f64, 0.0f64);
        for (i, r) in reports.iter().enumerate() {
            a = a.max(r.residual);
            b = b.max(r.completed_residual);
            consistency = consistency.max(r.consistency);
            table.push([
                c.label(),
                i.to_string(),
                num(r.residual),
                num(r.completed_residual),
                num(r.consistency),
                num(r.rewrite_gap),
            ]);
        }
        literal = literal.max(a);
        completed = completed.max(b);
        per_config.push(json!({
            "configuration": c.label(),
            "decorations": reports.first().map_or(0, |r| r.decorations),
            "max_residual": a,
            "max_completed_residual": b,
        }));
    }
    let tol = cfg.float("tolerance");
    let literal_check = Check::at_most("im_d_literal", literal, tol, "Im D = 0");
    let completed_check = Check::at_most("im_d_completed", completed, tol, "Im D = 0 on the resonance-completed set");
    let checks = match cfg.text("set") {
        "completed" => vec![completed_check, literal_check.report_only()],
        _ => vec![literal_check, completed_check.report_only()],
    };
    Ok(Outcome {
        checks,
        payload: json!({
            "fields": count,
            "configurations": per_config,
            "max_residual": literal,
            "max_completed_residual": completed,
            "max_consistency": consistency,
        }),
        tables: vec![table],
        files: vec![],
    })
}

fn picard_divergence(cfg: &RunConfig) -> Result<Outcome, LabError> {
    let (sigma, sigma1, t) = (cfg.float("sigma"), cfg.float("sigma1"), cfg.float("t"));
    let ns: Vec<u32> = cfg.ints("n_values").iter().map(|&n| n as u32).collect();
    let scan = divergence_scan(sigma, sigma1, t, &ns)?;
    let cn = cfg.int("collapse_n") as u32;
    let at_t = counterexample_norms(sigma, sigma1, t, cn)?;
    let at_pi = counterexample_norms(sigma, sigma1, std::f64::consts::PI, cn)?;
    let mut table = Table::new("divergence", &["n", "data_norm", "iterate_norm", "slab_block_norm"]);
    for r in &scan.rows {
        table.push([r.n.to_string(), num(r.data_norm), num(r.iterate_norm), num(r.slab_block_norm)]);
    }
    let collapse = at_t.slab_block_norm / at_pi.slab_block_norm;
    Ok(Outcome {
        checks: vec![
            Check::at_most(
                "slope_gap",
                (scan.slope - (sigma1 - sigma)).abs(),
                cfg.float("slope_tolerance"),
                "sigma1 - sigma",
            ),
            Check::at_least("collapse_at_pi", collapse, cfg.float("collapse_factor"), "slab block at t = pi"),
        ],
        payload: json!({
            "slope": scan.slope,
            "intercept": scan.intercept,
            "residual": scan.residual,
            "rows": scan.rows,
            "collapse": { "n": cn, "at_t": at_t.slab_block_norm, "at_pi": at_pi.slab_block_norm },
        }),
        tables: vec![table],
        files: vec![],
    })
}

fn moment_scan(cfg: &RunConfig) -> Result<Outcome, LabError> {
    let count = within_budget(cfg, "samples", "max_samples")?;
    let (n, s) = (cutoff(cfg), cfg.float("s"));
    let mut settings = CutoffSettings::new(cfg.float("lambda"), degree(cfg))?;
    settings.cutoff = match cfg.text("energy_cutoff") {
        "integral" => EnergyCutoff::Integral,
        _ => EnergyCutoff::PerVolume,
    };
    let spec = EnsembleSpec::new(s, n, count, cfg.seed)?;
    let ps = cfg.floats("p_values");
    let mut table = Table::new("moments", &["s", "lambda", "N", "samples", "p", "mean", "stderr", "count", "acceptance"]);
    let mut push = |count: usize, p: f64, e: &nlsq_core::ensemble::MCEstimate, acc: f64| {
        table.push([
            num(s),
            num(settings.lambda),
            n.to_string(),
            count.to_string(),
            num(p),
            num(e.mean),
            num(e.stderr),
            e.count.to_string(),
            num(acc),
        ]);
    };
    match cfg.text("functional") {
        "qn" => {
            let scan = qn_moment_scan(s, &settings, ps, &spec)?;
            for (p, e) in ps.iter().zip(&scan.estimates) {
                push(count, *p, e, scan.acceptance);
            }
            let limit = cfg.float("beta_limit") + scan.beta_ci;
            Ok(Outcome {
                checks: vec![Check::at_most("fitted_beta", scan.fitted_beta, limit, "beta_limit + CI half-width")],
                payload: serde_json::to_value(&scan)?,
                tables: vec![table],
                files: vec![],
            })
        }
        _ => {
            let first = weighted_density_scan(s, &settings, ps, &spec)?;
            let mut checks = Vec::new();
            let finite = first.iter().all(|m| m.estimate.mean.is_finite() && m.estimate.stderr.is_finite());
            checks.push(Check::at_least("finite_moments", finite as u8 as f64, 1.0, "finite L^p norms"));
            let mut worst_order = f64::NEG_INFINITY;
            for w in first.windows(2) {
                let se = w[0].estimate.stderr.hypot(w[1].estimate.stderr);
                worst_order = worst_order.max((w[0].estimate.mean - w[1].estimate.mean) / se);
            }
            if first.len() > 1 {
                checks.push(Check::at_most("holder_order_sigmas", worst_order, 3.0, "monotonicity of L^p norms in p"));
            }
            for (p, m) in ps.iter().zip(&first) {
                push(count, *p, &m.estimate, m.acceptance);
            }
            let mut doubled = None;
            if cfg.flag("doubling") {
                let twice = 2 * count as u64;
                if twice > cfg.int("max_samples") {
                    return Err(LabError::Budget { key: "2 * samples".into(), requested: twice, budget: cfg.int("max_samples") });
                }
                let second = weighted_density_scan(s, &settings, ps, &spec.with_count(2 * count))?;
                let mut worst = 0.0f64;
                for (p, (a, b)) in ps.iter().zip(first.iter().zip(&second)) {
                    let se = a.estimate.stderr.hypot(b.estimate.stderr);
                    worst = worst.max((a.estimate.mean - b.estimate.mean).abs() / se);
                    push(2 * count, *p, &b.estimate, b.acceptance);
                }
                checks.push(Check::at_most("doubling_shift_sigmas", worst, 3.0, "estimate at twice the samples"));
                doubled = Some(second);
            }
            Ok(Outcome {
                checks,
                payload: json!({ "p_values": ps, "moments": first, "doubled": doubled }),
                tables: vec![table],
                files: vec![],
            })
        }
    }
}

fn bound_eval(cfg: &RunConfig) -> Result<Outcome, LabError> {
    let params = DensityBoundParams {
        c0: cfg.float("c0"),
        alpha: cfg.float("alpha"),
        m_p: cfg.float("m_p"),
        t: cfg.float("t"),
        q: cfg.float("q"),
        b0: cfg.float("b0"),
    };
    let report = weak_lq_report(&params)?;
    let eps0 = cfg.float("eps0");
    let mut table = Table::new("bounds", &["c0", "alpha", "m_p", "t", "q", "b0", "eps0", "rho", "value"]);
    let base = [params.c0, params.alpha, params.m_p, params.t, params.q, params.b0];
    let mut row = |rho: String, e: f64, value: f64| {
        let mut r: Vec<String> = base.iter().map(|&x| num(x)).collect();
        r.extend([num(e), rho, num(value)]);
        table.push(r);
    };
    row(String::new(), 1.0 / params.q, report.value);
    let mut transported = Vec::new();
    for &rho in cfg.floats("rho_values") {
        let v = transported_set_bound(rho, &params, eps0)?;
        row(num(rho), eps0, v);
        transported.push(json!({ "rho": rho, "bound": v }));
    }
    Ok(Outcome {
        checks: vec![Check::at_least("weak_lq_finite", report.value.is_finite() as u8 as f64, 1.0, "finite supremum")],
        payload: json!({ "params": params, "weak_lq": report, "eps0": eps0, "transported": transported }),
        tables: vec![table],
        files: vec![],
    })
}
