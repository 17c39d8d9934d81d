use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use levy_dp::accountant::{fractional_laplacian_constant, ls_slope};
use levy_dp::optimizer::{samples_csv, trajectory_csv};
use levy_dp::problems::{data_diameter, format_dataset};
use levy_dp::*;

use crate::config::ExperimentConfig;
use crate::output::{audits_csv, columns, Output};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    AuditFailed,
}

fn status_of<'a>(reports: impl IntoIterator<Item = &'a AuditReport>) -> Status {
    if reports.into_iter().all(|r| r.pass) {
        Status::Ok
    } else {
        Status::AuditFailed
    }
}

/// The Lyapunov exponent from `[accountant].p`, or the default for `alpha`.
fn exponent(cfg: &ExperimentConfig, alpha: f64) -> Result<LyapunovExponent> {
    Ok(match cfg.accountant.p {
        Some(p) => LyapunovExponent::small(p, alpha).context("key `accountant.p`")?,
        None => LyapunovExponent::default_for(alpha)?,
    })
}

pub fn sample(cfg: &ExperimentConfig, out: &Output) -> Result<Status> {
    let s = cfg.sample()?;
    let sampler = StableSampler::new(s.alpha, s.dim)?;
    let mut rng = StreamFactory::new(cfg.seed).stream(Purpose::Noise, 0);
    let mut draws = Samples::with_capacity(s.dim, s.draws);
    let mut x = vec![0.0; s.dim];
    for _ in 0..s.draws {
        sampler.sample_into(&mut rng, &mut x);
        x.iter_mut().for_each(|v| *v *= s.sigma);
        draws.push(&x);
    }
    let mut body = columns("xi", s.dim) + "\n";
    for r in draws.iter() {
        let row: Vec<String> = r.iter().map(|v| format!("{v:.17e}")).collect();
        body.push_str(&row.join(","));
        body.push('\n');
    }
    out.write("draws.csv", &body)?;

    let freqs = ecf_directions(s.dim, s.directions, cfg.seed);
    let mut ecf = format!(
        "{},u_norm,empirical,exact,abs_error,ci\n",
        columns("u", s.dim)
    );
    for r in ecf_table(&draws, s.alpha, s.sigma, &freqs)? {
        let u: Vec<String> = r.u.iter().map(|v| format!("{v:.8e}")).collect();
        let un = levy_dp::vecops::norm(&r.u);
        let _ = writeln!(
            ecf,
            "{},{un:.6},{:.10e},{:.10e},{:.4e},{:.4e}",
            u.join(","),
            r.empirical,
            r.exact,
            r.abs_error(),
            r.ci
        );
    }
    out.write("ecf.csv", &ecf)?;
    let audits = [
        ecf_audit(&draws, s.alpha, s.sigma, &freqs)?,
        isotropy_audit(&draws)?,
    ];
    out.write("audit.csv", &audits_csv(&audits))?;
    for a in &audits {
        println!("{a}");
    }
    Ok(status_of(&audits))
}

pub fn constants(cfg: &ExperimentConfig, base: &Path, out: &Output) -> Result<Status> {
    let m = cfg.model()?;
    let model = m.build()?;
    let c = model.constants();
    let mut kv = KeyValues::new();
    kv.text("model", model.name())
        .num("k1", c.k1)
        .num("k2", c.k2)
        .num("b", c.b)
        .num("m", c.m)
        .num("k_offset", c.k)
        .num("diameter", c.diameter)
        .num("theta_star_norm", c.theta_star_norm)
        .num("stable_point_norm_bound", c.stable_point_bound())
        .num("step_size_limit", step_size_limit(c.m, c.k1)?);
    if cfg.data.is_some() {
        let data = cfg.dataset(base)?;
        kv.int("n", data.len() as u64)
            .num("observed_data_diameter", data_diameter(&data)?);
        if let Some(ch) = &cfg.chain {
            let lp = exponent(cfg, ch.alpha)?;
            let d = model.param_dim();
            let small = drift_small_p(lp.p, ch.alpha, ch.sigma, ch.eta, &c, d)?;
            kv.num("lyapunov_exponent", lp.p)
                .num("beta_p", small.beta)
                .num("h_p", small.h);
            if ch.alpha < 2.0 {
                let large = drift_large_p(lp.partner(), ch.alpha, ch.sigma, ch.eta, &c, d)?;
                let l = large.large.expect("large-p terms");
                kv.num("beta_hat", large.beta)
                    .num("h_hat", large.h)
                    .num("sc", fractional_laplacian_constant(ch.alpha, d)?)
                    .num("b1", l.b1)
                    .num("sc1", l.sc1);
            }
            kv.extend(
                &c_gamma_hat(lp.p, ch.alpha, ch.sigma, ch.eta, &c, d, data.len())?.key_values(),
            );
            if model.universal_stable_point().is_some() {
                kv.extend(
                    &c_gamma(lp.p, ch.alpha, ch.sigma, ch.eta, &c, d, data.len())?.key_values(),
                );
            }
        }
    }
    print!("{kv}");
    out.write("constants.txt", &kv.to_string())?;
    Ok(Status::Ok)
}

fn budget_request(
    cfg: &ExperimentConfig,
    base: &Path,
) -> Result<(BudgetRequest, Box<dyn LossModel>)> {
    let m = cfg.model()?;
    let ch = cfg.chain()?;
    let model = m.build()?;
    let data = cfg.dataset(base)?;
    let a = &cfg.accountant;
    if a.universal_stable_point && model.universal_stable_point().is_none() {
        bail!("key `accountant.universal_stable_point` needs a model with a shared stable point (kind = realizable)");
    }
    let n = data.len();
    let algorithm = match ch.batch_size {
        Some(b) if b < n => Algorithm::Sgd { batch: b },
        _ => Algorithm::Gd,
    };
    let req = BudgetRequest {
        alpha: ch.alpha,
        sigma: ch.sigma,
        eta: ch.eta,
        p: a.p,
        dim: model.param_dim(),
        n,
        k: ch.iters as u64,
        consts: model.constants(),
        erg: a.ergodicity()?,
        universal_stable_point: a.universal_stable_point,
        algorithm,
    };
    Ok((req, model))
}

pub fn budget(cfg: &ExperimentConfig, base: &Path, out: &Output) -> Result<Status> {
    let (req, _model) = budget_request(cfg, base)?;
    let b = privacy_budget(&req)?;
    let mut kv = b.key_values();

    let mut ns = String::from("n,delta,delta_times_n\n");
    for &n in &cfg.accountant.n_sweep {
        let r = privacy_budget(&BudgetRequest {
            n,
            algorithm: Algorithm::Gd,
            ..req.clone()
        })?;
        let _ = writeln!(ns, "{n},{:.12e},{:.12e}", r.delta, r.delta * n as f64);
    }
    out.write("n_sweep.csv", &ns)?;

    let p = b.gamma.map_or(b.drift.p - 1.0, |g| g.p);
    let fixed = ScalingParams {
        sigma: req.sigma,
        eta: req.eta,
        consts: req.consts,
    };
    let dims = &cfg.accountant.d_sweep;
    if dims.len() >= 4 {
        let rep = dimension_scaling_report(req.alpha, p, dims, &fixed)?;
        let mut ds = String::from(ScalingReport::CSV_HEADER);
        ds.push('\n');
        for r in rep.csv_rows() {
            ds.push_str(&r);
            ds.push('\n');
        }
        out.write("d_sweep.csv", &ds)?;
        let all_x: Vec<f64> = rep.rows.iter().map(|(d, _)| (*d as f64).ln()).collect();
        let all_y: Vec<f64> = rep.rows.iter().map(|(_, h)| h.ln()).collect();
        kv.num("d_sweep_slope", rep.slope)
            .num("d_sweep_slope_all_points", ls_slope(&all_x, &all_y))
            .num("d_sweep_reference_slope", rep.reference_slope);
    } else if !dims.is_empty() {
        bail!("key `accountant.d_sweep` needs at least four dimensions");
    }
    if b.erg.heuristic {
        log::warn!(
            "ergodicity constants not supplied: using the NON-RIGOROUS default c = 1, rho = beta_p"
        );
    }
    print!("{kv}");
    out.write("budget.txt", &kv.to_string())?;
    Ok(Status::Ok)
}

pub fn train(cfg: &ExperimentConfig, base: &Path, out: &Output) -> Result<Status> {
    let m = cfg.model()?;
    let ch = cfg.chain()?;
    let model = m.build()?;
    let data = cfg.dataset(base)?;
    let obj = Objective::new(model.as_ref(), &data)?;
    let chain = ch.to_chain(cfg.seed, data.len())?;
    chain.validate(data.len())?;
    if let Err(e) = chain.check_accountant_step(model.constants().m, model.constants().k1) {
        log::warn!("{e}; the privacy accountant does not cover this run");
    }
    out.write("dataset.txt", &format_dataset(&data, m.kind()?))?;
    let finals = run_replicas(&obj, &chain, ch.replicas)?;
    out.write("final.csv", &samples_csv(&finals))?;
    if let Some(stride) = ch.trajectory_stride {
        let run = run_chain(
            &obj,
            &ChainConfig {
                record_stride: Some(stride),
                ..chain.clone()
            },
        )?;
        out.write("trajectory.csv", &trajectory_csv(&obj, &run.trajectory))?;
    }
    let gn: Vec<f64> = finals
        .iter()
        .map(|t| levy_dp::optimizer::full_grad_norm(&obj, t))
        .collect();
    let mean = gn.iter().sum::<f64>() / gn.len() as f64;
    println!(
        "{} replicas, {} steps, mean final gradient norm {mean:.6e}",
        ch.replicas, ch.iters
    );
    Ok(Status::Ok)
}

fn neighbor_of(cfg: &ExperimentConfig, data: &Dataset) -> Result<Dataset> {
    let v = &cfg.verifier;
    let record = v
        .neighbor_record
        .clone()
        .unwrap_or_else(|| vec![0.0; data.dim()]);
    if record.len() != data.dim() {
        bail!(
            "key `verifier.neighbor_record` has {} fields, records have {}",
            record.len(),
            data.dim()
        );
    }
    let record = DataPoint::new(record).context("key `verifier.neighbor_record`")?;
    make_neighbor(data, v.neighbor_index, record).context("key `verifier.neighbor_index`")
}

pub fn verify(cfg: &ExperimentConfig, base: &Path, out: &Output) -> Result<Status> {
    let v = &cfg.verifier;
    let m = cfg.model()?;
    let ch = cfg.chain()?;
    let model = m.build()?;
    let data = cfg.dataset(base)?;
    let obj = Objective::new(model.as_ref(), &data)?;
    let chain = ch.to_chain(cfg.seed, data.len())?;
    chain.validate(data.len())?;
    let c = model.constants();
    let d = model.param_dim();
    let lp = exponent(cfg, ch.alpha)?;
    let stream_seed = StreamFactory::new(cfg.seed).derive(0xa0d1).seed();
    let mut reports: Vec<AuditReport> = Vec::new();
    let mut summary = String::new();

    if v.has("assumptions") {
        let mut rng = StreamFactory::new(stream_seed).stream(Purpose::Audit, 1);
        reports.push(check_pseudo_lipschitz(
            model.as_ref(),
            &c,
            v.trials,
            &mut rng,
        ));
        reports.push(check_dissipativity(model.as_ref(), &c, v.trials, &mut rng));
    }

    let center = find_stable_point(model.as_ref(), &data, 1e-12)?;
    let grid = radial_grid(
        &center,
        v.grid_radius_factor * c.stable_point_bound(),
        v.grid_points,
        stream_seed,
    )?;
    let mut drifts = vec![drift_small_p(lp.p, ch.alpha, ch.sigma, ch.eta, &c, d)?];
    if ch.alpha < 2.0 {
        drifts.push(drift_large_p(
            lp.partner(),
            ch.alpha,
            ch.sigma,
            ch.eta,
            &c,
            d,
        )?);
    } else {
        log::warn!(
            "alpha = 2: the large-p drift has no finite constant; auditing the small-p drift only"
        );
    }
    let drift_audit = |drift: DriftParams| DriftAudit {
        objective: &obj,
        chain: &chain,
        drift,
        center: center.clone(),
        grid: grid.clone(),
        reps: v.reps,
        seed: stream_seed,
    };
    if v.has("drift") {
        for &dr in &drifts {
            reports.push(verify_drift(&drift_audit(dr))?);
        }
    }

    let neighbor = neighbor_of(cfg, &data)?;
    let gamma_audit = || -> Result<GammaAudit<'_>> {
        let universal = cfg.accountant.universal_stable_point;
        let (ingredients, gcenter) = match (universal, model.universal_stable_point()) {
            (true, Some(star)) => (
                c_gamma(lp.p, ch.alpha, ch.sigma, ch.eta, &c, d, data.len())?,
                star.to_vec(),
            ),
            (true, None) => {
                bail!("key `accountant.universal_stable_point` needs kind = realizable")
            }
            (false, _) => (
                c_gamma_hat(lp.p, ch.alpha, ch.sigma, ch.eta, &c, d, data.len())?,
                find_stable_point(model.as_ref(), &neighbor, 1e-12)?,
            ),
        };
        let grid = radial_grid(
            &gcenter,
            v.grid_radius_factor * c.stable_point_bound(),
            v.grid_points,
            stream_seed,
        )?;
        Ok(GammaAudit {
            model: model.as_ref(),
            data: &data,
            neighbor: &neighbor,
            eta: ch.eta,
            sigma: ch.sigma,
            alpha: ch.alpha,
            ingredients,
            center: gcenter,
            grid,
            reps: v.reps,
            seed: stream_seed,
            convention: KlConvention::Calibrated,
        })
    };
    if v.has("gamma") {
        reports.push(verify_gamma(&gamma_audit()?)?);
    }

    if v.has("vp") {
        reports.push(verify_vp_norm_lemmas(
            lp.partner().min(1.99),
            d,
            v.trials.min(10_000),
            stream_seed,
        )?);
    }

    if v.has("tv") {
        if d > 3 {
            bail!("suite 'tv' needs model.dim <= 3, got {d}");
        }
        let mut family = Vec::new();
        for (i, &n) in v.tv_sizes.iter().enumerate() {
            let mut rng = StreamFactory::new(cfg.seed).stream(Purpose::Data, 1 + i as u64);
            let dn = generate_dataset(m.kind()?, n, d, m.radius, m.anchor.as_deref(), &mut rng)?;
            let nb = neighbor_of(cfg, &dn)?;
            family.push((dn, nb));
        }
        let tv_chain = ChainConfig {
            iters: *v.tv_checkpoints.last().unwrap(),
            ..chain.clone()
        };
        let rep = verify_tv_stability(
            model.as_ref(),
            &family,
            &tv_chain,
            v.tv_replicas,
            &v.tv_checkpoints,
            &v.histogram(),
        )?;
        let mut body = String::from(TvStabilityReport::CSV_HEADER);
        body.push('\n');
        for r in rep.csv_rows() {
            body.push_str(&r);
            body.push('\n');
        }
        out.write("tv.csv", &body)?;
        reports.push(rep.decreasing_in_n);
        reports.push(rep.time_uniform);
    }

    if v.has("falsification") {
        let drift = drifts.last().copied().expect("at least one drift");
        let suite = ControlSuite {
            drift: Some(drift_audit(drift)),
            gamma: Some(gamma_audit()?),
        };
        let f = falsification_controls(&suite)?;
        let mut body =
            String::from("name,expected_pass,observed_pass,as_expected,worst_margin,ci_width\n");
        for o in &f.outcomes {
            let r = &o.report;
            let _ = writeln!(
                body,
                "{},{},{},{},{:.10e},{:.10e}",
                levy_dp::report::csv_quote(&r.name),
                o.expected_pass,
                r.pass,
                o.ok(),
                r.worst_margin,
                r.ci_width
            );
            let _ = writeln!(
                summary,
                "control {}: expected {}, observed {}",
                r.name,
                pass_word(o.expected_pass),
                pass_word(r.pass)
            );
        }
        out.write("falsification.csv", &body)?;
        reports.push(f.as_audit());
    }

    out.write("audits.csv", &audits_csv(&reports))?;
    for r in &reports {
        let _ = writeln!(summary, "{r}");
    }
    let status = status_of(&reports);
    let _ = writeln!(
        summary,
        "overall: {}",
        if status == Status::Ok { "PASS" } else { "FAIL" }
    );
    print!("{summary}");
    out.write("summary.txt", &summary)?;
    Ok(status)
}

fn pass_word(b: bool) -> &'static str {
    if b {
        "pass"
    } else {
        "fail"
    }
}
