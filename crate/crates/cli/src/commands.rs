use std::path::Path;

use num_complex::Complex;
use serde_json::json;

use pcgan_core::autotune::{closed_form_ratio_db, psnr_gain_curve};
use pcgan_core::cfid::{cfid_decompose, fid, EmbeddingSet};
use pcgan_core::detect::{detection_estimate, plug_in_gap, Classifier, Logistic, Threshold};
use pcgan_core::embfile;
use pcgan_core::linops::{
    FourierSubsampler, LinearOperator, MaskOperator, MaskSpec, Measurement, Multicoil,
};
use pcgan_core::prop_lab::{contour_grid, minimize_regularizer, random_scalar_posteriors, OptimizerSettings};
use pcgan_core::regularizers::{
    beta_sd_nominal, closed_form_j, closed_form_l2p, mc_l1p, mc_l2p, mc_lsdp, mc_lvarp, RegularizerKind,
};
use pcgan_core::special::normal_cdf;
use pcgan_core::toy::sample_posterior;
use pcgan_core::{
    e_ratio, simulate_autotune, AutotuneSettings, GeneratorParams, LinearPlant, Observation, SeededStream,
    ToyPosterior, ValidationSet,
};

use crate::args::*;
use crate::output::{Failure, Outcome, Session};

pub fn run(command: &Command, s: &Session) -> Outcome {
    match command {
        Command::Contours(a) => contours(a, s),
        Command::VerifyProp1(a) => verify_recovery(a, s, Prop::One),
        Command::VerifyProp2(a) => verify_recovery(a, s, Prop::Two),
        Command::VerifyProp3(a) => verify_prop3(a, s),
        Command::AutotuneSim(a) => autotune_sim(a, s),
        Command::PsnrCurve(a) => psnr_curve(a, s),
        Command::Cfid(a) => cfid_cmd(a, s),
        Command::Fid(a) => fid_cmd(a, s),
        Command::Dc(a) => dc(a, s),
        Command::Detect(a) => detect(a, s),
        Command::Losses(a) => losses(a, s),
    }
}

fn out_path(o: &Output) -> Option<&Path> {
    o.out.as_deref()
}

fn resolve_beta(beta: BetaArg, p: usize) -> Outcome<f64> {
    Ok(match beta {
        BetaArg::Nominal => beta_sd_nominal(p)?,
        BetaArg::Value(v) => v,
    })
}

fn contours(a: &ContoursArgs, s: &Session) -> Outcome {
    s.check_writable(out_path(&a.output))?;
    let kind = match a.kind {
        KindArg::L1sd => RegularizerKind::L1Sd {
            p: a.p,
            beta_sd: resolve_beta(a.beta, a.p)?,
        },
        KindArg::L2 => RegularizerKind::L2 { p: a.p },
        KindArg::L2var => RegularizerKind::L2Var { p: a.p },
    };
    let post = ToyPosterior::scalar(a.mu0, a.sigma0)?;
    let grid = contour_grid(
        kind,
        &post,
        0,
        (a.mu_range.0, a.mu_range.1),
        (a.sigma_range.0, a.sigma_range.1),
        (a.resolution, a.resolution),
    )?;
    s.write(out_path(&a.output), &grid.to_csv())
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Prop {
    One,
    Two,
}

fn verify_recovery(a: &RecoveryArgs, s: &Session, prop: Prop) -> Outcome {
    s.check_writable(out_path(&a.output))?;
    let posts = random_scalar_posteriors::<f64>(
        a.trials,
        (a.mu0_range.0, a.mu0_range.1),
        (a.sigma0_range.0, a.sigma0_range.1),
        SeededStream::new(a.seed),
    )?;
    let init = GeneratorParams::scalar(a.init.0, a.init.1)?;
    let settings = OptimizerSettings::default();
    let mut checks = Vec::new();
    let mut all_passed = true;
    for post in &posts {
        let (mu0, sigma0) = (post.contexts()[0].mu0[0], post.contexts()[0].sigma0[0]);
        for &p in &a.p {
            let kind = match prop {
                Prop::One => RegularizerKind::l1_sd_nominal(p)?,
                Prop::Two => RegularizerKind::L2 { p },
            };
            let r = minimize_regularizer(kind, post, 0, &init, &settings)?;
            let (mu, sigma) = (r.theta_star.mu[0], r.theta_star.sigma[0]);
            // the mean error is measured on the posterior's own scale when mu0 is near 0
            let mu_err = (mu - mu0).abs() / mu0.abs().max(sigma0);
            let sigma_err = (sigma - sigma0).abs() / sigma0;
            let passed = r.converged
                && mu_err <= a.tol
                && match prop {
                    Prop::One => sigma_err <= a.tol,
                    Prop::Two => sigma <= 1e-4 * sigma0,
                };
            all_passed &= passed;
            checks.push(json!({
                "mu0": mu0,
                "sigma0": sigma0,
                "p": p,
                "mu_star": mu,
                "sigma_star": sigma,
                "mu_rel_err": mu_err,
                "sigma_rel_err": sigma_err,
                "sigma_ratio": sigma / sigma0,
                "iterations": r.iterations,
                "converged": r.converged,
                "gradient_norm": r.gradient_norm,
                "projected_iterations": r.projected_iterations.len(),
                "passed": passed,
            }));
        }
    }
    let claim = match prop {
        Prop::One => "l1 + nominal SD reward recovers (mu0, sigma0)",
        Prop::Two => "l2 drives sigma to zero at the posterior mean",
    };
    s.write_json(
        out_path(&a.output),
        Some(a.seed),
        json!({ "claim": claim, "tolerance": a.tol, "checks": checks, "passed": all_passed }),
    )?;
    if all_passed {
        Ok(())
    } else {
        Err(Failure::verification(format!("{claim}: at least one check failed")))
    }
}

fn verify_prop3(a: &Prop3Args, s: &Session) -> Outcome {
    s.check_writable(out_path(&a.output))?;
    let post = ToyPosterior::scalar(a.mu0, a.sigma0)?;
    let stream = SeededStream::new(a.seed);
    let val = ValidationSet::draw(&post, a.v, stream)?;
    let mut checks = Vec::new();
    let mut all_passed = true;
    for &p in &a.p {
        let r = e_ratio(&post, &val, p, stream.experiment(p as u64))?;
        let target = 2.0 * p as f64 / (p as f64 + 1.0);
        let z = (r.ratio - target) / r.ratio_std_error;
        let passed = z.abs() <= a.z_max;
        all_passed &= passed;
        checks.push(json!({
            "p": p,
            "e1": r.e1.value,
            "e1_std_error": r.e1.std_error,
            "ep": r.ep.value,
            "ep_std_error": r.ep.std_error,
            "ratio": r.ratio,
            "ratio_std_error": r.ratio_std_error,
            "target": target,
            "z": z,
            "passed": passed,
        }));
    }
    s.write_json(
        out_path(&a.output),
        Some(a.seed),
        json!({ "v": a.v, "z_max": a.z_max, "checks": checks, "passed": all_passed }),
    )?;
    if all_passed {
        Ok(())
    } else {
        Err(Failure::verification("E_1 / E_P deviates from 2P / (P + 1)"))
    }
}

fn autotune_sim(a: &AutotuneArgs, s: &Session) -> Outcome {
    s.check_writable(out_path(&a.output))?;
    s.check_writable(a.summary.as_deref())?;
    let post = ToyPosterior::scalar(a.mu0, a.sigma0)?;
    let mut plant = LinearPlant::calibrated(a.plant_gain, a.p_train)?;
    plant.intercept = a.plant_intercept;
    let settings = AutotuneSettings {
        p_train: a.p_train,
        p_val: a.p_val,
        mu_sd: a.mu_sd,
        epochs: a.epochs,
        tolerance_db: a.tolerance_db,
        observation: match a.observe {
            ObserveArg::Exact => Observation::Exact,
            ObserveArg::Sampled => Observation::Sampled {
                v: a.v,
                frozen_codes: a.frozen_codes,
            },
        },
    };
    let trace = simulate_autotune(&plant, &post, 0, &settings, SeededStream::new(a.seed))?;
    s.write(out_path(&a.output), &trace.to_csv())?;
    if let Some(path) = a.summary.as_deref() {
        let beta = trace.final_state.beta_sd;
        let generator = GeneratorParams::scalar(a.mu0, pcgan_core::Plant::sigma(&plant, beta, a.sigma0))?;
        let last = trace.points.last().expect("trace has at least one point");
        s.write_json(
            Some(path),
            Some(a.seed),
            json!({
                "converged": trace.converged,
                "epochs": last.epoch,
                "beta_sd": beta,
                "beta_sd_nominal": beta_sd_nominal::<f64>(a.p_train)?,
                "observed_ratio_db": last.ratio_db,
                "closed_form_ratio_db": closed_form_ratio_db(&generator, &post, 0, a.p_val)?,
                "target_db": last.target_db,
                "sigma": generator.sigma[0],
            }),
        )?;
    }
    Ok(())
}

fn psnr_curve(a: &PsnrArgs, s: &Session) -> Outcome {
    let mut csv = String::from("P,gain_db\n");
    for (p, g) in psnr_gain_curve::<f64>(a.pmax)? {
        csv.push_str(&format!("{p},{g}\n"));
    }
    s.write(out_path(&a.output), &csv)
}

fn cfid_cmd(a: &CfidArgs, s: &Session) -> Outcome {
    s.check_writable(out_path(&a.output))?;
    let set = EmbeddingSet::new(
        embfile::load::<f64>(&a.x)?,
        embfile::load::<f64>(&a.y)?,
        embfile::load::<f64>(&a.xhat)?,
        a.p,
    )?;
    let parts = cfid_decompose(&set)?;
    s.write_json(
        out_path(&a.output),
        None,
        json!({
            "cfid": parts.total(),
            "mean_part": parts.mean,
            "cov_part": parts.cov,
            "rows": set.n_rows(),
            "p": set.p(),
            "rank_deficient": set.rank_deficient(),
        }),
    )
}

fn fid_cmd(a: &FidArgs, s: &Session) -> Outcome {
    s.check_writable(out_path(&a.output))?;
    let x = embfile::load::<f64>(&a.x)?;
    let xhat = embfile::load::<f64>(&a.xhat)?;
    let value = fid(&x, &xhat)?;
    s.write_json(out_path(&a.output), None, json!({ "fid": value, "rows": x.rows(), "rows_hat": xhat.rows() }))
}

/// One entry per line as `re` or `re,im`; blank lines, `#` comments and an
/// `re,im` header are skipped.
fn read_vector(path: &Path) -> Outcome<Vec<Complex<f64>>> {
    let text = std::fs::read_to_string(path)?;
    let bad = |line: usize, msg: String| {
        Failure::new("malformed_file", format!("{}:{line}: {msg}", path.display()))
    };
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line == "re,im" || line == "re" {
            continue;
        }
        let mut fields = line.split(',').map(str::trim);
        let re = fields.next().unwrap_or_default();
        let re = re.parse::<f64>().map_err(|e| bad(i + 1, e.to_string()))?;
        let im = match fields.next() {
            Some(f) => f.parse::<f64>().map_err(|e| bad(i + 1, e.to_string()))?,
            None => 0.0,
        };
        if fields.next().is_some() {
            return Err(bad(i + 1, "more than two fields".into()));
        }
        if !re.is_finite() || !im.is_finite() {
            return Err(bad(i + 1, "non-finite value".into()));
        }
        out.push(Complex::new(re, im));
    }
    Ok(out)
}

fn vector_csv(v: &[Complex<f64>]) -> String {
    let mut out = String::from("re,im\n");
    for c in v {
        out.push_str(&format!("{},{}\n", c.re, c.im));
    }
    out
}

fn max_abs_diff(a: &[Complex<f64>], b: &[Complex<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn project<O: LinearOperator<f64>>(
    op: &O,
    x_raw: &[Complex<f64>],
    y: &[Complex<f64>],
) -> Outcome<(Vec<Complex<f64>>, f64, f64)> {
    let x = op.data_consistency(x_raw, y)?;
    let residual = max_abs_diff(&op.apply(&x)?, y);
    let null_change = max_abs_diff(&op.nullspace_project(&x)?, &op.nullspace_project(x_raw)?);
    Ok((x, residual, null_change))
}

fn dc(a: &DcArgs, s: &Session) -> Outcome {
    s.check_writable(out_path(&a.output))?;
    s.check_writable(a.report.as_deref())?;
    let spec = MaskSpec::parse(&std::fs::read_to_string(&a.mask)?)?;
    let x_raw = read_vector(&a.x_raw)?;
    let y = read_vector(&a.y)?;
    let (x, residual, null_change) = match spec {
        MaskSpec::Pixel { n, kept } => {
            let op = Multicoil::new(MaskOperator::new(kept, n)?, a.coils)?;
            project(&op, &x_raw, &y)?
        }
        MaskSpec::Fourier { dims, kept } => {
            let form = match a.form {
                FormArg::Kspace => Measurement::KSpace,
                FormArg::Image => Measurement::Image,
            };
            let op = Multicoil::new(FourierSubsampler::new(dims, kept, form)?, a.coils)?;
            project(&op, &x_raw, &y)?
        }
    };
    s.write(out_path(&a.output), &vector_csv(&x))?;
    if let Some(path) = a.report.as_deref() {
        s.write_json(
            Some(path),
            None,
            json!({
                "dim": x.len(),
                "measurements": y.len(),
                "coils": a.coils,
                "max_residual": residual,
                "max_nullspace_change": null_change,
            }),
        )?;
    }
    Ok(())
}

fn detect(a: &DetectArgs, s: &Session) -> Outcome {
    s.check_writable(out_path(&a.output))?;
    let post = ToyPosterior::scalar(a.mu0, a.sigma0)?;
    let samples = sample_posterior(&post, 0, a.p, SeededStream::new(a.seed))?;
    let (classifier, oracle): (Box<dyn Classifier<f64>>, Option<f64>) = match a.classifier {
        ClassifierArg::Threshold => (
            Box::new(Threshold { coord: 0, tau: a.tau }),
            Some(normal_cdf((a.mu0 - a.tau) / a.sigma0)),
        ),
        ClassifierArg::Logistic => (
            Box::new(Logistic {
                coord: 0,
                center: a.tau,
                scale: a.scale,
            }),
            None,
        ),
    };
    let est = detection_estimate(classifier.as_ref(), &samples)?;
    let gap = if a.p >= 2 {
        Some(plug_in_gap(classifier.as_ref(), &samples)?)
    } else {
        None
    };
    s.write_json(
        out_path(&a.output),
        Some(a.seed),
        json!({
            "classifier": classifier.describe(),
            "samples": a.p,
            "probability": est.probability,
            "std_error": est.std_error,
            "plug_in": gap.map(|g| g.c_of_avg),
            "oracle": oracle,
            "z": oracle.map(|o| if est.std_error > 0.0 { (est.probability - o) / est.std_error } else { 0.0 }),
        }),
    )
}

fn losses(a: &LossesArgs, s: &Session) -> Outcome {
    s.check_writable(out_path(&a.output))?;
    let post = ToyPosterior::scalar(a.mu0, a.sigma0)?;
    let g = GeneratorParams::scalar(a.mu, a.sigma)?;
    let beta = resolve_beta(a.beta, a.p)?;
    let stream = SeededStream::new(a.seed);
    let l1 = mc_l1p(&g, &post, 0, a.p, a.n_outer, stream)?;
    let l2 = mc_l2p(&g, &post, 0, a.p, a.n_outer, stream)?;
    let sd = mc_lsdp(&g, a.p, a.n_outer, stream)?;
    let var = mc_lvarp(&g, a.p, a.n_outer, stream)?;
    let est = |e: &pcgan_core::LossEstimate<f64>, exact: f64| {
        json!({ "mc": e.value, "std_error": e.std_error, "exact": exact, "z": e.z_score(exact) })
    };
    s.write_json(
        out_path(&a.output),
        Some(a.seed),
        json!({
            "p": a.p,
            "n_outer": a.n_outer,
            "beta_sd": beta,
            "l1p": est(&l1, closed_form_j(&g, &post, 0, a.p, 0.0)?),
            "l2p": est(&l2, closed_form_l2p(&g, &post, 0, a.p)?),
            "lsdp": est(&sd, a.sigma),
            "lvarp": est(&var, a.sigma * a.sigma),
            "j": {
                "mc": l1.value - beta * sd.value,
                "exact": closed_form_j(&g, &post, 0, a.p, beta)?,
            },
        }),
    )
}
