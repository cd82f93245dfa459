use std::path::Path;

use anyhow::Context;

use amcmc::config::{build_system, ExperimentConfig, GraphSpec, Mode, TargetSpec};
use amcmc::dynamics::{
    init_momentum, integrate, mh_master_step, p_rhs, staggered_step, DampingSchedule, OdeConfig,
    OdeMode, SimplexState,
};
use amcmc::geometry::{onsager_matrix, potential, potential_grad, Method, MethodSpec};
use amcmc::particles::{build_psi_rate_matrix, run_amcmc_jump, run_mh_jump, JumpConfig};
use amcmc::spectral::{chi_system_matrix, l_spectrum, map_check, q_spectrum, spectral_report};

/// Runs the configured experiment and writes trajectory CSVs plus a JSON
/// manifest into `out`.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let sys = build_system(&cfg.graph, &cfg.target)?;
    let method = cfg.method()?;
    let spec = MethodSpec::new(method);
    let schedule = cfg.schedule.build();
    let n = sys.target.n();
    let p0 = vec![1.0 / n as f64; n];

    let mut outputs: Vec<String> = Vec::new();

    if matches!(cfg.mode, Mode::Ode | Mode::Both) {
        let ode_cfg = OdeConfig {
            dt: cfg.dt,
            iterations: cfg.iterations,
            warm_start_iters: cfg.warm_start,
            restart_threshold: 0.0,
            min_dt: 1e-12,
        };
        let (traj, _) = integrate(
            &p0,
            &OdeMode::MhBaseline,
            &sys.rate,
            &sys.omega,
            &sys.target,
            &ode_cfg,
        )?;
        write_csv(out, "mh_ode.csv", |w| traj.write_csv(w), &mut outputs)?;
        let (traj, _) = integrate(
            &p0,
            &OdeMode::Accelerated(spec.clone(), schedule.clone()),
            &sys.rate,
            &sys.omega,
            &sys.target,
            &ode_cfg,
        )?;
        let name = format!("{}_ode.csv", method.name());
        write_csv(out, &name, |w| traj.write_csv(w), &mut outputs)?;
    }

    if matches!(cfg.mode, Mode::Jump | Mode::Both) {
        let jump_cfg = JumpConfig {
            m: cfg.particles,
            dt: cfg.dt,
            iterations: cfg.iterations,
            warm_start_iters: cfg.warm_start,
            seed: cfg.seed,
            min_dt: 1e-12,
        };
        let (traj, _) = run_mh_jump(&jump_cfg, &sys.rate, &sys.omega, &sys.target, &p0)?;
        write_csv(out, "mh_jump.csv", |w| traj.write_csv(w), &mut outputs)?;
        let (traj, _) = run_amcmc_jump(
            &jump_cfg,
            &spec,
            &schedule,
            &sys.rate,
            &sys.omega,
            &sys.target,
            &p0,
        )?;
        let name = format!("{}_jump.csv", method.name());
        write_csv(out, &name, |w| traj.write_csv(w), &mut outputs)?;
    }

    let config_json = serde_json::to_string_pretty(cfg)?;
    let manifest = serde_json::json!({
        "config": cfg,
        "seed": cfg.seed,
        "input_hash": format!("fnv1a64:{:016x}", fnv1a64(config_json.as_bytes())),
        "outputs": outputs,
    });
    let manifest_path = out.join("manifest.json");
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    println!("wrote {}", manifest_path.display());
    Ok(())
}

fn write_csv<F>(out: &Path, name: &str, write: F, outputs: &mut Vec<String>) -> anyhow::Result<()>
where
    F: FnOnce(&mut std::io::BufWriter<std::fs::File>) -> std::io::Result<()>,
{
    let path = out.join(name);
    let file = std::fs::File::create(&path).with_context(|| format!("creating {name}"))?;
    let mut buf = std::io::BufWriter::new(file);
    write(&mut buf)?;
    println!("wrote {}", path.display());
    outputs.push(name.to_string());
    Ok(())
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn parse_spec<T: serde::de::DeserializeOwned>(arg: &str, what: &str) -> anyhow::Result<T> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg).with_context(|| format!("reading {what} spec file {arg}"))?
    };
    serde_json::from_str(&text).with_context(|| format!("parsing {what} spec"))
}

/// Prints the spectral report for a graph/target pair as JSON.
pub fn spectrum(graph: &str, target: &str, damping: Option<f64>) -> anyhow::Result<()> {
    let graph: GraphSpec = parse_spec(graph, "graph")?;
    let target: TargetSpec = parse_spec(target, "target")?;
    let sys = build_system(&graph, &target)?;
    let report = spectral_report(&sys.rate, &sys.target, &sys.omega, damping)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

/// Fast invariant suite; one line per property, nonzero exit on failure.
pub fn validate() -> anyhow::Result<()> {
    let mut failures = 0usize;
    let mut check = |name: &str, ok: bool| {
        println!("{}: {}", name, if ok { "pass" } else { "FAIL" });
        if !ok {
            failures += 1;
        }
    };

    let sys = build_system(
        &GraphSpec::TwoLoop {
            loop_a: 3,
            loop_b: 3,
            bridge_len: 2,
        },
        &TargetSpec::Explicit {
            weights: amcmc::presets::two_loop_weights(),
        },
    )?;
    let n = sys.target.n();
    let p: Vec<f64> = {
        let raw: Vec<f64> = (0..n).map(|i| 1.0 + 0.3 * ((i * 7 % 5) as f64)).collect();
        let s: f64 = raw.iter().sum();
        raw.iter().map(|x| x / s).collect()
    };
    let psi: Vec<f64> = (0..n).map(|i| ((i * 3 % 7) as f64) * 0.4 - 1.0).collect();

    // analytic gradients vs central differences
    let mut grad_ok = true;
    for m in [Method::ChiSquared, Method::Kl, Method::LogFisher, Method::ConFisher] {
        let spec = MethodSpec::new(m);
        let g = potential_grad(&spec, &p, &sys.target, &sys.omega)?;
        let h = 1e-6;
        for i in 0..n {
            let mut pp = p.clone();
            pp[i] += h;
            let up = potential(&spec, &pp, &sys.target, &sys.omega)?;
            pp[i] -= 2.0 * h;
            let um = potential(&spec, &pp, &sys.target, &sys.omega)?;
            let fd = (up - um) / (2.0 * h);
            let scale = g.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1.0);
            if (fd - g[i]).abs() / scale > 1e-5 {
                grad_ok = false;
            }
        }
    }
    check("gradient matches finite differences", grad_ok);

    // response matrix structure
    let mut psd_ok = true;
    for m in [Method::ChiSquared, Method::Kl, Method::LogFisher, Method::ConFisher] {
        let k = onsager_matrix(&MethodSpec::new(m), &sys.omega, &p, &sys.target)?;
        let km = k.matrix();
        for i in 0..n {
            let row: f64 = (0..n).map(|j| km[(i, j)]).sum();
            if row.abs() > 1e-12 {
                psd_ok = false;
            }
            for j in 0..n {
                if (km[(i, j)] - km[(j, i)]).abs() > 1e-12 {
                    psd_ok = false;
                }
            }
        }
        let eig = nalgebra_min_eig(km);
        if eig < -1e-12 {
            psd_ok = false;
        }
    }
    check("response matrix symmetric, conservative, PSD", psd_ok);

    // warm-start identity: first accelerated density step = one MH step
    let mut warm_ok = true;
    let dt = 0.01;
    let expect = mh_master_step(&p, &sys.rate, dt)?;
    for m in [Method::ChiSquared, Method::Kl, Method::LogFisher, Method::ConFisher] {
        let spec = MethodSpec::new(m);
        let psi0 = init_momentum(m, &p, &sys.target)?;
        let state = SimplexState {
            p: p.clone(),
            psi: psi0,
            t: 0.0,
        };
        let next = staggered_step(
            &state,
            &spec,
            &DampingSchedule::Constant(1.0),
            dt,
            &sys.omega,
            &sys.target,
        )?;
        for i in 0..n {
            if (next.p[i] - expect[i]).abs() > 1e-12 {
                warm_ok = false;
            }
        }
    }
    check("warm-start first step equals master-equation step", warm_ok);

    // jump-rate faithfulness: p Qbar = psi K(p)
    let mut rate_ok = true;
    for m in [Method::ChiSquared, Method::Kl, Method::LogFisher, Method::ConFisher] {
        let spec = MethodSpec::new(m);
        let qbar = build_psi_rate_matrix(&spec, &p, &psi, &sys.omega, &sys.target)?;
        let expect = p_rhs(&spec, &p, &psi, &sys.omega, &sys.target)?;
        for j in 0..n {
            let got: f64 = (0..n).map(|i| p[i] * qbar.matrix()[(i, j)]).sum();
            if (got - expect[j]).abs() > 1e-12 {
                rate_ok = false;
            }
        }
    }
    check("jump rates reproduce the density velocity", rate_ok);

    // quadratic eigenvalue relation of the accelerated system
    let qs = q_spectrum(&sys.rate, &sys.target)?;
    let d = 0.8;
    let l = chi_system_matrix(&sys.target, &sys.omega, d);
    let map_ok = l_spectrum(&l)
        .iter()
        .filter(|z| z.im.abs() < 1e-10)
        .all(|z| map_check(z.re, d, &qs));
    check("real accelerated eigenvalues map into the rate spectrum", map_ok);

    // mass conservation on a short accelerated run
    let ode_cfg = OdeConfig::new(0.1, 500);
    let p0 = vec![1.0 / n as f64; n];
    let schedule = DampingSchedule::Constant(0.6);
    let (_, end) = integrate(
        &p0,
        &OdeMode::Accelerated(MethodSpec::new(Method::LogFisher), schedule),
        &sys.rate,
        &sys.omega,
        &sys.target,
        &ode_cfg,
    )?;
    let mass: f64 = end.p.iter().sum();
    check("mass conserved over a 500-step run", (mass - 1.0).abs() < 1e-10);

    if failures > 0 {
        anyhow::bail!("{failures} validation propert(y/ies) failed");
    }
    println!("all validation properties passed");
    Ok(())
}

fn nalgebra_min_eig(m: &nalgebra::DMatrix<f64>) -> f64 {
    nalgebra::SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}
