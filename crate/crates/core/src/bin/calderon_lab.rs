//! Experiment driver CLI: every figure-like output is reproducible from one
//! TOML config file. Subcommands cover the forward solvers, map assembly, CGO
//! decay probes, Runge trade-off curves, low-pass reconstruction, stability
//! sweeps, modulus fits, and the box eigenvalue gap explorer.

use calderon_core::boundary::{
    assemble_dtn, assemble_impedance_map, default_gamma_pair, operator_norm, DtnDomain, MapKind,
};
use calderon_core::bvp::{
    impedance_energy, solve_dirichlet, solve_impedance, BoundaryField, ImpedanceSign,
    ImpedanceSpec,
};
use calderon_core::cgo::decay_probe;
use calderon_core::experiment::{
    emit_report, fit_modulus, gap_explorer, run_stability_sweep, ExperimentConfig, FitModel,
    SweepMode,
};
use calderon_core::io::{atomic_write, fmt_f64, spectrum_csv, write_field, write_map, CsvTable};
use calderon_core::reconstruct::{choose_scales, h_minus1_error, lowpass_invert, CgoSampler, SampleMode};
use calderon_core::runge::{runge_approximate, svd_decompose, tradeoff_curve, RungeKind, RungeSetup};
use calderon_core::spectral::SchrodingerOp;
use calderon_core::torus::Torus;
use calderon_core::{BoundaryPatch, Result};
use clap::{Parser, Subcommand};
use num_complex::Complex;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "calderon-lab",
    about = "Numerical laboratory for high-frequency partial-data Schrödinger inverse problems"
)]
struct Cli {
    /// TOML experiment configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the config seed
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the config output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Rayon worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the configured forward problems once and persist the fields
    Forward,
    /// Assemble the boundary operator maps for q0 and the first perturbation
    Dtn,
    /// Run the CGO remainder decay probe over the configured tau list
    Cgo,
    /// Assemble the restriction operator, its SVD, and the trade-off curve
    Runge,
    /// Low-pass reconstruction from CGO Fourier samples (oracle route)
    Reconstruct,
    /// Stability sweep over (amplitude, lambda)
    Sweep,
    /// Fit modulus-of-continuity models to an existing records.csv
    Fit {
        /// records.csv produced by `sweep` (defaults to <out>/records.csv)
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Box eigenvalue gap explorer (spectra, gaps, Weyl-scaled ratio)
    Gaps,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli.config.as_ref().ok_or_else(|| {
        calderon_core::LabError::Config("--config PATH is required for this subcommand".into())
    })?;
    let text = std::fs::read_to_string(path)?;
    let mut cfg = ExperimentConfig::from_toml(&text)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.to_string_lossy().into_owned();
    }
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    PathBuf::from(&cfg.output_dir)
}

fn run_forward(cfg: &ExperimentConfig) -> Result<()> {
    let grid = cfg.grid()?;
    let q0 = cfg.q0_field(&grid)?;
    let op = SchrodingerOp::new(grid.clone(), q0)?;
    let lambda = cfg.lambdas[0];
    let dest = out_dir(cfg);
    std::fs::create_dir_all(&dest)?;
    let mut table = CsvTable::new(&["problem", "lambda", "residual", "grad_norm", "l2_norm"]);
    match cfg.mode {
        SweepMode::Dirichlet => {
            let phi = BoundaryField::from_fn(&grid, BoundaryPatch::full_boundary(&grid), |x| {
                Complex::new(x[0].exp(), 0.0)
            });
            let sol = solve_dirichlet(&op, lambda, &phi)?;
            let u: Vec<f64> = sol.interior.iter().map(|v| v.re).collect();
            write_field(&dest.join("forward_u.bin"), &grid, &u)?;
            let sd = op.eigensolve(12.min(op.n()))?;
            atomic_write(&dest.join("spectrum.csv"), spectrum_csv(&sd).as_bytes())?;
            table.push_row(vec![
                "dirichlet".into(),
                fmt_f64(lambda),
                fmt_f64(sol.residual),
                String::new(),
                String::new(),
            ]);
        }
        SweepMode::Impedance => {
            let kappa = cfg.kappa0 + cfg.kappa1;
            let spec =
                ImpedanceSpec::constant(&grid, cfg.impedance_a, lambda, ImpedanceSign::Plus, kappa)?;
            let f = vec![Complex::new(0.0, 0.0); grid.n_interior()];
            let phi = BoundaryField::from_fn(&grid, BoundaryPatch::full_boundary(&grid), |x| {
                Complex::new((x[1]).sin(), 0.0)
            });
            let sol = solve_impedance(&op, &spec, &f, &phi)?;
            let (grad, l2) = impedance_energy(&grid, &sol);
            let u_re: Vec<f64> = sol.interior.iter().map(|v| v.re).collect();
            write_field(&dest.join("forward_u.bin"), &grid, &u_re)?;
            table.push_row(vec![
                "impedance".into(),
                fmt_f64(lambda),
                fmt_f64(sol.residual),
                fmt_f64(grad),
                fmt_f64(l2),
            ]);
        }
    }
    table.write(&dest.join("records.csv"))?;
    println!("forward solve written to {}", dest.display());
    Ok(())
}

fn run_dtn(cfg: &ExperimentConfig) -> Result<()> {
    let grid = cfg.grid()?;
    let q0 = cfg.q0_field(&grid)?;
    let shape = cfg.perturbation_shape(&grid)?;
    let amp = cfg.amplitudes[0];
    let q1_vals: Vec<f64> = q0.values().iter().zip(&shape).map(|(a, s)| a + amp * s).collect();
    let q1 = calderon_core::PotentialField::new(&grid, q1_vals)?;
    let op0 = SchrodingerOp::new(grid.clone(), q0)?;
    let op1 = SchrodingerOp::new(grid.clone(), q1)?;
    let lambda = cfg.lambdas[0];
    let (g0, g1) = default_gamma_pair(&grid, cfg.gamma_axis, cfg.gamma_side.into(), cfg.gamma_inset)?;
    let sigma = BoundaryPatch::face(&grid, cfg.sigma_axis, cfg.sigma_side.into())?;
    let dest = out_dir(cfg);
    std::fs::create_dir_all(&dest)?;
    let mut table = CsvTable::new(&["map", "lambda", "norm_q0", "norm_q1", "diff_norm"]);
    match cfg.mode {
        SweepMode::Dirichlet => {
            let win = DtnDomain::windowed(&grid, &g0, &g1, 1.5, cfg.max_modes_per_axis)?;
            let m0 = assemble_dtn(&op0, lambda, MapKind::Lambda0, &win, &sigma)?;
            let m1 = assemble_dtn(&op1, lambda, MapKind::Lambda0, &win, &sigma)?;
            write_map(&dest.join("lambda0_q0.bin"), &m0)?;
            write_map(&dest.join("lambda0_q1.bin"), &m1)?;
            table.push_row(vec![
                "lambda0".into(),
                fmt_f64(lambda),
                fmt_f64(operator_norm(&m0)),
                fmt_f64(operator_norm(&m1)),
                fmt_f64(operator_norm(&m0.difference(&m1)?)),
            ]);
        }
        SweepMode::Impedance => {
            let kappa = cfg.kappa0 + cfg.kappa1;
            let spec =
                ImpedanceSpec::constant(&grid, cfg.impedance_a, lambda, ImpedanceSign::Plus, kappa)?;
            let win = DtnDomain::windowed(&grid, &g0, &g1, 0.5, cfg.max_modes_per_axis)?;
            let m0 = assemble_impedance_map(&op0, &spec, MapKind::ImpedanceN0, &win, &sigma)?;
            let m1 = assemble_impedance_map(&op1, &spec, MapKind::ImpedanceN0, &win, &sigma)?;
            write_map(&dest.join("n0_q0.bin"), &m0)?;
            write_map(&dest.join("n0_q1.bin"), &m1)?;
            table.push_row(vec![
                "n0".into(),
                fmt_f64(lambda),
                fmt_f64(operator_norm(&m0)),
                fmt_f64(operator_norm(&m1)),
                fmt_f64(operator_norm(&m0.difference(&m1)?)),
            ]);
        }
    }
    table.write(&dest.join("records.csv"))?;
    println!("maps written to {}", dest.display());
    Ok(())
}

fn run_cgo(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.taus.len() < 4 {
        return Err(calderon_core::LabError::Config(
            "cgo probe needs at least 4 taus in the config".into(),
        ));
    }
    let grid = cfg.grid()?;
    let partition = cfg.partition(&grid)?;
    let shape = cfg.perturbation_shape(&grid)?;
    let amp = cfg.amplitudes[0];
    let q: Vec<f64> = shape.iter().map(|s| amp * s).collect();
    let lambda = cfg.lambdas[0];
    let kappa = cfg.kappa0 + cfg.kappa1;
    let fit = decay_probe(
        &grid,
        &partition,
        &q,
        lambda,
        &[1.0, 0.0, 0.0],
        &cfg.taus,
        cfg.seed,
        kappa,
        1e-9,
    )?;
    let dest = out_dir(cfg);
    std::fs::create_dir_all(&dest)?;
    // persist one remainder field at the largest tau
    {
        use calderon_core::cgo::{faddeev_solve, make_xi_pair};
        let torus = Torus::enclosing(&grid);
        let q_torus: Vec<f64> = torus.embed_interior(&grid, &q).iter().map(|v| v.re).collect();
        let tau_max = cfg.taus.iter().cloned().fold(f64::MIN, f64::max);
        let dirs = make_xi_pair(&[1.0, 0.0, 0.0], tau_max, lambda, cfg.seed, kappa, cfg.lambda0.min(lambda))?;
        let sol = faddeev_solve(&torus, &q_torus, &dirs.xi1, 1e-9)?;
        let header = calderon_core::io::ComplexFieldHeader {
            dims: torus.shape().to_vec(),
            spacing: torus.spacing().to_vec(),
            xi_re: sol.xi.iter().map(|v| v.re).collect(),
            xi_im: sol.xi.iter().map(|v| v.im).collect(),
            lambda: sol.lambda,
            shift: sol.shift.clone(),
            residual: sol.residual,
        };
        calderon_core::io::write_complex_field(&dest.join("w_field.bin"), &torus, &sol.w, &header)?;
    }
    let mut table = CsvTable::new(&["im_xi", "w_l2_m0"]);
    for (x, y) in &fit.points {
        table.push_row(vec![fmt_f64(*x), fmt_f64(*y)]);
    }
    table.write(&dest.join("records.csv"))?;
    let json = serde_json::json!({
        "slope": fit.slope,
        "intercept": fit.intercept,
        "lambda": lambda,
        "taus": cfg.taus,
    });
    atomic_write(
        &dest.join("fits.json"),
        serde_json::to_string_pretty(&json).unwrap().as_bytes(),
    )?;
    println!("decay slope {:.4} written to {}", fit.slope, dest.display());
    Ok(())
}

fn run_runge(cfg: &ExperimentConfig) -> Result<()> {
    let grid = cfg.grid()?;
    let partition = cfg.partition(&grid)?;
    let q0 = cfg.q0_field(&grid)?;
    let op = SchrodingerOp::new(grid.clone(), q0)?;
    let lambda = cfg.lambdas[0];
    let (g0, g1) = default_gamma_pair(&grid, cfg.gamma_axis, cfg.gamma_side.into(), cfg.gamma_inset)?;
    let (domain, kind) = match cfg.mode {
        SweepMode::Dirichlet => (
            DtnDomain::windowed(&grid, &g0, &g1, 1.5, cfg.max_modes_per_axis)?,
            RungeKind::Dirichlet { lambda },
        ),
        SweepMode::Impedance => {
            let kappa = cfg.kappa0 + cfg.kappa1;
            let spec =
                ImpedanceSpec::constant(&grid, cfg.impedance_a, lambda, ImpedanceSign::Plus, kappa)?;
            (
                DtnDomain::windowed(&grid, &g0, &g1, 0.5, cfg.max_modes_per_axis)?,
                RungeKind::Impedance { spec },
            )
        }
    };
    let setup = RungeSetup {
        op: &op,
        partition: &partition,
        domain,
        kind,
    };
    let t = setup.assemble()?;
    let dec = svd_decompose(&t)?;
    // u = restriction of a global solution: combination of the two leading modes
    let mut u = dec.left_fields[0].clone();
    if dec.len() > 1 {
        for (o, v) in u.iter_mut().zip(&dec.left_fields[1]) {
            *o += Complex::new(0.5, 0.0) * v;
        }
    }
    let tmax = dec.singular_values[0] * 1.2;
    let tmin = dec.singular_values[dec.len().saturating_sub(1).min(24)] * 0.9;
    let tgrid: Vec<f64> = (0..10)
        .map(|k| tmax * (tmin / tmax).powf(k as f64 / 9.0))
        .collect();
    let records = tradeoff_curve(&setup, &dec, &u, &tgrid)?;
    let dest = out_dir(cfg);
    std::fs::create_dir_all(&dest)?;
    let mut table = CsvTable::new(&["t", "err", "datum_norm", "v_h2_norm", "kept"]);
    for r in &records {
        table.push_row(vec![
            fmt_f64(r.t),
            fmt_f64(r.err),
            fmt_f64(r.datum_norm),
            fmt_f64(r.v_h2_norm),
            r.kept.to_string(),
        ]);
    }
    table.write(&dest.join("records.csv"))?;
    let mut sv = CsvTable::new(&["j", "tau_j"]);
    for (j, s) in dec.singular_values.iter().enumerate() {
        sv.push_row(vec![j.to_string(), fmt_f64(*s)]);
    }
    sv.write(&dest.join("singular_values.csv"))?;
    let final_err = runge_approximate(&setup, &dec, &u, tgrid[tgrid.len() - 1])?.err;
    println!(
        "runge curve with {} modes written to {} (smallest-threshold err {:.3e})",
        dec.len(),
        dest.display(),
        final_err
    );
    Ok(())
}

fn run_reconstruct(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.taus.is_empty() {
        return Err(calderon_core::LabError::Config(
            "reconstruct needs a taus list in the config".into(),
        ));
    }
    let grid = cfg.grid()?;
    let partition = cfg.partition(&grid)?;
    let q0 = cfg.q0_field(&grid)?;
    let shape = cfg.perturbation_shape(&grid)?;
    let amp = cfg.amplitudes[0];
    let dq: Vec<f64> = shape.iter().map(|s| amp * s).collect();
    let q1_vals: Vec<f64> = q0.values().iter().zip(&dq).map(|(a, d)| a + d).collect();
    let q1 = calderon_core::PotentialField::new(&grid, q1_vals)?;
    let op1 = SchrodingerOp::new(grid.clone(), q1)?;
    let op0 = SchrodingerOp::new(grid.clone(), q0)?;
    let lambda = cfg.lambdas[0];
    let kappa = cfg.kappa0 + cfg.kappa1;
    let torus = Torus::enclosing(&grid);
    let dq_torus: Vec<f64> = torus.embed_interior(&grid, &dq).iter().map(|v| v.re).collect();
    let dest = out_dir(cfg);
    std::fs::create_dir_all(&dest)?;
    let mut table = CsvTable::new(&["tau", "s", "n_modes", "abs_h_minus1", "rel_h_minus1"]);
    let mut all_ok = true;
    for &tau in &cfg.taus {
        let scales = choose_scales(tau, grid.dim(), None)?;
        let sampler = CgoSampler::new(&op1, &op0, &partition, lambda, tau, kappa, cfg.seed, 1e-9)?;
        let set = sampler.sample_set(scales.s, SampleMode::Oracle)?;
        let (rec, _residue) = lowpass_invert(&set, &torus)?;
        let (abs, rel) = h_minus1_error(&torus, &rec, &dq_torus);
        all_ok &= rel.map_or(true, |r| r.is_finite());
        let rec_on_grid = torus.restrict_to_grid(
            &grid,
            &rec.iter().map(|&v| num_complex::Complex::new(v, 0.0)).collect::<Vec<_>>(),
        );
        write_field(&dest.join(format!("q_rec_tau{tau}.bin")), &grid, &rec_on_grid)?;
        table.push_row(vec![
            fmt_f64(tau),
            fmt_f64(scales.s),
            set.entries.len().to_string(),
            fmt_f64(abs),
            rel.map(fmt_f64).unwrap_or_default(),
        ]);
        // persist one sample CSV per tau
        let mut samples = CsvTable::new(&["m0", "m1", "m2", "re", "im", "tau", "budget"]);
        for e in &set.entries {
            samples.push_row(vec![
                e.mode_index[0].to_string(),
                e.mode_index[1].to_string(),
                e.mode_index[2].to_string(),
                fmt_f64(e.value.re),
                fmt_f64(e.value.im),
                fmt_f64(e.tau),
                fmt_f64(e.budget),
            ]);
        }
        samples.write(&dest.join(format!("samples_tau{tau}.csv")))?;
    }
    table.write(&dest.join("records.csv"))?;
    if !all_ok {
        return Err(calderon_core::LabError::Degenerate(
            "reconstruction produced non-finite errors".into(),
        ));
    }
    println!("reconstruction records written to {}", dest.display());
    Ok(())
}

fn run_sweep(cfg: &ExperimentConfig) -> Result<()> {
    let out = run_stability_sweep(cfg)?;
    let dest = out_dir(cfg);
    emit_report(cfg, &out, &[], &dest)?;
    println!(
        "{} records ({} skipped) written to {}",
        out.records.len(),
        out.skipped.len(),
        dest.display()
    );
    if out.skipped.is_empty() {
        Ok(())
    } else {
        Err(calderon_core::LabError::Degenerate(format!(
            "{} sweep points skipped",
            out.skipped.len()
        )))
    }
}

fn run_fit(cfg: &ExperimentConfig, records: Option<PathBuf>) -> Result<()> {
    let path = records.unwrap_or_else(|| out_dir(cfg).join("records.csv"));
    let text = std::fs::read_to_string(&path)?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| calderon_core::LabError::Config("empty records.csv".into()))?
        .split(',')
        .collect();
    let col = |name: &str| header.iter().position(|h| *h == name);
    let iy = col("dq_h_minus1")
        .ok_or_else(|| calderon_core::LabError::Config("missing dq_h_minus1".into()))?;
    let ix0 = col("d_lambda0_norm");
    let ix1 = col("d_lambda1_norm");
    let mut pts0 = Vec::new();
    let mut pts1 = Vec::new();
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        let y: f64 = cells[iy].parse().unwrap_or(f64::NAN);
        if let Some(i) = ix0 {
            if let Ok(x) = cells[i].parse::<f64>() {
                pts0.push((x, y));
            }
        }
        if let Some(i) = ix1 {
            if let Ok(x) = cells[i].parse::<f64>() {
                pts1.push((x, y));
            }
        }
    }
    let dim = cfg.box_sides.len();
    let mut fits = Vec::new();
    if pts0.len() >= 5 {
        fits.push(fit_modulus(&pts0, FitModel::DoubleLog, dim)?);
    }
    if pts1.len() >= 5 {
        fits.push(fit_modulus(&pts1, FitModel::SingleLog, dim)?);
    }
    if fits.is_empty() {
        return Err(calderon_core::LabError::Degenerate(
            "no fittable columns with at least 5 in-domain records".into(),
        ));
    }
    let json = serde_json::to_string_pretty(&fits)
        .map_err(|e| calderon_core::LabError::Serde(e.to_string()))?;
    atomic_write(&out_dir(cfg).join("fits.json"), json.as_bytes())?;
    for f in &fits {
        println!(
            "{:?}: C = {:.4e}, kendall tau = {:.3}, R2 = {:.4} ({} records)",
            f.model, f.c, f.kendall_tau, f.r_squared, f.n_used
        );
    }
    Ok(())
}

fn run_gaps(cfg: &ExperimentConfig) -> Result<()> {
    let mu = if cfg.gap_mu.is_empty() {
        vec![1.0, 1.0, 1.0]
    } else {
        cfg.gap_mu.clone()
    };
    let count = if cfg.gap_count < 10 { 100 } else { cfg.gap_count };
    let rep = gap_explorer(&mu, count)?;
    let dest = out_dir(cfg);
    std::fs::create_dir_all(&dest)?;
    let mut table = CsvTable::new(&["k", "beta_sum", "gap_to_next"]);
    for (k, v) in rep.eigenvalues.iter().enumerate() {
        let gap = rep.gaps.get(k).map(|g| fmt_f64(*g)).unwrap_or_default();
        table.push_row(vec![(k + 1).to_string(), fmt_f64(*v), gap]);
    }
    table.write(&dest.join("records.csv"))?;
    let mut dt = CsvTable::new(&["value", "multiplicity", "beta_product_printed"]);
    for ((v, m), p) in rep.distinct.iter().zip(&rep.products_printed) {
        dt.push_row(vec![fmt_f64(*v), m.to_string(), fmt_f64(*p)]);
    }
    dt.write(&dest.join("distinct.csv"))?;
    let json = serde_json::json!({
        "mu": mu,
        "count": count,
        "weyl_c": rep.weyl_c,
        "all_simple": rep.all_simple,
    });
    atomic_write(
        &dest.join("gaps.json"),
        serde_json::to_string_pretty(&json).unwrap().as_bytes(),
    )?;
    println!(
        "{} eigenvalues (all simple: {}), max gap_k/k^(1/n) = {:.4}",
        rep.eigenvalues.len(),
        rep.all_simple,
        rep.weyl_c
    );
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .ok();
    }
    let result = (|| -> Result<()> {
        let cfg = load_config(&cli)?;
        match &cli.command {
            Command::Forward => run_forward(&cfg),
            Command::Dtn => run_dtn(&cfg),
            Command::Cgo => run_cgo(&cfg),
            Command::Runge => run_runge(&cfg),
            Command::Reconstruct => run_reconstruct(&cfg),
            Command::Sweep => run_sweep(&cfg),
            Command::Fit { records } => run_fit(&cfg, records.clone()),
            Command::Gaps => run_gaps(&cfg),
        }
    })();
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
