//! Command runners and the verdict table they share.
//!
//! Every command writes CSV files with a stable column schema into the
//! output directory and prints a short human summary; the exit status of
//! the process is 0 exactly when every verdict row passes.

use std::path::Path;

use nsk_core::decay::{
    linear_decay_oracle, run_decay_suite, seeded_band_data, DecayExperiment, DecayFit, DecayMode,
    DecaySeries, DecayTarget, SuiteOptions,
};
use nsk_core::integrator::{integrate_observed, RunStatus, StepperConfig};
use nsk_core::io::{save_trajectory, write_series_csv};
use nsk_core::model::{spectral_eigenvalues, PhysParams, Regime};

use crate::manifest::{CliError, CliResult, FitMode, Resolved};

/// One row of the pass/fail table: `value` compared against `bound` under
/// `relation`. Non-finite values never pass.
#[derive(Clone, Debug)]
pub struct Verdict {
    pub check: String,
    pub configuration: String,
    pub value: f64,
    pub relation: Relation,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    AtMost,
    AtLeast,
}

impl Relation {
    fn symbol(self) -> &'static str {
        match self {
            Relation::AtMost => "<=",
            Relation::AtLeast => ">=",
        }
    }
}

impl Verdict {
    pub fn at_most(
        check: impl Into<String>,
        configuration: impl Into<String>,
        value: f64,
        bound: f64,
    ) -> Self {
        Verdict {
            check: check.into(),
            configuration: configuration.into(),
            value,
            relation: Relation::AtMost,
            bound,
            pass: value.is_finite() && value <= bound,
        }
    }

    pub fn at_least(
        check: impl Into<String>,
        configuration: impl Into<String>,
        value: f64,
        bound: f64,
    ) -> Self {
        Verdict {
            check: check.into(),
            configuration: configuration.into(),
            value,
            relation: Relation::AtLeast,
            bound,
            pass: value.is_finite() && value >= bound,
        }
    }
}

/// Write the table as `check,configuration,value,relation,bound,pass`.
pub fn write_verdicts(path: &Path, rows: &[Verdict]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| CliError::Run(format!("{}: {e}", path.display())))?;
    w.write_record(["check", "configuration", "value", "relation", "bound", "pass"])
        .map_err(|e| CliError::Run(e.to_string()))?;
    for r in rows {
        w.write_record([
            r.check.as_str(),
            r.configuration.as_str(),
            &format!("{}", r.value),
            r.relation.symbol(),
            &format!("{}", r.bound),
            if r.pass { "pass" } else { "fail" },
        ])
        .map_err(|e| CliError::Run(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Run(e.to_string()))?;
    Ok(())
}

pub fn print_verdicts(rows: &[Verdict]) {
    for r in rows {
        println!(
            "[{}] {} ({}): {} {} {}",
            if r.pass { "pass" } else { "FAIL" },
            r.check,
            r.configuration,
            r.value,
            r.relation.symbol(),
            r.bound
        );
    }
}

pub fn all_pass(rows: &[Verdict]) -> bool {
    rows.iter().all(|r| r.pass)
}

/// Integrate seeded band data and archive the sampled trajectory.
pub fn simulate(res: &Resolved) -> CliResult<bool> {
    let sim = res.simulate.as_ref().expect("resolution checked the section");
    let grid = res.grid()?;
    let initial = seeded_band_data(grid, sim.sigma1, sim.amplitude, sim.cutoff, res.seed)
        .map_err(|e| CliError::Usage(format!("[simulate] initial data: {e}")))?;
    let sample_times = if sim.sample_times.is_empty() {
        (0..8).map(|i| sim.t_end * i as f64 / 7.0).collect()
    } else {
        sim.sample_times.clone()
    };
    let config = StepperConfig {
        dt: sim.dt,
        scheme: sim.scheme.to_scheme(),
        dealias: sim.dealias,
        linear_only: sim.linear_only,
        t_end: sim.t_end,
        sample_times,
    };
    config
        .validate()
        .map_err(|e| CliError::Usage(format!("[simulate] {e}")))?;

    let mut traj = integrate_observed(&initial, &config, &res.phys, None, true, &mut |_, _| {})?;
    traj.seed = res.seed;

    let times: Vec<f64> = traj.samples.iter().map(|(t, _)| *t).collect();
    let density: Vec<f64> = traj
        .samples
        .iter()
        .map(|(_, s)| s.a().l2_norm_spectral())
        .collect();
    let momentum: Vec<f64> = traj
        .samples
        .iter()
        .map(|(_, s)| s.m().l2_norm_spectral())
        .collect();
    write_series_csv(
        &res.output_dir.join("norms.csv"),
        "time",
        &times,
        &[
            ("density_l2".to_string(), density),
            ("momentum_l2".to_string(), momentum),
        ],
    )?;
    if !traj.samples.is_empty() {
        save_trajectory(&res.output_dir.join("archive"), &traj)?;
    }

    match &traj.status {
        RunStatus::Completed => {
            println!(
                "simulate: completed to t = {} with {} archived samples",
                config.t_end,
                traj.samples.len()
            );
            Ok(true)
        }
        RunStatus::Aborted { reason, time } => {
            println!(
                "simulate: aborted at t = {time}: {reason}; {} samples retained",
                traj.samples.len()
            );
            Ok(false)
        }
    }
}

fn series_label(s: &DecaySeries) -> String {
    format!("{}_l{}", s.target.label(), s.l)
}

fn write_fit_table(path: &Path, series: &[DecaySeries]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| CliError::Run(format!("{}: {e}", path.display())))?;
    w.write_record([
        "target",
        "l",
        "slope",
        "predicted",
        "residual",
        "window_lo",
        "window_hi",
    ])
    .map_err(|e| CliError::Run(e.to_string()))?;
    for s in series {
        if let Some(f) = s.fit {
            w.write_record([
                s.target.label(),
                &format!("{}", s.l),
                &format!("{}", f.slope),
                &format!("{}", f.predicted),
                &format!("{}", f.residual),
                &format!("{}", f.window.0),
                &format!("{}", f.window.1),
            ])
            .map_err(|e| CliError::Run(e.to_string()))?;
        }
    }
    w.flush().map_err(|e| CliError::Run(e.to_string()))?;
    Ok(())
}

/// Fitted momentum slope minus density slope at the first order where both
/// exist; the bookkeeping puts this difference at exactly -1/2.
fn matched_gap(l_values: &[f64], series: &[DecaySeries]) -> Option<f64> {
    for &l in l_values {
        let find = |target: DecayTarget| {
            series
                .iter()
                .find(|r| r.target == target && r.l == l)
                .and_then(|r| r.fit)
        };
        if let (Some(fm), Some(fa)) = (find(DecayTarget::Momentum), find(DecayTarget::Density)) {
            return Some(fm.slope - fa.slope);
        }
    }
    None
}

fn slope_verdicts(series: &[DecaySeries], tol: f64, rows: &mut Vec<Verdict>) {
    for s in series {
        if let Some(DecayFit {
            slope, predicted, ..
        }) = s.fit
        {
            rows.push(Verdict::at_most(
                "slope-error",
                series_label(s),
                (slope - predicted).abs(),
                tol,
            ));
        }
    }
}

/// Fit decay exponents against the bookkeeping, on the oracle or a grid.
pub fn decay_fit(res: &Resolved) -> CliResult<bool> {
    let fit = res.decay_fit.as_ref().expect("resolution checked the section");
    let grid = res.grid()?;
    let mode = match fit.mode {
        FitMode::Oracle => DecayMode::LinearOracle,
        FitMode::GridLinear => DecayMode::GridLinear,
        FitMode::GridNonlinear => DecayMode::GridNonlinear,
    };
    let exp = DecayExperiment {
        dim: fit.dim.unwrap_or(grid.dim),
        sigma1: fit.sigma1,
        q: fit.q,
        p: fit.p,
        r: fit.r,
        l_values: fit.l_values.clone(),
        amplitude: fit.amplitude,
        cutoff: fit.cutoff,
        t0: fit.t0,
        fit_window: fit.fit_window,
        samples_per_decade: fit.samples_per_decade,
        seed: res.seed,
        mode,
    };
    exp.validate()
        .map_err(|e| CliError::Usage(format!("[decay-fit] {e}")))?;

    let mut rows: Vec<Verdict> = Vec::new();
    let completed;
    let (times, series) = if mode == DecayMode::LinearOracle {
        let report = linear_decay_oracle(&exp, &res.phys)?;
        completed = true;
        if let Some(gap) = matched_gap(&exp.l_values, &report.series) {
            rows.push(Verdict::at_most(
                "slope-gap-error",
                "momentum minus density at matching order, against -1/2",
                (gap + 0.5).abs(),
                fit.gap_tol,
            ));
        }
        (report.times, report.series)
    } else {
        let stepper = StepperConfig {
            dt: fit.dt.expect("resolution checked dt"),
            scheme: fit.scheme.to_scheme(),
            dealias: fit
                .dealias
                .unwrap_or(fit.mode == FitMode::GridNonlinear),
            linear_only: mode == DecayMode::GridLinear,
            t_end: fit.fit_window.1,
            sample_times: Vec::new(),
        };
        let opts = SuiteOptions {
            gevrey_c0: fit.gevrey_c0.clone(),
            gevrey_j0: fit.gevrey_j0,
            gevrey_bound_factor: fit.gevrey_bound_factor,
            high_band_j0: fit.high_band_j0,
            high_band_late_start: fit.high_band_late_start,
        };
        let report = run_decay_suite(&exp, &res.phys, grid, &stepper, &opts)?;
        match &report.status {
            RunStatus::Completed => completed = true,
            RunStatus::Aborted { reason, time } => {
                completed = false;
                println!("decay-fit: run aborted at t = {time}: {reason}");
            }
        }
        if let Some(gap) = report.remark_gap {
            rows.push(Verdict::at_most(
                "slope-gap-error",
                "momentum minus density at matching order, against -1/2",
                (gap + 0.5).abs(),
                fit.gap_tol,
            ));
        }
        for g in &report.gevrey {
            let value = if g.overflow.is_some() {
                f64::INFINITY
            } else {
                g.max_over_initial
            };
            rows.push(Verdict::at_most(
                "gevrey-low-band",
                format!("c0={}, j0={}", g.c0, fit.gevrey_j0),
                value,
                fit.gevrey_bound_factor,
            ));
        }
        if let Some(hb) = &report.high_band {
            if let Some(skip) = &hb.skipped {
                println!("decay-fit: high-band check skipped: {skip}");
            } else {
                if let Some(rate) = hb.linear_rate {
                    rows.push(Verdict::at_least(
                        "high-band-rate",
                        format!("j0={}, fitted against 0.9x floor", hb.j0),
                        rate,
                        0.9 * hb.rate_floor,
                    ));
                }
                if let Some(slope) = hb.sqrt_slope {
                    rows.push(Verdict::at_most(
                        "high-band-sqrt-slope",
                        format!("j0={}", hb.j0),
                        slope,
                        0.0,
                    ));
                }
            }
        }
        println!("decay-fit: box margin {}", report.box_margin);
        (report.times, report.series)
    };

    slope_verdicts(&series, fit.slope_tol, &mut rows);

    let columns: Vec<(String, Vec<f64>)> = series
        .iter()
        .map(|s| (series_label(s), s.values.clone()))
        .collect();
    write_series_csv(&res.output_dir.join("series.csv"), "time", &times, &columns)?;
    write_fit_table(&res.output_dir.join("fits.csv"), &series)?;
    write_verdicts(&res.output_dir.join("verdicts.csv"), &rows)?;
    print_verdicts(&rows);
    Ok(completed && all_pass(&rows))
}

/// Tabulate the per-mode eigenvalues and report the regime.
pub fn spectrum(res: &Resolved) -> CliResult<bool> {
    let grid = res.grid()?;
    let p: &PhysParams = &res.phys;
    let mut xi_sq: Vec<f64> = grid
        .lattice()
        .map(|(_, _, xi)| xi.iter().map(|&x| x * x).sum())
        .collect();
    xi_sq.sort_by(|a, b| a.partial_cmp(b).expect("lattice norms are finite"));
    xi_sq.dedup();

    let path = res.output_dir.join("eigenvalues.csv");
    let mut w = csv::Writer::from_path(&path)
        .map_err(|e| CliError::Run(format!("{}: {e}", path.display())))?;
    w.write_record([
        "xi_sq",
        "plus_re",
        "plus_im",
        "minus_re",
        "minus_im",
        "solenoidal",
    ])
    .map_err(|e| CliError::Run(e.to_string()))?;
    for &r2 in &xi_sq {
        let eig = spectral_eigenvalues(r2, p);
        w.write_record([
            format!("{r2}"),
            format!("{}", eig.plus.re + 0.0),
            format!("{}", eig.plus.im + 0.0),
            format!("{}", eig.minus.re + 0.0),
            format!("{}", eig.minus.im + 0.0),
            format!("{}", eig.solenoidal + 0.0),
        ])
        .map_err(|e| CliError::Run(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Run(e.to_string()))?;

    let rows = vec![Verdict::at_most(
        "regime-parabolic",
        format!("nu_bar={}, kappa_bar={}", p.nu_bar, p.kappa_bar),
        4.0 * p.kappa_bar / (p.nu_bar * p.nu_bar),
        1.0,
    )];
    write_verdicts(&res.output_dir.join("verdicts.csv"), &rows)?;
    match p.regime {
        Regime::Parabolic => {
            println!("regime: parabolic; acoustic waves are not available");
        }
        Regime::Oscillatory => {
            println!("regime: oscillatory; complex eigenvalue pair at every nonzero wavenumber");
        }
    }
    print_verdicts(&rows);
    println!("spectrum: {} distinct |xi|^2 values tabulated", xi_sq.len());
    Ok(all_pass(&rows))
}
