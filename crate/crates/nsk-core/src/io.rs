//! On-disk formats: sparse coefficient snapshots, run archives, and series
//! tables.
//!
//! A snapshot is a CSV file that pins the box and the sample instant in two
//! leading records, then lists every nonzero coefficient as
//! `index,comp,re,im` (component 0 is the density perturbation, components
//! `1..=dim` the momentum axes). Values are printed with the shortest
//! representation that parses back to the same float, so a save/load round
//! trip is exact. An archive is a directory holding `manifest.json` plus one
//! snapshot per sample; the manifest stores the constitutive closures rather
//! than the derived coefficients, so loading re-runs the same validation as
//! the original construction.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::grid::GridSpec;
use crate::integrator::{RunStatus, StepperConfig, Trajectory};
use crate::model::{PhysParams, State};
use crate::closure::Polynomial;

/// Constitutive closures in plain coefficient lists, the exchange form used
/// by manifests and archives. [`ClosureSpec::build`] reconstructs validated
/// [`PhysParams`], so a tampered file cannot smuggle in an inconsistent
/// parameter set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosureSpec {
    pub rho_star: f64,
    /// Pressure law coefficients, constant term first.
    pub pressure: Vec<f64>,
    pub shear: Vec<f64>,
    pub bulk: Vec<f64>,
    pub capillarity: Vec<f64>,
}

impl ClosureSpec {
    pub fn from_params(p: &PhysParams) -> ClosureSpec {
        ClosureSpec {
            rho_star: p.rho_star,
            pressure: p.pressure.coeffs().to_vec(),
            shear: p.shear.coeffs().to_vec(),
            bulk: p.bulk.coeffs().to_vec(),
            capillarity: p.capillarity.coeffs().to_vec(),
        }
    }

    pub fn build(&self) -> Result<PhysParams> {
        PhysParams::from_closures(
            self.rho_star,
            Polynomial::new(self.pressure.clone()),
            Polynomial::new(self.shear.clone()),
            Polynomial::new(self.bulk.clone()),
            Polynomial::new(self.capillarity.clone()),
        )
    }
}

/// Write one state as a sparse coefficient CSV.
pub fn save_state_csv(path: &Path, state: &State, time: f64) -> Result<()> {
    let grid = state.grid();
    let mut w = csv::WriterBuilder::new().flexible(true).from_path(path)?;
    w.write_record(&[
        "grid".to_string(),
        grid.dim.to_string(),
        grid.n.to_string(),
        grid.box_length.to_string(),
    ])?;
    w.write_record(&["time".to_string(), time.to_string()])?;
    w.write_record(&["index", "comp", "re", "im"])?;
    let mut comps: Vec<&SpectralField> = vec![state.a()];
    comps.push(state.m());
    let mut col = 0usize;
    for part in comps {
        for c in 0..part.ncomp() {
            for (idx, z) in part.coeffs(c).iter().enumerate() {
                if z.re == 0.0 && z.im == 0.0 {
                    continue;
                }
                w.write_record(&[
                    idx.to_string(),
                    col.to_string(),
                    z.re.to_string(),
                    z.im.to_string(),
                ])?;
            }
            col += 1;
        }
    }
    w.flush()?;
    Ok(())
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Archive(format!("cannot parse {what} from {s:?}")))
}

fn parse_usize(s: &str, what: &str) -> Result<usize> {
    s.trim()
        .parse::<usize>()
        .map_err(|_| Error::Archive(format!("cannot parse {what} from {s:?}")))
}

/// Load a snapshot written by [`save_state_csv`]; returns the sample instant
/// and the state, re-validated (real-valued, zero-mean).
pub fn load_state_csv(path: &Path) -> Result<(f64, State)> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(false)
        .from_path(path)?;
    let mut records = rdr.records();
    let grid_rec = records
        .next()
        .ok_or_else(|| Error::Archive(format!("{}: empty snapshot", path.display())))??;
    if grid_rec.len() != 4 || &grid_rec[0] != "grid" {
        return Err(Error::Archive(format!(
            "{}: first record must be grid,dim,n,box_length",
            path.display()
        )));
    }
    let dim = parse_usize(&grid_rec[1], "dim")?;
    let n = parse_usize(&grid_rec[2], "n")?;
    let box_length = parse_f64(&grid_rec[3], "box_length")?;
    let grid = GridSpec::new(dim, n, box_length)?;
    let time_rec = records
        .next()
        .ok_or_else(|| Error::Archive(format!("{}: missing time record", path.display())))??;
    if time_rec.len() != 2 || &time_rec[0] != "time" {
        return Err(Error::Archive(format!(
            "{}: second record must be time,<t>",
            path.display()
        )));
    }
    let time = parse_f64(&time_rec[1], "time")?;
    let head = records
        .next()
        .ok_or_else(|| Error::Archive(format!("{}: missing column header", path.display())))??;
    if head.iter().collect::<Vec<_>>() != ["index", "comp", "re", "im"] {
        return Err(Error::Archive(format!(
            "{}: expected header index,comp,re,im",
            path.display()
        )));
    }
    let total = grid.len();
    let ncols = 1 + dim;
    let mut data = vec![vec![Complex64::new(0.0, 0.0); total]; ncols];
    for rec in records {
        let rec = rec?;
        if rec.len() != 4 {
            return Err(Error::Archive(format!(
                "{}: coefficient rows need 4 fields, got {}",
                path.display(),
                rec.len()
            )));
        }
        let idx = parse_usize(&rec[0], "index")?;
        let col = parse_usize(&rec[1], "comp")?;
        if idx >= total || col >= ncols {
            return Err(Error::Archive(format!(
                "{}: coefficient ({idx}, {col}) outside grid with {total} modes, {ncols} components",
                path.display()
            )));
        }
        data[col][idx] = Complex64::new(parse_f64(&rec[2], "re")?, parse_f64(&rec[3], "im")?);
    }
    let m_comps = data.split_off(1);
    let a = SpectralField::from_coefficients(grid, data)?;
    let m = SpectralField::from_coefficients(grid, m_comps)?;
    Ok((time, State::new(a, m)?))
}

#[derive(Serialize, Deserialize)]
struct SampleEntry {
    time: f64,
    file: String,
}

#[derive(Serialize, Deserialize)]
struct ArchiveManifest {
    grid: GridSpec,
    closures: ClosureSpec,
    config: StepperConfig,
    seed: u64,
    status: RunStatus,
    samples: Vec<SampleEntry>,
}

const MANIFEST_NAME: &str = "manifest.json";

/// Write a sampled trajectory as an archive directory. The manifest is
/// written last, so a directory without one is an interrupted save.
pub fn save_trajectory(dir: &Path, traj: &Trajectory) -> Result<()> {
    fs::create_dir_all(dir)?;
    let grid = traj
        .samples
        .first()
        .map(|(_, s)| s.grid())
        .ok_or_else(|| Error::Archive("refusing to archive a run with no stored samples".into()))?;
    let mut samples = Vec::with_capacity(traj.samples.len());
    for (i, (t, state)) in traj.samples.iter().enumerate() {
        let file = format!("sample_{i:04}.csv");
        save_state_csv(&dir.join(&file), state, *t)?;
        samples.push(SampleEntry { time: *t, file });
    }
    let manifest = ArchiveManifest {
        grid,
        closures: ClosureSpec::from_params(&traj.params),
        config: traj.config.clone(),
        seed: traj.seed,
        status: traj.status.clone(),
        samples,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(dir.join(MANIFEST_NAME), text)?;
    Ok(())
}

/// Load an archive directory back into a [`Trajectory`]. Closures are
/// rebuilt through the validating constructor and every snapshot is checked
/// against the manifest (grid and sample instant), so the result is as
/// trustworthy as a fresh run.
pub fn load_trajectory(dir: &Path) -> Result<Trajectory> {
    let manifest_path: PathBuf = dir.join(MANIFEST_NAME);
    if !manifest_path.is_file() {
        return Err(Error::Archive(format!(
            "{}: no {MANIFEST_NAME} (interrupted save or wrong directory)",
            dir.display()
        )));
    }
    let manifest: ArchiveManifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)?;
    let params = manifest.closures.build()?;
    manifest.config.validate()?;
    let mut samples = Vec::with_capacity(manifest.samples.len());
    for entry in &manifest.samples {
        let (t, state) = load_state_csv(&dir.join(&entry.file))?;
        if state.grid() != manifest.grid {
            return Err(Error::Archive(format!(
                "{}: snapshot grid disagrees with manifest",
                entry.file
            )));
        }
        if (t - entry.time).abs() > 1e-12 * entry.time.abs().max(1.0) {
            return Err(Error::Archive(format!(
                "{}: snapshot time {t} disagrees with manifest time {}",
                entry.file, entry.time
            )));
        }
        samples.push((entry.time, state));
    }
    Ok(Trajectory {
        samples,
        status: manifest.status,
        params,
        config: manifest.config,
        seed: manifest.seed,
    })
}

/// Write a time series table: first column `time_label`, one column per
/// named series, all of the same length.
pub fn write_series_csv(
    path: &Path,
    time_label: &str,
    times: &[f64],
    columns: &[(String, Vec<f64>)],
) -> Result<()> {
    for (name, values) in columns {
        if values.len() != times.len() {
            return Err(Error::ShapeMismatch(format!(
                "column {name:?} has {} values for {} times",
                values.len(),
                times.len()
            )));
        }
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![time_label.to_string()];
    header.extend(columns.iter().map(|(name, _)| name.clone()));
    w.write_record(&header)?;
    for (i, t) in times.iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(columns.iter().map(|(_, v)| v[i].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a table written by [`write_series_csv`]; returns the time column and
/// the named series.
pub fn read_series_csv(path: &Path) -> Result<(Vec<f64>, Vec<(String, Vec<f64>)>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut records = rdr.records();
    let header = records
        .next()
        .ok_or_else(|| Error::Archive(format!("{}: empty table", path.display())))??;
    if header.is_empty() {
        return Err(Error::Archive(format!("{}: header has no columns", path.display())));
    }
    let mut times = Vec::new();
    let mut columns: Vec<(String, Vec<f64>)> = header
        .iter()
        .skip(1)
        .map(|name| (name.to_string(), Vec::new()))
        .collect();
    for rec in records {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::Archive(format!(
                "{}: row with {} fields under a {}-column header",
                path.display(),
                rec.len(),
                header.len()
            )));
        }
        times.push(parse_f64(&rec[0], "time")?);
        for (j, (name, values)) in columns.iter_mut().enumerate() {
            values.push(parse_f64(&rec[j + 1], name)?);
        }
    }
    Ok((times, columns))
}
