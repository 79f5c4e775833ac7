//! Dataset directories: `manifest.json`, `split.json` (when split),
//! `initial.csv` with one `F0` row per trajectory, and one
//! `traj_NNNN.csv` per trajectory with columns
//! `t, x_0..x_{n-1}, F_0..F_{f-1}, cond_id`.

use std::fs;
use std::path::{Path, PathBuf};

use super::{DataError, Dataset, DatasetManifest, Trajectory};
use crate::autodiff::Tensor;

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> DataError + '_ {
    move |e| DataError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn fmt_err(path: &Path, message: impl Into<String>) -> DataError {
    DataError::Format {
        path: path.display().to_string(),
        message: message.into(),
    }
}

/// 17 significant digits: enough to round-trip any `f64`.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn trajectory_path(dir: &Path, id: usize) -> PathBuf {
    dir.join(format!("traj_{id:04}.csv"))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, DataError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_fail(path: &Path) -> impl Fn(csv::Error) -> DataError + '_ {
    move |e| DataError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<(), DataError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let m = &dataset.manifest;
    let manifest_path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(m).expect("manifest serializes");
    fs::write(&manifest_path, json + "\n").map_err(io_err(&manifest_path))?;
    if let Some(split) = &m.split {
        let p = dir.join("split.json");
        let json = serde_json::to_string_pretty(split).expect("split serializes");
        fs::write(&p, json + "\n").map_err(io_err(&p))?;
    }

    let p = dir.join("initial.csv");
    let mut w = csv_writer(&p)?;
    let mut header = vec!["traj".to_string()];
    header.extend((0..m.f).map(|j| format!("F_{j}")));
    w.write_record(&header).map_err(csv_fail(&p))?;
    for t in &dataset.trajectories {
        let mut rec = vec![t.id.to_string()];
        rec.extend(t.initial.data().iter().map(|v| num(*v)));
        w.write_record(&rec).map_err(csv_fail(&p))?;
    }
    w.flush().map_err(io_err(&p))?;

    let mut header = vec!["t".to_string()];
    header.extend((0..m.n).map(|j| format!("x_{j}")));
    header.extend((0..m.f).map(|j| format!("F_{j}")));
    header.push("cond_id".into());
    for t in &dataset.trajectories {
        let p = trajectory_path(dir, t.id);
        let mut w = csv_writer(&p)?;
        w.write_record(&header).map_err(csv_fail(&p))?;
        let xs = t.conditions.data().chunks(m.n);
        let fs_ = t.forces.data().chunks(m.f);
        for (((time, x), f), id) in t.times.iter().zip(xs).zip(fs_).zip(&t.condition_ids) {
            let mut rec = Vec::with_capacity(header.len());
            rec.push(num(*time));
            rec.extend(x.iter().chain(f).map(|v| num(*v)));
            rec.push(id.to_string());
            w.write_record(&rec).map_err(csv_fail(&p))?;
        }
        w.flush().map_err(io_err(&p))?;
    }
    Ok(())
}

fn parse_f64(path: &Path, s: &str) -> Result<f64, DataError> {
    s.trim()
        .parse()
        .map_err(|_| fmt_err(path, format!("not a number: {s:?}")))
}

fn read_rows(path: &Path, width: usize) -> Result<Vec<csv::StringRecord>, DataError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_fail(path))?;
    let hw = r.headers().map_err(csv_fail(path))?.len();
    if hw != width {
        return Err(fmt_err(path, format!("{hw} columns, expected {width}")));
    }
    r.records()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| fmt_err(path, e.to_string()))
}

pub fn read_dataset(dir: &Path) -> Result<Dataset, DataError> {
    let mp = dir.join("manifest.json");
    let text = fs::read_to_string(&mp).map_err(io_err(&mp))?;
    let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| fmt_err(&mp, e.to_string()))?;
    let (n, f, len) = (manifest.n, manifest.f, manifest.length);

    let ip = dir.join("initial.csv");
    let mut initial = std::collections::BTreeMap::new();
    for rec in read_rows(&ip, 1 + f)? {
        let id: usize = rec[0].parse().map_err(|_| fmt_err(&ip, "bad trajectory id"))?;
        let v = (1..=f).map(|j| parse_f64(&ip, &rec[j])).collect::<Result<Vec<_>, _>>()?;
        initial.insert(id, Tensor::vector(v));
    }
    if initial.len() != manifest.num_trajectories {
        return Err(fmt_err(
            &ip,
            format!("{} trajectories, manifest says {}", initial.len(), manifest.num_trajectories),
        ));
    }

    let mut trajectories = Vec::with_capacity(initial.len());
    for (id, init) in initial {
        let p = trajectory_path(dir, id);
        let rows = read_rows(&p, 2 + n + f)?;
        if rows.len() != len {
            return Err(fmt_err(&p, format!("{} rows, expected {len}", rows.len())));
        }
        let mut times = Vec::with_capacity(len);
        let mut x = Vec::with_capacity(len * n);
        let mut forces = Vec::with_capacity(len * f);
        let mut ids = Vec::with_capacity(len);
        for rec in &rows {
            times.push(parse_f64(&p, &rec[0])?);
            for j in 0..n {
                x.push(parse_f64(&p, &rec[1 + j])?);
            }
            for j in 0..f {
                forces.push(parse_f64(&p, &rec[1 + n + j])?);
            }
            ids.push(rec[1 + n + f].parse().map_err(|_| fmt_err(&p, "bad cond_id"))?);
        }
        let tensor = |shape: Vec<usize>, data| Tensor::new(shape, data).map_err(|e| fmt_err(&p, e.to_string()));
        trajectories.push(Trajectory {
            id,
            times,
            conditions: tensor(vec![len, n], x)?,
            forces: tensor(vec![len, f], forces)?,
            initial: init,
            condition_ids: ids,
        });
    }
    if let Some(split) = &manifest.split {
        let mut all: Vec<usize> = split.train.iter().chain(&split.val).chain(&split.test).copied().collect();
        all.sort_unstable();
        let known: Vec<usize> = trajectories.iter().map(|t| t.id).collect();
        if all != known {
            return Err(fmt_err(&mp, "split does not partition the trajectories"));
        }
    }
    Ok(Dataset { manifest, trajectories })
}
