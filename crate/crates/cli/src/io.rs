//! Path CSV files and atomic writes.

use std::fs;
use std::io::Write;
use std::path::Path;

use ofbm_core::GridPath;

use crate::CliError;

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Config(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// `replicate,t,x_1,...,x_d`, one row per replicate and grid point, 17
/// significant digits.
pub fn paths_to_csv(paths: &[GridPath]) -> Result<Vec<u8>, CliError> {
    let d = paths.first().map(|p| p.dim()).unwrap_or(0);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["replicate".to_string(), "t".to_string()];
    header.extend((1..=d).map(|k| format!("x_{k}")));
    w.write_record(&header)?;
    for p in paths {
        for (t, v) in p.grid.iter().zip(&p.values) {
            let mut row = vec![p.replicate_id.to_string(), format!("{t:.16e}")];
            row.extend(v.iter().map(|x| format!("{x:.16e}")));
            w.write_record(&row)?;
        }
    }
    w.into_inner().map_err(|e| CliError::Io(e.into_error()))
}

pub fn write_paths_csv(path: &Path, paths: &[GridPath]) -> Result<(), CliError> {
    write_atomic(path, &paths_to_csv(paths)?)
}

fn parse_f64(field: &str, line: u64) -> Result<f64, CliError> {
    field
        .parse()
        .map_err(|_| CliError::Config(format!("line {line}: cannot parse '{field}' as a number")))
}

/// Inverse of [`paths_to_csv`]. Rows of one replicate must be contiguous.
pub fn read_paths_csv(path: &Path) -> Result<Vec<GridPath>, CliError> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.len() < 3 || &header[0] != "replicate" || &header[1] != "t" {
        return Err(CliError::Config(format!("{}: unexpected header", path.display())));
    }
    let d = header.len() - 2;
    let mut out: Vec<GridPath> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let rep: u64 = rec[0]
            .parse()
            .map_err(|_| CliError::Config(format!("line {line}: bad replicate id")))?;
        let t = parse_f64(&rec[1], line)?;
        let v = (0..d)
            .map(|k| parse_f64(&rec[k + 2], line))
            .collect::<Result<Vec<_>, _>>()?;
        match out.last_mut() {
            Some(p) if p.replicate_id == rep => {
                p.grid.push(t);
                p.values.push(v);
            }
            _ => out.push(GridPath {
                grid: vec![t],
                values: vec![v],
                replicate_id: rep,
                seed: 0,
            }),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_lossless() {
        let paths = vec![
            GridPath {
                grid: vec![0.0, 0.1, 1.0 / 3.0],
                values: vec![
                    vec![0.0, 0.0],
                    vec![std::f64::consts::PI, -1e-300],
                    vec![1.0 / 7.0, 6.02e23],
                ],
                replicate_id: 0,
                seed: 0,
            },
            GridPath {
                grid: vec![0.0, 0.1, 1.0 / 3.0],
                values: vec![
                    vec![0.0, 0.0],
                    vec![f64::MIN_POSITIVE, -0.1],
                    vec![2.0f64.sqrt(), 5e-324],
                ],
                replicate_id: 1,
                seed: 0,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("nested/paths.csv");
        write_paths_csv(&file, &paths).unwrap();
        let text = fs::read_to_string(&file).unwrap();
        assert!(text.starts_with("replicate,t,x_1,x_2\n"));
        assert_eq!(read_paths_csv(&file).unwrap(), paths);
        assert!(!dir.path().join("nested/.paths.csv.tmp").exists());
    }
}
