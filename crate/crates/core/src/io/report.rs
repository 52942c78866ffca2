use std::path::Path;

use crate::error::{Error, Result};
use crate::evaluation::Psnr;

const NULL: &str = "null";
const HEADER: [&str; 9] = ["scene", "seed", "ate_rmse", "psnr", "ssim", "lpips", "depth_l1", "num_surfels", "fps"];

/// One `report.csv` row. LPIPS is always written as null.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub scene: String,
    pub seed: u64,
    pub ate_rmse: Option<f64>,
    pub psnr: Option<Psnr>,
    pub ssim: Option<f64>,
    pub depth_l1: Option<f64>,
    pub num_surfels: Option<usize>,
    pub fps: Option<f64>,
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| NULL.to_string(), T::to_string)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::parse(path.display().to_string(), e.to_string())
}

pub fn write_report(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(HEADER).map_err(|e| csv_err(path, e))?;
    for r in rows {
        let psnr = r.psnr.map_or_else(|| NULL.to_string(), |p| p.to_string());
        w.write_record([
            r.scene.clone(),
            r.seed.to_string(),
            opt(&r.ate_rmse),
            psnr,
            opt(&r.ssim),
            NULL.to_string(),
            opt(&r.depth_l1),
            opt(&r.num_surfels),
            opt(&r.fps),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn field<T: std::str::FromStr>(path: &Path, v: &str) -> Result<Option<T>> {
    if v == NULL {
        return Ok(None);
    }
    v.parse()
        .map(Some)
        .map_err(|_| Error::parse(path.display().to_string(), format!("bad value {v:?}")))
}

pub fn read_report(path: &Path) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().ne(HEADER) {
        return Err(Error::parse(path.display().to_string(), "unexpected report header"));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let psnr = match &rec[3] {
            NULL => None,
            "exact" => Some(Psnr::Exact),
            v => field::<f64>(path, v)?.map(Psnr::Db),
        };
        rows.push(ReportRow {
            scene: rec[0].to_string(),
            seed: field(path, &rec[1])?.unwrap_or_default(),
            ate_rmse: field(path, &rec[2])?,
            psnr,
            ssim: field(path, &rec[4])?,
            depth_l1: field(path, &rec[6])?,
            num_surfels: field(path, &rec[7])?,
            fps: field(path, &rec[8])?,
        });
    }
    Ok(rows)
}
