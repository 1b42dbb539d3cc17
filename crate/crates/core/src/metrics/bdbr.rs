//! Bjontegaard delta rate and RD tables.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RdPoint {
    /// Bits per input point.
    pub bpp: f64,
    pub quality: f64,
}

/// At least four points with strictly increasing positive rate.
#[derive(Clone, Debug, PartialEq)]
pub struct RdCurve(Vec<RdPoint>);

impl RdCurve {
    pub fn new(mut points: Vec<RdPoint>) -> Result<RdCurve> {
        if points.len() < 4 {
            return Err(Error::InvalidArgument(format!(
                "BD-rate needs at least 4 points, got {}",
                points.len()
            )));
        }
        if points
            .iter()
            .any(|p| !(p.bpp > 0.0) || !p.bpp.is_finite() || !p.quality.is_finite())
        {
            return Err(Error::InvalidArgument(
                "rates must be positive and finite".into(),
            ));
        }
        points.sort_by(|a, b| a.bpp.total_cmp(&b.bpp));
        if points.windows(2).any(|w| w[0].bpp >= w[1].bpp) {
            return Err(Error::InvalidArgument("rates must be distinct".into()));
        }
        Ok(RdCurve(points))
    }

    pub fn points(&self) -> &[RdPoint] {
        &self.0
    }

    fn quality_range(&self) -> (f64, f64) {
        self.0
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p.quality), hi.max(p.quality))
            })
    }
}

/// Least-squares cubic of `log10(bpp)` in `(q - shift) / scale`.
fn fit_cubic(c: &RdCurve, shift: f64, scale: f64) -> Result<[f64; 4]> {
    let n = c.0.len();
    let a = DMatrix::from_fn(n, 4, |i, j| {
        ((c.0[i].quality - shift) / scale).powi(j as i32)
    });
    let b = DVector::from_iterator(n, c.0.iter().map(|p| p.bpp.log10()));
    let sol = a
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| Error::InvalidArgument(format!("cubic fit failed: {e}")))?;
    Ok([sol[0], sol[1], sol[2], sol[3]])
}

fn integral(c: &[f64; 4], lo: f64, hi: f64) -> f64 {
    let prim =
        |x: f64| c[0] * x + c[1] * x * x / 2.0 + c[2] * x.powi(3) / 3.0 + c[3] * x.powi(4) / 4.0;
    prim(hi) - prim(lo)
}

/// Average rate difference of `test` against `anchor` at equal quality, in
/// percent; negative means `test` needs fewer bits.
pub fn bdbr(anchor: &RdCurve, test: &RdCurve) -> Result<f64> {
    let (alo, ahi) = anchor.quality_range();
    let (tlo, thi) = test.quality_range();
    let (lo, hi) = (alo.max(tlo), ahi.min(thi));
    if !(hi > lo) {
        return Err(Error::InvalidArgument(
            "quality ranges do not overlap".into(),
        ));
    }
    let shift = (lo + hi) / 2.0;
    let scale = (hi - lo) / 2.0;
    let fa = fit_cubic(anchor, shift, scale)?;
    let ft = fit_cubic(test, shift, scale)?;
    let (ulo, uhi) = ((lo - shift) / scale, (hi - shift) / scale);
    let diff = (integral(&ft, ulo, uhi) - integral(&fa, ulo, uhi)) / (uhi - ulo);
    Ok((10f64.powf(diff) - 1.0) * 100.0)
}

/// One row of an RD table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdRow {
    pub bpp: f64,
    pub cd: f64,
    pub psnr_d1: f64,
    pub psnr_d2: f64,
}

impl RdRow {
    /// Curve over the chosen quality column (`cd`, `psnr_d1` or `psnr_d2`).
    pub fn curve(rows: &[RdRow], quality: &str) -> Result<RdCurve> {
        let pick = |r: &RdRow| match quality {
            "cd" => Ok(r.cd),
            "psnr_d1" | "d1" => Ok(r.psnr_d1),
            "psnr_d2" | "d2" => Ok(r.psnr_d2),
            _ => Err(Error::InvalidArgument(format!(
                "unknown quality column '{quality}'"
            ))),
        };
        RdCurve::new(
            rows.iter()
                .map(|r| {
                    Ok(RdPoint {
                        bpp: r.bpp,
                        quality: pick(r)?,
                    })
                })
                .collect::<Result<_>>()?,
        )
    }
}

pub fn write_rd_csv(rows: &[RdRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

pub fn read_rd_csv(bytes: &[u8]) -> Result<Vec<RdRow>> {
    csv::Reader::from_reader(bytes)
        .deserialize()
        .map(|r| {
            r.map_err(|e: csv::Error| {
                let offset = e.position().map_or(0, |p| p.byte() as usize);
                Error::parse(offset, e)
            })
        })
        .collect()
}

pub fn read_rd_csv_file(path: &Path) -> Result<Vec<RdRow>> {
    read_rd_csv(&std::fs::read(path)?)
}
