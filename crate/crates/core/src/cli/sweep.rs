//! Decode-and-evaluate over a grid of one threshold.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::decode::{decode, DecodeParams, PredictionTriple};
use crate::error::{Error, Result};
use crate::evaluate::{average_precision, DEFAULT_THRESHOLDS};
use crate::volume::{LabelVolume, RoiMask};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    Tau1,
    Tau2,
    Tau3,
    Tau4,
    Tau5,
}

impl SweepParam {
    pub fn apply(self, p: &DecodeParams, value: f32) -> DecodeParams {
        let mut out = *p;
        match self {
            SweepParam::Tau1 => out.tau1 = value,
            SweepParam::Tau2 => out.tau2 = value,
            SweepParam::Tau3 => out.tau3 = value,
            SweepParam::Tau4 => out.tau4 = value,
            SweepParam::Tau5 => out.tau5 = value,
        }
        out
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SweepParam::Tau1 => "tau1",
            SweepParam::Tau2 => "tau2",
            SweepParam::Tau3 => "tau3",
            SweepParam::Tau4 => "tau4",
            SweepParam::Tau5 => "tau5",
        };
        f.write_str(s)
    }
}

/// Inclusive `start:stop:step` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid(pub Vec<f32>);

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<f64> = s
            .split(':')
            .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
            .collect::<std::result::Result<_, _>>()?;
        let [start, stop, step] = parts[..] else {
            return Err(format!("expected start:stop:step, got {s:?}"));
        };
        if !(step > 0.0) || stop < start {
            return Err(format!("empty or invalid range {s:?}"));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
        // rounded so 0.1-steps print as 0.3 rather than 0.30000000000000004
        let values = (0..n)
            .map(|i| ((start + step * i as f64) * 1e6).round() / 1e6)
            .map(|v| v as f32)
            .collect();
        Ok(Grid(values))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: f32,
    pub ap50: f64,
    pub ap75: f64,
    pub mean: f64,
    pub instances: usize,
}

pub fn run_sweep(
    pred: &PredictionTriple,
    gt: &LabelVolume,
    roi: Option<&RoiMask>,
    base: &DecodeParams,
    param: SweepParam,
    values: &[f32],
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::InvalidParam("sweep grid is empty".into()));
    }
    values
        .iter()
        .map(|&v| {
            let p = param.apply(base, v);
            let d = decode(pred, &p)?;
            let r = average_precision(gt, &d.labels, roi, Some(&pred.distance), &DEFAULT_THRESHOLDS)?;
            Ok(SweepRow {
                param,
                value: v,
                ap50: r.ap50,
                ap75: r.ap75,
                mean: r.mean,
                instances: d.instance_count,
            })
        })
        .collect()
}

/// Largest minus smallest AP-50 over the rows.
pub fn ap50_spread(rows: &[SweepRow]) -> f64 {
    let hi = rows.iter().map(|r| r.ap50).fold(f64::NEG_INFINITY, f64::max);
    let lo = rows.iter().map(|r| r.ap50).fold(f64::INFINITY, f64::min);
    hi - lo
}

pub fn to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("param,value,ap50,ap75,mean,instances\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{}\n",
            r.param, r.value, r.ap50, r.ap75, r.mean, r.instances
        ));
    }
    out
}
