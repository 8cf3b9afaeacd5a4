use std::path::Path;

use serde::{Deserialize, Serialize};

use sixdgs_core::Error;

use crate::svg;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewResult {
    pub view: usize,
    pub file: String,
    /// Rotation error, degrees.
    pub mae: f64,
    /// Camera center error, scene units.
    pub mte: f64,
    pub seconds: f64,
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub views: Vec<ViewResult>,
    pub missing: Vec<String>,
    pub mean_mae: f64,
    pub mean_mte: f64,
    pub median_mae: f64,
    pub median_mte: f64,
    /// Views per second over the whole run.
    pub fps: f64,
    pub total_seconds: f64,
    pub config: serde_json::Value,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

impl EvalReport {
    pub fn new(mut views: Vec<ViewResult>, missing: Vec<String>, total_seconds: f64, config: serde_json::Value) -> Self {
        views.sort_by_key(|v| v.view);
        let mae: Vec<f64> = views.iter().map(|v| v.mae).collect();
        let mte: Vec<f64> = views.iter().map(|v| v.mte).collect();
        EvalReport {
            mean_mae: mean(&mae),
            mean_mte: mean(&mte),
            median_mae: median(&mae),
            median_mte: median(&mte),
            fps: if total_seconds > 0.0 { views.len() as f64 / total_seconds } else { f64::INFINITY },
            total_seconds,
            views,
            missing,
            config,
        }
    }

    /// `errors.svg` (MTE against MAE) and `mae_hist.svg`, `mte_hist.svg`.
    pub fn write_plots(&self, dir: &Path) -> Result<(), Error> {
        let points: Vec<(f64, f64)> = self.views.iter().map(|v| (v.mte, v.mae)).collect();
        let mae: Vec<f64> = self.views.iter().map(|v| v.mae).collect();
        let mte: Vec<f64> = self.views.iter().map(|v| v.mte).collect();
        for (name, body) in [
            ("errors.svg", svg::scatter("per-view pose error", "MTE (units)", "MAE (deg)", &points)),
            ("mae_hist.svg", svg::histogram("rotation error", "MAE (deg)", &mae, 20)),
            ("mte_hist.svg", svg::histogram("translation error", "MTE (units)", &mte, 20)),
        ] {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}
