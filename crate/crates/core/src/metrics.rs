//! Intersection-level flow metrics and speed-validation statistics.

use crate::error::{Error, Result};
use crate::model::{ClassTable, VehicleClass};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VolumeBin {
    pub start_s: f64,
    pub end_s: f64,
    pub counts: ClassTable<usize>,
    pub pcu: f64,
}

impl VolumeBin {
    pub fn total(&self) -> usize {
        self.counts.car + self.counts.bus + self.counts.truck
    }
}

pub fn pcu_of(counts: &ClassTable<usize>, pce: &ClassTable<f64>) -> f64 {
    VehicleClass::ALL.iter().map(|&c| counts.get(c) as f64 * pce.get(c)).sum()
}

fn bump(t: &mut ClassTable<usize>, c: VehicleClass) {
    match c {
        VehicleClass::Car => t.car += 1,
        VehicleClass::Bus => t.bus += 1,
        VehicleClass::Truck => t.truck += 1,
    }
}

/// Counts per class in consecutive `bin_s` intervals covering `[t0, t1)`.
/// Vehicles are placed by their entry time; those outside the window are ignored.
pub fn bin_volumes(vehicles: &[(VehicleClass, f64)], t0: f64, t1: f64, bin_s: f64, pce: &ClassTable<f64>) -> Vec<VolumeBin> {
    if !(t1 > t0) || !(bin_s > 0.0) {
        return Vec::new();
    }
    let n = ((t1 - t0) / bin_s).ceil() as usize;
    let mut bins: Vec<VolumeBin> = (0..n)
        .map(|k| VolumeBin {
            start_s: t0 + k as f64 * bin_s,
            end_s: (t0 + (k + 1) as f64 * bin_s).min(t1),
            counts: ClassTable { car: 0, bus: 0, truck: 0 },
            pcu: 0.0,
        })
        .collect();
    for &(c, t) in vehicles {
        if t >= t0 && t < t1 {
            let k = (((t - t0) / bin_s) as usize).min(n - 1);
            bump(&mut bins[k].counts, c);
        }
    }
    for b in &mut bins {
        b.pcu = pcu_of(&b.counts, pce);
    }
    bins
}

pub fn class_counts(vehicles: &[(VehicleClass, f64)]) -> ClassTable<usize> {
    let mut t = ClassTable { car: 0, bus: 0, truck: 0 };
    for &(c, _) in vehicles {
        bump(&mut t, c);
    }
    t
}

/// Class shares in percent.
pub fn class_shares(counts: &ClassTable<usize>) -> Option<ClassTable<f64>> {
    let total = (counts.car + counts.bus + counts.truck) as f64;
    (total > 0.0).then(|| ClassTable {
        car: 100.0 * counts.car as f64 / total,
        bus: 100.0 * counts.bus as f64 / total,
        truck: 100.0 * counts.truck as f64 / total,
    })
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Peak hour factor of four consecutive 15-minute volumes.
pub fn phf(bins: &[f64]) -> Result<f64> {
    if bins.len() != 4 {
        return Err(Error::Undefined(format!("PHF needs 4 bins, got {}", bins.len())));
    }
    let max = max_of(bins);
    if !(max > 0.0) {
        return Err(Error::Undefined("PHF with zero peak volume".into()));
    }
    Ok(bins.iter().sum::<f64>() / (4.0 * max))
}

/// PHF generalized to every bin of the window: total / (n · max bin).
pub fn ppf(bins: &[f64]) -> Result<f64> {
    let max = max_of(bins);
    if bins.is_empty() || !(max > 0.0) {
        return Err(Error::Undefined("PPF with zero peak volume".into()));
    }
    Ok(bins.iter().sum::<f64>() / (bins.len() as f64 * max))
}

/// The four consecutive bins with the largest total.
pub fn peak_hour(bins: &[f64]) -> Option<&[f64]> {
    bins.windows(4).max_by(|a, b| a.iter().sum::<f64>().total_cmp(&b.iter().sum::<f64>()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanSpeeds {
    pub tms_kmh: f64,
    pub sms_kmh: f64,
    /// Transit speeds of zero left out of the harmonic mean.
    pub excluded_zero: usize,
}

/// Time mean speed (arithmetic, spot speeds) and space mean speed (harmonic, transit speeds).
pub fn mean_speeds(spot_kmh: &[f64], transit_kmh: &[f64]) -> Result<MeanSpeeds> {
    if spot_kmh.is_empty() {
        return Err(Error::Empty("spot speeds"));
    }
    let positive: Vec<f64> = transit_kmh.iter().copied().filter(|&v| v > 0.0).collect();
    if positive.is_empty() {
        return Err(Error::Empty("positive transit speeds"));
    }
    let tms = spot_kmh.iter().sum::<f64>() / spot_kmh.len() as f64;
    let sms = positive.len() as f64 / positive.iter().map(|v| 1.0 / v).sum::<f64>();
    Ok(MeanSpeeds {
        tms_kmh: tms,
        sms_kmh: sms,
        excluded_zero: transit_kmh.len() - positive.len(),
    })
}

/// Density from the fundamental relation k = q / v.
pub fn density(flow_pcu_h: f64, sms_kmh: f64) -> Result<f64> {
    if flow_pcu_h == 0.0 {
        return Ok(0.0);
    }
    if !(sms_kmh > 0.0) {
        return Err(Error::Undefined("density with zero space mean speed".into()));
    }
    Ok(flow_pcu_h / sms_kmh)
}

/// Observed-throughput capacity estimate: four times the busiest 15-minute pcu volume.
pub fn capacity_estimate(bin_pcu: &[f64]) -> f64 {
    4.0 * max_of(bin_pcu).max(0.0)
}

/// Hourly flow and density over the bins, plus the capacity estimate.
pub fn density_and_capacity(bins: &[VolumeBin], sms_kmh: f64) -> Result<(f64, f64)> {
    let pcu: Vec<f64> = bins.iter().map(|b| b.pcu).collect();
    let hours: f64 = bins.iter().map(|b| b.end_s - b.start_s).sum::<f64>() / 3600.0;
    if !(hours > 0.0) {
        return Err(Error::Empty("volume bins"));
    }
    let q = pcu.iter().sum::<f64>() / hours;
    Ok((density(q, sms_kmh)?, capacity_estimate(&pcu)))
}

/// Fills missing bins by linear interpolation between observed neighbors;
/// leading and trailing gaps hold the nearest observed value.
pub fn expand_counts(bins: &[Option<f64>]) -> Result<Vec<f64>> {
    let observed: Vec<(usize, f64)> = bins.iter().enumerate().filter_map(|(i, b)| b.map(|v| (i, v))).collect();
    if observed.len() < 2 {
        return Err(Error::Undefined(format!("expansion needs 2 observed bins, got {}", observed.len())));
    }
    let mut out = vec![0.0; bins.len()];
    for (i, slot) in out.iter_mut().enumerate() {
        if let Some(v) = bins[i] {
            *slot = v;
            continue;
        }
        let k = observed.partition_point(|&(j, _)| j < i);
        *slot = if k == 0 {
            observed[0].1
        } else if k == observed.len() {
            observed[k - 1].1
        } else {
            let ((i0, v0), (i1, v1)) = (observed[k - 1], observed[k]);
            v0 + (v1 - v0) * (i - i0) as f64 / (i1 - i0) as f64
        };
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationRow {
    pub id: u32,
    pub v_video: f64,
    pub v_trajectory: f64,
    pub abs_pct_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub n: usize,
    pub mape_percent: f64,
    pub rmse: f64,
    /// Ids left out because their reference speed was zero.
    pub excluded: Vec<u32>,
    pub rows: Vec<ValidationRow>,
}

/// MAPE (percent) and RMSE of trajectory speeds against reference video speeds.
pub fn validate_speeds(pairs: &[(u32, f64, f64)]) -> Result<ValidationReport> {
    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    for &(id, vv, vt) in pairs {
        if vv == 0.0 {
            excluded.push(id);
            continue;
        }
        rows.push(ValidationRow {
            id,
            v_video: vv,
            v_trajectory: vt,
            abs_pct_err: 100.0 * ((vt - vv) / vv).abs(),
        });
    }
    if rows.is_empty() {
        return Err(Error::Empty("validation pairs"));
    }
    let n = rows.len() as f64;
    let mape = rows.iter().map(|r| r.abs_pct_err).sum::<f64>() / n;
    let rmse = (rows.iter().map(|r| (r.v_trajectory - r.v_video).powi(2)).sum::<f64>() / n).sqrt();
    Ok(ValidationReport {
        n: rows.len(),
        mape_percent: mape,
        rmse,
        excluded,
        rows,
    })
}

pub fn validation_csv(report: &ValidationReport) -> String {
    let mut out = String::from("id,v_video,v_trajectory,abs_pct_err\n");
    for r in &report.rows {
        let _ = writeln!(out, "{},{:.4},{:.4},{:.4}", r.id, r.v_video, r.v_trajectory, r.abs_pct_err);
    }
    out
}

/// Density (pcu/km) bands for level of service, checked in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LosTable {
    /// `(upper bound exclusive, label)`
    pub bands: Vec<(f64, String)>,
    pub worst: String,
}

impl Default for LosTable {
    fn default() -> Self {
        let bands = [(12.0, "A"), (24.0, "B"), (36.0, "C"), (48.0, "D"), (60.0, "E")]
            .into_iter()
            .map(|(u, l)| (u, l.to_string()))
            .collect();
        Self { bands, worst: "F".into() }
    }
}

impl LosTable {
    pub fn label(&self, density_pcu_km: f64) -> &str {
        self.bands
            .iter()
            .find(|(u, _)| density_pcu_km < *u)
            .map(|(_, l)| l.as_str())
            .unwrap_or(&self.worst)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsParams {
    pub bin_s: f64,
    pub pce: ClassTable<f64>,
    pub los: LosTable,
}

impl Default for MetricsParams {
    fn default() -> Self {
        Self {
            bin_s: 900.0,
            pce: ClassTable { car: 1.0, bus: 2.0, truck: 1.5 },
            los: LosTable::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DirectionInput {
    pub name: String,
    /// Class and entry time of every counted vehicle.
    pub vehicles: Vec<(VehicleClass, f64)>,
    pub spot_speeds_kmh: Vec<f64>,
    pub transit_speeds_kmh: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowSummary {
    pub direction: String,
    pub vehicles: usize,
    pub phf: Option<f64>,
    pub ppf: Option<f64>,
    pub tms_kmh: Option<f64>,
    pub sms_kmh: Option<f64>,
    pub flow_pcu_h: f64,
    pub density_pcu_km: Option<f64>,
    pub capacity_estimate_pcu_h: f64,
    pub los: Option<String>,
    pub bins: Vec<VolumeBin>,
    /// Reasons for any metric left undefined.
    pub notes: Vec<String>,
}

pub fn flow_summary(input: &DirectionInput, t0: f64, t1: f64, params: &MetricsParams) -> FlowSummary {
    let bins = bin_volumes(&input.vehicles, t0, t1, params.bin_s, &params.pce);
    let pcu: Vec<f64> = bins.iter().map(|b| b.pcu).collect();
    let mut notes = Vec::new();
    let mut note = |r: Result<f64>| r.map_err(|e| notes.push(e.to_string())).ok();
    let phf_v = match peak_hour(&pcu) {
        Some(h) => note(phf(h)),
        None => {
            note(Err(Error::Undefined(format!("PHF needs 4 bins, got {}", pcu.len()))));
            None
        }
    };
    let ppf_v = note(ppf(&pcu));
    let speeds = mean_speeds(&input.spot_speeds_kmh, &input.transit_speeds_kmh)
        .map_err(|e| notes.push(e.to_string()))
        .ok();
    let hours = (t1 - t0).max(0.0) / 3600.0;
    let flow = if hours > 0.0 { pcu.iter().sum::<f64>() / hours } else { 0.0 };
    let dens = speeds.and_then(|s| density(flow, s.sms_kmh).map_err(|e| notes.push(e.to_string())).ok());
    FlowSummary {
        direction: input.name.clone(),
        vehicles: input.vehicles.len(),
        phf: phf_v,
        ppf: ppf_v,
        tms_kmh: speeds.map(|s| s.tms_kmh),
        sms_kmh: speeds.map(|s| s.sms_kmh),
        flow_pcu_h: flow,
        density_pcu_km: dens,
        capacity_estimate_pcu_h: capacity_estimate(&pcu),
        los: dens.map(|d| params.los.label(d).to_string()),
        bins,
        notes,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub window_s: (f64, f64),
    pub class_counts: ClassTable<usize>,
    pub class_shares_percent: Option<ClassTable<f64>>,
    pub directions: Vec<FlowSummary>,
    pub validation: Option<ValidationReport>,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
