//! Energy model for splitting a robot's localization pipeline between the
//! on-board device and the cloud.
//!
//! With `eta` the fraction of pipeline time executed locally:
//!
//! ```text
//! E_local = P_local · C_total · eta / U_local
//! E_cloud = P_cloud · C_total · (1 - eta) / U_cloud
//! E_tr    = P_tr · T_tr,   T_tr = payload[MB] · 8 / bandwidth[Mbit/s]
//! E_lk    = E_local + E_cloud + E_tr
//! ```
//!
//! Only stage boundaries are candidate split points: the payload is only
//! defined there. MB is 10⁶ bytes and Mbit/s is 10⁶ bit/s.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::keyframe::KeyframePayload;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatformParams {
    /// Local device power, W.
    pub p_local: f64,
    /// Cloud power, W.
    pub p_cloud: f64,
    /// Radio power while transmitting, W.
    pub p_tr: f64,
    /// Local processing speed, GB/s.
    pub u_local: f64,
    /// Cloud processing speed, GB/s.
    pub u_cloud: f64,
    /// Total computation, GB.
    pub c_total: f64,
    /// Link bandwidth, Mbit/s.
    pub bandwidth: f64,
}

impl PlatformParams {
    /// Raspberry-Pi-class robot, 1 G of computation, 10 Mbit/s Wi-Fi.
    pub const REFERENCE: PlatformParams = PlatformParams {
        p_local: 0.9,
        p_cloud: 0.3,
        p_tr: 1.3,
        u_local: 1.2,
        u_cloud: 3.3,
        c_total: 1.0,
        bandwidth: 10.0,
    };

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("p_local", self.p_local),
            ("p_cloud", self.p_cloud),
            ("p_tr", self.p_tr),
            ("u_local", self.u_local),
            ("u_cloud", self.u_cloud),
            ("c_total", self.c_total),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be finite and > 0 (got {v})")));
            }
        }
        if !(self.bandwidth.is_finite() && self.bandwidth > 0.0) {
            return Err(Error::InvalidBandwidth(self.bandwidth));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineStage {
    pub name: String,
    /// Seconds per batch.
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCandidate {
    pub eta: f64,
    /// Data sent to the cloud at this split, MB.
    pub payload: f64,
    pub payload_desc: String,
}

impl SplitCandidate {
    pub fn new(eta: f64, payload: f64, payload_desc: impl Into<String>) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::InvalidParams(format!("eta {eta} outside [0, 1]")));
        }
        if !(payload.is_finite() && payload >= 0.0) {
            return Err(Error::InvalidParams(format!("payload {payload} must be finite and >= 0")));
        }
        Ok(Self { eta, payload, payload_desc: payload_desc.into() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    pub e_local: f64,
    pub e_cloud: f64,
    pub e_tr: f64,
    pub e_lk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateEvaluation {
    pub eta: f64,
    pub payload: f64,
    pub payload_desc: String,
    pub t_tr: f64,
    pub e_local: f64,
    pub e_cloud: f64,
    pub e_tr: f64,
    pub e_lk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanReport {
    pub candidates: Vec<CandidateEvaluation>,
    pub best: SplitCandidate,
}

impl PlanReport {
    pub fn best_evaluation(&self) -> &CandidateEvaluation {
        self.candidates
            .iter()
            .find(|c| c.eta == self.best.eta && c.payload == self.best.payload)
            .expect("best is one of the candidates")
    }
}

/// Fraction of total pipeline time spent in the first `k` stages.
pub fn eta_from_stages(stages: &[PipelineStage], k: usize) -> Result<f64> {
    let total: f64 = stages.iter().map(|s| s.duration).sum();
    eta_from_stages_with_total(stages, k, total)
}

/// As [`eta_from_stages`] but against an externally stated total, e.g. a
/// measured end-to-end time that differs from the sum of the stage timings.
pub fn eta_from_stages_with_total(stages: &[PipelineStage], k: usize, total: f64) -> Result<f64> {
    if k > stages.len() {
        return Err(Error::InvalidParams(format!("k = {k} exceeds {} stages", stages.len())));
    }
    if let Some(s) = stages.iter().find(|s| !(s.duration.is_finite() && s.duration >= 0.0)) {
        return Err(Error::InvalidParams(format!("stage `{}` has invalid duration {}", s.name, s.duration)));
    }
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::ZeroTotalDuration);
    }
    Ok(stages[..k].iter().fold(0.0, |acc, s| acc + s.duration) / total)
}

/// Seconds to send `payload` MB over `bandwidth` Mbit/s.
pub fn transmission_time(payload: f64, bandwidth: f64) -> Result<f64> {
    if !(bandwidth.is_finite() && bandwidth > 0.0) {
        return Err(Error::InvalidBandwidth(bandwidth));
    }
    if !(payload.is_finite() && payload >= 0.0) {
        return Err(Error::InvalidParams(format!("payload {payload} must be finite and >= 0")));
    }
    Ok(payload * 8.0 / bandwidth)
}

pub fn energy(eta: f64, t_tr: f64, p: &PlatformParams) -> EnergyBreakdown {
    let e_local = p.p_local * p.c_total * eta / p.u_local;
    let e_cloud = p.p_cloud * p.c_total * (1.0 - eta) / p.u_cloud;
    let e_tr = p.p_tr * t_tr;
    EnergyBreakdown { e_local, e_cloud, e_tr, e_lk: e_local + e_cloud + e_tr }
}

/// Evaluates every candidate; the best has the lowest `e_lk`, ties going to
/// the lowest `eta`.
pub fn plan(candidates: &[SplitCandidate], p: &PlatformParams) -> Result<PlanReport> {
    p.validate()?;
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let mut evaluations = Vec::with_capacity(candidates.len());
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        SplitCandidate::new(c.eta, c.payload, "")?;
        let t_tr = transmission_time(c.payload, p.bandwidth)?;
        let e = energy(c.eta, t_tr, p);
        let wins = match best {
            None => true,
            Some((bi, be)) => e.e_lk < be || (e.e_lk == be && c.eta < candidates[bi].eta),
        };
        if wins {
            best = Some((i, e.e_lk));
        }
        evaluations.push(CandidateEvaluation {
            eta: c.eta,
            payload: c.payload,
            payload_desc: c.payload_desc.clone(),
            t_tr,
            e_local: e.e_local,
            e_cloud: e.e_cloud,
            e_tr: e.e_tr,
            e_lk: e.e_lk,
        });
    }
    let (bi, _) = best.expect("non-empty candidates");
    Ok(PlanReport { candidates: evaluations, best: candidates[bi].clone() })
}

/// Serialized size of a keyframe payload, MB.
pub fn payload_size(kf: &KeyframePayload) -> f64 {
    kf.to_text().len() as f64 / 1e6
}

/// Localization energy of a robot team: the sum of per-robot `E_lk`.
pub fn localization_energy(per_robot_e_lk: &[f64]) -> f64 {
    per_robot_e_lk.iter().fold(0.0, |acc, e| acc + e)
}

/// Cloud-side mapping energy: cloud power times mapping wall time.
pub fn mapping_energy(p_cloud: f64, mapping_seconds: f64) -> f64 {
    p_cloud * mapping_seconds
}

pub fn system_energy(localization: f64, mapping: f64) -> f64 {
    localization + mapping
}

/// A complete planning input, as read from a TOML scenario file.
///
/// ```toml
/// stated_total_duration = 0.0702   # optional
///
/// [platform]
/// p_local = 0.9
/// p_cloud = 0.3
/// p_tr = 1.3
/// u_local = 1.2
/// u_cloud = 3.3
/// c_total = 1.0
/// bandwidth = 10.0
///
/// [[stage]]
/// name = "Extractor"
/// duration = 0.0154
///
/// [[candidate]]
/// eta = 0.484           # or: stages_done = 3
/// payload = 2.9
/// payload_desc = "features+depth value"
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub platform: PlatformParams,
    pub stages: Vec<PipelineStage>,
    /// Total pipeline time used for `eta` when it differs from the stage sum.
    pub stated_total_duration: Option<f64>,
    pub candidates: Vec<SplitCandidate>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    platform: PlatformParams,
    #[serde(default)]
    stated_total_duration: Option<f64>,
    #[serde(default)]
    stage: Vec<PipelineStage>,
    #[serde(default)]
    candidate: Vec<CandidateEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CandidateEntry {
    eta: Option<f64>,
    stages_done: Option<usize>,
    payload: f64,
    #[serde(default)]
    payload_desc: String,
}

impl Scenario {
    /// Seven split points of a feature-based visual localization pipeline
    /// on the [`PlatformParams::REFERENCE`] platform.
    pub fn reference() -> Self {
        let stage = |name: &str, duration| PipelineStage { name: name.to_string(), duration };
        let cand = |eta, payload, desc: &str| SplitCandidate { eta, payload, payload_desc: desc.to_string() };
        Scenario {
            platform: PlatformParams::REFERENCE,
            stages: vec![
                stage("Extractor", 0.0154),
                stage("Descriptor", 0.0124),
                stage("Compute stereo", 0.0062),
                stage("Feature match", 0.0236),
                stage("PnP", 0.0022),
                stage("Others", 0.011),
            ],
            stated_total_duration: Some(0.0702),
            candidates: vec![
                cand(0.0, 6.3, "RGB image+depth image"),
                cand(0.22, 6.3, "RGB image+depth image"),
                cand(0.396, 3.8, "features+depth image"),
                cand(0.484, 2.9, "features+depth value"),
                cand(0.818, 3.7, "features+depth value+rotation matrix"),
                cand(0.852, 4.0, "features+depth value+rotation matrix+undistort"),
                cand(1.0, 4.2, "features+depth value+rotation matrix+undistort+keyframe"),
            ],
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: ScenarioFile =
            toml::from_str(text).map_err(|e| Error::parse(line_of(text, e.span()), e.message().to_string()))?;
        let mut scenario = Scenario {
            platform: file.platform,
            stages: file.stage,
            stated_total_duration: file.stated_total_duration,
            candidates: Vec::with_capacity(file.candidate.len()),
        };
        for c in file.candidate {
            let eta = match (c.eta, c.stages_done) {
                (Some(eta), None) => eta,
                (None, Some(k)) => scenario.eta_at(k)?,
                _ => return Err(Error::InvalidParams("each candidate needs exactly one of `eta` or `stages_done`".into())),
            };
            scenario.candidates.push(SplitCandidate::new(eta, c.payload, c.payload_desc)?);
        }
        scenario.platform.validate()?;
        Ok(scenario)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        std::fs::read_to_string(path)
            .map_err(Error::from)
            .and_then(|t| Self::from_toml(&t))
            .map_err(|e| e.at_path(path))
    }

    /// `eta` after the first `k` stages.
    pub fn eta_at(&self, k: usize) -> Result<f64> {
        match self.stated_total_duration {
            Some(total) => eta_from_stages_with_total(&self.stages, k, total),
            None => eta_from_stages(&self.stages, k),
        }
    }

    pub fn plan(&self) -> Result<PlanReport> {
        plan(&self.candidates, &self.platform)
    }
}

fn line_of(text: &str, span: Option<std::ops::Range<usize>>) -> usize {
    span.map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eta_boundaries() {
        let s = Scenario::reference();
        assert_eq!(s.eta_at(0).unwrap(), 0.0);
        assert!((s.eta_at(1).unwrap() - 0.0154 / 0.0702).abs() < 1e-15);
        assert!((s.eta_at(3).unwrap() - 0.0340 / 0.0702).abs() < 1e-12);
        assert!(eta_from_stages(&s.stages, 7).is_err());
        let zero = vec![PipelineStage { name: "a".into(), duration: 0.0 }];
        assert!(matches!(eta_from_stages(&zero, 1), Err(Error::ZeroTotalDuration)));
    }

    #[test]
    fn transmission() {
        assert!((transmission_time(2.9, 10.0).unwrap() - 2.32).abs() < 1e-12);
        assert!((transmission_time(6.3, 10.0).unwrap() - 5.04).abs() < 1e-12);
        assert_eq!(transmission_time(0.0, 10.0).unwrap(), 0.0);
        assert!(matches!(transmission_time(1.0, 0.0), Err(Error::InvalidBandwidth(_))));
        assert!(matches!(transmission_time(1.0, f64::NAN), Err(Error::InvalidBandwidth(_))));
    }

    #[test]
    fn energy_boundaries() {
        let p = PlatformParams::REFERENCE;
        let all_cloud = energy(0.0, 0.0, &p);
        assert_eq!(all_cloud.e_lk, p.p_cloud * p.c_total / p.u_cloud);
        let all_local = energy(1.0, 0.0, &p);
        assert!((all_local.e_lk - 0.75).abs() < 1e-15);
    }

    #[test]
    fn plan_trivial_cases() {
        let p = PlatformParams::REFERENCE;
        assert!(matches!(plan(&[], &p), Err(Error::EmptyCandidates)));
        let single = [SplitCandidate::new(0.3, 1.0, "x").unwrap()];
        assert_eq!(plan(&single, &p).unwrap().best, single[0]);
        let pair = [SplitCandidate::new(0.5, 3.0, "heavy").unwrap(), SplitCandidate::new(0.5, 1.0, "light").unwrap()];
        assert_eq!(plan(&pair, &p).unwrap().best.payload_desc, "light");
        // equal energy: lowest eta wins regardless of order
        let tie = [SplitCandidate::new(0.7, 0.0, "b").unwrap(), SplitCandidate::new(0.2, 0.0, "a").unwrap()];
        let flat = PlatformParams { p_local: 0.3, u_local: 3.3, ..p };
        assert_eq!(plan(&tie, &flat).unwrap().best.payload_desc, "a");
    }

    #[test]
    fn reference_scenario_picks_features_plus_depth() {
        let report = Scenario::reference().plan().unwrap();
        assert_eq!(report.best.eta, 0.484);
        assert_eq!(report.candidates.len(), 7);
    }

    #[test]
    fn scenario_toml() {
        let text = r#"
            stated_total_duration = 0.0702
            [platform]
            p_local = 0.9
            p_cloud = 0.3
            p_tr = 1.3
            u_local = 1.2
            u_cloud = 3.3
            c_total = 1.0
            bandwidth = 10.0
            [[stage]]
            name = "Extractor"
            duration = 0.0154
            [[stage]]
            name = "Descriptor"
            duration = 0.0124
            [[candidate]]
            stages_done = 1
            payload = 6.3
            [[candidate]]
            eta = 0.396
            payload = 3.8
            payload_desc = "features+depth image"
        "#;
        let s = Scenario::from_toml(text).unwrap();
        assert!((s.candidates[0].eta - 0.0154 / 0.0702).abs() < 1e-15);
        assert_eq!(s.candidates[1].payload_desc, "features+depth image");

        let bad = text.replace("eta = 0.396", "eta = 0.396\nstages_done = 2");
        assert!(Scenario::from_toml(&bad).is_err());
        let negative_bw = text.replace("bandwidth = 10.0", "bandwidth = -1.0");
        assert!(matches!(Scenario::from_toml(&negative_bw), Err(Error::InvalidBandwidth(_))));
        assert!(matches!(Scenario::from_toml("[platform]\np_local = 1"), Err(Error::Parse { .. })));
    }
}
