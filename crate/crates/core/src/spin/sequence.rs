//! Pulse blocks, microwave payloads and their expansion into timed
//! operations.
//!
//! A sequence descriptor is a TOML document:
//!
//! ```toml
//! [[blocks]]
//! kind = "check"
//! duration_us = 150.0
//! laser = "a1"
//!
//! [[blocks]]
//! kind = "mw"
//! mw_payload = "ramsey"
//!
//! [[blocks]]
//! kind = "readout"
//! duration_us = 60.0
//! laser = "a2"
//!
//! [mw.ramsey]
//! kind = "ramsey"
//! frequency_mhz = 181.8
//! rabi_mhz = 5.0
//! sweep = { parameter = "delay", values = { start = 0.0, stop = 3.0, points = 61 } }
//! ```

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::SpinError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Repump,
    Check,
    SpinPump,
    Norm1,
    Norm0,
    Mw,
    Readout,
    Wait,
}

impl BlockKind {
    fn counts_by_default(self) -> bool {
        matches!(self, BlockKind::Check | BlockKind::Norm1 | BlockKind::Norm0 | BlockKind::Readout)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Laser {
    OffResonant,
    A1,
    A2,
    #[default]
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseBlock {
    pub kind: BlockKind,
    /// [µs]; ignored for `mw` blocks, whose length follows the payload.
    #[serde(default)]
    pub duration_us: f64,
    #[serde(default)]
    pub laser: Laser,
    /// Laser power [nW for resonant lasers, µW off-resonant].
    #[serde(default)]
    pub power: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mw_payload: Option<String>,
    /// Defaults to true for check, norm1, norm0 and readout blocks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts_recorded: Option<bool>,
}

impl PulseBlock {
    pub fn new(kind: BlockKind, duration_us: f64, laser: Laser) -> Self {
        Self { kind, duration_us, laser, power: 0.0, mw_payload: None, counts_recorded: None }
    }

    pub fn mw(payload: impl Into<String>) -> Self {
        Self { mw_payload: Some(payload.into()), ..Self::new(BlockKind::Mw, 0.0, Laser::None) }
    }

    pub fn records_counts(&self) -> bool {
        self.counts_recorded.unwrap_or(self.kind.counts_by_default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MwKind {
    RabiBurst,
    PiPulse,
    Ramsey,
    Hahn,
    Xy4,
    #[serde(rename = "xy8_n", alias = "xy8")]
    Xy8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Burst or π-pulse duration `t_M` [µs].
    Duration,
    /// Microwave frequency `f_M` [MHz].
    Frequency,
    /// Interpulse delay `τ_M` [µs].
    Delay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SweepValues {
    List(Vec<f64>),
    Range { start: f64, stop: f64, points: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub parameter: SweepParameter,
    pub values: SweepValues,
}

impl Sweep {
    pub fn values(&self) -> Vec<f64> {
        match &self.values {
            SweepValues::List(v) => v.clone(),
            SweepValues::Range { start, stop, points } => crate::linspace(*start, *stop, *points),
        }
    }
}

pub const XY4_PHASES: [f64; 4] = [0.0, 90.0, 0.0, 90.0];
pub const XY8_PHASES: [f64; 8] = [0.0, 90.0, 0.0, 90.0, 90.0, 0.0, 90.0, 0.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MwSequence {
    pub kind: MwKind,
    pub frequency_mhz: f64,
    /// Rabi frequency Ω [MHz]; falls back to the spin model's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rabi_mhz: Option<f64>,
    /// Burst length for `rabi_burst`, pulse length for `pi_pulse` [µs];
    /// defaults to a π pulse `1/(2Ω)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_us: Option<f64>,
    /// Interpulse delay τ when not swept [µs].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_us: Option<f64>,
    /// Number of XY8 blocks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repeats: Option<usize>,
    /// Phases of the refocusing π pulses [deg]; defaults to the standard
    /// pattern of the kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phases_deg: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MwOp {
    Pulse { duration_us: f64, phase_deg: f64, omega: f64 },
    Free { duration_us: f64 },
}

/// One concrete microwave sequence at a given sweep value.
#[derive(Debug, Clone, PartialEq)]
pub struct MwProgram {
    pub ops: Vec<MwOp>,
    pub frequency_mhz: f64,
    /// Number of refocusing π pulses.
    pub n_pi: usize,
    /// Total free evolution `2Nτ` (or `2τ` for Hahn) [µs].
    pub free_time_us: f64,
    /// Whether the sequence refocuses quasi-static noise and so decays with
    /// the coherence time T₂ rather than T₂*.
    pub refocused: bool,
}

impl MwSequence {
    pub fn new(kind: MwKind, frequency_mhz: f64, rabi_mhz: f64) -> Self {
        Self {
            kind,
            frequency_mhz,
            rabi_mhz: Some(rabi_mhz),
            duration_us: None,
            tau_us: None,
            repeats: None,
            phases_deg: None,
            sweep: None,
        }
    }

    pub fn with_sweep(mut self, parameter: SweepParameter, values: Vec<f64>) -> Self {
        self.sweep = Some(Sweep { parameter, values: SweepValues::List(values) });
        self
    }

    pub fn number_of_pi_pulses(&self) -> usize {
        match self.kind {
            MwKind::RabiBurst | MwKind::PiPulse | MwKind::Ramsey => 0,
            MwKind::Hahn => 1,
            MwKind::Xy4 => 4,
            MwKind::Xy8 => 8 * self.repeats.unwrap_or(1),
        }
    }

    /// Default refocusing phases for the kind.
    pub fn standard_phases(&self) -> Vec<f64> {
        match self.kind {
            MwKind::Hahn => vec![0.0],
            MwKind::Xy4 => XY4_PHASES.to_vec(),
            MwKind::Xy8 => XY8_PHASES.repeat(self.repeats.unwrap_or(1)),
            _ => vec![],
        }
    }

    pub fn validate(&self, fallback_rabi: f64) -> Result<(), SpinError> {
        let bad = |m: String| Err(SpinError::InvalidSequence(m));
        let omega = self.rabi_mhz.unwrap_or(fallback_rabi);
        if !(omega > 0.0) || !omega.is_finite() {
            return bad(format!("Rabi frequency must be positive, got {omega}"));
        }
        if !self.frequency_mhz.is_finite() {
            return bad("microwave frequency must be finite".into());
        }
        if let Some(d) = self.duration_us {
            if !(d >= 0.0) {
                return bad(format!("duration {d} must be non-negative"));
            }
        }
        if let Some(t) = self.tau_us {
            if !(t >= 0.0) {
                return bad(format!("tau {t} must be non-negative"));
            }
        }
        if self.kind == MwKind::Xy8 && self.repeats == Some(0) {
            return bad("xy8_n needs at least one repeat".into());
        }
        if let Some(phases) = &self.phases_deg {
            let expected = self.standard_phases();
            let norm = |p: f64| p.rem_euclid(360.0);
            let matches = phases.len() == expected.len()
                && phases.iter().zip(&expected).all(|(p, e)| (norm(*p) - norm(*e)).abs() < 1e-9);
            if !matches {
                return bad(format!("{:?} phase pattern must be {:?}, got {:?}", self.kind, expected, phases));
            }
        }
        if let Some(s) = &self.sweep {
            let allowed = match s.parameter {
                SweepParameter::Frequency => true,
                SweepParameter::Duration => matches!(self.kind, MwKind::RabiBurst | MwKind::PiPulse),
                SweepParameter::Delay => !matches!(self.kind, MwKind::RabiBurst | MwKind::PiPulse),
            };
            if !allowed {
                return bad(format!("{:?} cannot sweep {:?}", self.kind, s.parameter));
            }
            let v = s.values();
            if v.is_empty() {
                return bad("sweep has no values".into());
            }
            if v.iter().any(|x| !x.is_finite())
                || (s.parameter != SweepParameter::Frequency && v.iter().any(|x| *x < 0.0))
            {
                return bad("sweep values must be finite, and non-negative for times".into());
            }
        }
        Ok(())
    }

    /// Concrete operations at `sweep_value` (ignored without a sweep).
    pub fn program(&self, sweep_value: f64, fallback_rabi: f64) -> MwProgram {
        let omega = self.rabi_mhz.unwrap_or(fallback_rabi);
        let mut frequency_mhz = self.frequency_mhz;
        let mut duration = self.duration_us.unwrap_or(0.5 / omega);
        let mut tau = self.tau_us.unwrap_or(0.0);
        if let Some(s) = &self.sweep {
            match s.parameter {
                SweepParameter::Frequency => frequency_mhz = sweep_value,
                SweepParameter::Duration => duration = sweep_value,
                SweepParameter::Delay => tau = sweep_value,
            }
        }
        let half = 0.25 / omega;
        let pi = 0.5 / omega;
        let pulse = |duration_us: f64, phase_deg: f64| MwOp::Pulse { duration_us, phase_deg, omega };
        let free = |duration_us: f64| MwOp::Free { duration_us };
        let phases = self.phases_deg.clone().unwrap_or_else(|| self.standard_phases());
        let (ops, refocused) = match self.kind {
            MwKind::RabiBurst | MwKind::PiPulse => (vec![pulse(duration, 0.0)], false),
            MwKind::Ramsey => (vec![pulse(half, 0.0), free(tau), pulse(half, 0.0)], false),
            // closing on -X so the echo ends in the bright state
            MwKind::Hahn => {
                (vec![pulse(half, 0.0), free(tau), pulse(pi, phases[0]), free(tau), pulse(half, 180.0)], true)
            }
            MwKind::Xy4 | MwKind::Xy8 => {
                let mut ops = vec![pulse(half, 0.0), free(tau)];
                for (k, &ph) in phases.iter().enumerate() {
                    if k > 0 {
                        ops.push(free(2.0 * tau));
                    }
                    ops.push(pulse(pi, ph));
                }
                ops.push(free(tau));
                ops.push(pulse(half, 0.0));
                (ops, true)
            }
        };
        let n_pi = self.number_of_pi_pulses();
        MwProgram { ops, frequency_mhz, n_pi, free_time_us: 2.0 * n_pi as f64 * tau, refocused }
    }
}

/// Ordered blocks plus the named microwave payloads they reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinSequence {
    pub blocks: Vec<PulseBlock>,
    #[serde(default)]
    pub mw: IndexMap<String, MwSequence>,
}

impl SpinSequence {
    /// Repump, check, spin pump, two normalization blocks, the microwave
    /// payload and readout, with 10 µs waits in between.
    pub fn standard(payload: MwSequence) -> Self {
        let blocks = [
            PulseBlock::new(BlockKind::Repump, 10.0, Laser::OffResonant),
            PulseBlock::new(BlockKind::Check, 150.0, Laser::A1),
            PulseBlock::new(BlockKind::SpinPump, 60.0, Laser::A1),
            PulseBlock::new(BlockKind::Norm1, 60.0, Laser::A2),
            PulseBlock::new(BlockKind::Norm0, 60.0, Laser::A2),
            PulseBlock::mw("main"),
            PulseBlock::new(BlockKind::Readout, 60.0, Laser::A2),
        ];
        let mut with_waits = Vec::new();
        for (i, b) in blocks.into_iter().enumerate() {
            if i > 0 {
                with_waits.push(PulseBlock::new(BlockKind::Wait, 10.0, Laser::None));
            }
            with_waits.push(b);
        }
        let mut mw = IndexMap::new();
        mw.insert("main".to_string(), payload);
        Self { blocks: with_waits, mw }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, SpinError> {
        toml::from_str(text).map_err(|e| SpinError::InvalidSequence(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String, SpinError> {
        toml::to_string(self).map_err(|e| SpinError::InvalidSequence(e.to_string()))
    }

    pub fn validate(&self, fallback_rabi: f64) -> Result<(), SpinError> {
        let bad = |m: String| Err(SpinError::InvalidSequence(m));
        let readouts = self.blocks.iter().filter(|b| b.kind == BlockKind::Readout).count();
        if readouts != 1 {
            return bad(format!("sequence needs exactly one readout block, found {readouts}"));
        }
        for kind in [BlockKind::Check, BlockKind::Norm1, BlockKind::Norm0] {
            if self.blocks.iter().filter(|b| b.kind == kind).count() > 1 {
                return bad(format!("more than one {kind:?} block"));
            }
        }
        for (i, b) in self.blocks.iter().enumerate() {
            if b.kind == BlockKind::Mw {
                let Some(name) = &b.mw_payload else {
                    return bad(format!("mw block {i} has no payload"));
                };
                if !self.mw.contains_key(name) {
                    return bad(format!("mw block {i} references unknown payload `{name}`"));
                }
            } else {
                if !(b.duration_us > 0.0) || !b.duration_us.is_finite() {
                    return bad(format!("block {i} ({:?}) needs a positive duration", b.kind));
                }
                if b.mw_payload.is_some() {
                    return bad(format!("block {i} ({:?}) cannot carry a microwave payload", b.kind));
                }
            }
            if b.records_counts() && b.laser == Laser::None {
                return bad(format!("counting block {i} ({:?}) has no laser", b.kind));
            }
        }
        if !self.blocks.iter().any(|b| b.kind == BlockKind::Readout && b.records_counts()) {
            return bad("the readout block must record counts".into());
        }
        for m in self.mw.values() {
            m.validate(fallback_rabi)?;
        }
        self.sweep_values()?;
        Ok(())
    }

    /// Sweep grid shared by all referenced payloads; a single zero when
    /// nothing is swept.
    pub fn sweep_values(&self) -> Result<Vec<f64>, SpinError> {
        let mut out: Option<Vec<f64>> = None;
        for b in self.blocks.iter().filter(|b| b.kind == BlockKind::Mw) {
            let Some(m) = b.mw_payload.as_ref().and_then(|n| self.mw.get(n)) else { continue };
            if let Some(s) = &m.sweep {
                let v = s.values();
                match &out {
                    Some(prev) if prev.len() != v.len() => {
                        return Err(SpinError::InvalidSequence("swept payloads differ in length".into()))
                    }
                    Some(_) => {}
                    None => out = Some(v),
                }
            }
        }
        Ok(out.unwrap_or_else(|| vec![0.0]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phases(p: &MwProgram) -> Vec<f64> {
        p.ops
            .iter()
            .filter_map(|op| match op {
                MwOp::Pulse { duration_us, phase_deg, omega } if (*duration_us - 0.5 / omega).abs() < 1e-15 => {
                    Some(*phase_deg)
                }
                _ => None,
            })
            .collect()
    }

    #[test]
    fn xy8_golden_sequence() {
        let mut m = MwSequence::new(MwKind::Xy8, 100.0, 10.0);
        m.repeats = Some(2);
        m.tau_us = Some(1.5);
        let p = m.program(0.0, 1.0);
        let expected: Vec<f64> = [0.0, 90.0, 0.0, 90.0, 90.0, 0.0, 90.0, 0.0].repeat(2);
        assert_eq!(phases(&p), expected);
        assert_eq!(p.n_pi, 16);
        assert_eq!(p.free_time_us, 2.0 * 16.0 * 1.5);
        let free: f64 = p
            .ops
            .iter()
            .map(|op| match op {
                MwOp::Free { duration_us } => *duration_us,
                _ => 0.0,
            })
            .sum();
        assert!((free - p.free_time_us).abs() < 1e-12);
    }

    #[test]
    fn xy4_and_hahn_structure() {
        let p = MwSequence::new(MwKind::Xy4, 100.0, 10.0).program(0.0, 1.0);
        assert_eq!(phases(&p), XY4_PHASES.to_vec());
        let h =
            MwSequence::new(MwKind::Hahn, 100.0, 10.0).with_sweep(SweepParameter::Delay, vec![2.0]).program(2.0, 1.0);
        assert_eq!(h.ops.len(), 5);
        assert_eq!(h.free_time_us, 4.0);
    }

    #[test]
    fn malformed_phases_rejected() {
        let mut m = MwSequence::new(MwKind::Xy8, 100.0, 10.0);
        m.phases_deg = Some(vec![0.0, 90.0, 0.0, 90.0, 0.0, 90.0, 0.0, 90.0]);
        assert!(matches!(m.validate(1.0), Err(SpinError::InvalidSequence(_))));
        m.phases_deg = Some(vec![360.0, 90.0, 0.0, -270.0, 90.0, 0.0, 90.0, 0.0]);
        assert!(m.validate(1.0).is_ok());
    }

    #[test]
    fn descriptor_round_trip() {
        let m = MwSequence::new(MwKind::Ramsey, 181.8, 5.0).with_sweep(SweepParameter::Delay, vec![0.0, 0.1, 0.2]);
        let seq = SpinSequence::standard(m);
        seq.validate(1.0).unwrap();
        let text = seq.to_toml_string().unwrap();
        assert_eq!(SpinSequence::from_toml_str(&text).unwrap(), seq);
    }

    #[test]
    fn descriptor_with_range_sweep() {
        let text = r#"
            [[blocks]]
            kind = "check"
            duration_us = 150.0
            laser = "a1"

            [[blocks]]
            kind = "mw"
            mw_payload = "rabi"

            [[blocks]]
            kind = "readout"
            duration_us = 60.0
            laser = "a2"

            [mw.rabi]
            kind = "rabi_burst"
            frequency_mhz = 181.8
            rabi_mhz = 2.0
            sweep = { parameter = "duration", values = { start = 0.0, stop = 1.0, points = 11 } }
        "#;
        let seq = SpinSequence::from_toml_str(text).unwrap();
        seq.validate(1.0).unwrap();
        assert_eq!(seq.sweep_values().unwrap().len(), 11);
    }

    #[test]
    fn structural_validation() {
        let m = MwSequence::new(MwKind::Ramsey, 181.8, 5.0);
        let mut seq = SpinSequence::standard(m);
        seq.blocks.retain(|b| b.kind != BlockKind::Readout);
        assert!(seq.validate(1.0).is_err());
        let mut seq = SpinSequence::standard(MwSequence::new(MwKind::Ramsey, 181.8, 5.0));
        seq.blocks[2].laser = Laser::None;
        assert!(seq.validate(1.0).is_err());
        let mut seq = SpinSequence::standard(MwSequence::new(MwKind::Ramsey, 181.8, 5.0));
        seq.mw.clear();
        assert!(seq.validate(1.0).is_err());
        let bad_sweep = MwSequence::new(MwKind::Ramsey, 181.8, 5.0).with_sweep(SweepParameter::Duration, vec![1.0]);
        assert!(SpinSequence::standard(bad_sweep).validate(1.0).is_err());
    }
}
