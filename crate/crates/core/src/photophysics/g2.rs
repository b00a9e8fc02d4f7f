use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::PhotoError;
use crate::{Exec, SeedTree};

const MAGIC: &[u8; 4] = b"G2TS";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Photon {
    pub channel: u8,
    pub time_ns: f64,
}

/// Coincidence histogram between channel 0 (start) and channel 1 (stop),
/// normalized so uncorrelated light gives one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G2Histogram {
    /// Bin centers [ns]; bin `k` collects `τ ∈ [(k - ½)w, (k + ½)w)`.
    pub tau_ns: Vec<f64>,
    pub g2: Vec<f64>,
    /// Poisson error on `g2`, floored at one count.
    pub sigma: Vec<f64>,
    pub counts: Vec<u64>,
    /// Expected coincidences per bin for uncorrelated light.
    pub norm: f64,
}

impl G2Histogram {
    /// Value at the bin centered on zero delay.
    pub fn at_zero(&self) -> (f64, f64) {
        let i = self.tau_ns.len() / 2;
        (self.g2[i], self.sigma[i])
    }
}

/// Histograms delays `t_1 - t_0` between photons on channels 0 and 1 up to
/// `|τ| ≤ max_tau_ns`. Photons must be ordered by time.
pub fn g2_histogram(
    photons: &[Photon],
    bin_width_ns: f64,
    max_tau_ns: f64,
    exec: Exec,
) -> Result<G2Histogram, PhotoError> {
    if !(bin_width_ns > 0.0) || !bin_width_ns.is_finite() {
        return Err(PhotoError::InvalidParameter("bin width must be positive".into()));
    }
    if !(max_tau_ns >= 0.0) || !max_tau_ns.is_finite() {
        return Err(PhotoError::InvalidParameter("max_tau must be non-negative".into()));
    }
    if photons.windows(2).any(|w| !(w[1].time_ns >= w[0].time_ns)) {
        return Err(PhotoError::InvalidParameter("timestamps must be ascending".into()));
    }
    let a: Vec<f64> = photons.iter().filter(|p| p.channel == 0).map(|p| p.time_ns).collect();
    let b: Vec<f64> = photons.iter().filter(|p| p.channel == 1).map(|p| p.time_ns).collect();
    if a.is_empty() {
        return Err(PhotoError::EmptyChannel(0));
    }
    if b.is_empty() {
        return Err(PhotoError::EmptyChannel(1));
    }
    let k_max = (max_tau_ns / bin_width_ns).floor() as i64;
    let nbins = (2 * k_max + 1) as usize;
    let reach = (k_max as f64 + 0.5) * bin_width_ns;

    let chunk = 1 << 14;
    let partial = exec.map_range(a.len().div_ceil(chunk), |c| {
        let mut hist = vec![0u64; nbins];
        let start = c * chunk;
        let end = (start + chunk).min(a.len());
        let mut j = b.partition_point(|&t| t < a[start] - reach);
        for &ta in &a[start..end] {
            while j < b.len() && b[j] < ta - reach {
                j += 1;
            }
            let mut m = j;
            while m < b.len() && b[m] < ta + reach {
                let k = ((b[m] - ta) / bin_width_ns + 0.5).floor() as i64;
                if (-k_max..=k_max).contains(&k) {
                    hist[(k + k_max) as usize] += 1;
                }
                m += 1;
            }
        }
        hist
    });
    let mut counts = vec![0u64; nbins];
    for h in partial {
        for (c, v) in counts.iter_mut().zip(h) {
            *c += v;
        }
    }
    let span = photons[photons.len() - 1].time_ns - photons[0].time_ns;
    if !(span > 0.0) {
        return Err(PhotoError::InvalidParameter("timestamps span zero time".into()));
    }
    let norm = a.len() as f64 * b.len() as f64 * bin_width_ns / span;
    Ok(G2Histogram {
        tau_ns: (-k_max..=k_max).map(|k| k as f64 * bin_width_ns).collect(),
        g2: counts.iter().map(|&c| c as f64 / norm).collect(),
        sigma: counts.iter().map(|&c| (c.max(1) as f64).sqrt() / norm).collect(),
        counts,
        norm,
    })
}

/// Single emitter plus Poissonian background behind a 50:50 beam splitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2Sim {
    /// Fraction of detected photons that come from the emitter.
    pub signal_fraction: f64,
    /// Total detected rate over both channels [1/s].
    pub rate_hz: f64,
    pub duration_s: f64,
    /// Mean re-excitation time after each emission [ns].
    pub reexcitation_ns: f64,
}

impl Default for G2Sim {
    fn default() -> Self {
        Self { signal_fraction: 1.0, rate_hz: 2e7, duration_s: 0.2, reexcitation_ns: 10.0 }
    }
}

/// Time-ordered photon stream. The emitter is a renewal process whose
/// inter-emission time is the sum of an exponential re-excitation delay and
/// an exponential wait, so two emitter photons never arrive together.
pub fn simulate_g2(sim: &G2Sim, seed: u64) -> Result<Vec<Photon>, PhotoError> {
    let p = sim.signal_fraction;
    if !(0.0..=1.0).contains(&p) {
        return Err(PhotoError::InvalidParameter("signal fraction must lie in [0, 1]".into()));
    }
    if !(sim.rate_hz > 0.0) || !(sim.duration_s > 0.0) || !(sim.reexcitation_ns > 0.0) {
        return Err(PhotoError::InvalidParameter("rate, duration and re-excitation time must be positive".into()));
    }
    let duration_ns = sim.duration_s * 1e9;
    let tree = SeedTree::new(seed).child("g2");
    let mut photons = Vec::new();

    if p > 0.0 {
        let mean_interval = 1e9 / (p * sim.rate_hz);
        let rest = mean_interval - sim.reexcitation_ns;
        if !(rest > 0.0) {
            return Err(PhotoError::InvalidParameter(format!(
                "emitter rate {:.3e}/s exceeds the re-excitation limit",
                p * sim.rate_hz
            )));
        }
        let mut rng = tree.stream(0);
        let exc = Exp::new(1.0 / sim.reexcitation_ns).expect("positive");
        let wait = Exp::new(1.0 / rest).expect("positive");
        // start from a uniformly random phase of the first interval
        let mut t = rng.random::<f64>() * mean_interval;
        while t < duration_ns {
            photons.push(Photon { channel: rng.random_range(0..2), time_ns: t });
            t += exc.sample(&mut rng) + wait.sample(&mut rng);
        }
    }
    if p < 1.0 {
        let mut rng = tree.stream(1);
        let gap = Exp::new((1.0 - p) * sim.rate_hz / 1e9).expect("positive");
        let mut t = gap.sample(&mut rng);
        while t < duration_ns {
            photons.push(Photon { channel: rng.random_range(0..2), time_ns: t });
            t += gap.sample(&mut rng);
        }
    }
    photons.sort_by(|a, b| a.time_ns.total_cmp(&b.time_ns));
    Ok(photons)
}

pub fn write_timestamps_csv<W: Write>(writer: W, photons: &[Photon]) -> Result<(), PhotoError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["channel", "time_ns"])?;
    for p in photons {
        w.write_record([p.channel.to_string(), p.time_ns.to_string()])?;
    }
    w.flush().map_err(|e| PhotoError::Csv(e.to_string()))?;
    Ok(())
}

pub fn read_timestamps_csv<R: Read>(reader: R) -> Result<Vec<Photon>, PhotoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(PhotoError::from)).collect()
}

/// Binary layout: `G2TS`, little-endian `u64` count, then per photon one
/// channel byte and a little-endian `f64` time.
pub fn write_timestamps_binary<W: Write>(mut writer: W, photons: &[Photon]) -> std::io::Result<()> {
    writer.write_all(MAGIC)?;
    writer.write_all(&(photons.len() as u64).to_le_bytes())?;
    for p in photons {
        writer.write_all(&[p.channel])?;
        writer.write_all(&p.time_ns.to_le_bytes())?;
    }
    writer.flush()
}

pub fn read_timestamps_binary<R: Read>(mut reader: R) -> Result<Vec<Photon>, PhotoError> {
    let io = |e: std::io::Error| PhotoError::Csv(format!("timestamp file: {e}"));
    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(PhotoError::Csv("not a binary timestamp file".into()));
    }
    let mut n = [0u8; 8];
    reader.read_exact(&mut n).map_err(io)?;
    let n = u64::from_le_bytes(n) as usize;
    let mut out = Vec::with_capacity(n.min(1 << 24));
    let mut rec = [0u8; 9];
    for _ in 0..n {
        reader.read_exact(&mut rec).map_err(io)?;
        let time_ns = f64::from_le_bytes(rec[1..].try_into().expect("8 bytes"));
        out.push(Photon { channel: rec[0], time_ns });
    }
    Ok(out)
}
