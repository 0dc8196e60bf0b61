//! D2D scenario generation under the ITU-R P.1411 short-range outdoor model.
//!
//! Powers are normalized: the solvers work with `p ∈ (0, 1]^K` as a fraction
//! of the common transmit power and unit noise, so all physical scale is
//! folded into the gain matrix `G`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const SPEED_OF_LIGHT: f64 = 3.0e8;
pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub num_links: usize,
    /// Side of the square deployment area, meters.
    pub area_side: f64,
    pub d_min: f64,
    pub d_max: f64,
    /// Hz.
    pub carrier_freq: f64,
    /// Hz.
    pub bandwidth: f64,
    pub antenna_height: f64,
    pub tx_power_dbm: f64,
    pub noise_psd_dbm_hz: f64,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            num_links: 10,
            area_side: 500.0,
            d_min: 2.0,
            d_max: 65.0,
            carrier_freq: 2.4e9,
            bandwidth: 20e6,
            antenna_height: 1.5,
            tx_power_dbm: 20.0,
            noise_psd_dbm_hz: -174.0,
            rng_seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn with_links(num_links: usize, rng_seed: u64) -> Self {
        Self {
            num_links,
            rng_seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.num_links == 0 {
            return bad("num_links must be at least 1");
        }
        let positive = [
            ("area_side", self.area_side),
            ("d_min", self.d_min),
            ("d_max", self.d_max),
            ("carrier_freq", self.carrier_freq),
            ("bandwidth", self.bandwidth),
            ("antenna_height", self.antenna_height),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be finite and positive, got {v}"
                )));
            }
        }
        if !(self.tx_power_dbm.is_finite() && self.noise_psd_dbm_hz.is_finite()) {
            return bad("power levels must be finite");
        }
        if !(self.d_min < self.d_max && self.d_max < self.area_side) {
            return bad("require 0 < d_min < d_max < area_side");
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq
    }

    /// LoS breakpoint distance `4 h² / λ`, meters.
    pub fn breakpoint_distance(&self) -> f64 {
        4.0 * self.antenna_height.powi(2) / self.wavelength()
    }

    /// Basic transmission loss at the breakpoint, dB.
    pub fn breakpoint_loss_db(&self) -> f64 {
        let lambda = self.wavelength();
        let h2 = self.antenna_height.powi(2);
        (20.0 * (lambda * lambda / (8.0 * PI * h2)).log10()).abs()
    }

    /// Thermal noise power over the band, dBm.
    pub fn noise_power_dbm(&self) -> f64 {
        self.noise_psd_dbm_hz + 10.0 * self.bandwidth.log10()
    }

    pub fn noise_power_watts(&self) -> f64 {
        dbm_to_watts(self.noise_power_dbm())
    }

    pub fn tx_power_watts(&self) -> f64 {
        dbm_to_watts(self.tx_power_dbm)
    }

    /// Normalized gain of a link at the minimum Tx-Rx distance. Direct links
    /// never exceed it; used as the scale of the learned gain encoding.
    pub fn gain_ceiling(&self) -> f64 {
        normalized_gain(self.d_min, self).expect("d_min validated positive")
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Line-of-sight lower-bound path loss in dB.
pub fn pathloss_db(distance: f64, config: &ScenarioConfig) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(Error::NonPositiveDistance(distance));
    }
    let r_bp = config.breakpoint_distance();
    let l_bp = config.breakpoint_loss_db();
    let slope = if distance <= r_bp { 20.0 } else { 40.0 };
    Ok(l_bp + 6.0 + slope * (distance / r_bp).log10())
}

/// Linear channel gain times `P_tx / σ²`.
pub fn normalized_gain(distance: f64, config: &ScenarioConfig) -> Result<f64> {
    let loss = pathloss_db(distance, config)?;
    Ok(10f64.powf(-loss / 10.0) * config.tx_power_watts() / config.noise_power_watts())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Transmitters uniform in the square; each receiver at a uniform radius in
/// `[d_min, d_max]` and a uniform angle around its transmitter.
pub fn sample_positions<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    rng: &mut R,
) -> (Vec<Point>, Vec<Point>) {
    let mut tx = Vec::with_capacity(config.num_links);
    let mut rx = Vec::with_capacity(config.num_links);
    for _ in 0..config.num_links {
        let t = Point {
            x: rng.gen_range(0.0..=config.area_side),
            y: rng.gen_range(0.0..=config.area_side),
        };
        let r = rng.gen_range(config.d_min..=config.d_max);
        let theta = rng.gen_range(0.0..2.0 * PI);
        tx.push(t);
        rx.push(Point {
            x: t.x + r * theta.cos(),
            y: t.y + r * theta.sin(),
        });
    }
    (tx, rx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    #[default]
    Uniform01,
    Ones,
}

impl std::str::FromStr for WeightMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform01" => Ok(WeightMode::Uniform01),
            "ones" => Ok(WeightMode::Ones),
            other => Err(Error::InvalidConfig(format!(
                "unknown weight mode {other:?} (expected uniform01 or ones)"
            ))),
        }
    }
}

/// Link weights. `Uniform01` draws from `(0, 1]` so every weight stays
/// strictly positive.
pub fn sample_weights<R: Rng + ?Sized>(k: usize, mode: WeightMode, rng: &mut R) -> DVector<f64> {
    match mode {
        WeightMode::Ones => DVector::from_element(k, 1.0),
        WeightMode::Uniform01 => DVector::from_fn(k, |_, _| 1.0 - rng.gen::<f64>()),
    }
}

/// One power control problem in normalized units.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkInstance {
    /// `gains[(i, j)]` is the gain from transmitter `j` to receiver `i`.
    pub gains: DMatrix<f64>,
    pub weights: DVector<f64>,
    pub p_max: f64,
    pub noise: f64,
    pub seed: u64,
}

impl NetworkInstance {
    pub fn new(
        gains: DMatrix<f64>,
        weights: DVector<f64>,
        p_max: f64,
        noise: f64,
        seed: u64,
    ) -> Result<Self> {
        let k = gains.nrows();
        if gains.ncols() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: gains.ncols(),
            });
        }
        if weights.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: weights.len(),
            });
        }
        if gains.iter().any(|g| !g.is_finite() || *g < 0.0) {
            return Err(Error::InvalidConfig("gains must be finite and non-negative".into()));
        }
        if (0..k).any(|i| !(gains[(i, i)] > 0.0)) {
            return Err(Error::InvalidConfig("direct gains must be positive".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidConfig("weights must be finite and non-negative".into()));
        }
        if !(p_max > 0.0 && p_max.is_finite() && noise > 0.0 && noise.is_finite()) {
            return Err(Error::InvalidConfig("p_max and noise must be positive".into()));
        }
        Ok(Self {
            gains,
            weights,
            p_max,
            noise,
            seed,
        })
    }

    /// Builds an instance from a row-major gain slice with unit weights.
    pub fn from_rows(k: usize, rows: &[f64], noise: f64) -> Result<Self> {
        if rows.len() != k * k {
            return Err(Error::DimensionMismatch {
                expected: k * k,
                got: rows.len(),
            });
        }
        Self::new(
            DMatrix::from_row_slice(k, k, rows),
            DVector::from_element(k, 1.0),
            1.0,
            noise,
            0,
        )
    }

    pub fn k(&self) -> usize {
        self.gains.nrows()
    }

    pub fn with_weights(mut self, weights: DVector<f64>) -> Self {
        assert_eq!(weights.len(), self.k());
        self.weights = weights;
        self
    }

    pub fn direct_gains(&self) -> DVector<f64> {
        self.gains.diagonal()
    }
}

pub fn build_instance<R: Rng + ?Sized>(
    tx: &[Point],
    rx: &[Point],
    config: &ScenarioConfig,
    weight_mode: WeightMode,
    seed: u64,
    rng: &mut R,
) -> Result<NetworkInstance> {
    let k = tx.len();
    if rx.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: rx.len(),
        });
    }
    let mut gains = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            gains[(i, j)] = normalized_gain(rx[i].distance(&tx[j]), config)?;
        }
    }
    let weights = sample_weights(k, weight_mode, rng);
    NetworkInstance::new(gains, weights, 1.0, 1.0, seed)
}

/// Generates the instance with the given seed. Positions and weights come
/// from the same stream, positions first.
pub fn generate_instance(
    config: &ScenarioConfig,
    weight_mode: WeightMode,
    seed: u64,
) -> Result<NetworkInstance> {
    let mut rng = rng::stream(seed, 0);
    let (tx, rx) = sample_positions(config, &mut rng);
    build_instance(&tx, &rx, config, weight_mode, seed, &mut rng)
}

/// A small-scale random instance, not tied to any propagation model: direct
/// gains log-uniform in `[1, 100]`, cross gains log-uniform in `[0.01, 10]`,
/// noise uniform in `[0.1, 1]` and weights uniform in `(0, 1]`.
///
/// Used by the randomized checks to cover the moderate-SINR regime that
/// generated D2D networks rarely reach.
pub fn synthetic_instance<R: Rng + ?Sized>(k: usize, seed: u64, rng: &mut R) -> NetworkInstance {
    let mut log_uniform = |lo: f64, hi: f64| 10f64.powf(rng.gen_range(lo..=hi));
    let mut gains = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            gains[(i, j)] = if i == j { log_uniform(0.0, 2.0) } else { log_uniform(-2.0, 1.0) };
        }
    }
    let noise = rng.gen_range(0.1..=1.0);
    let weights = sample_weights(k, WeightMode::Uniform01, rng);
    NetworkInstance::new(gains, weights, 1.0, noise, seed).expect("valid by construction")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioDataset {
    pub format_version: u32,
    pub config: ScenarioConfig,
    pub instances: Vec<NetworkInstance>,
}

impl ScenarioDataset {
    pub fn k(&self) -> usize {
        self.config.num_links
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}

/// Instance `i` is generated from `child_seed(config.rng_seed, i)`.
pub fn generate_dataset(
    config: &ScenarioConfig,
    count: usize,
    weight_mode: WeightMode,
) -> Result<ScenarioDataset> {
    config.validate()?;
    let instances = (0..count)
        .into_par_iter()
        .map(|i| generate_instance(config, weight_mode, rng::child_seed(config.rng_seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScenarioDataset {
        format_version: DATASET_FORMAT_VERSION,
        config: config.clone(),
        instances,
    })
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    #[serde(flatten)]
    config: ScenarioConfig,
}

#[derive(Deserialize)]
#[allow(non_snake_case)]
struct InstanceRecord {
    seed: u64,
    K: usize,
    G: Vec<f64>,
    w: Vec<f64>,
    p_max: f64,
    noise: f64,
}

fn push_number(out: &mut String, x: f64) {
    // 17 significant digits round-trips every finite f64.
    write!(out, "{x:.16e}").unwrap();
}

fn push_array(out: &mut String, xs: impl IntoIterator<Item = f64>) {
    out.push('[');
    for (n, x) in xs.into_iter().enumerate() {
        if n > 0 {
            out.push(',');
        }
        push_number(out, x);
    }
    out.push(']');
}

fn instance_line(inst: &NetworkInstance) -> String {
    let k = inst.k();
    let mut s = String::with_capacity(24 * (k * k + k) + 64);
    write!(s, "{{\"seed\":{},\"K\":{},\"G\":", inst.seed, k).unwrap();
    push_array(&mut s, (0..k).flat_map(|i| (0..k).map(move |j| (i, j))).map(|ij| inst.gains[ij]));
    s.push_str(",\"w\":");
    push_array(&mut s, inst.weights.iter().copied());
    s.push_str(",\"p_max\":");
    push_number(&mut s, inst.p_max);
    s.push_str(",\"noise\":");
    push_number(&mut s, inst.noise);
    s.push('}');
    s
}

pub fn save_dataset(dataset: &ScenarioDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    let header = Header {
        format_version: dataset.format_version,
        config: dataset.config.clone(),
    };
    let header = serde_json::to_string(&header).expect("header serializes");
    writeln!(out, "{header}").map_err(io)?;
    for inst in &dataset.instances {
        writeln!(out, "{}", instance_line(inst)).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<ScenarioDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let malformed = |line: usize, msg: String| Error::Malformed {
        path: path.to_path_buf(),
        line,
        msg,
    };

    let first = lines
        .next()
        .ok_or_else(|| malformed(1, "missing header".into()))?
        .map_err(|e| Error::io(path, e))?;
    let probe: serde_json::Value =
        serde_json::from_str(&first).map_err(|e| malformed(1, e.to_string()))?;
    let version = probe
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| malformed(1, "header lacks format_version".into()))?;
    if version != DATASET_FORMAT_VERSION as u64 {
        return Err(Error::VersionMismatch {
            found: version as u32,
            supported: DATASET_FORMAT_VERSION,
        });
    }
    let header: Header = serde_json::from_value(probe).map_err(|e| malformed(1, e.to_string()))?;
    header.config.validate()?;
    let k = header.config.num_links;

    let mut instances = Vec::new();
    for (n, line) in lines.enumerate() {
        let lineno = n + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: InstanceRecord =
            serde_json::from_str(&line).map_err(|e| malformed(lineno, e.to_string()))?;
        if rec.K != k {
            return Err(Error::KMismatch {
                expected: k,
                found: rec.K,
            });
        }
        if rec.G.len() != k * k || rec.w.len() != k {
            return Err(malformed(lineno, format!("array lengths do not match K={k}")));
        }
        let inst = NetworkInstance::new(
            DMatrix::from_row_slice(k, k, &rec.G),
            DVector::from_vec(rec.w),
            rec.p_max,
            rec.noise,
            rec.seed,
        )
        .map_err(|e| malformed(lineno, e.to_string()))?;
        instances.push(inst);
    }
    Ok(ScenarioDataset {
        format_version: DATASET_FORMAT_VERSION,
        config: header.config,
        instances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg() -> ScenarioConfig {
        ScenarioConfig::default()
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = cfg();
        c.num_links = 0;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.d_min = 70.0;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.d_max = 600.0;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.bandwidth = -1.0;
        assert!(c.validate().is_err());
        assert!(cfg().validate().is_ok());
    }

    #[test]
    fn breakpoint_values() {
        let c = cfg();
        assert_relative_eq!(c.breakpoint_distance(), 72.0, epsilon = 1e-12);
        // |20 log10(λ² / (8π h²))| with λ = 0.125, h = 1.5
        let oracle = -20.0 * (0.125f64 * 0.125 / (8.0 * PI * 2.25)).log10();
        assert_relative_eq!(c.breakpoint_loss_db(), oracle, epsilon = 1e-12);
        assert!((c.breakpoint_loss_db() - 71.17).abs() < 0.01);
    }

    #[test]
    fn pathloss_examples() {
        let c = cfg();
        let at_bp = pathloss_db(72.0, &c).unwrap();
        assert_eq!(at_bp, c.breakpoint_loss_db() + 6.0);
        let at_10 = pathloss_db(10.0, &c).unwrap();
        assert!((at_10 - 60.03).abs() < 0.01, "{at_10}");
        let at_2 = pathloss_db(2.0, &c).unwrap();
        assert!((at_2 - 46.04).abs() < 0.01, "{at_2}");
        assert!(pathloss_db(0.0, &c).is_err());
        assert!(pathloss_db(-3.0, &c).is_err());
    }

    #[test]
    fn pathloss_continuous_and_monotone() {
        let c = cfg();
        let r = c.breakpoint_distance();
        let below = pathloss_db(r * (1.0 - 1e-12), &c).unwrap();
        let above = pathloss_db(r * (1.0 + 1e-12), &c).unwrap();
        assert!((below - above).abs() < 1e-9);
        let mut prev = f64::NEG_INFINITY;
        for n in 1..=1000 {
            let d = 0.5 * n as f64;
            let l = pathloss_db(d, &c).unwrap();
            assert!(l >= prev);
            prev = l;
        }
    }

    #[test]
    fn noise_power() {
        let c = cfg();
        let oracle = -174.0 + 10.0 * (2e7f64).log10();
        assert_relative_eq!(c.noise_power_dbm(), oracle, epsilon = 1e-12);
        assert!((c.noise_power_dbm() + 100.99).abs() < 0.01);
    }

    #[test]
    fn direct_gain_at_two_meters() {
        let c = cfg();
        let tx = [Point { x: 10.0, y: 10.0 }];
        let rx = [Point { x: 12.0, y: 10.0 }];
        let inst = build_instance(&tx, &rx, &c, WeightMode::Ones, 0, &mut rng::stream(0, 0)).unwrap();
        let loss = pathloss_db(2.0, &c).unwrap();
        let oracle_db = c.tx_power_dbm - loss - c.noise_power_dbm();
        assert_relative_eq!(inst.gains[(0, 0)].log10() * 10.0, oracle_db, epsilon = 1e-9);
        assert!((inst.gains[(0, 0)].log10() - 7.495).abs() < 0.001);
        assert_eq!(inst.p_max, 1.0);
        assert_eq!(inst.noise, 1.0);
    }

    #[test]
    fn doubling_tx_power_doubles_gains() {
        let c = cfg();
        let mut c2 = c.clone();
        c2.tx_power_dbm += 10.0 * 2f64.log10();
        let mut r = rng::stream(5, 0);
        let (tx, rx) = sample_positions(&ScenarioConfig::with_links(4, 5), &mut r);
        let a = build_instance(&tx, &rx, &c, WeightMode::Ones, 0, &mut rng::stream(1, 0)).unwrap();
        let b = build_instance(&tx, &rx, &c2, WeightMode::Ones, 0, &mut rng::stream(1, 0)).unwrap();
        for (x, y) in a.gains.iter().zip(b.gains.iter()) {
            assert_relative_eq!(2.0 * x, *y, max_relative = 1e-12);
        }
    }

    #[test]
    fn coincident_tx_rx_is_an_error() {
        let c = cfg();
        let tx = [Point { x: 0.0, y: 0.0 }, Point { x: 50.0, y: 0.0 }];
        let rx = [Point { x: 50.0, y: 0.0 }, Point { x: 60.0, y: 0.0 }];
        let err = build_instance(&tx, &rx, &c, WeightMode::Ones, 0, &mut rng::stream(0, 0));
        assert!(matches!(err, Err(Error::NonPositiveDistance(_))));
    }

    #[test]
    fn single_link_positions() {
        let c = ScenarioConfig::with_links(1, 99);
        let (tx, rx) = sample_positions(&c, &mut rng::stream(99, 0));
        assert_eq!(tx.len(), 1);
        let d = tx[0].distance(&rx[0]);
        assert!((2.0..=65.0).contains(&d));
        let again = sample_positions(&c, &mut rng::stream(99, 0));
        assert_eq!((tx, rx), again);
    }

    #[test]
    fn receiver_distance_mean() {
        let c = ScenarioConfig::with_links(10_000, 3);
        let (tx, rx) = sample_positions(&c, &mut rng::stream(3, 0));
        let mean = tx.iter().zip(&rx).map(|(t, r)| t.distance(r)).sum::<f64>() / 10_000.0;
        assert!((mean - 33.5).abs() < 1.0, "{mean}");
        for t in &tx {
            assert!((0.0..=500.0).contains(&t.x) && (0.0..=500.0).contains(&t.y));
        }
    }

    #[test]
    fn weights() {
        let mut r = rng::stream(11, 0);
        assert_eq!(sample_weights(3, WeightMode::Ones, &mut r).as_slice(), &[1.0, 1.0, 1.0]);
        let w = sample_weights(100_000, WeightMode::Uniform01, &mut r);
        assert!(w.iter().all(|&x| x > 0.0 && x <= 1.0));
        let mean = w.mean();
        assert!((mean - 0.5).abs() < 0.01, "{mean}");
    }

    #[test]
    fn generated_gains_positive_and_finite() {
        let ds = generate_dataset(&ScenarioConfig::with_links(10, 8), 50, WeightMode::Uniform01).unwrap();
        for inst in &ds.instances {
            assert!(inst.gains.iter().all(|g| g.is_finite() && *g > 0.0));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let c = ScenarioConfig::with_links(6, 1234);
        let a = generate_dataset(&c, 20, WeightMode::Uniform01).unwrap();
        let b = generate_dataset(&c, 20, WeightMode::Uniform01).unwrap();
        assert_eq!(a, b);
        let seeds: std::collections::HashSet<u64> = a.instances.iter().map(|i| i.seed).collect();
        assert_eq!(seeds.len(), 20);
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.jsonl");
        let ds = generate_dataset(&ScenarioConfig::with_links(5, 77), 12, WeightMode::Uniform01).unwrap();
        save_dataset(&ds, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(ds, back);

        let empty = ScenarioDataset {
            instances: vec![],
            ..ds
        };
        save_dataset(&empty, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        assert!(back.is_empty());
    }

    #[test]
    fn load_rejects_bad_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.jsonl");
        let ds = generate_dataset(&ScenarioConfig::with_links(3, 1), 2, WeightMode::Ones).unwrap();
        save_dataset(&ds, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();

        let bumped = text.replacen("\"format_version\":1", "\"format_version\":2", 1);
        std::fs::write(&path, bumped).unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::VersionMismatch { found: 2, .. })));

        let mut lines: Vec<&str> = text.lines().collect();
        let wrong_k = lines[2].replacen("\"K\":3", "\"K\":4", 1);
        lines[2] = &wrong_k;
        std::fs::write(&path, lines.join("\n")).unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::KMismatch { expected: 3, found: 4 })));

        std::fs::write(&path, format!("{}\n{{\"seed\": 1", text.lines().next().unwrap())).unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::Malformed { line: 2, .. })));
    }
}
