//! First-order analytic PPA model of a CIM accelerator, plus the batch
//! runtime cost model used to convert evaluation counts into wall-clock
//! estimates.
//!
//! The model is deliberately simple and monotone-structured: ACIM layers are
//! tiled onto `rowACIM x colACIM` subarrays with 1-bit cells (one column per
//! weight bit), columns share ADCs through a `muxColADC`-way mux, and a read
//! activates `2^levelADC` rows at a time. Attention products run on a fixed
//! pool of digital CIM macros of `rowDCIM x colDCIM` cells. Layers are
//! pipelined: latency is the slowest stage plus a bubble term proportional to
//! the summed stage times.

pub mod runtime;
pub mod workload;

use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::design_space::{DesignPoint, ValidityRule, ROW_GE_PARALLEL_READ};
use crate::error::{Error, Result};

pub use runtime::{
    estimate_runtime, batched_average_runtime, batched_total_runtime, CharacterizedPoint,
    RunTrace, RuntimeCostModel, RuntimeEstimate,
};
pub use workload::{LayerDesc, LayerKind, Workload};

/// System-level metrics of one design point under one workload.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PpaRecord {
    #[serde(rename = "area_mm2")]
    pub area: f64,
    #[serde(rename = "power_mW")]
    pub power: f64,
    #[serde(rename = "latency_ms")]
    pub latency: f64,
    #[serde(rename = "energy_eff_TOPS_per_W")]
    pub energy_eff: f64,
    #[serde(rename = "compute_eff_TOPS_per_mm2")]
    pub compute_eff: f64,
    #[serde(rename = "throughput_TOPS")]
    pub throughput: f64,
    pub fom: f64,
}

impl PpaRecord {
    /// Derives the efficiency metrics from raw totals.
    ///
    /// `ops` per inference, `energy_uj` in microjoules, `latency_ms` in
    /// milliseconds, `area_mm2` in square millimetres.
    pub fn from_totals(ops: f64, energy_uj: f64, latency_ms: f64, area_mm2: f64) -> Result<Self> {
        if !(ops > 0.0 && energy_uj > 0.0 && latency_ms > 0.0 && area_mm2 > 0.0)
            || !(ops.is_finite() && energy_uj.is_finite() && latency_ms.is_finite() && area_mm2.is_finite())
        {
            return Err(Error::ModelConfig(format!(
                "nonpositive intermediate: ops={ops}, energy={energy_uj}uJ, latency={latency_ms}ms, area={area_mm2}mm2"
            )));
        }
        // uJ / ms = mW
        let power = energy_uj / latency_ms;
        // ops / s / 1e12
        let throughput = ops / (latency_ms * 1e-3) / 1e12;
        // ops / J / 1e12
        let energy_eff = ops / (energy_uj * 1e-6) / 1e12;
        let compute_eff = throughput / area_mm2;
        Ok(Self {
            area: area_mm2,
            power,
            latency: latency_ms,
            energy_eff,
            compute_eff,
            throughput,
            fom: energy_eff * compute_eff,
        })
    }

    /// Looks a metric up by its short name.
    pub fn metric(&self, name: &str) -> Option<f64> {
        Some(match name {
            "area" => self.area,
            "power" => self.power,
            "latency" => self.latency,
            "energy_eff" => self.energy_eff,
            "compute_eff" => self.compute_eff,
            "throughput" => self.throughput,
            "fom" => self.fom,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    /// Bit-cell area including access devices, um^2.
    pub cell_area_um2: f64,
    /// Energy of reading one cell for one input bit, fJ.
    pub read_energy_fj: f64,
    /// Array read (wordline + bitline settle) time per cycle, ns.
    pub read_latency_ns: f64,
    /// Standby power density, mW per mm^2.
    pub leakage_mw_per_mm2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdcParams {
    /// Area per unit (Flash: per comparator, scaled by 2^bits; SAR: per bit), um^2.
    pub area_um2: f64,
    /// Energy per conversion per unit, fJ.
    pub energy_fj: f64,
    /// Conversion time per unit, ns (Flash: whole conversion; SAR: per bit).
    pub latency_ns: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DcimParams {
    pub cell_area_um2: f64,
    /// Fixed area per macro (adder tree root, control), um^2.
    pub macro_overhead_um2: f64,
    /// Energy per 8-bit operation, fJ.
    pub op_energy_fj: f64,
    /// Energy to write one cell when reloading dynamic operands, fJ.
    pub write_energy_fj: f64,
    /// Base cycle time, ns; one adder-tree level adds `tree_level_ns`.
    pub cycle_ns: f64,
    pub tree_level_ns: f64,
    /// Number of digital macros available for attention.
    pub macros: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Standard deviation of the log-normal multiplier.
    pub sigma: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    pub devices: BTreeMap<String, DeviceParams>,
    pub flash: AdcParams,
    pub sar: AdcParams,
    /// Rows at which the ADC sample-and-hold is sized; readout area scales with rows / this.
    pub readout_ref_rows: f64,
    /// Array periphery (drivers, decoders) as a fraction of cell area.
    pub periphery_factor: f64,
    /// Partial-sum accumulation energy per bit-add, fJ.
    pub accum_energy_fj: f64,
    /// Adder-tree level latency for cross-subarray accumulation, ns.
    pub accum_level_ns: f64,
    pub dcim: DcimParams,
    /// Weight-replication factor applied to conv layers when `weightDup = 1`.
    pub dup_factor: u64,
    /// Scale of the pipeline-fill term relative to the summed stage times.
    pub bubble_factor: f64,
    /// Global buffer and control area, mm^2.
    pub chip_overhead_mm2: f64,
    /// Technology node the device coefficients are characterized at.
    pub reference_node_nm: f64,
    /// Node being modeled; area scales quadratically, energy and delay linearly.
    pub node_nm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseConfig>,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        let mut devices = BTreeMap::new();
        devices.insert(
            "SRAM".to_string(),
            DeviceParams {
                cell_area_um2: 0.30,
                read_energy_fj: 0.25,
                read_latency_ns: 0.6,
                leakage_mw_per_mm2: 0.35,
            },
        );
        devices.insert(
            "RRAM".to_string(),
            DeviceParams {
                cell_area_um2: 0.06,
                read_energy_fj: 0.90,
                read_latency_ns: 1.6,
                leakage_mw_per_mm2: 0.05,
            },
        );
        devices.insert(
            "FeFET".to_string(),
            DeviceParams {
                cell_area_um2: 0.11,
                read_energy_fj: 0.45,
                read_latency_ns: 1.1,
                leakage_mw_per_mm2: 0.08,
            },
        );
        Self {
            devices,
            flash: AdcParams {
                area_um2: 2.0,
                energy_fj: 2.5,
                latency_ns: 0.8,
            },
            sar: AdcParams {
                area_um2: 14.0,
                energy_fj: 14.0,
                latency_ns: 0.45,
            },
            readout_ref_rows: 128.0,
            periphery_factor: 0.3,
            accum_energy_fj: 1.2,
            accum_level_ns: 0.5,
            dcim: DcimParams {
                cell_area_um2: 0.9,
                macro_overhead_um2: 12000.0,
                op_energy_fj: 18.0,
                write_energy_fj: 3.0,
                cycle_ns: 1.0,
                tree_level_ns: 0.35,
                macros: 64,
            },
            dup_factor: 2,
            bubble_factor: 0.5,
            chip_overhead_mm2: 4.0,
            reference_node_nm: 22.0,
            node_nm: 22.0,
            noise: None,
        }
    }
}

impl SurrogateConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn at_node(mut self, node_nm: f64) -> Self {
        self.node_nm = node_nm;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let mut coeffs = vec![
            self.flash.area_um2,
            self.flash.energy_fj,
            self.flash.latency_ns,
            self.sar.area_um2,
            self.sar.energy_fj,
            self.sar.latency_ns,
            self.readout_ref_rows,
            self.periphery_factor,
            self.accum_energy_fj,
            self.accum_level_ns,
            self.dcim.cell_area_um2,
            self.dcim.macro_overhead_um2,
            self.dcim.op_energy_fj,
            self.dcim.write_energy_fj,
            self.dcim.cycle_ns,
            self.dcim.tree_level_ns,
            self.dcim.macros as f64,
            self.dup_factor as f64,
            self.bubble_factor,
            self.chip_overhead_mm2,
            self.reference_node_nm,
            self.node_nm,
        ];
        for d in self.devices.values() {
            coeffs.extend([d.cell_area_um2, d.read_energy_fj, d.read_latency_ns, d.leakage_mw_per_mm2]);
        }
        if self.devices.is_empty() || coeffs.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::ModelConfig("all surrogate coefficients must be positive".into()));
        }
        if let Some(n) = &self.noise {
            if !(n.sigma.is_finite() && n.sigma >= 0.0) {
                return Err(Error::ModelConfig("noise sigma must be nonnegative".into()));
            }
        }
        Ok(())
    }
}

fn ceil_div(a: u64, b: u64) -> u64 {
    a.div_ceil(b)
}

fn log2_ceil(n: u64) -> u64 {
    if n <= 1 {
        0
    } else {
        64 - (n - 1).leading_zeros() as u64
    }
}

fn required_int(point: &DesignPoint, name: &str) -> Result<u64> {
    let v = point
        .int(name)
        .ok_or_else(|| Error::schema(format!("design point lacks integer parameter `{name}`")))?;
    u64::try_from(v)
        .ok()
        .filter(|v| *v > 0)
        .ok_or_else(|| Error::ModelConfig(format!("parameter `{name}` must be positive, got {v}")))
}

fn required_text<'a>(point: &'a DesignPoint, name: &str) -> Result<&'a str> {
    point
        .text(name)
        .ok_or_else(|| Error::schema(format!("design point lacks parameter `{name}`")))
}

/// Per-stage contributions in base units: um^2, fJ, ns.
#[derive(Default)]
struct Stage {
    area_um2: f64,
    energy_fj: f64,
    time_ns: f64,
    conv: bool,
}

/// Evaluates one design point under one workload.
pub fn simulate(point: &DesignPoint, workload: &Workload, cfg: &SurrogateConfig) -> Result<PpaRecord> {
    let rule = ValidityRule::builtin(ROW_GE_PARALLEL_READ).expect("builtin rule");
    if !rule.holds(point) {
        return Err(Error::Validity {
            rule: ROW_GE_PARALLEL_READ.to_string(),
        });
    }
    let device_name = required_text(point, "memCellType")?;
    let device = cfg
        .devices
        .get(device_name)
        .ok_or_else(|| Error::ModelConfig(format!("no device model for `{device_name}`")))?;
    let rows = required_int(point, "rowACIM")?;
    let cols = required_int(point, "colACIM")?;
    let bits = required_int(point, "levelADC")?;
    let mux = required_int(point, "muxColADC")?;
    let adc_type = required_text(point, "typeADC")?;
    let dup = match point.int("weightDup") {
        None | Some(0) => 1,
        Some(1) => cfg.dup_factor,
        Some(v) => return Err(Error::ModelConfig(format!("weightDup must be 0 or 1, got {v}"))),
    };
    if mux > cols {
        return Err(Error::ModelConfig(format!("muxColADC {mux} exceeds colACIM {cols}")));
    }
    let parallel_rows = 1u64 << bits;

    let (adc_area, adc_energy, adc_time) = match adc_type {
        "Flash" => {
            let levels = parallel_rows as f64;
            (cfg.flash.area_um2 * levels, cfg.flash.energy_fj * levels, cfg.flash.latency_ns)
        }
        "SAR" => {
            let b = bits as f64;
            (cfg.sar.area_um2 * b, cfg.sar.energy_fj * b, cfg.sar.latency_ns * b)
        }
        other => return Err(Error::ModelConfig(format!("unknown ADC type `{other}`"))),
    };

    let input_bits = u64::from(workload.input_bits);
    let weight_bits = u64::from(workload.weight_bits);
    let cycle_ns = device.read_latency_ns + adc_time;

    let dcim_dims = if workload.uses_dcim {
        Some((required_int(point, "rowDCIM")?, required_int(point, "colDCIM")?))
    } else {
        None
    };

    let mut stages = Vec::with_capacity(workload.layers.len());
    for layer in &workload.layers {
        let stage = match layer.kind {
            LayerKind::Conv | LayerKind::Linear => {
                let row_tiles = ceil_div(layer.weight_rows, rows);
                let col_tiles = ceil_div(weight_bits * layer.weight_cols, cols);
                let replicas = if layer.kind == LayerKind::Conv { dup } else { 1 };
                let tiles = (row_tiles * col_tiles * replicas) as f64;

                let adcs = (cols / mux) as f64;
                let array_area = (rows * cols) as f64 * device.cell_area_um2 * (1.0 + cfg.periphery_factor);
                let readout_area = adcs * adc_area * rows as f64 / cfg.readout_ref_rows;
                let area = tiles * (array_area + readout_area);

                let mvm_cycles = input_bits * mux * ceil_div(rows, parallel_rows);
                let mvm_ns = mvm_cycles as f64 * cycle_ns + log2_ceil(row_tiles) as f64 * cfg.accum_level_ns;

                let cells = (layer.weight_rows * weight_bits * layer.weight_cols) as f64;
                let conversions = (input_bits * row_tiles * col_tiles * ceil_div(rows, parallel_rows) * cols) as f64;
                let accum_adds = (input_bits * row_tiles * weight_bits * layer.weight_cols) as f64;
                let mvm_fj = input_bits as f64 * cells * device.read_energy_fj
                    + conversions * adc_energy
                    + accum_adds * cfg.accum_energy_fj;

                Stage {
                    area_um2: area,
                    energy_fj: mvm_fj * layer.activations as f64,
                    time_ns: mvm_ns * layer.activations as f64,
                    conv: layer.kind == LayerKind::Conv,
                }
            }
            LayerKind::Attention => {
                let (drows, dcols) = dcim_dims.ok_or_else(|| {
                    Error::ModelConfig(format!("workload `{}` has attention layers but no DCIM", workload.name))
                })?;
                let steps = ceil_div(layer.weight_rows, drows) * ceil_div(weight_bits * layer.weight_cols, dcols);
                let step_ns = cfg.dcim.cycle_ns + log2_ceil(drows) as f64 * cfg.dcim.tree_level_ns;
                let vectors_per_macro = ceil_div(layer.activations, cfg.dcim.macros);
                let time = (vectors_per_macro * input_bits * steps) as f64 * step_ns;
                let reload_cells = (steps * drows * dcols) as f64;
                let energy = layer.ops as f64 * cfg.dcim.op_energy_fj
                    + reload_cells * cfg.dcim.write_energy_fj * cfg.dcim.macros as f64;
                Stage {
                    area_um2: 0.0,
                    energy_fj: energy,
                    time_ns: time,
                    conv: false,
                }
            }
        };
        stages.push(stage);
    }

    let mut area_um2: f64 = stages.iter().map(|s| s.area_um2).sum();
    if let Some((drows, dcols)) = dcim_dims {
        let per_macro = (drows * dcols) as f64 * cfg.dcim.cell_area_um2 + cfg.dcim.macro_overhead_um2;
        area_um2 += per_macro * cfg.dcim.macros as f64;
    }
    let dynamic_fj: f64 = stages.iter().map(|s| s.energy_fj).sum();
    let max_stage = stages.iter().map(|s| s.time_ns).fold(0.0, f64::max);
    let bubble: f64 = stages
        .iter()
        .map(|s| if s.conv { s.time_ns / dup as f64 } else { s.time_ns })
        .sum::<f64>()
        * cfg.bubble_factor;

    let scale = cfg.node_nm / cfg.reference_node_nm;
    let area_mm2 = (area_um2 * 1e-6 + cfg.chip_overhead_mm2) * scale * scale;
    let latency_ms = (max_stage + bubble) * 1e-6 * scale;
    let leakage_uj = device.leakage_mw_per_mm2 * area_mm2 * latency_ms;
    let mut energy_uj = dynamic_fj * 1e-9 * scale + leakage_uj;
    let mut latency_ms = latency_ms;

    if let Some(noise) = &cfg.noise {
        if noise.sigma > 0.0 {
            let (a, b) = lognormal_pair(point, noise);
            energy_uj *= a;
            latency_ms *= b;
        }
    }

    PpaRecord::from_totals(workload.total_ops() as f64, energy_uj, latency_ms, area_mm2)
}

/// Deterministic per-point log-normal multipliers.
fn lognormal_pair(point: &DesignPoint, noise: &NoiseConfig) -> (f64, f64) {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    point.hash(&mut h);
    noise.seed.hash(&mut h);
    let mut rng = ChaCha8Rng::seed_from_u64(h.finish());
    let mut normal = || {
        // Box-Muller
        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    };
    ((noise.sigma * normal()).exp(), (noise.sigma * normal()).exp())
}

/// Anything that maps a design point to a PPA record.
pub trait Evaluator: Sync {
    fn evaluate(&self, point: &DesignPoint) -> Result<PpaRecord>;
}

impl<F> Evaluator for F
where
    F: Fn(&DesignPoint) -> Result<PpaRecord> + Sync,
{
    fn evaluate(&self, point: &DesignPoint) -> Result<PpaRecord> {
        self(point)
    }
}

/// The analytic surrogate bound to one workload.
#[derive(Clone, Debug)]
pub struct SurrogateEvaluator {
    pub workload: Workload,
    pub cfg: SurrogateConfig,
}

impl SurrogateEvaluator {
    pub fn new(workload: Workload, cfg: SurrogateConfig) -> Self {
        Self { workload, cfg }
    }
}

impl Evaluator for SurrogateEvaluator {
    fn evaluate(&self, point: &DesignPoint) -> Result<PpaRecord> {
        simulate(point, &self.workload, &self.cfg)
    }
}

/// Wraps an evaluator and counts calls.
pub struct CountingEvaluator<E> {
    inner: E,
    calls: std::sync::atomic::AtomicUsize,
}

impl<E: Evaluator> CountingEvaluator<E> {
    pub fn new(inner: E) -> Self {
        Self {
            inner,
            calls: Default::default(),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(std::sync::atomic::Ordering::SeqCst)
    }
}

impl<E: Evaluator> Evaluator for CountingEvaluator<E> {
    fn evaluate(&self, point: &DesignPoint) -> Result<PpaRecord> {
        self.calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        self.inner.evaluate(point)
    }
}

/// Evaluates `points` with up to `parallelism` worker threads. Output order
/// matches input order.
pub fn evaluate_batch<E: Evaluator + ?Sized>(
    evaluator: &E,
    points: &[DesignPoint],
    parallelism: usize,
) -> Result<Vec<PpaRecord>> {
    if parallelism == 0 {
        return Err(Error::config("parallelism must be at least 1"));
    }
    let wrap = |index: usize, e: Error| Error::Batch {
        index,
        source: Box::new(e),
    };
    if parallelism == 1 || points.len() < 2 {
        return points
            .iter()
            .enumerate()
            .map(|(i, p)| evaluator.evaluate(p).map_err(|e| wrap(i, e)))
            .collect();
    }
    let chunk = points.len().div_ceil(parallelism);
    let results: Vec<Vec<Result<PpaRecord>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = points
            .chunks(chunk)
            .map(|c| scope.spawn(move || c.iter().map(|p| evaluator.evaluate(p)).collect::<Vec<_>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("evaluator panicked")).collect()
    });
    results
        .into_iter()
        .flatten()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| wrap(i, e)))
        .collect()
}

/// Batch form of [`simulate`].
pub fn batch_simulate(
    points: &[DesignPoint],
    workload: &Workload,
    cfg: &SurrogateConfig,
    parallelism: usize,
) -> Result<Vec<PpaRecord>> {
    evaluate_batch(&|p: &DesignPoint| simulate(p, workload, cfg), points, parallelism)
}
