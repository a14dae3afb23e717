use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::arch::TechParams;

/// One timed event: a write, a search, or a peripheral activation.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    pub step: u64,
    pub level: &'static str,
    /// Unit path such as `b0.m1.a2.s3`.
    pub handle: String,
    pub op: &'static str,
    pub rows_active: usize,
    pub latency_ns: f64,
    pub energy_pj: f64,
}

pub const TRACE_HEADER: &str = "step,level,handle,op,rows_active,latency_ns,energy_pj";

impl TraceEvent {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.step, self.level, self.handle, self.op, self.rows_active, self.latency_ns, self.energy_pj
        )
    }
}

/// Event counts. Energy totals are computed from these so they do not
/// depend on the order events happened in.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    /// Cells compared on binary (TCAM) match lines.
    pub search_cells: u64,
    /// Cells compared on multi-bit or analog match lines.
    pub search_cells_scaled: u64,
    pub write_cells: u64,
    pub searches: u64,
    pub writes: u64,
    pub array_activations: u64,
    pub mat_activations: u64,
    pub bank_activations: u64,
    /// Partial-result merges done outside the CAM; not costed.
    pub host_merges: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub latency_ns: f64,
    pub energy_pj: f64,
    pub search_energy_pj: f64,
    pub write_energy_pj: f64,
    pub peripheral_energy_pj: f64,
    pub avg_power_w: f64,
    pub peak_power_w: f64,
    pub subarrays_used: usize,
    pub banks_used: usize,
    pub search_steps: usize,
    pub write_steps: usize,
    pub counters: Counters,
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct StepStat {
    pub latency_ns: f64,
    pub energy_pj: f64,
    pub searches: bool,
    pub writes: bool,
}

impl Metrics {
    pub(crate) fn compute(
        tech: &TechParams,
        c: Counters,
        steps: &BTreeMap<u64, StepStat>,
        subarrays_used: usize,
        banks_used: usize,
    ) -> Metrics {
        let pe = &tech.peripheral_energy_pj;
        let search = c.search_cells as f64 * tech.search_energy_pj_per_cell
            + c.search_cells_scaled as f64 * tech.search_energy_pj_per_cell * tech.ml_voltage_scale;
        let write = c.write_cells as f64 * tech.write_energy_pj_per_cell;
        let periph = c.searches as f64 * pe.subarray
            + c.array_activations as f64 * pe.array
            + c.mat_activations as f64 * pe.mat
            + c.bank_activations as f64 * pe.bank;
        let latency = steps.values().fold(0.0, |t, s| t + s.latency_ns);
        let energy = search + write + periph;
        let power = |e: f64, l: f64| if l > 0.0 { e / l * 1e-3 } else { 0.0 };
        let peak = steps
            .values()
            .map(|s| power(s.energy_pj, s.latency_ns))
            .fold(0.0, f64::max);
        Metrics {
            latency_ns: latency,
            energy_pj: energy,
            search_energy_pj: search,
            write_energy_pj: write,
            peripheral_energy_pj: periph,
            avg_power_w: power(energy, latency),
            peak_power_w: peak,
            subarrays_used,
            banks_used,
            search_steps: steps.values().filter(|s| s.searches).count(),
            write_steps: steps.values().filter(|s| s.writes).count(),
            counters: c,
        }
    }

    /// Energy-delay product in pJ*ns.
    pub fn edp(&self) -> f64 {
        self.energy_pj * self.latency_ns
    }

    pub fn report(&self) -> String {
        let mut s = String::new();
        let c = &self.counters;
        let _ = writeln!(s, "latency_ns        {:.4}", self.latency_ns);
        let _ = writeln!(s, "energy_pj         {:.4}", self.energy_pj);
        let _ = writeln!(s, "  search          {:.4}", self.search_energy_pj);
        let _ = writeln!(s, "  write           {:.4}", self.write_energy_pj);
        let _ = writeln!(s, "  peripheral      {:.4}", self.peripheral_energy_pj);
        let _ = writeln!(s, "avg_power_w       {:.6}", self.avg_power_w);
        let _ = writeln!(s, "peak_power_w      {:.6}", self.peak_power_w);
        let _ = writeln!(s, "edp_pj_ns         {:.4}", self.edp());
        let _ = writeln!(s, "subarrays_used    {}", self.subarrays_used);
        let _ = writeln!(s, "banks_used        {}", self.banks_used);
        let _ = writeln!(s, "search_steps      {}", self.search_steps);
        let _ = writeln!(s, "write_steps       {}", self.write_steps);
        let _ = writeln!(s, "searches          {}", c.searches);
        let _ = writeln!(s, "writes            {}", c.writes);
        let _ = writeln!(s, "unmodeled host merges {}", c.host_merges);
        s
    }

    pub fn csv_header(edp: bool) -> &'static str {
        if edp {
            "config,latency_ns,energy_pj,avg_power_w,peak_power_w,subarrays,banks,edp"
        } else {
            "config,latency_ns,energy_pj,avg_power_w,peak_power_w,subarrays,banks"
        }
    }

    pub fn csv_row(&self, config: &str, edp: bool) -> String {
        let mut row = format!(
            "{config},{},{},{},{},{},{}",
            self.latency_ns, self.energy_pj, self.avg_power_w, self.peak_power_w, self.subarrays_used, self.banks_used
        );
        if edp {
            let _ = write!(row, ",{}", self.edp());
        }
        row
    }
}
