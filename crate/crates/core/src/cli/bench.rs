use std::fmt;

use crate::deployer::{deploy, plan, DeployError, MatchPolicy, StageReport};
use crate::ham::CycleReport;
use crate::model::{ElementType, Elements, ProcessorType, ValidatedModule};

use super::config::ServerConfig;
use super::serve::{build_registry, ServeError};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Setup(#[from] ServeError),
    #[error("forced {policy} matching failed: {source}")]
    Matching {
        policy: ProcessorType,
        source: DeployError,
    },
    #[error("cpu and simfpga outputs differ at frame {0}")]
    OutputMismatch(usize),
}

impl BenchError {
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Setup(e) => e.exit_code(),
            BenchError::Matching { .. } | BenchError::OutputMismatch(_) => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchRow {
    pub shell_id: String,
    pub kind: String,
    pub cpu: CycleReport,
    pub simfpga: CycleReport,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchReport {
    pub module: String,
    pub frames: usize,
    pub frame_size: usize,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn cpu_total(&self) -> CycleReport {
        total(self.rows.iter().map(|r| r.cpu))
    }

    pub fn simfpga_total(&self) -> CycleReport {
        total(self.rows.iter().map(|r| r.simfpga))
    }
}

fn total(reports: impl Iterator<Item = CycleReport>) -> CycleReport {
    let mut t = CycleReport::default();
    for r in reports {
        t += r;
    }
    t
}

/// `cpu/simfpga ≈ ratio` over compute cycles.
pub fn format_speedup(cpu: u64, simfpga: u64) -> String {
    if simfpga == 0 {
        return "n/a".to_string();
    }
    format!("{cpu}/{simfpga} ≈ {:.1}", cpu as f64 / simfpga as f64)
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "module {}: {} frame(s) x {} elements",
            self.module, self.frames, self.frame_size
        )?;
        writeln!(
            f,
            "{:<16} {:<22} {:>14} {:>14} {:>16}  speedup",
            "shell", "kind", "cpu cycles", "simfpga cycles", "simfpga reconfig"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<16} {:<22} {:>14} {:>14} {:>16}  {}",
                r.shell_id,
                r.kind,
                r.cpu.compute_cycles,
                r.simfpga.compute_cycles,
                r.simfpga.reconfig_cycles,
                format_speedup(r.cpu.compute_cycles, r.simfpga.compute_cycles)
            )?;
        }
        let (c, s) = (self.cpu_total(), self.simfpga_total());
        write!(
            f,
            "{:<16} {:<22} {:>14} {:>14} {:>16}  {}",
            "total",
            "",
            c.compute_cycles,
            s.compute_cycles,
            s.reconfig_cycles,
            format_speedup(c.compute_cycles, s.compute_cycles)
        )
    }
}

/// Deterministic input frame `index` of `len` elements.
pub fn synthetic_frame(element: ElementType, index: usize, len: usize) -> Elements {
    match element {
        ElementType::F64 => Elements::F64(
            (0..len)
                .map(|i| ((i * 37 + index * 11) % 101) as f64 / 10.0 - 5.0)
                .collect(),
        ),
        ElementType::I32 => Elements::I32(
            (0..len)
                .map(|i| ((i * 7919 + index * 13) % 2_000_001) as i32 - 1_000_000)
                .collect(),
        ),
        ElementType::Bytes => Elements::Bytes((0..len).map(|i| ((i * 31 + index) % 251) as u8).collect()),
    }
}

struct Run {
    stages: Vec<StageReport>,
    outputs: Vec<Elements>,
}

fn run_forced(
    config: &ServerConfig,
    module: &std::sync::Arc<ValidatedModule>,
    processor: ProcessorType,
    frames: usize,
    frame_size: usize,
) -> Result<Run, BenchError> {
    let registry = build_registry(config)?;
    let matching = |source| BenchError::Matching {
        policy: processor,
        source,
    };
    let plan = plan(module.clone(), &registry.snapshot(), &MatchPolicy::only(processor)).map_err(matching)?;
    let deployment = std::sync::Arc::new(deploy(plan, &registry).map_err(matching)?);
    deployment.start(None).map_err(matching)?;

    let mut stages: Vec<StageReport> = deployment.setup_reports().to_vec();
    let mut outputs = Vec::with_capacity(frames);
    for i in 0..frames {
        let input = synthetic_frame(module.input_element(), i, frame_size);
        let (out, reports) = deployment.process_frame_traced(&input).map_err(matching)?;
        for (acc, r) in stages.iter_mut().zip(reports) {
            acc.report += r.report;
        }
        outputs.push(out);
    }
    deployment.stop().map_err(matching)?;
    Ok(Run { stages, outputs })
}

/// Runs the module's chain under forced `[cpu]` and forced `[simfpga]`
/// matching and tabulates the cycle counts per processing shell.
pub fn run_bench(
    config: &ServerConfig,
    module: ValidatedModule,
    frames: usize,
    frame_size: usize,
) -> Result<BenchReport, BenchError> {
    let module = std::sync::Arc::new(module);
    let cpu = run_forced(config, &module, ProcessorType::Cpu, frames, frame_size)?;
    let fpga = run_forced(config, &module, ProcessorType::SimFpga, frames, frame_size)?;
    if let Some(i) = cpu.outputs.iter().zip(&fpga.outputs).position(|(a, b)| a != b) {
        return Err(BenchError::OutputMismatch(i));
    }
    let rows = cpu
        .stages
        .into_iter()
        .zip(fpga.stages)
        .map(|(c, s)| BenchRow {
            kind: module
                .shells()
                .iter()
                .find(|r| r.shell.id == c.shell_id)
                .map(|r| r.shell.kind.clone())
                .unwrap_or_default(),
            shell_id: c.shell_id,
            cpu: c.report,
            simfpga: s.report,
        })
        .collect();
    Ok(BenchReport {
        module: module.name().to_string(),
        frames,
        frame_size,
        rows,
    })
}
