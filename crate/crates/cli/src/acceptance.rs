//! The acceptance suite: twelve criteria with pinned configurations,
//! targets, and tolerances, each reported as machine-readable verdict
//! lines. The `fast` selector skips the two t=4096 runs.

use std::path::Path;

use annilab_core::dynamics::{replica_rng, SimulationState};
use annilab_core::lattice::{Lattice, Rectangle};
use annilab_core::observables::conditional_mean_field;
use annilab_core::stats::mean_se;
use serde::Serialize;

use crate::config::{ExperimentConfig, ExperimentKind, InitName, ModeName};
use crate::experiments::{run_experiment, ExperimentOutput, RunError};
use crate::report::{write_artifacts, CheckLine};
use crate::runner::run_replicas;

/// RNG stream reserved for shared initial conditions.
const SHARED_INIT_STREAM: u64 = 1 << 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    DensityAmplitude1d,
    DensityExponent2d,
    SingleTypeDecay,
    ExactOracle,
    MartingaleIdentity,
    KernelSuite,
    GaussianSuite,
    MacroBlockLaw,
    SamplePathAgreement,
    SegregationTrend,
    MicroMixture,
    DeterminismAudit,
}

impl Criterion {
    pub const ALL: [Criterion; 12] = [
        Criterion::DensityAmplitude1d,
        Criterion::DensityExponent2d,
        Criterion::SingleTypeDecay,
        Criterion::ExactOracle,
        Criterion::MartingaleIdentity,
        Criterion::KernelSuite,
        Criterion::GaussianSuite,
        Criterion::MacroBlockLaw,
        Criterion::SamplePathAgreement,
        Criterion::SegregationTrend,
        Criterion::MicroMixture,
        Criterion::DeterminismAudit,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&c| c == self).expect("listed") + 1
    }

    pub fn name(self) -> &'static str {
        match self {
            Criterion::DensityAmplitude1d => "density-amplitude-1d",
            Criterion::DensityExponent2d => "density-exponent-2d",
            Criterion::SingleTypeDecay => "single-type-decay",
            Criterion::ExactOracle => "exact-oracle",
            Criterion::MartingaleIdentity => "martingale-identity",
            Criterion::KernelSuite => "kernel-suite",
            Criterion::GaussianSuite => "gaussian-suite",
            Criterion::MacroBlockLaw => "macro-block-law",
            Criterion::SamplePathAgreement => "sample-path-agreement",
            Criterion::SegregationTrend => "segregation-trend",
            Criterion::MicroMixture => "micro-mixture",
            Criterion::DeterminismAudit => "determinism-audit",
        }
    }

    /// Criteria excluded from the fast selector (the t=4096 runs).
    pub fn is_slow(self) -> bool {
        matches!(
            self,
            Criterion::DensityAmplitude1d | Criterion::MicroMixture
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selector {
    All,
    Fast,
}

impl std::str::FromStr for Selector {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(Selector::All),
            "fast" => Ok(Selector::Fast),
            other => Err(format!("selector must be `all` or `fast`, got `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    #[serde(skip)]
    pub criterion: Criterion,
    pub index: usize,
    pub name: String,
    pub pass: bool,
    pub checks: Vec<CheckLine>,
    pub notes: Vec<String>,
}

impl CriterionResult {
    fn from_output(criterion: Criterion, output: &ExperimentOutput) -> Self {
        Self {
            criterion,
            index: criterion.index(),
            name: criterion.name().to_string(),
            pass: output.report.all_pass(),
            checks: output.report.checks.clone(),
            notes: output.report.notes.clone(),
        }
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "criterion {:>2} {:<24} {}\n",
            self.index,
            self.name,
            if self.pass { "PASS" } else { "FAIL" }
        );
        for c in &self.checks {
            out.push_str(&format!(
                "    [{}] {}: measured {:.6} target {:.6} ({}){}\n",
                if c.pass { "pass" } else { "FAIL" },
                c.name,
                c.measured,
                c.target,
                c.tolerance,
                if c.calibrated { " [calibrated]" } else { "" },
            ));
        }
        out
    }
}

#[derive(Debug, Serialize)]
pub struct SuiteReport {
    pub selector: String,
    pub criteria: Vec<CriterionResult>,
    pub pass: bool,
}

fn write_output(
    out_base: Option<&Path>,
    criterion: Criterion,
    label: &str,
    cfg: &ExperimentConfig,
    output: &ExperimentOutput,
) -> Result<(), RunError> {
    if let Some(base) = out_base {
        let dir = base.join(format!(
            "criterion-{:02}-{}",
            criterion.index(),
            criterion.name()
        ));
        let dir = if label.is_empty() {
            dir
        } else {
            dir.join(label)
        };
        let manifest = output.manifest(cfg);
        let series: Vec<_> = output.series.iter().collect();
        write_artifacts(&dir, &output.report, &manifest, &series)
            .map_err(|e| RunError::analysis("artifacts", e))?;
    }
    Ok(())
}

fn run_config(
    criterion: Criterion,
    label: &str,
    cfg: &ExperimentConfig,
    out_base: Option<&Path>,
) -> Result<ExperimentOutput, RunError> {
    let output = run_experiment(cfg)?;
    write_output(out_base, criterion, label, cfg, &output)?;
    Ok(output)
}

/// Runs one criterion with its pinned configuration.
pub fn run_criterion(
    criterion: Criterion,
    out_base: Option<&Path>,
) -> Result<CriterionResult, RunError> {
    match criterion {
        Criterion::DensityAmplitude1d => {
            let cfg = ExperimentConfig::default_for(ExperimentKind::DensityScan);
            let output = run_config(criterion, "", &cfg, out_base)?;
            Ok(CriterionResult::from_output(criterion, &output))
        }
        Criterion::DensityExponent2d => {
            let mut cfg = ExperimentConfig::default_for(ExperimentKind::DensityScan);
            cfg.dim = Some(2);
            cfg.sides = Some(vec![512, 512]);
            cfg.times = Some(vec![64.0, 128.0, 256.0, 512.0, 1024.0]);
            cfg.replicas = Some(20);
            cfg.seed = 9002;
            let output = run_config(criterion, "", &cfg, out_base)?;
            Ok(CriterionResult::from_output(criterion, &output))
        }
        Criterion::SingleTypeDecay => {
            let mut coalesce = ExperimentConfig::default_for(ExperimentKind::DensityScan);
            coalesce.mode = Some(ModeName::SingleTypeCoalesce);
            coalesce.init = Some(InitName::Full);
            coalesce.lambda = None;
            coalesce.times = Some(vec![256.0, 1024.0]);
            coalesce.replicas = Some(20);
            coalesce.seed = 9003;
            let coalesce_out = run_config(criterion, "coalesce", &coalesce, out_base)?;

            let mut annihilate = coalesce.clone();
            annihilate.mode = Some(ModeName::SingleTypeAnnihilate);
            annihilate.seed = 9004;
            let annihilate_out = run_config(criterion, "annihilate", &annihilate, out_base)?;

            let mut result = CriterionResult::from_output(criterion, &coalesce_out);
            let rho_coalesce = last_mean(&coalesce_out)?;
            let rho_annihilate = last_mean(&annihilate_out)?;
            let ratio = rho_annihilate / rho_coalesce;
            result.checks.push(CheckLine::new(
                "annihilate-coalesce-ratio",
                "single-type annihilating over coalescing density at t=1024",
                ratio,
                0.5,
                "in [0.45, 0.55]",
                (0.45..=0.55).contains(&ratio),
            ));
            result.pass = result.checks.iter().all(|c| c.pass);
            Ok(result)
        }
        Criterion::ExactOracle => {
            let cfg = ExperimentConfig::default_for(ExperimentKind::OracleCheck);
            let output = run_config(criterion, "", &cfg, out_base)?;
            Ok(CriterionResult::from_output(criterion, &output))
        }
        Criterion::MartingaleIdentity => run_martingale(criterion),
        Criterion::KernelSuite => {
            let cfg = ExperimentConfig::default_for(ExperimentKind::KernelScan);
            let output = run_config(criterion, "", &cfg, out_base)?;
            Ok(CriterionResult::from_output(criterion, &output))
        }
        Criterion::GaussianSuite => {
            let cfg = ExperimentConfig::default_for(ExperimentKind::GaussianCheck);
            let output = run_config(criterion, "", &cfg, out_base)?;
            Ok(CriterionResult::from_output(criterion, &output))
        }
        Criterion::MacroBlockLaw => {
            let cfg = ExperimentConfig::default_for(ExperimentKind::Theorem1);
            let output = run_config(criterion, "", &cfg, out_base)?;
            Ok(CriterionResult::from_output(criterion, &output))
        }
        Criterion::SamplePathAgreement => {
            let cfg = ExperimentConfig::default_for(ExperimentKind::Theorem3);
            let output = run_config(criterion, "", &cfg, out_base)?;
            Ok(CriterionResult::from_output(criterion, &output))
        }
        Criterion::SegregationTrend => {
            let cfg = ExperimentConfig::default_for(ExperimentKind::Segregation);
            let output = run_config(criterion, "", &cfg, out_base)?;
            Ok(CriterionResult::from_output(criterion, &output))
        }
        Criterion::MicroMixture => {
            let cfg = ExperimentConfig::default_for(ExperimentKind::Microscale);
            let output = run_config(criterion, "", &cfg, out_base)?;
            Ok(CriterionResult::from_output(criterion, &output))
        }
        Criterion::DeterminismAudit => run_determinism(criterion),
    }
}

fn last_mean(output: &ExperimentOutput) -> Result<f64, RunError> {
    let series = output
        .series
        .first()
        .ok_or_else(|| RunError::Analysis("missing density series".into()))?;
    let summary = series
        .summary()
        .map_err(|e| RunError::analysis("summary", e))?;
    Ok(summary.last().expect("non-empty").mean)
}

/// Criterion: in free mode the replica mean of the signed block equals the
/// walk-kernel convolution of the fixed initial field, within 3 standard
/// errors. The identity is exact, so only Monte Carlo error enters.
fn run_martingale(criterion: Criterion) -> Result<CriterionResult, RunError> {
    let seed = 9006u64;
    let lambda = 1.0;
    let horizon = 16.0;
    let replicas = 10_000usize;
    let lattice = Lattice::new(&[128]).map_err(|e| RunError::analysis("lattice", e))?;
    let rect = Rectangle::new(&[0.0], &[8.0]).map_err(|e| RunError::analysis("rect", e))?;

    // One fixed initial configuration, shared by every replica.
    let initial = SimulationState::init_poisson_two_type(
        lattice.clone(),
        lambda,
        annilab_core::dynamics::InteractionMode::Free,
        replica_rng(seed, SHARED_INIT_STREAM),
    )
    .map_err(|e| RunError::analysis("init", e))?
    .field()
    .clone();
    let smoothed = conditional_mean_field(&initial, horizon, 1e-12)
        .map_err(|e| RunError::analysis("walk convolution", e))?;
    let exact = smoothed
        .block_sum(&rect)
        .map_err(|e| RunError::analysis("block", e))?;

    let values = run_replicas(replicas, seed, |r| {
        let mut state = SimulationState::from_field(
            initial.clone(),
            annilab_core::dynamics::InteractionMode::Free,
            replica_rng(seed, r),
        )
        .map_err(|e| e.to_string())?;
        state.advance(horizon).map_err(|e| e.to_string())?;
        let counts = state.field().block_counts(&rect).map_err(|e| e.to_string())?;
        Ok::<_, String>(counts.signed as f64)
    })?;
    let (mean, se) = mean_se(&values).map_err(|e| RunError::analysis("mean", e))?;
    let z = (mean - exact) / se;
    let check = CheckLine::new(
        "free-mode-conditional-mean",
        "replica mean of the signed block vs walk-kernel prediction (free mode)",
        mean,
        exact,
        "within 3 standard errors",
        z.abs() <= 3.0,
    );
    Ok(CriterionResult {
        criterion,
        index: criterion.index(),
        name: criterion.name().to_string(),
        pass: check.pass,
        checks: vec![check],
        notes: vec![format!(
            "fixed initial field, {replicas} free replicas, |z| = {:.2}",
            z.abs()
        )],
    })
}

/// Criterion: duplicate seeded runs emit byte-identical reports, manifests,
/// and CSVs; sampler audits hold exactly; per-site exclusivity never breaks.
fn run_determinism(criterion: Criterion) -> Result<CriterionResult, RunError> {
    let mut cfg = ExperimentConfig::default_for(ExperimentKind::DensityScan);
    cfg.sides = Some(vec![2048]);
    cfg.times = Some(vec![16.0, 64.0]);
    cfg.replicas = Some(4);
    cfg.seed = 9012;

    let render = |output: &ExperimentOutput| -> Result<Vec<u8>, RunError> {
        let mut bytes = output.report.to_json().into_bytes();
        for s in &output.series {
            let mut buf = Vec::new();
            s.write_csv(&mut buf)
                .map_err(|e| RunError::analysis("csv", e))?;
            bytes.extend_from_slice(&buf);
        }
        bytes.extend_from_slice(
            serde_json::to_string(&output.manifest(&cfg))
                .expect("manifest serializes")
                .as_bytes(),
        );
        Ok(bytes)
    };
    let first = render(&run_experiment(&cfg)?)?;
    let second = render(&run_experiment(&cfg)?)?;
    let identical = first == second;

    // Audit and exclusivity sweep on a two-type run.
    let lattice = Lattice::new(&[2048]).map_err(|e| RunError::analysis("lattice", e))?;
    let mut state = SimulationState::init_poisson_two_type(
        lattice,
        1.0,
        annilab_core::dynamics::InteractionMode::TwoTypeAnnihilate,
        replica_rng(9012, SHARED_INIT_STREAM + 1),
    )
    .map_err(|e| RunError::analysis("init", e))?;
    let mut audits_ok = true;
    let mut exclusive_ok = true;
    for t in [4.0, 16.0, 64.0] {
        state.advance(t).map_err(|e| RunError::analysis("advance", e))?;
        audits_ok &= state.audit().is_ok();
        exclusive_ok &= state.field().is_exclusive();
    }

    let checks = vec![
        CheckLine::new(
            "byte-identical-reruns",
            "byte equality of duplicate seeded report/CSV/manifest emissions",
            if identical { 1.0 } else { 0.0 },
            1.0,
            "exact",
            identical,
        ),
        CheckLine::new(
            "sampler-audit",
            "Fenwick total equals recomputed field total at every probe",
            if audits_ok { 1.0 } else { 0.0 },
            1.0,
            "exact",
            audits_ok,
        ),
        CheckLine::new(
            "per-site-exclusivity",
            "min(a, b) = 0 at every site across probes",
            if exclusive_ok { 1.0 } else { 0.0 },
            1.0,
            "exact",
            exclusive_ok,
        ),
    ];
    Ok(CriterionResult {
        criterion,
        index: criterion.index(),
        name: criterion.name().to_string(),
        pass: checks.iter().all(|c| c.pass),
        checks,
        notes: vec![format!("total events in audit sweep: {}", state.events())],
    })
}

/// Runs the selected criteria; prints one verdict line per criterion when
/// `verbose`.
pub fn run_suite(
    selector: Selector,
    out_base: Option<&Path>,
    verbose: bool,
) -> Result<SuiteReport, RunError> {
    let mut criteria = Vec::new();
    for &criterion in Criterion::ALL.iter() {
        if selector == Selector::Fast && criterion.is_slow() {
            continue;
        }
        let result = run_criterion(criterion, out_base)?;
        if verbose {
            print!("{}", result.render());
        }
        criteria.push(result);
    }
    let pass = criteria.iter().all(|c| c.pass);
    let report = SuiteReport {
        selector: match selector {
            Selector::All => "all".into(),
            Selector::Fast => "fast".into(),
        },
        criteria,
        pass,
    };
    if let Some(base) = out_base {
        let path = base.join("acceptance.json");
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)
                .map_err(|e| RunError::analysis("acceptance dir", e))?;
        }
        std::fs::write(
            &path,
            serde_json::to_string_pretty(&report).expect("suite serializes"),
        )
        .map_err(|e| RunError::analysis("acceptance.json", e))?;
    }
    Ok(report)
}
