//! Engine certification against the exact transient solver on tiny
//! systems, one per interaction mode (plus a two-dimensional case):
//! simulated marginals must match uniformization marginals within three
//! Monte Carlo standard errors at every probe time.

use annilab_core::dynamics::{advance_through, replica_rng, InteractionMode, SimulationState};
use annilab_core::field::OccupancyField;
use annilab_core::lattice::Lattice;
use annilab_core::oracle::{GeneratorMatrix, DEFAULT_STATE_CAP};

use crate::config::ExperimentConfig;
use crate::report::{CheckLine, OracleRow, Report};
use crate::runner::run_replicas;

use super::{interaction_label, ExperimentOutput, RunError};

pub struct TinySystem {
    pub name: &'static str,
    pub lattice: Lattice,
    pub mode: InteractionMode,
    pub initial: OccupancyField,
}

/// The certification battery: every interaction mode on a ring, the
/// two-site annihilation pair with its closed-form survival law, and a
/// two-dimensional annihilation case.
pub fn oracle_battery() -> Vec<TinySystem> {
    let ring2 = Lattice::new(&[2]).expect("valid");
    let ring4 = Lattice::new(&[4]).expect("valid");
    let square = Lattice::new(&[2, 2]).expect("valid");

    let mut pair2 = OccupancyField::new(ring2.clone());
    pair2.set_site(0, 1, 0);
    pair2.set_site(1, 0, 1);

    let mut pair4 = OccupancyField::new(ring4.clone());
    pair4.set_site(0, 1, 0);
    pair4.set_site(2, 0, 1);

    let mut full4 = OccupancyField::new(ring4.clone());
    for site in 0..4 {
        full4.set_site(site, 0, 1);
    }

    let mut free4 = OccupancyField::new(ring4.clone());
    free4.set_site(0, 0, 1);
    free4.set_site(1, 0, 1);

    let mut pair2d = OccupancyField::new(square.clone());
    pair2d.set_site(square.encode(&[0, 0]), 1, 0);
    pair2d.set_site(square.encode(&[1, 1]), 0, 1);

    vec![
        TinySystem {
            name: "two-type-pair-ring2",
            lattice: ring2,
            mode: InteractionMode::TwoTypeAnnihilate,
            initial: pair2,
        },
        TinySystem {
            name: "two-type-pair-ring4",
            lattice: ring4.clone(),
            mode: InteractionMode::TwoTypeAnnihilate,
            initial: pair4,
        },
        TinySystem {
            name: "single-annihilate-full-ring4",
            lattice: ring4.clone(),
            mode: InteractionMode::SingleTypeAnnihilate,
            initial: full4.clone(),
        },
        TinySystem {
            name: "coalesce-full-ring4",
            lattice: ring4.clone(),
            mode: InteractionMode::SingleTypeCoalesce,
            initial: full4,
        },
        TinySystem {
            name: "free-pair-ring4",
            lattice: ring4,
            mode: InteractionMode::Free,
            initial: free4,
        },
        TinySystem {
            name: "two-type-pair-square2",
            lattice: square,
            mode: InteractionMode::TwoTypeAnnihilate,
            initial: pair2d,
        },
    ]
}

pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentOutput, RunError> {
    let times = cfg.times.clone().expect("validated");
    let replicas = cfg.replicas.expect("validated");
    let mut report = Report::new(cfg);
    let mut rows: Vec<OracleRow> = Vec::new();
    let mut total_events = 0u64;

    for (sys_idx, system) in oracle_battery().into_iter().enumerate() {
        let generator = GeneratorMatrix::build(
            system.lattice.clone(),
            system.mode,
            std::slice::from_ref(&system.initial),
            DEFAULT_STATE_CAP,
        )
        .map_err(|e| RunError::analysis(system.name, e))?;
        let p0 = generator
            .point_distribution(&system.initial)
            .map_err(|e| RunError::analysis(system.name, e))?;
        let exact_dists: Vec<Vec<f64>> = times
            .iter()
            .map(|&t| generator.transient_distribution(&p0, t))
            .collect::<Result<_, _>>()
            .map_err(|e| RunError::analysis(system.name, e))?;

        let sites = system.lattice.num_sites();
        let track_a = !system.mode.is_single_type() && system.mode != InteractionMode::Free
            || system.initial.totals().0 > 0;
        // Replica streams are disjoint per system through the seed offset.
        let system_seed = cfg.seed.wrapping_add(1 + sys_idx as u64);
        let samples = run_replicas(replicas, system_seed, |r| {
            let mut state = SimulationState::from_field(
                system.initial.clone(),
                system.mode,
                replica_rng(system_seed, r),
            )
            .map_err(|e| e.to_string())?;
            let mut counts: Vec<u32> = Vec::with_capacity(times.len() * sites * 2);
            let mut survived: Vec<bool> = Vec::with_capacity(times.len());
            advance_through(&mut state, &times, |_, s| {
                for site in 0..sites {
                    let (a, b) = s.field().counts_at(site);
                    counts.push(a);
                    counts.push(b);
                }
                survived.push(s.particle_count() > 0);
            })
            .map_err(|e| e.to_string())?;
            Ok::<_, String>((counts, survived, state.events()))
        })?;

        // Accumulate per-(time, site, type) moments in replica order.
        let cells = times.len() * sites * 2;
        let mut sum = vec![0.0f64; cells];
        let mut sumsq = vec![0.0f64; cells];
        let mut survival_counts = vec![0u64; times.len()];
        for (counts, survived, events) in &samples {
            total_events += events;
            for (i, &c) in counts.iter().enumerate() {
                let v = f64::from(c);
                sum[i] += v;
                sumsq[i] += v * v;
            }
            for (k, &alive) in survived.iter().enumerate() {
                if alive {
                    survival_counts[k] += 1;
                }
            }
        }
        let n = replicas as f64;
        let mut max_abs_z = 0.0f64;
        for (ti, &t) in times.iter().enumerate() {
            for site in 0..sites {
                for (type_idx, type_char) in [(0usize, 'a'), (1usize, 'b')] {
                    if type_idx == 0 && !track_a {
                        continue;
                    }
                    let cell = (ti * sites + site) * 2 + type_idx;
                    let mean = sum[cell] / n;
                    let var = (sumsq[cell] - n * mean * mean).max(0.0) / (n - 1.0);
                    let se = (var / n).sqrt();
                    let exact = generator.marginal(&exact_dists[ti], site, type_idx == 0);
                    let z = if se > 0.0 {
                        (mean - exact) / se
                    } else if (mean - exact).abs() < 1e-12 {
                        0.0
                    } else {
                        f64::INFINITY
                    };
                    max_abs_z = max_abs_z.max(z.abs());
                    rows.push(OracleRow {
                        system: system.name.to_string(),
                        mode: interaction_label(system.mode).to_string(),
                        time: t,
                        site,
                        particle_type: type_char,
                        exact,
                        simulated: mean,
                        se,
                        z,
                    });
                }
            }
        }
        report.push_check(CheckLine::new(
            format!("oracle-z-{}", system.name),
            "largest |z| of simulated vs exact marginals",
            max_abs_z,
            0.0,
            "|z| <= 3",
            max_abs_z <= 3.0,
        ));

        // Closed-form survival gate on the two-site pair: P(alive at t) =
        // e^{-2t}, checked at the probe time nearest 1/2.
        if system.name == "two-type-pair-ring2" {
            if let Some((ti, &t)) = times
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    (*a - 0.5).abs().partial_cmp(&(*b - 0.5).abs()).unwrap()
                })
            {
                let p_hat = survival_counts[ti] as f64 / n;
                let p = (-2.0 * t).exp();
                let se = (p * (1.0 - p) / n).sqrt();
                report.push_check(CheckLine::new(
                    "pair-survival-law",
                    format!("two-site pair survival at t={t} vs exp(-2t)"),
                    p_hat,
                    p,
                    "within 3 binomial SE",
                    (p_hat - p).abs() <= 3.0 * se,
                ));
            }
        }
    }

    report.note(format!(
        "{} marginals certified across {} systems at {} probe times",
        rows.len(),
        oracle_battery().len(),
        times.len()
    ));
    report.oracle_table = Some(rows);
    let mut output = ExperimentOutput::new(report);
    output.total_events = total_events;
    Ok(output)
}
