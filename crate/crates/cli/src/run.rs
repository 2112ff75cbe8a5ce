//! Executes a [`RunManifest`]: optimizes, optionally simulates, and writes
//! `results.csv`, `plans.json`, `simulation.csv` and the figures into the
//! output directory.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use drmech_core::{
    binomial_z_scores, dictatorial_bound, optimize_mechanisms, sample_population, simulate_plan,
    sweep_flexibility_with, Correlation, OptimizationResult, Scenario, SweepPoint,
};
use serde_json::json;

use crate::figures::{components_svg, savings_svg};
use crate::manifest::{Entry, RunManifest};
use crate::results::{ResultsWriter, Row};
use crate::scenario_file::load_scenario;

pub const SIMULATION_COLUMNS: [&str; 8] = [
    "mechanism",
    "mu",
    "seed",
    "users",
    "analytic_total_cost",
    "realized_total_cost",
    "relative_error",
    "max_abs_z",
];

struct Outputs {
    results: ResultsWriter,
    simulation: Option<csv::Writer<fs::File>>,
    plans: Vec<serde_json::Value>,
    rows: Vec<Row>,
}

/// Runs the manifest and returns the rows written to `results.csv`, in the
/// order they were finished. On error everything finished so far stays on disk.
pub fn run(manifest: &RunManifest) -> Result<Vec<Row>> {
    manifest.validate()?;
    let scenario = load_scenario(&manifest.scenario)?;
    let mut options = manifest.options.clone();
    if let Some(eps) = manifest.final_smoothing {
        options.smoothing.end = eps / scenario.flat_rate();
        options.smoothing.start = options.smoothing.start.max(options.smoothing.end);
    }
    fs::create_dir_all(&manifest.out).with_context(|| format!("cannot create {}", manifest.out.display()))?;

    let mut outputs = Outputs {
        results: ResultsWriter::create(&manifest.out.join("results.csv"))?,
        simulation: match manifest.users {
            Some(_) => {
                let path = manifest.out.join("simulation.csv");
                let mut w =
                    csv::Writer::from_path(&path).with_context(|| format!("cannot create {}", path.display()))?;
                w.write_record(SIMULATION_COLUMNS)?;
                w.flush()?;
                Some(w)
            }
            None => None,
        },
        plans: Vec::new(),
        rows: Vec::new(),
    };
    let mechanisms = manifest.mechanisms();

    match &manifest.mu {
        Some(mus) => sweep_flexibility_with(&scenario, &mechanisms, mus, &options, |_, point: &SweepPoint| {
            let at_mu = scenario.with_mu(point.mu)?;
            record(manifest, &at_mu, Some(point.mu), &point.results, &mut outputs)
        })?,
        None => {
            let results = optimize_mechanisms(&scenario, &mechanisms, &options, &[])?;
            record(
                manifest,
                &scenario,
                scenario.discomfort().common_mu(),
                &results,
                &mut outputs,
            )?;
        }
    }

    write_figures(&manifest.out, &outputs.rows)?;
    Ok(outputs.rows)
}

fn record(
    manifest: &RunManifest,
    scenario: &Scenario,
    mu: Option<f64>,
    results: &[OptimizationResult],
    outputs: &mut Outputs,
) -> Result<()> {
    let dictatorial = dictatorial_bound(scenario);
    for entry in &manifest.entries {
        let row = match entry {
            Entry::Dictatorial => Row {
                mechanism: entry.name().to_string(),
                mu,
                seed: manifest.seed(),
                starts: 0,
                production_cost: dictatorial.cost,
                discounts_paid: 0.0,
                wasted_discounts: 0.0,
                total_cost: dictatorial.cost,
                savings_fraction: dictatorial.saving_fraction,
                dictatorial_savings_fraction: dictatorial.saving_fraction,
                wall_time_s: 0.0,
            },
            Entry::Mechanism(m) => {
                let r = results
                    .iter()
                    .find(|r| r.mechanism == *m)
                    .context("optimizer returned no result for a requested mechanism")?;
                let b = &r.best_breakdown;
                Row {
                    mechanism: entry.name().to_string(),
                    mu,
                    seed: r.seed,
                    starts: r.starts,
                    production_cost: b.production,
                    discounts_paid: b.discounts_paid,
                    wasted_discounts: b.wasted_discounts,
                    total_cost: b.total,
                    savings_fraction: b.savings_fraction,
                    dictatorial_savings_fraction: dictatorial.saving_fraction,
                    wall_time_s: r.wall_time,
                }
            }
        };
        outputs.results.write(&row)?;
        outputs.rows.push(row);
    }

    outputs.plans.push(json!({
        "mu": mu,
        "dictatorial": { "allocation_mwh": dictatorial.allocation, "cost": dictatorial.cost },
        "results": results.iter().map(|r| json!({
            "plan": r.best_plan,
            "breakdown": r.best_breakdown,
            "starts": r.starts,
            "seed": r.seed,
        })).collect::<Vec<_>>(),
    }));
    let path = manifest.out.join("plans.json");
    fs::write(&path, serde_json::to_string_pretty(&outputs.plans)?)
        .with_context(|| format!("cannot write {}", path.display()))?;

    if let (Some(users), Some(writer)) = (manifest.users, outputs.simulation.as_mut()) {
        // One population per flexibility value, replayed under every plan.
        let population = sample_population(scenario, users, manifest.seed(), Correlation::Correlated)?;
        for r in results {
            let sim = simulate_plan(scenario, &r.best_plan, &population)?;
            let analytic = r.best_breakdown.total;
            let realized = sim.breakdown.total;
            let max_z = binomial_z_scores(scenario, &r.best_plan, &sim)
                .into_iter()
                .map(f64::abs)
                .fold(0.0, f64::max);
            writer.write_record([
                r.mechanism.name().to_string(),
                mu.map(|m| m.to_string()).unwrap_or_default(),
                manifest.seed().to_string(),
                users.to_string(),
                analytic.to_string(),
                realized.to_string(),
                ((realized - analytic) / analytic).to_string(),
                max_z.to_string(),
            ])?;
        }
        writer.flush()?;
    }
    Ok(())
}

/// Writes `savings.svg` and `components.svg` for `rows` into `dir`.
pub fn write_figures(dir: &Path, rows: &[Row]) -> Result<()> {
    for (name, svg) in [
        ("savings.svg", savings_svg(rows)),
        ("components.svg", components_svg(rows)),
    ] {
        let path = dir.join(name);
        fs::write(&path, svg).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}
