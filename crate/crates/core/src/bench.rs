//! Experiment sweeps over generated instances and their CSV records.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bnb::{solve_mip, BnbOptions};
use crate::error::{BenchError, GenerateError};
use crate::formulation::{build_model, FormulationKind};
use crate::generate::{generate_instance, GenConfig};
use crate::graph::build_graph;
use crate::model::{validate_instance, Instance};

/// One solve of one instance with one formulation and fleet size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub instance_id: String,
    pub formulation: FormulationKind,
    pub n_targets: usize,
    pub n_agents: usize,
    pub window_duration: f64,
    pub status: String,
    pub objective: f64,
    pub bound: f64,
    pub gap_percent: f64,
    pub runtime_s: f64,
    pub nodes: u64,
}

#[derive(Debug, Clone)]
pub struct BenchInstance {
    pub id: String,
    pub window_duration: f64,
    pub instance: Instance,
}

/// Sweep description, usually read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub n_targets: Vec<usize>,
    pub window_durations: Vec<f64>,
    pub instances_per_cell: usize,
    pub agents: Vec<usize>,
    pub formulations: Vec<FormulationKind>,
    pub seed: u64,
    pub time_limit_s: f64,
    pub gap_tol: f64,
    pub node_limit: Option<u64>,
    pub threads: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n_targets: vec![5],
            window_durations: vec![20.0, 40.0, 60.0],
            instances_per_cell: 5,
            agents: vec![2],
            formulations: FormulationKind::ALL.to_vec(),
            seed: 0,
            time_limit_s: 300.0,
            gap_tol: 1e-4,
            node_limit: None,
            threads: 1,
        }
    }
}

impl BenchConfig {
    pub fn bnb_options(&self) -> BnbOptions {
        BnbOptions {
            rel_gap_tol: self.gap_tol,
            time_limit_s: self.time_limit_s,
            node_limit: self.node_limit,
            threads: self.threads.max(1),
            ..BnbOptions::default()
        }
    }

    /// The generated instances, seeded consecutively from `seed` in
    /// (targets, duration, index) order.
    pub fn instances(&self) -> Result<Vec<BenchInstance>, GenerateError> {
        let mut seed = self.seed;
        let mut out = Vec::new();
        for &n in &self.n_targets {
            for &d in &self.window_durations {
                for _ in 0..self.instances_per_cell {
                    let instance = generate_instance(&GenConfig::new(n, d, seed))?;
                    out.push(BenchInstance {
                        id: format!("n{n}-d{d}-s{seed}"),
                        window_duration: d,
                        instance,
                    });
                    seed += 1;
                }
            }
        }
        Ok(out)
    }
}

/// Appends rows to a CSV file, writing the header only into an empty file
/// and flushing after every row so an interrupted sweep keeps its results.
pub struct RowSink {
    writer: csv::Writer<File>,
}

impl RowSink {
    pub fn append(path: &Path) -> Result<Self, BenchError> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let empty = file.metadata()?.len() == 0;
        let writer = csv::WriterBuilder::new().has_headers(empty).from_writer(file);
        Ok(Self { writer })
    }

    pub fn push(&mut self, row: &BenchRow) -> Result<(), BenchError> {
        self.writer.serialize(row)?;
        self.writer.flush()?;
        Ok(())
    }
}

/// Solves every (instance, formulation, fleet size) cell in order. A cell
/// that cannot be solved is recorded through its status; the sweep goes on.
pub fn run_bench(
    instances: &[BenchInstance],
    formulations: &[FormulationKind],
    agent_counts: &[usize],
    opts: &BnbOptions,
    mut sink: Option<&mut RowSink>,
) -> Result<Vec<BenchRow>, BenchError> {
    let mut rows = Vec::new();
    for item in instances {
        for &m in agent_counts {
            let inst = item.instance.with_agents(m);
            for &kind in formulations {
                let row = solve_cell(item, &inst, kind, opts);
                log::info!(
                    "{} {} m={}: {} obj={} gap={}%",
                    row.instance_id,
                    kind,
                    m,
                    row.status,
                    row.objective,
                    row.gap_percent
                );
                if let Some(sink) = sink.as_deref_mut() {
                    sink.push(&row)?;
                }
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

fn solve_cell(item: &BenchInstance, inst: &Instance, kind: FormulationKind, opts: &BnbOptions) -> BenchRow {
    let mut row = BenchRow {
        instance_id: item.id.clone(),
        formulation: kind,
        n_targets: inst.n_targets(),
        n_agents: inst.n_agents,
        window_duration: item.window_duration,
        status: String::new(),
        objective: f64::INFINITY,
        bound: f64::NEG_INFINITY,
        gap_percent: f64::INFINITY,
        runtime_s: 0.0,
        nodes: 0,
    };
    if let Some(err) = validate_instance(inst).into_iter().find(|f| f.is_error()) {
        row.status = format!("invalid: {}", err.message);
        return row;
    }
    let start = Instant::now();
    let outcome = std::panic::catch_unwind(|| {
        let graph = build_graph(inst);
        solve_mip(&build_model(kind, inst, &graph), opts)
    });
    row.runtime_s = start.elapsed().as_secs_f64();
    match outcome {
        Ok(report) => {
            row.status = report.status.as_str().to_string();
            row.objective = report.incumbent_objective;
            row.bound = report.best_bound;
            row.gap_percent = report.gap_percent;
            row.runtime_s = report.runtime;
            row.nodes = report.nodes_explored;
        }
        Err(_) => row.status = "error: solver panicked".to_string(),
    }
    row
}

pub fn read_rows<R: std::io::Read>(input: R) -> Result<Vec<BenchRow>, BenchError> {
    let mut reader = csv::Reader::from_reader(input);
    let rows = reader.deserialize().collect::<Result<Vec<BenchRow>, _>>()?;
    Ok(rows)
}

/// Averages over one (formulation, targets, agents, duration) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub formulation: FormulationKind,
    pub n_targets: usize,
    pub n_agents: usize,
    pub window_duration: f64,
    pub runs: usize,
    /// Runs with a finite gap, i.e. with an incumbent.
    pub solved: usize,
    pub mean_gap_percent: f64,
    pub mean_runtime_s: f64,
}

pub fn summarize(rows: &[BenchRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, usize, usize, u64), Vec<&BenchRow>> = BTreeMap::new();
    for row in rows {
        let key = (
            row.formulation.as_str().to_string(),
            row.n_targets,
            row.n_agents,
            row.window_duration.to_bits(),
        );
        groups.entry(key).or_default().push(row);
    }
    groups
        .into_values()
        .map(|group| {
            let first = group[0];
            let gaps: Vec<f64> = group.iter().map(|r| r.gap_percent).filter(|g| g.is_finite()).collect();
            let mean = |xs: &[f64]| {
                if xs.is_empty() {
                    f64::NAN
                } else {
                    xs.iter().sum::<f64>() / xs.len() as f64
                }
            };
            let runtimes: Vec<f64> = group.iter().map(|r| r.runtime_s).collect();
            SummaryRow {
                formulation: first.formulation,
                n_targets: first.n_targets,
                n_agents: first.n_agents,
                window_duration: first.window_duration,
                runs: group.len(),
                solved: gaps.len(),
                mean_gap_percent: mean(&gaps),
                mean_runtime_s: mean(&runtimes),
            }
        })
        .collect()
}

/// Matched solves of the same instance and fleet size from two sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub instance_id: String,
    pub n_targets: usize,
    pub n_agents: usize,
    pub window_duration: f64,
    pub formulation_a: FormulationKind,
    pub formulation_b: FormulationKind,
    pub status_a: String,
    pub status_b: String,
    pub objective_a: f64,
    pub objective_b: f64,
    /// `|a - b| / max(|a|, |b|, 1e-10)`.
    pub objective_rel_diff: f64,
    pub gap_percent_a: f64,
    pub gap_percent_b: f64,
    pub runtime_s_a: f64,
    pub runtime_s_b: f64,
    pub nodes_a: u64,
    pub nodes_b: u64,
}

/// Joins on (instance, agents, duration); every matching pair becomes a row,
/// in the order of `a`.
pub fn compare(a: &[BenchRow], b: &[BenchRow]) -> Vec<ComparisonRow> {
    let key = |r: &BenchRow| (r.instance_id.clone(), r.n_agents, r.window_duration.to_bits());
    let mut index: BTreeMap<_, Vec<&BenchRow>> = BTreeMap::new();
    for row in b {
        index.entry(key(row)).or_default().push(row);
    }
    let mut out = Vec::new();
    for ra in a {
        for rb in index.get(&key(ra)).into_iter().flatten() {
            let scale = ra.objective.abs().max(rb.objective.abs()).max(1e-10);
            out.push(ComparisonRow {
                instance_id: ra.instance_id.clone(),
                n_targets: ra.n_targets,
                n_agents: ra.n_agents,
                window_duration: ra.window_duration,
                formulation_a: ra.formulation,
                formulation_b: rb.formulation,
                status_a: ra.status.clone(),
                status_b: rb.status.clone(),
                objective_a: ra.objective,
                objective_b: rb.objective,
                objective_rel_diff: if ra.objective == rb.objective {
                    0.0
                } else {
                    (ra.objective - rb.objective).abs() / scale
                },
                gap_percent_a: ra.gap_percent,
                gap_percent_b: rb.gap_percent,
                runtime_s_a: ra.runtime_s,
                runtime_s_b: rb.runtime_s,
                nodes_a: ra.nodes,
                nodes_b: rb.nodes,
            });
        }
    }
    out
}

pub fn write_csv<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<(), BenchError> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bnb::gap_percent;
    use crate::model::{Point2, SegmentSpec};
    use proptest::prelude::*;

    fn row(id: &str, kind: FormulationKind, gap: f64, runtime: f64) -> BenchRow {
        BenchRow {
            instance_id: id.to_string(),
            formulation: kind,
            n_targets: 3,
            n_agents: 1,
            window_duration: 40.0,
            status: "optimal".to_string(),
            objective: 100.0 + gap,
            bound: 100.0,
            gap_percent: gap,
            runtime_s: runtime,
            nodes: 7,
        }
    }

    fn tiny(id: &str, x: f64) -> BenchInstance {
        BenchInstance {
            id: id.to_string(),
            window_duration: 150.0,
            instance: Instance::new(
                Point2::ORIGIN,
                1,
                4.0,
                150.0,
                100.0,
                vec![vec![SegmentSpec::stationary(Point2::new(x, 0.0), 0.0, 150.0)]],
            ),
        }
    }

    #[test]
    fn sweep_cardinality() {
        let items = [tiny("a", 10.0), tiny("b", 20.0)];
        let rows = run_bench(&items, &FormulationKind::ALL, &[1], &BnbOptions::default(), None).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.status == "optimal"), "{rows:#?}");
        assert!((rows[0].objective - 20.0).abs() < 1e-6);
        assert!((rows[3].objective - 40.0).abs() < 1e-6);
    }

    #[test]
    fn summary_means() {
        let rows = [
            row("a", FormulationKind::NewMicp, 0.0, 1.0),
            row("b", FormulationKind::NewMicp, 10.0, 3.0),
        ];
        let summary = summarize(&rows);
        assert_eq!(summary.len(), 1);
        assert_eq!(summary[0].mean_gap_percent, 5.0);
        assert_eq!(summary[0].mean_runtime_s, 2.0);
        assert_eq!(summary[0].runs, 2);
    }

    #[test]
    fn sink_appends_under_one_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.csv");
        let rows = [
            row("a", FormulationKind::Baseline, 1.0, 0.5),
            row("b", FormulationKind::NewMicp, 2.0, 0.25),
        ];
        for r in &rows {
            // a fresh sink per row, as after a restart
            RowSink::append(&path).unwrap().push(r).unwrap();
        }
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.matches("instance_id").count(), 1);
        assert!(text.starts_with(
            "instance_id,formulation,n_targets,n_agents,window_duration,status,objective,bound,gap_percent,runtime_s,nodes\n"
        ));
        assert_eq!(read_rows(text.as_bytes()).unwrap(), rows);
    }

    #[test]
    fn compare_joins_matching_cells() {
        let a = [row("x", FormulationKind::Baseline, 0.0, 1.0), row("y", FormulationKind::Baseline, 0.0, 1.0)];
        let mut b = vec![row("x", FormulationKind::NewMicp, 0.0, 2.0)];
        b[0].objective = 100.005;
        let joined = compare(&a, &b);
        assert_eq!(joined.len(), 1);
        assert!((joined[0].objective_rel_diff - 0.005 / 100.005).abs() < 1e-12);
        assert_eq!(joined[0].runtime_s_b, 2.0);
    }

    #[test]
    fn config_defaults_and_instances() {
        let cfg = BenchConfig {
            n_targets: vec![2],
            window_durations: vec![40.0],
            instances_per_cell: 2,
            seed: 5,
            ..BenchConfig::default()
        };
        let items = cfg.instances().unwrap();
        let ids: Vec<&str> = items.iter().map(|i| i.id.as_str()).collect();
        assert_eq!(ids, ["n2-d40-s5", "n2-d40-s6"]);
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![-1e6..1e6f64, Just(f64::INFINITY), Just(f64::NEG_INFINITY)]
    }

    proptest! {
        #[test]
        fn csv_round_trip(
            id in "[a-z0-9,\" -]{1,12}",
            status in "[a-z: ]{1,10}",
            objective in finite(),
            bound in finite(),
            duration in 0.0..200.0f64,
            runtime in 0.0..1e4f64,
            nodes in 0u64..1_000_000,
            n in 1usize..20,
            m in 1usize..6,
            micp in any::<bool>(),
        ) {
            let r = BenchRow {
                instance_id: id,
                formulation: if micp { FormulationKind::NewMicp } else { FormulationKind::Baseline },
                n_targets: n,
                n_agents: m,
                window_duration: duration,
                status,
                objective,
                bound,
                gap_percent: gap_percent(objective, bound),
                runtime_s: runtime,
                nodes,
            };
            let mut buf = Vec::new();
            write_csv(&mut buf, std::slice::from_ref(&r)).unwrap();
            let back = read_rows(buf.as_slice()).unwrap();
            prop_assert_eq!(back.len(), 1);
            let b = &back[0];
            prop_assert_eq!(&b.instance_id, &r.instance_id);
            prop_assert_eq!(&b.status, &r.status);
            prop_assert_eq!(b.objective.to_bits(), r.objective.to_bits());
            prop_assert_eq!(b.bound.to_bits(), r.bound.to_bits());
            prop_assert!(b.gap_percent.to_bits() == r.gap_percent.to_bits()
                || (b.gap_percent.is_nan() && r.gap_percent.is_nan()));
            prop_assert_eq!(b.window_duration.to_bits(), r.window_duration.to_bits());
            prop_assert_eq!((b.formulation, b.n_targets, b.n_agents, b.nodes), (r.formulation, n, m, nodes));
        }
    }
}
