use std::io::Write;
use std::path::Path;
use std::time::Instant;

use cyclepgo::basis::{
    brute_force_mcb_weight, density, gf2_rank, icb_replay, icb_update, mcb, BasisError, CycleBasis, TeamBasis,
};
use cyclepgo::graph::{load_g2o, merge_agents, PoseGraph};
use cyclepgo::sim::{
    bench_replay, evaluate, gen_manhattan, mean_std, random_graph, sinewave_trial, write_csv, BasisKind, BenchOptions,
    BenchRecord, LowDofError, SimError, SinewaveConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::CliError;

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Solver(_) | SimError::Lie(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<BasisError> for CliError {
    fn from(e: BasisError) -> Self {
        CliError::Data(e.to_string())
    }
}

/// Writes the whole output at once; a file target is replaced atomically so
/// a failed run never leaves a partial file behind.
fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Data(e.to_string());
    match out {
        Some(path) => {
            let mut tmp = path.as_os_str().to_owned();
            tmp.push(".partial");
            std::fs::write(&tmp, bytes).map_err(io)?;
            std::fs::rename(&tmp, path).map_err(io)
        }
        None => std::io::stdout().write_all(bytes).map_err(io),
    }
}

fn pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(pool.install(f))
}

pub fn bench(cfg: &RunConfig) -> Result<(), CliError> {
    let dataset = cfg.dataset.as_deref().ok_or_else(|| CliError::Usage("bench needs --dataset".into()))?;
    let opts =
        BenchOptions { seed: cfg.seed, timing: cfg.timing, solver: cfg.solver.clone(), ..BenchOptions::default() };
    let rows = bench_replay(dataset, cfg.basis.unwrap_or(BasisKind::Icb), &opts)?;
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf)?;
    emit(cfg.out.as_deref(), &buf)
}

fn build_basis(graph: &PoseGraph, kind: BasisKind) -> Result<(CycleBasis, f64), SimError> {
    let t = Instant::now();
    let basis = match kind {
        BasisKind::Mcb => mcb(graph),
        BasisKind::Icb => icb_replay(graph)?,
        BasisKind::MaIcb => TeamBasis::build(graph)?,
    };
    Ok((basis, t.elapsed().as_secs_f64() * 1e3))
}

fn aggregate(rows: &[&BenchRecord], label: &str, seed: u64) -> [BenchRecord; 2] {
    let col = |f: &dyn Fn(&BenchRecord) -> Option<f64>| -> Option<(f64, f64)> {
        let v: Option<Vec<f64>> = rows.iter().map(|r| f(r)).collect();
        v.map(|v| mean_std(&v))
    };
    let density = mean_std(&rows.iter().map(|r| r.density).collect::<Vec<_>>());
    let cols = [
        col(&|r| r.update_ms),
        col(&|r| r.optimize_ms),
        col(&|r| r.rot_rmse_deg),
        col(&|r| r.trans_rmse_m),
        col(&|r| r.ate_m),
    ];
    let row = |name: String, pick: fn((f64, f64)) -> f64| BenchRecord {
        dataset: name,
        edges: rows[0].edges,
        basis: rows[0].basis.clone(),
        density: pick(density),
        update_ms: cols[0].map(pick),
        optimize_ms: cols[1].map(pick),
        rot_rmse_deg: cols[2].map(pick),
        trans_rmse_m: cols[3].map(pick),
        ate_m: cols[4].map(pick),
        seed,
    };
    [row(format!("{label}-mean"), |p| p.0), row(format!("{label}-std"), |p| p.1)]
}

pub fn sim_ma(cfg: &RunConfig) -> Result<(), CliError> {
    let trials = cfg.trials.unwrap_or(10);
    let kinds = cfg.basis.map_or_else(|| vec![BasisKind::Mcb, BasisKind::MaIcb], |k| vec![k]);
    let per_trial: Vec<Result<Vec<BenchRecord>, SimError>> = pool(cfg.jobs, || {
        (0..trials as u64)
            .into_par_iter()
            .map(|i| {
                let seed = cfg.seed + i;
                let sim = gen_manhattan(&cyclepgo::sim::ManhattanConfig { seed, ..cfg.manhattan.clone() });
                let refs: Vec<&PoseGraph> = sim.graphs.iter().collect();
                let merged = merge_agents(&refs, &sim.inter)?;
                let g = &merged.graph;
                kinds
                    .iter()
                    .map(|&k| {
                        let (basis, ms) = build_basis(g, k)?;
                        let m = evaluate(g, &sim.truth, &basis, ms, &cfg.solver)?;
                        Ok(BenchRecord::from_trial("manhattan", g.edge_count(), k, &m, seed, cfg.timing))
                    })
                    .collect()
            })
            .collect()
    })?;
    let rows: Vec<BenchRecord> = per_trial.into_iter().collect::<Result<Vec<_>, _>>()?.into_iter().flatten().collect();
    let mut all = rows.clone();
    for k in &kinds {
        let mine: Vec<&BenchRecord> = rows.iter().filter(|r| r.basis == k.name()).collect();
        if !mine.is_empty() {
            all.extend(aggregate(&mine, "manhattan", cfg.seed));
        }
    }
    let mut buf = Vec::new();
    write_csv(&all, &mut buf)?;
    emit(cfg.out.as_deref(), &buf)
}

#[derive(Serialize)]
struct LowDofRow {
    trial: String,
    seed: Option<u64>,
    time: &'static str,
    x_m: f64,
    y_m: f64,
    theta_deg: f64,
    closures: Option<usize>,
    converged: Option<bool>,
}

pub fn sim_lowdof(cfg: &RunConfig) -> Result<(), CliError> {
    let trials = cfg.trials.unwrap_or(30);
    let results: Vec<Result<LowDofError, SimError>> = pool(cfg.jobs, || {
        (0..trials as u64)
            .into_par_iter()
            .map(|i| sinewave_trial(&SinewaveConfig { seed: cfg.seed + i, ..cfg.sinewave.clone() }, &cfg.solver))
            .collect()
    })?;
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Data(e.to_string());
    for (i, r) in results.iter().enumerate() {
        for (time, e) in [("start", &r.start), ("end", &r.end)] {
            w.serialize(LowDofRow {
                trial: i.to_string(),
                seed: Some(cfg.seed + i as u64),
                time,
                x_m: e[0],
                y_m: e[1],
                theta_deg: e[2],
                closures: Some(r.closures),
                converged: Some(r.converged),
            })
            .map_err(io)?;
        }
    }
    for (label, pick) in [("mean", 0usize), ("std", 1)] {
        for (time, end) in [("start", false), ("end", true)] {
            let stat = |k: usize| {
                let v: Vec<f64> = results.iter().map(|r| if end { r.end[k] } else { r.start[k] }).collect();
                let (m, s) = mean_std(&v);
                [m, s][pick]
            };
            w.serialize(LowDofRow {
                trial: label.into(),
                seed: None,
                time,
                x_m: stat(0),
                y_m: stat(1),
                theta_deg: stat(2),
                closures: None,
                converged: None,
            })
            .map_err(io)?;
        }
    }
    let buf = w.into_inner().map_err(|e| CliError::Data(e.to_string()))?;
    emit(cfg.out.as_deref(), &buf)
}

fn violation(msg: String) -> CliError {
    CliError::Data(format!("invariant violated: {msg}"))
}

/// Replays `graph` edge by edge and checks |ℬ| = ν and full GF(2) rank after
/// every insertion.
fn check_incremental(graph: &PoseGraph, kind: BasisKind) -> Result<CycleBasis, CliError> {
    let mut partial = PoseGraph::new();
    for v in graph.vertices() {
        partial.push_vertex(v.agent, v.external, v.initial);
    }
    let mut basis = CycleBasis::new();
    let mut team = TeamBasis::new();
    for e in graph.edges() {
        let id = partial.add_edge(e.clone()).map_err(|e| CliError::Data(e.to_string()))?;
        let current = match kind {
            BasisKind::MaIcb => {
                team.insert(&partial, id)?;
                team.basis()
            }
            _ => {
                icb_update(&mut basis, &partial, id)?;
                &basis
            }
        };
        let nu = partial.cycle_rank();
        if current.len() != nu || gf2_rank(current) != nu {
            return Err(violation(format!(
                "{kind} after edge {id}: {} cycles of rank {}, expected {nu}",
                current.len(),
                gf2_rank(current)
            )));
        }
    }
    let done = if kind == BasisKind::MaIcb { team.into_basis() } else { basis };
    done.verify(graph).map_err(|e| violation(format!("{kind}: {e}")))?;
    Ok(done)
}

pub fn verify(cfg: &RunConfig) -> Result<(), CliError> {
    let mut report = String::new();
    match &cfg.dataset {
        Some(path) => {
            let graph = load_g2o(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            report += &format!(
                "graph: {} vertices, {} edges, cycle rank {}\n",
                graph.vertex_count(),
                graph.edge_count(),
                graph.cycle_rank()
            );
            if let Some(file) = &cfg.basis_file {
                let text = std::fs::File::open(file).map_err(|e| CliError::Data(e.to_string()))?;
                let basis = CycleBasis::read_text(std::io::BufReader::new(text))?;
                basis.verify(&graph).map_err(|e| violation(format!("{}: {e}", file.display())))?;
                report += &format!("ok {}: {} independent cycles\n", file.display(), basis.len());
            }
            let kinds = cfg.basis.map_or_else(|| vec![BasisKind::Mcb, BasisKind::Icb, BasisKind::MaIcb], |k| vec![k]);
            let mut densities = Vec::new();
            for k in kinds {
                let basis = match k {
                    BasisKind::Mcb => {
                        let b = mcb(&graph);
                        b.verify(&graph).map_err(|e| violation(format!("mcb: {e}")))?;
                        b
                    }
                    _ => check_incremental(&graph, k)?,
                };
                let rho = if graph.edge_count() == 0 { 0.0 } else { density(&basis, &graph)? };
                report += &format!("ok {k}: {} cycles, density {rho:.4}\n", basis.len());
                densities.push((k, rho));
            }
            if let Some(&(_, m)) = densities.iter().find(|(k, _)| *k == BasisKind::Mcb) {
                for &(k, rho) in &densities {
                    if rho + 1e-12 < m {
                        return Err(violation(format!("{k} density {rho} below minimum {m}")));
                    }
                }
            }
        }
        None => {
            if cfg.basis_file.is_some() {
                return Err(CliError::Usage("--basis-file needs --dataset".into()));
            }
            let trials = cfg.trials.unwrap_or(200);
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            for i in 0..trials {
                let (n, m) = (rng.gen_range(2..=8), rng.gen_range(0..=12));
                let g = random_graph(n, m, rng.gen());
                let b = mcb(&g);
                b.verify(&g).map_err(|e| violation(format!("random graph {i}: {e}")))?;
                icb_replay(&g)?.verify(&g).map_err(|e| violation(format!("random graph {i}, icb: {e}")))?;
                let oracle = brute_force_mcb_weight(&g).expect("small graph");
                if b.total_weight() != oracle {
                    return Err(violation(format!(
                        "random graph {i}: mcb weight {} but brute force {oracle}",
                        b.total_weight()
                    )));
                }
            }
            report += &format!("ok: {trials} random graphs match the brute-force minimum weight\n");
        }
    }
    emit(cfg.out.as_deref(), report.as_bytes())
}
