use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use coarsemp::coarsening::coarse_laplacian_check;
use coarsemp::data::save_dataset;
use coarsemp::gnn::{metrics_csv, train_coarse, train_full, TrainConfig};
use coarsemp::loukas::{default_max_merges, default_subspace_dim, loukas_coarsen, LoukasConfig};
use coarsemp::mp::{coarse_operator, k_step_bound, mp_errors, BoundCertificate, BoundConstants, CoarseOperatorKind};
use coarsemp::{data, rsa_constant, Coarsening, CoarseningDoc, Csr, Graph, LaplacianKind, RsaReport, SemiNormContext, SpectralBasis};
use rayon::prelude::*;
use serde::Serialize;

use crate::args::{CoarsenArgs, CoarseningArgs, Command, GenArgs, GraphSource, MpErrorArgs, TrainArgs};
use crate::source::{self, Generator};

/// Relative slack allowed on hard inequalities.
const HARD_RTOL: f64 = 1e-8;

#[derive(Serialize)]
struct GraphInfo {
    nodes: usize,
    edges: usize,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'static str,
    version: &'static str,
    argv: Vec<String>,
    spec: &'a Command,
    generator: Option<Generator>,
    graph: GraphInfo,
    resolved: serde_json::Value,
    warnings: Vec<String>,
    outputs: Vec<String>,
    hard_contracts_ok: bool,
    violations: Vec<String>,
}

pub struct Outcome {
    pub hard_contracts_ok: bool,
}

struct Report {
    resolved: serde_json::Value,
    warnings: Vec<String>,
    outputs: Vec<PathBuf>,
    violations: Vec<String>,
}

pub fn run(command: &Command) -> Result<Outcome> {
    let (name, out, graph, generator, report) = match command {
        Command::Gen(a) => {
            let (g, generator, report) = gen(a)?;
            ("gen", &a.out, g, Some(generator), report)
        }
        Command::Coarsen(a) => {
            let (g, generator) = load(&a.source)?;
            let report = coarsen(&g, a)?;
            ("coarsen", &a.out, g, generator, report)
        }
        Command::MpError(a) => {
            let (g, generator) = load(&a.source)?;
            let report = mp_error(&g, a)?;
            ("mp-error", &a.out, g, generator, report)
        }
        Command::Train(a) => {
            let (g, generator) = load(&a.source)?;
            let report = train(&g, a)?;
            ("train", &a.out, g, generator, report)
        }
    };
    for w in &report.warnings {
        log::warn!("{w}");
    }
    for v in &report.violations {
        eprintln!("hard contract violated: {v}");
    }
    let manifest_path = out.join("manifest.json");
    let mut outputs: Vec<String> = report.outputs.iter().map(|p| file_name(p)).collect();
    outputs.push("manifest.json".into());
    let manifest = Manifest {
        command: name,
        version: env!("CARGO_PKG_VERSION"),
        argv: std::env::args().skip(1).collect(),
        spec: command,
        generator,
        graph: GraphInfo {
            nodes: graph.num_nodes(),
            edges: graph.num_edges(),
        },
        resolved: report.resolved,
        warnings: report.warnings,
        outputs,
        hard_contracts_ok: report.violations.is_empty(),
        violations: report.violations,
    };
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(Outcome {
        hard_contracts_ok: manifest.hard_contracts_ok,
    })
}

fn file_name(p: &Path) -> String {
    p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn load(src: &GraphSource) -> Result<(Graph, Option<Generator>)> {
    source::load(src.graph.as_deref(), src.gen.as_deref(), src.pcc)
}

fn gen(a: &GenArgs) -> Result<(Graph, Generator, Report)> {
    let generator = Generator::parse(&a.gen)?;
    let g = generator.build()?;
    let outputs = save_dataset(&g, &a.out).with_context(|| format!("writing to {}", a.out.display()))?;
    let report = Report {
        resolved: serde_json::to_value(&generator)?,
        warnings: Vec::new(),
        outputs,
        violations: Vec::new(),
    };
    Ok((g, generator, report))
}

/// Everything derived from the graph that every ratio shares.
struct Setup {
    kind: LaplacianKind,
    ctx: SemiNormContext,
    basis: SpectralBasis,
    s: Csr,
    subspace_dim: usize,
    max_merges: Option<usize>,
}

fn setup(g: &Graph, a: &CoarseningArgs) -> Result<Setup> {
    let n = g.num_nodes();
    if n == 0 {
        bail!("the graph has no nodes");
    }
    for &r in &a.ratios {
        if !(0.0..1.0).contains(&r) {
            bail!("ratio {r} outside [0, 1)");
        }
    }
    let subspace_dim = a.subspace_dim.unwrap_or_else(|| default_subspace_dim(n));
    let max_merges = match a.max_merges.as_deref() {
        None => Some(default_max_merges(n)),
        Some("inf") | Some("unbounded") => None,
        Some(v) => Some(v.parse().with_context(|| format!("--ne expects a count or 'inf', got '{v}'"))?),
    };
    let ctx = SemiNormContext::new(g.laplacian(a.laplacian)?)?;
    let basis = ctx.preserved_subspace(subspace_dim)?;
    Ok(Setup {
        kind: a.laplacian,
        s: g.propagation(a.prop)?,
        ctx,
        basis,
        subspace_dim,
        max_merges,
    })
}

fn resolved(st: &Setup) -> serde_json::Value {
    serde_json::json!({
        "K": st.subspace_dim,
        "ne": st.max_merges,
        "kernel_dim": st.ctx.kernel_dim(),
        "lambda_min": st.ctx.lambda_min(),
        "lambda_max": st.ctx.lambda_max(),
    })
}

struct Coarsened {
    ratio: f64,
    coarsening: Coarsening,
    exhausted: bool,
    sweeps: usize,
}

fn read_assignment(path: &Path) -> Result<Coarsening> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(doc) = serde_json::from_str::<CoarseningDoc>(&text) {
        return Ok(Coarsening::from_doc(&doc)?);
    }
    let assignment: Vec<usize> =
        serde_json::from_str(&text).context("assignment must be a JSON array or a coarsening document")?;
    Ok(Coarsening::uniform(assignment)?)
}

fn coarsen_all(g: &Graph, a: &CoarseningArgs, st: &Setup) -> Result<Vec<Coarsened>> {
    if let Some(path) = &a.assignment {
        let c = read_assignment(path)?;
        if c.num_nodes() != g.num_nodes() {
            bail!("assignment covers {} nodes but the graph has {}", c.num_nodes(), g.num_nodes());
        }
        return Ok(vec![Coarsened {
            ratio: c.ratio(),
            coarsening: c,
            exhausted: false,
            sweeps: 0,
        }]);
    }
    a.ratios
        .par_iter()
        .map(|&ratio| {
            let cfg = LoukasConfig {
                ratio,
                max_merges_per_sweep: st.max_merges,
                force_uniform: a.uniform,
                subspace_dim: st.subspace_dim,
            };
            let out = loukas_coarsen(g, st.kind, &st.ctx, &st.basis, &cfg, &st.s)?;
            Ok(Coarsened {
                ratio,
                coarsening: out.coarsening,
                exhausted: out.exhausted,
                sweeps: out.sweeps,
            })
        })
        .collect()
}

fn exhausted_warning(c: &Coarsened) -> Option<String> {
    c.exhausted.then(|| {
        format!(
            "ratio {}: ran out of edges at {} super-nodes before reaching the target",
            c.ratio,
            c.coarsening.num_super()
        )
    })
}

#[derive(Serialize)]
struct CoarsenReport {
    ratio: f64,
    achieved_ratio: f64,
    n: usize,
    #[serde(rename = "N")]
    num_nodes: usize,
    sweeps: usize,
    exhausted: bool,
    rsa: RsaReport,
    constants: BoundConstants,
    laplacian_residual: Option<f64>,
}

fn print_dense(label: &str, m: &Csr) {
    let d = m.to_dense();
    println!("{label}:");
    for i in 0..d.nrows() {
        let row: Vec<String> = (0..d.ncols()).map(|j| format!("{:>8.4}", d[(i, j)])).collect();
        println!("  {}", row.join(" "));
    }
}

fn coarsen(g: &Graph, a: &CoarsenArgs) -> Result<Report> {
    let st = setup(g, &a.coarsening)?;
    let runs = coarsen_all(g, &a.coarsening, &st)?;
    fs::create_dir_all(&a.out)?;
    let mut outputs = Vec::new();
    let mut warnings: Vec<String> = runs.iter().filter_map(exhausted_warning).collect();
    let mut violations = Vec::new();
    let mut previous_eps: Option<(f64, f64)> = None;

    println!("{:>8} {:>6} {:>12} {:>12}", "ratio", "n", "epsilon", "finite_bound");
    for run in &runs {
        let c = &run.coarsening;
        let rsa = rsa_constant(c, &st.basis, &st.ctx)?;
        let constants = BoundConstants::with_epsilon(rsa.epsilon, &st.s, c, &st.basis, &st.ctx)?;
        let laplacian_residual = (c.is_uniform() && st.kind == LaplacianKind::Combinatorial)
            .then(|| coarse_laplacian_check(c, g.adjacency(), st.kind))
            .transpose()?;
        let s_mp = coarse_operator(&st.s, a.coarsening.prop, g.adjacency(), c, CoarseOperatorKind::Mp)?;

        if rsa.epsilon > rsa.finite_bound + 1e-6 {
            violations.push(format!(
                "ratio {}: epsilon {} exceeds sqrt(lambda_max/lambda_min) = {}",
                run.ratio, rsa.epsilon, rsa.finite_bound
            ));
        }
        if let Some(res) = laplacian_residual.filter(|&r| r > 1e-10) {
            violations.push(format!("ratio {}: coarse Laplacian residual {res:e}", run.ratio));
        }
        if let Some((r, eps)) = previous_eps.filter(|&(r, eps)| run.ratio > r && rsa.epsilon < eps) {
            warnings.push(format!(
                "epsilon decreased from {eps} at ratio {r} to {} at ratio {}",
                rsa.epsilon, run.ratio
            ));
        }
        previous_eps = Some((run.ratio, rsa.epsilon));

        println!("{:>8} {:>6} {:>12.6e} {:>12.6e}", run.ratio, c.num_super(), rsa.epsilon, rsa.finite_bound);
        if g.num_nodes() <= 16 {
            print_dense("Q", c.q());
            print_dense("Q+", c.q_plus());
            print_dense("Pi", &c.pi());
        }

        let tag = format!("r{}", run.ratio);
        let doc_path = a.out.join(format!("coarsening_{tag}.json"));
        fs::write(&doc_path, serde_json::to_string(&c.to_doc())? + "\n")?;
        let s_path = a.out.join(format!("s_mp_{tag}.tsv"));
        let body: String = s_mp.iter().map(|(i, j, v)| format!("{i}\t{j}\t{v}\n")).collect();
        fs::write(&s_path, body)?;
        let report_path = a.out.join(format!("report_{tag}.json"));
        let report = CoarsenReport {
            ratio: run.ratio,
            achieved_ratio: c.ratio(),
            n: c.num_super(),
            num_nodes: c.num_nodes(),
            sweeps: run.sweeps,
            exhausted: run.exhausted,
            rsa,
            constants,
            laplacian_residual,
        };
        fs::write(&report_path, serde_json::to_string_pretty(&report)? + "\n")?;
        outputs.extend([doc_path, s_path, report_path]);
    }
    Ok(Report {
        resolved: resolved(&st),
        warnings,
        outputs,
        violations,
    })
}

#[derive(Serialize)]
struct MpErrorRow {
    ratio: f64,
    seed: u64,
    operator: String,
    k: usize,
    error_mean: f64,
    error_max: f64,
    epsilon: f64,
    bound: f64,
}

fn mp_error(g: &Graph, a: &MpErrorArgs) -> Result<Report> {
    if a.seeds.is_empty() {
        bail!("at least one seed is required");
    }
    let st = setup(g, &a.coarsening)?;
    let runs = coarsen_all(g, &a.coarsening, &st)?;
    fs::create_dir_all(&a.out)?;
    let warnings: Vec<String> = runs.iter().filter_map(exhausted_warning).collect();

    type Cell = (Vec<MpErrorRow>, BoundCertificate, Vec<String>);
    let cells: Vec<Cell> = runs
        .par_iter()
        .map(|run| -> Result<Cell> {
            let c = &run.coarsening;
            let consts = BoundConstants::compute(&st.s, c, &st.basis, &st.ctx)?;
            let cert = BoundCertificate::new(&consts, a.k.max(1), 1.0)?;
            let bound = if a.k == 0 { consts.epsilon } else { k_step_bound(&consts, a.k, 1.0)? };
            let mut rows = Vec::new();
            let mut violations = Vec::new();
            for &seed in &a.seeds {
                let xs = data::random_smooth_signals(&st.basis, &st.ctx, a.signals, seed)?;
                for &kind in &a.operators {
                    let s_c = match coarse_operator(&st.s, a.coarsening.prop, g.adjacency(), c, kind) {
                        Ok(m) => m,
                        Err(e) => {
                            log::warn!("skipping {kind} at ratio {}: {e}", run.ratio);
                            continue;
                        }
                    };
                    let errors = mp_errors(&st.s, &s_c, c, xs.as_ref(), a.k, &st.ctx)?;
                    let error_max = errors.iter().copied().fold(0.0, f64::max);
                    let error_mean = errors.iter().sum::<f64>() / errors.len().max(1) as f64;
                    if kind == CoarseOperatorKind::Mp && cert.claimed() && error_max > bound * (1.0 + HARD_RTOL) + 1e-12 {
                        violations.push(format!(
                            "ratio {} seed {seed}: MP error {error_max} above bound {bound}",
                            run.ratio
                        ));
                    }
                    rows.push(MpErrorRow {
                        ratio: run.ratio,
                        seed,
                        operator: kind.to_string(),
                        k: a.k,
                        error_mean,
                        error_max,
                        epsilon: consts.epsilon,
                        bound,
                    });
                }
            }
            Ok((rows, cert, violations))
        })
        .collect::<Result<_>>()?;

    let order = |name: &str| CoarseOperatorKind::ALL.iter().position(|k| k.to_string() == name);
    let mut rows = Vec::new();
    let mut certificates = Vec::new();
    let mut violations = Vec::new();
    for ((r, cert, v), run) in cells.into_iter().zip(&runs) {
        rows.extend(r);
        certificates.push(serde_json::json!({ "ratio": run.ratio, "certificate": cert }));
        violations.extend(v);
    }
    rows.sort_by(|x, y| {
        x.ratio
            .total_cmp(&y.ratio)
            .then(x.seed.cmp(&y.seed))
            .then(order(&x.operator).cmp(&order(&y.operator)))
    });

    let csv_path = a.out.join("mp_error.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush()?;
    let cert_path = a.out.join("certificates.json");
    fs::write(&cert_path, serde_json::to_string_pretty(&certificates)? + "\n")?;
    println!("wrote {} rows to {}", rows.len(), csv_path.display());
    Ok(Report {
        resolved: resolved(&st),
        warnings,
        outputs: vec![csv_path, cert_path],
        violations,
    })
}

#[derive(Serialize)]
struct TrainRow {
    ratio: f64,
    operator: String,
    seed: u64,
    num_super: usize,
    best_epoch: usize,
    val_acc: f64,
    test_acc: f64,
}

#[derive(Serialize)]
struct SummaryCell {
    ratio: f64,
    operator: String,
    runs: usize,
    test_mean: f64,
    test_std: f64,
}

fn train(g: &Graph, a: &TrainArgs) -> Result<Report> {
    if a.seeds.is_empty() {
        bail!("at least one seed is required");
    }
    let features = g.features.as_ref().context("training needs node features")?;
    let labels = g.labels.as_ref().context("training needs node labels")?;
    let masks = g.masks.as_ref().context("training needs a train/val/test split")?;
    let st = setup(g, &a.coarsening)?;
    let runs = coarsen_all(g, &a.coarsening, &st)?;
    fs::create_dir_all(&a.out)?;
    let warnings: Vec<String> = runs.iter().filter_map(exhausted_warning).collect();
    let base_cfg = TrainConfig {
        epochs: a.epochs,
        learning_rate: a.lr,
        weight_decay: a.wd,
        ..TrainConfig::default()
    };

    // (ratio index or None for the full graph, operator, seed)
    let mut jobs: Vec<(Option<usize>, Option<CoarseOperatorKind>, u64)> =
        a.seeds.iter().map(|&s| (None, None, s)).collect();
    let mut operators = Vec::new();
    for (idx, run) in runs.iter().enumerate() {
        for &kind in &a.operators {
            match coarse_operator(&st.s, a.coarsening.prop, g.adjacency(), &run.coarsening, kind) {
                Ok(s_c) => {
                    operators.push(((idx, kind), s_c));
                    jobs.extend(a.seeds.iter().map(|&s| (Some(idx), Some(kind), s)));
                }
                Err(e) => log::warn!("skipping {kind} at ratio {}: {e}", run.ratio),
            }
        }
    }

    let results: Vec<(TrainRow, String)> = jobs
        .par_iter()
        .map(|&(idx, kind, seed)| -> Result<(TrainRow, String)> {
            let cfg = TrainConfig { seed, ..base_cfg };
            let (report, ratio, num_super, name) = match (idx, kind) {
                (Some(i), Some(k)) => {
                    let s_c = &operators.iter().find(|((j, kk), _)| *j == i && *kk == k).expect("operator built").1;
                    let c = &runs[i].coarsening;
                    let rep = train_coarse(a.model, s_c, c, features.as_ref(), labels, masks, &cfg)?;
                    (rep, runs[i].ratio, c.num_super(), k.to_string())
                }
                _ => (
                    train_full(a.model, &st.s, features.as_ref(), labels, masks, &cfg)?,
                    0.0,
                    g.num_nodes(),
                    "full".to_string(),
                ),
            };
            let row = TrainRow {
                ratio,
                operator: name,
                seed,
                num_super,
                best_epoch: report.best_epoch,
                val_acc: report.best_val_acc,
                test_acc: report.test_acc,
            };
            Ok((row, metrics_csv(&report.metrics)))
        })
        .collect::<Result<_>>()?;

    let mut outputs = Vec::new();
    let mut rows: Vec<&(TrainRow, String)> = results.iter().collect();
    rows.sort_by(|x, y| {
        let (x, y) = (&x.0, &y.0);
        (x.operator != "full")
            .cmp(&(y.operator != "full"))
            .then(x.ratio.total_cmp(&y.ratio))
            .then(x.operator.cmp(&y.operator))
            .then(x.seed.cmp(&y.seed))
    });
    let csv_path = a.out.join("train.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    for (row, _) in &rows {
        w.serialize(row)?;
    }
    w.flush()?;
    outputs.push(csv_path);
    if a.metrics {
        for (row, metrics) in &rows {
            let path = a.out.join(format!("metrics_{}_r{}_s{}.csv", row.operator, row.ratio, row.seed));
            fs::write(&path, metrics)?;
            outputs.push(path);
        }
    }

    let mut summary: Vec<SummaryCell> = Vec::new();
    for (row, _) in &rows {
        match summary.last_mut() {
            Some(cell) if cell.ratio == row.ratio && cell.operator == row.operator => {
                cell.runs += 1;
                cell.test_mean += row.test_acc;
                cell.test_std += row.test_acc * row.test_acc;
            }
            _ => summary.push(SummaryCell {
                ratio: row.ratio,
                operator: row.operator.clone(),
                runs: 1,
                test_mean: row.test_acc,
                test_std: row.test_acc * row.test_acc,
            }),
        }
    }
    println!("{:>8} {:>8} {:>6} {:>18}", "ratio", "operator", "runs", "test accuracy");
    for cell in &mut summary {
        let n = cell.runs as f64;
        let mean = cell.test_mean / n;
        cell.test_std = (cell.test_std / n - mean * mean).max(0.0).sqrt();
        cell.test_mean = mean;
        println!(
            "{:>8} {:>8} {:>6} {:>9.2} ± {:<6.2}",
            cell.ratio,
            cell.operator,
            cell.runs,
            100.0 * cell.test_mean,
            100.0 * cell.test_std
        );
    }
    let summary_path = a.out.join("summary.json");
    fs::write(&summary_path, serde_json::to_string_pretty(&summary)? + "\n")?;
    outputs.push(summary_path);

    Ok(Report {
        resolved: resolved(&st),
        warnings,
        outputs,
        violations: Vec::new(),
    })
}
