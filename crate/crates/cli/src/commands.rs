use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde_json::json;

use pointvis::apps::{self, export, NormalParams, OptimizeParams, ShadowParams, ViewMode};
use pointvis::backend::{BackendConfig, BackendRegistry, VisibilityBackend};
use pointvis::bench::{self, BenchConfig};
use pointvis::dataset::{self, DatasetConfig, DatasetManifest, ShapeFamily, FULL_SCALE_POINTS};
use pointvis::eval::{self, elapsed_ms, hpr_gamma_sweep, EvalReport};
use pointvis::geom::{sample_surface, sample_viewpoints, shapes, PointCloud, Viewpoint, VisibilityOracle, VisibilityResult};
use pointvis::hpr::{hpr_visibility, HprParams, Kernel};
use pointvis::io;
use pointvis::nn::{Descriptor, ModelWeights, Precision, Predictor};
use pointvis::Error;

use crate::args::*;

pub fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::GenData(a) => gen_data(a, seed),
        Command::Label(a) => label(a, seed),
        Command::Hpr(a) => hpr(a),
        Command::Predict(a) => predict(a),
        Command::Eval(a) => evaluate(a),
        Command::Bench(a) => run_bench(a, seed),
        Command::Reconstruct(a) => reconstruct(a),
        Command::Normals(a) => normals(a),
        Command::Shadow(a) => shadow(a),
        Command::OptimizeView(a) => optimize(a, seed),
        Command::Weights { command } => match command {
            WeightsCommand::Init(a) => weights_init(a, seed),
            WeightsCommand::Inspect(a) => weights_inspect(a),
        },
    }
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn vp(v: [f64; 3]) -> Viewpoint {
    Viewpoint::at(v[0], v[1], v[2])
}

fn hpr_params(kernel: KernelArg, gamma: Option<f64>) -> Result<HprParams> {
    let p = match kernel {
        KernelArg::Linear => HprParams::linear(gamma.unwrap_or(2.0)),
        KernelArg::Exponential => HprParams::exponential(gamma.unwrap_or(0.1)),
    };
    p.validate()?;
    Ok(p)
}

fn precision(p: PrecisionArg) -> Precision {
    match p {
        PrecisionArg::F32 => Precision::F32,
        PrecisionArg::F64 => Precision::F64,
    }
}

fn load_weights(path: &Path) -> Result<Arc<ModelWeights>> {
    Ok(Arc::new(ModelWeights::load(path).with_context(|| format!("loading weights {}", path.display()))?))
}

fn read_cloud(path: &Path) -> Result<PointCloud> {
    io::read_cloud(path).with_context(|| format!("reading cloud {}", path.display()))
}

fn backend_config(a: &BackendArgs) -> Result<BackendConfig> {
    let mesh = match &a.mesh {
        Some(p) => Some(Arc::new(io::read_mesh(p).with_context(|| format!("reading mesh {}", p.display()))?)),
        None => None,
    };
    let weights = match &a.weights {
        Some(p) => Some(load_weights(p)?),
        None => None,
    };
    Ok(BackendConfig {
        mesh,
        hpr: hpr_params(a.kernel, a.gamma)?,
        weights,
        precision: precision(a.precision),
    })
}

fn make_backend(a: &BackendArgs) -> Result<Box<dyn VisibilityBackend>> {
    Ok(BackendRegistry::with_builtins().create(&a.backend, &backend_config(a)?)?)
}

fn writer(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn gen_data(a: GenDataArgs, seed: u64) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => serde_json::from_str::<DatasetConfig>(&std::fs::read_to_string(p)?).map_err(|e| Error::InvalidInput(format!("{}: {e}", p.display())))?,
        None => DatasetConfig::default(),
    };
    cfg.seed = seed;
    if let Some(f) = &a.families {
        cfg.families = f.iter().map(|s| s.parse::<ShapeFamily>()).collect::<pointvis::Result<_>>()?;
    }
    if let Some(n) = a.instances {
        cfg.instances = n;
    }
    if let Some(n) = a.viewpoints {
        cfg.viewpoints = n;
    }
    if a.full_scale {
        cfg.points = FULL_SCALE_POINTS;
    }
    if let Some(n) = a.points {
        cfg.points = n;
    }
    if let Some(levels) = a.noise {
        cfg.noise_levels = levels;
    }
    cfg.meshes.extend(a.meshes);
    if a.allow_open {
        cfg.require_watertight = false;
    }
    let t = Instant::now();
    let m = dataset::gen_dataset(&cfg, &a.out)?;
    print_json(&json!({
        "manifest": a.out.join("manifest.json"),
        "entries": m.entries.len(),
        "label_files": m.label_files(),
        "points": cfg.points,
        "elapsed_ms": elapsed_ms(t),
    }))
}

fn resolve_viewpoints(cloud: &PointCloud, v: &ViewpointArgs, default_n: usize, seed: u64) -> Result<Vec<Viewpoint>> {
    if !v.viewpoint.is_empty() {
        return Ok(v.viewpoint.iter().map(|&p| vp(p)).collect());
    }
    Ok(sample_viewpoints(cloud, v.n_viewpoints.unwrap_or(default_n), seed)?)
}

fn label(a: LabelArgs, seed: u64) -> Result<()> {
    let mesh = io::read_mesh(&a.mesh)?;
    std::fs::create_dir_all(&a.out)?;
    let cloud = match &a.cloud {
        Some(p) => read_cloud(p)?,
        None => {
            let c = sample_surface(&mesh, a.samples, seed)?;
            io::write_cloud(a.out.join("cloud.ply"), &c)?;
            c
        }
    };
    let vps = resolve_viewpoints(&cloud, &a.views, 16, seed ^ 1)?;
    let oracle = VisibilityOracle::new(&mesh)?;
    let mut visible = Vec::new();
    for (k, v) in vps.iter().enumerate() {
        let l = oracle.label(&cloud, v);
        if l.viewpoint_inside {
            log::warn!("viewpoint {k} lies inside the mesh");
        }
        visible.push(l.visibility.visible_count());
        io::write_labels(a.out.join(format!("v{k:03}.nvlb")), &l.visibility.labels)?;
    }
    let positions: Vec<[f64; 3]> = vps.iter().map(|v| [v.position.x, v.position.y, v.position.z]).collect();
    std::fs::write(a.out.join("viewpoints.json"), serde_json::to_string_pretty(&positions)?)?;
    print_json(&json!({ "points": cloud.len(), "viewpoints": vps.len(), "visible": visible }))
}

fn hpr(a: HprArgs) -> Result<()> {
    let cloud = read_cloud(&a.cloud)?;
    let params = hpr_params(a.kernel, a.gamma)?;
    let t = Instant::now();
    let vis = hpr_visibility(&cloud, &vp(a.viewpoint), &params)?;
    let ms = elapsed_ms(t);
    if let Some(out) = &a.out {
        io::write_labels(out, &vis.labels)?;
    }
    print_json(&json!({ "points": cloud.len(), "visible": vis.visible_count(), "elapsed_ms": ms, "params": params }))
}

fn write_probs(path: &Path, vis: &VisibilityResult) -> Result<()> {
    let mut w = writer(path)?;
    writeln!(w, "index,prob_visible,label")?;
    let probs = vis.prob_visible.as_deref().unwrap_or_default();
    for (i, &l) in vis.labels.iter().enumerate() {
        let p = probs.get(i).copied().unwrap_or(if l { 1.0 } else { 0.0 });
        writeln!(w, "{i},{p:.6},{}", u8::from(l))?;
    }
    Ok(w.flush()?)
}

fn predict(a: PredictArgs) -> Result<()> {
    if a.viewpoint.is_empty() {
        bail!(Error::InvalidInput("at least one --viewpoint is required".into()));
    }
    let weights = load_weights(&a.weights)?;
    let cloud = read_cloud(&a.cloud)?;
    let predictor = Predictor::from_arc(weights)?;
    let t = Instant::now();
    let cache = predictor.features(&cloud)?;
    let feature_ms = elapsed_ms(t);
    let mut views = Vec::new();
    for (k, &p) in a.viewpoint.iter().enumerate() {
        let t = Instant::now();
        let vis = predictor.predict_with(&cloud, &vp(p), Some(&cache), precision(a.precision))?;
        let ms = elapsed_ms(t);
        if let Some(out) = &a.out {
            if a.viewpoint.len() == 1 {
                io::write_labels(out, &vis.labels)?;
            } else {
                std::fs::create_dir_all(out)?;
                io::write_labels(out.join(format!("v{k:03}.nvlb")), &vis.labels)?;
            }
        }
        if k == 0 {
            if let Some(p) = &a.probs {
                write_probs(p, &vis)?;
            }
        }
        views.push(json!({ "viewpoint": p, "visible": vis.visible_count(), "predict_ms": ms }));
    }
    print_json(&json!({ "points": cloud.len(), "feature_ms": feature_ms, "views": views }))
}

fn evaluate(a: EvalArgs) -> Result<()> {
    if let (Some(p), Some(t)) = (&a.pred, &a.truth) {
        let pred = VisibilityResult::from_labels(io::read_labels(p)?);
        let truth = VisibilityResult::from_labels(io::read_labels(t)?);
        let row = eval::evaluate(&pred, &truth)?;
        return print_json(&json!({
            "accuracy": row.accuracy,
            "false_negative_rate": row.false_negative_rate,
            "false_positive_rate": row.false_positive_rate,
            "counts": row.counts,
        }));
    }
    let Some(path) = &a.manifest else {
        bail!(Error::InvalidInput("eval needs --manifest or --pred/--truth".into()));
    };
    let manifest = DatasetManifest::load(path)?;
    let base = backend_config(&a.backend)?;
    let shared = if a.backend.backend == "oracle" {
        None
    } else {
        Some(BackendRegistry::with_builtins().create(&a.backend.backend, &base)?)
    };
    let kernel = match a.backend.kernel {
        KernelArg::Linear => Kernel::LinearFlip,
        KernelArg::Exponential => Kernel::Exponential,
    };
    let gammas = kernel.default_gammas();
    let mut sweep_acc = vec![(0usize, 0.0f64); gammas.len()];
    let mut reports: Vec<(String, EvalReport)> = Vec::new();
    let entries = manifest.entries.iter().filter(|e| !a.clean_only || e.noise == 0.0).take(a.limit.unwrap_or(usize::MAX));
    for e in entries {
        let cloud = manifest.cloud(e)?;
        let truth: Vec<VisibilityResult> = manifest.labels(e)?.into_iter().map(VisibilityResult::from_labels).collect();
        let vps = e.viewpoint_list();
        let own;
        let backend: &dyn VisibilityBackend = match &shared {
            Some(b) => b.as_ref(),
            None => {
                let cfg = BackendConfig {
                    mesh: Some(Arc::new(manifest.mesh(e)?)),
                    ..base.clone()
                };
                own = BackendRegistry::with_builtins().create("oracle", &cfg)?;
                own.as_ref()
            }
        };
        reports.push((e.name.clone(), eval::evaluate_backend(backend, &cloud, &vps, &truth)?));
        if a.sweep {
            for (slot, s) in sweep_acc.iter_mut().zip(hpr_gamma_sweep(&cloud, &vps, &truth, kernel, &gammas)?) {
                slot.0 += 1;
                slot.1 += s.accuracy;
            }
        }
    }
    let all_rows: Vec<_> = reports.iter().flat_map(|(_, r)| r.rows.clone()).collect();
    let prepare: f64 = reports.iter().map(|(_, r)| r.prepare_ms).sum::<f64>() / reports.len().max(1) as f64;
    let pooled = EvalReport::from_rows(&a.backend.backend, all_rows, prepare);
    let per_entry: Vec<_> = reports
        .iter()
        .map(|(n, r)| json!({ "name": n, "accuracy": r.accuracy, "false_negative_rate": r.false_negative_rate, "false_positive_rate": r.false_positive_rate, "prepare_ms": r.prepare_ms, "median_view_ms": r.median_view_ms }))
        .collect();
    let mut out = json!({
        "backend": a.backend.backend,
        "entries": reports.len(),
        "accuracy": pooled.accuracy,
        "false_negative_rate": pooled.false_negative_rate,
        "false_positive_rate": pooled.false_positive_rate,
        "mean_view_accuracy": pooled.mean_view_accuracy,
        "mean_prepare_ms": pooled.prepare_ms,
        "median_view_ms": pooled.median_view_ms,
        "per_entry": per_entry,
    });
    if a.sweep {
        out["gamma_sweep"] = json!(gammas
            .iter()
            .zip(&sweep_acc)
            .map(|(g, (n, s))| json!({ "gamma": g, "mean_accuracy": s / (*n).max(1) as f64 }))
            .collect::<Vec<_>>());
    }
    if let Some(p) = &a.out {
        let full = json!({ "summary": out, "rows": pooled.rows });
        std::fs::write(p, serde_json::to_string_pretty(&full)?)?;
    }
    print_json(&out)
}

fn run_bench(a: BenchArgs, seed: u64) -> Result<()> {
    let mesh = if let Some(p) = &a.mesh {
        io::read_mesh(p)?
    } else if let Some(p) = &a.manifest {
        let m = DatasetManifest::load(p)?;
        let first = m.entries.first().ok_or_else(|| Error::InvalidInput("manifest has no entries".into()))?;
        m.mesh(first)?
    } else {
        shapes::torus(1.0, 0.35, 96, 48)
    };
    let mesh = Arc::new(mesh);
    let weights = match &a.weights {
        Some(p) => Some(load_weights(p)?),
        None => None,
    };
    if a.backends.iter().any(|b| b == "neural") && weights.is_none() {
        bail!(Error::InvalidInput("the neural backend needs --weights".into()));
    }
    let cfg = BackendConfig {
        mesh: Some(mesh.clone()),
        hpr: hpr_params(KernelArg::Linear, a.gamma)?,
        weights,
        precision: Precision::F32,
    };
    let registry = BackendRegistry::with_builtins();
    let backends: Vec<Box<dyn VisibilityBackend>> = a.backends.iter().map(|n| registry.create(n, &cfg)).collect::<pointvis::Result<_>>()?;
    let refs: Vec<&dyn VisibilityBackend> = backends.iter().map(|b| b.as_ref()).collect();
    let config = BenchConfig {
        sizes: a.sizes,
        viewpoints: a.viewpoints,
        seed,
    };
    let rows = bench::bench(&mesh, &refs, &config)?;
    match &a.out {
        Some(p) => {
            let mut w = writer(p)?;
            bench::write_csv(&mut w, &rows)?;
            w.flush()?;
        }
        None => bench::write_csv(&mut std::io::stdout().lock(), &rows)?,
    }
    Ok(())
}

fn reconstruct(a: ReconstructArgs) -> Result<()> {
    let cloud = read_cloud(&a.cloud)?;
    let backend = make_backend(&a.backend)?;
    let v = vp(a.viewpoint);
    let vis = backend.visibility(&cloud, &v)?;
    let mesh = apps::reconstruct_view(&cloud, &vis, &v, a.edge_threshold)?;
    export::save_view_mesh_obj(&a.out, &cloud, &mesh)?;
    print_json(&json!({ "visible": vis.visible_count(), "triangles": mesh.len(), "vertices": mesh.vertices().len() }))
}

fn normals(a: NormalsArgs) -> Result<()> {
    let cloud = read_cloud(&a.cloud)?;
    let backend = make_backend(&a.backend)?;
    let params = NormalParams {
        edge_threshold: a.edge_threshold,
        distance_factor: a.distance_factor,
    };
    let t = Instant::now();
    let n = apps::estimate_normals(&cloud, backend.as_ref(), &params)?;
    export::save_oriented_ply(&a.out, &cloud, &n)?;
    let mut report = json!({ "points": cloud.len(), "elapsed_ms": elapsed_ms(t) });
    if let Some(given) = cloud.normals() {
        let mean: f64 = n.iter().zip(given).map(|(a, b)| a.dot(b)).sum::<f64>() / n.len() as f64;
        report["mean_cosine_to_input_normals"] = json!(mean);
    }
    print_json(&report)
}

fn shadow(a: ShadowArgs) -> Result<()> {
    let cloud = read_cloud(&a.cloud)?;
    let backend = make_backend(&a.backend)?;
    let params = ShadowParams {
        resolution: a.resolution,
        bias_fraction: a.bias,
        edge_threshold: a.edge_threshold,
    };
    let (map, lit) = apps::render_shadow(&cloud, backend.as_ref(), &vp(a.light), &params)?;
    export::save_shadow_map(&a.out, &map)?;
    if let Some(p) = &a.lit {
        io::write_labels(p, &lit)?;
    }
    let shadowed = lit.iter().filter(|l| !**l).count();
    print_json(&json!({ "points": cloud.len(), "shadowed": shadowed, "covered_texels": map.covered(), "sidecar": a.out.with_extension("json") }))
}

fn optimize(a: OptimizeArgs, seed: u64) -> Result<()> {
    let cloud = read_cloud(&a.cloud)?;
    let predictor = Predictor::from_arc(load_weights(&a.weights)?)?;
    let mode = match a.mode {
        ModeArg::Best => ViewMode::Best,
        ModeArg::Worst => ViewMode::Worst,
    };
    if a.iters == 0 {
        bail!(Error::InvalidInput("--iters must be at least 1".into()));
    }
    let params = OptimizeParams {
        iterations: a.iters,
        step: a.step,
        seed,
        start: a.start.map(vp),
        ..Default::default()
    };
    let t = Instant::now();
    let traj = apps::optimize_view(&cloud, &predictor, mode, &params)?;
    if let Some(p) = &a.out {
        let mut w = writer(p)?;
        export::write_trajectory_csv(&mut w, &traj)?;
        w.flush()?;
    }
    let (first, last) = (traj[0], traj[traj.len() - 1]);
    let pos = |v: &Viewpoint| [v.position.x, v.position.y, v.position.z];
    print_json(&json!({
        "iterations": a.iters,
        "start": pos(&first.viewpoint),
        "start_score": first.score,
        "final": pos(&last.viewpoint),
        "final_score": last.score,
        "elapsed_ms": elapsed_ms(t),
    }))
}

fn weights_init(a: WeightsInitArgs, seed: u64) -> Result<()> {
    let mut d = match &a.descriptor {
        Some(p) => serde_json::from_str::<Descriptor>(&std::fs::read_to_string(p)?).map_err(|e| Error::InvalidInput(format!("{}: {e}", p.display())))?,
        None => Descriptor::default(),
    };
    if let Some(v) = a.depth {
        d.octree_depth = v;
    }
    if let Some(v) = a.widths {
        d.stage_widths = v;
    }
    if let Some(v) = a.blocks {
        d.stage_blocks = v;
    }
    if let Some(v) = a.frequencies {
        d.frequencies = v;
    }
    if let Some(v) = a.mlp {
        d.mlp_hidden = v;
    }
    if a.normals {
        d.in_channels = 6;
    }
    d.validate().map_err(|e| match e {
        Error::CorruptWeights { reason, .. } => Error::InvalidInput(format!("descriptor: {reason}")),
        other => other,
    })?;
    let w = match a.kind {
        InitKind::Random => ModelWeights::random(d, seed)?,
        InitKind::Toy => ModelWeights::toy(d, seed)?,
        InitKind::Zeros => ModelWeights::zeros(d)?,
    };
    w.save(&a.out)?;
    print_json(&json!({ "path": a.out, "parameters": w.parameter_count(), "tensors": w.names().len() }))
}

fn weights_inspect(a: WeightsInspectArgs) -> Result<()> {
    let w = ModelWeights::load(&a.path)?;
    let mut out = json!({
        "descriptor": w.descriptor(),
        "parameters": w.parameter_count(),
        "tensors": w.names().len(),
        "bytes": std::fs::metadata(&a.path)?.len(),
    });
    if a.tensors {
        let table: Vec<_> = w
            .names()
            .iter()
            .map(|n| {
                let t = w.tensor(n).expect("listed tensor");
                let (lo, hi) = t.data.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
                json!({ "name": n, "dims": t.dims, "min": lo, "max": hi })
            })
            .collect();
        out["table"] = json!(table);
    }
    print_json(&out)
}
