use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Result};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use sixdgs_core::ellicell::{write_rays_csv, CellConfig};
use sixdgs_core::gaussian::{load_ply, normalize_scene, render_image};
use sixdgs_core::pipeline::{model_rays, oracle_estimate, Estimator, DEFAULT_NEIGHBORS};
use sixdgs_core::scoring::{load_features, load_weights, manifest_for, save_weights, train_scorer, TrainConfig, TrainView};
use sixdgs_core::solver::{pose_error, PoseError, PoseEstimate};
use sixdgs_core::synth::{synth_scene, write_scene, SynthConfig};
use sixdgs_core::transforms::Transforms;
use sixdgs_core::{CameraIntrinsics, Error, FeatureMap, GaussianCloud, Pose};

use crate::cache::{self, sha256_file};
use crate::report::{EvalReport, ViewResult};
use crate::{EstimateArgs, EvalArgs, ModelArgs, RaysArgs, RenderArgs, ScorerArgs, SynthArgs, TrainArgs};

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_vec_pretty(value)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Writes `config.json` with the arguments, seed and input hashes.
fn echo_config(out: &Path, command: &str, args: serde_json::Value, inputs: &[&Path]) -> Result<()> {
    let mut hashes = serde_json::Map::new();
    for p in inputs {
        hashes.insert(p.display().to_string(), json!(sha256_file(p)?));
    }
    write_json(
        &out.join("config.json"),
        &json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "threads": rayon::current_num_threads(),
            "args": args,
            "inputs_sha256": hashes,
        }),
    )
}

/// Loaded, normalized model and the hash of its file.
struct Model {
    cloud: GaussianCloud,
    sha256: String,
}

fn load_model(path: &Path) -> Result<Model> {
    let cloud = normalize_scene(&load_ply(path)?)?;
    Ok(Model {
        cloud,
        sha256: sha256_file(path)?,
    })
}

fn features_path(transforms: &Path, t: &Transforms, index: usize, dir: Option<&Path>) -> Result<PathBuf> {
    let frame = &t.frames[index];
    if let Some(dir) = dir {
        let stem = Path::new(&frame.file_path)
            .file_stem()
            .ok_or_else(|| anyhow!("frame {index} has no file name"))?;
        return Ok(dir.join(stem).with_extension("6dfeat"));
    }
    let rel = frame
        .features
        .as_ref()
        .ok_or_else(|| Error::Config(format!("frame {index} names no feature file; pass --features")))?;
    Ok(transforms.parent().unwrap_or(Path::new(".")).join(rel))
}

fn model_args_json(m: &ModelArgs) -> serde_json::Value {
    json!({"model": m.model, "g_cells": m.g_cells})
}

fn scorer_args_json(s: &ScorerArgs) -> serde_json::Value {
    json!({"weights": s.weights, "oracle": s.oracle, "n_top": s.n_top, "lambda": s.lambda})
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    if a.holdout >= a.views {
        bail!(Error::Config(format!("holdout {} must be smaller than views {}", a.holdout, a.views)));
    }
    let cfg = SynthConfig {
        ellipsoids: a.ellipsoids,
        views: a.views,
        layout: a.layout.parse()?,
        seed: a.seed,
        image_size: a.image_size,
        fov_deg: a.fov,
        camera_distance: a.camera_distance,
        feature_stride: a.feature_stride,
        ..Default::default()
    };
    create_dir(&a.out)?;
    let scene = synth_scene(&cfg)?;
    let files = write_scene(&scene, cfg.feature_stride, &a.out)?;
    let all = Transforms::load(&files.transforms)?;
    let split = all.frames.len() - a.holdout;
    let mut train = all.clone();
    train.frames.truncate(split);
    train.save(&a.out.join("transforms_train.json"))?;
    let mut test = all.clone();
    test.frames.drain(..split);
    test.save(&a.out.join("transforms_test.json"))?;
    echo_config(&a.out, "synth", serde_json::to_value(&cfg)?, &[])?;
    println!(
        "wrote {} ellipsoids, {} views ({} held out) to {}",
        scene.cloud.len(),
        files.images.len(),
        a.holdout,
        a.out.display()
    );
    Ok(())
}

fn load_view(transforms: &Path, index: usize) -> Result<(Transforms, CameraIntrinsics, Pose)> {
    let t = Transforms::load(transforms)?;
    if index >= t.frames.len() {
        bail!(Error::Config(format!("view {index} out of range, {} frames", t.frames.len())));
    }
    let k = t.intrinsics()?;
    let pose = t.pose(index)?;
    Ok((t, k, pose))
}

pub fn render(a: &RenderArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let (_, k, pose) = load_view(&a.transforms, a.view)?;
    let img = render_image(&model.cloud, &model.cloud.normalize_pose(&pose), &k);
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    img.save_png(&a.out)?;
    println!("rendered view {} to {}", a.view, a.out.display());
    Ok(())
}

pub fn rays(a: &RaysArgs) -> Result<()> {
    let model = load_model(&a.model.model)?;
    let (set, bytes) = cache::stored_rays(&model.cloud, a.model.g_cells)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    std::fs::write(&a.out, bytes).map_err(|e| Error::io(&a.out, e))?;
    if a.csv {
        let p = a.out.with_extension("csv");
        let f = std::fs::File::create(&p).map_err(|e| Error::io(&p, e))?;
        write_rays_csv(std::io::BufWriter::new(f), &set.rays).map_err(|e| Error::io(&p, e))?;
    }
    println!(
        "{} rays from {} ellipsoids ({:.1} per ellipsoid) written to {}",
        set.len(),
        model.cloud.len(),
        set.len() as f64 / model.cloud.len() as f64,
        a.out.display()
    );
    Ok(())
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let model = load_model(&a.model.model)?;
    let t = Transforms::load(&a.transforms)?;
    let k = t.intrinsics()?;
    let mut views = Vec::with_capacity(t.frames.len());
    let mut inputs = vec![a.model.model.clone(), a.transforms.clone()];
    for i in 0..t.frames.len() {
        let fp = features_path(&a.transforms, &t, i, a.features.as_deref())?;
        views.push(TrainView {
            features: load_features(&fp)?,
            pose: model.cloud.normalize_pose(&t.pose(i)?),
            intrinsics: k,
        });
        inputs.push(fp);
    }
    let cfg = TrainConfig {
        iterations: a.iters,
        subsample: a.subsample,
        weight_decay: a.weight_decay,
        learning_rate: a.lr,
        lambda: a.lambda,
        seed: a.seed,
        width: a.mlp_width,
        ..Default::default()
    };
    create_dir(&a.out)?;
    let cells = CellConfig {
        cells: a.model.g_cells,
        ..Default::default()
    };
    let started = Instant::now();
    let rays = model_rays(&model.cloud, &cells, DEFAULT_NEIGHBORS)?;
    let outcome = train_scorer(&rays, &views, &cfg)?;
    let weights_path = a.out.join("weights.bin");
    let config = json!({"train": cfg, "g_cells": a.model.g_cells, "model_sha256": model.sha256});
    save_weights(&weights_path, &outcome.weights, &manifest_for(&outcome.weights, a.seed, config))?;
    let mut csv = String::from("iteration,loss\n");
    for (i, l) in outcome.losses.iter().enumerate() {
        csv.push_str(&format!("{i},{l:e}\n"));
    }
    let lp = a.out.join("loss.csv");
    std::fs::write(&lp, csv).map_err(|e| Error::io(&lp, e))?;
    std::fs::write(a.out.join("loss.svg"), crate::svg::line_plot("training loss", "iteration", "loss", &outcome.losses))
        .map_err(|e| Error::io(a.out.join("loss.svg"), e))?;
    cache::estimator(&model.cloud, &model.sha256, &weights_path, outcome.weights.clone(), a.model.g_cells)?;
    let input_refs: Vec<&Path> = inputs.iter().map(|p| p.as_path()).collect();
    echo_config(
        &a.out,
        "train",
        json!({"model": model_args_json(&a.model), "transforms": a.transforms, "features": a.features, "train": cfg}),
        &input_refs,
    )?;
    let (first, last) = (outcome.losses.first().copied(), outcome.losses.last().copied());
    println!(
        "trained {} iterations in {:.1}s, loss {:?} -> {:?}, weights in {}",
        outcome.losses.len(),
        started.elapsed().as_secs_f64(),
        first,
        last,
        weights_path.display()
    );
    Ok(())
}

/// Scorer shared by `estimate` and `eval`.
enum Scorer {
    Learned(Box<Estimator>),
    Oracle(sixdgs_core::ellicell::RaySet),
}

fn scorer(model: &Model, m: &ModelArgs, s: &ScorerArgs) -> Result<Scorer> {
    if s.oracle {
        return Ok(Scorer::Oracle(cache::stored_rays(&model.cloud, m.g_cells)?.0));
    }
    let wp = s
        .weights
        .as_ref()
        .ok_or_else(|| Error::Config("either --weights or --oracle is required".into()))?;
    let (weights, _) = load_weights(wp)?;
    Ok(Scorer::Learned(Box::new(cache::estimator(&model.cloud, &model.sha256, wp, weights, m.g_cells)?)))
}

fn run_one(
    scorer: &Scorer,
    features: &FeatureMap,
    k: &CameraIntrinsics,
    gt: Option<&Pose>,
    s: &ScorerArgs,
) -> Result<PoseEstimate> {
    Ok(match scorer {
        Scorer::Learned(est) => est.estimate(features, k, s.n_top)?,
        Scorer::Oracle(rays) => {
            let gt = gt.ok_or_else(|| Error::Config("--oracle needs a ground-truth view".into()))?;
            oracle_estimate(rays, gt, features, k, s.lambda, s.n_top)?
        }
    })
}

pub fn estimate(a: &EstimateArgs) -> Result<()> {
    let started = Instant::now();
    let model = load_model(&a.model.model)?;
    let t = Transforms::load(&a.transforms)?;
    let k = t.intrinsics()?;
    let gt = match a.view {
        Some(v) => Some(model.cloud.normalize_pose(&load_view(&a.transforms, v)?.2)),
        None => None,
    };
    let features = load_features(&a.features)?;
    log::debug!("inputs loaded after {:.3}s", started.elapsed().as_secs_f64());
    let scorer = scorer(&model, &a.model, &a.scorer)?;
    log::debug!("scorer ready after {:.3}s", started.elapsed().as_secs_f64());
    let est = run_one(&scorer, &features, &k, gt.as_ref(), &a.scorer)?;
    log::debug!("pose solved after {:.3}s", started.elapsed().as_secs_f64());
    let error = gt.map(|g| pose_error(&est.pose, &g));
    let seconds = started.elapsed().as_secs_f64();
    create_dir(&a.out)?;
    let record = est.record(error);
    write_json(&a.out.join("pose.json"), &record)?;
    let mut inputs: Vec<&Path> = vec![&a.model.model, &a.transforms, &a.features];
    if let Some(w) = &a.scorer.weights {
        inputs.push(w);
    }
    echo_config(
        &a.out,
        "estimate",
        json!({
            "model": model_args_json(&a.model),
            "scorer": scorer_args_json(&a.scorer),
            "features": a.features,
            "transforms": a.transforms,
            "view": a.view,
            "seed": a.seed,
        }),
        &inputs,
    )?;
    println!("{}", serde_json::to_string(&record)?);
    println!(
        "bundle {} rays, {} inliers{}; {:.3}s",
        est.bundle_size,
        est.inliers,
        if est.flagged { ", flagged: residual above threshold" } else { "" },
        seconds
    );
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let model = load_model(&a.model.model)?;
    let t = Transforms::load(&a.transforms)?;
    if t.frames.is_empty() {
        bail!(Error::Config("no views in the test split".into()));
    }
    let k = t.intrinsics()?;
    let scorer = scorer(&model, &a.model, &a.scorer)?;
    create_dir(&a.out)?;
    let started = Instant::now();
    let outcomes: Vec<std::result::Result<ViewResult, String>> = (0..t.frames.len())
        .into_par_iter()
        .map(|i| {
            let run = || -> Result<ViewResult> {
                let gt = model.cloud.normalize_pose(&t.pose(i)?);
                let fp = features_path(&a.transforms, &t, i, a.features.as_deref())?;
                let features = load_features(&fp)?;
                let view_start = Instant::now();
                let est = run_one(&scorer, &features, &k, Some(&gt), &a.scorer)?;
                let PoseError { mae, mte } = pose_error(&est.pose, &gt);
                Ok(ViewResult {
                    view: i,
                    file: t.frames[i].file_path.clone(),
                    mae,
                    mte,
                    seconds: view_start.elapsed().as_secs_f64(),
                    flagged: est.flagged,
                })
            };
            run().map_err(|e| format!("view {i} ({}): {e:#}", t.frames[i].file_path))
        })
        .collect();
    let total = started.elapsed().as_secs_f64();
    let mut views = Vec::new();
    let mut missing = Vec::new();
    for o in outcomes {
        match o {
            Ok(v) => views.push(v),
            Err(e) => {
                log::warn!("{e}");
                missing.push(e);
            }
        }
    }
    let report = EvalReport::new(
        views,
        missing,
        total,
        json!({
            "model": model_args_json(&a.model),
            "scorer": scorer_args_json(&a.scorer),
            "transforms": a.transforms,
            "features": a.features,
            "seed": a.seed,
            "model_sha256": model.sha256,
        }),
    );
    write_json(&a.out.join("report.json"), &report)?;
    report.write_plots(&a.out)?;
    let mut inputs: Vec<&Path> = vec![&a.model.model, &a.transforms];
    if let Some(w) = &a.scorer.weights {
        inputs.push(w);
    }
    echo_config(&a.out, "eval", report.config.clone(), &inputs)?;
    println!(
        "{} views: mean MAE {:.3} deg, mean MTE {:.4} u, {:.2} fps{}",
        report.views.len(),
        report.mean_mae,
        report.mean_mte,
        report.fps,
        if report.missing.is_empty() { String::new() } else { format!(", {} missing", report.missing.len()) }
    );
    if report.views.is_empty() {
        bail!(Error::Config("every view failed".into()));
    }
    Ok(())
}

