use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use serde_json::{json, Value};

use speckledic::dataset::{self, DatasetConfig, DatasetVersion, Split};
use speckledic::dic::{self, DicField};
use speckledic::field_gen::star_field;
use speckledic::image::BitDepth;
use speckledic::metrology::{self, EvaluationROI, MetrologyReport, MetrologySettings, PibSetup};
use speckledic::speckle::{self, DiskSidecar};
use speckledic::warp;
use speckledic::{DisplacementField, GrayImage};

use crate::args::*;
use crate::summary::{summary, ThroughputRecord};

pub fn run(cli: &Cli) -> Result<Value> {
    let seed = cli.seed;
    match &cli.command {
        Command::GenDataset(a) => gen_dataset(a, seed),
        Command::GenStar(a) => gen_star(a, seed),
        Command::Warp(a) => warp_cmd(a),
        Command::AddNoise(a) => add_noise(a, seed),
        Command::Dic(a) => dic_cmd(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Metrology(a) => metrology_cmd(a),
        Command::Pib(a) => pib(a, seed),
        Command::Strain(a) => strain(a),
        Command::Throughput(a) => throughput(a),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn gen_dataset(a: &GenDataset, seed: u64) -> Result<Value> {
    let version = if a.dataset_version == 1 { DatasetVersion::V1 } else { DatasetVersion::V2 };
    let mut cfg = DatasetConfig::for_version(version);
    cfg.master_seed = seed;
    if let Some(n) = a.references {
        cfg.n_references = n;
    }
    if let Some(n) = a.train {
        cfg.train_per_reference = n;
    }
    if let Some(n) = a.test {
        cfg.test_per_reference = n;
    }
    if let Some(n) = a.frame_size {
        cfg.frame_size = n;
    }
    if let Some(d) = a.depth {
        cfg.bit_depth = d.into();
    }
    cfg.validate()?;
    let (pairs, train, test, checksum, out) = match (&a.out, a.plan_only) {
        (Some(out), false) => {
            let m = dataset::build_dataset(&cfg, out)?;
            (m.pairs.len(), m.train_count, m.test_count, Some(m.checksum), Some(out.join("manifest.json")))
        }
        _ => {
            let plan = dataset::plan_pairs(&cfg);
            let train = plan.iter().filter(|p| p.split == Split::Train).count();
            (plan.len(), train, plan.len() - train, None, None)
        }
    };
    Ok(summary(
        "gen-dataset",
        json!({
            "version": a.dataset_version,
            "seed": seed,
            "planned_only": out.is_none(),
            "references": cfg.n_references,
            "region_sizes": cfg.region_sizes,
            "pairs": pairs,
            "train": train,
            "test": test,
            "manifest": out.map(|p| p.display().to_string()),
            "checksum": checksum,
        }),
    ))
}

fn gen_star(a: &GenStar, seed: u64) -> Result<Value> {
    let star = a.star.spec();
    star.validate()?;
    let params = a.speckle.params(star.width, star.height);
    let disks = speckle::sample_disks(&params, seed)?;
    let reference = speckle::render_speckle(&disks, &params)?;
    let deformed = warp::render_deformed_speckle(&disks, &star, &params)?;
    let depth: BitDepth = a.depth.into();
    reference.save_png(&a.out_ref, depth)?;
    deformed.save_png(&a.out_def, depth)?;
    if let Some(p) = &a.out_gt {
        dataset::write_flow(&star_field(&star)?, p)?;
    }
    if let Some(p) = &a.out_disks {
        DiskSidecar {
            seed,
            params: params.clone(),
            disks: disks.disks.clone(),
        }
        .save(p)?;
    }
    Ok(summary(
        "gen-star",
        json!({
            "seed": seed,
            "width": star.width,
            "height": star.height,
            "disks": disks.len(),
            "disks_per_pixel": params.disks_per_pixel(),
            "star": star,
        }),
    ))
}

fn warp_cmd(a: &WarpArgs) -> Result<Value> {
    let reference = GrayImage::load_png(&a.reference)?;
    let flow = dataset::read_flow(&a.flow)?;
    let out = warp::warp(&reference, &flow, a.interp.into())?;
    out.save_png(&a.out, a.depth.into())?;
    Ok(summary(
        "warp",
        json!({ "width": out.width(), "height": out.height(), "max_displacement": flow.max_abs() }),
    ))
}

fn add_noise(a: &AddNoise, seed: u64) -> Result<Value> {
    let img = GrayImage::load_png(&a.input)?;
    let model = a.noise.model();
    let noisy = warp::add_noise(&img, &model, seed)?;
    noisy.save_png(&a.out, a.depth.into())?;
    Ok(summary(
        "add-noise",
        json!({ "seed": seed, "a": model.a, "b": model.b, "width": img.width(), "height": img.height() }),
    ))
}

fn run_dic(reference: &GrayImage, deformed: &GrayImage, a: &DicArgs) -> Result<(DicField, Option<Value>)> {
    let cfg = a.dic.config()?;
    match a.preshift_bands {
        None => Ok((dic::dic_dense(reference, deformed, &cfg)?, None)),
        Some(n) => {
            let pre = dic::integer_preshift(reference, deformed, n, a.search_range)?;
            let realigned = dic::realign_bands(deformed, &pre)?;
            let mut out = dic::dic_dense(reference, &realigned, &cfg)?;
            out.field = dic::compose_preshift(&out.field, &pre)?;
            let shifts = serde_json::to_value(&pre.shifts)?;
            Ok((out, Some(shifts)))
        }
    }
}

fn dic_cmd(a: &DicArgs) -> Result<Value> {
    let reference = GrayImage::load_png(&a.reference)?;
    let deformed = GrayImage::load_png(&a.deformed)?;
    let start = Instant::now();
    let (out, shifts) = run_dic(&reference, &deformed, a)?;
    let elapsed = start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE);
    dataset::write_flow(&out.field, &a.out)?;
    let (w, h) = reference.dims();
    let record = ThroughputRecord::new(w, h, out.computed, elapsed)?;
    Ok(summary(
        "dic",
        json!({
            "window": a.dic.window,
            "order": a.dic.order,
            "points": out.computed,
            "non_converged": out.non_converged,
            "non_converged_fraction": out.non_converged_fraction(),
            "warning": out.warning,
            "band_shifts": shifts,
            "throughput": record,
        }),
    ))
}

fn roi_or(roi: Option<EvaluationROI>, dims: (usize, usize)) -> EvaluationROI {
    roi.unwrap_or(EvaluationROI::full(dims.0, dims.1))
}

fn evaluate(a: &Evaluate) -> Result<Value> {
    let est = dataset::read_flow(&a.est)?;
    let gt = dataset::read_flow(&a.gt)?;
    let roi = roi_or(a.roi.roi, gt.dims());
    let aee = metrology::aee(&est, &gt, &roi)?;
    let mae = metrology::mae_v(&est, &gt, &roi)?;
    if let Some(p) = &a.heat_map {
        let err = metrology::v_error_map(&est, &gt)?;
        metrology::save_heat_map(&err, est.width(), est.height(), a.heat_scale, p)?;
    }
    let throughput = match a.elapsed {
        Some(t) => Some(ThroughputRecord::new(est.width(), est.height(), est.width() * est.height(), t)?),
        None => None,
    };
    Ok(summary(
        "evaluate",
        json!({ "aee": aee, "mae": mae, "roi": roi, "points": roi.area(), "throughput": throughput }),
    ))
}

fn metrology_cmd(a: &Metrology) -> Result<Value> {
    let star = a.star.spec();
    let clean = dataset::read_flow(&a.est)?;
    let noisy = a.noisy.as_deref().map(dataset::read_flow).transpose()?;
    let settings = MetrologySettings {
        roi: a.roi.roi.unwrap_or(EvaluationROI::star_default(&star)),
        threshold: a.threshold,
        smooth_width: a.smooth_width,
    };
    let report = MetrologyReport::star(&clean, noisy.as_ref(), &star, &settings)?;
    if let Some(p) = &a.csv {
        report.write_curves_csv(&star, p)?;
    }
    if let Some(p) = &a.report {
        write_text(p, &serde_json::to_string_pretty(&report)?)?;
    }
    Ok(summary(
        "metrology",
        json!({
            "aee": report.aee,
            "mae": report.mae,
            "d": report.d,
            "sigma_u": report.sigma_u,
            "alpha": report.alpha,
            "roi": settings.roi,
            "threshold": settings.threshold,
            "smooth_width": settings.smooth_width,
        }),
    ))
}

fn pib(a: &Pib, seed: u64) -> Result<Value> {
    let star = a.star.spec();
    let setup = PibSetup {
        star,
        speckle: a.speckle.params(star.width, star.height),
        noise: a.noise.model(),
        n: a.n,
        seed,
    };
    let cfg = a.dic.config()?;
    let row = star.axis_row();
    let m = cfg.half_size;
    if row < m || row + m >= star.height {
        anyhow::bail!("star axis too close to the frame edge for the subset");
    }
    let estimator = |r: &GrayImage, d: &GrayImage| -> speckledic::Result<DisplacementField> {
        Ok(dic::dic_rows(r, d, &cfg, row..row + 1)?.field)
    };
    let out = metrology::pib_experiment(a.mode.into(), &setup, estimator)?;
    let cols = m..star.width - m;
    let ripple = metrology::ripple_rms(&out.mean_profile, a.ripple_window, cols.clone());
    if let Some(p) = &a.csv {
        let mut text = String::from("column,mean");
        for t in 0..out.profiles.len() {
            write!(text, ",trial{t}")?;
        }
        text.push('\n');
        for x in 0..star.width {
            write!(text, "{x},{}", out.mean_profile[x])?;
            for p in &out.profiles {
                match p {
                    Some(p) => write!(text, ",{}", p[x])?,
                    None => text.push(','),
                }
            }
            text.push('\n');
        }
        write_text(p, &text)?;
    }
    Ok(summary(
        "pib",
        json!({
            "mode": out.mode,
            "seed": seed,
            "n": a.n,
            "successful": out.successful(),
            "failed": out.failed.len(),
            "ripple_rms": ripple,
            "ripple_window": a.ripple_window,
        }),
    ))
}

fn strain(a: &Strain) -> Result<Value> {
    let flow = dataset::read_flow(&a.flow)?;
    let map = metrology::strain(&flow, a.sigma, a.component.into())?;
    if let Some(p) = &a.csv {
        let mut text = String::from("x,y,strain\n");
        for y in 0..map.height {
            for x in 0..map.width {
                writeln!(text, "{x},{y},{}", map.get(x, y))?;
            }
        }
        write_text(p, &text)?;
    }
    if let Some(p) = &a.heat_map {
        metrology::save_heat_map(&map.data, map.width, map.height, a.heat_scale, p)?;
    }
    let n = map.data.len().max(1) as f64;
    let mean = map.data.iter().sum::<f64>() / n;
    let (min, max) = map
        .data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    Ok(summary(
        "strain",
        json!({
            "component": format!("{:?}", a.component).to_lowercase(),
            "sigma": a.sigma,
            "width": map.width,
            "height": map.height,
            "mean": mean,
            "min": min,
            "max": max,
        }),
    ))
}

fn throughput(a: &Throughput) -> Result<Value> {
    let est = dataset::read_flow(&a.est)?;
    let (w, h) = est.dims();
    let record = ThroughputRecord::new(w, h, w * h, a.elapsed)?;
    Ok(summary("throughput", json!({ "throughput": record })))
}
