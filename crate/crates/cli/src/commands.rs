use std::fs::File;
use std::io::BufWriter;

use btn_core::architecture::{load_weights, ExecOptions, WeightContainer};
use btn_core::cost::model_cost;
use btn_core::memory::{memory_table, model_graph, MemoryOptions};
use btn_core::rng::RNG_ALGORITHM;
use btn_core::theory::{
    activation_pattern_stats, calibrate_batch_norm, collapse_fraction_mc, random_batch,
    spiral_experiment, Aggregation, SPIRAL_POINTS, SPIRAL_TURNS,
};
use btn_core::{load_tensor, save_tensor, Model, ModelSpec, Result, Rng, Tensor};
use serde_json::json;

use crate::args::{AggregationArg, InferArgs, MemoryArgs, ModelArgs, TheoryCommand};
use crate::output::{num, opt, Report};

fn spec(a: &ModelArgs) -> Result<ModelSpec> {
    let spec = ModelSpec::mobilenet_v2(a.alpha, a.res).with_classes(a.classes);
    spec.validate()?;
    Ok(spec)
}

fn millions(x: u64) -> String {
    format!("{:.2}M", x as f64 / 1e6)
}

pub fn summarize(a: &ModelArgs) -> Result<Report> {
    let r = model_cost(&spec(a)?)?;
    let mut rep = Report::new(
        "summarize",
        serde_json::to_value(&r).expect("cost report serializes"),
    )
    .field("alpha", a.alpha)
    .field("resolution", a.res)
    .field("classes", a.classes);
    rep.columns = vec![
        "layer",
        "height",
        "width",
        "channels",
        "madds",
        "params",
        "bn_scale_params",
    ];
    for row in &r.rows {
        rep.rows.push(vec![
            row.name.clone(),
            row.output.height.to_string(),
            row.output.width.to_string(),
            row.output.channels.to_string(),
            row.madds.to_string(),
            row.params.to_string(),
            row.bn_scale_params.to_string(),
        ]);
    }
    let t = &r.totals;
    rep.rows.push(vec![
        "total".into(),
        String::new(),
        String::new(),
        String::new(),
        t.madds.to_string(),
        t.params.to_string(),
        t.bn_scale_params.to_string(),
    ]);
    rep.footer = vec![
        format!("multiply-adds: {}", millions(t.madds)),
        format!(
            "parameters: {} ({} with batch-norm scales)",
            millions(t.params),
            millions(t.params_with_bn_scale)
        ),
    ];
    Ok(rep)
}

pub fn infer(a: &InferArgs) -> Result<Report> {
    let spec = spec(&a.model)?;
    let model = match &a.weights {
        Some(path) => {
            let mut m = Model::zeros(&spec)?;
            load_weights(&mut m, &WeightContainer::load(path)?)?;
            m
        }
        None => Model::random(&spec, a.seed)?,
    };
    let input = match &a.input {
        Some(path) => load_tensor(path)?,
        None => Tensor::random_gaussian(
            [1, a.model.res, a.model.res, 3],
            &mut Rng::new(a.input_seed),
            0.0,
            1.0,
        )?,
    };
    let options = ExecOptions {
        split: a.split,
        first_block_only: a.first_block_only,
    };
    if let Some(s) = a.split {
        if s == 0 {
            return Err(btn_core::Error::InvalidParameter {
                name: "split",
                reason: "need at least one group".into(),
            });
        }
    }
    let logits = model.forward_with(&input, options)?;
    let tmp = a.output.with_extension("partial");
    save_tensor(&tmp, &logits)?;
    std::fs::rename(&tmp, &a.output)?;

    let classes = logits.shape().channels;
    let mut top = Vec::new();
    for (b, image) in logits.data().chunks_exact(classes).enumerate() {
        let mut idx: Vec<usize> = (0..classes).collect();
        idx.sort_by(|&i, &j| image[j].total_cmp(&image[i]).then(i.cmp(&j)));
        for (rank, &c) in idx.iter().take(5).enumerate() {
            top.push((b, rank + 1, c, image[c]));
        }
    }
    let json = json!({
        "alpha": a.model.alpha,
        "resolution": a.model.res,
        "classes": a.model.classes,
        "weights": a.weights.as_ref().map(|p| p.display().to_string()),
        "seed": a.weights.is_none().then_some(a.seed),
        "input": a.input.as_ref().map(|p| p.display().to_string()),
        "input_seed": a.input.is_none().then_some(a.input_seed),
        "rng": RNG_ALGORITHM,
        "split": a.split,
        "first_block_only": a.first_block_only,
        "output": a.output.display().to_string(),
        "top5": top.iter().map(|&(b, rank, c, v)| json!({"image": b, "rank": rank, "class": c, "logit": v})).collect::<Vec<_>>(),
    });
    let mut rep = Report::new("infer", json)
        .field("alpha", a.model.alpha)
        .field("resolution", a.model.res)
        .field("classes", a.model.classes);
    rep = match &a.weights {
        Some(p) => rep.field("weights", p.display()),
        None => rep.field("seed", a.seed),
    };
    rep = match &a.input {
        Some(p) => rep.field("input", p.display()),
        None => rep.field("input_seed", a.input_seed),
    };
    rep = rep
        .field("rng", RNG_ALGORITHM)
        .field("split", opt(a.split))
        .field("output", a.output.display());
    rep.columns = vec!["image", "rank", "class", "logit"];
    rep.rows = top
        .iter()
        .map(|&(b, rank, c, v)| {
            vec![
                b.to_string(),
                rank.to_string(),
                c.to_string(),
                num(v as f64),
            ]
        })
        .collect();
    Ok(rep)
}

pub fn memory_plan(a: &MemoryArgs) -> Result<Report> {
    let spec = spec(&a.model)?;
    let options = MemoryOptions {
        bytes_per_activation: a.act_bits / 8,
        split: a.split,
        first_layer_trick: !a.no_first_layer_trick,
    };
    let r = memory_table(&spec, options)?;
    if let Some(path) = &a.graph_out {
        let g = model_graph(&spec, options.bytes_per_activation)?;
        g.dump_jsonl(BufWriter::new(File::create(path)?))?;
    }
    let first = r.blocks.first().map(|b| b.peak_bytes).unwrap_or(0);
    let mut rep = Report::new(
        "memory-plan",
        serde_json::to_value(&r).expect("memory report serializes"),
    )
    .field("alpha", a.model.alpha)
    .field("resolution", a.model.res)
    .field("act_bits", a.act_bits)
    .field("split", a.split)
    .field("first_layer_trick", options.first_layer_trick)
    .field("max_row_bytes", r.max_row_bytes)
    .field("max_row_kib", num(r.max_row_kib))
    .field("first_block_peak_bytes", first)
    .field("schedule_peak_bytes", r.schedule.peak_bytes)
    .field("linear_bound_bytes", r.linear_bound_bytes);
    rep.columns = vec!["resolution", "channels", "bytes", "kib", "streamed"];
    rep.rows = r
        .rows
        .iter()
        .map(|row| {
            vec![
                row.resolution.to_string(),
                row.channels.to_string(),
                opt(row.bytes),
                opt(row.kib.map(num)),
                row.streamed.to_string(),
            ]
        })
        .collect();
    rep.footer.push(format!(
        "max materialized: {} bytes ({} KiB)",
        r.max_row_bytes,
        num(r.max_row_kib)
    ));
    rep.footer
        .push(format!("per-block peak with {} group(s):", a.split));
    for b in &r.blocks {
        rep.footer.push(format!(
            "  {:<10} {:>3}x{:<3} {:>4} -> {:<4} hidden {:>4} split {:>4}  {} bytes",
            b.name,
            b.input.height,
            b.input.width,
            b.input.channels,
            b.output.channels,
            b.hidden,
            b.split,
            b.peak_bytes
        ));
    }
    Ok(rep)
}

pub fn theory(cmd: &TheoryCommand) -> Result<Report> {
    match cmd {
        TheoryCommand::Collapse { n, m, trials, seed } => {
            let e = collapse_fraction_mc(*n, *m, *trials, *seed)?;
            let mut rep = Report::new(
                "theory collapse",
                serde_json::to_value(&e).expect("serializes"),
            )
            .field("seed", seed)
            .field("rng", RNG_ALGORITHM)
            .field("trials", trials);
            rep.json["rng"] = json!(RNG_ALGORITHM);
            rep.columns = vec![
                "n",
                "m",
                "trials",
                "preserved",
                "preserved_fraction",
                "expected",
                "std_error",
            ];
            rep.rows = vec![vec![
                e.n.to_string(),
                e.m.to_string(),
                e.trials.to_string(),
                e.preserved.to_string(),
                num(e.preserved_fraction),
                num(e.expected),
                num(e.std_error),
            ]];
            Ok(rep)
        }
        TheoryCommand::Spiral { dims, seed } => {
            let results = spiral_experiment(dims, *seed)?;
            let json = json!({
                "seed": seed,
                "rng": RNG_ALGORITHM,
                "points": SPIRAL_POINTS,
                "turns": SPIRAL_TURNS,
                "results": results,
            });
            let mut rep = Report::new("theory spiral", json)
                .field("seed", seed)
                .field("rng", RNG_ALGORITHM)
                .field("points", SPIRAL_POINTS)
                .field("turns", SPIRAL_TURNS);
            rep.columns = vec!["n", "mse", "pinv_mse"];
            rep.rows = results
                .iter()
                .map(|r| vec![r.n.to_string(), num(r.mse), num(r.pinv_mse)])
                .collect();
            Ok(rep)
        }
        TheoryCommand::Activations {
            model,
            weights,
            batch,
            seed,
            aggregation,
        } => {
            let spec = spec(model)?;
            let aggregation = match aggregation {
                AggregationArg::PerLocation => Aggregation::PerLocation,
                AggregationArg::PerFeatureMap => Aggregation::PerFeatureMap,
            };
            let mut m = match weights {
                Some(p) => {
                    let mut m = Model::zeros(&spec)?;
                    load_weights(&mut m, &WeightContainer::load(p)?)?;
                    m
                }
                None => Model::random(&spec, *seed)?,
            };
            let inputs = random_batch(&m, *batch, &mut Rng::derive(*seed, 1))?;
            if weights.is_none() {
                calibrate_batch_norm(&mut m, &inputs)?;
            }
            let stats = activation_pattern_stats(&m, &inputs, aggregation)?;
            let init = if weights.is_some() {
                "weights file"
            } else {
                "he-normal, batch-norm calibrated"
            };
            let mut body = serde_json::to_value(&stats).expect("serializes");
            body["alpha"] = json!(model.alpha);
            body["resolution"] = json!(model.res);
            body["seed"] = json!(seed);
            body["rng"] = json!(RNG_ALGORITHM);
            body["init"] = json!(init);
            let mut rep = Report::new("theory activations", body)
                .field("alpha", model.alpha)
                .field("resolution", model.res)
                .field("batch", batch)
                .field("seed", seed)
                .field("rng", RNG_ALGORITHM)
                .field("init", init)
                .field("aggregation", format!("{aggregation:?}"));
            rep.columns = vec![
                "index",
                "layer",
                "channels",
                "threshold",
                "min",
                "mean",
                "max",
                "mean_fraction",
            ];
            rep.rows = stats
                .layers
                .iter()
                .map(|l| {
                    vec![
                        l.index.to_string(),
                        l.name.clone(),
                        l.channels.to_string(),
                        num(l.threshold),
                        l.min.to_string(),
                        num(l.mean),
                        l.max.to_string(),
                        num(l.mean_fraction),
                    ]
                })
                .collect();
            Ok(rep)
        }
    }
}
