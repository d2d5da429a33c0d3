mod common;

use btn_core::architecture::{
    apply_width_multiplier, load_weights, save_weights, ExecOptions, LayerOp, Model, ModelSpec,
    WeightContainer,
};
use btn_core::cost::{instrumented_count, model_cost};
use btn_core::memory::{
    cascade_execute, cascade_execute_counted, cascade_peak_elements, CascadePlan,
};
use btn_core::tensor::max_abs_rel_diff;
use btn_core::{bottleneck_forward, Error, MaddCounter, Rng, Tensor};
use common::oracle;

#[test]
fn layer_table_shapes() {
    let plan = ModelSpec::mobilenet_v2(1.0, 224).plan().unwrap();
    let res: Vec<usize> = plan.iter().map(|l| l.output.height).collect();
    assert_eq!(res[0], 112);
    assert_eq!(plan.last().unwrap().output.channels, 1000);
    let blocks: Vec<_> = plan
        .iter()
        .filter_map(|l| match l.op {
            LayerOp::Bottleneck { shortcut, .. } => {
                Some((l.output.height, l.output.channels, shortcut))
            }
            _ => None,
        })
        .collect();
    assert_eq!(blocks.len(), 17);
    assert_eq!(blocks.iter().filter(|b| b.2).count(), 10);
    assert_eq!(blocks[16], (7, 320, false));
    let head = plan.iter().find(|l| l.name == "head").unwrap();
    assert_eq!((head.output.height, head.output.channels), (7, 1280));
}

#[test]
fn width_multiplier_rounding() {
    assert_eq!(apply_width_multiplier(32, 0.35), 16);
    assert_eq!(apply_width_multiplier(16, 0.35), 8);
    assert_eq!(apply_width_multiplier(1280, 1.4), 1792);
    assert_eq!(apply_width_multiplier(24, 1.4), 32);
    assert_eq!(
        ModelSpec::mobilenet_v2(0.5, 224).scaled_head_channels(),
        1280
    );
}

#[test]
fn cost_totals_and_instrumented_count() {
    let spec = ModelSpec::mobilenet_v2(1.0, 224);
    let r = model_cost(&spec).unwrap();
    assert_eq!(r.totals.madds, r.rows.iter().map(|x| x.madds).sum::<u64>());
    assert_eq!(
        r.totals.params,
        r.rows.iter().map(|x| x.params).sum::<u64>()
    );
    assert_eq!(r.rows[0].madds, 10_838_016);
    let m = Model::zeros(&spec).unwrap();
    assert_eq!(r.totals.params, m.param_count() as u64);

    let small = ModelSpec::mobilenet_v2(0.5, 96).with_classes(10);
    let model = Model::random(&small, 3).unwrap();
    let x = oracle::random_tensor(&mut Rng::new(4), [2, 96, 96, 3]);
    assert_eq!(
        instrumented_count(&model, &x).unwrap(),
        2 * model_cost(&small).unwrap().totals.madds
    );
}

#[test]
fn forward_shapes_and_errors() {
    let spec = ModelSpec::mobilenet_v2(0.35, 64).with_classes(7);
    let model = Model::random(&spec, 1).unwrap();
    let y = model
        .forward(&Tensor::new([2, 64, 64, 3], 0.5).unwrap())
        .unwrap();
    assert_eq!(y.shape().dims(), [2, 1, 1, 7]);
    assert!(y.is_finite());
    let bad = Tensor::new([1, 63, 64, 3], 0.0).unwrap();
    assert!(matches!(
        model.forward(&bad),
        Err(Error::DimensionMismatch(_))
    ));
    assert!(Model::zeros(&ModelSpec::mobilenet_v2(0.0, 224)).is_err());
    assert!(Model::zeros(&ModelSpec::mobilenet_v2(1.0, 0)).is_err());
}

#[test]
fn split_forward_matches_plain_forward() {
    let spec = ModelSpec::mobilenet_v2(0.35, 48).with_classes(10);
    let model = Model::random(&spec, 5).unwrap();
    let x = oracle::random_tensor(&mut Rng::new(6), [1, 48, 48, 3]);
    let plain = model.forward(&x).unwrap();
    for split in [2, 3, 6] {
        for first_block_only in [false, true] {
            let y = model
                .forward_with(
                    &x,
                    ExecOptions {
                        split: Some(split),
                        first_block_only,
                    },
                )
                .unwrap();
            assert!(max_abs_rel_diff(&plain, &y).unwrap() <= 1e-5);
        }
    }
}

#[test]
fn weights_round_trip() {
    let spec = ModelSpec::mobilenet_v2(0.35, 32).with_classes(10);
    let model = Model::random(&spec, 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bwgt");
    save_weights(&model, &path).unwrap();
    let container = WeightContainer::load(&path).unwrap();
    assert_eq!(container.payload.len(), model.param_count());
    let mut loaded = Model::zeros(&spec).unwrap();
    load_weights(&mut loaded, &container).unwrap();
    let x = oracle::random_tensor(&mut Rng::new(1), [1, 32, 32, 3]);
    assert_eq!(model.forward(&x).unwrap(), loaded.forward(&x).unwrap());

    let other = Model::zeros(&ModelSpec::mobilenet_v2(0.5, 32).with_classes(10)).unwrap();
    let mut target = other.clone();
    assert!(load_weights(&mut target, &container).is_err());
    assert_eq!(target.forward(&x).unwrap(), other.forward(&x).unwrap());

    let mut bytes = Vec::new();
    container.write(&mut bytes).unwrap();
    bytes.truncate(bytes.len() - 4);
    assert!(WeightContainer::read(&bytes[..]).is_err());
}

#[test]
fn cascade_equivalence_at_14x14_t6() {
    let mut rng = Rng::new(7);
    let p = oracle::random_block(&mut rng, 64, 64, 6.0, 1, true);
    let x = oracle::random_tensor(&mut rng, [1, 14, 14, 64]);
    let mono = bottleneck_forward(&x, &p).unwrap();
    let mut madds = Vec::new();
    let mut peaks = Vec::new();
    for split in [1, 2, 3, 5, 384] {
        let counter = MaddCounter::new();
        let plan = CascadePlan::new(384, split).unwrap();
        let (y, peak) = cascade_execute_counted(&x, &p, &plan, &counter).unwrap();
        assert!(
            max_abs_rel_diff(&mono, &y).unwrap() <= 1e-5,
            "split {split}"
        );
        madds.push(counter.get());
        peaks.push(peak);
    }
    assert!(madds.windows(2).all(|w| w[0] == w[1]));
    assert_eq!(madds[0], oracle::block_madds(x.shape(), &p));
    assert!(peaks.windows(2).all(|w| w[0] > w[1]), "{peaks:?}");
    // a single channel of the inner tensor at the per-channel extreme
    assert_eq!(
        cascade_peak_elements(14, 14, &p, 384),
        (2 * 14 * 14 * 64 + 2 * 14 * 14) as u64
    );
    assert!(matches!(
        CascadePlan::new(384, 385),
        Err(Error::SplitTooLarge { .. })
    ));
    let (y1, _) = cascade_execute(&x, &p, &CascadePlan::new(384, 1).unwrap()).unwrap();
    assert_eq!(y1, mono);
}
