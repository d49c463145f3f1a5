use bcwi_core::eval::PlaneMetric;
use bcwi_web::Demo;

#[test]
fn add_data_demo_views() {
    let demo = Demo::build(3, false, 0.3).unwrap();
    let sweep = demo.sweep_view(false, 0.9).unwrap();
    assert_eq!(sweep.curve.points.len(), 21);
    assert_eq!(sweep.curve.point(1.0).unwrap().test_nfr, 0.0);
    assert!(sweep.curve.point(sweep.selected_alpha).unwrap().dev_acc >= sweep.threshold);

    let at_one = demo.merge_view(1.0, true).unwrap();
    assert_eq!((at_one.test_nfr, at_one.negative_flips), (0.0, 0));
    let plain = demo.merge_view(0.3, false).unwrap();
    assert_eq!(plain.test_acc, sweep.curve.point(0.3).unwrap().test_acc);

    let scan = demo.landscape_view(4, PlaneMetric::TestNfr).unwrap();
    assert_eq!(scan.values.len(), 4);
    assert!(scan.values.iter().flatten().all(|v| v.is_finite()));
    let json = serde_json::to_value(&scan).unwrap();
    assert!(json.get("old_xy").is_some());
}

#[test]
fn add_classes_demo_builds() {
    let demo = Demo::build(1, true, 0.3).unwrap();
    let view = demo.sweep_view(true, 0.95).unwrap();
    assert_eq!(view.curve.points.len(), 21);
    assert!(demo.merge_view(1.5, false).is_err());
}
