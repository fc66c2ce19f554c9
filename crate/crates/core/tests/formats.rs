mod common;

use std::fs;

use clusterdet::dataset::{
    load_coco, load_dataset, load_detections, load_visdrone, save_detections, visdrone, visdrone_label_tree,
    Detection, ImageDetections, VisdroneOptions,
};
use clusterdet::geometry::BBox;
use clusterdet::Error;
use common::fixture;

#[test]
fn visdrone_fixture_contents() {
    let tree = visdrone_label_tree();
    let recs = load_visdrone(&fixture("visdrone"), &tree, &VisdroneOptions::default()).unwrap();
    assert_eq!(recs.len(), 3);
    assert_eq!(recs[0].id, 1);
    assert_eq!(recs[0].file_name.as_deref(), Some("0000001_00000_d_0000001.jpg"));
    assert_eq!((recs[0].dims.width, recs[0].dims.height), (960.0, 540.0));
    // the zero-width box is dropped
    assert_eq!(recs[0].annotations.len(), 14);
    // the bus running off the right edge is clipped
    let bus = recs[0].annotations.iter().find(|a| a.category == visdrone::BUS).unwrap();
    assert_eq!(bus.bbox, BBox::new(937.0, 500.0, 23.0, 40.0));
    let flagged: Vec<u32> = recs[0].annotations.iter().filter(|a| a.ignore).map(|a| a.category).collect();
    assert_eq!(flagged, vec![0, 0, 0, 0, visdrone::OTHERS]);
    assert!(recs[2].annotations.is_empty());
    // loading twice is identical; the annotation directory itself also works
    assert_eq!(recs, load_dataset(&fixture("visdrone"), &tree, &VisdroneOptions::default()).unwrap());
    assert_eq!(recs, load_visdrone(&fixture("visdrone/annotations"), &tree, &VisdroneOptions::default()).unwrap());

    let dropped = VisdroneOptions {
        drop_ignored: true,
        ..Default::default()
    };
    let recs = load_visdrone(&fixture("visdrone"), &tree, &dropped).unwrap();
    assert!(recs.iter().flat_map(|r| &r.annotations).all(|a| !a.ignore));
}

#[test]
fn malformed_lines_report_position() {
    let tree = visdrone_label_tree();
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.txt"), "1,2,3,4,1,4,0,0\n1,2,x,4,1,4,0,0\n").unwrap();
    let err = load_visdrone(dir.path(), &tree, &VisdroneOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    assert!(err.to_string().contains("a.txt:2"));

    fs::write(dir.path().join("a.txt"), "1,2,3,4,1,13,0,0\n").unwrap();
    let err = load_visdrone(dir.path(), &tree, &VisdroneOptions::default()).unwrap_err();
    assert!(matches!(err, Error::UnknownCategory { id: 13, .. }));

    fs::write(dir.path().join("a.txt"), "1,2,3,4,1,4,0\n").unwrap();
    assert!(matches!(
        load_visdrone(dir.path(), &tree, &VisdroneOptions::default()),
        Err(Error::Parse { line: 1, .. })
    ));
}

#[test]
fn coco_errors() {
    let tree = visdrone_label_tree();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.json");
    fs::write(
        &p,
        r#"{"images":[{"id":1,"width":10,"height":10}],"annotations":[{"id":5,"image_id":2,"category_id":4,"bbox":[0,0,2,2]}],"categories":[]}"#,
    )
    .unwrap();
    assert!(matches!(
        load_coco(&p, &tree),
        Err(Error::MissingImage {
            annotation_id: 5,
            image_id: 2
        })
    ));
    fs::write(&p, "{").unwrap();
    assert!(matches!(load_coco(&p, &tree), Err(Error::Json { .. })));
    assert!(matches!(load_coco(&dir.path().join("none.json"), &tree), Err(Error::Io { .. })));
}

#[test]
fn detection_files_in_both_layouts() {
    let dir = tempfile::tempdir().unwrap();
    let grouped = vec![ImageDetections {
        image_id: 3,
        detections: vec![Detection::new(BBox::new(1.0, 2.0, 3.0, 4.0), visdrone::CAR, 0.5)],
    }];
    let p = dir.path().join("d.json");
    save_detections(&p, &grouped).unwrap();
    assert_eq!(load_detections(&p).unwrap(), grouped);

    let flat = dir.path().join("flat.json");
    fs::write(
        &flat,
        r#"[{"image_id":3,"category_id":4,"bbox":[1,2,3,4],"score":0.5},{"image_id":1,"category_id":1,"bbox":[0,0,1,1],"score":0.1}]"#,
    )
    .unwrap();
    let got = load_detections(&flat).unwrap();
    assert_eq!(got.len(), 2);
    assert_eq!(got[0].image_id, 1);
    assert_eq!(got[1], grouped[0]);
}
