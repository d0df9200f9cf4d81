use std::fs;
use std::path::Path;

use giteval::dataset::*;
use giteval::geometry::BoundingBox;
use proptest::prelude::*;

fn write_png(path: &Path, w: u32, h: u32) {
    image::RgbImage::from_fn(w, h, |x, y| image::Rgb([(x * 9) as u8, (y * 11) as u8, 90]))
        .save(path)
        .unwrap();
}

fn make_sequence(root: &Path, name: &str, n: usize) -> std::path::PathBuf {
    let dir = root.join(name);
    fs::create_dir_all(dir.join("frames")).unwrap();
    let mut gt = String::new();
    for k in 1..=n {
        write_png(&dir.join("frames").join(format!("{k:04}.png")), 16, 12);
        if k == 4 {
            gt.push_str("NaN,NaN,NaN,NaN\n");
        } else {
            gt.push_str(&format!("{},2,5,4\n", k));
        }
    }
    fs::write(dir.join("groundtruth.txt"), gt).unwrap();
    dir
}

fn opt_box() -> impl Strategy<Value = Option<BoundingBox>> {
    prop_oneof![
        1 => Just(None),
        4 => (-1e4f64..1e4, -1e4f64..1e4, 1e-3f64..1e4, 1e-3f64..1e4)
            .prop_map(|(x, y, w, h)| Some(BoundingBox::new(x, y, w, h))),
    ]
}

proptest! {
    #[test]
    fn parsers_never_panic(text in "[0-9a-zA-Z,.\\- \t\r\n]{0,200}") {
        let _ = parse_groundtruth(&text);
        let _ = parse_results("s", &text);
        let _ = parse_index_list(&text);
        let _ = parse_flags(&text, 5);
        let _ = parse_attributes_csv(&text);
    }

    #[test]
    fn track_round_trip(boxes in proptest::collection::vec(opt_box(), 1..40)) {
        let text = write_track(&boxes);
        prop_assert_eq!(parse_groundtruth(&text).unwrap(), boxes.clone());
        let (track, warnings) = parse_results("s", &text).unwrap();
        prop_assert!(warnings.is_empty());
        prop_assert_eq!(track.boxes, boxes);
    }

    #[test]
    fn flags_from_indices_and_mask_agree(mask in proptest::collection::vec(any::<bool>(), 3..30)) {
        let n = mask.len();
        let as_mask: String = mask.iter().map(|&b| if b { "1\n" } else { "0\n" }).collect();
        prop_assert_eq!(parse_flags(&as_mask, n).unwrap(), mask.clone());
        let as_indices: String = mask
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(k, _)| format!("{}\n", k + 1))
            .collect();
        // a list of indices that is itself a valid mask is read as a mask
        if as_indices.lines().count() != n {
            prop_assert_eq!(parse_flags(&as_indices, n).unwrap(), mask);
        }
    }
}

#[test]
fn loads_a_sequence_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = make_sequence(tmp.path(), "walk", 6);
    fs::write(dir.join("restart.txt"), "5\n3\n5\n").unwrap();
    fs::write(dir.join("shotcut.txt"), "2\n").unwrap();
    let r = load_sequence(&dir).unwrap();
    assert_eq!(r.id, "walk");
    assert_eq!(r.len(), 6);
    assert_eq!((r.frame_size.width, r.frame_size.height), (16, 12));
    assert_eq!(r.absent, vec![false, false, false, true, false, false]);
    assert_eq!(r.shotcut, vec![false, true, false, false, false, false]);
    assert_eq!(r.restart_schedule, vec![3, 5]);
    assert_eq!(r.gt_at(2), Some(BoundingBox::new(2.0, 2.0, 5.0, 4.0)));
}

#[test]
fn meta_json_overrides_frame_size() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = make_sequence(tmp.path(), "s", 3);
    fs::write(dir.join("meta.json"), r#"{"width": 640, "height": 480}"#).unwrap();
    let r = load_sequence(&dir).unwrap();
    assert_eq!((r.frame_size.width, r.frame_size.height), (640, 480));
}

#[test]
fn reports_every_problem_at_once() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = make_sequence(tmp.path(), "bad", 5);
    fs::write(dir.join("shotcut.txt"), "9\n").unwrap();
    fs::write(dir.join("restart.txt"), "4\n").unwrap();
    match load_sequence(&dir) {
        Err(DatasetError::Invalid { id, report }) => {
            assert_eq!(id, "bad");
            assert!(report.errors.len() >= 2, "{report}");
        }
        other => panic!("expected validation failure, got {other:?}"),
    }
}

#[test]
fn frame_count_mismatch_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = make_sequence(tmp.path(), "short", 4);
    fs::remove_file(dir.join("frames/0004.png")).unwrap();
    assert!(matches!(load_sequence(&dir), Err(DatasetError::Invalid { .. })));
}

#[test]
fn lists_sequences_in_name_order() {
    let tmp = tempfile::tempdir().unwrap();
    make_sequence(tmp.path(), "b", 2);
    make_sequence(tmp.path(), "a", 2);
    fs::create_dir(tmp.path().join("notes")).unwrap();
    let found = list_sequences(tmp.path()).unwrap();
    let names: Vec<_> = found
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names, ["a", "b"]);
    // a sequence directory is its own dataset
    assert_eq!(list_sequences(&tmp.path().join("a")).unwrap().len(), 1);
}

#[test]
fn frames_are_ordered_numerically() {
    let tmp = tempfile::tempdir().unwrap();
    for name in ["10.png", "9.png", "100.png", "thumbs.db"] {
        fs::write(tmp.path().join(name), b"").unwrap();
    }
    let frames = discover_frames(tmp.path()).unwrap();
    let names: Vec<_> = frames
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names, ["9.png", "10.png", "100.png"]);
}
