use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use proptest::prelude::*;
use regpipe::io::{parse_descriptors_csv, parse_keypoints_csv, parse_transform, read_cloud};
use regpipe::report::{RunReport, RunStatus};
use regpipe::synth::pose_error;
use regpipe::RigidTransform;
use regpipe_cli::{grid_combinations, parse_grid, EXIT_ERROR, EXIT_FAILED, EXIT_OK};

const BIN: &str = env!("CARGO_BIN_EXE_regpipe");

const SCENE: &str = "seed=2\nextent=60\npath_halfwidth=25\nplane 0\nbox -10 -8 12 9 7 20\nbox 12 10 8 10 5 -35\n\
ellipsoid 10 -12 6 4 4 3\ncylinder 10 -12 0 0.4 4\n";

/// Keeps range-image pixels coarser than the widest sampling gap of the
/// small scenes below.
const COARSE: &str = "range_image.resolution_deg=0.06";

fn regpipe(args: &[&str]) -> (i32, String) {
    let out = Command::new(BIN).args(args).output().expect("binary runs");
    let text = String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap_or(-1), text)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes a scene file and synthesizes its pair into `dir/pair`.
fn synth_pair(dir: &Path, scene: &str, extra: &[&str]) -> PathBuf {
    let spec = dir.join("scene.txt");
    fs::write(&spec, scene).unwrap();
    let pair = dir.join("pair");
    let mut args = vec!["synth", "--spec", s(&spec), "--out", s(&pair), "--seed", "2"];
    args.extend_from_slice(extra);
    let (code, log) = regpipe(&args);
    assert_eq!(code, i32::from(EXIT_OK), "{log}");
    pair
}

#[test]
fn self_registration_exits_zero_with_identity() {
    let tmp = tempfile::tempdir().unwrap();
    let pair = synth_pair(tmp.path(), SCENE, &[]);
    let cloud = pair.join("reference.ply");
    let out = tmp.path().join("run");
    let (code, log) = regpipe(&["register", s(&cloud), s(&cloud), "--out", s(&out), "--set", COARSE]);
    assert_eq!(code, i32::from(EXIT_OK), "{log}");
    let t = parse_transform(&fs::read_to_string(out.join("transform.txt")).unwrap()).unwrap();
    let (rot, trans) = pose_error(&t, &RigidTransform::identity()).unwrap();
    assert!(rot < 0.5 && trans < 0.1, "{rot} {trans}");
    let report = RunReport::from_json(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.status, RunStatus::Ok);
    assert_eq!(report.config["range_image.resolution_deg"], "0.06");
    assert_eq!(report.config["support_radius"], "2");
    let csv = fs::read_to_string(out.join("timing.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(!csv.lines().nth(1).unwrap().ends_with(",F"));
}

#[test]
fn plane_pair_exits_two_and_marks_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let pair = synth_pair(tmp.path(), "extent=60\npath_halfwidth=15\nplane 0\n", &[]);
    let out = tmp.path().join("run");
    let (code, log) = regpipe(&[
        "register",
        s(&pair.join("reference.ply")),
        s(&pair.join("registered.ply")),
        "--out",
        s(&out),
        "--set",
        COARSE,
    ]);
    assert_eq!(code, i32::from(EXIT_FAILED), "{log}");
    let csv = fs::read_to_string(out.join("timing.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().ends_with(",F"), "{csv}");
    let report = RunReport::from_json(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_ne!(report.status, RunStatus::Ok);
}

#[test]
fn errors_exit_one_with_stage_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.ply");
    let (code, log) = regpipe(&["register", s(&missing), s(&missing), "--out", s(tmp.path())]);
    assert_eq!(code, i32::from(EXIT_ERROR));
    assert!(log.contains("io stage"), "{log}");
    let report = RunReport::from_json(&fs::read_to_string(tmp.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report.status, RunStatus::Error);

    let (code, log) = regpipe(&["register", s(&missing), s(&missing), "--set", "bogus=1"]);
    assert_eq!(code, i32::from(EXIT_ERROR));
    assert!(log.contains("bogus"), "{log}");

    // a range image that cannot be built fails in its own stage
    let pair = synth_pair(tmp.path(), SCENE, &[]);
    let cloud = pair.join("reference.ply");
    let (code, log) =
        regpipe(&["register", s(&cloud), s(&cloud), "--out", s(tmp.path()), "--set", "range_image.height_factor=-1"]);
    assert_eq!(code, i32::from(EXIT_ERROR));
    assert!(log.contains("range_image"), "{log}");
}

#[test]
fn grid_is_a_product_and_isolates_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let pair = synth_pair(tmp.path(), SCENE, &[]);
    let grid = tmp.path().join("grid.txt");
    // the negative radius breaks every row it appears in, nothing else
    fs::write(&grid, "support_radius=2,-1\ndetector=ISS,NARF\ndescriptor=FPFH\n").unwrap();
    let out = tmp.path().join("out");
    let cloud = pair.join("reference.ply");
    let (code, log) =
        regpipe(&["grid", s(&cloud), s(&cloud), "--grid", s(&grid), "--out", s(&out), "--set", COARSE]);
    assert_eq!(code, i32::from(EXIT_OK), "{log}");
    let csv = fs::read_to_string(out.join("grid_timing.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4, "{csv}");
    let keys: Vec<(&str, &str)> = rows.iter().map(|r| (r[0], r[2])).collect();
    assert_eq!(
        keys,
        [("ISS", "support_radius=2"), ("NARF", "support_radius=2"), ("ISS", "support_radius=-1"), ("NARF", "support_radius=-1")]
    );
    assert!(rows[2][5] == "F" && rows[3][5] == "F");
    // self-registration succeeds, so the intact rows carry times
    assert!(rows[0][5].parse::<f64>().is_ok() && rows[1][5].parse::<f64>().is_ok(), "{csv}");
}

#[test]
fn grid_rejects_unreadable_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing.xyz");
    let (code, _) = regpipe(&["grid", s(&missing), s(&missing)]);
    assert_eq!(code, i32::from(EXIT_ERROR));
    let grid = tmp.path().join("grid.txt");
    fs::write(&grid, "detector\n").unwrap();
    let (code, log) = regpipe(&["grid", s(&missing), s(&missing), "--grid", s(&grid)]);
    assert_eq!(code, i32::from(EXIT_ERROR));
    assert!(log.contains("line 1"), "{log}");
}

#[test]
fn detect_describe_rangeimage_and_evaluate_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let pair = synth_pair(tmp.path(), SCENE, &["--format", "xyz"]);
    let cloud = pair.join("reference.xyz");
    assert!(pair.join("truth.txt").exists() && pair.join("registered.xyz").exists());

    let kps = tmp.path().join("kps.csv");
    let (code, log) = regpipe(&["detect", s(&cloud), "-o", s(&kps), "--set", COARSE, "--set", "detector=ISS"]);
    assert_eq!(code, 0, "{log}");
    let keypoints = parse_keypoints_csv(&fs::read_to_string(&kps).unwrap()).unwrap();
    assert!(!keypoints.is_empty());

    let desc = tmp.path().join("desc.csv");
    let (code, log) = regpipe(&[
        "describe", s(&cloud), "-k", s(&kps), "-o", s(&desc), "--set", COARSE, "--set", "detector=ISS",
    ]);
    assert_eq!(code, 0, "{log}");
    let features = parse_descriptors_csv(&fs::read_to_string(&desc).unwrap()).unwrap();
    assert!(!features.is_empty() && features.iter().all(|f| f.len() == 33));

    let simple = tmp.path().join("simple.ply");
    let pgm = tmp.path().join("range.pgm");
    let (code, log) = regpipe(&["rangeimage", s(&cloud), "-o", s(&simple), "--pgm", s(&pgm), "--set", COARSE]);
    assert_eq!(code, 0, "{log}");
    let simplified = read_cloud(&simple).unwrap();
    let original = read_cloud(&cloud).unwrap();
    assert!(!simplified.is_empty() && simplified.len() < original.len());
    assert!(fs::read(&pgm).unwrap().starts_with(b"P5"));

    let spheres = tmp.path().join("spheres.txt");
    fs::write(&spheres, "-10 -8 7\n12 10 5 3\n").unwrap();
    let acc = tmp.path().join("acc.csv");
    let (code, log) = regpipe(&["evaluate", s(&cloud), s(&cloud), "-s", s(&spheres), "-o", s(&acc)]);
    assert_eq!(code, 0, "{log}");
    let text = fs::read_to_string(&acc).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.ends_with(",0.000000,0.000000")), "{text}");

    // the planted pose moves the registered cloud far from the reference
    let (code, _) = regpipe(&[
        "evaluate",
        s(&cloud),
        s(&pair.join("registered.xyz")),
        "-s",
        s(&spheres),
        "--cutoff",
        "0.01",
    ]);
    assert_eq!(code, i32::from(EXIT_FAILED));
}

#[test]
fn default_grid_is_the_four_by_three_matrix() {
    let combos = grid_combinations(&regpipe_cli::default_grid());
    assert_eq!(combos.len(), 12);
    assert_eq!(combos[0], [("detector".to_string(), "HARRIS".to_string()), ("descriptor".to_string(), "FPFH".to_string())]);
    assert_eq!(combos[11][0].1, "NARF");
    assert_eq!(combos[11][1].1, "NARF");
}

#[test]
fn grid_file_errors() {
    assert!(parse_grid("").is_err());
    assert!(parse_grid("detector=\n").is_err());
    assert!(parse_grid("detector=ISS\ndetector=NARF\n").is_err());
    let g = parse_grid("# sweep\ndetector = ISS, NARF  # two\n\nsupport_radius=1.5\n").unwrap();
    assert_eq!(g[0].1, ["ISS", "NARF"]);
    assert_eq!(g[1].1, ["1.5"]);
}

proptest! {
    #[test]
    fn grid_combinations_are_the_ordered_product(sizes in prop::collection::vec(1usize..5, 1..4)) {
        let text: String = sizes
            .iter()
            .enumerate()
            .map(|(k, &n)| format!("key{k}={}\n", (0..n).map(|v| v.to_string()).collect::<Vec<_>>().join(",")))
            .collect();
        let combos = grid_combinations(&parse_grid(&text).unwrap());
        prop_assert_eq!(combos.len(), sizes.iter().product::<usize>());
        // mixed-radix counting with the last key fastest
        for (i, c) in combos.iter().enumerate() {
            let mut rest = i;
            for (k, &n) in sizes.iter().enumerate().rev() {
                prop_assert_eq!(&c[k].1, &(rest % n).to_string());
                rest /= n;
            }
        }
    }
}
