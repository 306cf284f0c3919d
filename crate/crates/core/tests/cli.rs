use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_factored3d");

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(BIN).args(args).current_dir(cwd).output().expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> Vec<u8> {
    let out = run(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

fn schema_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(name)
}

fn assert_valid(schema: &str, doc: &[u8]) {
    let schema_value: Value = serde_json::from_slice(&std::fs::read(schema_path(schema)).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema_value).expect("schema compiles");
    let instance: Value = serde_json::from_slice(doc).expect("output is JSON");
    let errors: Vec<String> = validator.iter_errors(&instance).map(|e| format!("{} at {}", e, e.instance_path)).collect();
    assert!(errors.is_empty(), "{schema}: {errors:?}");
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

fn gen_small(dir: &Path, seed: &str, count: &str, extra: &[&str]) -> Vec<u8> {
    let mut args = vec!["gen", "--seed", seed, "--count", count, "--out", "scenes", "--resolution", "96", "72"];
    args.extend_from_slice(extra);
    ok(&args, dir)
}

#[test]
fn every_report_validates_against_its_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let manifest = gen_small(d, "11", "3", &[]);
    assert_valid("gen_report.schema.json", &manifest);
    for entry in std::fs::read_dir(d.join("scenes")).unwrap() {
        assert_valid("scene.schema.json", &read(&entry.unwrap().path()));
    }

    assert_valid("eval_report.schema.json", &ok(&["eval", "--pred", "scenes", "--gt", "scenes"], d));
    assert_valid("ap_report.schema.json", &ok(&["ap", "--pred", "scenes", "--gt", "scenes", "--per-class"], d));
    assert_valid(
        "compare_report.schema.json",
        &ok(&["compare-reps", "--gt", "scenes", "--csv", "curves.csv"], d),
    );
    assert_valid("grad_check_report.schema.json", &ok(&["grad-check", "--points", "3"], d));

    ok(&["bins", "--mixture", "5", "--out", "bins.json"], d);
    assert_valid("rotation_bins.schema.json", &read(&d.join("bins.json")));

    let props = br#"[{"box": [0, 0, 40, 40], "score": 0.9}, {"box": [5, 5, 90, 70]}]"#;
    assert_valid("proposals.schema.json", props);
    std::fs::write(d.join("props.json"), props).unwrap();
    assert_valid(
        "proposals_report.schema.json",
        &ok(&["proposals", "--proposals", "props.json", "--scene", "scenes/scene_0000.json"], d),
    );

    let cfg = serde_json::to_vec(&factored3d::scene::GeneratorConfig::default()).unwrap();
    assert_valid("generator_config.schema.json", &cfg);
}

#[test]
fn external_scenes_validate_and_load() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    gen_small(d, "2", "1", &["--external"]);
    let doc = read(&d.join("scenes/scene_0000.json"));
    assert_valid("scene.schema.json", &doc);
    assert!(d.join("scenes/scene_0000.layout.pfm").exists());
    assert!(d.join("scenes/scene_0000.obj0.fvox").exists());
    ok(&["render", "--scene", "scenes/scene_0000.json", "--what", "layout", "--out", "layout.pfm"], d);
    assert_eq!(read(&d.join("layout.pfm")), read(&d.join("scenes/scene_0000.layout.pfm")));
}

#[test]
fn seeded_commands_are_byte_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        let manifest = gen_small(d, "5", "3", &[]);
        std::fs::write(d.join("manifest.json"), manifest).unwrap();
        let grad = ok(&["grad-check", "--seed", "9", "--points", "4"], d);
        std::fs::write(d.join("grad.json"), grad).unwrap();
        ok(&["bins", "--seed", "4", "--mixture", "6", "--out", "bins.json"], d);
        ok(&["bins", "--seed", "4", "--k", "3", "--scenes", "scenes", "--out", "scene_bins.json"], d);
        ok(&["compare-reps", "--gt", "scenes", "--csv", "curves.csv", "--report", "cmp.json"], d);
    }
    for f in [
        "manifest.json",
        "grad.json",
        "bins.json",
        "scene_bins.json",
        "curves.csv",
        "cmp.json",
        "scenes/scene_0000.json",
        "scenes/scene_0001.json",
        "scenes/scene_0002.json",
    ] {
        assert_eq!(read(&a.path().join(f)), read(&b.path().join(f)), "{f} differs between runs");
    }
}

#[test]
fn conversions_produce_consistent_files() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    gen_small(d, "8", "1", &[]);
    let scene = "scenes/scene_0000.json";
    ok(&["render", "--scene", scene, "--out", "depth.pfm"], d);
    ok(&["render", "--scene", scene, "--what", "disparity", "--out", "disp.pfm"], d);
    ok(&["render", "--scene", scene, "--renderer", "voxel", "--out", "vdepth.pfm"], d);
    ok(&["convert", "--to", "scene-voxels", "--scene", scene, "--out", "scene.fvox"], d);
    ok(&["convert", "--to", "depth", "--scene", scene, "--out", "conv.pfm"], d);
    ok(&["convert", "--to", "voxels", "--depth", "depth.pfm", "--scene", scene, "--out", "dv.fvox"], d);
    ok(&["convert", "--to", "points", "--depth", "depth.pfm", "--scene", scene, "--out", "pts.csv"], d);

    assert_eq!(read(&d.join("vdepth.pfm")), read(&d.join("conv.pfm")));
    let grid = factored3d::io::load_fvox(&d.join("scene.fvox")).unwrap();
    assert_eq!(read(&d.join("scene.fvox")).len(), 72 + 4 * 64 * 32 * 64);
    assert!(grid.occupied_count(0.5) > 0);
    let depth = factored3d::io::decode_pfm(&read(&d.join("depth.pfm"))).unwrap();
    let disp = factored3d::io::decode_pfm(&read(&d.join("disp.pfm"))).unwrap();
    for (z, s) in depth.data.iter().zip(&disp.data) {
        if *z > 0.0 {
            assert!((*z as f64 * *s as f64 - 1.0).abs() < 1e-6);
        }
    }
    let csv = String::from_utf8(read(&d.join("pts.csv"))).unwrap();
    assert_eq!(csv.lines().next(), Some("x,y,z"));
    assert_eq!(csv.lines().count() - 1, depth.data.iter().filter(|z| **z > 0.0).count());
}

#[test]
fn ap_wildcards_and_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    gen_small(d, "1", "2", &[]);
    let report: Value = serde_json::from_slice(&ok(
        &["ap", "--pred", "scenes", "--gt", "scenes", "--wildcard", "rot", "--csv", "sweep.csv"],
        d,
    ))
    .unwrap();
    assert_eq!(report["thresholds"]["rot"], Value::Null);
    assert_eq!(report["ap"], 1.0);
    let csv = String::from_utf8(read(&d.join("sweep.csv"))).unwrap();
    assert_eq!(csv.lines().count(), 12);
}

#[test]
fn exit_codes_distinguish_io_from_validation() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let code = |args: &[&str]| run(args, d).status.code().unwrap();
    assert_eq!(code(&["render", "--scene", "missing.json", "--out", "x.pfm"]), 2);
    std::fs::write(d.join("bad.json"), b"{\"format\": \"factored-scene\", \"version\": 7}").unwrap();
    let out = run(&["render", "--scene", "bad.json", "--out", "x.pfm"], d);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("version"));
    assert!(out.stdout.is_empty());
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&["gen", "--count", "1"]), 1);
    assert_eq!(code(&["grad-check", "--points", "2", "--tolerance", "1e-30"]), 1);
    assert_eq!(code(&["--help"]), 0);
}
