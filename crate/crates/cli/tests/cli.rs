use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use patchstitch::fixtures::{
    write_class_tree, write_manifest_csv, GRADING_CLASSES, GRADING_COUNTS, SCALED_COUNTS,
};
use patchstitch::raster::{decode_image, encode_png, resize_bilinear};
use patchstitch::RasterImage;
use serde_json::Value;

fn patchstitch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_patchstitch"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn small_dataset(root: &Path, counts: &[usize]) {
    let names = ["BN", "WD", "MD", "PD"];
    write_class_tree(root, &names[..counts.len()], counts, 40, 40, 1).unwrap();
}

fn tree_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files: Vec<_> = walk(dir)
        .into_iter()
        .map(|p| {
            (
                p.strip_prefix(dir).unwrap().to_path_buf(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(walk(&path));
        } else {
            out.push(path);
        }
    }
    out
}

fn synth<'a>(input: &'a Path, out: &'a Path, extra: &[&'a str]) -> Vec<&'a str> {
    let mut args = vec![
        "synthesize",
        "--input",
        s(input),
        "--out",
        s(out),
        "--size",
        "32",
    ];
    args.extend_from_slice(extra);
    args
}

#[test]
fn synthesize_reports_and_reruns_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    small_dataset(&data, &[4, 5]);
    for method in ["rec", "slic"] {
        let a = tmp.path().join(format!("{method}_a"));
        let b = tmp.path().join(format!("{method}_b"));
        let extra = [
            "--method",
            method,
            "--p",
            "2",
            "--k",
            "3",
            "--seed",
            "5",
            "--superpixels",
            "16",
        ];
        let out = patchstitch(&synth(&data, &a, &extra));
        assert!(out.status.success(), "{}", stderr(&out));
        assert!(stdout(&out).contains("total"), "{}", stdout(&out));
        let mut rerun = extra.to_vec();
        rerun.extend(["--threads", "2", "--json"]);
        let out = patchstitch(&synth(&data, &b, &rerun));
        assert!(out.status.success(), "{}", stderr(&out));
        let summary: Value = serde_json::from_str(stdout(&out).trim()).unwrap();
        assert_eq!(summary["total"], 6);
        assert_eq!(summary["log"], format!("synth_{method}_2.jsonl"));
        assert!(summary["images_per_second"].as_f64().unwrap() >= 0.0);
        let (ta, tb) = (tree_bytes(&a), tree_bytes(&b));
        assert_eq!(ta.len(), 13);
        assert!(ta == tb, "{method} rerun differs");
    }
}

#[test]
fn zero_k_succeeds_with_empty_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    small_dataset(&data, &[2, 2]);
    let out_dir = tmp.path().join("out");
    let out = patchstitch(&synth(&data, &out_dir, &["--p", "2", "--k", "0", "--json"]));
    assert!(out.status.success(), "{}", stderr(&out));
    let summary: Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(summary["total"], 0);
}

#[test]
fn infeasible_batch_exits_2_without_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    small_dataset(&data, &[6, 3]);
    let out_dir = tmp.path().join("out");
    let out = patchstitch(&synth(&data, &out_dir, &["--p", "4", "--k", "2"]));
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("WD"), "{}", stderr(&out));
    assert!(!out_dir.exists());
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    small_dataset(&data, &[3]);
    let out_dir = tmp.path().join("out");
    for extra in [
        &["--p", "1"][..],
        &["--p", "2", "--size", "16"],
        &["--p", "2", "--method", "watershed"],
        &["--p", "2", "--tau", "-1"],
    ] {
        let out = patchstitch(&synth(&data, &out_dir, extra));
        assert_eq!(out.status.code(), Some(2), "{extra:?}: {}", stderr(&out));
    }
    let missing = tmp.path().join("nowhere");
    let out = patchstitch(&synth(&missing, &out_dir, &["--p", "2"]));
    assert_eq!(out.status.code(), Some(2));
    let out = patchstitch(&["synthesize", "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.exists());
}

#[test]
fn single_source_needs_override() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    small_dataset(&data, &[2]);
    let out_dir = tmp.path().join("out");
    let out = patchstitch(&synth(
        &data,
        &out_dir,
        &["--p", "1", "--k", "1", "--allow-single-source"],
    ));
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(out_dir.join("synth_rec_1_BN_000000.png").is_file());
}

#[test]
fn unwritable_output_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    small_dataset(&data, &[2]);
    let blocker = tmp.path().join("file");
    fs::write(&blocker, b"x").unwrap();
    let out = patchstitch(&synth(
        &data,
        &blocker.join("out"),
        &["--p", "2", "--k", "1"],
    ));
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    small_dataset(&data, &[4]);
    let out_dir = tmp.path().join("out");
    let cfg = tmp.path().join("run.conf");
    fs::write(
        &cfg,
        format!(
            "# batch settings\ninput = {}\nmethod = slic\np = 2\nk = 2\nsize = 32\nsuperpixels = 16\n",
            data.display()
        ),
    )
    .unwrap();
    let out = patchstitch(&[
        "synthesize",
        "--config",
        s(&cfg),
        "--out",
        s(&out_dir),
        "--p",
        "4",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(out_dir.join("synth_slic_4.jsonl").is_file());
    assert!(out_dir.join("synth_slic_4_BN_000001.png").is_file());

    fs::write(&cfg, "bogus = 1\n").unwrap();
    let out = patchstitch(&["synthesize", "--config", s(&cfg), "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stats_table_and_json() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("scaled");
    write_class_tree(&data, &GRADING_CLASSES, &SCALED_COUNTS, 8, 8, 2).unwrap();
    let out = patchstitch(&["stats", "--input", s(&data), "--json"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let stats: Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(stats["total"], 98);
    assert_eq!(stats["imbalance_ratio"], 2.5625);
    let out = patchstitch(&["stats", "--input", s(&data)]);
    let table = stdout(&out);
    assert!(
        table.contains("total") && table.contains("98") && table.contains("2.5625"),
        "{table}"
    );

    let single = tmp.path().join("single");
    small_dataset(&single, &[3]);
    let out = patchstitch(&["stats", "--input", s(&single), "--json"]);
    let stats: Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(stats["imbalance_ratio"], 1.0);

    let csv = tmp.path().join("train.csv");
    write_manifest_csv(&csv, &GRADING_CLASSES, &GRADING_COUNTS).unwrap();
    let out = patchstitch(&["stats", "--csv", s(&csv), "--json"]);
    let stats: Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(stats["total"], 9857);

    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "file,class\na.png,BN\n").unwrap();
    assert_eq!(
        patchstitch(&["stats", "--csv", s(&bad)]).status.code(),
        Some(2)
    );
}

fn write_png(path: &Path, image: &RasterImage) {
    fs::write(path, encode_png(image).unwrap()).unwrap();
}

#[test]
fn preview_writes_montage_and_maps() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    small_dataset(&data, &[4]);
    let inputs: Vec<String> = (0..4)
        .map(|j| data.join(format!("BN/BN_{j:05}.png")).display().to_string())
        .collect();
    let montage = tmp.path().join("fig/preview.png");
    let mut args = vec![
        "preview",
        "--p",
        "4",
        "--size",
        "64",
        "--superpixels",
        "32",
        "--out",
        s(&montage),
    ];
    args.extend(inputs.iter().map(String::as_str));
    let out = patchstitch(&args);
    assert!(out.status.success(), "{}", stderr(&out));
    // 2×2 grid on 64×64: one full column and one full row, sharing a pixel.
    assert!(
        stdout(&out).contains("rec boundary pixels 127"),
        "{}",
        stdout(&out)
    );
    let image = decode_image(&fs::read(&montage).unwrap()).unwrap();
    assert_eq!(image.dimensions(), (6 * 64 + 7 * 4, 2 * 64 + 3 * 4));
    for side in [
        "rec_partition.png",
        "slic_partition.png",
        "superpixels.png",
        "superpixels.txt",
    ] {
        assert!(
            tmp.path().join(format!("fig/preview_{side}")).is_file(),
            "{side}"
        );
    }

    let out = patchstitch(&["preview", "--p", "4", &inputs[0], &inputs[1]]);
    assert_eq!(out.status.code(), Some(2));
    let missing = tmp.path().join("missing.png");
    let out = patchstitch(&["preview", "--p", "2", &inputs[0], s(&missing)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("missing.png"), "{}", stderr(&out));
}

#[test]
fn preview_of_identical_sources_reproduces_input() {
    let tmp = tempfile::tempdir().unwrap();
    let src = RasterImage::from_fn(48, 48, |x, y| [(x * 5) as u8, (y * 5) as u8, 90]);
    let path = tmp.path().join("same.png");
    write_png(&path, &src);
    let montage = tmp.path().join("m.png");
    let out = patchstitch(&[
        "preview",
        "--p",
        "2",
        "--size",
        "64",
        "--superpixels",
        "16",
        "--out",
        s(&montage),
        s(&path),
        s(&path),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let image = decode_image(&fs::read(&montage).unwrap()).unwrap();
    let expected = resize_bilinear(&src, 64, 64).unwrap();
    // Stitched panels are the last of each row: column p + 1 = 3.
    let x0 = 4 + 3 * (64 + 4);
    for row in 0..2u32 {
        let y0 = 4 + row * (64 + 4);
        for y in 0..64 {
            for x in 0..64 {
                assert_eq!(
                    image.get(x0 + x, y0 + y),
                    expected.get(x, y),
                    "row {row} ({x},{y})"
                );
            }
        }
    }
}

#[test]
fn augment_mirrors_tree_and_counts_ops() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    write_class_tree(&data, &["a", "b"], &[60, 40], 12, 12, 4).unwrap();
    fs::write(data.join("a/broken.png"), b"not a png").unwrap();
    fs::write(data.join("notes.txt"), b"ignored").unwrap();
    let out_a = tmp.path().join("aug_a");
    let out = patchstitch(&[
        "augment",
        "--input",
        s(&data),
        "--out",
        s(&out_a),
        "--seed",
        "3",
        "--json",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("broken.png"), "{}", stderr(&out));
    let summary: Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(summary["outputs"], 100);
    assert_eq!(summary["skipped"], 1);
    let histogram = summary["histogram"].as_object().unwrap();
    for op in [
        "flip_h",
        "flip_v",
        "blur",
        "noise",
        "dropout",
        "hue_saturation",
        "contrast",
    ] {
        assert!(histogram.contains_key(op), "{op}");
    }
    assert!(histogram["flip_h"].as_u64().unwrap() > 0);
    assert!(out_a.join("a/a_00059.png").is_file());
    assert!(out_a.join("b/b_00000.png").is_file());

    let out_b = tmp.path().join("aug_b");
    let out = patchstitch(&[
        "augment",
        "--input",
        s(&data),
        "--out",
        s(&out_b),
        "--seed",
        "3",
        "--threads",
        "3",
    ]);
    assert!(out.status.success());
    assert!(tree_bytes(&out_a) == tree_bytes(&out_b));
}

#[test]
fn augment_empty_dir_and_config() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    let out = patchstitch(&[
        "augment",
        "--input",
        s(&empty),
        "--out",
        s(&tmp.path().join("o")),
        "--json",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let summary: Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(summary["outputs"], 0);

    let img_dir = tmp.path().join("imgs");
    fs::create_dir_all(&img_dir).unwrap();
    let src = RasterImage::from_fn(9, 7, |x, y| [x as u8 * 20, y as u8 * 30, 7]);
    write_png(&img_dir.join("x.png"), &src);
    let cfg = tmp.path().join("aug.conf");
    fs::write(
        &cfg,
        "flip_h_prob = 0\nflip_v_prob = 0\noptional_ops_max = 0\n",
    )
    .unwrap();
    let dest = tmp.path().join("ident");
    let out = patchstitch(&[
        "augment",
        "--config",
        s(&cfg),
        "--input",
        s(&img_dir),
        "--out",
        s(&dest),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(
        decode_image(&fs::read(dest.join("x.png")).unwrap()).unwrap(),
        src
    );

    fs::write(&cfg, "optional_ops_max = 9\n").unwrap();
    let out = patchstitch(&[
        "augment",
        "--config",
        s(&cfg),
        "--input",
        s(&img_dir),
        "--out",
        s(&dest),
    ]);
    assert_eq!(out.status.code(), Some(2));
}
