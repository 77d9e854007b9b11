use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ntk_lens::harness::data::{parse_idx_images, parse_idx_labels};
use ntk_lens::harness::*;
use ntk_lens::Error;
use sha2::{Digest, Sha256};

fn config(text: &str, kind: ExperimentKind) -> ntk_lens::Result<ExperimentConfig> {
    let mut c = ExperimentConfig::parse(text)?;
    c.validate(kind)?;
    Ok(c)
}

#[test]
fn invalid_configs_are_rejected_before_compute() {
    let cases = [
        ("kind = \"diagnose\"\nwidth = 3\n", ExperimentKind::Diagnose),
        ("kind = \"diagnose\"\n[diagnose]\nwidth = [64]\n", ExperimentKind::Diagnose),
        ("kind = \"bandit\"\n", ExperimentKind::Diagnose),
        ("kind = \"diagnose\"\nseeds = [1, 1]\n", ExperimentKind::Diagnose),
        ("kind = \"diagnose\"\nprecision = \"f32\"\n", ExperimentKind::Diagnose),
        ("kind = \"diagnose\"\n[diagnose]\ndepths = [1]\n", ExperimentKind::Diagnose),
        ("kind = \"diagnose\"\n[bandit]\n", ExperimentKind::Diagnose),
        ("kind = \"bandit\"\n[bandit]\nschedules = [\"greedy\"]\n", ExperimentKind::Bandit),
        ("kind = \"bandit\"\n[bandit]\nrounds = 10\nrows = 5\n", ExperimentKind::Bandit),
        ("kind = \"continual\"\n[continual]\nangles = [360.0]\n", ExperimentKind::Continual),
        ("kind = \"figure1\"\n[figure1]\nnoise = -1.0\n", ExperimentKind::Figure1),
    ];
    for (text, kind) in cases {
        assert!(matches!(config(text, kind), Err(Error::Config(_))), "{text}");
    }
    let ok = config("kind = \"continual\"\nseeds = [4]\n", ExperimentKind::Continual).unwrap();
    assert_eq!(ok.continual.unwrap().widths, vec![64, 256, 1024, 4096]);
}

#[test]
fn seed_lists_parse() {
    assert_eq!(parse_seed_list("0, 1,2").unwrap(), vec![0, 1, 2]);
    assert_eq!(parse_seed_list("").unwrap(), Vec::<u64>::new());
    assert!(parse_seed_list("1,x").is_err());
}

fn inventory(dir: &Path) -> BTreeMap<String, String> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_name().to_string_lossy() != manifest_name(dir))
        .map(|e| (e.file_name().to_string_lossy().into_owned(), hex::encode(Sha256::digest(fs::read(e.path()).unwrap()))))
        .collect()
}

fn manifest_name(dir: &Path) -> String {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .find(|n| n.ends_with("_manifest.json"))
        .expect("a manifest")
}

fn check_manifest(dir: &Path, manifest: &RunManifest) {
    let on_disk: RunManifest = serde_json::from_slice(&fs::read(dir.join(manifest_name(dir))).unwrap()).unwrap();
    assert_eq!(&on_disk, manifest);
    let listed: BTreeMap<String, String> = manifest.files.iter().map(|f| (f.name.clone(), f.sha256.clone())).collect();
    assert_eq!(listed, inventory(dir));
}

#[test]
fn empty_seed_list_writes_only_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("kind = \"diagnose\"\nseeds = []\n", ExperimentKind::Diagnose).unwrap();
    let outcome = run_experiment(&cfg, dir.path()).unwrap();
    assert!(!outcome.partial);
    assert!(outcome.manifest.files.is_empty());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
}

const SMALL_DIAGNOSE: &str = "kind = \"diagnose\"\nseeds = [0, 1]\n[diagnose]\nwidths = [256]\nk = 2\nsvg = true\n";

#[test]
fn diagnose_outputs_match_the_manifest_and_are_reproducible() {
    let cfg = config(SMALL_DIAGNOSE, ExperimentKind::Diagnose).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = run_experiment(&cfg, a.path()).unwrap();
    let second = run_experiment(&cfg, b.path()).unwrap();
    check_manifest(a.path(), &first.manifest);
    let names: Vec<&str> = first.manifest.files.iter().map(|f| f.name.as_str()).collect();
    for expected in ["stability_report.csv", "stability_long.csv", "plot_data.csv", "lambda_min.svg"] {
        assert!(names.contains(&expected), "{names:?}");
    }
    assert_eq!(first.manifest.files, second.manifest.files);
    assert_eq!(first.manifest.config_hash, second.manifest.config_hash);
    let plot = parse_plot_data(&fs::read(a.path().join("plot_data.csv")).unwrap()).unwrap();
    assert!(plot.iter().any(|r| r.cell == "depth=2;width=256" && r.statistic == "c_prime_median"));
}

#[test]
fn singular_cells_make_a_partial_run() {
    let cfg = config("kind = \"diagnose\"\nseeds = [0]\n[diagnose]\nwidths = [8]\n", ExperimentKind::Diagnose).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let outcome = run_experiment(&cfg, dir.path()).unwrap();
    assert!(outcome.partial);
    assert_eq!(outcome.manifest.failures.len(), 1);
    let report = fs::read_to_string(dir.path().join("stability_report.csv")).unwrap();
    assert!(report.contains("condition violated"));
}

#[test]
fn small_bandit_and_continual_runs_are_reproducible() {
    let cases = [
        (
            "kind = \"bandit\"\nseeds = [0]\n[bandit]\nrows = 300\nrounds = 60\nschedules = [\"random\", \"constant:0.1\", \"ml-online\"]\nwidth = 16\nepochs = 5\nretrain_every = 20\n",
            ExperimentKind::Bandit,
        ),
        (
            "kind = \"continual\"\nseeds = [0]\n[continual]\nside = 10\ntrain_per_task = 100\ntest_per_task = 50\nangles = [0.0, 90.0]\nwidths = [16]\nepochs = 1\n",
            ExperimentKind::Continual,
        ),
    ];
    for (text, kind) in cases {
        let cfg = config(text, kind).unwrap();
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let first = run_experiment(&cfg, a.path()).unwrap();
        let second = run_experiment(&cfg, b.path()).unwrap();
        assert!(!first.partial);
        check_manifest(a.path(), &first.manifest);
        assert_eq!(first.manifest.files, second.manifest.files, "{text}");
    }
}

fn row(cell: &str, value: f64) -> PlotRow {
    PlotRow {
        experiment: "e".into(),
        cell: cell.into(),
        statistic: "s".into(),
        value,
    }
}

#[test]
fn aggregation_uses_interpolated_quantiles() {
    let rows: Vec<PlotRow> = [5.0, 1.0, 4.0, 2.0, 3.0, f64::NAN].iter().map(|&v| row("c=1", v)).collect();
    let agg = aggregate(&rows).unwrap();
    let get = |s: &str| agg.iter().find(|r| r.statistic == s).unwrap().value;
    assert_eq!((get("s_median"), get("s_q25"), get("s_q75")), (3.0, 2.0, 4.0));
    let bytes = emit_plot_data(&agg).unwrap();
    assert_eq!(parse_plot_data(&bytes).unwrap(), agg);
    assert!(parse_plot_data(b"a,b\n1,2\n").is_err());
}

#[test]
fn tabular_csv_ingestion() {
    let text = "f1,label,f2\n1.0,b,10\n2.0,a,20\n3.0,b,30\n";
    let d = parse_tabular_csv(text.as_bytes(), &TabularSchema::default()).unwrap();
    assert_eq!(d.feature_names, vec!["f1", "f2"]);
    assert_eq!(d.classes, vec!["a", "b"]);
    assert_eq!(d.labels, vec![1, 0, 1]);
    assert_eq!(d.raw_features.row(1), &[2.0, 20.0]);
    assert_eq!(d.means, vec![2.0, 20.0]);
    assert_eq!(d.features.get(0, 0), -d.features.get(2, 0));
    assert_eq!(d.features.get(1, 1), 0.0);

    let letters: String = std::iter::once("x,label\n".to_string())
        .chain((0..52).map(|i| format!("{i},{}\n", (b'A' + (i % 26) as u8) as char)))
        .collect();
    let d = parse_tabular_csv(letters.as_bytes(), &TabularSchema::default()).unwrap();
    assert_eq!(d.num_classes(), 26);
    assert_eq!(d.to_labeled().unwrap().num_classes, 26);

    match parse_tabular_csv(b"x,label\n1,0\nNaN,1\n", &TabularSchema::default()) {
        Err(Error::Parse { line, column, .. }) => assert_eq!((line, column.as_str()), (3, "x")),
        other => panic!("{other:?}"),
    }
    match parse_tabular_csv(b"x,y\n1,0\n", &TabularSchema::default()) {
        Err(Error::Parse { column, .. }) => assert_eq!(column, "label"),
        other => panic!("{other:?}"),
    }
}

fn idx_images(n: u32, side: u32, pixels: &[u8]) -> Vec<u8> {
    let mut b = vec![0, 0, 8, 3];
    for v in [n, side, side] {
        b.extend(v.to_be_bytes());
    }
    b.extend(pixels);
    b
}

#[test]
fn idx_fixture_parses_and_loads() {
    let pixels: Vec<u8> = (0..8).map(|v| v * 36).collect();
    let (n, r, c, px) = parse_idx_images(&idx_images(2, 2, &pixels)).unwrap();
    assert_eq!((n, r, c), (2, 2, 2));
    assert_eq!(px[0], 0.0);
    assert_eq!(px[7], 252.0 / 255.0);
    assert!(matches!(parse_idx_images(&idx_images(2, 2, &pixels[..7])), Err(Error::Format(_))));
    assert!(matches!(parse_idx_images(&[0, 0, 8, 1, 0, 0, 0, 0]), Err(Error::Format(_))));
    let labels = [0, 0, 8, 1, 0, 0, 0, 2, 3, 7];
    assert_eq!(parse_idx_labels(&labels).unwrap(), vec![3, 7]);

    let dir = tempfile::tempdir().unwrap();
    let (ip, lp) = (dir.path().join("img.idx"), dir.path().join("lbl.idx"));
    fs::write(&ip, idx_images(2, 2, &pixels)).unwrap();
    fs::write(&lp, labels).unwrap();
    let set = load_idx_images(&ip, &lp).unwrap();
    assert_eq!(set.side, 2);
    assert_eq!(set.labels, vec![3, 7]);
    assert_eq!(set.x.row(1), &px[4..]);
}

#[test]
fn absolute_data_paths_pass_through() {
    let p = Path::new("/data/x.csv");
    assert_eq!(resolve_data_path(p), p);
}
