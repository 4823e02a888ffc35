// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::{Path, PathBuf};
use std::process::Command as Process;

use clap::Parser;
use sparsedict_cli::model::init_dictionary;
use sparsedict_cli::{run, Cli, CliResult};
use sparsedict_core::container::Dtype;
use sparsedict_core::data::{encode_activation_matrix, load_activation_matrix};
use sparsedict_core::dictionary::{encode_checkpoint, load_checkpoint, CheckpointMeta};
use sparsedict_core::linalg::{DenseMatrix, DenseVector};
use sparsedict_core::{Dictionary, EncoderConfig, Rng, Variant};

fn cli(args: &[&str]) -> CliResult<()> {
    let argv = std::iter::once("sparsedict").chain(args.iter().copied());
    run(Cli::try_parse_from(argv).expect("flags parse"))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Nonnegative random rows written as an activation container.
fn write_data(dir: &Path, n: usize, m: usize, seed: u64) -> PathBuf {
    let mut rng = Rng::new(seed);
    let x = DenseMatrix::from_row_major(n, m, (0..n * m).map(|_| rng.uniform()).collect()).unwrap();
    let path = dir.join("data.sdla");
    std::fs::write(&path, encode_activation_matrix(&x, Dtype::F64)).unwrap();
    path
}

fn write_checkpoint(dir: &Path, dict: &Dictionary, cfg: &EncoderConfig) -> PathBuf {
    let path = dir.join("model.sdl");
    std::fs::write(&path, encode_checkpoint(dict, cfg, &CheckpointMeta::default()).unwrap()).unwrap();
    path
}

/// `D = I`, `b_pre = 0`, shallow weights `W = I`, `b = 0`.
fn identity_model(variant: Variant, m: usize, k: usize) -> (Dictionary, EncoderConfig) {
    let shallow = variant.is_shallow();
    let dict = Dictionary {
        d: DenseMatrix::identity(m),
        b_pre: DenseVector::zeros(m),
        encoder_weights: shallow.then(|| DenseMatrix::identity(m)),
        encoder_bias: shallow.then(|| DenseVector::zeros(m)),
        thresholds: (variant == Variant::JumpRelu).then(|| DenseVector::zeros(m)),
    };
    (dict, EncoderConfig::new(variant, k, m))
}

/// Header and rows of a CSV file.
fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    assert!(text.ends_with('\n'), "{}", path.display());
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap().split(',').map(String::from).collect();
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    for row in &rows {
        assert_eq!(row.len(), header.len(), "{}: ragged row {row:?}", path.display());
    }
    (header, rows)
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let (header, rows) = read_csv(path);
    let c = header.iter().position(|h| h == name).unwrap();
    rows.iter().map(|r| r[c].parse().unwrap()).collect()
}

fn train_args<'a>(data: &'a str, out: &'a str, variant: &'a str) -> Vec<&'a str> {
    vec![
        "train", "--data", data, "--out-dir", out, "--variant", variant, "--k", "3", "--p", "12", "--epochs", "2",
        "--batch", "16", "--seed", "4",
    ]
}

#[test]
fn csv_outputs_parse_under_their_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), 80, 9, 1);
    let out = dir.path().join("run");
    for variant in ["mp", "topk", "relu"] {
        let tr = out.join(variant);
        cli(&train_args(s(&data), s(&tr), variant)).unwrap();
        let ckpt = tr.join("checkpoint.sdl");
        cli(&["eval", "--checkpoint", s(&ckpt), "--data", s(&data), "--out-dir", s(&tr), "--coact-orders", "1,2"]).unwrap();
        cli(&["inspect", "--checkpoint", s(&ckpt), "--data", s(&data), "--samples", "0,5", "--out-dir", s(&tr)]).unwrap();
        cli(&["export-atoms", "--checkpoint", s(&ckpt), "--data", s(&data), "--n", "4", "--out-dir", s(&tr)]).unwrap();

        let schemas: [(&str, &str); 9] = [
            ("train_log.csv", "step,epoch,lr,recon,sparsity_penalty,aux,total,mean_l0,dead_atoms"),
            ("r2.csv", "k,r2"),
            ("babel_dict.csv", "r,mu1"),
            ("babel_coact.csv", "order,mean,max,q05,q25,q50,q75,q95,evaluated,skipped"),
            ("activation_stats.csv", "atom,freq,mean_value,mean_value_active,mean_selection_step"),
            ("residual_curve.csv", "k,mean_err"),
            ("trace_5.csv", "step,atom,coefficient,residual_norm"),
            ("atoms_by_freq.csv", "rank,atom,freq,mean_value,x0,x1,x2,x3,x4,x5,x6,x7,x8"),
            ("atoms_by_value.csv", "rank,atom,freq,mean_value,x0,x1,x2,x3,x4,x5,x6,x7,x8"),
        ];
        for (file, schema) in schemas {
            let (header, rows) = read_csv(&tr.join(file));
            assert_eq!(header.join(","), schema, "{variant} {file}");
            assert!(!rows.is_empty(), "{variant} {file}");
            for (i, row) in rows.iter().enumerate() {
                for (j, cell) in row.iter().enumerate() {
                    let label = file == "babel_coact.csv" && j == 0 && cell == "support-1";
                    assert!(
                        label || cell == "NA" || cell.parse::<f64>().is_ok_and(f64::is_finite),
                        "{variant} {file} row {i}: {cell:?}"
                    );
                }
            }
        }
        assert_eq!(column(&tr.join("activation_stats.csv"), "freq").len(), 12);
        let pgm = std::fs::read(tr.join("trace_0.pgm")).unwrap();
        assert!(pgm.starts_with(b"P5\n"));
        let (_, r2) = read_csv(&tr.join("r2.csv"));
        assert_eq!(r2[0][0], if variant == "relu" { "NA" } else { "3" });
    }
}

#[test]
fn flags_override_config_file_which_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), 40, 4, 2);
    let config = dir.path().join("cfg.json");
    std::fs::write(&config, r#"{"k": 2, "p": 6, "epochs": 1, "variant": "topk", "batch": 10}"#).unwrap();
    let out = dir.path().join("out");
    cli(&["train", "--config", s(&config), "--data", s(&data), "--out-dir", s(&out), "--k", "3"]).unwrap();
    let echoed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("run_config.json")).unwrap()).unwrap();
    assert_eq!(echoed["command"], "train");
    assert_eq!(echoed["k"], 3);
    assert_eq!(echoed["p"], 6);
    assert_eq!(echoed["variant"], "topk");
    assert_eq!(echoed["lr_init"], 5e-4);
    let (_, cfg, meta) = load_checkpoint(out.join("checkpoint.sdl")).unwrap();
    assert_eq!((cfg.variant, cfg.k), (Variant::TopK, 3));
    assert_eq!(meta.train_steps, 4);
}

#[test]
fn zero_epochs_writes_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), 30, 5, 3);
    for variant in Variant::ALL {
        let out = dir.path().join(variant.name());
        let args = ["train", "--data", s(&data), "--out-dir", s(&out), "--variant", variant.name(), "--k", "2", "--p", "7", "--epochs", "0", "--seed", "9"];
        cli(&args).unwrap();
        let (dict, _, meta) = load_checkpoint(out.join("checkpoint.sdl")).unwrap();
        let ds = load_activation_matrix(&data).unwrap();
        assert_eq!(dict, init_dictionary(variant, 7, 9, &ds).unwrap(), "{variant}");
        assert_eq!(meta.train_steps, 0);
        assert_eq!(std::fs::read_to_string(out.join("train_log.csv")).unwrap().lines().count(), 1);
    }
}

#[test]
fn outputs_are_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), 64, 6, 4);
    for variant in ["mp", "batchtopk", "jumprelu"] {
        let files = |tag: &str| -> Vec<Vec<u8>> {
            let out = dir.path().join(format!("{variant}-{tag}"));
            cli(&train_args(s(&data), s(&out), variant)).unwrap();
            let ckpt = out.join("checkpoint.sdl");
            let ev = out.join("eval");
            cli(&["eval", "--checkpoint", s(&ckpt), "--data", s(&data), "--out-dir", s(&ev)]).unwrap();
            ["checkpoint.sdl", "train_log.csv", "eval/r2.csv", "eval/babel_coact.csv", "eval/residual_curve.csv"]
                .iter()
                .map(|f| std::fs::read(out.join(f)).unwrap())
                .collect()
        };
        assert_eq!(files("a"), files("b"), "{variant}");
    }
}

#[test]
fn identity_dictionary_reconstructs_exactly_with_zero_babel() {
    let dir = tempfile::tempdir().unwrap();
    let m = 6;
    let data = write_data(dir.path(), 20, m, 5);
    let (dict, cfg) = identity_model(Variant::Mp, m, m);
    let ckpt = write_checkpoint(dir.path(), &dict, &cfg);
    let out = dir.path().join("eval");
    cli(&["eval", "--checkpoint", s(&ckpt), "--data", s(&data), "--out-dir", s(&out)]).unwrap();
    assert_eq!(column(&out.join("r2.csv"), "r2"), vec![1.0]);
    let mu = column(&out.join("babel_dict.csv"), "mu1");
    assert_eq!(mu.len(), m - 1);
    assert!(mu.iter().all(|&v| v == 0.0));
}

#[test]
fn mp_residual_curve_never_increases() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), 50, 8, 6);
    let tr = dir.path().join("mp");
    cli(&train_args(s(&data), s(&tr), "mp")).unwrap();
    let ckpt = tr.join("checkpoint.sdl");
    cli(&["eval", "--checkpoint", s(&ckpt), "--data", s(&data), "--out-dir", s(&tr), "--k-sweep", "1..50"]).unwrap();
    let curve = column(&tr.join("residual_curve.csv"), "mean_err");
    assert_eq!(curve.len(), 50);
    assert!(curve.windows(2).all(|w| w[1] <= w[0]), "{curve:?}");
}

#[test]
fn traces_start_at_b_pre_and_follow_the_replay_order() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), 30, 9, 7);
    for variant in ["mp", "topk", "relu"] {
        let tr = dir.path().join(variant);
        cli(&train_args(s(&data), s(&tr), variant)).unwrap();
        let ckpt = tr.join("checkpoint.sdl");
        let (dict, cfg, _) = load_checkpoint(&ckpt).unwrap();
        let x = load_activation_matrix(&data).unwrap();
        let t = sparsedict_cli::commands::inspect::trace(&dict, &cfg, x.row(2), None).unwrap();
        assert_eq!(t.partials[0].as_slice(), dict.b_pre.as_slice());
        assert_eq!(t.partials.len(), t.steps.len() + 1);
        if variant == "mp" {
            assert!(t.residual_norms.windows(2).all(|w| w[1] <= w[0]));
        } else {
            assert!(t.steps.windows(2).all(|w| w[0].1 >= w[1].1), "{variant}");
        }
        cli(&["inspect", "--checkpoint", s(&ckpt), "--data", s(&data), "--samples", "2", "--out-dir", s(&tr)]).unwrap();
        let norms = column(&tr.join("trace_2.csv"), "residual_norm");
        assert_eq!(norms, t.residual_norms);
        // 3x3 tiles side by side, first tile is b_pre on the shared scale
        let pgm = std::fs::read(tr.join("trace_2.pgm")).unwrap();
        let header = format!("P5\n{} 3\n255\n", 3 * t.partials.len());
        assert!(pgm.starts_with(header.as_bytes()), "{variant}");
    }
}

#[test]
fn export_rankings_on_uniform_usage_pick_the_same_atoms() {
    let dir = tempfile::tempdir().unwrap();
    let m = 9;
    let rows: Vec<f64> = (0..m).flat_map(|i| (0..m).map(move |j| if i == j { 1.0 } else { 0.0 })).collect();
    let x = DenseMatrix::from_row_major(m, m, rows).unwrap();
    let data = dir.path().join("eye.sdla");
    std::fs::write(&data, encode_activation_matrix(&x, Dtype::F64)).unwrap();
    let (dict, cfg) = identity_model(Variant::Relu, m, 1);
    let ckpt = write_checkpoint(dir.path(), &dict, &cfg);
    let out = dir.path().join("atoms");
    cli(&["export-atoms", "--checkpoint", s(&ckpt), "--data", s(&data), "--n", "9", "--out-dir", s(&out)]).unwrap();
    let mut a = column(&out.join("atoms_by_freq.csv"), "atom");
    let mut b = column(&out.join("atoms_by_value.csv"), "atom");
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    assert_eq!(a, b);
    // 9 tiles of 3x3 in a 3x3 grid
    let pgm = std::fs::read(out.join("atoms_by_freq.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n9 9\n255\n"));
    assert_eq!(pgm.len(), "P5\n9 9\n255\n".len() + 81);
}

#[test]
fn sweep_rows_follow_the_grid_and_repeat_seeds_agree() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), 40, 5, 8);
    let out = dir.path().join("sweep");
    let base = ["sweep", "--data", s(&data), "--out-dir", s(&out), "--epochs", "1", "--batch", "8"];
    cli(&[&base[..], &["--variant", "topk", "--k", "2", "--p", "6"]].concat()).unwrap();
    let (_, rows) = read_csv(&out.join("sweep.csv"));
    assert_eq!(rows.len(), 1);
    cli(&[&base[..], &["--variant", "mp,topk", "--k", "1,2", "--p", "6", "--seeds", "3,3"]].concat()).unwrap();
    let (header, rows) = read_csv(&out.join("sweep.csv"));
    assert_eq!(header.join(","), "variant,k,p,seed,r2");
    assert_eq!(rows.len(), 8);
    assert_eq!(rows[0][..3], ["mp", "1", "6"]);
    assert_eq!(rows[7][..3], ["topk", "2", "6"]);
    for pair in rows.chunks(2) {
        assert_eq!(pair[0], pair[1]);
    }
}

#[test]
fn synthetic_pipeline_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let syn = dir.path().join("syn");
    cli(&["gen-synthetic", "--m", "8", "--p-true", "8", "--k-true", "2", "--n", "50", "--out-dir", s(&syn)]).unwrap();
    let x = load_activation_matrix(syn.join("data.sdla")).unwrap();
    assert_eq!((x.n(), x.m()), (50, 8));
    let truth = syn.join("true_dictionary.sdla");
    let rs = dir.path().join("rs");
    // scoring the ground truth against itself is a perfect match
    cli(&["recovery-score", "--learned", s(&truth), "--truth", s(&truth), "--out-dir", s(&rs)]).unwrap();
    assert_eq!(column(&rs.join("recovery.csv"), "matched_fraction"), vec![1.0]);
    let (_, codes) = read_csv(&syn.join("codes.csv"));
    assert_eq!(codes.len(), 100);
}

fn exit_code(args: &[&str]) -> i32 {
    Process::new(env!("CARGO_BIN_EXE_sparsedict"))
        .args(args)
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

#[test]
fn exit_codes_separate_failure_classes() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), 10, 3, 9);
    let out = dir.path().join("o");
    let (d, o) = (s(&data), s(&out));
    assert_eq!(exit_code(&["train", "--data", d, "--out-dir", o, "--p", "4", "--k", "1", "--epochs", "1"]), 0);
    assert_eq!(exit_code(&["train", "--data", d, "--out-dir", o, "--variant", "topk", "--k", "0"]), 2);
    assert_eq!(exit_code(&["train", "--data", d, "--out-dir", o, "--variant", "nope"]), 2);
    assert_eq!(exit_code(&["train", "--data", "/no/such/file", "--out-dir", o]), 4);
    let bad = dir.path().join("bad.sdla");
    std::fs::write(&bad, b"SDLACTS1garbage").unwrap();
    assert_eq!(exit_code(&["train", "--data", s(&bad), "--out-dir", o]), 4);
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"kk": 1}"#).unwrap();
    assert_eq!(exit_code(&["train", "--config", s(&cfg), "--data", d, "--out-dir", o]), 2);
    let ckpt = out.join("checkpoint.sdl");
    assert_eq!(exit_code(&["inspect", "--checkpoint", s(&ckpt), "--data", d, "--samples", "10", "--out-dir", o]), 2);
}

#[test]
fn validation_messages_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), 10, 3, 10);
    let err = cli(&["train", "--data", s(&data), "--variant", "topk", "--k", "0", "--out-dir", s(dir.path())]).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("k ≥ 1"), "{err}");
    // validation happens before the data is read
    let err = cli(&["train", "--data", "/no/such/file", "--variant", "topk", "--k", "0"]).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}
