//! End-to-end tests against the compiled `structured-gic` binary.
//!
//! Each test spawns the binary with `CARGO_BIN_EXE_structured-gic`, so the
//! suite exercises argument parsing, exit codes, stderr wording, and the
//! exact bytes of every artifact.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use structured_gic::data_io::{fmt_sig12, read_groups_json, read_tabular_csv, write_tabular_csv};
use structured_gic::experiments::{gen_group_glm, GroupGlmDesign};
use structured_gic::loss::{Dataset, GlmFamily};
use structured_gic::{
    all_group_supports, default_psi_budget, select_exhaustive, LossProblem, PenaltySchedule,
    ScheduleKind,
};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn run(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_structured-gic"));
    // Keep spawned runs hermetic: the suite itself may run under the override.
    cmd.env_remove("STRUCTURED_GIC_THREADS");
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary spawns")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// The bundled demo dataset is exactly what the synthetic generator
/// produces for this design; regenerating must be a byte-level no-op.
#[test]
fn demo_fixture_matches_its_generator() {
    let design = GroupGlmDesign {
        n: 48,
        p: 8,
        g: 4,
        m: 2,
        s_star: 2,
        signal: 1.5,
        family: GlmFamily::Gaussian,
        noise_sd: 0.3,
        covariate_corr: 0.2,
        seed: 7,
    };
    let inst = gen_group_glm(&design, 0).unwrap();
    let Dataset::Tabular { x, y, .. } = inst.problem.dataset() else {
        panic!("group design generates tabular data");
    };
    let dir = tempfile::tempdir().unwrap();
    let regen = dir.path().join("demo.csv");
    write_tabular_csv(&regen, x, y).unwrap();
    assert_eq!(
        std::fs::read(&regen).unwrap(),
        std::fs::read(fixture("demo.csv")).unwrap(),
        "fixtures/demo.csv no longer matches its generating design"
    );
}

/// `select` must reproduce the library's exhaustive table verbatim: same
/// candidate order, same 12-significant-digit rendering, same winner.
#[test]
fn select_reproduces_the_exhaustive_table() {
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("sel");
    let out = run(
        &[
            "select",
            "--data",
            fixture("demo.csv").to_str().unwrap(),
            "--reg",
            "group",
            "--groups-file",
            fixture("demo_groups.json").to_str().unwrap(),
            "--out",
            stem.to_str().unwrap(),
        ],
        &[],
    );
    assert!(out.status.success(), "select failed: {}", stderr_of(&out));

    let (x, y) = read_tabular_csv(&fixture("demo.csv")).unwrap();
    let (n, p) = x.dim();
    let partition = read_groups_json(&fixture("demo_groups.json"), p).unwrap();
    let problem = LossProblem::new(Dataset::tabular(x, y, GlmFamily::Gaussian).unwrap());
    let schedule = PenaltySchedule::new(
        ScheduleKind::GroupGlm { m: partition.max_group_size(), g: partition.num_groups(), n },
        1.0,
        false,
    )
    .unwrap();
    let budget = default_psi_budget(&problem);
    let candidates = all_group_supports(&partition).unwrap();
    let selection = select_exhaustive(&problem, &candidates, &schedule, budget).unwrap();

    let mut expected = String::from("support,size,psi_sq,loss,a_n,gic,selected\n");
    for (i, r) in selection.results.iter().enumerate() {
        let support = r
            .model
            .support()
            .map(|s: &BTreeSet<usize>| {
                s.iter().map(|g| g.to_string()).collect::<Vec<_>>().join(";")
            })
            .unwrap_or_default();
        expected.push_str(&format!(
            "{support},{},{},{},{},{},{}\n",
            r.model.complexity(),
            fmt_sig12(r.psi_sq),
            fmt_sig12(r.loss),
            fmt_sig12(r.a_n),
            fmt_sig12(r.gic),
            (i == selection.best_index) as u8,
        ));
    }
    let table = std::fs::read_to_string(dir.path().join("sel.csv")).unwrap();
    assert_eq!(table, expected, "CLI table differs from select_exhaustive");
    assert_eq!(table.lines().count(), 17, "header + all 16 supports of G=4");
}

#[test]
fn missing_data_flag_exits_2_and_names_it() {
    let out = run(&["select", "--reg", "group"], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("--data"), "stderr: {}", stderr_of(&out));
}

#[test]
fn group_reg_without_groups_file_exits_2_and_names_it() {
    let out = run(
        &["select", "--data", fixture("demo.csv").to_str().unwrap(), "--reg", "group"],
        &[],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("--groups-file"), "stderr: {}", stderr_of(&out));
}

#[test]
fn unknown_config_key_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"command": "fit", "lambdaa": 0.1}"#).unwrap();
    let out = run(&["--config", cfg.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_of(&out);
    assert!(err.contains("lambdaa"), "stderr should name the bad key: {err}");
    assert!(err.contains("run.json"), "stderr should name the file: {err}");
}

#[test]
fn threads_env_override_rejects_garbage_with_exit_2() {
    let out = run(
        &[
            "select",
            "--data",
            fixture("demo.csv").to_str().unwrap(),
            "--reg",
            "group",
            "--groups-file",
            fixture("demo_groups.json").to_str().unwrap(),
        ],
        &[("STRUCTURED_GIC_THREADS", "many")],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr_of(&out).contains("STRUCTURED_GIC_THREADS"),
        "stderr: {}",
        stderr_of(&out)
    );
}

/// Non-convergence is exit 3, but requested artifacts still land on disk.
#[test]
fn fit_nonconvergence_exits_3_after_writing_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let sol = dir.path().join("fit.json");
    let trace = dir.path().join("trace.jsonl");
    let out = run(
        &[
            "fit",
            "--data",
            fixture("demo.csv").to_str().unwrap(),
            "--reg",
            "group",
            "--groups-file",
            fixture("demo_groups.json").to_str().unwrap(),
            "--lambda",
            "0.01",
            "--max-iter",
            "3",
            "--out",
            sol.to_str().unwrap(),
            "--trace-out",
            trace.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr_of(&out).contains("partial outputs"), "stderr: {}", stderr_of(&out));

    let sol_json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&sol).unwrap()).unwrap();
    assert_eq!(sol_json["converged"], serde_json::json!(false));
    let trace_text = std::fs::read_to_string(&trace).unwrap();
    assert_eq!(trace_text.lines().count(), 4, "initial record plus one per iteration");
    let rec: serde_json::Value = serde_json::from_str(trace_text.lines().next().unwrap()).unwrap();
    assert_eq!(rec["iter"], serde_json::json!(0));
    for key in ["iter", "objective", "kkt_residual", "step"] {
        assert!(rec.get(key).is_some(), "trace record lacks {key}");
    }
}

/// Byte-for-byte determinism across repeated runs: stdout and every artifact.
#[test]
fn path_runs_are_byte_identical() {
    let one = tempfile::tempdir().unwrap();
    let two = tempfile::tempdir().unwrap();
    let run_once = |dir: &Path| -> (Output, Vec<u8>, Vec<u8>) {
        let stem = dir.join("path");
        let out = run(
            &[
                "path",
                "--data",
                fixture("demo.csv").to_str().unwrap(),
                "--reg",
                "group",
                "--groups-file",
                fixture("demo_groups.json").to_str().unwrap(),
                "--k-grid",
                "12",
                "--json",
                "--out",
                stem.to_str().unwrap(),
            ],
            &[],
        );
        assert!(out.status.success(), "path failed: {}", stderr_of(&out));
        (
            out,
            std::fs::read(dir.join("path.csv")).unwrap(),
            std::fs::read(dir.join("path.model.json")).unwrap(),
        )
    };
    let (out1, csv1, model1) = run_once(one.path());
    let (out2, csv2, model2) = run_once(two.path());
    assert_eq!(out1.stdout, out2.stdout, "stdout differs between runs");
    assert_eq!(csv1, csv2, "path table differs between runs");
    assert_eq!(model1, model2, "selected-model JSON differs between runs");

    // The machine output is well-formed JSON and echoes the table.
    let payload: serde_json::Value = serde_json::from_slice(&out1.stdout).unwrap();
    assert_eq!(payload["table_csv"].as_str().unwrap().as_bytes(), &csv1[..]);
    assert!(payload["selected"]["model"].is_object());
}

/// The path table carries the documented columns in order and flags exactly
/// one selected row.
#[test]
fn path_table_has_documented_columns() {
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("path");
    let out = run(
        &[
            "path",
            "--data",
            fixture("demo.csv").to_str().unwrap(),
            "--reg",
            "group",
            "--groups-file",
            fixture("demo_groups.json").to_str().unwrap(),
            "--k-grid",
            "12",
            "--out",
            stem.to_str().unwrap(),
        ],
        &[],
    );
    assert!(out.status.success(), "path failed: {}", stderr_of(&out));
    let table = std::fs::read_to_string(dir.path().join("path.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(
        lines.next().unwrap(),
        "lambda,kkt,support_size_or_rank,loss,psi_sq,a_n,gic,selected"
    );
    let selected: Vec<&str> = lines.filter(|l| l.ends_with(",1")).collect();
    assert_eq!(selected.len(), 1, "exactly one row is marked selected");
}

/// `select --reg nuclear` is a config error that points at `path`.
#[test]
fn select_rejects_nuclear_with_redirect() {
    let out = run(
        &["select", "--data", "whatever.json", "--reg", "nuclear"],
        &[],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("path"), "stderr: {}", stderr_of(&out));
}

/// A saved `--config` run and the equivalent flag run produce identical
/// artifacts.
#[test]
fn config_file_matches_flag_run() {
    let dir = tempfile::tempdir().unwrap();
    let flag_stem = dir.path().join("flags");
    let out = run(
        &[
            "select",
            "--data",
            fixture("demo.csv").to_str().unwrap(),
            "--reg",
            "group",
            "--groups-file",
            fixture("demo_groups.json").to_str().unwrap(),
            "--out",
            flag_stem.to_str().unwrap(),
        ],
        &[],
    );
    assert!(out.status.success(), "select failed: {}", stderr_of(&out));

    let cfg_stem = dir.path().join("cfg");
    let cfg = serde_json::json!({
        "command": "select",
        "data": fixture("demo.csv"),
        "reg": "group",
        "groups_file": fixture("demo_groups.json"),
        "out": cfg_stem,
    });
    let cfg_path = dir.path().join("run.json");
    std::fs::write(&cfg_path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    let out = run(&["--config", cfg_path.to_str().unwrap()], &[]);
    assert!(out.status.success(), "config run failed: {}", stderr_of(&out));

    assert_eq!(
        std::fs::read(dir.path().join("flags.csv")).unwrap(),
        std::fs::read(dir.path().join("cfg.csv")).unwrap()
    );
    assert_eq!(
        std::fs::read(dir.path().join("flags.model.json")).unwrap(),
        std::fs::read(dir.path().join("cfg.model.json")).unwrap()
    );
}
