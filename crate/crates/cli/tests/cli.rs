use std::path::Path;
use std::process::{Command, Output};

fn reseed(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reseed"))
        .args(args)
        .env_remove("RESEED_URANDOM_ENTROPY")
        .output()
        .expect("spawn reseed")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn manifest_rows(dir: &Path) -> usize {
    let text = std::fs::read_to_string(dir.join("manifest.tsv")).unwrap();
    text.lines().filter(|l| !l.starts_with('#')).count() - 1
}

#[test]
fn generate_rand_urandom_writes_requested_count() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("g");
    let o = reseed(&["generate", "--strategy", "rand_urandom", "--n", "200", "--len", "24", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(manifest_rows(&out), 200);
}

#[test]
fn existing_output_needs_force() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("g");
    let args = ["generate", "--strategy", "rand_urandom", "--n", "5", "--len", "8", "--out", p(&out)];
    assert_eq!(reseed(&args).status.code(), Some(0));
    let again = reseed(&args);
    assert_eq!(again.status.code(), Some(2));
    assert!(stderr(&again).contains("--force"));
    let mut forced = args.to_vec();
    forced.push("--force");
    assert_eq!(reseed(&forced).status.code(), Some(0));
}

#[test]
fn plan_without_target_is_a_usage_error_naming_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let plan = tmp.path().join("plan.txt");
    std::fs::write(&plan, "phase1_execs = 1000\n").unwrap();
    let o = reseed(&["experiment", "--plan", p(&plan), "--run-dir", p(&tmp.path().join("run"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`target`"), "{}", stderr(&o));
}

#[test]
fn unknown_target_and_bad_flags_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let o = reseed(&["fuzz", "--target", "nope", "--corpus", p(&tmp.path().join("c"))]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(reseed(&["fuzz", "--bogus"]).status.code(), Some(2));
}

#[test]
fn missing_model_file_is_a_runtime_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let o = reseed(&[
        "generate",
        "--strategy",
        "gan",
        "--model",
        p(&tmp.path().join("absent.model")),
        "--n",
        "3",
        "--out",
        p(&tmp.path().join("g")),
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn os_entropy_variable_is_validated() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_reseed"))
        .args(["generate", "--strategy", "rand_urandom", "--n", "2", "--len", "4", "--out"])
        .arg(tmp.path().join("g"))
        .env("RESEED_URANDOM_ENTROPY", "yes")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn fuzz_train_generate_dedup_merge_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    let o = reseed(&["fuzz", "--target", "minikey", "--corpus", p(&corpus), "--execs", "30000", "--rng-seed", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(corpus.join("progress.log").is_file());
    assert!(manifest_rows(&corpus) >= 2);

    let gan = tmp.path().join("gan.model");
    let o = reseed(&["train", "--strategy", "gan", "--corpus", p(&corpus), "--model", p(&gan), "--epochs", "5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let lstm = tmp.path().join("lstm.model");
    let o = reseed(&[
        "train", "--strategy", "lstm", "--corpus", p(&corpus), "--model", p(&lstm), "--epochs", "1", "--hidden-width", "8",
        "--dense-width", "8", "--window", "4",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let g = tmp.path().join("g");
    let o = reseed(&["generate", "--strategy", "gan", "--model", p(&gan), "--n", "20", "--out", p(&g), "--target", "minikey"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(manifest_rows(&g), 20);
    let l = tmp.path().join("l");
    let o = reseed(&[
        "generate", "--strategy", "lstm", "--model", p(&lstm), "--corpus", p(&corpus), "--window", "4", "--n", "10", "--out",
        p(&l),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let wrong = reseed(&["generate", "--strategy", "lstm", "--model", p(&gan), "--corpus", p(&corpus), "--n", "1", "--out", p(&tmp.path().join("w"))]);
    assert_eq!(wrong.status.code(), Some(2));

    let d = tmp.path().join("d");
    let o = reseed(&["dedup", "--corpus", p(&g), "--out", p(&d), "--mode", "length"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(manifest_rows(&d) <= 20);

    let m = tmp.path().join("m");
    let o = reseed(&["merge", "--out", p(&m), p(&corpus), p(&corpus)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(manifest_rows(&m), manifest_rows(&corpus));
    let clash = reseed(&["merge", "--out", p(&tmp.path().join("m2")), p(&corpus), p(&g)]);
    assert_eq!(clash.status.code(), Some(2), "{}", stderr(&clash));
}

#[test]
fn experiment_then_report() {
    let tmp = tempfile::tempdir().unwrap();
    let plan = tmp.path().join("plan.txt");
    std::fs::write(
        &plan,
        "target = minikey\nphase1_execs = 5000\nphase2_execs = 2000\nworkers = 1\nsamples = 10\n\
         strategies = afl,rand_urandom,rand_corpus\nbaseline = rand_urandom\n",
    )
    .unwrap();
    let run = tmp.path().join("run");
    let o = reseed(&["experiment", "--plan", p(&plan), "--run-dir", p(&run)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let printed = String::from_utf8(o.stdout).unwrap();
    let r = reseed(&["report", "--run", p(&run)]);
    assert_eq!(r.status.code(), Some(0), "{}", stderr(&r));
    let again = String::from_utf8(r.stdout).unwrap();
    assert!(printed.starts_with(&again), "report differs:\n{printed}\n---\n{again}");
    let tsv = reseed(&["report", "--run", p(&run), "--tsv"]);
    assert!(String::from_utf8(tsv.stdout).unwrap().contains('\t'));
}
