use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data").join(name)
}

fn fnmt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fnmt"))
        .args(args)
        .env("FNMT_LOG", "error")
        .env_remove("FNMT_SEED")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn train_tiny(dir: &Path, variant: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(variant);
    let (src, tgt, lex) = (data("toy.en"), data("toy.fr"), data("lexicon.tsv"));
    let mut args = vec![
        "train",
        "--variant",
        variant,
        "--src",
        s(&src),
        "--tgt",
        s(&tgt),
        "--out-dir",
        s(&out),
        "--emb",
        "8",
        "--rnn",
        "8",
        "--factor-emb",
        "4",
        "--batch",
        "16",
        "--max-epochs",
        "2",
        "--bpe-merges",
        "100",
    ];
    if variant == "factored" {
        args.extend(["--lexicon", s(&lex)]);
    }
    args.extend_from_slice(extra);
    ok(&fnmt(&args));
    out
}

#[test]
fn prepare_reports_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p");
    let stdout = ok(&fnmt(&[
        "prepare",
        "--src",
        s(&data("toy.en")),
        "--tgt",
        s(&data("toy.fr")),
        "--out-dir",
        s(&out),
        "--max-len",
        "8",
    ]));
    assert!(stdout.starts_with("kept "), "{stdout}");
    assert!(stdout.contains("dropped"));
    let kept = fs::read_to_string(out.join("train.src")).unwrap();
    assert!(kept.lines().all(|l| l.split_whitespace().count() <= 8));
    assert!(out.join("vocab.tgt").exists());
}

#[test]
fn bpe_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let codes = dir.path().join("codes");
    let seg = dir.path().join("seg");
    let back = dir.path().join("back");
    ok(&fnmt(&[
        "bpe-learn",
        "--input",
        s(&data("toy.en")),
        s(&data("toy.fr")),
        "--merges",
        "60",
        "--output",
        s(&codes),
    ]));
    ok(&fnmt(&[
        "bpe-apply",
        "--codes",
        s(&codes),
        "--input",
        s(&data("toy.fr")),
        "--output",
        s(&seg),
    ]));
    ok(&fnmt(&[
        "bpe-apply",
        "--undo",
        "--input",
        s(&seg),
        "--output",
        s(&back),
    ]));
    let segmented = fs::read_to_string(&seg).unwrap();
    assert!(segmented.contains("@@"));
    let norm = |t: String| {
        t.lines()
            .map(|l| l.split_whitespace().collect::<Vec<_>>().join(" "))
            .collect::<Vec<_>>()
    };
    assert_eq!(
        norm(fs::read_to_string(&back).unwrap()),
        norm(fs::read_to_string(data("toy.fr")).unwrap())
    );
}

#[test]
fn factorize_recombine_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (lemmas, factors) = (dir.path().join("lem"), dir.path().join("fac"));
    let lex = data("lexicon.tsv");
    ok(&fnmt(&[
        "factorize",
        "--lexicon",
        s(&lex),
        "--input",
        s(&data("toy.fr")),
        "--lemmas",
        s(&lemmas),
        "--factors",
        s(&factors),
    ]));
    let words = ok(&fnmt(&[
        "recombine",
        "--lexicon",
        s(&lex),
        "--lemmas",
        s(&lemmas),
        "--factors",
        s(&factors),
    ]));
    let reference = fs::read_to_string(data("toy.fr")).unwrap();
    let (mut same, mut total) = (0, 0);
    for (h, r) in words.lines().zip(reference.lines()) {
        for (a, b) in h.split_whitespace().zip(r.split_whitespace()) {
            total += 1;
            same += usize::from(a == b);
        }
    }
    assert!(same as f64 / total as f64 >= 0.99, "{same}/{total}");
}

#[test]
fn recombine_line_mismatch_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let (l, f) = (dir.path().join("l"), dir.path().join("f"));
    fs::write(&l, "chat\nchien\n").unwrap();
    fs::write(&f, "n-#-#-m-s-l\n").unwrap();
    let out = fnmt(&[
        "recombine",
        "--lexicon",
        s(&data("lexicon.tsv")),
        "--lemmas",
        s(&l),
        "--factors",
        s(&f),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lemma lines"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(fnmt(&["translate", "--bogus"]).status.code(), Some(2));
    assert_eq!(
        fnmt(&["score", "--hyp", "/nonexistent", "--ref", "/nonexistent"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn divergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = fnmt(&[
        "train",
        "--variant",
        "factored",
        "--lexicon",
        s(&data("lexicon.tsv")),
        "--src",
        s(&data("toy.en")),
        "--tgt",
        s(&data("toy.fr")),
        "--out-dir",
        s(&dir.path().join("m")),
        "--emb",
        "4",
        "--rnn",
        "4",
        "--factor-emb",
        "2",
        "--max-epochs",
        "1",
        "--factor-weight",
        "NaN",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn train_translate_score_heatmap() {
    let dir = tempfile::tempdir().unwrap();
    for variant in ["word", "bpe", "factored"] {
        let model_dir = train_tiny(dir.path(), variant, &["--seed", "5"]);
        let history: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(model_dir.join("history.json")).unwrap()).unwrap();
        assert_eq!(history["epochs"].as_array().unwrap().len(), 2);

        let model = model_dir.join("model.fnmt");
        let hyp = dir.path().join(format!("{variant}.hyp"));
        let att = dir.path().join(format!("{variant}.att"));
        let nbest = dir.path().join(format!("{variant}.nbest"));
        let input = data("toy.en");
        let args = [
            "translate",
            "--model",
            s(&model),
            "--input",
            s(&input),
            "--output",
            s(&hyp),
            "--beam",
            "3",
            "--nbest",
            "2",
            "--nbest-out",
            s(&nbest),
            "--attention",
            s(&att),
            "--threads",
            "3",
        ];
        ok(&fnmt(&args));
        let first = fs::read_to_string(&hyp).unwrap();
        assert_eq!(first.lines().count(), 64);
        // parallel decoding keeps input order and is repeatable
        ok(&fnmt(&args));
        assert_eq!(fs::read_to_string(&hyp).unwrap(), first);

        let nb = fs::read_to_string(&nbest).unwrap();
        let line = nb.lines().next().unwrap();
        let fields: Vec<&str> = line.split(" ||| ").collect();
        assert_eq!(fields.len(), 4, "{line}");
        assert_eq!(fields[0], "0");
        fields[2].parse::<f64>().unwrap();
        fields[3].parse::<f64>().unwrap();

        let score = ok(&fnmt(&["score", "--hyp", s(&hyp), "--ref", s(&data("toy.fr"))]));
        assert!(score.starts_with("BLEU = "), "{score}");

        let pgm = dir.path().join(format!("{variant}.pgm"));
        let art = ok(&fnmt(&[
            "heatmap",
            "--attention",
            s(&att),
            "--id",
            "2",
            "--pgm",
            s(&pgm),
            "--cell",
            "1",
        ]));
        assert!(art.contains('|'));
        assert!(fs::read(&pgm).unwrap().starts_with(b"P5\n"));
    }
}

#[test]
fn seed_from_env_and_config_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed_env: Option<&str>, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_fnmt"));
        cmd.args([
            "train",
            "--src",
            s(&data("toy.en")),
            "--tgt",
            s(&data("toy.fr")),
            "--out-dir",
            s(&out),
            "--emb",
            "6",
            "--rnn",
            "6",
            "--max-epochs",
            "1",
        ])
        .args(extra)
        .env("FNMT_LOG", "error")
        .env_remove("FNMT_SEED");
        if let Some(v) = seed_env {
            cmd.env("FNMT_SEED", v);
        }
        ok(&cmd.output().unwrap());
        fs::read(out.join("model.fnmt")).unwrap()
    };
    let default = run("a", None, &[]);
    assert_eq!(run("b", Some("1234"), &[]), default);
    let env7 = run("c", Some("7"), &[]);
    assert_ne!(env7, default);
    assert_eq!(run("d", Some("1234"), &["--seed", "7"]), env7);

    let cfg = dir.path().join("train.conf");
    fs::write(&cfg, "# tiny run\nseed = 7\nmax_epochs = 3\n").unwrap();
    assert_eq!(run("e", None, &["--config", s(&cfg)]), env7);
    let history = fs::read_to_string(dir.path().join("e/history.json")).unwrap();
    let h: serde_json::Value = serde_json::from_str(&history).unwrap();
    assert_eq!(h["epochs"].as_array().unwrap().len(), 1);
}

#[test]
fn empty_corpus_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let (src, tgt) = (dir.path().join("e.en"), dir.path().join("e.fr"));
    fs::write(&src, "").unwrap();
    fs::write(&tgt, "").unwrap();
    let out = fnmt(&[
        "prepare",
        "--src",
        s(&src),
        "--tgt",
        s(&tgt),
        "--out-dir",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn zero_merges_splits_into_characters() {
    let dir = tempfile::tempdir().unwrap();
    let (codes, text) = (dir.path().join("codes"), dir.path().join("t"));
    fs::write(&text, "chat noir\n").unwrap();
    ok(&fnmt(&[
        "bpe-learn",
        "--input",
        s(&text),
        "--merges",
        "0",
        "--output",
        s(&codes),
    ]));
    let seg = ok(&fnmt(&["bpe-apply", "--merges-file", s(&codes), "--input", s(&text)]));
    assert_eq!(seg, "c@@ h@@ a@@ t n@@ o@@ i@@ r\n");
}

#[test]
fn identical_files_score_100() {
    let f = data("toy.fr");
    let stdout = ok(&fnmt(&["score", "--hyp", s(&f), "--ref", s(&f)]));
    assert!(stdout.starts_with("BLEU = 100.00"), "{stdout}");
}

#[test]
fn beam_one_matches_greedy() {
    let dir = tempfile::tempdir().unwrap();
    let model = train_tiny(dir.path(), "factored", &[]).join("model.fnmt");
    let input = data("toy.en");
    let run = |extra: &str| ok(&fnmt(&["translate", "--model", s(&model), "--input", s(&input), extra]));
    assert_eq!(run("--beam=1"), run("--greedy"));
}

#[test]
fn heatmap_single_cell() {
    let dir = tempfile::tempdir().unwrap();
    let (att, pgm) = (dir.path().join("a.jsonl"), dir.path().join("a.pgm"));
    fs::write(
        &att,
        "{\"id\":0,\"source\":[\"<eos>\"],\"target\":[\"x\"],\"attention\":[[1.0]]}\n",
    )
    .unwrap();
    let art = ok(&fnmt(&[
        "heatmap",
        "--attention",
        s(&att),
        "--pgm",
        s(&pgm),
        "--cell",
        "1",
    ]));
    assert_eq!(fs::read(&pgm).unwrap(), b"P5\n1 1\n255\n\xff");
    assert!(art.starts_with("x |@\n"));
}
