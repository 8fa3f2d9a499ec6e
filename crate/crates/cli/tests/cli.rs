use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CORPUS: &str = "\
# text = ab c du
1\tab\t_\t_\t_\t_\t_\t_\t_\t_
2\tc\t_\t_\t_\t_\t_\t_\t_\t_
3-4\tdu\t_\t_\t_\t_\t_\t_\t_\tSpaceAfter=No
3\tde\t_\t_\t_\t_\t_\t_\t_\t_
4\tle\t_\t_\t_\t_\t_\t_\t_\t_

# text = cab
1\tc\t_\t_\t_\t_\t_\t_\t_\tSpaceAfter=No
2\tab\t_\t_\t_\t_\t_\t_\t_\tSpaceAfter=No

# text = ab du
1\tab\t_\t_\t_\t_\t_\t_\t_\t_
2-3\tdu\t_\t_\t_\t_\t_\t_\t_\tSpaceAfter=No
2\tde\t_\t_\t_\t_\t_\t_\t_\t_
3\tle\t_\t_\t_\t_\t_\t_\t_\t_

";

fn udseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_udseg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_corpus(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("train.conllu");
    fs::write(&path, CORPUS).unwrap();
    path
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(udseg(&[]).status.code(), Some(1));
    assert_eq!(udseg(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(udseg(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_data_exits_with_two() {
    let out = udseg(&["recommend", "--train", "/nonexistent/x.conllu"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("udseg: "));
}

#[test]
fn missing_model_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.txt");
    fs::write(&input, "abc\n").unwrap();
    let out = udseg(&[
        "segment",
        "--model",
        p(&dir.path().join("none")),
        "--input",
        p(&input),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn gold_against_itself_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    let gold = write_corpus(dir.path());
    let report = dir.path().join("report.txt");
    let out = udseg(&[
        "evaluate",
        "--gold",
        p(&gold),
        "--system",
        p(&gold),
        "--report",
        p(&report),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(&report).unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), text);
    assert!(text.lines().any(|l| l == "f1\t1"), "{text}");
}

#[test]
fn mismatched_sentence_counts_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let gold = write_corpus(dir.path());
    let short = dir.path().join("short.conllu");
    fs::write(
        &short,
        CORPUS.split("\n\n").next().unwrap().to_string() + "\n\n",
    )
    .unwrap();
    let out = udseg(&["evaluate", "--gold", p(&gold), "--system", p(&short)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn recommend_prints_settings() {
    let dir = tempfile::tempdir().unwrap();
    let train = write_corpus(dir.path());
    let out = udseg(&["recommend", "--train", p(&train)]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("unit_mode=character"), "{text}");
    assert!(text.contains("encdec=false"), "{text}");
}

#[test]
fn analyze_without_scores_skips_regression() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_corpus(dir.path());
    let b = dir.path().join("other.conllu");
    fs::write(
        &b,
        CORPUS
            .split("\n\n")
            .take(2)
            .collect::<Vec<_>>()
            .join("\n\n")
            + "\n\n",
    )
    .unwrap();
    let out_dir = dir.path().join("analysis");
    let out = udseg(&["analyze", "--train", p(&a), p(&b), "--output", p(&out_dir)]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in [
        "factors.tsv",
        "mwt_ambiguity.tsv",
        "clusters.tsv",
        "pca.tsv",
    ] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    assert!(!out_dir.join("regression.tsv").exists());
    let factors = fs::read_to_string(out_dir.join("factors.tsv")).unwrap();
    assert_eq!(factors.lines().count(), 3);
}

#[test]
fn untrained_model_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let train = write_corpus(dir.path());
    let model = dir.path().join("model");
    let out = udseg(&[
        "train",
        "--train",
        p(&train),
        "--model",
        p(&model),
        "--epochs",
        "0",
        "--embedding-size",
        "4",
        "--state-size",
        "4",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in ["meta", "vocab.tsv", "params.bin", "mwt.tsv", "train.log"] {
        assert!(model.join(f).exists(), "{f}");
    }

    // empty input gives empty output
    let empty = dir.path().join("empty.txt");
    fs::write(&empty, "").unwrap();
    let out = udseg(&["segment", "--model", p(&model), "--input", p(&empty)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());

    // characters never seen in training are decoded; tokens come from the text in order
    let input = dir.path().join("in.txt");
    fs::write(&input, "zzé ab\nc\n").unwrap();
    let system = dir.path().join("system.conllu");
    let out = udseg(&[
        "segment",
        "--model",
        p(&model),
        "--input",
        p(&input),
        "--output",
        p(&system),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let doc =
        udseg_core::conllu::parse_document(&fs::read_to_string(&system).unwrap(), "s").unwrap();
    assert_eq!(doc.sentences.len(), 2);
    assert_eq!(doc.sentences[0].raw_text.as_deref(), Some("zzé ab"));
    let mut rest = "zzé ab";
    for t in &doc.sentences[0].tokens {
        let at = rest
            .find(t.form.as_str())
            .expect("token taken from the text");
        rest = &rest[at + t.form.len()..];
    }
}

#[test]
fn regression_recovers_planted_relation() {
    use rand::{Rng, SeedableRng};
    use udseg_core::conllu::{serialize_document, Document, SegmentSpec, Sentence};
    use udseg_core::typology::{compute_factors, varying_features, Standardizer};

    let dir = tempfile::tempdir().unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
    let mut paths = Vec::new();
    let mut rows = Vec::new();
    for c in 0..12 {
        let alphabet: Vec<char> = "abcdefghijklmnopqrstuvwxyz"
            .chars()
            .take(rng.gen_range(4..26))
            .collect();
        let sentences: Vec<Sentence> = (0..rng.gen_range(3..30))
            .map(|_| {
                let specs: Vec<SegmentSpec> = (0..rng.gen_range(1..8))
                    .map(|_| {
                        let w: String = (0..rng.gen_range(1..7))
                            .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
                            .collect();
                        if rng.gen_bool(0.1) {
                            SegmentSpec {
                                surface: format!("Z{w}"),
                                words: vec![w, "x".into()],
                                space_after: true,
                            }
                        } else {
                            SegmentSpec {
                                surface: w.clone(),
                                words: vec![w],
                                space_after: rng.gen_bool(0.7),
                            }
                        }
                    })
                    .collect();
                let text: String = specs
                    .iter()
                    .map(|s| {
                        if s.space_after {
                            format!("{} ", s.surface)
                        } else {
                            s.surface.clone()
                        }
                    })
                    .collect();
                Sentence::from_segments(Some(text), &specs)
            })
            .collect();
        let doc = Document::new(format!("c{c}"), sentences);
        rows.push(compute_factors([&doc]).unwrap().features().to_vec());
        let path = dir.path().join(format!("c{c}.conllu"));
        fs::write(&path, serialize_document(&doc)).unwrap();
        paths.push(path);
    }
    let keep = varying_features(&rows);
    let reduced: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| keep.iter().map(|&j| r[j]).collect())
        .collect();
    let z = Standardizer::fit(&reduced).unwrap().transform_all(&reduced);
    let w: Vec<f64> = (0..keep.len())
        .map(|j| 0.01 * (j as f64 + 1.0) * if j % 2 == 0 { 1.0 } else { -1.0 })
        .collect();
    let mut table = String::new();
    for (c, zr) in z.iter().enumerate() {
        let y = 0.8 + zr.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        table.push_str(&format!("c{c}\t{y}\n"));
    }
    let f1 = dir.path().join("f1.tsv");
    fs::write(&f1, table).unwrap();

    let out_dir = dir.path().join("analysis");
    let mut args = vec!["analyze".to_string(), "--train".into()];
    args.extend(paths.iter().map(|p| p.display().to_string()));
    args.extend([
        "--output".into(),
        out_dir.display().to_string(),
        "--f1-table".into(),
        f1.display().to_string(),
    ]);
    let out = udseg(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let reg = fs::read_to_string(out_dir.join("regression.tsv")).unwrap();
    let coefs: Vec<f64> = reg
        .lines()
        .skip(1)
        .map(|l| l.split('\t').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(coefs.len(), keep.len() + 1);
    for (got, want) in coefs.iter().zip(w.iter().chain([0.8].iter())) {
        assert!((got - want).abs() < 1e-2, "{reg}");
    }
}
