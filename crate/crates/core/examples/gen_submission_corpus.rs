//! Regenerates the submission fixture corpus under tests/fixtures/submissions.
//!
//! cargo run -p evalkit --example gen_submission_corpus

use std::fs;
use std::path::PathBuf;

use evalkit::submission::{pack_entries, pack_submission};

const TRIALS: &str = "model-id evaluation-file-id\n\
model_00000 evl_000000\n\
model_00000 evl_000001\n\
model_00001 evl_000000\n\
model_00001 evl_000002\n";

const KEY: &str = "model-id\ttest-file-id\ttrial-type\tis-target\tpartition\n\
model_00000\tevl_000000\tTC\t1\tnone\n\
model_00000\tevl_000001\tIC\t0\tnone\n\
model_00001\tevl_000000\tTW\t0\tnone\n\
model_00001\tevl_000002\tTC\t1\tnone\n";

const ANSWER: &str = "2.5\n-1.25\n0.5\n1.75\n";
const METADATA: &str = "public-description: Fixture system.\nfused-systems-count: 1\n";

fn main() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/submissions");
    fs::create_dir_all(&dir).expect("create fixture dir");

    let a = ANSWER.as_bytes();
    let m = METADATA.as_bytes();
    let cases: Vec<(&str, &str, Vec<u8>)> = vec![
        ("good_basic.zip", "OK", pack_submission(ANSWER, METADATA)),
        (
            "good_crlf_no_trailing_newline.zip",
            "OK",
            pack_submission("2.5\r\n-1.25\r\n0.5\r\n1.75", "fused-systems-count: 3\r\npublic-description: Fused.\r\n"),
        ),
        ("good_exponents.zip", "OK", pack_submission("2.5e0\n-1.25E+0\n+.5\n17.5e-1\n", METADATA)),
        ("not_a_zip.zip", "NotAZip", b"answer.txt and metadata, but not zipped\n".to_vec()),
        ("missing_answer.zip", "MissingAnswerFile", pack_entries(&[("metadata", m)])),
        ("missing_metadata.zip", "MissingMetadataFile", pack_entries(&[("answer.txt", a)])),
        (
            "contains_directories.zip",
            "ContainsDirectories",
            pack_entries(&[("answer.txt", a), ("metadata", m), ("extra/", b"")]),
        ),
        (
            "unexpected_entries.zip",
            "UnexpectedEntries",
            pack_entries(&[("answer.txt", a), ("metadata", m), ("notes.md", b"# notes\n")]),
        ),
        ("metadata_with_extension.zip", "UnexpectedEntries", pack_entries(&[("answer.txt", a), ("metadata", m), ("metadata.txt", m)])),
        (
            "files_not_at_root.zip",
            "FilesNotAtRoot",
            pack_entries(&[("sub/answer.txt", a), ("sub/metadata", m)]),
        ),
        ("count_mismatch.zip", "CountMismatch", pack_submission("2.5\n-1.25\n0.5\n", METADATA)),
        ("non_numeric_score.zip", "NonNumericScore", pack_submission("2.5\n-1.25\nhigh\n1.75\n", METADATA)),
        ("non_finite_score.zip", "NonFiniteScore", pack_submission("2.5\nNaN\n0.5\n1.75\n", METADATA)),
        (
            "header_line_present.zip",
            "HeaderLinePresent",
            pack_submission("model-id evaluation-file-id\n2.5\n-1.25\n0.5\n1.75\n", METADATA),
        ),
        ("missing_key.zip", "MissingKey", pack_submission(ANSWER, "public-description: No count.\n")),
        (
            "non_integer_fused_count.zip",
            "NonIntegerFusedCount",
            pack_submission(ANSWER, "public-description: Half.\nfused-systems-count: 2.5\n"),
        ),
        (
            "fused_count_out_of_range.zip",
            "FusedCountOutOfRange",
            pack_submission(ANSWER, "public-description: None.\nfused-systems-count: 0\n"),
        ),
    ];

    let mut manifest = String::from("archive\texpected\n");
    for (name, expected, bytes) in &cases {
        fs::write(dir.join(name), bytes).expect("write archive");
        manifest.push_str(&format!("{name}\t{expected}\n"));
    }
    fs::write(dir.join("manifest.tsv"), manifest).expect("write manifest");
    fs::write(dir.join("trials.txt"), TRIALS).expect("write trials");
    fs::write(dir.join("key.tsv"), KEY).expect("write key");
    println!("wrote {} archives to {}", cases.len(), dir.display());
}
