use codeeval::extraction::{extract_code, ExtractionMethod};
use serde::Deserialize;

#[derive(Deserialize)]
struct Case {
    name: String,
    response: String,
    code: String,
    method: ExtractionMethod,
}

fn cases() -> Vec<Case> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/extraction/cases.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn corpus_matches_expected_payloads() {
    let cases = cases();
    assert!(cases.len() >= 12);
    let mut failures = Vec::new();
    for case in &cases {
        let got = extract_code(&case.response);
        if got.code != case.code || got.method != case.method {
            failures.push(format!("{}: got {:?} {:?}", case.name, got.method, got.code));
        }
        if got.method == ExtractionMethod::FencedBlock {
            assert_eq!(got.block_index, Some(0), "{}", case.name);
        }
    }
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn extraction_is_idempotent_on_plain_code() {
    for case in cases() {
        let once = extract_code(&case.response).code;
        if !once.contains("```") && !once.contains("~~~") {
            assert_eq!(extract_code(&once).code, once, "{}", case.name);
        }
    }
}
