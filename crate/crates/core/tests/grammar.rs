mod common;

use common::format_corpus::CORPUS;
use unitool::protocol::{check_format, parse_manager_turn};

#[test]
fn corpus_labels_hold_case_by_case() {
    let mut mismatches = Vec::new();
    for case in CORPUS {
        let turn = parse_manager_turn(case.text);
        let names: Vec<&str> = turn.calls.iter().map(|c| c.name.as_str()).collect();
        if check_format(&turn) != case.fmt || u8::from(turn.well_formed) != case.fmt {
            mismatches.push(format!(
                "{}: fmt {} expected {}",
                case.label,
                check_format(&turn),
                case.fmt
            ));
        }
        if names != case.calls {
            mismatches.push(format!(
                "{}: calls {names:?} expected {:?}",
                case.label, case.calls
            ));
        }
    }
    assert!(mismatches.is_empty(), "{}", mismatches.join("\n"));
}

#[test]
fn corpus_is_balanced_enough() {
    let good = CORPUS.iter().filter(|c| c.fmt == 1).count();
    assert_eq!(CORPUS.len(), 50);
    assert!(
        good >= 15 && CORPUS.len() - good >= 15,
        "{good} well-formed"
    );
    let mut labels: Vec<&str> = CORPUS.iter().map(|c| c.label).collect();
    labels.sort_unstable();
    labels.dedup();
    assert_eq!(labels.len(), CORPUS.len(), "duplicate labels");
}

#[test]
fn well_formed_cases_survive_rerendering() {
    for case in CORPUS.iter().filter(|c| c.fmt == 1) {
        let turn = parse_manager_turn(case.text);
        let again = parse_manager_turn(&turn.render());
        assert!(again.well_formed, "{}", case.label);
        assert_eq!(again.calls, turn.calls, "{}", case.label);
    }
}
