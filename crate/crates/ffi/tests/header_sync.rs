//! Keeps include/calderon.h aligned with the exported symbols: every
//! #[no_mangle] function in src/lib.rs must appear in the header and vice
//! versa, and the status enum values must match.

use calderon_ffi::CalderonStatus;

fn exported_symbols(src: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut lines = src.lines().peekable();
    while let Some(line) = lines.next() {
        if !line.contains("#[no_mangle]") {
            continue;
        }
        // the declaration may span a few lines
        let mut decl = String::new();
        for l in lines.by_ref() {
            decl.push_str(l);
            decl.push(' ');
            if l.contains('(') || l.contains('{') {
                break;
            }
        }
        if let Some(pos) = decl.find("fn ") {
            let rest = &decl[pos + 3..];
            let name: String = rest
                .chars()
                .take_while(|c| c.is_alphanumeric() || *c == '_')
                .collect();
            out.push(name);
        }
    }
    out.sort();
    out
}

#[test]
fn header_lists_every_export_and_nothing_else() {
    let src = include_str!("../src/lib.rs");
    let header = include_str!("../include/calderon.h");
    let symbols = exported_symbols(src);
    assert!(
        symbols.len() >= 7,
        "expected the full export list, got {symbols:?}"
    );
    for name in &symbols {
        assert!(
            header.contains(&format!("{name}(")),
            "include/calderon.h is missing `{name}`"
        );
    }
    // every calderon_* declaration in the header must exist in the library
    for line in header.lines() {
        if let Some(pos) = line.find("calderon_") {
            let name: String = line[pos..]
                .chars()
                .take_while(|c| c.is_alphanumeric() || *c == '_')
                .collect();
            if line.trim_start().starts_with("*") || name.is_empty() {
                continue;
            }
            if line.contains('(') && !line.contains("typedef") {
                assert!(
                    symbols.contains(&name) || name == "calderon_last_error_message",
                    "header declares `{name}` which is not exported"
                );
            }
        }
    }
}

#[test]
fn status_codes_match_header() {
    let header = include_str!("../include/calderon.h");
    for (variant, code) in [
        ("CALDERON_OK", CalderonStatus::Ok as i32),
        ("CALDERON_NULL_POINTER", CalderonStatus::NullPointer as i32),
        ("CALDERON_INVALID_UTF8", CalderonStatus::InvalidUtf8 as i32),
        ("CALDERON_CONFIG_ERROR", CalderonStatus::ConfigError as i32),
        ("CALDERON_NUMERICAL_ERROR", CalderonStatus::NumericalError as i32),
        ("CALDERON_IO_ERROR", CalderonStatus::IoError as i32),
        ("CALDERON_PANIC", CalderonStatus::Panic as i32),
    ] {
        let needle = format!("{variant} = {code}");
        assert!(
            header.contains(&needle),
            "header must define `{needle}`"
        );
    }
}
