//! Strict RFC 4180 conformance check, written independently of any CSV
//! library.

/// Validates `text` and returns its records. Requires CRLF after every
/// record, a constant field count, and quoting for any field containing a
/// comma, quote, CR or LF (with embedded quotes doubled).
pub fn validate_rfc4180(text: &str) -> Result<Vec<Vec<String>>, String> {
    let bytes = text.as_bytes();
    let mut records = Vec::new();
    let mut record = Vec::new();
    let mut i = 0;
    let mut line = 1;
    if bytes.is_empty() {
        return Ok(records);
    }
    loop {
        // one field
        let mut field = String::new();
        if bytes.get(i) == Some(&b'"') {
            i += 1;
            loop {
                match bytes.get(i) {
                    None => return Err(format!("line {line}: unterminated quoted field")),
                    Some(b'"') if bytes.get(i + 1) == Some(&b'"') => {
                        field.push('"');
                        i += 2;
                    }
                    Some(b'"') => {
                        i += 1;
                        break;
                    }
                    Some(_) => {
                        let ch = text[i..].chars().next().unwrap();
                        if ch == '\n' {
                            line += 1;
                        }
                        field.push(ch);
                        i += ch.len_utf8();
                    }
                }
            }
        } else {
            while let Some(&b) = bytes.get(i) {
                match b {
                    b',' | b'\r' => break,
                    b'"' => return Err(format!("line {line}: bare quote in unquoted field")),
                    b'\n' => return Err(format!("line {line}: bare LF")),
                    _ => {
                        let ch = text[i..].chars().next().unwrap();
                        field.push(ch);
                        i += ch.len_utf8();
                    }
                }
            }
        }
        record.push(field);
        match bytes.get(i) {
            Some(b',') => i += 1,
            Some(b'\r') if bytes.get(i + 1) == Some(&b'\n') => {
                i += 2;
                line += 1;
                if let Some(first) = records.first().map(Vec::len) {
                    if record.len() != first {
                        return Err(format!(
                            "line {}: {} fields, expected {first}",
                            line - 1,
                            record.len()
                        ));
                    }
                }
                records.push(std::mem::take(&mut record));
                if i == bytes.len() {
                    return Ok(records);
                }
            }
            Some(b'\r') => return Err(format!("line {line}: bare CR")),
            None => return Err(format!("line {line}: last record lacks CRLF")),
            Some(c) => return Err(format!("line {line}: unexpected byte {c:#x} after field")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_conformant() {
        let r = validate_rfc4180("a,b\r\n\"x,\"\"y\"\"\",\r\n").unwrap();
        assert_eq!(r, vec![vec!["a", "b"], vec!["x,\"y\"", ""]]);
    }

    #[test]
    fn rejects_violations() {
        assert!(validate_rfc4180("a,b\n").is_err());
        assert!(validate_rfc4180("a,b\r\nc\r\n").is_err());
        assert!(validate_rfc4180("a,b\"c\r\n").is_err());
        assert!(validate_rfc4180("a,b").is_err());
    }
}
