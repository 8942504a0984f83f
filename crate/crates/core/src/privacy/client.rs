use crate::model::{parse_header, parse_record, ParseError, TraceBuilder, TraceDay};

use super::PrivacyError;

/// A trace as a client uploads it: the plain trace plus any optional
/// profile fields the user chose to fill in (`U <key> <value>` lines).
#[derive(Debug, Clone, PartialEq)]
pub struct ClientTrace {
    pub trace: TraceDay,
    pub profile: Vec<(String, String)>,
}

/// Whether `s` has the shape of a pseudonym: 32 lowercase hex characters.
pub fn is_pseudonym(s: &str) -> bool {
    s.len() == 32 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

/// Parses a client trace. Error messages never echo profile values.
pub fn parse_client_trace(text: &str) -> Result<ClientTrace, ParseError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or(ParseError {
        line: 1,
        message: "missing header line".into(),
    })?;
    let (pseudonym, date) = parse_header(1, header)?;
    let mut builder = TraceBuilder::new(pseudonym, date);
    let mut profile = Vec::new();
    let mut last = 1;
    for (line, text) in lines {
        last = line;
        if let Some(rest) = text.strip_prefix("U ") {
            let (key, value) = rest.split_once(' ').unwrap_or((rest, ""));
            if key.is_empty() {
                return Err(ParseError { line, message: "profile field without a key".into() });
            }
            profile.push((key.to_owned(), value.to_owned()));
            continue;
        }
        match parse_record(line, text)? {
            Some(record) => builder.push(line, record)?,
            None => {
                return Err(ParseError { line, message: "unknown record tag".into() });
            }
        }
    }
    Ok(ClientTrace { trace: builder.finish(last)?, profile })
}

/// Client-side encoding; profile lines follow the header.
pub fn encode_client_trace(trace: &TraceDay, profile: &[(String, String)]) -> String {
    let body = crate::model::encode_trace(trace);
    let (header, records) = body.split_once('\n').unwrap_or((&body, ""));
    let mut out = String::with_capacity(body.len() + 32 * profile.len());
    out.push_str(header);
    out.push('\n');
    for (k, v) in profile {
        let v = v.replace(['\n', '\r'], " ");
        out.push_str(&format!("U {k} {v}\n"));
    }
    out.push_str(records);
    out
}

/// Drops every profile field and enforces the pseudonym shape.
pub fn sanitize(client: ClientTrace) -> Result<TraceDay, PrivacyError> {
    if !is_pseudonym(&client.trace.pseudonym) {
        return Err(PrivacyError::PolicyViolation(
            "pseudonym is not 32 lowercase hex characters".into(),
        ));
    }
    Ok(client.trace)
}
