//! Extraction of `MBS<i>: [v1, ..., vN]` allocation lines from free-form
//! completion text, with near-simplex renormalization.

use thiserror::Error;

use super::{GuidancePolicy, ROW_SUM_ACCEPT_MAX, ROW_SUM_ACCEPT_MIN};

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("no allocation line found for MBS{index}")]
    MissingMbsLine { index: usize },
    #[error("multiple allocation lines found for MBS{index}")]
    DuplicateMbsLine { index: usize },
    #[error("MBS{index}: expected {expected} values, got {got}")]
    WrongArity {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("MBS{index}: non-numeric token {token:?}")]
    NonNumericToken { index: usize, token: String },
    #[error("MBS{index}: row sum {sum} outside [{ROW_SUM_ACCEPT_MIN}, {ROW_SUM_ACCEPT_MAX}]")]
    RowSumOutOfTolerance { index: usize, sum: f64 },
    #[error("MBS{index}: malformed bracket list")]
    MalformedList { index: usize },
    #[error("MBS{index}: negative value {value}")]
    NegativeValue { index: usize, value: f64 },
}

/// Try to read one `MBS<i>: [ ... ]` occurrence from a line; returns the
/// 1-based index and raw values. Lines without the pattern yield None.
fn scan_line(line: &str) -> Option<(usize, Result<Vec<f64>, ParseError>)> {
    let start = line.find("MBS")?;
    let rest = &line[start + 3..];
    let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
    if digits.is_empty() {
        return None;
    }
    let index: usize = digits.parse().ok()?;
    let rest = rest[digits.len()..].trim_start();
    let rest = rest.strip_prefix(':')?.trim_start();
    let rest = rest.strip_prefix('[')?;
    let Some(end) = rest.find(']') else {
        return Some((index, Err(ParseError::MalformedList { index })));
    };
    let body = &rest[..end];
    let mut values = Vec::new();
    for token in body.split(',') {
        let token = token.trim();
        match token.parse::<f64>() {
            Ok(v) if v.is_finite() => values.push(v),
            _ => {
                return Some((
                    index,
                    Err(ParseError::NonNumericToken {
                        index,
                        token: token.to_string(),
                    }),
                ))
            }
        }
    }
    Some((index, Ok(values)))
}

/// Scan completion text for exactly one allocation line per MBS 1..=M, each
/// with N values; rows with sum inside the accept band are renormalized to
/// exact sum 1. Surrounding prose is ignored.
pub fn parse_guidance(raw_text: &str, num_mbs: usize, num_sbs: usize) -> Result<GuidancePolicy, ParseError> {
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; num_mbs];
    for line in raw_text.lines() {
        let Some((index, values)) = scan_line(line) else {
            continue;
        };
        if index == 0 || index > num_mbs {
            continue;
        }
        let values = values?;
        if rows[index - 1].is_some() {
            return Err(ParseError::DuplicateMbsLine { index });
        }
        if values.len() != num_sbs {
            return Err(ParseError::WrongArity {
                index,
                expected: num_sbs,
                got: values.len(),
            });
        }
        if let Some(&v) = values.iter().find(|&&v| v < 0.0) {
            return Err(ParseError::NegativeValue { index, value: v });
        }
        rows[index - 1] = Some(values);
    }

    let mut allocation = Vec::with_capacity(num_mbs);
    for (i, row) in rows.into_iter().enumerate() {
        let mut row = row.ok_or(ParseError::MissingMbsLine { index: i + 1 })?;
        let sum: f64 = row.iter().sum();
        if !(ROW_SUM_ACCEPT_MIN..=ROW_SUM_ACCEPT_MAX).contains(&sum) {
            return Err(ParseError::RowSumOutOfTolerance { index: i + 1, sum });
        }
        for v in &mut row {
            *v /= sum;
        }
        allocation.push(row);
    }
    Ok(GuidancePolicy { allocation })
}

/// Render a policy in the same line format the parser accepts.
pub fn serialize_policy(policy: &GuidancePolicy) -> String {
    policy
        .allocation
        .iter()
        .enumerate()
        .map(|(m, row)| {
            let values = row.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(", ");
            format!("MBS{}: [{}]", m + 1, values)
        })
        .collect::<Vec<_>>()
        .join("\n")
}
