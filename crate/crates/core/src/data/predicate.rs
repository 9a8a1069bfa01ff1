use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Read access to one raw record by variable name.
pub trait RowView {
    fn numeric(&self, variable: &str) -> Option<f64>;
    fn categorical(&self, variable: &str) -> Option<String>;
}

/// Conditions over raw variables, with the same half-open conventions as the
/// discretizer. Missing values never satisfy a condition.
///
/// Parses from text such as `cscore<706`, `dti>=43`, `orig_rate in [5.25,6)`,
/// `purpose in [U,P]`, `state=CA`, conjunctions joined by `&`, or `all`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Predicate {
    All,
    Lt { variable: String, value: f64 },
    Ge { variable: String, value: f64 },
    /// `low <= x < high`
    Range { variable: String, low: f64, high: f64 },
    In { variable: String, values: Vec<String> },
    And(Vec<Predicate>),
}

impl Predicate {
    pub fn lt(variable: &str, value: f64) -> Self {
        Predicate::Lt {
            variable: variable.into(),
            value,
        }
    }

    pub fn ge(variable: &str, value: f64) -> Self {
        Predicate::Ge {
            variable: variable.into(),
            value,
        }
    }

    pub fn range(variable: &str, low: f64, high: f64) -> Self {
        Predicate::Range {
            variable: variable.into(),
            low,
            high,
        }
    }

    pub fn is(variable: &str, value: &str) -> Self {
        Predicate::In {
            variable: variable.into(),
            values: vec![value.into()],
        }
    }

    pub fn one_of(variable: &str, values: &[&str]) -> Self {
        Predicate::In {
            variable: variable.into(),
            values: values.iter().map(|v| v.to_string()).collect(),
        }
    }

    pub fn eval(&self, row: &impl RowView) -> bool {
        match self {
            Predicate::All => true,
            Predicate::Lt { variable, value } => row.numeric(variable).is_some_and(|x| x < *value),
            Predicate::Ge { variable, value } => row.numeric(variable).is_some_and(|x| x >= *value),
            Predicate::Range {
                variable,
                low,
                high,
            } => row
                .numeric(variable)
                .is_some_and(|x| x >= *low && x < *high),
            Predicate::In { variable, values } => row
                .categorical(variable)
                .is_some_and(|v| values.contains(&v)),
            Predicate::And(parts) => parts.iter().all(|p| p.eval(row)),
        }
    }

    /// Variables the predicate reads.
    pub fn variables(&self) -> Vec<&str> {
        match self {
            Predicate::All => Vec::new(),
            Predicate::Lt { variable, .. }
            | Predicate::Ge { variable, .. }
            | Predicate::Range { variable, .. }
            | Predicate::In { variable, .. } => vec![variable.as_str()],
            Predicate::And(parts) => parts.iter().flat_map(|p| p.variables()).collect(),
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::All => f.write_str("all"),
            Predicate::Lt { variable, value } => write!(f, "{variable}<{value}"),
            Predicate::Ge { variable, value } => write!(f, "{variable}>={value}"),
            Predicate::Range {
                variable,
                low,
                high,
            } => write!(f, "{variable} in [{low},{high})"),
            Predicate::In { variable, values } if values.len() == 1 => {
                write!(f, "{variable}={}", values[0])
            }
            Predicate::In { variable, values } => {
                write!(f, "{variable} in [{}]", values.join(","))
            }
            Predicate::And(parts) => {
                let parts: Vec<String> = parts.iter().map(|p| p.to_string()).collect();
                f.write_str(&parts.join(" & "))
            }
        }
    }
}

fn parse_number(text: &str, whole: &str) -> Result<f64, Error> {
    text.trim()
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("predicate {whole:?}: {text:?} is not a number")))
}

fn parse_atom(text: &str) -> Result<Predicate, Error> {
    let t = text.trim();
    if t.eq_ignore_ascii_case("all") || t.is_empty() {
        return Ok(Predicate::All);
    }
    if let Some((var, rest)) = t.split_once(" in ") {
        let var = var.trim().to_string();
        let rest = rest.trim();
        let body = rest
            .strip_prefix('[')
            .ok_or_else(|| Error::Config(format!("predicate {t:?}: expected '[' after 'in'")))?;
        if let Some(inner) = body.strip_suffix(')') {
            let (lo, hi) = inner
                .split_once(',')
                .ok_or_else(|| Error::Config(format!("predicate {t:?}: expected [low,high)")))?;
            return Ok(Predicate::Range {
                variable: var,
                low: parse_number(lo, t)?,
                high: parse_number(hi, t)?,
            });
        }
        let inner = body
            .strip_suffix(']')
            .ok_or_else(|| Error::Config(format!("predicate {t:?}: unterminated list")))?;
        let values = inner
            .split(',')
            .map(|v| v.trim().trim_matches('"').to_string())
            .filter(|v| !v.is_empty())
            .collect();
        return Ok(Predicate::In {
            variable: var,
            values,
        });
    }
    if let Some((var, val)) = t.split_once(">=") {
        return Ok(Predicate::Ge {
            variable: var.trim().into(),
            value: parse_number(val, t)?,
        });
    }
    if let Some((var, val)) = t.split_once('<') {
        return Ok(Predicate::Lt {
            variable: var.trim().into(),
            value: parse_number(val, t)?,
        });
    }
    if let Some((var, val)) = t.split_once('=') {
        return Ok(Predicate::In {
            variable: var.trim().into(),
            values: vec![val.trim().trim_matches('"').to_string()],
        });
    }
    Err(Error::Config(format!("cannot parse predicate {t:?}")))
}

impl FromStr for Predicate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts = s
            .split('&')
            .map(parse_atom)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(match parts.len() {
            1 => parts.into_iter().next().expect("one part"),
            _ => Predicate::And(parts),
        })
    }
}

impl TryFrom<String> for Predicate {
    type Error = Error;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Predicate> for String {
    fn from(p: Predicate) -> String {
        p.to_string()
    }
}
