//! One record per line, `key=value` pairs separated by single spaces. Values
//! never contain whitespace or `=`.

use std::fmt::Display;

/// Shortest text that parses back to the same bits.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map_or_else(|| "null".to_string(), num)
}

#[derive(Debug, Clone, Default)]
pub struct Record {
    fields: Vec<(String, String)>,
}

impl Record {
    pub fn new(kind: &str) -> Self {
        Self::default().with("record", kind)
    }

    pub fn with(mut self, key: &str, value: impl Display) -> Self {
        self.fields.push((key.to_string(), value.to_string()));
        self
    }

    pub fn float(self, key: &str, value: f64) -> Self {
        self.with(key, num(value))
    }

    pub fn line(&self) -> String {
        let parts: Vec<String> = self.fields.iter().map(|(k, v)| format!("{k}={v}")).collect();
        parts.join(" ")
    }
}

/// Parsed line: ordered key-value pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Parsed(pub Vec<(String, String)>);

impl Parsed {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn kind(&self) -> Option<&str> {
        self.get("record")
    }

    pub fn require<T: std::str::FromStr>(&self, key: &str) -> Result<T, String> {
        let raw = self.get(key).ok_or_else(|| format!("missing field '{key}'"))?;
        raw.parse().map_err(|_| format!("field '{key}' has bad value '{raw}'"))
    }
}

pub fn parse_line(line: &str) -> Result<Parsed, String> {
    line.split(' ')
        .filter(|t| !t.is_empty())
        .map(|tok| {
            tok.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| format!("token '{tok}' is not key=value"))
        })
        .collect::<Result<Vec<_>, _>>()
        .map(Parsed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0, 1e-300, -2.5e17, f64::INFINITY, 1.0 / 3.0] {
            assert_eq!(num(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
        assert!(num(f64::NAN).parse::<f64>().unwrap().is_nan());
    }

    #[test]
    fn record_line_and_parse() {
        let r = Record::new("stage")
            .with("stage", 2)
            .float("objective", 0.5)
            .with("ok", true);
        assert_eq!(r.line(), "record=stage stage=2 objective=0.5 ok=true");
        let p = parse_line(&r.line()).unwrap();
        assert_eq!(p.kind(), Some("stage"));
        assert_eq!(p.require::<usize>("stage").unwrap(), 2);
        assert!(p.require::<usize>("missing").is_err());
        assert!(parse_line("a=1 junk").is_err());
    }
}
