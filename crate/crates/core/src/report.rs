//! Report serialization with pinned numeric formatting.
//!
//! JSON payloads carry 17 significant digits (round-trip exact for f64),
//! CSV payloads 12; both are emitted through a deterministic writer with
//! explicit key order so identical runs produce identical bytes.

use std::fmt::Write as _;

/// 17 significant digits, for JSON.
pub fn fmt_json_f64(x: f64) -> String {
    if x.is_nan() {
        return "null".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "1e999".to_string() } else { "-1e999".to_string() };
    }
    format!("{x:.16e}")
}

/// 12 significant digits, for CSV.
pub fn fmt_csv_f64(x: f64) -> String {
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".to_string() } else { "-inf".to_string() };
    }
    format!("{x:.11e}")
}

/// JSON value with deterministic member order.
#[derive(Debug, Clone)]
pub enum Json {
    Null,
    Bool(bool),
    Int(i64),
    Num(f64),
    Str(String),
    Arr(Vec<Json>),
    Obj(Vec<(String, Json)>),
}

impl Json {
    pub fn obj(fields: Vec<(&str, Json)>) -> Json {
        Json::Obj(fields.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
    }

    pub fn nums(xs: &[f64]) -> Json {
        Json::Arr(xs.iter().map(|&x| Json::Num(x)).collect())
    }

    fn escape(s: &str, out: &mut String) {
        out.push('"');
        for c in s.chars() {
            match c {
                '"' => out.push_str("\\\""),
                '\\' => out.push_str("\\\\"),
                '\n' => out.push_str("\\n"),
                '\r' => out.push_str("\\r"),
                '\t' => out.push_str("\\t"),
                c if (c as u32) < 0x20 => {
                    let _ = write!(out, "\\u{:04x}", c as u32);
                }
                c => out.push(c),
            }
        }
        out.push('"');
    }

    fn write(&self, indent: usize, out: &mut String) {
        match self {
            Json::Null => out.push_str("null"),
            Json::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            Json::Int(i) => {
                let _ = write!(out, "{i}");
            }
            Json::Num(x) => out.push_str(&fmt_json_f64(*x)),
            Json::Str(s) => Json::escape(s, out),
            Json::Arr(items) => {
                if items.is_empty() {
                    out.push_str("[]");
                    return;
                }
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push('\n');
                    out.push_str(&"  ".repeat(indent + 1));
                    item.write(indent + 1, out);
                }
                out.push('\n');
                out.push_str(&"  ".repeat(indent));
                out.push(']');
            }
            Json::Obj(fields) => {
                if fields.is_empty() {
                    out.push_str("{}");
                    return;
                }
                out.push('{');
                for (i, (k, v)) in fields.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push('\n');
                    out.push_str(&"  ".repeat(indent + 1));
                    Json::escape(k, out);
                    out.push_str(": ");
                    v.write(indent + 1, out);
                }
                out.push('\n');
                out.push_str(&"  ".repeat(indent));
                out.push('}');
            }
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        self.write(0, &mut out);
        out.push('\n');
        out
    }
}

/// Line-oriented CSV writer with `#`-prefixed header comments and optional
/// named sections.
#[derive(Debug, Default)]
pub struct CsvWriter {
    out: String,
}

impl CsvWriter {
    pub fn new() -> Self {
        CsvWriter::default()
    }

    pub fn comment(&mut self, line: &str) {
        self.out.push_str("# ");
        self.out.push_str(line);
        self.out.push('\n');
    }

    pub fn section(&mut self, name: &str) {
        self.out.push_str("[");
        self.out.push_str(name);
        self.out.push_str("]\n");
    }

    pub fn header(&mut self, cols: &[&str]) {
        self.out.push_str(&cols.join(","));
        self.out.push('\n');
    }

    pub fn row(&mut self, cells: &[String]) {
        self.out.push_str(&cells.join(","));
        self.out.push('\n');
    }

    pub fn num_row(&mut self, xs: &[f64]) {
        let cells: Vec<String> = xs.iter().map(|&x| fmt_csv_f64(x)).collect();
        self.row(&cells);
    }

    pub fn finish(self) -> String {
        self.out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_numbers_have_17_significant_digits() {
        assert_eq!(fmt_json_f64(1.0), "1.0000000000000000e0");
        let third = 1.0 / 3.0;
        let printed = fmt_json_f64(third);
        assert_eq!(printed.parse::<f64>().unwrap(), third);
    }

    #[test]
    fn csv_numbers_have_12_significant_digits() {
        assert_eq!(fmt_csv_f64(2.5), "2.50000000000e0");
    }

    #[test]
    fn json_object_renders_in_given_order() {
        let j = Json::obj(vec![
            ("b", Json::Int(1)),
            ("a", Json::Bool(true)),
            ("s", Json::Str("x\"y".to_string())),
        ]);
        let s = j.render();
        let b = s.find("\"b\"").unwrap();
        let a = s.find("\"a\"").unwrap();
        assert!(b < a);
        assert!(s.contains("x\\\"y"));
    }
}
