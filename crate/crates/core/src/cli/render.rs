//! Display formatting: markdown-style tables, CSV, rounding rules.

use std::io::{self, Write};

/// Formats `v` with three significant figures, dropping trailing zeros.
pub fn sig3(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if v == 0.0 {
        return "0".into();
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = 2 - magnitude;
    let s = if decimals <= 0 {
        let scale = 10f64.powi(-decimals);
        format!("{}", (v / scale).round() * scale)
    } else {
        format!("{:.*}", decimals as usize, v)
    };
    trim_zeros(s)
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// `0.000625` → `"0.0625%"`.
pub fn percent(p: f64) -> String {
    format!("{}%", sig3(p * 100.0))
}

/// Rounds to the nearest million dollars: `-49_375_000` → `"-$49M"`.
pub fn millions(v: f64) -> String {
    let m = (v / 1e6).round();
    if m == 0.0 {
        "$0M".into()
    } else if m < 0.0 {
        format!("-${}M", -m)
    } else {
        format!("${m}M")
    }
}

/// `1e9` → `"$1B"`, `50e6` → `"$50M"`.
pub fn dollars_short(v: f64) -> String {
    let (sign, a) = if v < 0.0 { ("-", -v) } else { ("", v) };
    if a >= 1e9 {
        format!("{sign}${}B", sig3(a / 1e9))
    } else if a >= 1e6 {
        format!("{sign}${}M", sig3(a / 1e6))
    } else {
        format!("{sign}${}", sig3(a))
    }
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<S: Into<String>>(&mut self, row: impl IntoIterator<Item = S>) {
        self.rows.push(row.into_iter().map(Into::into).collect());
    }

    /// `| a | b |` lines, header first.
    pub fn write_markdown(&self, out: &mut dyn Write) -> io::Result<()> {
        writeln!(out, "| {} |", self.header.join(" | "))?;
        let rule: Vec<&str> = self.header.iter().map(|_| "---").collect();
        writeln!(out, "| {} |", rule.join(" | "))?;
        for row in &self.rows {
            writeln!(out, "| {} |", row.join(" | "))?;
        }
        Ok(())
    }

    pub fn write_csv(&self, out: &mut dyn Write) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()
    }
}

/// Raw number for machine-readable output; `None` becomes an empty field.
pub fn raw(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percents_match_table_style() {
        assert_eq!(percent(0.000625), "0.0625%");
        assert_eq!(percent(0.005), "0.5%");
        assert_eq!(percent(0.0125), "1.25%");
        assert_eq!(percent(0.125), "12.5%");
        assert_eq!(percent(0.1), "10%");
        assert_eq!(percent(0.33333), "33.3%");
    }

    #[test]
    fn millions_rounding() {
        assert_eq!(millions(-49.375e6), "-$49M");
        assert_eq!(millions(-43.75e6), "-$44M");
        assert_eq!(millions(12.5e6), "$13M");
        assert_eq!(millions(0.0), "$0M");
        assert_eq!(millions(-1.0), "$0M");
        assert_eq!(millions(450e6), "$450M");
    }

    #[test]
    fn short_dollars() {
        assert_eq!(dollars_short(1e9), "$1B");
        assert_eq!(dollars_short(100e9), "$100B");
        assert_eq!(dollars_short(50e6), "$50M");
    }

    #[test]
    fn sig3_large_values() {
        assert_eq!(sig3(79.0), "79");
        assert_eq!(sig3(12345.0), "12300");
        assert_eq!(sig3(-0.0012345), "-0.00123");
    }

    #[test]
    fn csv_quotes_when_needed() {
        let mut t = Table::new(["a", "b"]);
        t.push(["x,y", ""]);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "a,b\n\"x,y\",\n");
    }
}
