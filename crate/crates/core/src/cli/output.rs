//! CSV assembly and number formatting.

use std::fmt::Write as _;

/// `x` rounded to `digits` significant digits, in fixed notation for
/// moderate magnitudes and scientific otherwise.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return format!("{:.*}", digits.saturating_sub(1), 0.0);
    }
    // exponent after rounding, so 9.9999996 becomes 10.0000 rather than 9.99999
    let sci = format!("{:.*e}", digits - 1, x);
    let exp: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    if (-5..15).contains(&exp) {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        sci
    }
}

/// A CSV document with a `#` comment header.
#[derive(Debug, Clone)]
pub struct Csv {
    digits: usize,
    text: String,
}

impl Csv {
    pub fn new(digits: usize) -> Self {
        Self {
            digits,
            text: String::new(),
        }
    }

    pub fn comment(&mut self, line: &str) {
        for l in line.lines() {
            let _ = writeln!(self.text, "# {l}");
        }
    }

    pub fn header(&mut self, columns: &[&str]) {
        self.text.push_str(&columns.join(","));
        self.text.push('\n');
    }

    pub fn row(&mut self, cells: &[Cell]) {
        let line: Vec<String> = cells.iter().map(|c| c.render(self.digits)).collect();
        self.text.push_str(&line.join(","));
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

pub enum Cell {
    Num(f64),
    Int(usize),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self, digits: usize) -> String {
        match self {
            Cell::Num(x) => fmt_sig(*x, digits),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => quote(s),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_owned())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(fmt_sig(1.16774321, 6), "1.16774");
        assert_eq!(fmt_sig(20.06104, 6), "20.0610");
        assert_eq!(fmt_sig(25.0, 6), "25.0000");
        assert_eq!(fmt_sig(0.0620981, 3), "0.0621");
        assert_eq!(fmt_sig(9.9999996, 6), "10.0000");
        assert_eq!(fmt_sig(-2.46813579, 4), "-2.468");
        assert_eq!(fmt_sig(123456.7, 6), "123457");
        assert_eq!(fmt_sig(1.5e-9, 6), "1.50000e-9");
        assert_eq!(fmt_sig(0.0, 6), "0.00000");
        assert_eq!(fmt_sig(f64::NAN, 6), "nan");
    }

    #[test]
    fn csv_layout() {
        let mut c = Csv::new(4);
        c.comment("a\nb");
        c.header(&["x", "note"]);
        c.row(&[Cell::Num(1.0), Cell::from("p, q")]);
        c.row(&[Cell::Int(3), Cell::Empty]);
        assert_eq!(c.into_string(), "# a\n# b\nx,note\n1.000,\"p, q\"\n3,\n");
    }
}
