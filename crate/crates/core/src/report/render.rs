use std::fmt::Write;

use super::config::Format;

/// One rendered value. Markdown rounds; csv keeps full precision.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    /// A fraction shown in percent with the given markdown decimals.
    Pct(f64, usize),
    Num(f64, usize),
    /// Scientific notation with the given significant decimals.
    Sci(f64, usize),
    /// A p-value in percent, "<1" below 1% in markdown.
    PValue(f64),
    Int(i64),
    Flag(bool),
    Empty,
}

impl Cell {
    pub fn text(s: impl Into<String>) -> Self {
        Cell::Text(s.into())
    }

    pub fn opt_pct(v: Option<f64>, digits: usize) -> Self {
        v.map_or(Cell::Empty, |v| Cell::Pct(v, digits))
    }

    fn markdown(&self) -> String {
        match self {
            Cell::Text(s) => s.replace('|', "\\|"),
            Cell::Pct(v, d) => format!("{:.*}", d, v * 100.0),
            Cell::Num(v, d) => format!("{v:.d$}"),
            Cell::Sci(v, d) => format!("{v:.d$e}"),
            Cell::PValue(p) if *p < 0.01 => "<1".into(),
            Cell::PValue(p) => format!("{:.0}", p * 100.0),
            Cell::Int(i) => i.to_string(),
            Cell::Flag(b) => if *b { "yes" } else { "no" }.into(),
            Cell::Empty => String::new(),
        }
    }

    fn csv(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Pct(v, _) | Cell::PValue(v) => format!("{}", v * 100.0),
            Cell::Num(v, _) | Cell::Sci(v, _) => format!("{v}"),
            Cell::Int(i) => i.to_string(),
            Cell::Flag(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// File stem for csv output.
    pub name: String,
    pub title: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub notes: Vec<String>,
}

impl Table {
    pub fn new(name: &str, title: &str, headers: &[&str]) -> Self {
        Table {
            name: name.into(),
            title: title.into(),
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn row(&mut self, cells: Vec<Cell>) {
        debug_assert_eq!(cells.len(), self.headers.len());
        self.rows.push(cells);
    }

    pub fn note(&mut self, n: impl Into<String>) {
        self.notes.push(n.into());
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!("## {}\n\n", self.title);
        let _ = writeln!(out, "| {} |", self.headers.join(" | "));
        let _ = writeln!(out, "|{}", "---|".repeat(self.headers.len()));
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(Cell::markdown).collect();
            let _ = writeln!(out, "| {} |", cells.join(" | "));
        }
        if !self.notes.is_empty() {
            out.push('\n');
            for n in &self.notes {
                let _ = writeln!(out, "{n}");
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.headers).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::csv)).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
    }
}

/// What a command produced: tables for csv/markdown, a json document.
#[derive(Debug, Clone)]
pub struct Rendered {
    pub name: String,
    pub json: serde_json::Value,
    pub tables: Vec<Table>,
}

impl Rendered {
    /// `(file name, contents)` pairs for an output directory.
    pub fn files(&self, format: Format) -> Vec<(String, String)> {
        match format {
            Format::Json => vec![(format!("{}.json", self.name), self.json_text())],
            Format::Csv => self.tables.iter().map(|t| (format!("{}.csv", t.name), t.to_csv())).collect(),
            Format::Markdown => vec![(format!("{}.md", self.name), self.markdown())],
        }
    }

    /// Everything as one stream, for stdout.
    pub fn text(&self, format: Format) -> String {
        match format {
            Format::Json => self.json_text(),
            Format::Markdown => self.markdown(),
            Format::Csv => self
                .tables
                .iter()
                .map(|t| format!("# {}\n{}", t.name, t.to_csv()))
                .collect::<Vec<_>>()
                .join("\n"),
        }
    }

    fn json_text(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.json).expect("json values serialize");
        s.push('\n');
        s
    }

    fn markdown(&self) -> String {
        self.tables.iter().map(Table::to_markdown).collect::<Vec<_>>().join("\n")
    }
}
