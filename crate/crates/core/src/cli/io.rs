//! Grouped-data CSV files: header `group,tau,k,n,x1,...,xJ`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::regression::{Dataset, GroupRecord};

const FIXED: [&str; 4] = ["group", "tau", "k", "n"];

fn parse_reader<R: std::io::Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::InvalidData(format!("line 1: {e}")))?.clone();
    let names: Vec<&str> = header.iter().collect();
    if names.len() < 5 || names[..4] != FIXED {
        return Err(Error::InvalidData(format!(
            "line 1: header must be group,tau,k,n,x1,...,xJ (got {})",
            names.join(",")
        )));
    }
    for (j, name) in names[4..].iter().enumerate() {
        if *name != format!("x{}", j + 1) {
            return Err(Error::InvalidData(format!("line 1: expected column x{}, got '{name}'", j + 1)));
        }
    }
    let dim = names.len() - 4;
    let mut groups = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::InvalidData(format!("line {line}: {e}"))
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize| rec.get(i).unwrap_or("");
        let bad = |col: &str, v: &str| Error::InvalidData(format!("line {line}: cannot parse {col} = '{v}'"));
        let tau: f64 = field(1).parse().map_err(|_| bad("tau", field(1)))?;
        let k: u32 = field(2).parse().map_err(|_| bad("k", field(2)))?;
        let n: u32 = field(3).parse().map_err(|_| bad("n", field(3)))?;
        let mut x = Vec::with_capacity(dim);
        for j in 0..dim {
            let v = field(4 + j);
            x.push(v.parse::<f64>().map_err(|_| bad(&format!("x{}", j + 1), v))?);
        }
        let g = GroupRecord::new(tau, k, n, x).map_err(|e| Error::InvalidData(format!("line {line}: {e}")))?;
        groups.push(g);
    }
    Dataset::new(groups)
}

pub fn read_dataset_str(text: &str) -> Result<Dataset> {
    parse_reader(text.as_bytes())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_dataset_str(&text)
}

pub fn dataset_to_csv(data: &Dataset) -> String {
    let mut out = String::from("group,tau,k,n");
    for j in 1..=data.covariate_dim() {
        out.push_str(&format!(",x{j}"));
    }
    out.push('\n');
    for (i, g) in data.groups().iter().enumerate() {
        out.push_str(&format!("{},{},{},{}", i + 1, g.tau, g.k, g.n));
        for v in &g.x {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    fs::write(path, dataset_to_csv(data)).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}
