//! CSV ingestion and export of IV data.

use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::design::IvData;
use crate::error::{Error, Result};

/// Which CSV columns play which role.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ColumnMap {
    pub y: String,
    pub x: Vec<String>,
    pub z1: Vec<String>,
    pub z2: Vec<String>,
}

impl ColumnMap {
    /// Parses `y=wage,x=educ,z1=exper+age,z2=qob`. Extra names may also be
    /// listed after a comma (`z1=exper,age`) until the next `key=`.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut map = ColumnMap::default();
        let mut current: Option<&str> = None;
        let mut seen = HashMap::new();
        for token in spec.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let (key, names) = match token.split_once('=') {
                Some((k, v)) => {
                    let k = k.trim();
                    if !["y", "x", "z1", "z2"].contains(&k) {
                        return Err(Error::Input(format!("unknown role '{k}' in column map (expected y, x, z1, z2)")));
                    }
                    if seen.insert(k.to_string(), ()).is_some() {
                        return Err(Error::Input(format!("role '{k}' given twice in column map")));
                    }
                    current = Some(k);
                    (k, v)
                }
                None => match current {
                    Some(k) => (k, token),
                    None => return Err(Error::Input(format!("column map entry '{token}' has no role"))),
                },
            };
            for name in names.split('+').map(str::trim).filter(|n| !n.is_empty()) {
                match key {
                    "y" if map.y.is_empty() => map.y = name.to_string(),
                    "y" => return Err(Error::Input("y takes exactly one column".into())),
                    "x" => map.x.push(name.to_string()),
                    "z1" => map.z1.push(name.to_string()),
                    _ => map.z2.push(name.to_string()),
                }
            }
        }
        if map.y.is_empty() || map.x.is_empty() || map.z2.is_empty() {
            return Err(Error::Input("column map needs y, x and z2".into()));
        }
        Ok(map)
    }

    pub fn to_spec(&self) -> String {
        let mut s = format!("y={},x={}", self.y, self.x.join("+"));
        if !self.z1.is_empty() {
            s.push_str(&format!(",z1={}", self.z1.join("+")));
        }
        s.push_str(&format!(",z2={}", self.z2.join("+")));
        s
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim().to_ascii_lowercase().as_str(), "" | "na" | "nan" | "null" | ".")
}

/// Reads a comma-separated file with a header row. Rows in error messages
/// count data rows from 1.
pub fn load_csv(path: &Path, map: &ColumnMap, add_intercept: bool) -> Result<IvData> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let locate = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(format!("column '{name}' not found in {}", path.display())))
    };
    let y_idx = locate(&map.y)?;
    let x_idx = map.x.iter().map(|c| locate(c)).collect::<Result<Vec<_>>>()?;
    let z1_idx = map.z1.iter().map(|c| locate(c)).collect::<Result<Vec<_>>>()?;
    let z2_idx = map.z2.iter().map(|c| locate(c)).collect::<Result<Vec<_>>>()?;

    let mut y = Vec::new();
    let (mut x, mut z1, mut z2) = (Vec::new(), Vec::new(), Vec::new());
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + 1;
        let cell = |idx: usize| -> Result<f64> {
            let column = headers.get(idx).unwrap_or("").to_string();
            let raw = record.get(idx).unwrap_or("");
            if is_missing(raw) {
                return Err(Error::MissingData { row, column });
            }
            raw.trim().parse::<f64>().map_err(|e| Error::Parse { row, column, message: format!("'{raw}': {e}") })
        };
        y.push(cell(y_idx)?);
        for &i in &x_idx {
            x.push(cell(i)?);
        }
        if add_intercept {
            z1.push(1.0);
        }
        for &i in &z1_idx {
            z1.push(cell(i)?);
        }
        for &i in &z2_idx {
            z2.push(cell(i)?);
        }
    }
    let n = y.len();
    let dz1 = z1_idx.len() + usize::from(add_intercept);
    let shape = |v: Vec<f64>, c: usize| Array2::from_shape_vec((n, c), v).expect("row-major fill");
    IvData::new(Array1::from(y), shape(x, x_idx.len()), shape(z1, dz1), shape(z2, z2_idx.len()))
}

/// Writes `y, x1.., z1_1.., z2_1..` and returns the matching column map.
pub fn write_csv(data: &IvData, path: &Path) -> Result<ColumnMap> {
    let map = ColumnMap {
        y: "y".into(),
        x: (1..=data.x.ncols()).map(|j| format!("x{j}")).collect(),
        z1: (1..=data.z1.ncols()).map(|j| format!("z1_{j}")).collect(),
        z2: (1..=data.z2.ncols()).map(|j| format!("z2_{j}")).collect(),
    };
    let mut f = std::io::BufWriter::new(File::create(path)?);
    let header: Vec<&str> = std::iter::once(map.y.as_str())
        .chain(map.x.iter().map(String::as_str))
        .chain(map.z1.iter().map(String::as_str))
        .chain(map.z2.iter().map(String::as_str))
        .collect();
    writeln!(f, "{}", header.join(","))?;
    for i in 0..data.n() {
        let cells: Vec<String> = std::iter::once(data.y[i])
            .chain(data.x.row(i).iter().copied())
            .chain(data.z1.row(i).iter().copied())
            .chain(data.z2.row(i).iter().copied())
            .map(|v| v.to_string())
            .collect();
        writeln!(f, "{}", cells.join(","))?;
    }
    f.flush()?;
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_syntax() {
        let m = ColumnMap::parse("y=wage, x=educ, z1=exper,age, z2=qob+sib").unwrap();
        assert_eq!(m.y, "wage");
        assert_eq!(m.z1, vec!["exper", "age"]);
        assert_eq!(m.z2, vec!["qob", "sib"]);
        assert_eq!(ColumnMap::parse(&m.to_spec()).unwrap(), m);
        assert!(ColumnMap::parse("y=a,x=b").is_err());
        assert!(ColumnMap::parse("y=a,w=b,x=c,z2=d").is_err());
        assert!(ColumnMap::parse("y=a+b,x=c,z2=d").is_err());
        assert!(ColumnMap::parse("a,y=a,x=c,z2=d").is_err());
    }
}
