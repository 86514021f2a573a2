use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Result, SageError};

/// Column roles of an ensemble CSV, stored as a JSON sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub parameters: Vec<String>,
    pub targets: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
}

impl CsvSchema {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SageError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| SageError::parse(path.display().to_string(), e))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("schema serializes");
        std::fs::write(path, text + "\n").map_err(|e| SageError::io(path, e))
    }
}

fn column_index(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| SageError::input(format!("column '{name}' not found in {}", path.display())))
}

/// Reads an ensemble CSV, partitioning columns by `schema`.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| SageError::parse(path.display().to_string(), e))?;
    let headers = reader
        .headers()
        .map_err(|e| SageError::parse(path.display().to_string(), e))?
        .clone();

    let pcols = schema
        .parameters
        .iter()
        .map(|p| column_index(&headers, p, path))
        .collect::<Result<Vec<_>>>()?;
    let tcols = schema
        .targets
        .iter()
        .map(|t| column_index(&headers, t, path))
        .collect::<Result<Vec<_>>>()?;
    let id_col = schema.id.as_deref().map(|c| column_index(&headers, c, path)).transpose()?;
    let tag_col = schema.tag.as_deref().map(|c| column_index(&headers, c, path)).transpose()?;

    let mut pvals = Vec::new();
    let mut tvals = Vec::new();
    let mut ids = Vec::new();
    let mut tags = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| SageError::parse(path.display().to_string(), e))?;
        let cell = |col: usize, name: &str| -> Result<f64> {
            let raw = rec.get(col).unwrap_or("").trim();
            let v: f64 = raw.parse().map_err(|_| {
                SageError::input(format!(
                    "{}: row {} column '{name}': cannot parse '{raw}' as a number",
                    path.display(),
                    line + 1
                ))
            })?;
            if !v.is_finite() {
                return Err(SageError::input(format!(
                    "{}: row {} column '{name}': non-finite value '{raw}'",
                    path.display(),
                    line + 1
                )));
            }
            Ok(v)
        };
        for (&c, name) in pcols.iter().zip(&schema.parameters) {
            pvals.push(cell(c, name)?);
        }
        for (&c, name) in tcols.iter().zip(&schema.targets) {
            tvals.push(cell(c, name)?);
        }
        ids.push(match id_col {
            Some(c) => rec.get(c).unwrap_or("").trim().to_string(),
            None => line.to_string(),
        });
        if let Some(c) = tag_col {
            tags.push(rec.get(c).unwrap_or("").trim().to_string());
        }
    }

    let n = ids.len();
    Dataset::new(
        schema.parameters.clone(),
        schema.targets.clone(),
        DMatrix::from_row_slice(n, schema.parameters.len(), &pvals),
        DMatrix::from_row_slice(n, schema.targets.len(), &tvals),
        Some(ids),
        tag_col.map(|_| tags),
    )
}

/// Writes the view as CSV with `id`, optional `tag`, parameters, then targets.
///
/// Values use the shortest representation that parses back to the same `f64`.
pub fn write_csv<W: std::io::Write>(ds: &Dataset, out: W) -> Result<CsvSchema> {
    let err = |e: csv::Error| SageError::parse("csv output", e);
    let mut w = csv::Writer::from_writer(out);
    let tags = ds.row_tags();
    let mut header = vec!["id".to_string()];
    if tags.is_some() {
        header.push("tag".to_string());
    }
    header.extend(ds.param_names().into_iter().map(String::from));
    header.extend(ds.target_names().iter().cloned());
    w.write_record(&header).map_err(err)?;
    let ids = ds.row_ids();
    for i in 0..ds.n_rows() {
        let mut rec = vec![ids[i].to_string()];
        if let Some(t) = &tags {
            rec.push(t[i].to_string());
        }
        rec.extend((0..ds.n_params()).map(|j| ds.param(i, j).to_string()));
        rec.extend((0..ds.n_targets()).map(|t| ds.target(i, t).to_string()));
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| SageError::parse("csv output", e))?;
    Ok(CsvSchema {
        parameters: ds.param_names().into_iter().map(String::from).collect(),
        targets: ds.target_names().to_vec(),
        id: Some("id".into()),
        tag: tags.map(|_| "tag".into()),
    })
}

/// [`write_csv`] to a file.
pub fn save_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<CsvSchema> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| SageError::io(path, e))?;
    write_csv(ds, std::io::BufWriter::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn schema() -> CsvSchema {
        CsvSchema {
            parameters: vec!["a".into(), "b".into()],
            targets: vec!["y".into()],
            id: Some("id".into()),
            tag: None,
        }
    }

    #[test]
    fn loads_small_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "id,b,a,y,extra\nm1,1,2,3,x\nm2,4,5,6,x\nm3,7,8,9,x\n").unwrap();
        let ds = load_csv(&p, &schema()).unwrap();
        assert_eq!((ds.n_rows(), ds.n_params(), ds.n_targets()), (3, 2, 1));
        assert_eq!(ds.param(0, 0), 2.0);
        assert_eq!(ds.param(0, 1), 1.0);
        assert_eq!(ds.row_ids(), vec!["m1", "m2", "m3"]);
    }

    #[test]
    fn nan_cell_is_located() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "id,a,b,y\nm1,1,2,3\nm2,4,NaN,6\n").unwrap();
        let err = load_csv(&p, &schema()).unwrap_err().to_string();
        assert!(err.contains("row 2") && err.contains("'b'"), "{err}");
    }

    #[test]
    fn missing_column_and_duplicate_ids() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "id,a,y\nm1,1,3\n").unwrap();
        assert!(load_csv(&p, &schema()).unwrap_err().to_string().contains("'b'"));
        std::fs::write(&p, "id,a,b,y\nm1,1,2,3\nm1,4,5,6\n").unwrap();
        assert!(load_csv(&p, &schema()).unwrap_err().to_string().contains("duplicate"));
    }

    #[test]
    fn tags_are_read() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "id,tag,a,b,y\nm1,LHS,1,2,3\nm2,CPE,4,5,6\n").unwrap();
        let mut s = schema();
        s.tag = Some("tag".into());
        let ds = load_csv(&p, &s).unwrap();
        assert_eq!(ds.row_tags().unwrap(), vec!["LHS", "CPE"]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn save_then_load_preserves_values(vals in proptest::collection::vec(-1e6f64..1e6, 9)) {
            let ds = Dataset::new(
                vec!["a".into(), "b".into()],
                vec!["y".into()],
                DMatrix::from_row_slice(3, 2, &vals[..6]),
                DMatrix::from_row_slice(3, 1, &vals[6..]),
                None,
                None,
            ).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("rt.csv");
            let schema = save_csv(&ds, &p).unwrap();
            let back = load_csv(&p, &schema).unwrap();
            prop_assert_eq!(back.param_matrix(), ds.param_matrix());
            prop_assert_eq!(back.target_column(0), ds.target_column(0));
            prop_assert_eq!(back.row_ids(), ds.row_ids());
        }
    }
}
