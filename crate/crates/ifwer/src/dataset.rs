//! CSV ingestion: `id,p` followed by covariate columns, or a `parent`
//! column naming each node's parent id for tree-structured hypotheses.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use ifwer_core::simulation::parent_covariates;
use ifwer_core::Tree;

use crate::error::{AppError, AppResult};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub ids: Vec<i64>,
    pub pvalues: Vec<f64>,
    pub covariate_names: Vec<String>,
    pub covariates: Vec<Vec<f64>>,
    pub tree: Option<Tree>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn from_path(path: &Path) -> AppResult<Dataset> {
        let file = std::fs::File::open(path).map_err(|e| AppError::io(path, e))?;
        Dataset::from_reader(file)
    }

    pub fn from_reader<R: Read>(reader: R) -> AppResult<Dataset> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| AppError::Dataset(format!("cannot read header: {e}")))?
            .clone();
        if headers.len() < 2 || &headers[0] != "id" || &headers[1] != "p" {
            return Err(AppError::Dataset(
                "header must start with the columns id,p".into(),
            ));
        }
        let parent_col = headers.iter().position(|h| h == "parent");
        let covariate_cols: Vec<usize> = (2..headers.len()).filter(|&c| Some(c) != parent_col).collect();

        let mut ids = Vec::new();
        let mut pvalues = Vec::new();
        let mut covariates = Vec::new();
        let mut parent_ids: Vec<Option<i64>> = Vec::new();
        let mut lines = Vec::new();
        let mut seen = HashMap::new();
        for record in rdr.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                AppError::Row {
                    line,
                    message: e.to_string(),
                }
            })?;
            let line = record.position().map_or(0, |p| p.line());
            let bad = |message: String| AppError::Row { line, message };
            let id: i64 = record[0]
                .parse()
                .map_err(|_| bad(format!("id {:?} is not an integer", &record[0])))?;
            if let Some(prev) = seen.insert(id, line) {
                return Err(bad(format!("duplicate id {id}, first seen on line {prev}")));
            }
            let p: f64 = record[1]
                .parse()
                .map_err(|_| bad(format!("p-value {:?} is not a number", &record[1])))?;
            if !(0.0..=1.0).contains(&p) {
                return Err(bad(format!("p-value {p} is outside [0, 1]")));
            }
            let row = covariate_cols
                .iter()
                .map(|&c| {
                    record[c]
                        .parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| bad(format!("column {} value {:?} is not a finite number", &headers[c], &record[c])))
                })
                .collect::<AppResult<Vec<f64>>>()?;
            if let Some(c) = parent_col {
                let raw = &record[c];
                let parent = if raw.is_empty() || raw == "-1" {
                    None
                } else {
                    Some(raw.parse::<i64>().map_err(|_| bad(format!("parent {raw:?} is not an integer id")))?)
                };
                parent_ids.push(parent);
            }
            ids.push(id);
            pvalues.push(p);
            covariates.push(row);
            lines.push(line);
        }
        if ids.is_empty() {
            return Err(AppError::Dataset("no data rows".into()));
        }

        let tree = match parent_col {
            None => None,
            Some(_) => {
                let index: HashMap<i64, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
                let parents = parent_ids
                    .iter()
                    .zip(&lines)
                    .map(|(p, &line)| match p {
                        None => Ok(None),
                        Some(pid) => index.get(pid).map(|&i| Some(i)).ok_or_else(|| AppError::Row {
                            line,
                            message: format!("parent id {pid} does not appear in the id column"),
                        }),
                    })
                    .collect::<AppResult<Vec<_>>>()?;
                Some(Tree::from_parents(parents)?)
            }
        };
        let mut covariate_names: Vec<String> = covariate_cols.iter().map(|&c| headers[c].to_string()).collect();
        if let (Some(t), true) = (&tree, covariate_cols.is_empty()) {
            covariates = parent_covariates(t);
            covariate_names = vec!["parent_index".into()];
        }
        Ok(Dataset {
            ids,
            pvalues,
            covariate_names,
            covariates,
            tree,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> AppResult<Dataset> {
        Dataset::from_reader(text.as_bytes())
    }

    #[test]
    fn grid_rows() {
        let d = parse("id,p,x1,x2\n1,0.01,0,1\n2,0.5,1,1\n").unwrap();
        assert_eq!(d.ids, vec![1, 2]);
        assert_eq!(d.covariates[1], vec![1.0, 1.0]);
        assert!(d.tree.is_none());
    }

    #[test]
    fn no_covariates() {
        let d = parse("id,p\n7,0.2\n").unwrap();
        assert_eq!(d.covariates, vec![Vec::<f64>::new()]);
    }

    #[test]
    fn tree_rows() {
        let d = parse("id,p,parent\n10,0.1,\n11,0.2,10\n12,0.3,10\n13,0.4,11\n").unwrap();
        let t = d.tree.unwrap();
        assert_eq!(t.parent(3), Some(1));
        assert_eq!(d.covariates[3], vec![1.0]);
        assert_eq!(d.covariates[0], vec![-1.0]);
    }

    #[test]
    fn errors_name_the_line() {
        let e = parse("id,p\n1,0.5\n2,1.2\n").unwrap_err().to_string();
        assert!(e.contains("line 3") && e.contains("1.2"), "{e}");
        let e = parse("id,p\n1,0.5\n1,0.2\n").unwrap_err().to_string();
        assert!(e.contains("duplicate id 1"), "{e}");
        let e = parse("id,p,x1\n1,0.5,abc\n").unwrap_err().to_string();
        assert!(e.contains("line 2") && e.contains("x1"), "{e}");
        assert!(parse("p,id\n0.5,1\n").is_err());
        assert!(parse("id,p\n").is_err());
        let e = parse("id,p,parent\n1,0.5,\n2,0.5,9\n").unwrap_err().to_string();
        assert!(e.contains("parent id 9"), "{e}");
        assert!(parse("id,p,parent\n1,0.5,\n2,0.5,\n").is_err());
    }
}
