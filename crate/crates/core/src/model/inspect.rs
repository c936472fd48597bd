use std::fmt::Write as _;

use super::forward::InspectionTrace;
use crate::error::{FormatError, Result};
use crate::gradengine::Tensor2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixKind {
    Selection,
    Mutation,
}

/// One exported matrix with the context needed to label it.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixRecord {
    pub kind: MatrixKind,
    pub generation: usize,
    /// 1-based layer index.
    pub layer: usize,
    pub matrix: Tensor2,
}

/// Indices sorting `fitness` ascending (best first); ties keep input order.
pub fn fitness_ranking(fitness: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..fitness.len()).collect();
    order.sort_by(|&a, &b| fitness[a].total_cmp(&fitness[b]));
    order
}

/// Head-averaged selection matrices reordered so that row/column 0 is the
/// best individual, plus the individual-averaged mutation matrices.
pub fn export_matrices(trace: &InspectionTrace, generation: usize) -> Vec<MatrixRecord> {
    let order = fitness_ranking(&trace.fitness);
    let mut out = Vec::new();
    for (i, layer) in trace.layers.iter().enumerate() {
        if let Some(sel) = &layer.selection {
            let ranked =
                Tensor2::from_fn(sel.rows(), sel.cols(), |r, c| sel.get(order[r], order[c]));
            out.push(MatrixRecord {
                kind: MatrixKind::Selection,
                generation,
                layer: i + 1,
                matrix: ranked,
            });
        }
        if let Some(m) = &layer.mutation {
            out.push(MatrixRecord {
                kind: MatrixKind::Mutation,
                generation,
                layer: i + 1,
                matrix: m.clone(),
            });
        }
    }
    out
}

/// Column sums of a selection matrix: how much each individual contributes.
pub fn column_mass(matrix: &Tensor2) -> Vec<f64> {
    (0..matrix.cols())
        .map(|c| (0..matrix.rows()).map(|r| matrix.get(r, c)).sum())
        .collect()
}

impl MatrixRecord {
    pub fn header(&self) -> String {
        match self.kind {
            MatrixKind::Selection => format!(
                "# selection N={} gen={} layer={}",
                self.matrix.rows(),
                self.generation,
                self.layer
            ),
            MatrixKind::Mutation => format!(
                "# mutation d={} gen={} layer={}",
                self.matrix.rows(),
                self.generation,
                self.layer
            ),
        }
    }

    /// Header line followed by one comma-separated line per row.
    pub fn to_text(&self) -> String {
        let mut s = self.header();
        s.push('\n');
        for row in self.matrix.row_iter() {
            let mut first = true;
            for v in row {
                if !first {
                    s.push(',');
                }
                first = false;
                write!(s, "{v}").expect("writing to a String");
            }
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |m: &str| FormatError::Malformed(m.to_string());
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty matrix file"))?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("#") {
            return Err(bad("missing '#' header").into());
        }
        let kind = match parts.next() {
            Some("selection") => MatrixKind::Selection,
            Some("mutation") => MatrixKind::Mutation,
            _ => return Err(bad("unknown matrix kind").into()),
        };
        let mut field = |name: &str| -> Result<usize> {
            let tok = parts.next().ok_or_else(|| bad("short header"))?;
            tok.strip_prefix(name)
                .and_then(|v| v.strip_prefix('='))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad(&format!("bad header field {tok}")).into())
        };
        let size = field(if kind == MatrixKind::Selection {
            "N"
        } else {
            "d"
        })?;
        let generation = field("gen")?;
        let layer = field("layer")?;
        let rows = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split(',')
                    .map(|v| v.trim().parse::<f64>().map_err(|_| bad("bad number")))
                    .collect::<std::result::Result<Vec<_>, _>>()
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let matrix = Tensor2::from_rows(&rows)?;
        if matrix.shape() != (size, size) {
            return Err(bad("matrix size disagrees with header").into());
        }
        Ok(Self {
            kind,
            generation,
            layer,
            matrix,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::forward::LayerTrace;

    #[test]
    fn uniform_selection_exports_constant() {
        let trace = InspectionTrace {
            fitness: vec![3.0, 1.0, 2.0, 0.5],
            layers: vec![LayerTrace {
                selection: Some(Tensor2::filled(4, 4, 0.25)),
                mutation: None,
            }],
        };
        let recs = export_matrices(&trace, 1);
        assert_eq!(recs.len(), 1);
        assert!(recs[0].matrix.data().iter().all(|&v| v == 0.25));
        assert_eq!(recs[0].header(), "# selection N=4 gen=1 layer=1");
    }

    #[test]
    fn reordering_is_a_permutation() {
        let sel = Tensor2::from_fn(3, 3, |i, j| {
            [[0.5, 0.3, 0.2], [0.1, 0.1, 0.8], [0.6, 0.2, 0.2]][i][j]
        });
        let trace = InspectionTrace {
            fitness: vec![5.0, -1.0, 2.0],
            layers: vec![LayerTrace {
                selection: Some(sel.clone()),
                mutation: Some(Tensor2::identity(2)),
            }],
        };
        let recs = export_matrices(&trace, 7);
        let ranked = &recs[0].matrix;
        // Best individual is row 1 of the input.
        assert_eq!(ranked.get(0, 0), sel.get(1, 1));
        assert_eq!(ranked.get(0, 2), sel.get(1, 0));
        for r in ranked.row_iter() {
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(recs[1].kind, MatrixKind::Mutation);
        assert_eq!(recs[1].header(), "# mutation d=2 gen=7 layer=1");
    }

    #[test]
    fn text_round_trip() {
        let rec = MatrixRecord {
            kind: MatrixKind::Selection,
            generation: 250,
            layer: 2,
            matrix: Tensor2::from_fn(2, 2, |i, j| 0.1 + i as f64 * 0.3 + j as f64 / 7.0),
        };
        let text = rec.to_text();
        assert!(text.starts_with("# selection N=2 gen=250 layer=2\n"));
        assert_eq!(MatrixRecord::parse(&text).unwrap(), rec);
        assert!(MatrixRecord::parse("# selection N=3 gen=1 layer=1\n1,2\n3,4\n").is_err());
    }
}
