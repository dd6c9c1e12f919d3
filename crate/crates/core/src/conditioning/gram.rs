use crate::error::{domain, Error, Result};
use crate::linalg::{dot, Matrix};
use crate::rng;
use serde::{Deserialize, Serialize};
use std::io::Read;

/// Entries may drift this far outside `[-1, 1]` before being clamped.
pub const CLAMP_SLACK: f64 = 1e-9;
const SYMMETRY_TOL: f64 = 1e-12;
const DIAGONAL_TOL: f64 = 1e-12;
/// Largest supported matrix order.
pub const MAX_ORDER: usize = 4096;

/// A symmetric kernel matrix. When `unit_diagonal` holds the diagonal is
/// exactly one and the off-diagonal entries lie in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    entries: Matrix,
    unit_diagonal: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct GramJson {
    n: usize,
    unit_diagonal: bool,
    entries: Vec<f64>,
}

impl GramMatrix {
    /// Validates symmetry, then detects a unit diagonal. Asymmetry up to
    /// `1e-12` is averaged away.
    pub fn new(entries: Matrix) -> Result<Self> {
        let n = entries.rows();
        if n != entries.cols() {
            return Err(domain(format!("kernel matrix is {}x{}, not square", n, entries.cols())));
        }
        if n > MAX_ORDER {
            return Err(domain(format!("order {n} exceeds the supported maximum {MAX_ORDER}")));
        }
        if let Some(v) = entries.as_slice().iter().find(|v| !v.is_finite()) {
            return Err(domain(format!("kernel matrix contains non-finite entry {v}")));
        }
        let asym = entries.max_asymmetry();
        if asym > SYMMETRY_TOL {
            return Err(domain(format!("kernel matrix is not symmetric (max asymmetry {asym:.3e})")));
        }
        let mut m = entries;
        for i in 0..n {
            for j in 0..i {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        let unit = (0..n).all(|i| (m[(i, i)] - 1.0).abs() <= DIAGONAL_TOL);
        if unit {
            for i in 0..n {
                m[(i, i)] = 1.0;
                for j in 0..n {
                    if i != j {
                        m[(i, j)] = clamp_correlation(m[(i, j)])?;
                    }
                }
            }
        }
        Ok(Self { entries: m, unit_diagonal: unit })
    }

    /// Gram matrix of the given vectors.
    pub fn from_vectors(xs: &[Vec<f64>]) -> Result<Self> {
        let n = xs.len();
        let m = Matrix::from_fn(n, n, |i, j| dot(&xs[i], &xs[j]));
        Self::new(m)
    }

    pub(crate) fn from_unit_parts(entries: Matrix) -> Self {
        Self { entries, unit_diagonal: true }
    }

    pub fn n(&self) -> usize {
        self.entries.rows()
    }

    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    pub fn into_matrix(self) -> Matrix {
        self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn is_unit_diagonal(&self) -> bool {
        self.unit_diagonal
    }

    pub(crate) fn require_unit_diagonal(&self, what: &str) -> Result<()> {
        if self.unit_diagonal {
            Ok(())
        } else {
            Err(domain(format!("{what} needs a unit-diagonal kernel matrix")))
        }
    }

    /// Largest `|K_ij|` over `i ≠ j`, with the offending pair. `None` when `n < 2`.
    pub fn max_off_diagonal_pair(&self) -> Option<(f64, usize, usize)> {
        let n = self.n();
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            for j in 0..i {
                let v = self.entries[(i, j)].abs();
                if best.map_or(true, |(b, _, _)| v > b) {
                    best = Some((v, j, i));
                }
            }
        }
        best
    }

    pub fn max_off_diagonal(&self) -> f64 {
        self.max_off_diagonal_pair().map_or(0.0, |(v, _, _)| v)
    }

    /// Reads full symmetric storage, one row per line.
    pub fn from_csv_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| Error::Parse {
                line: e.position().map_or(0, |p| p.line() as usize),
                message: e.to_string(),
            })?;
            let line = record.position().map_or(rows.len() + 1, |p| p.line() as usize);
            let row = record
                .iter()
                .enumerate()
                .map(|(k, field)| {
                    field.parse::<f64>().map_err(|_| Error::Parse {
                        line,
                        message: format!("field {} ('{field}') is not a number", k + 1),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            if let Some(first) = rows.first() {
                if row.len() != first.len() {
                    return Err(Error::Parse {
                        line,
                        message: format!("row has {} fields, expected {}", row.len(), first.len()),
                    });
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::Parse { line: 1, message: "no rows".into() });
        }
        if rows.len() != rows[0].len() {
            return Err(Error::Parse {
                line: rows.len(),
                message: format!("{} rows but {} columns", rows.len(), rows[0].len()),
            });
        }
        Self::new(Matrix::from_rows(&rows)?)
    }

    pub fn from_csv_str(s: &str) -> Result<Self> {
        Self::from_csv_reader(s.as_bytes())
    }

    /// Full symmetric storage with 17 significant digits.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n() {
            let row: Vec<String> = self.entries.row(i).iter().map(|v| format!("{v:.16e}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Parses `{n, unitDiagonal, entries}` with row-major entries.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: GramJson = serde_json::from_str(s).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        let m = Matrix::from_vec(raw.n, raw.n, raw.entries)?;
        let g = Self::new(m)?;
        if raw.unit_diagonal && !g.unit_diagonal {
            return Err(domain("file declares a unit diagonal but the diagonal is not one"));
        }
        Ok(g)
    }

    pub fn to_json_string(&self) -> Result<String> {
        let raw = GramJson {
            n: self.n(),
            unit_diagonal: self.unit_diagonal,
            entries: self.entries.as_slice().to_vec(),
        };
        Ok(serde_json::to_string(&raw)?)
    }
}

/// Clamps drift of at most [`CLAMP_SLACK`] back into `[-1, 1]`.
pub(crate) fn clamp_correlation(v: f64) -> Result<f64> {
    if v.abs() <= 1.0 {
        Ok(v)
    } else if v.abs() <= 1.0 + CLAMP_SLACK {
        Ok(v.clamp(-1.0, 1.0))
    } else {
        Err(Error::Numeric(format!("correlation {v} leaves [-1, 1] by more than {CLAMP_SLACK}")))
    }
}

/// Unit inputs whose Gram matrix has largest off-diagonal entry exactly
/// `1 − δ` and smallest eigenvalue exactly `δ`.
///
/// Each input is `[√(1−δ) g_i, √δ e_i]` for random unit `g_i ∈ Rⁿ` with
/// `g_2 = g_1`; the duplicated pair makes both quantities tight.
#[derive(Clone, Debug)]
pub struct SyntheticInputs {
    pub vectors: Vec<Vec<f64>>,
    pub gram: GramMatrix,
    pub delta: f64,
}

pub fn synthetic_inputs(n: usize, delta: f64, seed: u64) -> Result<SyntheticInputs> {
    if n == 0 {
        return Err(domain("need at least one input"));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(domain(format!("separation {delta} outside (0, 1]")));
    }
    let mut r = rng::stream(seed, &[rng::domain::INPUTS, n as u64], 0);
    let mut g: Vec<Vec<f64>> = (0..n).map(|_| rng::unit_vector(&mut r, n)).collect();
    if n >= 2 {
        g[1] = g[0].clone();
    }
    let (a, b) = ((1.0 - delta).sqrt(), delta.sqrt());
    let vectors: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut v: Vec<f64> = g[i].iter().map(|x| a * x).collect();
            v.extend((0..n).map(|j| if i == j { b } else { 0.0 }));
            v
        })
        .collect();
    let mut m = Matrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else if (i, j) == (0, 1) || (i, j) == (1, 0) {
            1.0 - delta
        } else {
            (1.0 - delta) * dot(&g[i], &g[j]).clamp(-1.0, 1.0)
        }
    });
    for i in 0..n {
        for j in 0..i {
            m[(i, j)] = m[(j, i)];
        }
    }
    Ok(SyntheticInputs { vectors, gram: GramMatrix::from_unit_parts(m), delta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_eigenvalues;

    #[test]
    fn csv_round_trip_is_exact() {
        let s = synthetic_inputs(5, 0.3, 11).unwrap();
        let text = s.gram.to_csv_string();
        let back = GramMatrix::from_csv_str(&text).unwrap();
        assert_eq!(back, s.gram);
        let json = s.gram.to_json_string().unwrap();
        assert_eq!(GramMatrix::from_json_str(&json).unwrap(), s.gram);
    }

    #[test]
    fn malformed_csv_names_the_line() {
        let err = GramMatrix::from_csv_str("1,0.5\n0.5,abc\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            GramMatrix::from_csv_str("1,0.5\n0.5\n").unwrap_err(),
            Error::Parse { line: 2, .. }
        ));
    }

    #[test]
    fn json_rejects_unknown_keys() {
        let err = GramMatrix::from_json_str(r#"{"n":1,"unitDiagonal":true,"entries":[1],"x":2}"#);
        assert!(err.is_err());
    }

    #[test]
    fn drift_is_clamped_and_excursions_rejected() {
        let m = Matrix::from_rows(&[vec![1.0, 1.0 + 5e-10], vec![1.0 + 5e-10, 1.0]]).unwrap();
        assert_eq!(GramMatrix::new(m).unwrap().get(0, 1), 1.0);
        let m = Matrix::from_rows(&[vec![1.0, 1.01], vec![1.01, 1.0]]).unwrap();
        assert!(GramMatrix::new(m).is_err());
        let m = Matrix::from_rows(&[vec![1.0, 0.2], vec![0.3, 1.0]]).unwrap();
        assert!(GramMatrix::new(m).is_err());
    }

    #[test]
    fn synthetic_inputs_are_tight() {
        for &delta in &[0.05, 0.2, 0.5] {
            let s = synthetic_inputs(8, delta, 3).unwrap();
            for v in &s.vectors {
                assert!((dot(v, v) - 1.0).abs() < 1e-14);
            }
            let direct = GramMatrix::from_vectors(&s.vectors).unwrap();
            for i in 0..8 {
                for j in 0..8 {
                    assert!((direct.get(i, j) - s.gram.get(i, j)).abs() < 1e-14);
                }
            }
            assert!((s.gram.max_off_diagonal() - (1.0 - delta)).abs() < 1e-15);
            let lmin = sym_eigenvalues(s.gram.entries()).unwrap()[0];
            assert!((lmin - delta).abs() < 1e-12);
        }
    }
}
