//! Text formats for arrays. Floats use the shortest representation that
//! parses back to the same bits, so export followed by import is exact.
//!
//! Triplet files start with `# ` and a one-line JSON header, followed by
//! `row col re [im]` lines in row-major order. Section files are CSV with the
//! header `t,x,c,re,im`.

use serde::{Deserialize, Serialize};

use ghq::lattice::LatticeSpacetime;
use ghq::linalg::{c, CMat};
use ghq::ops::{ScalarKind, Section};

use crate::config::LatticeConfig;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Core(#[from] ghq::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletHeader {
    pub kind: String,
    pub rows: usize,
    pub cols: usize,
    pub complex: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<LatticeHeader>,
    /// Fiber dimension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Time radius.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    /// Fiber pairing matrix as rows of `[re, im]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairing: Option<Vec<Vec<[f64; 2]>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeHeader {
    pub n_t: usize,
    pub n_x: usize,
    pub dt: f64,
    pub dx: f64,
}

impl From<&LatticeSpacetime> for LatticeHeader {
    fn from(l: &LatticeSpacetime) -> Self {
        Self { n_t: l.n_t, n_x: l.n_x, dt: l.dt, dx: l.dx }
    }
}

impl From<&LatticeConfig> for LatticeHeader {
    fn from(l: &LatticeConfig) -> Self {
        Self { n_t: l.n_t, n_x: l.n_x, dt: l.dt, dx: l.dx }
    }
}

impl TripletHeader {
    pub fn new(kind: &str, m: &CMat, complex: bool) -> Self {
        Self {
            kind: kind.into(),
            rows: m.nrows(),
            cols: m.ncols(),
            complex,
            lattice: None,
            k: None,
            r: None,
            pairing: None,
            seed: None,
            note: None,
        }
    }
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

pub fn matrix_rows(m: &CMat) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect()
}

/// Nonzero entries in row-major order.
pub fn write_triplets(header: &TripletHeader, m: &CMat) -> String {
    let mut out = format!("# {}\n", serde_json::to_string(header).expect("header serializes"));
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let z = m[(i, j)];
            if z.re == 0.0 && z.im == 0.0 {
                continue;
            }
            if header.complex {
                out.push_str(&format!("{i} {j} {} {}\n", fmt_f64(z.re), fmt_f64(z.im)));
            } else {
                out.push_str(&format!("{i} {j} {}\n", fmt_f64(z.re)));
            }
        }
    }
    out
}

pub fn read_triplets(text: &str) -> Result<(TripletHeader, CMat), IoError> {
    let mut lines = text.lines().enumerate();
    let first = lines.next().map(|(_, l)| l).unwrap_or_default();
    let json = first.strip_prefix("# ").ok_or(IoError::Format { line: 1, msg: "missing '# ' header".into() })?;
    let header: TripletHeader = serde_json::from_str(json)?;
    let mut m = CMat::zeros(header.rows, header.cols);
    let mut last: Option<(usize, usize)> = None;
    for (n, line) in lines {
        let line_no = n + 1;
        let err = |msg: &str| IoError::Format { line: line_no, msg: msg.into() };
        let parts: Vec<&str> = line.split_whitespace().collect();
        let want = if header.complex { 4 } else { 3 };
        if parts.len() != want {
            return Err(err(&format!("expected {want} fields")));
        }
        let i: usize = parts[0].parse().map_err(|_| err("bad row index"))?;
        let j: usize = parts[1].parse().map_err(|_| err("bad column index"))?;
        if i >= header.rows || j >= header.cols {
            return Err(err("index out of range"));
        }
        if last.is_some_and(|p| p >= (i, j)) {
            return Err(err("entries are not in row-major order"));
        }
        last = Some((i, j));
        let re: f64 = parts[2].parse().map_err(|_| err("bad real part"))?;
        let im: f64 = if header.complex { parts[3].parse().map_err(|_| err("bad imaginary part"))? } else { 0.0 };
        m[(i, j)] = c(re, im);
    }
    Ok((header, m))
}

pub fn write_section(s: &Section) -> Result<String, IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", "x", "c", "re", "im"])?;
    let l = s.lattice();
    for t in 0..l.n_t {
        for x in 0..l.n_x {
            for (k, z) in s.fiber(t, x).iter().enumerate() {
                w.write_record([t.to_string(), x.to_string(), k.to_string(), fmt_f64(z.re), fmt_f64(z.im)])?;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| IoError::Format { line: 0, msg: e.to_string() })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Debug, Deserialize)]
struct SectionRow {
    t: usize,
    x: usize,
    c: usize,
    re: f64,
    im: f64,
}

/// Reads a section on `l` with fiber dimension `k`; missing entries are zero.
pub fn read_section(text: &str, l: &LatticeSpacetime, k: usize, kind: ScalarKind) -> Result<Section, IoError> {
    let mut s = Section::zeros(l, k, ScalarKind::Complex);
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["t", "x", "c", "re", "im"] {
        return Err(IoError::Format { line: 1, msg: "expected header t,x,c,re,im".into() });
    }
    for (n, row) in rdr.deserialize::<SectionRow>().enumerate() {
        let row = row?;
        if row.t >= l.n_t || row.x >= l.n_x || row.c >= k {
            return Err(IoError::Format { line: n + 2, msg: "index out of range".into() });
        }
        if kind == ScalarKind::Real && row.im != 0.0 {
            return Err(IoError::Format { line: n + 2, msg: "imaginary part in a real section".into() });
        }
        s.set(row.t, row.x, row.c, c(row.re, row.im));
    }
    Ok(Section::from_values(l, k, kind, s.into_values())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn triplets_round_trip_and_are_row_major() {
        let m = CMat::from_fn(3, 4, |i, j| if (i + j) % 2 == 0 { c(0.1 * i as f64 - 1.0 / 3.0, j as f64 * 1e-300) } else { c(0.0, 0.0) });
        let h = TripletHeader::new("test", &m, true);
        let text = write_triplets(&h, &m);
        let (h2, m2) = read_triplets(&text).unwrap();
        assert_eq!(h, h2);
        assert_eq!(m, m2);
        let idx: Vec<(usize, usize)> = text
            .lines()
            .skip(1)
            .map(|l| {
                let p: Vec<usize> = l.split(' ').take(2).map(|v| v.parse().unwrap()).collect();
                (p[0], p[1])
            })
            .collect();
        let mut sorted = idx.clone();
        sorted.sort();
        assert_eq!(idx, sorted);
        assert_eq!(write_triplets(&h2, &m2), text);
    }

    #[test]
    fn unsorted_triplets_are_rejected() {
        let text = "# {\"kind\":\"x\",\"rows\":2,\"cols\":2,\"complex\":false}\n1 0 1e0\n0 1 2e0\n";
        assert!(matches!(read_triplets(text), Err(IoError::Format { line: 3, .. })));
    }

    #[test]
    fn sections_round_trip() {
        let l = LatticeSpacetime::new(8, 4, 0.25, 0.5).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let s = Section::random(&l, 2, ScalarKind::Complex, 0..8, 0.7, &mut rng);
        let text = write_section(&s).unwrap();
        assert!(text.starts_with("t,x,c,re,im\n"));
        assert_eq!(read_section(&text, &l, 2, ScalarKind::Complex).unwrap(), s);
        let r = Section::random(&l, 1, ScalarKind::Real, 1..7, 1.0, &mut rng);
        assert_eq!(read_section(&write_section(&r).unwrap(), &l, 1, ScalarKind::Real).unwrap(), r);
        assert!(read_section(&text, &l, 2, ScalarKind::Real).is_err());
    }
}
