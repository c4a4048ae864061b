//! File formats.

/// Serde adapter for `f64` fields that may be infinite or NaN. Non-finite
/// values are written as the strings `"inf"`, `"-inf"` and `"nan"`; reading
/// accepts either a number or one of those strings.
pub mod ext_f64 {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
                "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(de::Error::custom(format!("not a number: {other:?}"))),
            },
        }
    }
}

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::distance::{DomainBox, ShellSamples};
use crate::fractal::BoxUnion;
use crate::poisson::{Grid, GridField};
use crate::rhs::{Grade, IntegrabilityReport, NormInterval, RhsTerm, SingularRhs, Verdict};
use crate::singdim::{SdMap, UscViolation};
use crate::{Error, Result};

/// Pretty-printed JSON followed by a newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

fn numbered(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}_{i}"))
}

/// One box per row: `lo_1..lo_N, hi_1..hi_N`.
pub fn write_boxes_csv<W: Write>(w: W, set: &BoxUnion) -> Result<()> {
    let n = set.dim();
    let mut out = csv::Writer::from_writer(w);
    out.write_record(numbered("lo", n).chain(numbered("hi", n)))?;
    for (lo, hi) in set.boxes() {
        out.write_record(lo.iter().chain(hi).map(|v| v.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_boxes_csv<R: Read>(r: R) -> Result<BoxUnion> {
    let mut rd = csv::Reader::from_reader(r);
    let width = rd.headers()?.len();
    if width == 0 || width % 2 != 0 {
        return Err(Error::Input(format!("box CSV needs 2N columns, found {width}")));
    }
    let n = width / 2;
    let mut boxes = Vec::new();
    for rec in rd.records() {
        let v = rec?
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Input(format!("{s:?}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        boxes.push((v[..n].to_vec(), v[n..].to_vec()));
    }
    BoxUnion::new(n, boxes)
}

/// Term of an [`RhsDoc`]; the set lives in a separate document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhsTermDoc {
    pub set_ref: String,
    pub gamma: f64,
    pub c: f64,
    /// `[lo, hi]` of `||d(., A)^-gamma||_1`.
    pub norm: [NormBound; 2],
    pub norm_estimate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NormBound(#[serde(with = "ext_f64")] pub f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhsDoc {
    pub domain: DomainBox,
    pub terms: Vec<RhsTermDoc>,
    pub truncation: usize,
    pub grade: Grade,
}

/// Writes `rhs.json` and one `set_<i>.json` per term into `dir`.
pub fn write_rhs(dir: &Path, f: &SingularRhs) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut terms = Vec::with_capacity(f.terms().len());
    for (i, t) in f.terms().iter().enumerate() {
        let set_ref = format!("set_{}.json", i + 1);
        write_json(&dir.join(&set_ref), &t.set)?;
        terms.push(RhsTermDoc {
            set_ref,
            gamma: t.gamma,
            c: t.c,
            norm: [NormBound(t.norm.lo), NormBound(t.norm.hi)],
            norm_estimate: t.norm.estimate,
            label: t.label,
        });
    }
    let doc = RhsDoc {
        domain: f.domain().clone(),
        terms,
        truncation: f.truncation(),
        grade: f.grade(),
    };
    write_json(&dir.join("rhs.json"), &doc)
}

/// Reads an RHS document, resolving `set_ref` against its directory.
pub fn read_rhs(path: &Path) -> Result<SingularRhs> {
    let doc: RhsDoc = read_json(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let terms = doc
        .terms
        .into_iter()
        .map(|t| {
            Ok(RhsTerm {
                set: read_json(&dir.join(&t.set_ref))?,
                gamma: t.gamma,
                c: t.c,
                norm: NormInterval {
                    lo: t.norm[0].0,
                    hi: t.norm[1].0,
                    estimate: t.norm_estimate,
                },
                label: t.label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    SingularRhs::from_terms(doc.domain, terms, doc.truncation, doc.grade)
}

const INTEGRABILITY_HEADER: [&str; 13] = [
    "gamma",
    "p",
    "ambient",
    "slope",
    "dim_upper",
    "threshold",
    "verdict",
    "analytic_threshold",
    "shell_slope",
    "norm_lo",
    "norm_hi",
    "norm_estimate",
    "decaying",
];

fn verdict_str(v: Verdict) -> &'static str {
    match v {
        Verdict::Guaranteed => "guaranteed",
        Verdict::NotGuaranteed => "not-guaranteed",
    }
}

/// Header plus one row per report.
pub fn write_integrability_csv<W: Write>(w: W, reports: &[IntegrabilityReport]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(INTEGRABILITY_HEADER)?;
    for r in reports {
        out.write_record([
            r.gamma.to_string(),
            r.p.to_string(),
            r.ambient.to_string(),
            r.dimension.slope.to_string(),
            r.dim_upper.to_string(),
            r.threshold.to_string(),
            verdict_str(r.verdict).to_string(),
            r.analytic_threshold.map(|v| v.to_string()).unwrap_or_default(),
            r.shell_slope.to_string(),
            r.norm.lo.to_string(),
            r.norm.hi.to_string(),
            r.norm.estimate.to_string(),
            r.decaying.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Metadata written next to a binary field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSidecar {
    pub dimension: usize,
    pub counts: Vec<usize>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub payload: String,
    pub encoding: String,
    pub order: String,
    #[serde(with = "ext_f64")]
    pub max_abs: f64,
}

/// Little-endian layout: `N` as u64, `N` counts as u64, `N` lower then `N`
/// upper bounds as f64, then the values in row-major order.
pub fn write_field_bin<W: Write>(w: W, u: &GridField) -> Result<()> {
    let mut w = BufWriter::new(w);
    let g = u.grid();
    w.write_all(&(g.dim() as u64).to_le_bytes())?;
    for &c in g.counts() {
        w.write_all(&(c as u64).to_le_bytes())?;
    }
    for v in g.domain().lo().iter().chain(g.domain().hi()).chain(u.values()) {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_field_bin<R: Read>(r: R) -> Result<GridField> {
    let mut r = BufReader::new(r);
    let mut b = [0u8; 8];
    let mut next = |r: &mut BufReader<R>| -> Result<[u8; 8]> {
        r.read_exact(&mut b)?;
        Ok(b)
    };
    let n = u64::from_le_bytes(next(&mut r)?) as usize;
    if n == 0 || n > 64 {
        return Err(Error::Input(format!("field header names dimension {n}")));
    }
    let counts = (0..n)
        .map(|_| Ok(u64::from_le_bytes(next(&mut r)?) as usize))
        .collect::<Result<Vec<_>>>()?;
    let mut float = |r: &mut BufReader<R>| -> Result<f64> { Ok(f64::from_le_bytes(next(r)?)) };
    let lo = (0..n).map(|_| float(&mut r)).collect::<Result<Vec<_>>>()?;
    let hi = (0..n).map(|_| float(&mut r)).collect::<Result<Vec<_>>>()?;
    let grid = Grid::new(DomainBox::new(lo, hi)?, counts)?;
    let values = (0..grid.len()).map(|_| float(&mut r)).collect::<Result<Vec<_>>>()?;
    GridField::new(grid, values)
}

/// Writes `<stem>.bin` and `<stem>.json` into `dir`.
pub fn write_field(dir: &Path, stem: &str, u: &GridField) -> Result<()> {
    let payload = format!("{stem}.bin");
    write_field_bin(File::create(dir.join(&payload))?, u)?;
    let g = u.grid();
    let sidecar = FieldSidecar {
        dimension: g.dim(),
        counts: g.counts().to_vec(),
        lo: g.domain().lo().to_vec(),
        hi: g.domain().hi().to_vec(),
        payload,
        encoding: "f64-le".into(),
        order: "row-major, last axis fastest".into(),
        max_abs: u.max_abs(),
    };
    write_json(&dir.join(format!("{stem}.json")), &sidecar)
}

/// Rows `x_1..x_N, value`; only for `N <= 2`.
pub fn write_field_csv<W: Write>(w: W, u: &GridField) -> Result<()> {
    let g = u.grid();
    if g.dim() > 2 {
        return Err(Error::DimensionMismatch(format!("CSV export needs N <= 2, field has N = {}", g.dim())));
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(numbered("x", g.dim()).chain(std::iter::once("value".to_string())))?;
    let mut x = vec![0.0; g.dim()];
    for (i, v) in u.values().iter().enumerate() {
        g.point(i, &mut x);
        out.write_record(x.iter().chain(std::iter::once(v)).map(|v| v.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

/// Rows `x_1..x_N, r_1..r_M, limit, confidence, empty`, where `r_i` is the
/// estimate at the `i`-th radius and `confidence` the `r^2` at the smallest.
/// An `envelope` column follows when the map carries one.
pub fn write_sdmap_csv<W: Write>(w: W, map: &SdMap) -> Result<()> {
    let n = map.lattice.anchor.len();
    let enveloped = map.envelope_radius.is_some();
    let mut out = csv::Writer::from_writer(w);
    out.write_record(
        numbered("x", n)
            .chain(numbered("r", map.radii.len()))
            .chain(["limit", "confidence", "empty"].map(String::from))
            .chain(enveloped.then(|| "envelope".to_string())),
    )?;
    for p in &map.points {
        let mut row: Vec<String> = p.point.iter().chain(&p.estimates).map(|v| v.to_string()).collect();
        row.push(p.limit.to_string());
        row.push(p.r_squared.last().copied().unwrap_or(1.0).to_string());
        row.push(p.empty.last().copied().unwrap_or(true).to_string());
        if enveloped {
            row.push(p.envelope.map(|v| v.to_string()).unwrap_or_default());
        }
        out.write_record(row)?;
    }
    out.flush()?;
    Ok(())
}

/// Wrapper so violation lists are written as a self-describing document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationsDoc {
    pub slack: f64,
    pub count: usize,
    pub violations: Vec<UscViolation>,
}

pub fn write_violations(path: &Path, slack: f64, violations: &[UscViolation]) -> Result<()> {
    write_json(
        path,
        &ViolationsDoc {
            slack,
            count: violations.len(),
            violations: violations.to_vec(),
        },
    )
}

/// Rows `x_1..x_N, distance`.
pub fn write_shell_csv<W: Write>(w: W, s: &ShellSamples) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(numbered("x", s.dim).chain(std::iter::once("distance".to_string())))?;
    for i in 0..s.len() {
        out.write_record(s.point(i).iter().chain(std::iter::once(&s.distances[i])).map(|v| v.to_string()))?;
    }
    out.flush()?;
    Ok(())
}
