//! Binary field/trace files and CSV exports.
//!
//! Binary layouts are little-endian. Fields: `PATF`, u32 nx, u32 ny,
//! f64 hx, hy, origin x, origin y, then nx·ny f64 in row-major order
//! (x fastest). Traces: `PATT`, u32 boundary nodes, u32 samples,
//! f64 dt_record, then the samples time-major. CSV floats carry 17
//! significant digits so they round-trip exactly.

use std::path::Path;

use pat_core::recon::IterateHistory;
use pat_core::verify::{MemberOutcome, StabilityReport};
use pat_core::{BoundaryTrace, Grid2D, ScalarField2D};

use crate::error::{LabError, Result};

pub const FIELD_MAGIC: &[u8; 4] = b"PATF";
pub const TRACE_MAGIC: &[u8; 4] = b"PATT";

const FIELD_HEADER: usize = 4 + 4 + 4 + 4 * 8;
const TRACE_HEADER: usize = 4 + 4 + 4 + 8;

/// `{:.16e}`: 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn encode_field(f: &ScalarField2D) -> Vec<u8> {
    let g = f.grid();
    let mut out = Vec::with_capacity(FIELD_HEADER + 8 * g.len());
    out.extend_from_slice(FIELD_MAGIC);
    out.extend_from_slice(&(g.nx() as u32).to_le_bytes());
    out.extend_from_slice(&(g.ny() as u32).to_le_bytes());
    for v in [g.hx(), g.hy(), g.origin()[0], g.origin()[1]] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in f.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }

    fn f64(&mut self) -> Option<f64> {
        Some(f64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
}

fn bad(path: &Path, message: impl Into<String>) -> LabError {
    LabError::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// `path` only labels errors.
pub fn decode_field(bytes: &[u8], path: &Path) -> Result<ScalarField2D> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4) != Some(FIELD_MAGIC.as_slice()) {
        return Err(bad(path, "not a PATF field file"));
    }
    let header = (|| Some((c.u32()?, c.u32()?, c.f64()?, c.f64()?, c.f64()?, c.f64()?)))();
    let (nx, ny, hx, hy, ox, oy) = header.ok_or_else(|| bad(path, "truncated header"))?;
    let n = nx as usize * ny as usize;
    if bytes.len() != FIELD_HEADER + 8 * n {
        return Err(bad(path, format!("expected {} bytes for {nx}x{ny}, found {}", FIELD_HEADER + 8 * n, bytes.len())));
    }
    let grid = Grid2D::new(nx as usize, ny as usize, hx, hy, [ox, oy])?;
    let values = (0..n).map(|_| c.f64().expect("length checked")).collect();
    Ok(ScalarField2D::new(grid, values)?)
}

pub fn encode_trace(m: &BoundaryTrace) -> Vec<u8> {
    let mut out = Vec::with_capacity(TRACE_HEADER + 8 * m.samples().len());
    out.extend_from_slice(TRACE_MAGIC);
    out.extend_from_slice(&(m.n_boundary() as u32).to_le_bytes());
    out.extend_from_slice(&(m.n_times() as u32).to_le_bytes());
    out.extend_from_slice(&m.dt_record().to_le_bytes());
    for v in m.samples() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// The file does not record the grid, so the caller supplies it; its
/// boundary node count must match.
pub fn decode_trace(bytes: &[u8], grid: Grid2D, path: &Path) -> Result<BoundaryTrace> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4) != Some(TRACE_MAGIC.as_slice()) {
        return Err(bad(path, "not a PATT trace file"));
    }
    let header = (|| Some((c.u32()?, c.u32()?, c.f64()?)))();
    let (nb, ns, dt) = header.ok_or_else(|| bad(path, "truncated header"))?;
    if nb as usize != grid.boundary_len() {
        return Err(bad(path, format!("trace has {nb} boundary nodes, grid has {}", grid.boundary_len())));
    }
    let n = nb as usize * ns as usize;
    if bytes.len() != TRACE_HEADER + 8 * n {
        return Err(bad(path, format!("expected {} bytes, found {}", TRACE_HEADER + 8 * n, bytes.len())));
    }
    let samples = (0..n).map(|_| c.f64().expect("length checked")).collect();
    Ok(BoundaryTrace::new(grid, dt, samples)?)
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| LabError::Csv(e.into_error().into()))
}

pub fn field_csv(f: &ScalarField2D) -> Result<Vec<u8>> {
    let g = *f.grid();
    let rows = f.values().iter().enumerate().map(|(n, v)| {
        let (i, j) = g.ij(n);
        vec![fmt_f64(g.x(i)), fmt_f64(g.y(j)), fmt_f64(*v)]
    });
    csv_bytes(&["x", "y", "value"], rows)
}

pub fn trace_csv(m: &BoundaryTrace) -> Result<Vec<u8>> {
    let arc = m.grid().boundary_arc_positions();
    let dt = m.dt_record();
    let nb = m.n_boundary();
    let rows = m.samples().iter().enumerate().map(|(n, v)| {
        let (k, b) = (n / nb, n % nb);
        vec![fmt_f64(k as f64 * dt), b.to_string(), fmt_f64(arc[b]), fmt_f64(*v)]
    });
    csv_bytes(&["t", "node_index", "arc_length", "value"], rows)
}

pub const HISTORY_HEADER: [&str; 11] = [
    "iter", "misfit", "err_u_rel", "err_c_rel", "step_u", "step_c", "alpha_u", "beta_u", "alpha_c",
    "beta_c", "in_region",
];

/// Unknown quantities (no truth, window not yet full) are empty cells.
pub fn history_csv(h: &IterateHistory) -> Result<Vec<u8>> {
    let rows = h.records.iter().map(|r| {
        let c = r.contraction.as_ref();
        vec![
            r.iter.to_string(),
            fmt_f64(r.misfit),
            fmt_opt(r.err_u_rel),
            fmt_opt(r.err_c_rel),
            fmt_f64(r.step_u),
            fmt_opt(r.step_c),
            fmt_opt(c.map(|c| c.alpha_u())),
            fmt_opt(c.map(|c| c.beta_u())),
            fmt_opt(c.and_then(|c| c.alpha_c())),
            fmt_opt(c.and_then(|c| c.beta_c())),
            r.in_region.map(|b| b.to_string()).unwrap_or_default(),
        ]
    });
    csv_bytes(&HISTORY_HEADER, rows)
}

pub const REPORT_HEADER: [&str; 6] = [
    "member", "speed_ratio_sq", "state_ratio_sq", "meas_ratio_sq", "in_region", "quotient",
];

/// One row per member, then `summary` with the in-region count in the
/// `in_region` column and the empirical constant in `quotient`.
pub fn report_csv(report: &StabilityReport) -> Result<Vec<u8>> {
    let mut rows: Vec<Vec<String>> = report
        .outcomes
        .iter()
        .map(|o| match o.report() {
            None => vec![o.index().to_string(), String::new(), fmt_f64(0.0), String::new(), String::new(), String::new()],
            Some(r) => vec![
                o.index().to_string(),
                fmt_f64(r.speed_ratio_sq),
                fmt_f64(r.state_ratio_sq),
                fmt_opt(r.meas_ratio_sq),
                matches!(o, MemberOutcome::Evaluated { .. }).to_string(),
                fmt_opt(r.empirical_quotient),
            ],
        })
        .collect();
    rows.push(vec![
        "summary".into(),
        String::new(),
        String::new(),
        String::new(),
        report.pairs_in_region.to_string(),
        fmt_opt(report.c_empirical),
    ]);
    csv_bytes(&REPORT_HEADER, rows)
}

/// Energy series as `step,t,energy`.
pub fn energy_csv(energy: &[f64], dt: f64) -> Result<Vec<u8>> {
    let rows = energy
        .iter()
        .enumerate()
        .map(|(k, e)| vec![k.to_string(), fmt_f64(k as f64 * dt), fmt_f64(*e)]);
    csv_bytes(&["step", "t", "energy"], rows)
}

/// Generic table with a fixed header.
pub fn table_csv(header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>> {
    csv_bytes(header, rows)
}

