//! File formats and event aggregation.
//!
//! # Instance files
//!
//! UTF-8 text, LF line endings. `#` starts a comment; blank lines are
//! ignored. A header of `key value` lines is followed by sections:
//!
//! ```text
//! cells 3
//! candidates 2
//! servers 1
//! capacity 0.5
//! grid 1 3 0.1 0 0        # optional: rows cols cell_size origin_x origin_y
//! [cells]
//! 0.05 0.05               # one "x y" line per cell
//! ...
//! [candidates]
//! 0 0                     # one "x y" line per candidate
//! ...
//! [workload]
//! 0 0 0.25                # sparse "i j w", each unordered pair at most once
//! ...
//! [fronthaul]             # optional: one line of n_candidates distances per cell
//! 1 1
//! ...
//! ```
//!
//! Without a `[fronthaul]` section distances are Euclidean. Floats are
//! written in the shortest decimal form that parses back to the same bits,
//! so a write/read round trip is exact.
//!
//! # CSV files
//!
//! * assignment: `kind,index,location` with `kind` either `server` (slot
//!   index) or `cell` (cell index).
//! * events: `ax,ay,bx,by,weight`, one undirected record per row.
//! * run report and summary: see [`RunRecord`] and [`SummaryRow`].

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{normalize_upper, Assignment, GridLayout, Instance, InstanceError, Point};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("schema: {0}")]
    Schema(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error("line {line}: point ({x}, {y}) lies outside the grid")]
    OutOfGrid { line: usize, x: f64, y: f64 },
    #[error("line {line}: weight {weight} is not positive")]
    Weight { line: usize, weight: f64 },
    #[error("no event weight fell inside the grid")]
    NoEvents,
}

fn parse_err(line: usize, message: impl Into<String>) -> IoError {
    IoError::Parse { line, message: message.into() }
}

/// Non-blank, comment-stripped lines with 1-based numbers.
struct Lines<R> {
    inner: io::Lines<R>,
    line: usize,
    peeked: Option<(usize, String)>,
}

impl<R: BufRead> Lines<R> {
    fn new(reader: R) -> Self {
        Lines { inner: reader.lines(), line: 0, peeked: None }
    }

    fn next(&mut self) -> Result<Option<(usize, String)>, IoError> {
        if let Some(p) = self.peeked.take() {
            return Ok(Some(p));
        }
        for raw in self.inner.by_ref() {
            let raw = raw?;
            self.line += 1;
            let text = raw.split('#').next().unwrap_or("").trim();
            if !text.is_empty() {
                return Ok(Some((self.line, text.to_string())));
            }
        }
        Ok(None)
    }

    fn peek(&mut self) -> Result<Option<&(usize, String)>, IoError> {
        if self.peeked.is_none() {
            self.peeked = self.next()?;
        }
        Ok(self.peeked.as_ref())
    }

    fn expect(&mut self, what: &str) -> Result<(usize, String), IoError> {
        self.next()?.ok_or_else(|| parse_err(self.line + 1, format!("file ended, expected {what}")))
    }
}

fn fields<T: std::str::FromStr>(line: usize, text: &str, count: usize, what: &str) -> Result<Vec<T>, IoError> {
    let parts: Vec<&str> = text.split_whitespace().collect();
    if parts.len() != count {
        return Err(parse_err(line, format!("expected {count} fields for {what}, found {}", parts.len())));
    }
    parts
        .iter()
        .map(|p| p.parse::<T>().map_err(|_| parse_err(line, format!("cannot parse `{p}` in {what}"))))
        .collect()
}

#[derive(Default)]
struct Header {
    cells: Option<usize>,
    candidates: Option<usize>,
    servers: Option<usize>,
    capacity: Option<f64>,
    grid: Option<GridLayout>,
}

pub fn read_instance(reader: impl BufRead) -> Result<Instance, IoError> {
    let mut lines = Lines::new(reader);
    let mut h = Header::default();
    loop {
        let Some((line, text)) = lines.peek()?.cloned() else { break };
        if text.starts_with('[') {
            break;
        }
        lines.next()?;
        let (key, rest) = text.split_once(char::is_whitespace).unwrap_or((text.as_str(), ""));
        match key {
            "cells" => h.cells = Some(fields::<usize>(line, rest, 1, "cells")?[0]),
            "candidates" => h.candidates = Some(fields::<usize>(line, rest, 1, "candidates")?[0]),
            "servers" => h.servers = Some(fields::<usize>(line, rest, 1, "servers")?[0]),
            "capacity" => h.capacity = Some(fields::<f64>(line, rest, 1, "capacity")?[0]),
            "grid" => {
                let g = fields::<f64>(line, rest, 5, "grid")?;
                let whole = |v: f64| v >= 0.0 && v.fract() == 0.0;
                if !whole(g[0]) || !whole(g[1]) {
                    return Err(parse_err(line, "grid rows and cols must be whole numbers"));
                }
                h.grid = Some(GridLayout {
                    rows: g[0] as usize,
                    cols: g[1] as usize,
                    cell_size: g[2],
                    origin: Point::new(g[3], g[4]),
                });
            }
            other => return Err(parse_err(line, format!("unknown header key `{other}`"))),
        }
    }
    let missing = |k: &str| IoError::Schema(format!("header is missing `{k}`"));
    let n = h.cells.ok_or_else(|| missing("cells"))?;
    let m = h.candidates.ok_or_else(|| missing("candidates"))?;
    let servers = h.servers.ok_or_else(|| missing("servers"))?;
    let capacity = h.capacity.ok_or_else(|| missing("capacity"))?;

    section(&mut lines, "cells")?;
    let cells = points(&mut lines, n, "cell")?;
    section(&mut lines, "candidates")?;
    let cands = points(&mut lines, m, "candidate")?;
    section(&mut lines, "workload")?;
    let mut w = vec![0.0; n * n];
    let mut seen = vec![false; n * n];
    let mut fronthaul = None;
    while let Some((line, text)) = lines.next()? {
        if text.starts_with('[') {
            if text != "[fronthaul]" {
                return Err(parse_err(line, format!("unexpected section {text}")));
            }
            fronthaul = Some(read_fronthaul(&mut lines, n, m)?);
            if let Some((line, text)) = lines.next()? {
                return Err(parse_err(line, format!("trailing content `{text}`")));
            }
            break;
        }
        let parts: Vec<&str> = text.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(parse_err(line, "expected `i j w`"));
        }
        let idx = |p: &str| {
            p.parse::<usize>().map_err(|_| parse_err(line, format!("cannot parse index `{p}`")))
        };
        let (i, j) = (idx(parts[0])?, idx(parts[1])?);
        let v: f64 = parts[2].parse().map_err(|_| parse_err(line, format!("cannot parse weight `{}`", parts[2])))?;
        if i >= n || j >= n {
            return Err(IoError::Schema(format!("line {line}: pair ({i}, {j}) out of range for {n} cells")));
        }
        if seen[i * n + j] {
            return Err(parse_err(line, format!("pair ({i}, {j}) listed twice")));
        }
        seen[i * n + j] = true;
        seen[j * n + i] = true;
        w[i * n + j] = v;
        w[j * n + i] = v;
    }
    let mut inst = Instance::new(cells, cands, w, servers, capacity)?;
    if let Some(g) = h.grid {
        inst = inst.with_grid(g)?;
    }
    if let Some(f) = fronthaul {
        inst = inst.with_fronthaul(f)?;
    }
    Ok(inst)
}

fn section<R: BufRead>(lines: &mut Lines<R>, name: &str) -> Result<(), IoError> {
    let (line, text) = lines.expect(&format!("[{name}]"))?;
    if text != format!("[{name}]") {
        return Err(parse_err(line, format!("expected [{name}], found `{text}`")));
    }
    Ok(())
}

fn points<R: BufRead>(lines: &mut Lines<R>, count: usize, what: &str) -> Result<Vec<Point>, IoError> {
    (0..count)
        .map(|_| {
            let (line, text) = lines.expect(&format!("{what} coordinates"))?;
            if text.starts_with('[') {
                return Err(parse_err(line, format!("section ended early, expected {count} {what} rows")));
            }
            let xy = fields::<f64>(line, &text, 2, what)?;
            Ok(Point::new(xy[0], xy[1]))
        })
        .collect()
}

fn read_fronthaul<R: BufRead>(lines: &mut Lines<R>, n: usize, m: usize) -> Result<Vec<f64>, IoError> {
    let mut out = Vec::with_capacity(n * m);
    for _ in 0..n {
        let (line, text) = lines.expect("fronthaul row")?;
        out.extend(fields::<f64>(line, &text, m, "fronthaul row")?);
    }
    Ok(out)
}

pub fn write_instance(mut out: impl Write, instance: &Instance) -> io::Result<()> {
    let n = instance.n_cells();
    writeln!(out, "cells {n}")?;
    writeln!(out, "candidates {}", instance.n_candidates())?;
    writeln!(out, "servers {}", instance.n_servers())?;
    writeln!(out, "capacity {}", instance.capacity())?;
    if let Some(g) = instance.grid() {
        writeln!(out, "grid {} {} {} {} {}", g.rows, g.cols, g.cell_size, g.origin.x, g.origin.y)?;
    }
    writeln!(out, "[cells]")?;
    for p in instance.cell_coords() {
        writeln!(out, "{} {}", p.x, p.y)?;
    }
    writeln!(out, "[candidates]")?;
    for p in instance.candidate_coords() {
        writeln!(out, "{} {}", p.x, p.y)?;
    }
    writeln!(out, "[workload]")?;
    for i in 0..n {
        for (j, &v) in instance.workload_row(i).iter().enumerate().skip(i) {
            if v != 0.0 {
                writeln!(out, "{i} {j} {v}")?;
            }
        }
    }
    if instance.has_explicit_fronthaul() {
        writeln!(out, "[fronthaul]")?;
        for i in 0..n {
            let row: Vec<String> = instance.fronthaul_row(i).iter().map(|d| d.to_string()).collect();
            writeln!(out, "{}", row.join(" "))?;
        }
    }
    out.flush()
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<Instance, IoError> {
    read_instance(BufReader::new(File::open(path)?))
}

pub fn save_instance(path: impl AsRef<Path>, instance: &Instance) -> Result<(), IoError> {
    write_instance(BufWriter::new(File::create(path)?), instance)?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct AssignmentRow {
    kind: String,
    index: usize,
    location: usize,
}

pub fn write_assignment(out: impl Write, assignment: &Assignment) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    for (k, &l) in assignment.server_locations().iter().enumerate() {
        w.serialize(AssignmentRow { kind: "server".into(), index: k, location: l })?;
    }
    for (i, &l) in assignment.cell_to_location().iter().enumerate() {
        w.serialize(AssignmentRow { kind: "cell".into(), index: i, location: l })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an assignment; rows may come in any order but every slot and cell
/// index must appear exactly once.
pub fn read_assignment(input: impl Read) -> Result<Assignment, IoError> {
    let mut r = csv::Reader::from_reader(input);
    let mut servers: Vec<Option<usize>> = Vec::new();
    let mut cells: Vec<Option<usize>> = Vec::new();
    for row in r.deserialize::<AssignmentRow>() {
        let row = row?;
        let target = match row.kind.as_str() {
            "server" => &mut servers,
            "cell" => &mut cells,
            other => return Err(IoError::Schema(format!("unknown row kind `{other}`"))),
        };
        if target.len() <= row.index {
            target.resize(row.index + 1, None);
        }
        if target[row.index].replace(row.location).is_some() {
            return Err(IoError::Schema(format!("{} {} listed twice", row.kind, row.index)));
        }
    }
    let dense = |v: Vec<Option<usize>>, kind: &str| {
        v.into_iter()
            .enumerate()
            .map(|(k, l)| l.ok_or_else(|| IoError::Schema(format!("{kind} {k} is missing"))))
            .collect::<Result<Vec<_>, _>>()
    };
    Ok(Assignment::new(dense(servers, "server")?, dense(cells, "cell")?))
}

/// One solver run in a sweep. `min_load` and `max_load` range over servers
/// holding at least one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub algo: String,
    pub capacity: f64,
    pub loc_seed: u64,
    pub init_seed: u64,
    pub cost: f64,
    pub spread: f64,
    pub max_load: f64,
    pub min_load: f64,
    pub wall_ms: f64,
}

impl RunRecord {
    pub fn load_ratio(&self) -> f64 {
        self.max_load / self.min_load
    }
}

/// Aggregate over the runs of one (algorithm, capacity).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algo: String,
    pub capacity: f64,
    pub runs: usize,
    pub failures: usize,
    pub cost_mean: f64,
    pub cost_min: f64,
    pub cost_max: f64,
    pub spread_mean: f64,
    pub spread_min: f64,
    pub spread_max: f64,
    pub load_ratio_mean: f64,
    pub load_ratio_min: f64,
    pub load_ratio_max: f64,
}

pub fn write_records<T: Serialize>(out: impl Write, rows: &[T]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<T: for<'de> Deserialize<'de>>(input: impl Read) -> Result<Vec<T>, IoError> {
    csv::Reader::from_reader(input).deserialize().map(|r| r.map_err(IoError::from)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub ax: f64,
    pub ay: f64,
    pub bx: f64,
    pub by: f64,
    pub weight: f64,
}

/// Event records with the line each starts on.
pub fn read_events(input: impl Read) -> impl Iterator<Item = Result<(usize, EventRecord), IoError>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    let mut rec = csv::StringRecord::new();
    let headers = r.headers().cloned();
    loop {
        match r.read_record(&mut rec) {
            Ok(false) => break,
            Ok(true) => {
                let line = rec.position().map_or(0, |p| p.line() as usize);
                let parsed = headers
                    .as_ref()
                    .map_err(|e| parse_err(1, e.to_string()))
                    .and_then(|h| rec.deserialize::<EventRecord>(Some(h)).map_err(|e| parse_err(line, e.to_string())));
                out.push(parsed.map(|e| (line, e)));
            }
            Err(e) => {
                out.push(Err(e.into()));
                break;
            }
        }
    }
    out.into_iter()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strictness {
    #[default]
    Strict,
    /// Records outside the grid or with non-positive weight are counted and
    /// skipped.
    Lenient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedWorkload {
    pub grid: GridLayout,
    /// Dense symmetric matrix over grid cells, normalized so the upper
    /// triangle sums to 1.
    pub workload: Vec<f64>,
    pub total_weight: f64,
    pub accepted: usize,
    pub dropped: usize,
}

impl AggregatedWorkload {
    /// Instance over the grid centres.
    pub fn into_instance(
        self,
        candidates: Vec<Point>,
        n_servers: usize,
        capacity: f64,
    ) -> Result<Instance, InstanceError> {
        Instance::new(self.grid.centers(), candidates, self.workload, n_servers, capacity)?.with_grid(self.grid)
    }
}

/// Cell of `p` under half-open binning, with the far edges clamped inward.
pub fn bin_point(grid: &GridLayout, p: Point) -> Option<usize> {
    let axis = |v: f64, o: f64, count: usize| -> Option<usize> {
        let extent = count as f64 * grid.cell_size;
        if !(v >= o && v <= o + extent) {
            return None;
        }
        let k = ((v - o) / grid.cell_size).floor() as usize;
        Some(k.min(count - 1))
    };
    let c = axis(p.x, grid.origin.x, grid.cols)?;
    let r = axis(p.y, grid.origin.y, grid.rows)?;
    Some(r * grid.cols + c)
}

/// Bins both endpoints of every record and accumulates undirected weight.
pub fn aggregate_events(
    records: impl IntoIterator<Item = Result<(usize, EventRecord), IoError>>,
    grid: GridLayout,
    strictness: Strictness,
) -> Result<AggregatedWorkload, IoError> {
    if grid.rows == 0 || grid.cols == 0 || !(grid.cell_size > 0.0) {
        return Err(IoError::Schema("grid needs positive rows, cols and cell size".into()));
    }
    let n = grid.n_cells();
    let mut w = vec![0.0; n * n];
    let (mut accepted, mut dropped) = (0, 0);
    for rec in records {
        let (line, e) = rec?;
        let problem = if !(e.weight > 0.0 && e.weight.is_finite()) {
            Some(IoError::Weight { line, weight: e.weight })
        } else {
            None
        };
        let a = bin_point(&grid, Point::new(e.ax, e.ay));
        let b = bin_point(&grid, Point::new(e.bx, e.by));
        let problem = problem.or_else(|| match (a, b) {
            (None, _) => Some(IoError::OutOfGrid { line, x: e.ax, y: e.ay }),
            (_, None) => Some(IoError::OutOfGrid { line, x: e.bx, y: e.by }),
            _ => None,
        });
        if let Some(err) = problem {
            match strictness {
                Strictness::Strict => return Err(err),
                Strictness::Lenient => {
                    dropped += 1;
                    continue;
                }
            }
        }
        let (i, j) = (a.unwrap(), b.unwrap());
        let (i, j) = (i.min(j), i.max(j));
        w[i * n + j] += e.weight;
        if i != j {
            w[j * n + i] += e.weight;
        }
        accepted += 1;
    }
    let total_weight = normalize_upper(&mut w, n);
    if !(total_weight > 0.0) {
        return Err(IoError::NoEvents);
    }
    Ok(AggregatedWorkload { grid, workload: w, total_weight, accepted, dropped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geogen::{gen_uniform, generate, GenSpec};
    use crate::model::{cost, spread, symmetric_from_upper};
    use crate::testutil::{random_assignment, random_instance};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn round_trip(inst: &Instance) -> Instance {
        let mut buf = Vec::new();
        write_instance(&mut buf, inst).unwrap();
        read_instance(buf.as_slice()).unwrap()
    }

    #[test]
    fn instance_round_trips_exactly() {
        let inst = gen_uniform(&GenSpec::synthetic500(1, 0.05)).unwrap();
        assert_eq!(round_trip(&inst), inst);
        let grav = generate(&GenSpec::gravity_grid(3, 0.05, 0.1, 0.5)).unwrap();
        assert_eq!(round_trip(&grav), grav);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let small = random_instance(&mut rng, 4, 3, 2, 0.3);
        let explicit = small.with_fronthaul((0..12).map(|k| k as f64 / 7.0).collect()).unwrap();
        assert_eq!(round_trip(&explicit), explicit);
    }

    const FIXTURE: &str = "\
# three cells in a row
cells 3
candidates 2
servers 1
capacity 0.5
grid 1 3 0.1 0 0
[cells]
0.05 0.05
0.15 0.05
0.25 0.05
[candidates]
0 0.05
0.3 0.05
[workload]
0 0 0.25
0 1 0.25   # neighbours
2 2 0.5
";

    #[test]
    fn hand_written_fixture() {
        let inst = read_instance(FIXTURE.as_bytes()).unwrap();
        assert_eq!(inst.n_cells(), 3);
        assert_eq!(inst.w(1, 0), 0.25);
        assert_eq!(inst.w(1, 2), 0.0);
        assert_eq!(inst.cell_totals(), &[0.5, 0.25, 0.5]);
        assert!((inst.d(0, 0) - 0.05).abs() < 1e-15);
        assert!((inst.d(2, 1) - 0.05).abs() < 1e-15);
        assert_eq!(inst.grid().unwrap().cols, 3);
        let all_left = Assignment::new(vec![0], vec![0; 3]);
        // one server with load 1 and capacity 0.5
        assert_eq!(cost(&inst, &all_left), 0.5);
        let expected = 0.5 * inst.d(0, 0) + 0.25 * inst.d(1, 0) + 0.5 * inst.d(2, 0);
        assert_eq!(spread(&inst, &all_left), expected);
    }

    #[test]
    fn truncated_file_names_the_line() {
        let cut: String = FIXTURE.lines().take(9).map(|l| format!("{l}\n")).collect();
        match read_instance(cut.as_bytes()) {
            Err(IoError::Parse { line, .. }) => assert_eq!(line, 10),
            other => panic!("{other:?}"),
        }
        let bad = FIXTURE.replace("0.15 0.05", "0.15 zero");
        match read_instance(bad.as_bytes()) {
            Err(IoError::Parse { line, message }) => {
                assert_eq!(line, 9);
                assert!(message.contains("zero"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn schema_errors() {
        let no_servers = FIXTURE.replace("servers 1\n", "");
        assert!(matches!(read_instance(no_servers.as_bytes()), Err(IoError::Schema(_))));
        let out_of_range = FIXTURE.replace("2 2 0.5", "2 3 0.5");
        assert!(matches!(read_instance(out_of_range.as_bytes()), Err(IoError::Schema(_))));
        let dup = FIXTURE.replace("2 2 0.5", "1 0 0.5");
        assert!(matches!(read_instance(dup.as_bytes()), Err(IoError::Parse { line: 17, .. })));
        let unnormalized = FIXTURE.replace("2 2 0.5", "2 2 0.7");
        assert!(matches!(read_instance(unnormalized.as_bytes()), Err(IoError::Instance(_))));
    }

    #[test]
    fn assignment_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let inst = random_instance(&mut rng, 15, 8, 3, 0.2);
        let a = random_assignment(&mut rng, &inst);
        let mut buf = Vec::new();
        write_assignment(&mut buf, &a).unwrap();
        assert_eq!(read_assignment(buf.as_slice()).unwrap(), a);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("kind,index,location\nserver,0,"));
        let missing = text.replace("cell,3,", "cell,33,");
        assert!(matches!(read_assignment(missing.as_bytes()), Err(IoError::Schema(_))));
    }

    #[test]
    fn report_rows_round_trip_and_match_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inst = random_instance(&mut rng, 10, 5, 2, 0.2);
        let mut rows = Vec::new();
        for algo in ["RAND", "KMED"] {
            for capacity in [0.1, 0.2] {
                let inst = inst.with_capacity(capacity).unwrap();
                let a = random_assignment(&mut rng, &inst);
                let loads = crate::model::server_loads(&inst, &a);
                rows.push(RunRecord {
                    algo: algo.into(),
                    capacity,
                    loc_seed: 0,
                    init_seed: 7,
                    cost: cost(&inst, &a),
                    spread: spread(&inst, &a),
                    max_load: loads.iter().copied().fold(0.0, f64::max),
                    min_load: loads.iter().copied().fold(f64::INFINITY, f64::min),
                    wall_ms: 0.0,
                });
            }
        }
        let mut buf = Vec::new();
        write_records(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), "algo,capacity,loc_seed,init_seed,cost,spread,max_load,min_load,wall_ms");
        assert_eq!(text.lines().count(), 5);
        let back: Vec<RunRecord> = read_records(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
    }

    fn grid() -> GridLayout {
        GridLayout::new(4, 5, 0.25)
    }

    fn events(list: &[(f64, f64, f64, f64, f64)]) -> Vec<Result<(usize, EventRecord), IoError>> {
        list.iter()
            .enumerate()
            .map(|(k, &(ax, ay, bx, by, weight))| Ok((k + 2, EventRecord { ax, ay, bx, by, weight })))
            .collect()
    }

    #[test]
    fn single_mass() {
        let agg = aggregate_events(events(&[(0.1, 0.1, 0.2, 0.05, 7.0)]), grid(), Strictness::Strict).unwrap();
        assert_eq!(agg.workload[0], 1.0);
        assert_eq!(agg.workload.iter().sum::<f64>(), 1.0);
        assert_eq!(agg.total_weight, 7.0);
    }

    #[test]
    fn direction_does_not_matter() {
        let agg = aggregate_events(
            events(&[(0.1, 0.1, 0.3, 0.1, 1.0), (0.3, 0.1, 0.1, 0.1, 1.0)]),
            grid(),
            Strictness::Strict,
        )
        .unwrap();
        let n = 20;
        assert_eq!(agg.workload[1], 1.0);
        assert_eq!(agg.workload[n], 1.0);
    }

    #[test]
    fn edges_and_out_of_grid_points() {
        let g = grid();
        assert_eq!(bin_point(&g, Point::new(0.25, 0.0)), Some(1));
        assert_eq!(bin_point(&g, Point::new(1.25, 1.0)), Some(19));
        assert_eq!(bin_point(&g, Point::new(1.25 + 1e-9, 0.5)), None);
        assert_eq!(bin_point(&g, Point::new(-1e-12, 0.5)), None);
        assert_eq!(bin_point(&g, Point::new(f64::NAN, 0.5)), None);
        let recs = [(0.1, 0.1, 0.2, 0.2, 1.0), (0.1, 0.1, 2.0, 0.2, 1.0), (0.1, 0.1, 0.2, 0.2, -1.0)];
        match aggregate_events(events(&recs), g, Strictness::Strict) {
            Err(IoError::OutOfGrid { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let agg = aggregate_events(events(&recs), g, Strictness::Lenient).unwrap();
        assert_eq!((agg.accepted, agg.dropped), (1, 2));
    }

    #[test]
    fn csv_events_carry_line_numbers() {
        let text = "ax,ay,bx,by,weight\n0.1,0.1,0.2,0.2,3\n0.1,0.1,9,0.2,1\n";
        let parsed: Vec<_> = read_events(text.as_bytes()).collect();
        assert_eq!(parsed[0].as_ref().unwrap().0, 2);
        match aggregate_events(parsed, grid(), Strictness::Strict) {
            Err(IoError::OutOfGrid { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let bad = "ax,ay,bx,by,weight\n0.1,0.1,x,0.2,3\n";
        assert!(matches!(read_events(bad.as_bytes()).next(), Some(Err(IoError::Parse { line: 2, .. }))));
    }

    /// Independent binning: locate each coordinate by scanning interval
    /// bounds, accumulate into a map, then densify.
    fn reference(recs: &[(f64, f64, f64, f64, f64)], g: &GridLayout) -> Vec<f64> {
        let locate = |v: f64, o: f64, count: usize| {
            (0..count).find(|&k| v < o + (k + 1) as f64 * g.cell_size).unwrap_or(count - 1)
        };
        let cell = |x: f64, y: f64| locate(y, g.origin.y, g.rows) * g.cols + locate(x, g.origin.x, g.cols);
        let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for &(ax, ay, bx, by, wt) in recs {
            let (a, b) = (cell(ax, ay), cell(bx, by));
            *acc.entry((a.min(b), a.max(b))).or_default() += wt;
        }
        let n = g.n_cells();
        let mut w = symmetric_from_upper(n, |i, j| acc.get(&(i, j)).copied().unwrap_or(0.0));
        normalize_upper(&mut w, n);
        w
    }

    #[test]
    fn matches_reference_binning_on_random_records() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = GridLayout { rows: 25, cols: 25, cell_size: 0.04, origin: Point::new(-0.5, 2.0) };
        let recs: Vec<_> = (0..10_000)
            .map(|_| {
                let mut p = || (g.origin.x + rng.random::<f64>(), g.origin.y + rng.random::<f64>());
                let (a, b) = (p(), p());
                (a.0, a.1, b.0, b.1, rng.random_range(1..20) as f64)
            })
            .collect();
        let agg = aggregate_events(events(&recs), g, Strictness::Strict).unwrap();
        assert_eq!(agg.workload, reference(&recs, &g));
        let inst = agg.into_instance(g.centers(), 10, 0.05).unwrap();
        assert_eq!(inst.n_cells(), 625);
    }

    #[test]
    fn binning_is_translation_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // dyadic coordinates and shifts keep the arithmetic exact
        let g = GridLayout::new(8, 8, 0.125);
        let dy = |rng: &mut ChaCha8Rng| rng.random_range(0..1 << 20) as f64 / (1 << 20) as f64;
        let recs: Vec<_> = (0..2000).map(|_| (dy(&mut rng), dy(&mut rng), dy(&mut rng), dy(&mut rng), 1.0)).collect();
        let base = aggregate_events(events(&recs), g, Strictness::Strict).unwrap();
        for (tx, ty) in [(3.0, -2.0), (0.5, 0.25), (-16.0, 1024.0)] {
            let moved: Vec<_> = recs.iter().map(|&(a, b, c, d, w)| (a + tx, b + ty, c + tx, d + ty, w)).collect();
            let g2 = GridLayout { origin: Point::new(tx, ty), ..g };
            let agg = aggregate_events(events(&moved), g2, Strictness::Strict).unwrap();
            assert_eq!(agg.workload, base.workload);
        }
    }
}
