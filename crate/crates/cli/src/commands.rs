use std::fmt::Display;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use harmopack::analysis::{self, ContinuationReport, EpsilonReport};
use harmopack::numerics::{parse_count, parse_rational, rational_to_f64};
use harmopack::stream::{
    create_placement_file, placement_mode, read_box_file, read_placement_file, resume_placement_file, write_boxes,
    NullSink,
};
use harmopack::{
    Exact, Float, NumericMode, Packer, PackerConfig, PackError, Placement, PlacementSink, Scalar, StatsSnapshot,
    StreamError, Termination, ValidityReport, VerifyError,
};
use serde::Serialize;

use crate::{
    BoundArgs, ContinueArgs, EpsilonArgs, PackArgs, RenderArgs, StatsArgs, VerifyArgs, EXIT_BAD_INPUT, EXIT_INVALID,
    EXIT_NO_FIT,
};

pub const PLACEMENTS_FILE: &str = "placements.csv";
pub const BOXES_FILE: &str = "boxes.csv";
pub const SNAPSHOTS_FILE: &str = "snapshots.csv";
pub const REPORT_FILE: &str = "report.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.txt";

pub const SNAPSHOT_HEADER: &str =
    "n,ratio,largest_w,largest_h,largest_area,remaining,box_count,scan_mean,scan_max,residual,wall_ms";

/// A failure with the exit status it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn bad_input(m: impl Display) -> Self {
        CliError {
            code: EXIT_BAD_INPUT,
            message: m.to_string(),
        }
    }

    fn internal(m: impl Display) -> Self {
        CliError {
            code: 1,
            message: m.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::internal(e)
    }
}

impl From<StreamError> for CliError {
    fn from(e: StreamError) -> Self {
        CliError::bad_input(e)
    }
}

impl From<PackError> for CliError {
    fn from(e: PackError) -> Self {
        match e {
            PackError::InvalidConfig(_) | PackError::Checkpoint(_) | PackError::ModeMismatch { .. } => {
                CliError::bad_input(e)
            }
            other => CliError::internal(other),
        }
    }
}

impl From<VerifyError> for CliError {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::Pack(p) => p.into(),
            other => CliError::bad_input(other),
        }
    }
}

impl From<analysis::AnalysisError> for CliError {
    fn from(e: analysis::AnalysisError) -> Self {
        CliError::bad_input(e)
    }
}

type Outcome = Result<u8, CliError>;

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value).map_err(CliError::internal)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

fn parse_schedule(spec: &str) -> Result<Vec<u64>, CliError> {
    let spec = spec.trim();
    let mut points = match spec {
        "default" => harmopack::packer::default_schedule(),
        "none" => Vec::new(),
        _ => {
            if let Some(step) = spec.strip_prefix("every:") {
                let step = parse_count(step).map_err(CliError::bad_input)?;
                if step == 0 {
                    return Err(CliError::bad_input("snapshot step must be positive"));
                }
                // Filled in by the caller once n is known.
                return Ok(vec![0, step]);
            }
            spec.split(',')
                .map(|t| parse_count(t).map_err(CliError::bad_input))
                .collect::<Result<Vec<_>, _>>()?
        }
    };
    points.sort_unstable();
    points.dedup();
    Ok(points)
}

fn schedule_for(spec: &str, n: u64) -> Result<Vec<u64>, CliError> {
    let points = parse_schedule(spec)?;
    if let [0, step] = points[..] {
        return Ok((1..=n / step).map(|k| k * step).collect());
    }
    if points.first() == Some(&0) {
        return Err(CliError::bad_input("snapshot points start at 1"));
    }
    Ok(points)
}

fn pack_config(a: &PackArgs) -> Result<PackerConfig, CliError> {
    let mut c = PackerConfig::new(a.n);
    c.mode = a.mode;
    c.split = a.split;
    c.order = a.order;
    c.orientation = a.orient;
    c.allow_rotation = a.rotate;
    c.prune = a.prune;
    c.checkpoint_every = a.checkpoint_every;
    c.snapshots = schedule_for(&a.snapshots, a.n)?;
    c.emit_placements = !a.no_placements;
    c.validate()?;
    Ok(c)
}

fn snapshot_row<S: Scalar>(s: &StatsSnapshot<S>) -> String {
    format!(
        "{},{},{},{},{},{},{},{:.3},{},{},{:.3}",
        s.n,
        s.ratio.to_f64(),
        s.largest_w.to_f64(),
        s.largest_h.to_f64(),
        s.largest_area.to_f64(),
        s.remaining.to_f64(),
        s.box_count,
        s.scan.mean(),
        s.scan.max,
        s.residual.encode(),
        s.wall_time.as_secs_f64() * 1e3,
    )
}

#[derive(Serialize)]
struct SnapshotSummary {
    n: u64,
    ratio: f64,
    largest_w: f64,
    largest_h: f64,
    box_count: u64,
    residual: String,
}

impl SnapshotSummary {
    fn of<S: Scalar>(s: &StatsSnapshot<S>) -> Self {
        SnapshotSummary {
            n: s.n,
            ratio: s.ratio.to_f64(),
            largest_w: s.largest_w.to_f64(),
            largest_h: s.largest_h.to_f64(),
            box_count: s.box_count,
            residual: s.residual.encode(),
        }
    }
}

#[derive(Serialize)]
struct PackReport<'a> {
    config: &'a PackerConfig,
    stream_hash: String,
    termination: &'a Termination,
    placed: u64,
    resumed_from: Option<u64>,
    final_snapshot: Option<SnapshotSummary>,
    snapshots: Vec<SnapshotSummary>,
    pruned_boxes: u64,
    wall_seconds: f64,
}

pub fn pack(a: &PackArgs) -> Outcome {
    let config = pack_config(a)?;
    match config.mode {
        NumericMode::Float => pack_in::<Float>(a, config),
        NumericMode::Exact => pack_in::<Exact>(a, config),
    }
}

fn pack_in<S: Scalar>(a: &PackArgs, config: PackerConfig) -> Outcome {
    let started = Instant::now();
    fs::create_dir_all(&a.out)?;
    let placements_path = a.out.join(PLACEMENTS_FILE);
    let checkpoint_path = a.out.join(CHECKPOINT_FILE);
    let emit = config.emit_placements;

    let (mut packer, mut sink, resumed_from): (Packer<S>, Box<dyn PlacementSink<S>>, _) = if a.resume {
        let (packer, offset) = Packer::<S>::resume(config, &checkpoint_path)?;
        let placed = packer.placed();
        let sink: Box<dyn PlacementSink<S>> = if emit {
            Box::new(resume_placement_file(&placements_path, offset).map_err(CliError::bad_input)?)
        } else {
            Box::new(NullSink)
        };
        (packer, sink, Some(placed))
    } else {
        let packer = Packer::<S>::new(config)?;
        let sink: Box<dyn PlacementSink<S>> = if emit {
            Box::new(create_placement_file(&placements_path, S::MODE)?)
        } else {
            Box::new(NullSink)
        };
        (packer, sink, None)
    };

    let ckpt = (packer.config().checkpoint_every > 0).then_some(checkpoint_path.as_path());
    let limit = a.stop_after.unwrap_or(u64::MAX);
    let result = packer.run_until(limit, sink.as_mut(), ckpt)?;
    drop(sink);

    let store = packer.store();
    write_boxes(
        BufWriter::new(File::create(a.out.join(BOXES_FILE))?),
        packer.placed(),
        &store.pruned_area(),
        store.iter(),
    )?;
    let mut snaps = BufWriter::new(File::create(a.out.join(SNAPSHOTS_FILE))?);
    writeln!(snaps, "{SNAPSHOT_HEADER}")?;
    for s in &result.snapshots {
        writeln!(snaps, "{}", snapshot_row(s))?;
    }
    snaps.flush()?;

    let report = PackReport {
        config: packer.config(),
        stream_hash: packer.config().stream_hash(),
        termination: &result.termination,
        placed: result.placed,
        resumed_from,
        final_snapshot: result.final_snapshot.as_ref().map(SnapshotSummary::of),
        snapshots: result.snapshots.iter().map(SnapshotSummary::of).collect(),
        pruned_boxes: store.pruned_count(),
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    write_json(&a.out.join(REPORT_FILE), &report)?;

    if let Some(f) = &result.final_snapshot {
        println!(
            "placed {} rectangles ({} arithmetic) in {:.2}s",
            result.placed,
            S::MODE,
            started.elapsed().as_secs_f64()
        );
        println!("ratio {:.4}", f.ratio.to_f64());
        println!(
            "largest box {:.6e} x {:.6e}, {} boxes, residual {}",
            f.largest_w.to_f64(),
            f.largest_h.to_f64(),
            f.box_count,
            f.residual.encode()
        );
    }
    for s in &result.snapshots {
        println!("  n={:<12} ratio={:.4}", s.n, s.ratio.to_f64());
    }
    match result.termination {
        Termination::Completed => Ok(0),
        Termination::NoFit { index } => {
            eprintln!("no empty box can hold rectangle {index}");
            Ok(EXIT_NO_FIT)
        }
        Termination::Aborted { reason } => {
            println!("{reason}");
            Ok(0)
        }
    }
}

pub fn verify(a: &VerifyArgs) -> Outcome {
    let mode = placement_mode(&a.placements)?;
    let mut report = match mode {
        NumericMode::Float => verify_in::<Float>(a)?,
        NumericMode::Exact => verify_in::<Exact>(a)?,
    };
    if let Some(k) = a.replay {
        report.first_divergence = harmopack::replay_compare(&PackerConfig::new(k.max(1)), k)?;
    }
    println!("checked {} rectangles ({} arithmetic)", report.n_checked, report.mode);
    println!("overlapping pairs: {}", report.overlap_total);
    for (i, j) in &report.overlap_violations {
        println!("  P_{i} and P_{j}");
    }
    if report.overlap_total > report.overlap_violations.len() as u64 {
        println!("  ... {} more", report.overlap_total - report.overlap_violations.len() as u64);
    }
    println!(
        "outside the square of side {}: {}",
        report.container_side,
        report.containment_violations.len()
    );
    if let Some(r) = &report.conservation_residual {
        println!("conservation residual: {r}");
    }
    if let Some(agrees) = report.brute_force_agrees {
        println!("all-pairs check agrees: {agrees}");
    }
    if a.replay.is_some() {
        match &report.first_divergence {
            None => println!("float/exact replay: identical host choices"),
            Some(d) => println!(
                "float/exact replay: first divergence at step {} (float box {} key {}/{}, exact box {} key {}/{})",
                d.index,
                d.float_host.id,
                d.float_host.primary,
                d.float_host.secondary,
                d.exact_host.id,
                d.exact_host.primary,
                d.exact_host.secondary
            ),
        }
    }
    if let Some(path) = &a.json {
        write_json(path, &report)?;
    }
    if report.is_valid() {
        println!("valid");
        Ok(0)
    } else {
        println!("INVALID");
        Ok(EXIT_INVALID)
    }
}

fn verify_in<S: Scalar>(a: &VerifyArgs) -> Result<ValidityReport, CliError> {
    let placements: Vec<Placement<S>> = read_placement_file(&a.placements)?;
    let dump = a.boxes.as_deref().map(read_box_file::<S>).transpose()?;
    let side = S::from_rational(&parse_rational(&a.side).map_err(CliError::bad_input)?);
    Ok(harmopack::verify(&placements, dump.as_ref(), &side, a.brute_force_max as usize)?)
}

fn snapshots_path(input: &Path) -> PathBuf {
    if input.is_dir() {
        input.join(SNAPSHOTS_FILE)
    } else {
        input.to_path_buf()
    }
}

pub fn stats(a: &StatsArgs) -> Outcome {
    let path = snapshots_path(&a.input);
    let file = File::open(&path).map_err(|e| CliError::bad_input(format!("{}: {e}", path.display())))?;
    let mut lines = BufReader::new(file).lines();
    match lines.next() {
        Some(Ok(h)) if h.trim_end() == SNAPSHOT_HEADER => {}
        _ => return Err(CliError::bad_input(format!("{}: not a snapshot file", path.display()))),
    }
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 11 {
            return Err(CliError::bad_input(format!("{}:{}: expected 11 columns", path.display(), k + 2)));
        }
        let bad = |what| CliError::bad_input(format!("{}:{}: bad {what}", path.display(), k + 2));
        let n: u64 = cols[0].parse().map_err(|_| bad("n"))?;
        let ratio: f64 = cols[1].parse().map_err(|_| bad("ratio"))?;
        let boxes: u64 = cols[6].parse().map_err(|_| bad("box_count"))?;
        rows.push((n, ratio, boxes, cols[9].to_owned()));
    }
    println!("{:>14}  {:>8}  {:>10}  residual", "n", "ratio", "boxes");
    for (n, ratio, boxes, residual) in &rows {
        println!("{n:>14}  {ratio:>8.4}  {boxes:>10}  {residual}");
    }
    if let Some(out) = &a.csv {
        let mut w = BufWriter::new(File::create(out)?);
        writeln!(w, "n,ratio")?;
        for (n, ratio, _, _) in &rows {
            writeln!(w, "{n},{ratio}")?;
        }
        w.flush()?;
    }
    Ok(0)
}

fn decision(d: harmopack::Decision) -> &'static str {
    match d {
        harmopack::Decision::Holds => "ok",
        harmopack::Decision::Fails => "FAILS",
        harmopack::Decision::Tight => "UNDECIDED",
    }
}

pub fn bound(a: &BoundArgs) -> Outcome {
    let report = analysis::bound_report(a.n, a.rows)?;
    println!("n = {}", report.n);
    println!("container side 1 + 1/n = {}", report.side_f64);
    println!(
        "area bound 1 + (2/n)(ln 2 + 1/(2n)) = {:.10} ({} below (1 + 1/n)^2)",
        report.area_bound.midpoint_f64(),
        decision(report.area_below_square)
    );
    let layout = &report.layout;
    println!(
        "strip width over {} rows = 2/n - {:.6e}: {}",
        layout.rows_materialized,
        rational_to_f64(&layout.tail_width),
        if layout.total_width < layout.width_limit() { "ok" } else { "FAILS" }
    );
    let mut failing = 0;
    for row in &layout.rows {
        if !row.passes() {
            failing += 1;
        }
    }
    let first = &layout.rows[0];
    println!(
        "row 1: P_{}..P_{} length {:.12} < ln 2 + 1/(2n) = {:.12}: {}",
        first.first,
        first.last,
        first.exact_length.midpoint_f64(),
        first.sharp_bound.midpoint_f64(),
        decision(first.below_sharp_bound)
    );
    println!(
        "row checks (length < ln 2 + 1/first < 1): {} of {} pass",
        layout.rows.len() - failing,
        layout.rows.len()
    );
    let mut ok = report.passes();
    if let Some(path) = &a.layout {
        let clean = match a.layout_mode {
            NumericMode::Float => glued_to_file::<Float>(a, path)?,
            NumericMode::Exact => glued_to_file::<Exact>(a, path)?,
        };
        ok &= clean;
    }
    if let Some(path) = &a.json {
        write_json(path, &report)?;
    }
    Ok(if ok { 0 } else { EXIT_INVALID })
}

fn glued_to_file<S: Scalar>(a: &BoundArgs, path: &Path) -> Result<bool, CliError> {
    let g = analysis::glued_layout::<S>(a.n, a.layout_rows)?;
    let mut w = create_placement_file(path, S::MODE)?;
    for p in &g.placements {
        PlacementSink::<S>::accept(&mut w, p)?;
    }
    PlacementSink::<S>::flush(&mut w)?;
    let report = harmopack::verify(&g.placements, None, &g.side, 0)?;
    println!(
        "glued layout: {} rectangles in the (1 + 1/n)-square, {} overlaps, {} outside: {}",
        g.placements.len(),
        report.overlap_total,
        report.containment_violations.len(),
        if report.is_valid() { "ok" } else { "FAILS" }
    );
    Ok(report.is_valid())
}

fn print_epsilon(r: &EpsilonReport) {
    println!("packed M = {}", r.packed_count);
    println!("side 1 + 1/(M+1) = 1 + {:.6e}", rational_to_f64(&r.delta));
    println!("epsilon = 2 delta + delta^2 = {:.6e}", r.epsilon_f64);
    println!("(1 + delta)^2 - 1 - epsilon = 0: {}", r.identity_holds);
    println!(
        "epsilon < {:.6e}: {}",
        rational_to_f64(&r.target),
        if r.below_target { "yes" } else { "no" }
    );
}

#[derive(Serialize)]
struct ContinueReport {
    continuation: ContinuationReport,
    epsilon: EpsilonReport,
}

pub fn continue_run(a: &ContinueArgs) -> Outcome {
    let w = parse_rational(&a.w).map_err(CliError::bad_input)?;
    let h = parse_rational(&a.h).map_err(CliError::bad_input)?;
    let target = parse_rational(&a.target).map_err(CliError::bad_input)?;
    let c = analysis::continuation(&w, &h, a.n0)?;
    println!("box {} x {} after n0 = {}", a.w, a.h, a.n0);
    println!("cells of side 1/n0: {} x {}", c.cells_w, c.cells_h);
    println!("square grid: {} = {}^2", c.square_grid, c.cells_w.min(c.cells_h));
    println!("full grid: {}", c.full_grid);
    println!("composed total n0 + grid = {}", c.composed_total);
    println!("box area x (n0 + 1) = {:.8}", c.ratio);
    let m = u64::try_from(c.composed_total).map_err(CliError::bad_input)?;
    let e = analysis::epsilon_report(m, &target)?;
    print_epsilon(&e);
    if let Some(path) = &a.json {
        write_json(
            path,
            &ContinueReport {
                continuation: c,
                epsilon: e,
            },
        )?;
    }
    Ok(0)
}

pub fn epsilon(a: &EpsilonArgs) -> Outcome {
    let target = parse_rational(&a.target).map_err(CliError::bad_input)?;
    let r = analysis::epsilon_report(a.m, &target)?;
    print_epsilon(&r);
    if let Some(path) = &a.json {
        write_json(path, &r)?;
    }
    Ok(if r.below_target && r.identity_holds { 0 } else { EXIT_INVALID })
}

pub fn render(a: &RenderArgs) -> Outcome {
    let svg = match &a.input {
        Some(path) => match placement_mode(path)? {
            NumericMode::Float => render_file::<Float>(a, path)?,
            NumericMode::Exact => render_file::<Exact>(a, path)?,
        },
        None => {
            let n = a.n.unwrap_or(1000);
            let mut packer = Packer::<Float>::new(PackerConfig::new(n))?;
            let mut placements: Vec<Placement<Float>> = Vec::new();
            packer.run(&mut placements, None)?;
            render_placements(&placements, a)?
        }
    };
    fs::write(&a.svg, svg)?;
    println!("wrote {}", a.svg.display());
    Ok(0)
}

fn render_file<S: Scalar>(a: &RenderArgs, path: &Path) -> Result<String, CliError> {
    let mut placements: Vec<Placement<S>> = read_placement_file(path)?;
    if let Some(n) = a.n {
        placements.truncate(n as usize);
    }
    render_placements(&placements, a)
}

fn render_placements<S: Scalar>(placements: &[Placement<S>], a: &RenderArgs) -> Result<String, CliError> {
    let side = match &a.side {
        Some(s) => rational_to_f64(&parse_rational(s).map_err(CliError::bad_input)?),
        None => placements
            .iter()
            .map(|p| p.right().to_f64().max(p.top().to_f64()))
            .fold(1.0, f64::max),
    };
    Ok(harmopack::render_svg(placements, side))
}
