use std::collections::HashMap;
use std::path::{Path, PathBuf};

use clap::Args;
use vpr_core::depth_model::DepthRangeThreshold;
use vpr_core::evaluation::{
    camera_speed_experiment, fixed, localize, make_ground_truth, recall_curve, sweep_d_l,
    PipelineParams, QueryMatch, RecallCurve, SweepGrid, SweepSurface, DEFAULT_VISUAL_OFFSET,
};
use vpr_core::simworld::{condition_pair, generate_world, render_traverse, WorldConfig};
use vpr_core::traverse_store::{load_traverse, save_traverse, Direction, Traverse};

use crate::manifest::{manifest_path, write_text, RunManifest};
use crate::{CliError, CliResult, PairArgs, DEFAULT_D_CROSS, DEFAULT_D_SAME, DEFAULT_L, DEFAULT_N};

pub const MATCHES_HEADER: [&str; 4] = ["query_id", "matched_ref_id", "score", "candidate_list"];
pub const WORLD_FILE: &str = "world.txt";
pub const SIMULATE_MANIFEST: &str = "manifest.txt";

fn parse_depth(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("not a number: {s:?}"))?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("depth threshold must be positive or inf, got {s}"))
    }
}

fn threshold(d: f64) -> CliResult<DepthRangeThreshold<f64>> {
    Ok(DepthRangeThreshold::bounded(d)?)
}

fn join<T>(items: &[T], f: impl Fn(&T) -> String) -> String {
    items.iter().map(f).collect::<Vec<_>>().join(",")
}

fn load(path: &Path) -> CliResult<Traverse<f64>> {
    Ok(load_traverse::<f64>(path)?)
}

fn write_csv(path: &Path, rows: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    rows(&mut w).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    write_text(path, &String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn even_l(l: usize) -> CliResult<()> {
    if l % 2 == 0 {
        Ok(())
    } else {
        Err(CliError::Usage(format!("--l must be even, got {l}")))
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// World configuration, `key=value` per line; `seed` is required.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Directory name of a simulated traverse, e.g. `reverse-cond1`.
pub fn traverse_dir_name(direction: Direction, condition: &str) -> String {
    format!("{direction}-{condition}")
}

/// Writes `world.txt`, forward and reverse traverses under both conditions,
/// and `manifest.txt`. Returns the traverse directories in write order.
pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<Vec<PathBuf>> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Io(format!("{}: {e}", args.config.display())))?;
    let config = WorldConfig::from_key_values(&text)?;
    let world = generate_world(&config)?;
    write_text(&args.out.join(WORLD_FILE), &config.to_key_values())?;

    let mut manifest = RunManifest::new("simulate")
        .input("config", &args.config)
        .param("seed", config.seed)
        .param("frame_count", config.frame_count());
    let mut dirs = Vec::new();
    for cond in condition_pair(&config) {
        manifest = manifest.param(&format!("{}.seed", cond.label), cond.seed);
        for direction in [Direction::Forward, Direction::Reverse] {
            let t = render_traverse::<f64>(&world, direction, &cond)?;
            let dir = args.out.join(traverse_dir_name(direction, &cond.label));
            save_traverse(&t, &dir)?;
            manifest = manifest.output(&traverse_dir_name(direction, &cond.label), &dir);
            dirs.push(dir);
        }
    }
    manifest
        .output("world", &args.out.join(WORLD_FILE))
        .write(&args.out.join(SIMULATE_MANIFEST))?;
    Ok(dirs)
}

#[derive(Debug, Clone, Args)]
pub struct MatchArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    /// Depth threshold in meters or `inf` [default: 10 across conditions, 50 within one]
    #[arg(long, value_parser = parse_depth)]
    pub d: Option<f64>,
    /// Sequence length (even)
    #[arg(long, default_value_t = DEFAULT_L)]
    pub l: usize,
    /// Retrieval candidates per query
    #[arg(long, default_value_t = DEFAULT_N)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Depth threshold default: tighter when the two traverses were captured
/// under different conditions.
pub fn default_depth(query: &Traverse<f64>, reference: &Traverse<f64>) -> f64 {
    if query.meta().condition == reference.meta().condition {
        DEFAULT_D_SAME
    } else {
        DEFAULT_D_CROSS
    }
}

pub fn cmd_match(args: &MatchArgs) -> CliResult<Vec<QueryMatch<f64>>> {
    even_l(args.l)?;
    let query = load(&args.pair.query)?;
    let reference = load(&args.pair.reference)?;
    let d = args.d.unwrap_or_else(|| default_depth(&query, &reference));
    let params = PipelineParams {
        depth_threshold: threshold(d)?,
        sequence_length: args.l,
        stride: args.stride,
        top_n: args.n,
    };
    let matches = localize(&query, &reference, &params)?;

    let qf = query.frames();
    let rf = reference.frames();
    write_csv(&args.out, |w| {
        w.write_record(MATCHES_HEADER)?;
        for m in &matches {
            w.write_record([
                qf[m.query].frame_id.to_string(),
                rf[m.matched].frame_id.to_string(),
                m.score.to_string(),
                m.candidates
                    .iter()
                    .map(|&c| rf[c].frame_id.to_string())
                    .collect::<Vec<_>>()
                    .join(";"),
            ])?;
        }
        Ok(())
    })?;
    RunManifest::new("match")
        .input("query", &args.pair.query)
        .input("reference", &args.pair.reference)
        .param("d", fixed(d))
        .param("l", args.l)
        .param("n", args.n)
        .param("stride", args.stride)
        .output("matches", &args.out)
        .write(&manifest_path(&args.out))?;
    Ok(matches)
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Matches CSV written by `vpr match`
    #[arg(long)]
    pub matches: PathBuf,
    #[command(flatten)]
    pub pair: PairArgs,
    /// Visual offset `o` in meters
    #[arg(long, default_value_t = DEFAULT_VISUAL_OFFSET)]
    pub offset: f64,
    /// Ascending radii in meters
    #[arg(long, value_delimiter = ',', default_value = "0,5,10,15,20,25,30,40,50")]
    pub radii: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Reads `(query index, matched reference index)` pairs from a matches CSV.
pub fn read_matches(
    path: &Path,
    query: &Traverse<f64>,
    reference: &Traverse<f64>,
) -> CliResult<Vec<(usize, usize)>> {
    let bad = |m: String| CliError::Validation(format!("{}: {m}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => CliError::Io(format!("{}: {e}", path.display())),
        _ => bad(e.to_string()),
    })?;
    let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != MATCHES_HEADER {
        return Err(bad(format!("expected header {}", MATCHES_HEADER.join(","))));
    }
    let index = |t: &Traverse<f64>| -> HashMap<u32, usize> {
        t.frames().iter().enumerate().map(|(i, f)| (f.frame_id, i)).collect()
    };
    let (qi, ri) = (index(query), index(reference));
    let mut pairs = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let id = |col: usize| -> CliResult<u32> {
            record[col]
                .trim()
                .parse()
                .map_err(|_| bad(format!("row {}: bad id {:?}", row + 1, &record[col])))
        };
        let (q, r) = (id(0)?, id(1)?);
        let q = *qi
            .get(&q)
            .ok_or_else(|| bad(format!("query frame {q} not in query traverse")))?;
        let r = *ri
            .get(&r)
            .ok_or_else(|| bad(format!("reference frame {r} not in reference traverse")))?;
        pairs.push((q, r));
    }
    Ok(pairs)
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> CliResult<RecallCurve<f64>> {
    let query = load(&args.pair.query)?;
    let reference = load(&args.pair.reference)?;
    let pairs = read_matches(&args.matches, &query, &reference)?;
    let gt = make_ground_truth(&query.poses(), &reference.poses(), args.offset)?;
    let curve = recall_curve(&pairs, &gt, &args.radii)?;
    write_text(&args.out, &curve.to_csv())?;
    RunManifest::new("evaluate")
        .input("matches", &args.matches)
        .input("query", &args.pair.query)
        .input("reference", &args.pair.reference)
        .param("offset", fixed(args.offset))
        .param("radii", join(&args.radii, |r| fixed(*r)))
        .output("curve", &args.out)
        .write(&manifest_path(&args.out))?;
    Ok(curve)
}

/// Grid flags shared by `sweep` and `speed`.
#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Depth thresholds in meters (`inf` allowed)
    #[arg(long, value_delimiter = ',', value_parser = parse_depth, default_value = "5,10,20,30,40,50,inf")]
    pub d_grid: Vec<f64>,
    /// Even sequence lengths
    #[arg(long, value_delimiter = ',', default_value = "0,2,4,6,8,10,12")]
    pub l_grid: Vec<usize>,
    /// Recall radius in meters
    #[arg(long, default_value_t = 10.0)]
    pub radius: f64,
    #[arg(long, default_value_t = DEFAULT_N)]
    pub n: usize,
    #[arg(long, default_value_t = DEFAULT_VISUAL_OFFSET)]
    pub offset: f64,
}

impl GridArgs {
    fn grid(&self) -> CliResult<SweepGrid<f64>> {
        if !(self.radius >= 0.0) {
            return Err(CliError::Usage("--radius must be non-negative".into()));
        }
        Ok(SweepGrid {
            depth_thresholds: self.d_grid.iter().map(|&d| threshold(d)).collect::<CliResult<_>>()?,
            sequence_lengths: self.l_grid.clone(),
            top_n: self.n,
            radius: self.radius,
        })
    }

    fn record(&self, m: RunManifest) -> RunManifest {
        m.param("d_grid", join(&self.d_grid, |d| fixed(*d)))
            .param("l_grid", join(&self.l_grid, |l| l.to_string()))
            .param("radius", fixed(self.radius))
            .param("n", self.n)
            .param("offset", fixed(self.offset))
    }
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    #[arg(long)]
    pub out: PathBuf,
}

fn prepare(
    pair: &PairArgs,
    grid: &GridArgs,
) -> CliResult<(Traverse<f64>, Traverse<f64>, vpr_core::evaluation::GroundTruth<f64>, SweepGrid<f64>)> {
    let g = grid.grid()?;
    let query = load(&pair.query)?;
    let reference = load(&pair.reference)?;
    let gt = make_ground_truth(&query.poses(), &reference.poses(), grid.offset)?;
    Ok((query, reference, gt, g))
}

pub fn cmd_sweep(args: &SweepArgs) -> CliResult<SweepSurface<f64>> {
    if args.stride == 0 {
        return Err(CliError::Usage("--stride must be at least 1".into()));
    }
    let (query, reference, gt, grid) = prepare(&args.pair, &args.grid)?;
    let surface = sweep_d_l(&query, &reference, &gt, &grid, args.stride)?;
    write_text(&args.out, &surface.to_csv())?;
    args.grid
        .record(
            RunManifest::new("sweep")
                .input("query", &args.pair.query)
                .input("reference", &args.pair.reference),
        )
        .param("stride", args.stride)
        .output("surface", &args.out)
        .write(&manifest_path(&args.out))?;
    Ok(surface)
}

#[derive(Debug, Clone, Args)]
pub struct SpeedArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Reference strides (camera speed-up factors)
    #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
    pub strides: Vec<usize>,
    /// Output directory; one `surface_stride<m>.csv` per stride
    #[arg(long)]
    pub out: PathBuf,
}

pub fn speed_csv_path(out: &Path, stride: usize) -> PathBuf {
    out.join(format!("surface_stride{stride}.csv"))
}

pub fn cmd_speed(args: &SpeedArgs) -> CliResult<Vec<SweepSurface<f64>>> {
    let (query, reference, gt, grid) = prepare(&args.pair, &args.grid)?;
    let surfaces = camera_speed_experiment(&query, &reference, &gt, &grid, &args.strides)?;
    for s in &surfaces {
        let path = speed_csv_path(&args.out, s.stride);
        write_text(&path, &s.to_csv())?;
        args.grid
            .record(
                RunManifest::new("speed")
                    .input("query", &args.pair.query)
                    .input("reference", &args.pair.reference),
            )
            .param("strides", join(&args.strides, |m| m.to_string()))
            .param("stride", s.stride)
            .output("surface", &path)
            .write(&manifest_path(&path))?;
    }
    Ok(surfaces)
}
