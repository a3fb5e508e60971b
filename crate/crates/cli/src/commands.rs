use std::fs;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use hgn_congestion::config::RunConfig;
use hgn_congestion::features::{dump_features, featurize};
use hgn_congestion::graph::{build_graph, make_grid_spec, GraphStats, GridSpec};
use hgn_congestion::heatmap::{render_pgm, render_ppm, HeatmapOptions};
use hgn_congestion::labels::{
    downsample_area_avg, normalize_labels, rudy_labels, rudy_map, split_c_max, CongestionLabels, LabelFile, RawLabels,
};
use hgn_congestion::metrics::MetricReport;
use hgn_congestion::model::{predict, read_checkpoint, save_checkpoint, GraphIndex, ModelParams};
use hgn_congestion::netlist::{emit_canonical, parse_canonical, parse_def_with_library, Design, MasterLibrary};
use hgn_congestion::synth::{synth_design, SynthSpec};
use hgn_congestion::train::{fit, log_to_json_lines, Sample};
use hgn_congestion::{Error, Result, Scalar};
use log::info;

use crate::manifest::{Entry, Manifest};
use crate::{usage, Cli, Command, Global, Precision};

pub fn run(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    run_config(g, None)?;
    match &cli.command {
        Command::Ingest {
            input,
            lib,
            output,
            dump_features: dump,
        } => ingest(g, input, lib.as_deref(), output.as_deref(), dump.as_deref()),
        Command::Synth {
            cells,
            nets,
            clusters,
            seed,
            die,
            name,
            output,
        } => {
            let mut spec = SynthSpec::new(*cells, *nets, *clusters, *seed);
            if let Some(side) = die {
                spec.die_w = *side;
                spec.die_h = *side;
            }
            if let Some(n) = name {
                spec.name = n.clone();
            }
            let d = synth_design(&spec)?;
            write_out(output.as_deref(), emit_canonical(&d).as_bytes())
        }
        Command::Label {
            designs,
            out_dir,
            source_factor,
            raw,
            lib,
        } => label(g, designs, out_dir, *source_factor, *raw, lib.as_deref()),
        Command::Train {
            split,
            out,
            precision,
            lib,
        } => train(g, split, out, *precision, lib.as_deref()),
        Command::Eval {
            checkpoint,
            designs,
            labels,
            split,
            subset,
            out,
            lib,
        } => eval(
            g,
            checkpoint,
            designs,
            labels,
            split.as_deref(),
            subset,
            out.as_deref(),
            lib.as_deref(),
        ),
        Command::Predict {
            checkpoint,
            design,
            out,
            lib,
        } => predict_cmd(g, checkpoint, design, out, lib.as_deref()),
        Command::Heatmap {
            input,
            output,
            ppm,
            scale,
            range,
        } => heatmap(input, output, ppm.as_deref(), *scale, range),
        Command::GraphStats { design, json, lib } => graph_stats(g, design, json.as_deref(), lib.as_deref()),
    }
}

pub fn with_path(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    if path == Path::new("-") {
        let mut buf = Vec::new();
        std::io::stdin().read_to_end(&mut buf)?;
        return Ok(buf);
    }
    fs::read(path).map_err(|e| with_path(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    String::from_utf8(read_bytes(path)?)
        .map_err(|_| Error::InvalidArgument(format!("{}: not UTF-8 text", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| with_path(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| with_path(path, e))
}

fn write_out(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => write_file(p, bytes),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| with_path(dir, e))
}

/// Settings from `--config` (or `fallback` when absent), then `--set`.
fn run_config(g: &Global, fallback: Option<&Path>) -> Result<RunConfig> {
    let mut cfg = match g.config.as_deref().or(fallback.filter(|p| p.exists())) {
        Some(p) => RunConfig::parse_text(&read_text(p)?).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", p.display())),
            other => other,
        })?,
        None => RunConfig::default(),
    };
    cfg.apply(g.overrides.iter().map(String::as_str))?;
    cfg.validate()?;
    Ok(cfg)
}

fn library(lib: Option<&Path>) -> Result<MasterLibrary> {
    match lib {
        Some(p) => MasterLibrary::parse(&read_text(p)?),
        None => Ok(MasterLibrary::default()),
    }
}

/// Canonical JSON lines when the text starts with `{`, DEF otherwise.
fn load_design(path: &Path, lib: &MasterLibrary) -> Result<Design> {
    let text = read_text(path)?;
    if text.trim_start().starts_with('{') {
        parse_canonical(&text)
    } else {
        parse_def_with_library(&text, lib)
    }
}

fn grid_spec(d: &Design, cfg: &RunConfig) -> Result<GridSpec> {
    make_grid_spec(d, cfg.grid_m, cfg.grid_n, cfg.model.levels)
}

fn ingest(g: &Global, input: &Path, lib: Option<&Path>, output: Option<&Path>, dump: Option<&Path>) -> Result<()> {
    let d = load_design(input, &library(lib)?)?;
    info!("{}: {} cells, {} nets", d.name, d.cells.len(), d.nets.len());
    write_out(output, emit_canonical(&d).as_bytes())?;
    if let Some(dir) = dump {
        let cfg = run_config(g, None)?;
        let graph = build_graph(&d, &grid_spec(&d, &cfg)?, cfg.model.k_geom);
        let fs = featurize(&d, &graph);
        ensure_dir(dir)?;
        let files = dump_features(&fs, dir)?;
        info!("wrote {} feature files to {}", files.len(), dir.display());
    }
    Ok(())
}

/// RUDY at `factor` times the target resolution, area-averaged down.
fn raw_labels(d: &Design, spec: &GridSpec, factor: usize) -> Result<RawLabels> {
    if factor == 0 {
        return Err(usage("--source-factor must be >= 1"));
    }
    if factor == 1 {
        return Ok(rudy_labels(d, spec));
    }
    let fine = make_grid_spec(d, spec.m * factor, spec.n * factor, 1)?;
    let map = rudy_map(d, &fine);
    let grid = downsample_area_avg(&map, fine.m, fine.n, spec.m, spec.n)?;
    let cell = d.cells.iter().map(|c| {
        let (x, y) = c.center();
        grid[spec.tile_of(x, y)]
    });
    Ok(RawLabels {
        m: spec.m,
        n: spec.n,
        cell: cell.collect(),
        grid,
    })
}

fn label(g: &Global, designs: &[PathBuf], out_dir: &Path, factor: usize, raw: bool, lib: Option<&Path>) -> Result<()> {
    let cfg = run_config(g, None)?;
    let lib = library(lib)?;
    let mut loaded = Vec::new();
    for p in designs {
        let d = load_design(p, &lib)?;
        let r = raw_labels(&d, &grid_spec(&d, &cfg)?, factor)?;
        loaded.push((d.name.clone(), r));
    }
    let c_max = split_c_max(loaded.iter().map(|(_, r)| r));
    ensure_dir(out_dir)?;
    for (name, r) in &loaded {
        let file = if raw {
            LabelFile::from_raw(name, r)
        } else {
            LabelFile::from_normalized(name, &normalize_labels(r, c_max)?)
        };
        let mut buf = Vec::new();
        file.write(&mut buf)?;
        let path = out_dir.join(format!("{name}.labels"));
        write_file(&path, &buf)?;
        info!("wrote {}", path.display());
    }
    Ok(())
}

fn read_label_file(path: &Path) -> Result<LabelFile> {
    let f = fs::File::open(path).map_err(|e| with_path(path, e))?;
    LabelFile::read(BufReader::new(f))
}

/// Samples for one group of designs. Label files holding normalized labels
/// are used as is; raw files and missing labels (computed with RUDY) are
/// normalized with a `c_max` taken over the whole group.
fn load_samples(entries: &[Entry], cfg: &RunConfig, lib: &MasterLibrary) -> Result<Vec<Sample>> {
    enum Pending {
        Ready(CongestionLabels),
        Raw(RawLabels),
    }
    let mut staged = Vec::new();
    for e in entries {
        let d = load_design(&e.design, lib)?;
        let spec = grid_spec(&d, cfg)?;
        let labels = match &e.labels {
            Some(p) => {
                let f = read_label_file(p)?;
                if (f.m, f.n) != (spec.m, spec.n) {
                    return Err(Error::InvalidArgument(format!(
                        "{}: labels are {}x{}, configured grid is {}x{}",
                        p.display(),
                        f.m,
                        f.n,
                        spec.m,
                        spec.n
                    )));
                }
                match f.labels() {
                    Some(y) => Pending::Ready(y),
                    None => Pending::Raw(RawLabels {
                        m: f.m,
                        n: f.n,
                        grid: f.grid,
                        cell: f.cell,
                    }),
                }
            }
            None => Pending::Raw(rudy_labels(&d, &spec)),
        };
        staged.push((d, spec, labels));
    }
    let c_max = split_c_max(staged.iter().filter_map(|(_, _, l)| match l {
        Pending::Raw(r) => Some(r),
        Pending::Ready(_) => None,
    }));
    staged
        .into_iter()
        .map(|(d, spec, l)| {
            let y = match l {
                Pending::Ready(y) => y,
                Pending::Raw(r) => normalize_labels(&r, c_max)?,
            };
            Sample::new(&d, &spec, cfg.model.k_geom, y)
        })
        .collect()
}

fn train(g: &Global, split: &Path, out: &Path, precision: Precision, lib: Option<&Path>) -> Result<()> {
    let cfg = run_config(g, None)?;
    let manifest = Manifest::load(split)?;
    let lib = library(lib)?;
    let train = load_samples(&manifest.train, &cfg, &lib)?;
    let val = load_samples(&manifest.val, &cfg, &lib)?;
    info!("training on {} designs, validating on {}", train.len(), val.len());
    let (log, best_epoch, best_score) = match precision {
        Precision::F64 => train_with::<f64>(&train, &val, &cfg, out)?,
        Precision::F32 => train_with::<f32>(&train, &val, &cfg, out)?,
    };
    write_file(&out.join("train_log.jsonl"), log.as_bytes())?;
    write_file(&out.join("config.txt"), cfg.to_text().as_bytes())?;
    let summary = serde_json::json!({
        "best_epoch": best_epoch,
        "best_val_mean_spearman": best_score,
        "train_designs": train.iter().map(|s| &s.name).collect::<Vec<_>>(),
        "val_designs": val.iter().map(|s| &s.name).collect::<Vec<_>>(),
        "precision": match precision { Precision::F64 => "f64", Precision::F32 => "f32" },
    });
    write_file(&out.join("summary.json"), format!("{summary:#}\n").as_bytes())?;
    println!("best epoch {best_epoch}, validation mean Spearman {best_score:.4}");
    Ok(())
}

fn train_with<T: Scalar>(
    train: &[Sample],
    val: &[Sample],
    cfg: &RunConfig,
    out: &Path,
) -> Result<(String, usize, f64)> {
    let outcome = fit::<T>(train, val, &cfg.model, &cfg.train)?;
    ensure_dir(out)?;
    save_checkpoint(&out.join("model.ckpt"), &outcome.best, &cfg.model)?;
    Ok((log_to_json_lines(&outcome.log)?, outcome.best_epoch, outcome.best_score))
}

/// Checkpoint plus run settings; the grid comes from `config.txt` next to
/// the checkpoint unless `--config` is given, and the model section always
/// comes from the checkpoint.
fn load_model(g: &Global, checkpoint: &Path) -> Result<(ModelParams<f64>, RunConfig)> {
    let (params, model) = read_checkpoint::<f64>(&read_bytes(checkpoint)?)?;
    let sidecar = checkpoint.parent().map(|p| p.join("config.txt"));
    let mut cfg = run_config(g, sidecar.as_deref())?;
    if cfg.model != model {
        log::warn!("model settings differ from the checkpoint; using the checkpoint's");
    }
    cfg.model = model;
    Ok((params, cfg))
}

#[allow(clippy::too_many_arguments)]
fn eval(
    g: &Global,
    checkpoint: &Path,
    designs: &[PathBuf],
    labels: &[PathBuf],
    split: Option<&Path>,
    subset: &str,
    out: Option<&Path>,
    lib: Option<&Path>,
) -> Result<()> {
    let (params, cfg) = load_model(g, checkpoint)?;
    let lib = library(lib)?;
    let entries: Vec<Entry> = match split {
        Some(m) => {
            if !designs.is_empty() {
                return Err(usage("give either --split or design paths, not both"));
            }
            Manifest::load(m)?.split(subset)?.to_vec()
        }
        None => {
            if designs.is_empty() {
                return Err(usage("no designs to evaluate (pass paths or --split)"));
            }
            if !labels.is_empty() && labels.len() != designs.len() {
                return Err(usage(format!(
                    "{} designs but {} --labels files",
                    designs.len(),
                    labels.len()
                )));
            }
            designs
                .iter()
                .enumerate()
                .map(|(i, d)| Entry {
                    design: d.clone(),
                    labels: labels.get(i).cloned(),
                })
                .collect()
        }
    };
    if entries.is_empty() {
        return Err(usage(format!("split `{subset}` is empty")));
    }
    let samples = load_samples(&entries, &cfg, &lib)?;
    let mut text = String::new();
    let mut json = serde_json::Map::new();
    let (mut cell_p, mut cell_y, mut grid_p, mut grid_y) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for s in &samples {
        let p = predict(&s.index, &s.features, &params, &cfg.model)?;
        let r = MetricReport::compute(&p.cell, &s.labels.cell_y, &p.grid, &s.labels.grid_y)?;
        text.push_str(&format!("== {}\n{}", s.name, r.to_text()));
        json.insert(s.name.clone(), serde_json::to_value(r)?);
        cell_p.extend(p.cell);
        cell_y.extend_from_slice(&s.labels.cell_y);
        grid_p.extend(p.grid);
        grid_y.extend_from_slice(&s.labels.grid_y);
    }
    if samples.len() > 1 {
        let pooled = MetricReport::compute(&cell_p, &cell_y, &grid_p, &grid_y)?;
        text.push_str(&format!("== pooled\n{}", pooled.to_text()));
        json.insert("pooled".into(), serde_json::to_value(pooled)?);
    }
    print!("{text}");
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write_file(&dir.join("metrics.txt"), text.as_bytes())?;
        let body = serde_json::to_string_pretty(&serde_json::Value::Object(json))?;
        write_file(&dir.join("metrics.json"), format!("{body}\n").as_bytes())?;
        write_file(&dir.join("config.txt"), cfg.to_text().as_bytes())?;
    }
    Ok(())
}

/// Grid text: `# grid m n`, then one line per row from row 0 (bottom).
pub fn grid_text(values: &[f64], m: usize, n: usize) -> String {
    let mut s = format!("# grid {m} {n}\n");
    for row in 0..n {
        let line: Vec<String> = values[row * m..(row + 1) * m]
            .iter()
            .map(|v| format!("{v:.6}"))
            .collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

fn parse_grid_text(text: &str) -> Result<(Vec<f64>, usize, usize)> {
    let mut lines = text.lines().enumerate();
    let bad = |line: usize, message: &str| Error::Schema {
        line,
        message: message.to_string(),
    };
    let header = lines.next().map(|(_, l)| l).unwrap_or("");
    let dims: Vec<usize> = match header.strip_prefix("# grid ") {
        Some(rest) => rest
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad(1, "bad grid dimensions")))
            .collect::<Result<_>>()?,
        None => return Err(bad(1, "expected `# grid m n` header")),
    };
    let [m, n] = dims[..] else {
        return Err(bad(1, "expected `# grid m n` header"));
    };
    let mut values = Vec::with_capacity(m * n);
    for (i, line) in lines.filter(|(_, l)| !l.trim().is_empty()) {
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad(i + 1, "bad number")))
            .collect::<Result<_>>()?;
        if row.len() != m {
            return Err(bad(i + 1, &format!("expected {m} values, found {}", row.len())));
        }
        values.extend(row);
    }
    if values.len() != m * n {
        return Err(bad(n + 1, &format!("expected {n} rows")));
    }
    Ok((values, m, n))
}

fn predict_cmd(g: &Global, checkpoint: &Path, design: &Path, out: &Path, lib: Option<&Path>) -> Result<()> {
    let (params, cfg) = load_model(g, checkpoint)?;
    let d = load_design(design, &library(lib)?)?;
    let spec = grid_spec(&d, &cfg)?;
    let graph = build_graph(&d, &spec, cfg.model.k_geom);
    let fs = featurize(&d, &graph);
    let p = predict(&GraphIndex::new(&graph), &fs, &params, &cfg.model)?;
    ensure_dir(out)?;
    let mut cells = String::from("cell,name,prediction\n");
    for (c, v) in d.cells.iter().zip(&p.cell) {
        cells.push_str(&format!("{},{},{v:.6}\n", c.id, c.name));
    }
    write_file(&out.join(format!("{}.cells.csv", d.name)), cells.as_bytes())?;
    write_file(
        &out.join(format!("{}.grid.txt", d.name)),
        grid_text(&p.grid, spec.m, spec.n).as_bytes(),
    )?;
    write_file(&out.join("config.txt"), cfg.to_text().as_bytes())?;
    Ok(())
}

fn heatmap(input: &Path, output: &Path, ppm: Option<&Path>, scale: usize, range: &str) -> Result<()> {
    let bytes = read_bytes(input)?;
    let (values, m, n) = if bytes.starts_with(b"# grid") {
        parse_grid_text(std::str::from_utf8(&bytes).map_err(|_| usage("grid text is not UTF-8"))?)?
    } else {
        let f = LabelFile::read(&bytes[..])?;
        (f.grid, f.m, f.n)
    };
    let opts = if range == "auto" {
        HeatmapOptions::auto(&values, scale)
    } else {
        let (lo, hi) = range
            .split_once(':')
            .and_then(|(a, b)| Some((a.parse::<f64>().ok()?, b.parse::<f64>().ok()?)))
            .ok_or_else(|| usage(format!("--range `{range}`: expected LO:HI or auto")))?;
        HeatmapOptions { lo, hi, scale }
    };
    write_file(output, &render_pgm(&values, m, n, &opts)?)?;
    if let Some(p) = ppm {
        write_file(p, &render_ppm(&values, m, n, &opts)?)?;
    }
    Ok(())
}

fn graph_stats(g: &Global, design: &Path, json: Option<&Path>, lib: Option<&Path>) -> Result<()> {
    let cfg = run_config(g, None)?;
    let d = load_design(design, &library(lib)?)?;
    let graph = build_graph(&d, &grid_spec(&d, &cfg)?, cfg.model.k_geom);
    let stats = GraphStats::of(&graph);
    print!("{}", stats.to_text());
    if let Some(p) = json {
        write_file(p, format!("{}\n", serde_json::to_string_pretty(&stats)?).as_bytes())?;
    }
    Ok(())
}
