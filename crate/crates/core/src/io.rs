//! CSV ingestion and export.
//!
//! Cohorts come as two tables: `screens.csv` (`id, age, result`) and
//! `endpoints.csv` (`id, t_pc, censor_age`), where an empty `censor_age`
//! marks `t_pc` as a clinical diagnosis. Floats are written in shortest
//! round-trip form.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result, RowError};
use crate::model::{LatentState, ModelSpec};
use crate::overdx::LifeTable;
use crate::record::{classify, IndividualRecord, RawRecord};
use crate::sampler::{AcceptanceStats, ChainDraws, Draw, DrawStore, Parameter, StepSizes};
use crate::sim::TruthRow;

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r)
}

fn ingest(path: &Path, errors: Vec<RowError>) -> Error {
    Error::Ingest {
        path: path.to_path_buf(),
        errors,
    }
}

fn row_error(line: u64, message: impl Into<String>) -> RowError {
    RowError {
        line: Some(line),
        message: message.into(),
    }
}

/// Column positions of `expected` in the header, or a schema error.
fn columns<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> std::result::Result<Vec<usize>, Vec<RowError>> {
    let header = rdr.headers().map_err(|e| vec![row_error(1, e.to_string())])?.clone();
    let mut errors = Vec::new();
    let pos = expected
        .iter()
        .map(|name| {
            header.iter().position(|h| h == *name).unwrap_or_else(|| {
                errors.push(row_error(1, format!("missing column `{name}`")));
                0
            })
        })
        .collect();
    for h in header.iter() {
        if !expected.contains(&h) {
            errors.push(row_error(1, format!("unexpected column `{h}`")));
        }
    }
    if errors.is_empty() {
        Ok(pos)
    } else {
        Err(errors)
    }
}

fn parse_f64(field: &str, name: &str, line: u64) -> std::result::Result<f64, RowError> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(row_error(line, format!("{name} `{field}` is not a finite number"))),
    }
}

struct ScreenRow {
    line: u64,
    age: f64,
    positive: bool,
}

struct EndpointRow {
    line: u64,
    id: String,
    t_pc: f64,
    censor_age: Option<f64>,
}

/// Read and validate a cohort from the two tables.
pub fn load_cohort(screens_path: &Path, endpoints_path: &Path) -> Result<Vec<IndividualRecord>> {
    read_cohort(
        File::open(screens_path)?,
        screens_path,
        File::open(endpoints_path)?,
        endpoints_path,
    )
}

/// As [`load_cohort`], from readers; the paths label error reports.
pub fn read_cohort<A: Read, B: Read>(
    screens: A,
    screens_path: &Path,
    endpoints: B,
    endpoints_path: &Path,
) -> Result<Vec<IndividualRecord>> {
    let ends = read_endpoints(endpoints, endpoints_path)?;
    let known: HashMap<&str, usize> = ends.iter().enumerate().map(|(k, e)| (e.id.as_str(), k)).collect();
    let mut per_id: Vec<Vec<ScreenRow>> = (0..ends.len()).map(|_| Vec::new()).collect();

    let mut rdr = reader(screens);
    let cols = columns(&mut rdr, &["id", "age", "result"]).map_err(|e| ingest(screens_path, e))?;
    let mut errors = Vec::new();
    let mut seen: HashMap<(String, u64), u64> = HashMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let id = &row[cols[0]];
        let age = match parse_f64(&row[cols[1]], "age", line) {
            Ok(a) => a,
            Err(e) => {
                errors.push(e);
                continue;
            }
        };
        let positive = match &row[cols[2]] {
            "0" => false,
            "1" => true,
            other => {
                errors.push(row_error(line, format!("result `{other}` must be 0 or 1")));
                continue;
            }
        };
        if let Some(first) = seen.insert((id.to_string(), age.to_bits()), line) {
            errors.push(row_error(line, format!("duplicate screen for id `{id}` at age {age} (first on line {first})")));
            continue;
        }
        match known.get(id) {
            Some(&k) => per_id[k].push(ScreenRow { line, age, positive }),
            None => errors.push(row_error(line, format!("id `{id}` has no row in {}", endpoints_path.display()))),
        }
    }
    if !errors.is_empty() {
        return Err(ingest(screens_path, errors));
    }

    let mut records = Vec::with_capacity(ends.len());
    for (end, mut screens) in ends.into_iter().zip(per_id) {
        screens.sort_by(|a, b| a.age.total_cmp(&b.age));
        let raw = RawRecord {
            id: end.id.clone(),
            screens: screens.iter().map(|s| (s.age, s.positive)).collect(),
            t_pc: end.t_pc,
            censor_age: end.censor_age,
        };
        match classify(&raw) {
            Ok(r) => records.push(r),
            Err(Error::InvalidRecord { reason, .. }) => {
                let lines: Vec<String> = screens.iter().map(|s| s.line.to_string()).collect();
                let at = if lines.is_empty() {
                    String::new()
                } else {
                    format!(" (screens on lines {})", lines.join(", "))
                };
                errors.push(row_error(end.line, format!("id `{}`: {reason}{at}", end.id)));
            }
            Err(e) => return Err(e),
        }
    }
    if !errors.is_empty() {
        return Err(ingest(endpoints_path, errors));
    }
    Ok(records)
}

fn read_endpoints<R: Read>(r: R, path: &Path) -> Result<Vec<EndpointRow>> {
    let mut rdr = reader(r);
    let cols = columns(&mut rdr, &["id", "t_pc", "censor_age"]).map_err(|e| ingest(path, e))?;
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    let mut ids: HashMap<String, u64> = HashMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let id = row[cols[0]].to_string();
        if id.is_empty() {
            errors.push(row_error(line, "empty id"));
            continue;
        }
        if let Some(first) = ids.insert(id.clone(), line) {
            errors.push(row_error(line, format!("duplicate id `{id}` (first on line {first})")));
            continue;
        }
        let t_pc = parse_f64(&row[cols[1]], "t_pc", line);
        let censor = match &row[cols[2]] {
            "" => Ok(None),
            s => parse_f64(s, "censor_age", line).map(Some),
        };
        match (t_pc, censor) {
            (Ok(t_pc), Ok(censor_age)) => rows.push(EndpointRow {
                line,
                id,
                t_pc,
                censor_age,
            }),
            (a, b) => errors.extend(a.err().into_iter().chain(b.err())),
        }
    }
    if errors.is_empty() {
        Ok(rows)
    } else {
        Err(ingest(path, errors))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_screens<W: Write>(records: &[IndividualRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["id", "age", "result"])?;
    for r in records {
        for (age, pos) in r.screen_ages().iter().zip(r.screen_outcomes()) {
            out.write_record([r.id(), &age.to_string(), if *pos { "1" } else { "0" }])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_endpoints<W: Write>(records: &[IndividualRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["id", "t_pc", "censor_age"])?;
    for r in records {
        let raw = r.to_raw();
        let censor = raw.censor_age.map_or(String::new(), |c| c.to_string());
        out.write_record([r.id(), &raw.t_pc.to_string(), &censor])?;
    }
    out.flush()?;
    Ok(())
}

/// Write `screens.csv` and `endpoints.csv` into `dir`.
pub fn write_cohort(records: &[IndividualRecord], dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let s = dir.join("screens.csv");
    let e = dir.join("endpoints.csv");
    write_screens(records, create(&s)?)?;
    write_endpoints(records, create(&e)?)?;
    Ok((s, e))
}

/// Ground truth: `id, tau_hp, indolent, tau_pc` (`inf` for indolent).
pub fn write_truth<W: Write>(rows: &[TruthRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["id", "tau_hp", "indolent", "tau_pc"])?;
    for r in rows {
        out.write_record([
            r.id.clone(),
            r.history.tau_hp.to_string(),
            (r.history.indolent as u8).to_string(),
            r.history.tau_pc.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Long-format draws: `chain, iteration, parameter, value`.
pub fn export_draws<W: Write>(store: &DrawStore, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["chain", "iteration", "parameter", "value"])?;
    for c in &store.chains {
        for d in &c.draws {
            for p in Parameter::ALL {
                out.write_record([c.chain.to_string(), d.iteration.to_string(), p.name().to_string(), d.get(p).to_string()])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Read long-format draws back. Acceptance counts and step sizes are not part
/// of the format and come back as defaults.
pub fn import_draws<R: Read>(r: R, path: &Path, model: ModelSpec) -> Result<DrawStore> {
    let mut rdr = reader(r);
    let cols = columns(&mut rdr, &["chain", "iteration", "parameter", "value"]).map_err(|e| ingest(path, e))?;
    let mut table: BTreeMap<usize, BTreeMap<u64, [Option<f64>; 4]>> = BTreeMap::new();
    let mut errors = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let chain = row[cols[0]].parse::<usize>();
        let iteration = row[cols[1]].parse::<u64>();
        let param = Parameter::from_name(&row[cols[2]]);
        let value = parse_f64(&row[cols[3]], "value", line);
        match (chain, iteration, param, value) {
            (Ok(c), Ok(it), Some(p), Ok(v)) => {
                let slot = &mut table.entry(c).or_default().entry(it).or_default()[p as usize];
                if slot.replace(v).is_some() {
                    errors.push(row_error(line, format!("duplicate {} for chain {c}, iteration {it}", p.name())));
                }
            }
            (_, _, _, Err(e)) => errors.push(e),
            (_, _, None, _) => errors.push(row_error(line, format!("unknown parameter `{}`", &row[cols[2]]))),
            _ => errors.push(row_error(line, "chain and iteration must be non-negative integers")),
        }
    }
    let mut chains = Vec::new();
    for (chain, rows) in table {
        let mut draws = Vec::with_capacity(rows.len());
        for (iteration, v) in rows {
            match v {
                [Some(a), Some(b), Some(c), Some(d)] => draws.push(Draw {
                    iteration,
                    onset_rate: a,
                    prog_rate: b,
                    psi: c,
                    beta: d,
                }),
                _ => errors.push(RowError {
                    line: None,
                    message: format!("chain {chain}, iteration {iteration} lacks some parameters"),
                }),
            }
        }
        chains.push(ChainDraws {
            chain,
            draws,
            latents: None,
            acceptance: AcceptanceStats::default(),
            step_sizes: StepSizes::default(),
        });
    }
    if !errors.is_empty() {
        return Err(ingest(path, errors));
    }
    Ok(DrawStore { model, chains })
}

/// Per-individual latent states: `chain, iteration, id, onset, indolent`,
/// with an empty onset for "no onset before censoring".
pub fn export_latents<W: Write>(store: &DrawStore, records: &[IndividualRecord], w: W) -> Result<u64> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["chain", "iteration", "id", "onset", "indolent"])?;
    let mut rows = 0;
    for c in &store.chains {
        let Some(latents) = &c.latents else {
            return Err(Error::Config(format!("chain {} kept no latent states", c.chain)));
        };
        for (d, zs) in c.draws.iter().zip(latents) {
            for (rec, z) in records.iter().zip(zs) {
                let LatentState { onset, indolent } = *z;
                out.write_record([
                    c.chain.to_string(),
                    d.iteration.to_string(),
                    rec.id().to_string(),
                    onset.map_or(String::new(), |x| x.to_string()),
                    (indolent as u8).to_string(),
                ])?;
                rows += 1;
            }
        }
    }
    out.flush()?;
    Ok(rows)
}

/// Life table with columns `age` and exactly one of `survival` or `hazard`.
pub fn read_life_table<R: Read>(r: R, path: &Path) -> Result<LifeTable> {
    let mut rdr = reader(r);
    let header = rdr.headers()?.clone();
    let kind = if header.iter().any(|h| h == "survival") { "survival" } else { "hazard" };
    let cols = columns(&mut rdr, &["age", kind]).map_err(|e| ingest(path, e))?;
    let (mut ages, mut values, mut errors) = (Vec::new(), Vec::new(), Vec::new());
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        match (parse_f64(&row[cols[0]], "age", line), parse_f64(&row[cols[1]], kind, line)) {
            (Ok(a), Ok(v)) => {
                ages.push(a);
                values.push(v);
            }
            (a, b) => errors.extend(a.err().into_iter().chain(b.err())),
        }
    }
    if !errors.is_empty() {
        return Err(ingest(path, errors));
    }
    let table = if kind == "survival" {
        LifeTable::from_survival(&ages, &values)
    } else {
        LifeTable::from_hazard(&ages, &values)
    };
    table.map_err(|e| {
        ingest(
            path,
            vec![RowError {
                line: None,
                message: e.to_string(),
            }],
        )
    })
}

pub fn load_life_table(path: &Path) -> Result<LifeTable> {
    read_life_table(File::open(path)?, path)
}
