//! Building outcome schedules: CSV ingestion, imputation of missing
//! potential outcomes, normalisation, replication, corruption and synthetic
//! generators.
//!
//! CSV layouts (header row required, one unit per row in round order):
//!
//! | file          | header   | fields                          |
//! |---------------|----------|---------------------------------|
//! | schedule      | `y1,y0`  | two finite decimals             |
//! | observed data | `y,z`    | finite decimal, `z` in `{0, 1}` |
//! | trace         | `p,z,y`  | `p` in `(0, 1)`, `z`, `y`       |

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analytics::OutcomeSchedule;
use crate::designs::ExploreLen;
use crate::error::{Error, Result};
use crate::estimators::Trace;
use crate::rng::Stream;

/// Substream ids, so one seed can drive several independent uses.
pub const IMPUTE_STREAM: u64 = 0;
pub const SHUFFLE_STREAM: u64 = 1;
pub const SYNTHETIC_STREAM: u64 = 2;

/// Real experimental data: one observed outcome and assignment per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedDataset {
    y: Vec<f64>,
    z: Vec<bool>,
}

impl ObservedDataset {
    pub fn new(y: Vec<f64>, z: Vec<bool>) -> Result<Self> {
        if y.len() != z.len() {
            return Err(Error::LengthMismatch {
                expected: y.len(),
                found: z.len(),
            });
        }
        if y.is_empty() {
            return Err(Error::EmptySchedule);
        }
        if let Some(index) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "y", index });
        }
        Ok(Self { y, z })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.y
    }

    pub fn assignments(&self) -> &[bool] {
        &self.z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Loaded {
    Schedule(OutcomeSchedule),
    Observed(ObservedDataset),
}

struct CsvSource<'a> {
    path: &'a Path,
}

impl CsvSource<'_> {
    fn err(&self, line: u64, message: impl Into<String>) -> Error {
        Error::Csv {
            path: self.path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    fn csv_err(&self, e: csv::Error) -> Error {
        let line = e.position().map_or(0, csv::Position::line);
        self.err(line, e.to_string())
    }

    fn number(&self, line: u64, field: &str, name: &str) -> Result<f64> {
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            Ok(_) => Err(self.err(line, format!("non-finite {name}: `{field}`"))),
            Err(_) => Err(self.err(line, format!("invalid {name}: `{field}`"))),
        }
    }

    fn binary(&self, line: u64, field: &str) -> Result<bool> {
        match field {
            "1" => Ok(true),
            "0" => Ok(false),
            _ => Err(self.err(line, format!("z must be 0 or 1, got `{field}`"))),
        }
    }
}

type Rows = Vec<(u64, csv::StringRecord)>;

/// Reads rows after checking the header; returns `(line, fields)` pairs.
fn read_rows<R: Read>(src: &CsvSource<'_>, reader: R) -> Result<(Vec<String>, Rows)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| src.csv_err(e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| src.csv_err(e))?;
        let line = record.position().map_or(0, csv::Position::line);
        rows.push((line, record));
    }
    Ok((header, rows))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_loaded<R: Read>(path: &Path, reader: R) -> Result<Loaded> {
    let src = CsvSource { path };
    let (header, rows) = read_rows(&src, reader)?;
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    match header.as_slice() {
        ["y1", "y0"] => {
            let (mut y1, mut y0) = (Vec::new(), Vec::new());
            for (line, rec) in &rows {
                y1.push(src.number(*line, &rec[0], "y1")?);
                y0.push(src.number(*line, &rec[1], "y0")?);
            }
            if rows.is_empty() {
                return Err(src.err(1, "no data rows"));
            }
            Ok(Loaded::Schedule(OutcomeSchedule::new(y1, y0)?))
        }
        ["y", "z"] => {
            let (mut y, mut z) = (Vec::new(), Vec::new());
            for (line, rec) in &rows {
                y.push(src.number(*line, &rec[0], "y")?);
                z.push(src.binary(*line, &rec[1])?);
            }
            if rows.is_empty() {
                return Err(src.err(1, "no data rows"));
            }
            Ok(Loaded::Observed(ObservedDataset::new(y, z)?))
        }
        other => Err(src.err(
            1,
            format!(
                "expected header `y1,y0` or `y,z`, got `{}`",
                other.join(",")
            ),
        )),
    }
}

/// Loads a schedule (`y1,y0`) or observed dataset (`y,z`) by its header.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Loaded> {
    let path = path.as_ref();
    parse_loaded(path, open(path)?)
}

pub fn load_schedule_csv(path: impl AsRef<Path>) -> Result<OutcomeSchedule> {
    let path = path.as_ref();
    match load_csv(path)? {
        Loaded::Schedule(s) => Ok(s),
        Loaded::Observed(_) => Err(Error::Csv {
            path: path.to_path_buf(),
            line: 1,
            message: "expected a schedule file with header `y1,y0`".into(),
        }),
    }
}

pub fn load_trace_csv(path: impl AsRef<Path>) -> Result<Trace> {
    let path = path.as_ref();
    let src = CsvSource { path };
    let (header, rows) = read_rows(&src, open(path)?)?;
    if header != ["p", "z", "y"] {
        return Err(src.err(
            1,
            format!("expected header `p,z,y`, got `{}`", header.join(",")),
        ));
    }
    if rows.is_empty() {
        return Err(src.err(1, "no data rows"));
    }
    let (mut p, mut z, mut y) = (Vec::new(), Vec::new(), Vec::new());
    for (line, rec) in &rows {
        let prob = src.number(*line, &rec[0], "p")?;
        if !(prob > 0.0 && prob < 1.0) {
            return Err(src.err(*line, format!("p must lie in (0, 1), got {prob}")));
        }
        p.push(prob);
        z.push(src.binary(*line, &rec[1])?);
        y.push(src.number(*line, &rec[2], "y")?);
    }
    Trace::new(p, z, y)
}

fn write_rows<W: Write>(
    out: W,
    header: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Csv {
        path: PathBuf::from("<writer>"),
        line: 0,
        message: e.to_string(),
    };
    wtr.write_record(header).map_err(io)?;
    for row in rows {
        wtr.write_record(&row).map_err(io)?;
    }
    wtr.flush().map_err(|source| Error::Io {
        path: PathBuf::from("<writer>"),
        source,
    })
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Shortest decimal representation that parses back to the same `f64`.
fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn write_schedule<W: Write>(outcomes: &OutcomeSchedule, out: W) -> Result<()> {
    write_rows(
        out,
        &["y1", "y0"],
        outcomes.pairs().map(|(a, b)| vec![fmt_f64(a), fmt_f64(b)]),
    )
}

pub fn write_schedule_csv(path: impl AsRef<Path>, outcomes: &OutcomeSchedule) -> Result<()> {
    write_schedule(outcomes, create(path.as_ref())?)
}

pub fn write_trace<W: Write>(trace: &Trace, out: W) -> Result<()> {
    write_rows(
        out,
        &["p", "z", "y"],
        trace
            .rounds()
            .map(|(p, z, y)| vec![fmt_f64(p), (z as u8).to_string(), fmt_f64(y)]),
    )
}

pub fn write_trace_csv(path: impl AsRef<Path>, trace: &Trace) -> Result<()> {
    write_trace(trace, create(path.as_ref())?)
}

pub fn write_observed<W: Write>(data: &ObservedDataset, out: W) -> Result<()> {
    write_rows(
        out,
        &["y", "z"],
        data.y
            .iter()
            .zip(&data.z)
            .map(|(&y, &z)| vec![fmt_f64(y), (z as u8).to_string()]),
    )
}

/// Constant-shift imputation model `y_t(1) - y_t(0) = τ + γ_t`,
/// `γ_t ~ N(0, σ²)` drawn once per unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImputeConfig {
    pub tau: f64,
    pub sigma: f64,
    pub seed: u64,
}

pub fn impute(data: &ObservedDataset, cfg: &ImputeConfig) -> Result<OutcomeSchedule> {
    if !(cfg.sigma >= 0.0 && cfg.sigma.is_finite()) {
        return Err(Error::invalid(
            "sigma",
            format!("must be >= 0, got {}", cfg.sigma),
        ));
    }
    if !cfg.tau.is_finite() {
        return Err(Error::invalid("tau", "must be finite"));
    }
    let mut stream = Stream::new(cfg.seed, IMPUTE_STREAM);
    let (mut y1, mut y0) = (
        Vec::with_capacity(data.len()),
        Vec::with_capacity(data.len()),
    );
    for (&y, &z) in data.y.iter().zip(&data.z) {
        let effect = cfg.tau + cfg.sigma * stream.standard_normal();
        if z {
            y1.push(y);
            y0.push(y - effect);
        } else {
            y1.push(y + effect);
            y0.push(y);
        }
    }
    OutcomeSchedule::new(y1, y0)
}

/// Joint affine map of both arms onto `[0, 1]`; a constant schedule maps to
/// all `0.5`.
pub fn normalize(outcomes: &OutcomeSchedule) -> OutcomeSchedule {
    let all = outcomes.treated().iter().chain(outcomes.control());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let range = hi - lo;
    let map = |v: &f64| if range > 0.0 { (v - lo) / range } else { 0.5 };
    OutcomeSchedule::new(
        outcomes.treated().iter().map(map).collect(),
        outcomes.control().iter().map(map).collect(),
    )
    .expect("normalisation preserves shape")
}

/// `k` back-to-back copies of the schedule.
pub fn replicate(outcomes: &OutcomeSchedule, k: usize) -> Result<OutcomeSchedule> {
    if k == 0 {
        return Err(Error::invalid("k", "replication count must be positive"));
    }
    OutcomeSchedule::new(outcomes.treated().repeat(k), outcomes.control().repeat(k))
}

/// Swaps `y_t(1)` and `y_t(0)` for the first `n` units.
pub fn flip_prefix(outcomes: &OutcomeSchedule, n: usize) -> Result<OutcomeSchedule> {
    if n > outcomes.horizon() {
        return Err(Error::HorizonExceedsData {
            horizon: n,
            available: outcomes.horizon(),
        });
    }
    let (mut y1, mut y0) = outcomes.clone().into_arms();
    y1[..n].swap_with_slice(&mut y0[..n]);
    OutcomeSchedule::new(y1, y0)
}

/// Seeded joint permutation of the units.
pub fn shuffle(outcomes: &OutcomeSchedule, seed: u64) -> OutcomeSchedule {
    let mut pairs: Vec<(f64, f64)> = outcomes.pairs().collect();
    Stream::new(seed, SHUFFLE_STREAM).shuffle(&mut pairs);
    OutcomeSchedule::from_pairs(&pairs).expect("permutation preserves shape")
}

/// Synthetic schedule families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Synthetic {
    /// `y_t(0) ~ U[a, b]` i.i.d., `y_t(1) = λ y_t(0)`; for positive outcomes
    /// `p* = (1 + 1/λ)^{-1}`.
    IidScaled { a: f64, b: f64, lambda: f64 },
    /// Block-constant arms whose first `t0` units invert the moment ratio of
    /// the rest: `(y1, y0) = (lo, hi)` on the prefix and `(hi, lo)` after.
    EtcAdversarial {
        #[serde(skip)]
        t0: Option<ExploreLen>,
        hi: f64,
        lo: f64,
    },
    /// `y_t(0) ~ U[a, b]` i.i.d., `y_t(1) = y_t(0) + τ`.
    ConstantEffect { a: f64, b: f64, tau: f64 },
}

fn parse_params(params: &str) -> Result<Vec<(String, String)>> {
    params
        .split(',')
        .map(str::trim)
        .filter(|kv| !kv.is_empty())
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::invalid("params", format!("expected key=value, got `{kv}`")))
        })
        .collect()
}

fn param_f64(value: &str, name: &'static str) -> Result<f64> {
    value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::invalid(name, format!("expected a number, got `{value}`")))
}

impl Synthetic {
    /// Defaults for `kind`, overridden by a `key=value,...` list.
    pub fn from_params(kind: &str, params: &str) -> Result<Self> {
        let mut gen = match kind {
            "iid-scaled" => Synthetic::IidScaled {
                a: 0.25,
                b: 1.0,
                lambda: 2.0,
            },
            "etc-adversarial" => Synthetic::EtcAdversarial {
                t0: None,
                hi: 2.0,
                lo: 1.0,
            },
            "constant-effect" => Synthetic::ConstantEffect {
                a: 0.0,
                b: 1.0,
                tau: 0.5,
            },
            other => return Err(Error::UnknownSynthetic(other.to_string())),
        };
        for (key, value) in parse_params(params)? {
            match (&mut gen, key.as_str()) {
                (Synthetic::IidScaled { a, .. } | Synthetic::ConstantEffect { a, .. }, "a") => {
                    *a = param_f64(&value, "a")?
                }
                (Synthetic::IidScaled { b, .. } | Synthetic::ConstantEffect { b, .. }, "b") => {
                    *b = param_f64(&value, "b")?
                }
                (Synthetic::IidScaled { lambda, .. }, "lambda") => {
                    *lambda = param_f64(&value, "lambda")?
                }
                (Synthetic::ConstantEffect { tau, .. }, "tau") => *tau = param_f64(&value, "tau")?,
                (Synthetic::EtcAdversarial { hi, .. }, "hi") => *hi = param_f64(&value, "hi")?,
                (Synthetic::EtcAdversarial { lo, .. }, "lo") => *lo = param_f64(&value, "lo")?,
                (Synthetic::EtcAdversarial { t0, .. }, "t0") => {
                    *t0 = Some(if value == "cbrt" {
                        ExploreLen::CubeRoot
                    } else {
                        ExploreLen::Fixed(value.parse().map_err(|_| {
                            Error::invalid(
                                "t0",
                                format!("expected integer or `cbrt`, got `{value}`"),
                            )
                        })?)
                    })
                }
                _ => {
                    return Err(Error::invalid(
                        "params",
                        format!("unknown parameter `{key}` for {kind}"),
                    ))
                }
            }
        }
        if let Synthetic::IidScaled { a, b, .. } | Synthetic::ConstantEffect { a, b, .. } = gen {
            if a > b {
                return Err(Error::invalid(
                    "a",
                    format!("need a <= b, got a={a}, b={b}"),
                ));
            }
        }
        Ok(gen)
    }

    pub fn generate(&self, horizon: usize, seed: u64) -> Result<OutcomeSchedule> {
        if horizon == 0 {
            return Err(Error::EmptySchedule);
        }
        let mut stream = Stream::new(seed, SYNTHETIC_STREAM);
        let mut uniform = |a: f64, b: f64| a + (b - a) * stream.uniform();
        let pairs: Vec<(f64, f64)> = match *self {
            Synthetic::IidScaled { a, b, lambda } => (0..horizon)
                .map(|_| {
                    let y0 = uniform(a, b);
                    (lambda * y0, y0)
                })
                .collect(),
            Synthetic::ConstantEffect { a, b, tau } => (0..horizon)
                .map(|_| {
                    let y0 = uniform(a, b);
                    (y0 + tau, y0)
                })
                .collect(),
            Synthetic::EtcAdversarial { t0, hi, lo } => {
                let prefix = t0.unwrap_or(ExploreLen::CubeRoot).resolve(horizon);
                if prefix > horizon {
                    return Err(Error::HorizonExceedsData {
                        horizon: prefix,
                        available: horizon,
                    });
                }
                (0..horizon)
                    .map(|t| if t < prefix { (lo, hi) } else { (hi, lo) })
                    .collect()
            }
        };
        OutcomeSchedule::from_pairs(&pairs)
    }
}

pub fn gen_synthetic(
    kind: &str,
    horizon: usize,
    seed: u64,
    params: &str,
) -> Result<OutcomeSchedule> {
    Synthetic::from_params(kind, params)?.generate(horizon, seed)
}

/// Observed dataset with `y ~ U[a, b]` and fair-coin assignments, a stand-in
/// for real experimental data when exercising the imputation pipeline.
pub fn gen_observed(horizon: usize, seed: u64, a: f64, b: f64) -> Result<ObservedDataset> {
    let mut stream = Stream::new(seed, SYNTHETIC_STREAM);
    let (mut y, mut z) = (Vec::with_capacity(horizon), Vec::with_capacity(horizon));
    for _ in 0..horizon {
        y.push(a + (b - a) * stream.uniform());
        z.push(stream.bernoulli(0.5));
    }
    ObservedDataset::new(y, z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::{finite_stats, neyman_summary, relative_efficiency};

    fn sched(y1: &[f64], y0: &[f64]) -> OutcomeSchedule {
        OutcomeSchedule::new(y1.to_vec(), y0.to_vec()).unwrap()
    }

    fn temp_csv(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_examples() {
        let f = temp_csv("y1,y0\n1.0,2.0\n");
        assert_eq!(
            load_csv(f.path()).unwrap(),
            Loaded::Schedule(sched(&[1.0], &[2.0]))
        );

        let f = temp_csv("y,z\n3.5,1\n");
        let Loaded::Observed(obs) = load_csv(f.path()).unwrap() else {
            panic!("expected observed data")
        };
        assert_eq!(
            (obs.outcomes(), obs.assignments()),
            (&[3.5][..], &[true][..])
        );

        let f = temp_csv("y1,y0\n1.0,abc\n");
        let err = load_csv(f.path()).unwrap_err();
        assert!(matches!(err, Error::Csv { line: 2, .. }), "{err}");
    }

    #[test]
    fn load_rejects_bad_input() {
        for (body, line) in [
            ("a,b\n1,2\n", 1),
            ("y1,y0\n1,2\n3\n", 3),
            ("y1,y0\n1,2\n3,inf\n", 3),
            ("y1,y0\n1,NaN\n", 2),
            ("y,z\n1.5,2\n", 2),
            ("y1,y0\n", 1),
        ] {
            let f = temp_csv(body);
            match load_csv(f.path()) {
                Err(Error::Csv { line: got, .. }) => assert_eq!(got, line, "{body:?}"),
                other => panic!("{body:?}: {other:?}"),
            }
        }
        assert!(matches!(
            load_csv("/definitely/not/here.csv"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn schedule_and_trace_round_trip() {
        let s = sched(&[0.1, 1.0 / 3.0, -2e-7], &[5.0, 0.0, 1e300]);
        let f = tempfile::NamedTempFile::new().unwrap();
        write_schedule_csv(f.path(), &s).unwrap();
        assert_eq!(load_schedule_csv(f.path()).unwrap(), s);

        let t = Trace::new(vec![0.5, 0.123], vec![true, false], vec![1.5, -0.25]).unwrap();
        write_trace_csv(f.path(), &t).unwrap();
        assert_eq!(load_trace_csv(f.path()).unwrap(), t);

        let f = temp_csv("p,z,y\n1.0,1,2\n");
        assert!(matches!(
            load_trace_csv(f.path()),
            Err(Error::Csv { line: 2, .. })
        ));
    }

    #[test]
    fn impute_examples() {
        let obs = ObservedDataset::new(vec![10.0, 10.0], vec![true, false]).unwrap();
        let cfg = ImputeConfig {
            tau: 3.0,
            sigma: 0.0,
            seed: 1,
        };
        let s = impute(&obs, &cfg).unwrap();
        assert_eq!(s, sched(&[10.0, 13.0], &[7.0, 10.0]));

        let obs = gen_observed(200, 4, 0.0, 1.0).unwrap();
        let noisy = ImputeConfig {
            tau: 0.5,
            sigma: 0.1,
            seed: 7,
        };
        assert_eq!(impute(&obs, &noisy).unwrap(), impute(&obs, &noisy).unwrap());
        let other = ImputeConfig { seed: 8, ..noisy };
        assert_ne!(impute(&obs, &noisy).unwrap(), impute(&obs, &other).unwrap());

        let flat = impute(
            &obs,
            &ImputeConfig {
                sigma: 0.0,
                ..noisy
            },
        )
        .unwrap();
        assert!(flat.effects().all(|e| (e - 0.5).abs() < 1e-15));
        assert!(impute(
            &obs,
            &ImputeConfig {
                sigma: -1.0,
                ..noisy
            }
        )
        .is_err());
    }

    #[test]
    fn normalize_examples() {
        let n = normalize(&sched(&[0.0, 10.0], &[5.0, 5.0]));
        assert_eq!(n, sched(&[0.0, 1.0], &[0.5, 0.5]));
        let unit = sched(&[0.0, 0.25], &[1.0, 0.5]);
        assert_eq!(normalize(&unit), unit);
        assert_eq!(
            normalize(&sched(&[3.0, 3.0], &[3.0, 3.0])),
            sched(&[0.5; 2], &[0.5; 2])
        );
    }

    #[test]
    fn replicate_examples() {
        let s = sched(&[1.0, 2.0, 3.0], &[0.5, -1.0, 4.0]);
        assert_eq!(replicate(&s, 1).unwrap(), s);
        let r = replicate(&s, 2).unwrap();
        assert_eq!(r.treated(), &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        assert_eq!(r.control(), &[0.5, -1.0, 4.0, 0.5, -1.0, 4.0]);
        let (a, b) = (finite_stats(&s), finite_stats(&replicate(&s, 5).unwrap()));
        assert!((a.s1 - b.s1).abs() < 1e-15 && (a.s0 - b.s0).abs() < 1e-15);
        assert!((a.rho.unwrap() - b.rho.unwrap()).abs() < 1e-15);
        assert!(replicate(&s, 0).is_err());
    }

    #[test]
    fn flip_prefix_examples() {
        let s = sched(&[4.0, 1.0], &[1.0, 3.0]);
        assert_eq!(flip_prefix(&s, 0).unwrap(), s);
        assert_eq!(flip_prefix(&s, 1).unwrap(), sched(&[1.0, 1.0], &[4.0, 3.0]));
        let swapped = flip_prefix(&s, 2).unwrap();
        let p = neyman_summary(&finite_stats(&s)).unwrap().p_star;
        let q = neyman_summary(&finite_stats(&swapped)).unwrap().p_star;
        assert!((p + q - 1.0).abs() < 1e-15);
        assert!(flip_prefix(&s, 3).is_err());
    }

    #[test]
    fn shuffle_keeps_units_together() {
        let s = sched(&[1.0, 2.0, 3.0, 4.0, 5.0], &[10.0, 20.0, 30.0, 40.0, 50.0]);
        let sh = shuffle(&s, 3);
        assert!(sh.pairs().all(|(a, b)| b == 10.0 * a));
        assert_eq!(shuffle(&s, 3), sh);
    }

    #[test]
    fn synthetic_iid_scaled() {
        let s = gen_synthetic("iid-scaled", 500, 1, "lambda=1").unwrap();
        assert_eq!(neyman_summary(&finite_stats(&s)).unwrap().p_star, 0.5);

        let s = gen_synthetic("iid-scaled", 300, 2, "lambda=4,a=0.5,b=1").unwrap();
        let p_star = neyman_summary(&finite_stats(&s)).unwrap().p_star;
        assert!((p_star - 0.8).abs() < 1e-12);
        assert!(s.control().iter().all(|&v| (0.5..1.0).contains(&v)));

        // b = a: constant arms with S1 = 4 S0 and ρ = 1 (y1 is a positive
        // multiple of y0, so the cosine similarity is one, not zero).
        let s = gen_synthetic("iid-scaled", 10, 3, "lambda=4,a=0.5,b=0.5").unwrap();
        let st = finite_stats(&s);
        assert_eq!(st.rho, Some(1.0));
        assert!((relative_efficiency(&st, 0.5).unwrap() - 16.0 / 25.0).abs() < 1e-12);
    }

    #[test]
    fn synthetic_etc_adversarial() {
        let horizon = 400;
        let s = gen_synthetic("etc-adversarial", horizon, 0, "t0=100").unwrap();
        let prefix = s.truncate(100).unwrap();
        let pre = finite_stats(&prefix);
        assert!((pre.s0 / pre.s1 - 2.0).abs() < 1e-15);
        let full = finite_stats(&s);
        assert!(full.s0 / full.s1 < 1.0);
        // Moment-mismatch condition of the ETC lower bound. As printed it
        // equals -S(1)^2 (x - r)^2 / r with x, r the full and prefix ratios,
        // so it is never positive; the mismatch magnitude is what matters.
        let n = 100.0;
        let sq = |v: &[f64]| (v[..100].iter().map(|x| x * x).sum::<f64>() / n).sqrt();
        let (p1, p0) = (sq(s.treated()), sq(s.control()));
        let gap = full.s1.powi(2) * (full.s0 / full.s1 - p0 / p1)
            + full.s0.powi(2) * (full.s1 / full.s0 - p1 / p0);
        let (x, r) = (full.s0 / full.s1, p0 / p1);
        assert!((gap + full.s1.powi(2) * (x - r).powi(2) / r).abs() < 1e-12);
        assert!(gap.abs() > 1.0, "{gap}");

        let s = gen_synthetic("etc-adversarial", 4096, 0, "").unwrap();
        assert_eq!(s.treated().iter().filter(|&&v| v == 1.0).count(), 16);
    }

    #[test]
    fn synthetic_errors() {
        assert!(matches!(
            gen_synthetic("bogus", 10, 0, ""),
            Err(Error::UnknownSynthetic(_))
        ));
        assert!(gen_synthetic("iid-scaled", 10, 0, "tau=1").is_err());
        assert!(gen_synthetic("iid-scaled", 10, 0, "a=2,b=1").is_err());
        assert!(gen_synthetic("constant-effect", 0, 0, "").is_err());
        assert!(gen_synthetic("etc-adversarial", 10, 0, "t0=11").is_err());
    }

    #[test]
    fn synthetic_constant_effect() {
        let s = gen_synthetic("constant-effect", 100, 5, "tau=0.3").unwrap();
        assert!(s.effects().all(|e| (e - 0.3).abs() < 1e-15));
    }
}
