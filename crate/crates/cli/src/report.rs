//! Versioned reports and their JSON / CSV encodings. Every float is written
//! with 17 significant digits so that reports re-parse to identical values.

use std::io::{self, Write};

use maxgauss::tune::TuneResult;
use maxgauss::{BoundReport, DistributionSpec, ExperimentResult, MomentProfile};
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

pub const SCHEMA_VERSION: u32 = 1;

pub const GRID_COLUMNS: &str = "threshold,lhs,bound,violated";
pub const SAMPLE_COLUMNS: &str = "rep,z,z_dagger";
pub const TRACE_COLUMNS: &str = "gamma,delta,radius,raw_bound,feasible,stage";
pub const FIELD_COLUMNS: &str = "field,value";
pub const SUITE_COLUMNS: &str = "suite,cases,failures,passed";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundOutput {
    pub schema_version: u32,
    pub spec: DistributionSpec,
    pub profile: MomentProfile,
    pub bound: BoundReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneOutput {
    pub schema_version: u32,
    pub spec: DistributionSpec,
    pub profile: MomentProfile,
    pub result: TuneResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateOutput {
    pub schema_version: u32,
    pub violations: usize,
    pub result: ExperimentResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub cases: usize,
    pub failures: usize,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyOutput {
    pub schema_version: u32,
    pub seed: u64,
    pub suites: Vec<SuiteResult>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Report {
    Bound(BoundOutput),
    Tune(TuneOutput),
    Simulate(SimulateOutput),
    Verify(VerifyOutput),
}

/// Scientific notation with 17 significant digits.
pub fn fmt_real(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".to_string()
    } else if v > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

/// Pretty JSON with [`fmt_real`] numbers.
struct Digits17<'a>(PrettyFormatter<'a>);

impl Formatter for Digits17<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        w.write_all(fmt_real(v).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        self.write_f64(w, v as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json(report: &Report) -> io::Result<Vec<u8>> {
    let mut buf = Vec::new();
    let mut ser =
        serde_json::Serializer::with_formatter(&mut buf, Digits17(PrettyFormatter::new()));
    report.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(buf)
}

pub fn from_json(bytes: &[u8]) -> serde_json::Result<Report> {
    serde_json::from_slice(bytes)
}

fn bound_fields(out: &mut String, b: &BoundReport) {
    let rows = [
        ("gamma", b.gamma),
        ("delta", b.delta),
        ("iota", b.iota),
        ("epsilon", b.epsilon),
        ("c_gamma", b.c_gamma),
        ("term1", b.term1),
        ("term1_se", b.term1_se),
        ("term2", b.term2),
        ("term2_se", b.term2_se),
        ("l_n", b.l_n),
        ("l_n_se", b.l_n_se),
        ("radius", b.radius),
        ("raw_bound", b.raw_bound),
        ("prob_bound", b.prob_bound),
        ("prob_bound_se", b.prob_bound_se),
    ];
    for (k, v) in rows {
        out.push_str(&format!("{k},{}\n", fmt_real(v)));
    }
    out.push_str(&format!("clipped,{}\n", b.clipped));
}

/// Main CSV table of a report.
pub fn to_csv(report: &Report) -> String {
    let mut out = String::new();
    match report {
        Report::Bound(b) => {
            out.push_str(FIELD_COLUMNS);
            out.push('\n');
            bound_fields(&mut out, &b.bound);
        }
        Report::Tune(t) => {
            out.push_str(TRACE_COLUMNS);
            out.push('\n');
            for p in &t.result.trace {
                let stage = match p.stage {
                    maxgauss::tune::Stage::Grid => "grid",
                    maxgauss::tune::Stage::Refine => "refine",
                };
                out.push_str(&format!(
                    "{},{},{},{},{},{stage}\n",
                    fmt_real(p.gamma),
                    fmt_real(p.delta),
                    fmt_real(p.radius),
                    fmt_real(p.raw_bound),
                    p.feasible
                ));
            }
        }
        Report::Simulate(s) => {
            out.push_str(GRID_COLUMNS);
            out.push('\n');
            for p in &s.result.strassen_grid {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    fmt_real(p.threshold),
                    fmt_real(p.lhs),
                    fmt_real(p.bound),
                    p.violated
                ));
            }
        }
        Report::Verify(v) => {
            out.push_str(SUITE_COLUMNS);
            out.push('\n');
            for s in &v.suites {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    s.name, s.cases, s.failures, s.passed
                ));
            }
        }
    }
    out
}

/// Per-replication samples of a simulation.
pub fn samples_csv(result: &ExperimentResult) -> String {
    let mut out = String::from(SAMPLE_COLUMNS);
    out.push('\n');
    for (r, (z, zd)) in result
        .z_samples
        .iter()
        .zip(&result.z_dagger_samples)
        .enumerate()
    {
        out.push_str(&format!("{r},{},{}\n", fmt_real(*z), fmt_real(*zd)));
    }
    out
}
