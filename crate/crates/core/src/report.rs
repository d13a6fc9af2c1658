//! Report documents and their JSON/CSV encodings.
//!
//! Floats are written with 17 significant digits; non-finite values become
//! `null` in JSON and empty cells in CSV. Everything is ordered, so emitting
//! the same report twice gives identical bytes.

use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use sha2::{Digest, Sha256};

use crate::config::{Format, SCHEMA_VERSION};
use crate::electrical::ResistanceProfile;
use crate::environment::SlownessReport;
use crate::error::{Error, Result};
use crate::graph::{ComponentSplit, Finiteness, Label};
use crate::verify::{CertificateSummary, CheckRow, SkippedCheck};
use crate::walker::{ClassificationReport, Simulation};

#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub seed: u64,
    pub version: String,
}

impl Provenance {
    pub fn new(config_bytes: &[u8], seed: u64) -> Self {
        let digest = Sha256::digest(config_bytes);
        let config_sha256 = digest.iter().map(|b| format!("{b:02x}")).collect();
        Provenance {
            config_sha256,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ComponentSummary {
    pub first_layer: Vec<Label>,
    pub finiteness: Finiteness,
    pub connect_radius: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct SplitSummary {
    pub probe_radius: usize,
    pub d_max: usize,
    pub components: Vec<ComponentSummary>,
}

impl SplitSummary {
    pub fn new(split: &ComponentSplit, labels: impl Fn(usize) -> Label) -> Self {
        SplitSummary {
            probe_radius: split.probe_radius,
            d_max: split.d_max,
            components: split
                .components
                .iter()
                .map(|c| ComponentSummary {
                    first_layer: c.first_layer.iter().map(|&x| labels(x)).collect(),
                    finiteness: c.finiteness,
                    connect_radius: c.connect_radius,
                })
                .collect(),
        }
    }
}

/// `C_0` resistance profile with the return probabilities it implies.
#[derive(Clone, Debug, Serialize)]
pub struct AnalysisSection {
    pub profile: ResistanceProfile,
    /// `1 - 1 / (C(a) R_n)` per radius.
    pub return_probabilities: Vec<f64>,
    /// Same formula at the extrapolated limit, when the profile converges.
    pub limit_return_probability: Option<f64>,
    pub split: SplitSummary,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrajectoryRow {
    pub trial: usize,
    pub steps: usize,
    pub return_time: Option<usize>,
    pub returns: u64,
    pub truncated: bool,
    pub final_position: Label,
    pub max_distance: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct SimulationSection {
    pub trials: usize,
    pub horizon: usize,
    pub return_frequency: f64,
    pub mean_returns: f64,
    pub mean_max_distance: f64,
    pub truncated_trials: usize,
    /// Largest working-ball radius the trajectories needed.
    pub ball_radius: usize,
    pub trajectories: Vec<TrajectoryRow>,
}

impl SimulationSection {
    pub fn new(sim: &Simulation) -> Self {
        let n = sim.trajectories.len() as f64;
        SimulationSection {
            trials: sim.trajectories.len(),
            horizon: sim.horizon,
            return_frequency: sim.return_frequency(),
            mean_returns: sim.trajectories.iter().map(|t| t.returns as f64).sum::<f64>() / n,
            mean_max_distance: sim.trajectories.iter().map(|t| t.max_distance as f64).sum::<f64>() / n,
            truncated_trials: sim.truncated(),
            ball_radius: sim.ball.radius(),
            trajectories: sim
                .trajectories
                .iter()
                .map(|t| TrajectoryRow {
                    trial: t.trial,
                    steps: t.steps,
                    return_time: t.return_time,
                    returns: t.returns,
                    truncated: t.truncated,
                    final_position: sim.ball.label(t.final_position).clone(),
                    max_distance: t.max_distance,
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub schema_version: String,
    pub subcommand: String,
    pub experiment: String,
    pub environment: String,
    pub provenance: Provenance,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analysis: Option<AnalysisSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slowness: Option<SlownessReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub certificates: Vec<CertificateSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<ClassificationReport>,
    pub ledger: Vec<CheckRow>,
    pub skipped: Vec<SkippedCheck>,
    /// Set when the run stopped at the truncation radius; sections are partial.
    pub truncated: bool,
    pub passed: bool,
}

impl Report {
    pub fn new(subcommand: &str, experiment: &str, environment: &str, provenance: Provenance) -> Self {
        Report {
            schema_version: SCHEMA_VERSION.into(),
            subcommand: subcommand.into(),
            experiment: experiment.into(),
            environment: environment.into(),
            provenance,
            analysis: None,
            slowness: None,
            certificates: Vec::new(),
            simulation: None,
            classification: None,
            ledger: Vec::new(),
            skipped: Vec::new(),
            truncated: false,
            passed: true,
        }
    }

    /// Recomputes `passed` from the ledger.
    pub fn finish(&mut self) {
        self.passed = !self.truncated && self.ledger.iter().all(|r| r.passed);
    }
}

/// Pretty JSON with every float written as `{:.16e}`.
struct FixedFloat<'a>(PrettyFormatter<'a>);

impl Formatter for FixedFloat<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }
    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        write!(writer, "{:.16e}", value as f64)
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

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FixedFloat(PrettyFormatter::new()));
    value.serialize(&mut ser).expect("report serializes");
    out.push(b'\n');
    out
}

fn cell(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        String::new()
    }
}

pub fn profile_csv(profile: &ResistanceProfile) -> String {
    let mut s = String::from("radius,effective_resistance\n");
    for (r, v) in profile.radii.iter().zip(&profile.values) {
        s.push_str(&format!("{r},{}\n", cell(*v)));
    }
    s
}

fn quote(text: &str) -> String {
    if text.contains([',', '"', '\n']) {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

pub fn ledger_csv(rows: &[CheckRow]) -> String {
    let mut s = String::from("check,paper_anchor,measured,comparison,threshold,samples,passed\n");
    for r in rows {
        let cmp = match r.comparison {
            crate::verify::Comparison::AtMost => "at_most",
            crate::verify::Comparison::AtLeast => "at_least",
        };
        s.push_str(&format!(
            "{},{},{},{cmp},{},{},{}\n",
            quote(&r.check),
            quote(&r.paper_anchor),
            cell(r.measured),
            cell(r.threshold),
            r.samples,
            r.passed
        ));
    }
    s
}

pub fn trajectories_csv(section: &SimulationSection) -> String {
    let mut s = String::from("trial,steps,return_time,returns,truncated,final_position,max_distance\n");
    for t in &section.trajectories {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            t.trial,
            t.steps,
            t.return_time.map_or(String::new(), |r| r.to_string()),
            t.returns,
            t.truncated,
            quote(&t.final_position.to_string()),
            t.max_distance
        ));
    }
    s
}

/// Writes the report into `dir` and returns the files written.
pub fn emit(report: &Report, dir: &Path, format: Format) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let stem = &report.subcommand;
    let mut files: Vec<(PathBuf, Vec<u8>)> = Vec::new();
    match format {
        Format::Json => files.push((dir.join(format!("{stem}.json")), to_json(report))),
        Format::Csv => {
            files.push((dir.join(format!("{stem}_ledger.csv")), ledger_csv(&report.ledger).into_bytes()));
            let profile = report
                .analysis
                .as_ref()
                .map(|a| &a.profile)
                .or(report.classification.as_ref().map(|c| &c.profile));
            if let Some(p) = profile {
                files.push((dir.join(format!("{stem}_profile.csv")), profile_csv(p).into_bytes()));
            }
            if let Some(sim) = &report.simulation {
                files.push((
                    dir.join(format!("{stem}_trajectories.csv")),
                    trajectories_csv(sim).into_bytes(),
                ));
            }
        }
    }
    let mut written = Vec::new();
    for (path, bytes) in files {
        std::fs::write(&path, bytes).map_err(|e| {
            Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))
        })?;
        written.push(path);
    }
    Ok(written)
}
