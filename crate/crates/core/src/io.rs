//! CSV datasets, TOML configuration and run manifests.
//!
//! Datasets are comma-separated with a header row and `.` decimals. `NA` and
//! empty cells are rejected. Covariate columns whose cells all parse as
//! numbers are used as-is; any other column is a factor, expanded into
//! indicators against its first-seen level.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{parse_coef_key, ModelSpec, RegressionCoefficients, SurvivalDataset};
use crate::optimizer::OptimizerConfig;
use crate::simulate::{CovariateLaw, ScenarioConfig};

/// Which columns of a file hold the time, the event status and the covariates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSchema {
    pub time: String,
    pub status: String,
    #[serde(default)]
    pub covariates: Vec<String>,
}

/// Indicator coding of one factor column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorCoding {
    pub column: String,
    pub reference: String,
    /// Non-reference levels, one indicator each, in column order.
    pub levels: Vec<String>,
}

impl FactorCoding {
    pub fn indicator_names(&self) -> Vec<String> {
        self.levels.iter().map(|l| format!("{}{}", self.column, l)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDataset {
    pub data: SurvivalDataset,
    pub factors: Vec<FactorCoding>,
}

pub fn load_dataset(path: &Path, schema: &DatasetSchema) -> Result<LoadedDataset> {
    let file = fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_dataset(file, &path.display().to_string(), schema)
}

enum Column {
    Numeric(Vec<f64>),
    Factor(FactorCoding, Vec<usize>),
}

/// Reads a dataset from any reader; `source` names it in diagnostics.
pub fn read_dataset<R: Read>(reader: R, source: &str, schema: &DatasetSchema) -> Result<LoadedDataset> {
    let err = |line: usize, msg: String| Error::Data {
        source_name: source.to_string(),
        line,
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| err(1, e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| err(1, format!("column `{name}` not found in header")))
    };
    let time_col = find(&schema.time)?;
    let status_col = find(&schema.status)?;
    let cov_cols: Vec<usize> = schema.covariates.iter().map(|c| find(c)).collect::<Result<_>>()?;

    let mut times = Vec::new();
    let mut events = Vec::new();
    let mut raw: Vec<Vec<String>> = vec![Vec::new(); cov_cols.len()];
    let mut lines = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let cell = |k: usize| -> Result<&str> {
            let v = rec.get(k).map(str::trim).unwrap_or("");
            if v.is_empty() {
                Err(err(line, format!("missing value in column `{}`", header[k])))
            } else if v.eq_ignore_ascii_case("NA") {
                Err(err(line, format!("NA in column `{}`; missing values are not allowed", header[k])))
            } else {
                Ok(v)
            }
        };
        let t_raw = cell(time_col)?;
        let t: f64 = t_raw
            .parse()
            .map_err(|_| err(line, format!("time `{t_raw}` is not a number")))?;
        if !(t.is_finite() && t > 0.0) {
            return Err(err(line, format!("time must be positive and finite, got {t_raw}")));
        }
        let s_raw = cell(status_col)?;
        let event = match s_raw.parse::<f64>() {
            Ok(0.0) => false,
            Ok(1.0) => true,
            _ => return Err(err(line, format!("status must be 0 or 1, got `{s_raw}`"))),
        };
        for (k, &c) in cov_cols.iter().enumerate() {
            raw[k].push(cell(c)?.to_string());
        }
        times.push(t);
        events.push(event);
        lines.push(line);
    }
    if times.is_empty() {
        return Err(err(1, "no data rows".into()));
    }

    let mut columns = Vec::with_capacity(cov_cols.len());
    for (k, cells) in raw.iter().enumerate() {
        let parsed: Option<Vec<f64>> = cells.iter().map(|c| c.parse::<f64>().ok()).collect();
        match parsed {
            Some(v) => {
                if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                    return Err(err(lines[i], format!("covariate `{}` is not finite", schema.covariates[k])));
                }
                columns.push(Column::Numeric(v));
            }
            None => {
                let mut seen: Vec<String> = Vec::new();
                let codes = cells
                    .iter()
                    .map(|c| match seen.iter().position(|s| s == c) {
                        Some(i) => i,
                        None => {
                            seen.push(c.clone());
                            seen.len() - 1
                        }
                    })
                    .collect();
                let coding = FactorCoding {
                    column: schema.covariates[k].clone(),
                    reference: seen[0].clone(),
                    levels: seen[1..].to_vec(),
                };
                columns.push(Column::Factor(coding, codes));
            }
        }
    }

    let mut names = Vec::new();
    let mut factors = Vec::new();
    for (k, col) in columns.iter().enumerate() {
        match col {
            Column::Numeric(_) => names.push(schema.covariates[k].clone()),
            Column::Factor(c, _) => {
                names.extend(c.indicator_names());
                factors.push(c.clone());
            }
        }
    }
    let n = times.len();
    let mut covariates = Vec::with_capacity(n * names.len());
    for i in 0..n {
        for col in &columns {
            match col {
                Column::Numeric(v) => covariates.push(v[i]),
                Column::Factor(c, codes) => {
                    covariates.extend((1..=c.levels.len()).map(|l| if codes[i] == l { 1.0 } else { 0.0 }))
                }
            }
        }
    }
    let data = SurvivalDataset::new(times, events, covariates, names)?;
    Ok(LoadedDataset { data, factors })
}

/// Writes `time,status,<covariates>` with round-trip float formatting.
pub fn write_dataset<W: Write>(data: &SurvivalDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["time".to_string(), "status".to_string()];
    header.extend(data.names().iter().cloned());
    w.write_record(&header).map_err(csv_io)?;
    for i in 0..data.len() {
        let mut rec = vec![format!("{:?}", data.times()[i]), u8::from(data.events()[i]).to_string()];
        rec.extend(data.row(i).iter().map(|x| format!("{x:?}")));
        w.write_record(&rec).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Schema matching the layout produced by [`write_dataset`].
pub fn export_schema(data: &SurvivalDataset) -> DatasetSchema {
    DatasetSchema {
        time: "time".into(),
        status: "status".into(),
        covariates: data.names().to_vec(),
    }
}

/// Writes `bytes` to a temporary sibling and renames it over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::Io(format!("{} is not a file path", path.display())))?
        .to_string_lossy();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::Io(format!("{}: {e}", path.display()))
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

/// Provenance record written next to every set of outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    /// Input path to SHA-256 of its raw bytes.
    pub inputs: BTreeMap<String, String>,
    pub tool_version: String,
    pub started_unix: f64,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<String>,
}

// ---- configuration files ----

fn toml_error(source: &str, e: toml::de::Error) -> Error {
    Error::Config {
        key: source.to_string(),
        msg: match e.span().map(|s| s.start) {
            Some(offset) => format!("{} (byte {offset})", e.message()),
            None => e.message().to_string(),
        },
    }
}

/// `[model]` section.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub spec: Option<String>,
    #[serde(default)]
    pub fix: BTreeMap<String, f64>,
    #[serde(default)]
    pub allow_two_scales: bool,
}

impl ModelSection {
    pub fn build(&self, covariate_names: Vec<String>) -> Result<ModelSpec> {
        let text = self.spec.as_deref().ok_or_else(|| Error::Config {
            key: "model.spec".into(),
            msg: "missing".into(),
        })?;
        build_spec(text, &self.fix, covariate_names, self.allow_two_scales)
    }
}

/// Parses an `M(...)` string and applies `fix` entries keyed like `nu0`.
pub fn build_spec(
    text: &str,
    fix: &BTreeMap<String, f64>,
    covariate_names: Vec<String>,
    allow_two_scales: bool,
) -> Result<ModelSpec> {
    let mut spec = ModelSpec::parse(text, covariate_names, allow_two_scales)?;
    for (k, &v) in fix {
        spec = spec.fix_key(k, v).map_err(|e| Error::Config {
            key: format!("model.fix.{k}"),
            msg: e.to_string(),
        })?;
    }
    Ok(spec)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub path: Option<PathBuf>,
    pub time: Option<String>,
    pub status: Option<String>,
    pub covariates: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

/// Configuration shared by `fit`, `compare` and `curves`; command-line flags
/// override these values.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub model: ModelSection,
    /// Extra specs for `compare`.
    #[serde(default)]
    pub compare: Vec<String>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub output: OutputSection,
}

impl RunConfig {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let c: RunConfig = toml::from_str(text).map_err(|e| toml_error(source, e))?;
        c.optimizer.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }
}

/// Omitted blocks are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthSection {
    #[serde(default)]
    pub tau: Vec<f64>,
    #[serde(default)]
    pub beta: Vec<f64>,
    #[serde(default)]
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub nu: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub model: String,
    #[serde(default)]
    pub fix: BTreeMap<String, f64>,
    #[serde(default)]
    pub allow_two_scales: bool,
}

/// Simulation scenario file.
///
/// ```toml
/// n = 1000
/// replicates = 200
/// nu = [0.0, 0.69]      # `inf` selects the Gompertz limit
/// censoring = 0.3
/// seed = 1
/// covariates = { law = "bernoulli", p = 0.5 }
///
/// [truth]
/// tau = [0.8, 0.6]
/// beta = [0.0, 0.0]
/// alpha = [0.2, -0.5]
/// nu = [0.0, 0.0]
///
/// [[fit]]
/// model = "M(tau,alpha)"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub n: usize,
    pub replicates: usize,
    pub nu: Vec<f64>,
    pub censoring: f64,
    #[serde(default)]
    pub seed: u64,
    pub covariates: CovariateLaw,
    pub truth: TruthSection,
    pub fit: Vec<FitSection>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
}

impl ScenarioFile {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| toml_error(source, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn into_scenario(self) -> Result<ScenarioConfig> {
        let mut t = self.truth;
        let width = 1 + self.covariates.n_covariates();
        for b in [&mut t.tau, &mut t.beta, &mut t.alpha, &mut t.nu] {
            if b.is_empty() {
                b.resize(width, 0.0);
            }
        }
        let true_coefs = RegressionCoefficients::from_blocks(t.tau, t.beta, t.alpha, t.nu).map_err(|e| {
            Error::Config {
                key: "truth".into(),
                msg: e.to_string(),
            }
        })?;
        let names = self.covariates.names();
        let fit_specs = self
            .fit
            .iter()
            .enumerate()
            .map(|(i, f)| {
                build_spec(&f.model, &f.fix, names.clone(), f.allow_two_scales).map_err(|e| match e {
                    Error::Config { key, msg } => Error::Config {
                        key: format!("fit[{i}].{}", key.trim_start_matches("model.")),
                        msg,
                    },
                    other => Error::Config {
                        key: format!("fit[{i}].model"),
                        msg: other.to_string(),
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let s = ScenarioConfig {
            n: self.n,
            true_coefs,
            nu_grid: self.nu,
            target_censoring: self.censoring,
            n_replicates: self.replicates,
            fit_specs,
            seed: self.seed,
            covariate_law: self.covariates,
            optimizer: self.optimizer,
        };
        s.validate()?;
        Ok(s)
    }
}

/// Parses `key=value` as used by `--fix nu0=0.6931`.
pub fn parse_fix_flag(text: &str) -> Result<(String, f64)> {
    let (k, v) = text.split_once('=').ok_or_else(|| Error::Config {
        key: "--fix".into(),
        msg: format!("expected key=value, got `{text}`"),
    })?;
    let k = k.trim();
    parse_coef_key(k).map_err(|e| Error::Config {
        key: format!("--fix {k}"),
        msg: e.to_string(),
    })?;
    let v: f64 = v.trim().parse().map_err(|_| Error::Config {
        key: format!("--fix {k}"),
        msg: format!("`{}` is not a number", v.trim()),
    })?;
    Ok((k.to_string(), v))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema(covs: &[&str]) -> DatasetSchema {
        DatasetSchema {
            time: "time".into(),
            status: "status".into(),
            covariates: covs.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn three_rows_exact_matrix() {
        let text = "time,status,age,sex\n1.5,1,60,0\n2.0,0,55.5,1\n0.25,1,70,1\n";
        let d = read_dataset(text.as_bytes(), "t.csv", &schema(&["age", "sex"])).unwrap();
        assert_eq!(d.data.times(), &[1.5, 2.0, 0.25]);
        assert_eq!(d.data.events(), &[true, false, true]);
        assert_eq!(d.data.covariates(), &[60.0, 0.0, 55.5, 1.0, 70.0, 1.0]);
        assert_eq!(d.data.names(), &["age".to_string(), "sex".to_string()]);
        assert!(d.factors.is_empty());
    }

    #[test]
    fn zero_time_names_the_line() {
        let text = "time,status\n1.0,1\n0,1\n";
        let e = read_dataset(text.as_bytes(), "t.csv", &schema(&[])).unwrap_err();
        match e {
            Error::Data { line, ref msg, .. } => {
                assert_eq!(line, 3);
                assert!(msg.contains("positive"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_status_missing_cell_and_na() {
        let bad = [
            ("time,status\n1.0,2\n", 2, "status"),
            ("time,status,x\n1.0,1,\n", 2, "missing"),
            ("time,status,x\n1.0,1,3\n2.0,0,NA\n", 3, "NA"),
        ];
        for (text, want_line, frag) in bad {
            let e = read_dataset(text.as_bytes(), "t.csv", &schema(if text.contains(",x") { &["x"] } else { &[] }))
                .unwrap_err();
            match e {
                Error::Data { line, msg, .. } => {
                    assert_eq!(line, want_line, "{msg}");
                    assert!(msg.contains(frag), "{msg}");
                }
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn factor_with_five_levels_gives_four_indicators() {
        let text = "time,status,trt\n1,1,palliative\n2,1,chemo\n3,0,radio\n4,1,surgery\n5,1,combined\n6,0,chemo\n";
        let d = read_dataset(text.as_bytes(), "t.csv", &schema(&["trt"])).unwrap();
        assert_eq!(d.data.n_covariates(), 4);
        assert_eq!(d.factors[0].reference, "palliative");
        assert_eq!(d.data.row(0), &[0.0, 0.0, 0.0, 0.0]);
        assert_eq!(d.data.row(1), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(d.data.row(4), &[0.0, 0.0, 0.0, 1.0]);
        assert_eq!(d.data.row(5), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(d.data.names()[0], "trtchemo");
    }

    #[test]
    fn unknown_column_is_reported() {
        let e = read_dataset("time,status\n1,1\n".as_bytes(), "t.csv", &schema(&["age"])).unwrap_err();
        assert!(e.to_string().contains("age"));
    }

    #[test]
    fn export_roundtrip_is_identical() {
        let data = SurvivalDataset::new(
            vec![0.1, 1.0 / 3.0, 2.5e-7, 1234.5678],
            vec![true, false, true, true],
            vec![0.1 + 0.2, -1.0, std::f64::consts::PI, 0.0, 1e-300, 7.0, -0.5, 1.0],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_dataset(&data, &mut buf).unwrap();
        let back = read_dataset(buf.as_slice(), "mem", &export_schema(&data)).unwrap();
        assert_eq!(back.data, data);
    }

    #[test]
    fn unknown_config_key_is_an_error_naming_it() {
        let e = RunConfig::parse("[optimizer]\nn_start = 3\n", "run.toml").unwrap_err();
        assert!(e.to_string().contains("n_start"), "{e}");
        let e = RunConfig::parse("[modle]\nspec = \"M(beta)\"\n", "run.toml").unwrap_err();
        assert!(e.to_string().contains("modle"), "{e}");
        let e = RunConfig::parse("[optimizer]\nn_starts = 0\n", "run.toml").unwrap_err();
        assert!(e.to_string().contains("optimizer.n_starts"), "{e}");
    }

    #[test]
    fn run_config_builds_spec_with_fixes() {
        let c = RunConfig::parse(
            "[data]\npath = \"d.csv\"\ntime = \"t\"\nstatus = \"d\"\ncovariates = [\"x\"]\n\
             [model]\nspec = \"M(tau)\"\nfix = { nu0 = 0.6931471805599453 }\n",
            "run.toml",
        )
        .unwrap();
        let s = c.model.build(vec!["x".into()]).unwrap();
        assert!(!s.is_free(crate::Block::Nu, 0));
        assert_eq!(s.fixed_value(crate::Block::Nu, 0), 2f64.ln());
        let bad = ModelSection {
            spec: Some("M(tau)".into()),
            fix: [("nu9".to_string(), 1.0)].into_iter().collect(),
            allow_two_scales: false,
        };
        let e = bad.build(vec!["x".into()]).unwrap_err();
        assert!(e.to_string().contains("model.fix.nu9"), "{e}");
    }

    #[test]
    fn scenario_file_parses_and_validates() {
        let text = r#"
n = 200
replicates = 3
nu = [0.0, inf]
censoring = 0.3
seed = 4
covariates = { law = "bernoulli", p = 0.5 }
[truth]
tau = [0.8, 0.6]
beta = [0.0, 0.0]
alpha = [0.2, -0.5]
nu = [0.0, 0.0]
[[fit]]
model = "M(tau,alpha)"
[[fit]]
model = "M(beta)"
fix = { nu0 = 0.6931471805599453 }
"#;
        let s = ScenarioFile::parse(text, "s.toml").unwrap().into_scenario().unwrap();
        assert_eq!(s.fit_specs.len(), 2);
        assert!(s.nu_grid[1].is_infinite());
        let e = ScenarioFile::parse(&text.replace("censoring", "censor"), "s.toml").unwrap_err();
        assert!(e.to_string().contains("censor"), "{e}");
        let e = ScenarioFile::parse(&text.replace("M(beta)", "M(gamma)"), "s.toml")
            .unwrap()
            .into_scenario()
            .unwrap_err();
        assert!(e.to_string().contains("fit[1]"), "{e}");
    }

    #[test]
    fn fix_flag_parsing() {
        assert_eq!(parse_fix_flag("nu0=0.6931").unwrap(), ("nu0".to_string(), 0.6931));
        assert!(parse_fix_flag("nu0").is_err());
        assert!(parse_fix_flag("zeta0=1").is_err());
        assert!(parse_fix_flag("beta1=abc").unwrap_err().to_string().contains("beta1"));
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("out.txt");
        atomic_write(&p, b"one").unwrap();
        atomic_write(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
        assert_eq!(file_digest(&p).unwrap(), sha256_hex(b"two"));
    }
}
