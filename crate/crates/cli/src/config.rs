//! Run configuration: a flat `key = value` file with bracketed sections.
//!
//! ```text
//! [problem]
//! preset = stefan
//! latent_heat = 1
//! p = 3
//! eps = 0.2, 0.1, 0.05
//!
//! [mesh]
//! shape = unit_square
//! refinement = 16
//!
//! [measure]
//! dirac = 0.5 0.5 2
//! ac_constant = -1
//! ```
//!
//! Repeatable keys (`dirac`, `line`, `region`) may appear any number of
//! times; every other key at most once. Relative paths are resolved against
//! the directory holding the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use wplap::diagnostics::DiagnosticsOptions;
use wplap::domain::{Dirac, LineSource, Tensor};
use wplap::kernel::ScalarToleranceConfig;
use wplap::mesh::{Point, Shape};
use wplap::monotone::Preset;
use wplap::solver::{SolverOptions, Strategy};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("{field}: {message}")]
    Field { field: String, message: String },

    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

pub(crate) fn field_error(field: impl Into<String>, message: impl ToString) -> ConfigError {
    ConfigError::Field {
        field: field.into(),
        message: message.to_string(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum ProblemSpec {
    Preset { preset: Preset, latent_heat: f64 },
    /// Raw piecewise-linear `beta_hat`, `zeta_hat`, normalized on build.
    Custom {
        beta_hat: (Vec<f64>, Vec<f64>),
        zeta_hat: (Vec<f64>, Vec<f64>),
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum MeshSpec {
    Structured { shape: Shape, refinements: Vec<usize> },
    File(PathBuf),
}

/// Axis-aligned box; triangles whose centroid falls inside get `tensor`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Region {
    pub min: Point,
    pub max: Point,
    pub tensor: Tensor,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiffusionSpec {
    pub tensor: Tensor,
    pub regions: Vec<Region>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MeasureSpec {
    pub diracs: Vec<Dirac>,
    pub lines: Vec<LineSource>,
    pub ac_constant: f64,
    /// Amplitude `a` of the density `a sin(pi x) sin(pi y)`.
    pub ac_sine: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub p: f64,
    pub eps_schedule: Vec<f64>,
    pub mesh: MeshSpec,
    pub diffusion: DiffusionSpec,
    pub measure: MeasureSpec,
    pub solver: SolverOptions,
    pub tolerances: ScalarToleranceConfig,
    pub abort_on_failure: bool,
    pub diagnostics: DiagnosticsOptions,
    /// `q` whose `q_hat` norm measures successive sweep differences.
    pub sweep_q: f64,
    pub output_dir: PathBuf,
}

struct Entry {
    line: usize,
    key: String,
    value: String,
}

const SECTIONS: [(&str, &[&str]); 7] = [
    ("problem", &["preset", "latent_heat", "p", "eps", "beta_hat_breakpoints", "beta_hat_slopes", "zeta_hat_breakpoints", "zeta_hat_slopes"]),
    ("mesh", &["shape", "refinement", "refinements", "file"]),
    ("diffusion", &["tensor", "region"]),
    ("measure", &["dirac", "line", "ac_constant", "ac_sine"]),
    ("solver", &["strategy", "inner_tol", "outer_tol", "max_inner", "max_outer", "damping", "abort_on_failure", "quadrature_rel_tol", "root_abs_tol"]),
    ("diagnostics", &["q", "tk_levels", "entropy_levels", "bump_center", "slack_budget", "a_priori_budget", "sweep_q"]),
    ("output", &["directory"]),
];

const REPEATABLE: [&str; 3] = ["dirac", "line", "region"];

fn tokenize(text: &str) -> Result<BTreeMap<String, Vec<Entry>>, ConfigError> {
    let mut out: BTreeMap<String, Vec<Entry>> = BTreeMap::new();
    let mut section: Option<String> = None;
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let text = raw.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        if let Some(name) = text.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::Syntax {
                    line,
                    message: format!("unterminated section header `{text}`"),
                })?
                .trim();
            if !SECTIONS.iter().any(|s| s.0 == name) {
                return Err(ConfigError::Syntax {
                    line,
                    message: format!("unknown section [{name}]"),
                });
            }
            section = Some(name.to_string());
            continue;
        }
        let Some((key, value)) = text.split_once('=') else {
            return Err(ConfigError::Syntax {
                line,
                message: format!("expected `key = value`, got `{text}`"),
            });
        };
        let Some(sec) = &section else {
            return Err(ConfigError::Syntax {
                line,
                message: "key outside of any section".into(),
            });
        };
        let key = key.trim();
        let known = SECTIONS.iter().find(|s| s.0 == sec).map(|s| s.1).unwrap_or(&[]);
        if !known.contains(&key) {
            return Err(ConfigError::Syntax {
                line,
                message: format!("unknown key `{key}` in [{sec}]"),
            });
        }
        let entries = out.entry(sec.clone()).or_default();
        if !REPEATABLE.contains(&key) {
            if let Some(prev) = entries.iter().find(|e| e.key == key) {
                return Err(ConfigError::Syntax {
                    line,
                    message: format!("`{key}` already set on line {}", prev.line),
                });
            }
        }
        entries.push(Entry {
            line,
            key: key.to_string(),
            value: value.trim().to_string(),
        });
    }
    Ok(out)
}

struct Section<'a> {
    name: &'static str,
    entries: &'a [Entry],
}

impl<'a> Section<'a> {
    fn field(&self, key: &str) -> String {
        format!("{}.{key}", self.name)
    }

    fn all(&self, key: &'a str) -> impl Iterator<Item = &'a Entry> + 'a {
        self.entries.iter().filter(move |e| e.key == key)
    }

    fn get(&self, key: &str) -> Option<&'a Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    fn err(&self, e: &Entry, message: impl std::fmt::Display) -> ConfigError {
        ConfigError::Field {
            field: format!("{} (line {})", self.field(&e.key), e.line),
            message: message.to_string(),
        }
    }

    fn numbers(&self, e: &Entry) -> Result<Vec<f64>, ConfigError> {
        e.value
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| self.err(e, format!("`{s}` is not a number")))
                    .and_then(|x| {
                        if x.is_finite() {
                            Ok(x)
                        } else {
                            Err(self.err(e, "must be finite"))
                        }
                    })
            })
            .collect()
    }

    fn fixed<const N: usize>(&self, e: &Entry) -> Result<[f64; N], ConfigError> {
        let v = self.numbers(e)?;
        v.as_slice()
            .try_into()
            .map_err(|_| self.err(e, format!("expected {N} numbers, got {}", v.len())))
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.get(key) {
            Some(e) => Ok(self.fixed::<1>(e)?[0]),
            None => Ok(default),
        }
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        self.get(key).map(|e| self.numbers(e)).transpose()
    }

    fn usize_list(&self, key: &str) -> Result<Option<Vec<usize>>, ConfigError> {
        self.get(key)
            .map(|e| {
                e.value
                    .split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse::<usize>()
                            .map_err(|_| self.err(e, format!("`{s}` is not a non-negative integer")))
                    })
                    .collect()
            })
            .transpose()
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.usize_list(key)? {
            Some(v) if v.len() == 1 => Ok(v[0]),
            Some(_) => Err(self.err(self.get(key).unwrap(), "expected one integer")),
            None => Ok(default),
        }
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|e| e.value.parse::<T>().map_err(|err| self.err(e, err)))
            .transpose()
    }
}

const fn empty() -> &'static [Entry] {
    &[]
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses and checks the syntax and value ranges of every field.
    /// Checks that need the mesh happen in [`crate::run::Prepared::new`].
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let tokens = tokenize(text)?;
        let section = |name: &'static str| Section {
            name,
            entries: tokens.get(name).map(|v| v.as_slice()).unwrap_or(empty()),
        };

        let prob = section("problem");
        let preset = prob.get("preset").map(|e| e.value.as_str()).unwrap_or("linear");
        let problem = if preset == "custom" {
            let pair = |key: &str| -> Result<(Vec<f64>, Vec<f64>), ConfigError> {
                let b = prob.list(&format!("{key}_breakpoints"))?.unwrap_or_default();
                let s = prob
                    .list(&format!("{key}_slopes"))?
                    .ok_or_else(|| field_error(prob.field(&format!("{key}_slopes")), "required for preset = custom"))?;
                Ok((b, s))
            };
            let zeta_hat = pair("zeta_hat")?;
            let beta_hat = if prob.get("beta_hat_slopes").is_some() {
                pair("beta_hat")?
            } else {
                (vec![], vec![0.0])
            };
            ProblemSpec::Custom { beta_hat, zeta_hat }
        } else {
            let preset: Preset = preset
                .parse()
                .map_err(|e| field_error(prob.field("preset"), format!("{e}; expected linear, stefan, richards or custom")))?;
            if prob.entries.iter().any(|e| e.key.contains("_hat_")) {
                return Err(field_error(prob.field("preset"), "custom nonlinearity keys need preset = custom"));
            }
            ProblemSpec::Preset {
                preset,
                latent_heat: prob.f64_or("latent_heat", 1.0)?,
            }
        };
        let p = prob.f64_or("p", 3.0)?;
        if !(p > 2.0) {
            return Err(field_error(prob.field("p"), format!("must be > 2, got {p}")));
        }
        let eps_schedule = prob
            .list("eps")?
            .ok_or_else(|| field_error(prob.field("eps"), "required (one value or a decreasing list)"))?;
        if eps_schedule.is_empty() {
            return Err(field_error(prob.field("eps"), "must not be empty"));
        }
        if eps_schedule.iter().any(|e| !(*e > 0.0)) {
            return Err(field_error(prob.field("eps"), "values must be > 0"));
        }
        if eps_schedule.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(field_error(prob.field("eps"), "schedule must be strictly decreasing"));
        }

        let m = section("mesh");
        let mesh = match (m.get("file"), m.get("shape")) {
            (Some(_), Some(_)) => return Err(field_error("mesh", "give either `file` or `shape`, not both")),
            (Some(f), None) => {
                if m.get("refinement").is_some() || m.get("refinements").is_some() {
                    return Err(m.err(f, "refinement does not apply to mesh files"));
                }
                MeshSpec::File(base_dir.join(&f.value))
            }
            (None, shape) => {
                let shape: Shape = match shape {
                    Some(_) => m.parse("shape")?.unwrap(),
                    None => Shape::UnitSquare,
                };
                let refinements = match (m.usize_list("refinements")?, m.get("refinement")) {
                    (Some(_), Some(_)) => {
                        return Err(field_error("mesh", "give either `refinement` or `refinements`, not both"))
                    }
                    (Some(list), None) => list,
                    (None, _) => vec![m.usize_or("refinement", 16)?],
                };
                if refinements.is_empty() || refinements.iter().any(|&n| n < 2) {
                    return Err(field_error(m.field("refinement"), "every refinement must be >= 2"));
                }
                MeshSpec::Structured { shape, refinements }
            }
        };

        let d = section("diffusion");
        let tensor = match d.get("tensor") {
            Some(e) => d.fixed::<3>(e)?,
            None => [1.0, 0.0, 1.0],
        };
        let regions = d
            .all("region")
            .map(|e| {
                let v = d.fixed::<7>(e)?;
                if !(v[0] < v[2] && v[1] < v[3]) {
                    return Err(d.err(e, "expected `xmin ymin xmax ymax xx xy yy` with xmin < xmax, ymin < ymax"));
                }
                Ok(Region {
                    min: [v[0], v[1]],
                    max: [v[2], v[3]],
                    tensor: [v[4], v[5], v[6]],
                })
            })
            .collect::<Result<Vec<_>, _>>()?;

        let ms = section("measure");
        let diracs = ms
            .all("dirac")
            .map(|e| {
                let [x, y, w] = ms.fixed::<3>(e)?;
                Ok(Dirac { point: [x, y], weight: w })
            })
            .collect::<Result<Vec<_>, ConfigError>>()?;
        let lines = ms
            .all("line")
            .map(|e| {
                let [x0, y0, x1, y1, density] = ms.fixed::<5>(e)?;
                Ok(LineSource {
                    start: [x0, y0],
                    end: [x1, y1],
                    density,
                })
            })
            .collect::<Result<Vec<_>, ConfigError>>()?;
        let measure = MeasureSpec {
            diracs,
            lines,
            ac_constant: ms.f64_or("ac_constant", 0.0)?,
            ac_sine: ms.f64_or("ac_sine", 0.0)?,
        };

        let s = section("solver");
        let defaults = SolverOptions::default();
        let solver = SolverOptions {
            inner_tol: s.f64_or("inner_tol", defaults.inner_tol)?,
            outer_tol: s.f64_or("outer_tol", defaults.outer_tol)?,
            max_inner: s.usize_or("max_inner", defaults.max_inner)?,
            max_outer: s.usize_or("max_outer", defaults.max_outer)?,
            damping: s.f64_or("damping", defaults.damping)?,
            strategy: s.parse::<Strategy>("strategy")?.unwrap_or(defaults.strategy),
        };
        solver.validate().map_err(|e| field_error("solver", e))?;
        let abort_on_failure = s.parse::<bool>("abort_on_failure")?.unwrap_or(false);
        let tol_defaults = ScalarToleranceConfig::default();
        let tolerances = ScalarToleranceConfig {
            quadrature_rel_tol: s.f64_or("quadrature_rel_tol", tol_defaults.quadrature_rel_tol)?,
            root_abs_tol: s.f64_or("root_abs_tol", tol_defaults.root_abs_tol)?,
        };
        tolerances.validate().map_err(|e| field_error("solver", e))?;

        let g = section("diagnostics");
        let dd = DiagnosticsOptions::default();
        let diagnostics = DiagnosticsOptions {
            q_list: g.list("q")?.unwrap_or(dd.q_list),
            tk_levels: g.list("tk_levels")?.unwrap_or(dd.tk_levels),
            entropy_levels: g.list("entropy_levels")?.unwrap_or(dd.entropy_levels),
            bump_center: g.get("bump_center").map(|e| g.fixed::<2>(e)).transpose()?,
            slack_budget: g.f64_or("slack_budget", dd.slack_budget)?,
            a_priori_budget: g.f64_or("a_priori_budget", dd.a_priori_budget)?,
        };
        diagnostics.validate().map_err(|e| field_error("diagnostics", e))?;
        let sweep_q = g.f64_or("sweep_q", 1.5)?;
        wplap::diagnostics::q_hat(sweep_q).map_err(|e| field_error(g.field("sweep_q"), e))?;

        let o = section("output");
        let output_dir = base_dir.join(o.get("directory").map(|e| e.value.as_str()).unwrap_or("output"));

        Ok(Self {
            problem,
            p,
            eps_schedule,
            mesh,
            diffusion: DiffusionSpec { tensor, regions },
            measure,
            solver,
            tolerances,
            abort_on_failure,
            diagnostics,
            sweep_q,
            output_dir,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        RunConfig::parse(text, Path::new("/cfg"))
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let c = parse("[problem]\neps = 0.1\n").unwrap();
        assert_eq!(c.p, 3.0);
        assert_eq!(
            c.problem,
            ProblemSpec::Preset {
                preset: Preset::Linear,
                latent_heat: 1.0
            }
        );
        assert_eq!(
            c.mesh,
            MeshSpec::Structured {
                shape: Shape::UnitSquare,
                refinements: vec![16]
            }
        );
        assert_eq!(c.output_dir, Path::new("/cfg/output"));
        assert_eq!(c.solver, SolverOptions::default());
    }

    #[test]
    fn full_config() {
        let c = parse(
            "# benchmark\n[problem]\npreset = stefan\nlatent_heat = 2\np = 4\neps = 0.2, 0.1 0.05\n\
             [mesh]\nshape = unit_disk\nrefinements = 8, 16\n\
             [diffusion]\ntensor = 2 0.5 1\nregion = 0 0 0.5 0.5 1 0 1\n\
             [measure]\ndirac = 0.1 0.2 3\ndirac = 0 0 -1 # sink\nline = 0 0 0.5 0 2\nac_constant = -1\n\
             [solver]\nstrategy = fixed_point\ndamping = 0.5\nabort_on_failure = true\n\
             [diagnostics]\nq = 1.5\nbump_center = 0.1 0.1\n[output]\ndirectory = out/run1\n",
        )
        .unwrap();
        assert_eq!(c.eps_schedule, vec![0.2, 0.1, 0.05]);
        assert_eq!(c.measure.diracs.len(), 2);
        assert_eq!(c.measure.diracs[1].weight, -1.0);
        assert_eq!(c.measure.lines[0].density, 2.0);
        assert_eq!(c.diffusion.regions.len(), 1);
        assert_eq!(c.solver.strategy, Strategy::FixedPoint);
        assert!(c.abort_on_failure);
        assert_eq!(c.diagnostics.bump_center, Some([0.1, 0.1]));
        assert_eq!(c.output_dir, Path::new("/cfg/out/run1"));
    }

    #[test]
    fn custom_pair() {
        let c = parse("[problem]\npreset = custom\neps = 0.1\nzeta_hat_breakpoints = 0\nzeta_hat_slopes = 1 0.5\n").unwrap();
        assert_eq!(
            c.problem,
            ProblemSpec::Custom {
                beta_hat: (vec![], vec![0.0]),
                zeta_hat: (vec![0.0], vec![1.0, 0.5])
            }
        );
    }

    #[test]
    fn errors_name_fields_and_lines() {
        let cases = [
            ("[problem]\neps = 0.1\np = 2", "problem.p"),
            ("[problem]\neps = 0.1, 0.2", "decreasing"),
            ("[problem]", "problem.eps"),
            ("[problem]\neps = 0.1\n[mesh]\nrefinement = 1", "mesh.refinement"),
            ("[problem]\neps = 0.1\n[measure]\ndirac = 1 2", "line 4"),
            ("[problem]\neps = 0.1\n[measure]\nac_constant = x", "not a number"),
            ("[problem]\neps = 0.1\neps = 0.2", "already set on line 2"),
            ("[problem]\nfoo = 1", "unknown key `foo`"),
            ("[bogus]", "unknown section"),
            ("eps = 1", "outside of any section"),
            ("[problem]\neps = 0.1\npreset = heat", "problem.preset"),
            ("[problem]\neps = 0.1\n[solver]\ndamping = 2", "damping"),
            ("[problem]\neps = 0.1\n[diagnostics]\nq = 2.5", "diagnostics"),
            ("[problem]\neps = 0.1\n[mesh]\nfile = a.mesh\nshape = unit_disk", "not both"),
            ("[problem]\neps = 0.1\n[solver]\nstrategy = newton", "solver.strategy"),
        ];
        for (text, needle) in cases {
            let err = parse(text).unwrap_err().to_string();
            assert!(err.contains(needle), "`{text}` gave `{err}`");
        }
    }
}
