//! JSON and CSV file formats.
//!
//! Floats are written so that they read back bit for bit: JSON through the shortest
//! round-trip representation, CSV with 17 significant digits.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ctjmdp_core::model::{validate_distribution, validate_model, Label, RawModel};
use ctjmdp_core::{FiniteMemoryPolicy, MarkovPolicyGrid, ModelError, ModelSpec, Policy, PolicyError, RelaxedAction, TimeGrid};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum FileError {
    #[error("IO: {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("PARSE: {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("INVALID: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

impl FileError {
    pub fn code(&self) -> &'static str {
        match self {
            FileError::Io { .. } => "IO",
            FileError::Parse { .. } => "PARSE",
            FileError::Invalid(_) => "INVALID",
            FileError::Model(e) => e.code(),
            FileError::Policy(e) => e.code(),
        }
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, FileError> {
    let text = fs::read_to_string(path).map_err(|source| FileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| FileError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

/// Pretty JSON with a trailing newline.
pub fn json_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

/// Writes `contents` to `path`, or to standard output when `path` is `None`.
pub fn write_output(path: Option<&Path>, contents: &str) -> Result<(), FileError> {
    match path {
        Some(p) => fs::write(p, contents).map_err(|source| FileError::Io {
            path: p.to_path_buf(),
            source,
        }),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(contents.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|source| FileError::Io {
                    path: PathBuf::from("<stdout>"),
                    source,
                })
        }
    }
}

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn read_model(path: &Path) -> Result<ModelSpec, FileError> {
    let raw: RawModel = read_json(path)?;
    Ok(validate_model(&raw)?)
}

pub fn model_json(model: &ModelSpec) -> String {
    json_string(&model.to_raw())
}

/// Initial law: an array of probabilities in state order, or an object state → probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaFile {
    Dense(Vec<f64>),
    ByState(BTreeMap<String, f64>),
}

pub fn gamma_from_file(file: &GammaFile, model: &ModelSpec) -> Result<Vec<f64>, FileError> {
    let gamma = match file {
        GammaFile::Dense(v) => v.clone(),
        GammaFile::ByState(map) => {
            let mut g = vec![0.0; model.n_states()];
            for (name, &p) in map {
                g[state(model, name)?] = p;
            }
            g
        }
    };
    validate_distribution(model.n_states(), &gamma)?;
    Ok(gamma)
}

pub fn read_gamma(path: &Path, model: &ModelSpec) -> Result<Vec<f64>, FileError> {
    gamma_from_file(&read_json(path)?, model)
}

fn state(model: &ModelSpec, name: &str) -> Result<usize, FileError> {
    model
        .state_index(name)
        .ok_or_else(|| FileError::Invalid(format!("unknown state {name:?}")))
}

fn action(model: &ModelSpec, name: &str) -> Result<usize, FileError> {
    model
        .action_index(name)
        .ok_or_else(|| FileError::Invalid(format!("unknown action {name:?}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub h: f64,
    #[serde(rename = "K")]
    pub k: usize,
}

/// A relaxed action: an action name for a point mass, or action → weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ActionSpec {
    Pure(Label),
    Mixed(BTreeMap<String, f64>),
}

/// Memory transition: in memory `memory`, a jump `from → to` moves to `next`. `"*"`
/// matches any state; later rules override earlier ones, and transitions without a
/// rule keep the memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateRule {
    pub memory: Label,
    pub from: Label,
    pub to: Label,
    pub next: Label,
}

/// Policy file. Decision tables list one entry per grid cell; a single entry applies to
/// every cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PolicyFile {
    Markov {
        grid: GridSpec,
        /// Per cell: state → relaxed action.
        decisions: Vec<BTreeMap<String, ActionSpec>>,
    },
    FiniteMemory {
        grid: GridSpec,
        memory_states: Vec<Label>,
        initial_memory: Label,
        #[serde(default)]
        update: Vec<UpdateRule>,
        /// Per cell: state → memory → relaxed action.
        decision: Vec<BTreeMap<String, BTreeMap<String, ActionSpec>>>,
    },
}

fn relaxed(model: &ModelSpec, spec: &ActionSpec) -> Result<RelaxedAction, FileError> {
    let na = model.n_actions();
    Ok(match spec {
        ActionSpec::Pure(a) => RelaxedAction::dirac(na, action(model, &a.0)?),
        ActionSpec::Mixed(map) => {
            let mut w = vec![0.0; na];
            for (a, &p) in map {
                w[action(model, a)?] = p;
            }
            RelaxedAction::new(w)?
        }
    })
}

fn per_cell<'a, T>(table: &'a [T], grid: GridSpec) -> Result<impl Fn(usize) -> &'a T, FileError> {
    if table.len() != grid.k && table.len() != 1 {
        return Err(FileError::Invalid(format!(
            "{} decision entries for {} cells",
            table.len(),
            grid.k
        )));
    }
    let single = table.len() == 1;
    Ok(move |k: usize| if single { &table[0] } else { &table[k] })
}

fn lookup<'a, T>(map: &'a BTreeMap<String, T>, key: &str, what: &str) -> Result<&'a T, FileError> {
    map.get(key)
        .ok_or_else(|| FileError::Invalid(format!("no decision for {what} {key:?}")))
}

pub fn policy_from_file(file: &PolicyFile, model: &ModelSpec) -> Result<Policy, FileError> {
    let ns = model.n_states();
    match file {
        PolicyFile::Markov { grid, decisions } => {
            let tg = TimeGrid::new(grid.h, grid.k)?;
            let cell = per_cell(decisions, *grid)?;
            let mut table = Vec::with_capacity(grid.k * ns);
            for k in 0..grid.k {
                for z in 0..ns {
                    table.push(relaxed(model, lookup(cell(k), model.state_name(z), "state")?)?);
                }
            }
            Ok(Policy::Markov(MarkovPolicyGrid::new(model, tg, table)?))
        }
        PolicyFile::FiniteMemory {
            grid,
            memory_states,
            initial_memory,
            update,
            decision,
        } => {
            let tg = TimeGrid::new(grid.h, grid.k)?;
            let names: Vec<String> = memory_states.iter().map(|l| l.0.clone()).collect();
            let memory = |name: &str| {
                names
                    .iter()
                    .position(|m| m == name)
                    .ok_or_else(|| FileError::Invalid(format!("unknown memory state {name:?}")))
            };
            let nm = names.len();
            let mut table: Vec<usize> = (0..nm * ns * ns).map(|i| i / (ns * ns)).collect();
            for rule in update {
                let m = memory(&rule.memory.0)?;
                let next = memory(&rule.next.0)?;
                let states = |l: &Label| -> Result<Vec<usize>, FileError> {
                    if l.0 == "*" {
                        Ok((0..ns).collect())
                    } else {
                        Ok(vec![state(model, &l.0)?])
                    }
                };
                for from in states(&rule.from)? {
                    for &to in &states(&rule.to)? {
                        table[(m * ns + from) * ns + to] = next;
                    }
                }
            }
            let cell = per_cell(decision, *grid)?;
            let mut decisions = Vec::with_capacity(grid.k * ns * nm);
            for k in 0..grid.k {
                for z in 0..ns {
                    let by_memory = lookup(cell(k), model.state_name(z), "state")?;
                    for name in &names {
                        decisions.push(relaxed(model, lookup(by_memory, name, "memory")?)?);
                    }
                }
            }
            let initial = memory(&initial_memory.0)?;
            Ok(Policy::FiniteMemory(FiniteMemoryPolicy::new(
                model, names, initial, table, tg, decisions,
            )?))
        }
    }
}

pub fn read_policy(path: &Path, model: &ModelSpec) -> Result<Policy, FileError> {
    policy_from_file(&read_json(path)?, model)
}

fn action_spec(model: &ModelSpec, weights: &[f64]) -> ActionSpec {
    let support: Vec<usize> = (0..weights.len()).filter(|&a| weights[a] != 0.0).collect();
    if support.len() == 1 && weights[support[0]] == 1.0 {
        return ActionSpec::Pure(Label(model.action_name(support[0]).to_string()));
    }
    ActionSpec::Mixed(
        support
            .into_iter()
            .map(|a| (model.action_name(a).to_string(), weights[a]))
            .collect(),
    )
}

pub fn markov_policy_file(model: &ModelSpec, phi: &MarkovPolicyGrid) -> PolicyFile {
    let grid = phi.grid();
    let decisions = (0..grid.cells)
        .map(|k| {
            (0..model.n_states())
                .map(|z| (model.state_name(z).to_string(), action_spec(model, phi.cell_action(k, z))))
                .collect()
        })
        .collect();
    PolicyFile::Markov {
        grid: GridSpec {
            h: grid.step,
            k: grid.cells,
        },
        decisions,
    }
}

pub fn finite_memory_policy_file(model: &ModelSpec, fm: &FiniteMemoryPolicy) -> PolicyFile {
    let ns = model.n_states();
    let grid = fm.grid();
    let names = fm.memory_names();
    let mut update = Vec::new();
    for m in 0..fm.n_memory() {
        for from in 0..ns {
            for to in 0..ns {
                let next = fm.update(m, from, to);
                if next != m {
                    update.push(UpdateRule {
                        memory: Label(names[m].clone()),
                        from: Label(model.state_name(from).to_string()),
                        to: Label(model.state_name(to).to_string()),
                        next: Label(names[next].clone()),
                    });
                }
            }
        }
    }
    let decision = (0..grid.cells)
        .map(|k| {
            (0..ns)
                .map(|z| {
                    let by_memory = (0..fm.n_memory())
                        .map(|m| (names[m].clone(), action_spec(model, fm.cell_decision(k, z, m))))
                        .collect();
                    (model.state_name(z).to_string(), by_memory)
                })
                .collect()
        })
        .collect();
    PolicyFile::FiniteMemory {
        grid: GridSpec {
            h: grid.step,
            k: grid.cells,
        },
        memory_states: names.iter().map(|n| Label(n.clone())).collect(),
        initial_memory: Label(names[fm.initial_memory()].clone()),
        update,
        decision,
    }
}

/// CSV text from a header and rows of already formatted fields.
pub fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use ctjmdp_core::catalog;

    #[test]
    fn policies_round_trip() {
        let m = catalog::figure_two();
        let fm = catalog::parity_policy(&m);
        let file = finite_memory_policy_file(&m, &fm);
        let text = json_string(&file);
        let back: PolicyFile = serde_json::from_str(&text).unwrap();
        match policy_from_file(&back, &m).unwrap() {
            Policy::FiniteMemory(p) => assert_eq!(p, fm),
            _ => panic!("wrong policy type"),
        }
        let r = catalog::random_model(2, 4, 3);
        let phi = catalog::random_markov_policy(&r, 9);
        let back: PolicyFile = serde_json::from_str(&json_string(&markov_policy_file(&r, &phi))).unwrap();
        match policy_from_file(&back, &r).unwrap() {
            Policy::Markov(p) => assert_eq!(p, phi),
            _ => panic!("wrong policy type"),
        }
    }

    #[test]
    fn wildcard_updates_and_broadcast_cells() {
        let m = catalog::figure_two();
        let text = r#"{
            "type": "finite_memory",
            "grid": {"h": 1.0, "K": 3},
            "memory_states": ["even", "odd"],
            "initial_memory": "even",
            "update": [
                {"memory": "even", "from": "*", "to": "2", "next": "odd"},
                {"memory": "odd", "from": "*", "to": "2", "next": "even"}
            ],
            "decision": [{"1": {"even": "b", "odd": "b"}, "2": {"even": "b", "odd": {"c": 1.0}}}]
        }"#;
        let file: PolicyFile = serde_json::from_str(text).unwrap();
        let Policy::FiniteMemory(p) = policy_from_file(&file, &m).unwrap() else {
            panic!("wrong policy type")
        };
        let parity = catalog::parity_policy(&m);
        for (from, to) in [(0, 1), (1, 0)] {
            for mem in 0..2 {
                assert_eq!(p.update(mem, from, to), parity.update(mem, from, to));
            }
        }
        assert_eq!(p.cell_decision(2, 1, 1), &[0.0, 1.0]);
    }

    #[test]
    fn gamma_by_name() {
        let m = catalog::figure_two();
        let g: GammaFile = serde_json::from_str(r#"{"2": 1.0}"#).unwrap();
        assert_eq!(gamma_from_file(&g, &m).unwrap(), vec![0.0, 1.0]);
        let bad: GammaFile = serde_json::from_str("[0.5, 0.4]").unwrap();
        assert!(gamma_from_file(&bad, &m).is_err());
    }
}
