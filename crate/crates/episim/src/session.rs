//! Pipeline orchestration shared by the batch CLI and the interactive shell:
//! loading and merging model files, resolving the population and contact
//! graph, running the engines, and writing output files.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::diag::Diagnostic;
use crate::dsl::{
    merge_specs, parse_fragment, ContactsSource, ModelSpec, PopulationSource, SpecFragment,
};
use crate::emit::{emit_program, EmitMode};
use crate::engine::{exact_marginals_with, run_many, MarginalTable, Trajectory, DEFAULT_COIN_CAP};
use crate::ground::{ground, GroundedModel};
use crate::plot::{render_plot, PlotStyle};
use crate::population::{generate_contacts, load_contacts, load_individuals, TemporalContactGraph};
use crate::report::{aggregate, AggregateMode};

#[derive(Debug, Error)]
pub enum PipelineError {
    /// Model-file problems; printed one per line. Exit code 1.
    #[error("{}", format_diagnostics(.0))]
    Diagnostics(Vec<Diagnostic>),
    /// Anything else wrong with the model, data, or query. Exit code 1.
    #[error("{0}")]
    Validation(String),
    /// Filesystem failure. Exit code 2.
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn format_diagnostics(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("\n")
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Diagnostics(_) | PipelineError::Validation(_) => 1,
            PipelineError::Io { .. } => 2,
        }
    }

    fn validation(err: impl ToString) -> PipelineError {
        PipelineError::Validation(err.to_string())
    }
}

fn read_file(path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parse a model or defaults file strictly; warnings come back alongside.
pub fn load_fragment_file(path: &Path) -> Result<(SpecFragment, Vec<Diagnostic>), PipelineError> {
    let text = read_file(path)?;
    let (fragment, diagnostics) = parse_fragment(&text);
    if crate::diag::has_errors(&diagnostics) {
        return Err(PipelineError::Diagnostics(diagnostics));
    }
    Ok((fragment, diagnostics))
}

/// Overlay a fragment's set fields onto an existing spec, revalidating.
pub fn apply_fragment(spec: &ModelSpec, frag: &SpecFragment) -> Result<ModelSpec, PipelineError> {
    let mut next = spec.clone();
    if let Some(v) = &frag.disease_name {
        next.disease_name = v.clone();
    }
    if let Some(v) = frag.transmission_prob {
        next.transmission_prob = v;
    }
    if let Some(v) = frag.external_prob {
        next.external_prob = v;
    }
    if let Some(v) = frag.infectious_period {
        next.infectious_period = v;
    }
    if let Some(v) = frag.persistence_prob {
        next.persistence_prob = v;
    }
    if let Some(v) = frag.immunity_prob {
        next.immunity_prob = v;
    }
    if let Some(v) = frag.immunity_period {
        next.immunity_period = v;
    }
    if let Some(v) = frag.horizon {
        next.horizon = v;
    }
    if let Some(v) = frag.runs {
        next.runs = v;
    }
    if let Some(v) = frag.seed {
        next.seed = v;
    }
    if let Some(v) = &frag.initial_infected {
        next.initial_infected = v.clone();
    }
    if let Some(v) = &frag.population_source {
        next.population_source = v.clone();
    }
    if let Some(v) = &frag.contacts_source {
        next.contacts_source = v.clone();
    }
    if let Some(v) = frag.contacts_undirected {
        next.contacts_undirected = v;
    }
    if let Some(v) = &frag.queries {
        next.queries = v.clone();
    }
    next.validate().map_err(PipelineError::validation)?;
    Ok(next)
}

/// A live modelling session: the current spec plus cached compilation and
/// simulation results. Mutations that succeed invalidate the caches;
/// mutations that fail leave the session unchanged.
pub struct Session {
    spec: ModelSpec,
    defaults_fragment: SpecFragment,
    model_fragment: SpecFragment,
    pub out_dir: PathBuf,
    graph: Option<TemporalContactGraph>,
    trajectories: Option<Vec<Trajectory>>,
    pub warnings: Vec<Diagnostic>,
}

impl Default for Session {
    fn default() -> Self {
        Session::new()
    }
}

impl Session {
    pub fn new() -> Session {
        Session {
            spec: ModelSpec::built_in_defaults(),
            defaults_fragment: SpecFragment::default(),
            model_fragment: SpecFragment::default(),
            out_dir: PathBuf::from("out"),
            graph: None,
            trajectories: None,
            warnings: Vec::new(),
        }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn trajectories(&self) -> Option<&[Trajectory]> {
        self.trajectories.as_deref()
    }

    fn invalidate(&mut self) {
        self.graph = None;
        self.trajectories = None;
    }

    fn remerge(&mut self) -> Result<(), PipelineError> {
        self.spec = merge_specs(&self.defaults_fragment, &self.model_fragment)
            .map_err(PipelineError::validation)?;
        self.invalidate();
        Ok(())
    }

    pub fn load_model(&mut self, path: &Path) -> Result<Vec<Diagnostic>, PipelineError> {
        let (fragment, warnings) = load_fragment_file(path)?;
        let previous = std::mem::replace(&mut self.model_fragment, fragment);
        if let Err(err) = self.remerge() {
            self.model_fragment = previous;
            return Err(err);
        }
        self.warnings.clone_from(&warnings);
        Ok(warnings)
    }

    pub fn load_defaults(&mut self, path: &Path) -> Result<Vec<Diagnostic>, PipelineError> {
        let (fragment, warnings) = load_fragment_file(path)?;
        let previous = std::mem::replace(&mut self.defaults_fragment, fragment);
        if let Err(err) = self.remerge() {
            self.defaults_fragment = previous;
            return Err(err);
        }
        Ok(warnings)
    }

    /// Apply one DSL statement (or a whole override fragment) on top of the
    /// current spec. Invalid input leaves the session unchanged.
    pub fn apply_override(&mut self, frag: &SpecFragment) -> Result<(), PipelineError> {
        self.spec = apply_fragment(&self.spec, frag)?;
        self.invalidate();
        Ok(())
    }

    /// Resolve the population and contact graph per the spec's sources,
    /// caching the result.
    pub fn resolve_graph(&mut self) -> Result<&TemporalContactGraph, PipelineError> {
        if self.graph.is_none() {
            let spec = &self.spec;
            let (individuals, mut warnings) = match &spec.population_source {
                PopulationSource::File(path) => {
                    let text = read_file(Path::new(path))?;
                    load_individuals(&text).map_err(PipelineError::validation)?
                }
                PopulationSource::Random(n) => {
                    let ids: Vec<String> = (1..=*n).map(|i| format!("p{i}")).collect();
                    (ids, Vec::new())
                }
            };
            let events = match &spec.contacts_source {
                ContactsSource::File(path) => {
                    let text = read_file(Path::new(path))?;
                    let (events, contact_warnings) =
                        load_contacts(&text, &individuals, spec.contacts_undirected, spec.horizon)
                            .map_err(PipelineError::validation)?;
                    warnings.extend(contact_warnings);
                    events
                }
                ContactsSource::Random { edge_prob, regime } => {
                    let mut sorted = individuals.clone();
                    sorted.sort();
                    generate_contacts(&sorted, *edge_prob, *regime, spec.horizon, spec.seed)
                }
            };
            let graph = TemporalContactGraph::new(individuals, events)
                .map_err(PipelineError::validation)?;
            self.warnings.extend(warnings);
            self.graph = Some(graph);
        }
        Ok(self.graph.as_ref().unwrap())
    }

    pub fn compile(&mut self) -> Result<GroundedModel, PipelineError> {
        self.resolve_graph()?;
        let graph = self.graph.as_ref().unwrap();
        ground(&self.spec, graph).map_err(PipelineError::validation)
    }

    /// Emit the program text, validating the model first.
    pub fn emit(&mut self, mode: EmitMode) -> Result<String, PipelineError> {
        self.compile()?;
        let graph = self.graph.as_ref().unwrap();
        Ok(emit_program(&self.spec, graph, mode))
    }

    /// Simulate all configured runs, caching the trajectories.
    pub fn run(&mut self, concurrent: bool) -> Result<&[Trajectory], PipelineError> {
        let model = self.compile()?;
        let trajectories = run_many(&model, self.spec.runs, self.spec.seed, concurrent);
        self.trajectories = Some(trajectories);
        Ok(self.trajectories.as_deref().unwrap())
    }

    /// Exact marginals of the current model.
    pub fn exact(&mut self, cap: usize) -> Result<MarginalTable, PipelineError> {
        let model = self.compile()?;
        exact_marginals_with(&model, cap, false).map_err(PipelineError::validation)
    }

    /// Default-cap convenience used by the shell.
    pub fn exact_default(&mut self) -> Result<MarginalTable, PipelineError> {
        self.exact(DEFAULT_COIN_CAP)
    }
}

/// What `run` should leave on disk besides the per-run and aggregate CSVs.
#[derive(Debug, Clone, Default)]
pub struct OutputRequest {
    pub plot: Option<PlotStyle>,
    pub emit: Option<EmitMode>,
}

/// Write `run_<k>.csv` per run, `aggregate.csv` (mean across runs), and the
/// requested plot and program files into `out_dir`. Returns the paths
/// written, in order.
pub fn write_outputs(
    session: &mut Session,
    out_dir: &Path,
    request: &OutputRequest,
) -> Result<Vec<PathBuf>, PipelineError> {
    let trajectories = session
        .trajectories()
        .ok_or_else(|| PipelineError::Validation("no simulation results; run first".into()))?
        .to_vec();
    fs::create_dir_all(out_dir).map_err(|source| PipelineError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    let write = |path: &Path, contents: &str| -> Result<(), PipelineError> {
        fs::write(path, contents).map_err(|source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })
    };

    for traj in &trajectories {
        let table = aggregate(std::slice::from_ref(traj), AggregateMode::Single)
            .map_err(PipelineError::validation)?;
        let path = out_dir.join(format!("run_{}.csv", traj.run_index));
        write(&path, &table.to_csv())?;
        written.push(path);
    }

    let mean = aggregate(&trajectories, AggregateMode::Mean).map_err(PipelineError::validation)?;
    let path = out_dir.join("aggregate.csv");
    write(&path, &mean.to_csv())?;
    written.push(path);

    if let Some(style) = request.plot {
        let table = if trajectories.len() == 1 {
            aggregate(&trajectories, AggregateMode::Single).map_err(PipelineError::validation)?
        } else {
            aggregate(&trajectories, AggregateMode::Stacked).map_err(PipelineError::validation)?
        };
        let path = out_dir.join("plot.svg");
        let queries = session.spec().queries.clone();
        render_plot(&table, style, &queries, &path).map_err(PipelineError::validation)?;
        written.push(path);
    }

    if let Some(mode) = request.emit {
        let text = session.emit(mode)?;
        let path = out_dir.join("model.pl");
        write(&path, &text)?;
        written.push(path);
    }

    Ok(written)
}

/// Render a marginal table as CSV with a method comment line.
pub fn marginals_csv(table: &MarginalTable) -> String {
    let method = match table.method {
        crate::engine::MarginalMethod::Exact => "exact".to_string(),
        crate::engine::MarginalMethod::MonteCarlo { runs } => {
            format!("monte-carlo runs={runs}")
        }
    };
    let mut out = format!("# method: {method}\ncompartment,individual,time,probability\n");
    for (c, x, t, p) in table.iter() {
        out.push_str(&format!("{},{},{},{}\n", c, table.individuals[x], t, p));
    }
    out
}
