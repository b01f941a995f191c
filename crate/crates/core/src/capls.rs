//! Unsupervised adaptation with confidence-aware pseudo-label selection.
//!
//! An initial projection is learned from labelled source data alone and every target
//! instance is pseudo-labelled by nearest class mean. At iteration `t` of `T`, each
//! class contributes the `ceil(t/T · n_c)` target instances it is most confident about
//! (out of the `n_c` currently pseudo-labelled as that class); the projection is relearned
//! on source plus that selection, and all targets are re-labelled.
//!
//! Class prototypes come from source rows only. The centring mean pools all source and
//! all target rows.

use serde::{Deserialize, Serialize};

use crate::eval::{lda_projection, per_image_accuracy};
use crate::linalg::SolverConfig;
use crate::preprocess::{l2_normalize_rows, FeatureMatrix};
use crate::slpp::{effective_dim, learn_projection_with, LabeledDataset, ProjectionMatrix, SlppConfig, DEFAULT_DIM};
use crate::subspace::{fit_model, predict_with_temperature, ConfidenceTable, SubspaceModel};
use crate::{Error, Real, Result};

pub const DEFAULT_ITERATIONS: usize = 20;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionKind {
    #[default]
    Slpp,
    Lda,
}

impl std::fmt::Display for ProjectionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ProjectionKind::Slpp => "slpp",
            ProjectionKind::Lda => "lda",
        })
    }
}

impl ProjectionKind {
    /// Learns a projection of (at most) `d_sub` columns.
    pub fn learn<T: Real>(
        self,
        data: &LabeledDataset<T>,
        d_sub: usize,
        cfg: &SlppConfig,
    ) -> Result<ProjectionMatrix<T>> {
        match self {
            ProjectionKind::Slpp => learn_projection_with(data, d_sub, cfg),
            ProjectionKind::Lda => lda_projection(data, d_sub, cfg),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UdaConfig {
    pub d_sub: usize,
    pub t_max: usize,
    pub projection: ProjectionKind,
    pub ridge: f64,
    pub temperature: f64,
    pub solver: SolverConfig,
}

impl Default for UdaConfig {
    fn default() -> Self {
        Self {
            d_sub: DEFAULT_DIM,
            t_max: DEFAULT_ITERATIONS,
            projection: ProjectionKind::Slpp,
            ridge: 1.0,
            temperature: 1.0,
            solver: SolverConfig::default(),
        }
    }
}

impl UdaConfig {
    fn slpp(&self) -> SlppConfig {
        SlppConfig {
            ridge: self.ridge,
            solver: self.solver,
        }
    }
}

/// Per-class quota `ceil(fraction · n)`, at least one for a non-empty pool.
pub fn class_quota(pool: usize, fraction: f64) -> usize {
    if pool == 0 {
        return 0;
    }
    ((fraction * pool as f64).ceil() as usize).clamp(1, pool)
}

/// Exact integer form of [`class_quota`] for `fraction = t / t_max`.
pub fn iteration_quota(pool: usize, t: usize, t_max: usize) -> usize {
    if pool == 0 {
        return 0;
    }
    (t * pool).div_ceil(t_max).clamp(1, pool)
}

/// Class-wise top-fraction selection of `(row, pseudo-label)` pairs.
///
/// Members of each predicted class are ranked by their probability for that class,
/// ties going to the lower row index. The result is ordered by class, then rank.
pub fn select_confident<T: Real>(q: &ConfidenceTable<T>, fraction: f64) -> Vec<(usize, usize)> {
    select_with_quota(q, |pool| class_quota(pool, fraction))
}

pub fn select_for_iteration<T: Real>(q: &ConfidenceTable<T>, t: usize, t_max: usize) -> Vec<(usize, usize)> {
    select_with_quota(q, |pool| iteration_quota(pool, t, t_max))
}

fn select_with_quota<T: Real>(
    q: &ConfidenceTable<T>,
    quota: impl Fn(usize) -> usize,
) -> Vec<(usize, usize)> {
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); q.n_classes()];
    for (i, &c) in q.predicted.iter().enumerate() {
        pools[c].push(i);
    }
    let mut selected = Vec::new();
    for (c, mut members) in pools.into_iter().enumerate() {
        // rows are pushed in increasing order, so a stable sort breaks ties by index
        members.sort_by(|&a, &b| {
            q.q[[b, c]]
                .partial_cmp(&q.q[[a, c]])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let take = quota(members.len());
        selected.extend(members.into_iter().take(take).map(|i| (i, c)));
    }
    selected
}

/// One trace entry. Entry 0 describes the source-only initialisation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: usize,
    pub fraction: f64,
    /// Target instances pseudo-labelled as each class when the selection was made.
    pub pool_sizes: Vec<usize>,
    pub selected_per_class: Vec<usize>,
    pub selected_total: usize,
    /// Classes with no pseudo-labelled target instance at selection time.
    pub empty_classes: Vec<usize>,
    /// Target accuracy after this step's re-labelling (evaluation only).
    pub accuracy: Option<f64>,
}

/// Loop state after `t` completed iterations.
#[derive(Clone, Debug)]
pub struct IterationState<T> {
    pub t: usize,
    pub selected: Vec<(usize, usize)>,
    pub model: SubspaceModel<T>,
    pub confidences: ConfidenceTable<T>,
    pub trace: Vec<IterationRecord>,
}

#[derive(Clone, Debug)]
pub struct UdaOutcome<T> {
    pub model: SubspaceModel<T>,
    pub predicted: Vec<usize>,
    /// Predictions of the source-only projection (the no-adaptation baseline).
    pub initial_predicted: Vec<usize>,
    pub trace: Vec<IterationRecord>,
    pub selected: Vec<(usize, usize)>,
    pub effective_dim: usize,
}

/// Runs the adaptation loop for `cfg.t_max` iterations.
///
/// Both inputs are l2-normalised internally. `truth`, when given, is only used to fill
/// the accuracy column of the trace.
pub fn run_uda<T: Real>(
    source: &LabeledDataset<T>,
    target: &FeatureMatrix<T>,
    cfg: &UdaConfig,
    truth: Option<&[usize]>,
) -> Result<UdaOutcome<T>> {
    let mut run = UdaRun::new(source, target, cfg, truth)?;
    let mut state = run.initialize()?;
    while state.t < cfg.t_max {
        run.advance(&mut state)?;
    }
    Ok(UdaOutcome {
        predicted: state.confidences.predicted.clone(),
        initial_predicted: run.initial_predicted.clone(),
        model: state.model,
        trace: state.trace,
        selected: state.selected,
        effective_dim: run.d_sub,
    })
}

/// Stepwise driver behind [`run_uda`].
pub struct UdaRun<'a, T> {
    source: LabeledDataset<T>,
    target: FeatureMatrix<T>,
    cfg: &'a UdaConfig,
    truth: Option<&'a [usize]>,
    d_sub: usize,
    initial_predicted: Vec<usize>,
}

impl<'a, T: Real> UdaRun<'a, T> {
    pub fn new(
        source: &LabeledDataset<T>,
        target: &FeatureMatrix<T>,
        cfg: &'a UdaConfig,
        truth: Option<&'a [usize]>,
    ) -> Result<Self> {
        if cfg.d_sub == 0 || cfg.t_max == 0 {
            return Err(Error::Config(format!(
                "d_sub and t_max must be positive, got {} and {}",
                cfg.d_sub, cfg.t_max
            )));
        }
        if source.features().cols() != target.cols() {
            return Err(Error::DimensionMismatch {
                expected: source.features().cols(),
                found: target.cols(),
            });
        }
        if let Some(truth) = truth {
            if truth.len() != target.rows() {
                return Err(Error::LengthMismatch {
                    left: target.rows(),
                    right: truth.len(),
                });
            }
        }
        let source = source.with_features(l2_normalize_rows(source.features())?)?;
        let target = l2_normalize_rows(target)?;
        let d_in = target.cols();
        let mut d_sub = effective_dim(cfg.d_sub, d_in, source.len());
        if cfg.projection == ProjectionKind::Lda {
            let present = source.class_counts().iter().filter(|&&c| c > 0).count();
            d_sub = d_sub.min(present.saturating_sub(1)).max(1);
        }
        Ok(Self {
            source,
            target,
            cfg,
            truth,
            d_sub,
            initial_predicted: Vec::new(),
        })
    }

    pub fn effective_dim(&self) -> usize {
        self.d_sub
    }

    fn fit_and_predict(&self, train: &LabeledDataset<T>) -> Result<(SubspaceModel<T>, ConfidenceTable<T>)> {
        let p = self.cfg.projection.learn(train, self.d_sub, &self.cfg.slpp())?;
        let model = fit_model(&p, &self.source, &[self.source.features(), &self.target])?;
        let q = predict_with_temperature(&model, &self.target, self.cfg.temperature)?;
        Ok((model, q))
    }

    fn accuracy(&self, predicted: &[usize]) -> Result<Option<f64>> {
        self.truth.map(|t| per_image_accuracy(predicted, t)).transpose()
    }

    /// Source-only projection and the first round of pseudo-labels.
    pub fn initialize(&mut self) -> Result<IterationState<T>> {
        let (model, confidences) = self.fit_and_predict(&self.source)?;
        self.initial_predicted = confidences.predicted.clone();
        let pool_sizes = histogram(&confidences.predicted, self.source.n_classes());
        let record = IterationRecord {
            t: 0,
            fraction: 0.0,
            empty_classes: empty(&pool_sizes),
            selected_per_class: vec![0; pool_sizes.len()],
            pool_sizes,
            selected_total: 0,
            accuracy: self.accuracy(&confidences.predicted)?,
        };
        Ok(IterationState {
            t: 0,
            selected: Vec::new(),
            model,
            confidences,
            trace: vec![record],
        })
    }

    /// One selection / refit / re-label round.
    pub fn advance(&self, state: &mut IterationState<T>) -> Result<()> {
        let t = state.t + 1;
        let t_max = self.cfg.t_max;
        let n_classes = self.source.n_classes();
        let selected = select_for_iteration(&state.confidences, t, t_max);
        let pool_sizes = histogram(&state.confidences.predicted, n_classes);

        let rows: Vec<usize> = selected.iter().map(|&(i, _)| i).collect();
        let labels: Vec<usize> = selected.iter().map(|&(_, c)| c).collect();
        let train = if rows.is_empty() {
            self.source.clone()
        } else {
            let pseudo = LabeledDataset::new(self.target.select(&rows)?, labels.clone(), n_classes)?;
            self.source.concat(&pseudo)?
        };
        let (model, confidences) = self.fit_and_predict(&train)?;

        let selected_per_class = histogram(&labels, n_classes);
        state.trace.push(IterationRecord {
            t,
            fraction: t as f64 / t_max as f64,
            empty_classes: empty(&pool_sizes),
            pool_sizes,
            selected_total: selected.len(),
            selected_per_class,
            accuracy: self.accuracy(&confidences.predicted)?,
        });
        state.t = t;
        state.selected = selected;
        state.model = model;
        state.confidences = confidences;
        Ok(())
    }
}

fn histogram(labels: &[usize], n_classes: usize) -> Vec<usize> {
    let mut h = vec![0; n_classes];
    for &l in labels {
        h[l] += 1;
    }
    h
}

fn empty(counts: &[usize]) -> Vec<usize> {
    counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c == 0)
        .map(|(i, _)| i)
        .collect()
}
