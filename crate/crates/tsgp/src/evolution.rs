//! The evolutionary loop: per-fold fitness vectors, Pareto tournament
//! parent selection, typed crossover and mutation, elitism, and the
//! generation driver.
//!
//! Every random decision flows from the run seed. Fitness evaluation draws
//! no randomness at all (classifier seeds are derived from the run seed,
//! the fold index, and a stable hash of the serialized tree), so evaluating
//! individuals in parallel is bit-identical to sequential execution.

use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{accuracy, fit_extra_trees, ExtraTreesModel};
use crate::dataset::{stratified_kfold, Dataset, FoldPlan};
use crate::error::{Error, Result};
use crate::program::generate;
use crate::program::{
    self, doc_to_node, node_to_doc, position_requirement, render_tree, transform_dataset, MetaDoc,
    NodeDoc, Op, PositionReq, ProgramTree, TreeNode, TypeTag,
};
use crate::util::{derive_seed, fnv1a64, sample_without_replacement};

/// Logical sub-seed streams of one run.
const STREAM_FOLDS: u64 = 1;
const STREAM_EVOLUTION: u64 = 2;
const STREAM_FINAL_FIT: u64 = 3;

/// The k per-fold validation accuracies of one individual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessVector {
    pub per_fold: Vec<f64>,
    pub mean: f64,
}

impl FitnessVector {
    pub fn new(per_fold: Vec<f64>) -> FitnessVector {
        let mean = per_fold.iter().sum::<f64>() / per_fold.len().max(1) as f64;
        FitnessVector { per_fold, mean }
    }

    /// The all-zero vector assigned to individuals whose evaluation failed.
    pub fn zero(k: usize) -> FitnessVector {
        FitnessVector { per_fold: vec![0.0; k], mean: 0.0 }
    }
}

/// True iff `a` is no worse than `b` on every fold and strictly better on
/// at least one.
pub fn dominates(a: &FitnessVector, b: &FitnessVector) -> bool {
    debug_assert_eq!(a.per_fold.len(), b.per_fold.len());
    let mut strictly_better = false;
    for (x, y) in a.per_fold.iter().zip(&b.per_fold) {
        if x < y {
            return false;
        }
        if x > y {
            strictly_better = true;
        }
    }
    strictly_better
}

/// Parent selection strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    /// Tailored Pareto tournament over the per-fold accuracies.
    Pareto,
    /// Standard tournament on the scalar mean accuracy.
    Scalar,
}

/// Run configuration. Defaults: population 100, 50 generations, crossover
/// 0.8 / mutation 0.19 / elitism 0.01, depths 2..6, 5 folds, 10 fitness
/// trees, 100 final trees, tournament ratio 7%.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvoConfig {
    pub population_size: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub elitism_rate: f64,
    pub depth_min: usize,
    pub depth_max: usize,
    pub folds: usize,
    pub fitness_trees: usize,
    pub final_trees: usize,
    /// Tournament ratio μ in percent of the population.
    pub tournament_mu: f64,
    pub selection: Selection,
    pub seed: u64,
}

impl Default for EvoConfig {
    fn default() -> EvoConfig {
        EvoConfig {
            population_size: 100,
            generations: 50,
            crossover_rate: 0.8,
            mutation_rate: 0.19,
            elitism_rate: 0.01,
            depth_min: program::DEPTH_MIN,
            depth_max: program::DEPTH_MAX,
            folds: 5,
            fitness_trees: 10,
            final_trees: 100,
            tournament_mu: 7.0,
            selection: Selection::Pareto,
            seed: 0,
        }
    }
}

impl EvoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.population_size < 2 {
            return bad(format!("population size must be >= 2, got {}", self.population_size));
        }
        if self.generations == 0 {
            return bad("generation count must be positive".into());
        }
        let rate_sum = self.crossover_rate + self.mutation_rate + self.elitism_rate;
        if (rate_sum - 1.0).abs() > 1e-9 {
            return bad(format!("crossover+mutation+elitism rates must sum to 1, got {rate_sum}"));
        }
        if self.crossover_rate < 0.0 || self.mutation_rate < 0.0 || self.elitism_rate < 0.0 {
            return bad("rates must be nonnegative".into());
        }
        if !(program::DEPTH_MIN <= self.depth_min
            && self.depth_min <= self.depth_max
            && self.depth_max <= program::DEPTH_MAX)
        {
            return bad(format!(
                "depth bounds {}..{} outside {}..{}",
                self.depth_min,
                self.depth_max,
                program::DEPTH_MIN,
                program::DEPTH_MAX
            ));
        }
        if self.folds < 2 {
            return bad(format!("fold count must be >= 2, got {}", self.folds));
        }
        if self.fitness_trees == 0 || self.final_trees == 0 {
            return bad("tree counts must be positive".into());
        }
        if !(self.tournament_mu > 0.0 && self.tournament_mu <= 100.0) {
            return bad(format!(
                "tournament ratio must lie in (0, 100], got {}",
                self.tournament_mu
            ));
        }
        Ok(())
    }

    pub(crate) fn offspring_counts(&self) -> OffspringCounts {
        let m = self.population_size;
        let elites = ((self.elitism_rate * m as f64).ceil() as usize).min(m);
        let mutation = ((self.mutation_rate * m as f64).floor() as usize).min(m - elites);
        // Fractional remainders go to crossover.
        let crossover = m - elites - mutation;
        OffspringCounts { elites, crossover, mutation }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct OffspringCounts {
    pub elites: usize,
    pub crossover: usize,
    pub mutation: usize,
}

/// One row of the per-generation run log.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best_mean_fitness: f64,
    pub mean_mean_fitness: f64,
    pub best_tree_size: usize,
    pub evaluations_cached: usize,
}

/// Renders the run log as CSV.
pub fn history_csv(history: &[GenerationRecord]) -> String {
    let mut out = String::from(
        "generation,best_mean_fitness,mean_mean_fitness,best_tree_size,evaluations_cached\n",
    );
    for r in history {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.generation,
            r.best_mean_fitness,
            r.mean_mean_fitness,
            r.best_tree_size,
            r.evaluations_cached
        ));
    }
    out
}

/// Evaluates one tree: k-fold cross-validation accuracy of an extra-trees
/// classifier on the transformed training set.
pub fn fitness_of_tree(
    t: &ProgramTree,
    d: &Dataset,
    plan: &FoldPlan,
    fitness_trees: usize,
    seed: u64,
) -> Result<FitnessVector> {
    let features = transform_dataset(t, d)?;
    let tree_hash = fnv1a64(render_tree(t).as_bytes());
    let mut per_fold = Vec::with_capacity(plan.k());
    for (j, fold) in plan.folds.iter().enumerate() {
        let train = features.select(&fold.train);
        let validation = features.select(&fold.validation);
        let et_seed = derive_seed(derive_seed(seed, j as u64), tree_hash);
        let model = fit_extra_trees(&train, d.n_classes(), fitness_trees, et_seed)?;
        per_fold.push(accuracy(&model.predict(&validation), validation.labels()));
    }
    Ok(FitnessVector::new(per_fold))
}

/// The members of `sample` not dominated by any other member, in sample
/// order.
pub fn non_dominated_subset(sample: &[usize], fitness: &[FitnessVector]) -> Vec<usize> {
    sample
        .iter()
        .copied()
        .filter(|&i| !sample.iter().any(|&j| j != i && dominates(&fitness[j], &fitness[i])))
        .collect()
}

/// Tailored Pareto tournament parent selection: repeatedly sample a
/// tournament of `n_t` distinct individuals, add its whole non-dominated
/// subset to the pool, and return the first `n_parents` pool entries.
pub fn pareto_tournament_select<R: Rng>(
    fitness: &[FitnessVector],
    mu_percent: f64,
    n_parents: usize,
    rng: &mut R,
) -> Vec<usize> {
    let m = fitness.len();
    assert!(m > 0, "empty population");
    let n_t = ((mu_percent * m as f64 / 100.0).ceil() as usize).clamp(1, m);
    let mut pool = Vec::with_capacity(n_parents);
    while pool.len() < n_parents {
        let sample = sample_without_replacement(rng, m, n_t);
        pool.extend(non_dominated_subset(&sample, fitness));
    }
    pool.truncate(n_parents);
    pool
}

/// Standard tournament on the scalar mean (the overfitting-ablation
/// selector): one winner per event, ties to the lowest population index.
pub fn scalar_tournament_select<R: Rng>(
    fitness: &[FitnessVector],
    mu_percent: f64,
    n_parents: usize,
    rng: &mut R,
) -> Vec<usize> {
    let m = fitness.len();
    assert!(m > 0, "empty population");
    let n_t = ((mu_percent * m as f64 / 100.0).ceil() as usize).clamp(1, m);
    (0..n_parents)
        .map(|_| {
            sample_without_replacement(rng, m, n_t)
                .into_iter()
                .reduce(|best, i| {
                    if fitness[i].mean > fitness[best].mean
                        || (fitness[i].mean == fitness[best].mean && i < best)
                    {
                        i
                    } else {
                        best
                    }
                })
                .unwrap()
        })
        .collect()
}

/// Terminal kinds match only themselves; data nodes match by type tag.
#[derive(Clone, Copy, PartialEq, Eq)]
enum SwapTarget {
    Data(TypeTag),
    Terminal(Op),
}

fn swap_target(node: &TreeNode) -> SwapTarget {
    match node.op.output_tag() {
        Some(tag) => SwapTarget::Data(tag),
        None => SwapTarget::Terminal(node.op),
    }
}

/// Subtree crossover: picks a non-root node in a copy of `a` (function
/// nodes with probability 0.9, terminals otherwise), a type-compatible node
/// in `b`, and swaps the subtree in. Falls back to a copy of `a` after 10
/// failed attempts.
pub fn crossover<R: Rng>(
    a: &ProgramTree,
    b: &ProgramTree,
    rng: &mut R,
    depth_max: usize,
) -> ProgramTree {
    debug_assert_eq!(a.series_length(), b.series_length());
    let a_paths = a.root().paths();
    let b_paths = b.root().paths();
    for _ in 0..10 {
        let want_function = rng.random::<f64>() < 0.9;
        let mut candidates: Vec<&Vec<usize>> = a_paths
            .iter()
            .filter(|p| !p.is_empty())
            .filter(|p| a.root().get(p).unwrap().op.is_leaf() != want_function)
            .collect();
        if candidates.is_empty() {
            candidates = a_paths.iter().filter(|p| !p.is_empty()).collect();
        }
        let site = candidates[rng.random_range(0..candidates.len())];
        let target = swap_target(a.root().get(site).unwrap());
        let donors: Vec<&Vec<usize>> = b_paths
            .iter()
            .filter(|p| swap_target(b.root().get(p).unwrap()) == target)
            .collect();
        if donors.is_empty() {
            continue;
        }
        let donor = donors[rng.random_range(0..donors.len())];
        let mut root = a.root().clone();
        *root.get_mut(site).unwrap() = b.root().get(donor).unwrap().clone();
        if root.depth() <= depth_max && program::validate_tree(&root, a.series_length()).is_valid()
        {
            return ProgramTree::new_unchecked(root, a.series_length());
        }
    }
    a.clone()
}

/// Re-samples one value terminal from its feasible range. SegDect lengths
/// are re-sampled jointly with their start (the start range depends on the
/// length).
fn perturb_terminal<R: Rng>(root: &mut TreeNode, path: &[usize], series_len: usize, rng: &mut R) {
    let op = root.get(path).unwrap().op;
    let parent_path = &path[..path.len() - 1];
    match op {
        Op::TermTau | Op::TermLambda => {
            let v =
                crate::ops::RATIO_CHOICES[rng.random_range(0..crate::ops::RATIO_CHOICES.len())];
            root.get_mut(path).unwrap().value = Some(program::TermValue::Real(v));
        }
        Op::TermDivisor => {
            let min_patch = match position_requirement(root, parent_path) {
                PositionReq::Data { min_len } => min_len,
                _ => 2,
            };
            let input_len =
                program::shape_of(&root.get(parent_path).unwrap().children[0], series_len)
                    .ok()
                    .and_then(|s| s.segment_len())
                    .unwrap_or(series_len);
            let feasible: Vec<usize> = crate::ops::PATCH_DIVISORS
                .iter()
                .copied()
                .filter(|&v| input_len / v >= min_patch)
                .collect();
            if !feasible.is_empty() {
                let v = feasible[rng.random_range(0..feasible.len())];
                root.get_mut(path).unwrap().value = Some(program::TermValue::Int(v));
            }
        }
        Op::TermLenSeg => {
            let min_len = match position_requirement(root, parent_path) {
                PositionReq::Data { min_len } => min_len.max(1),
                _ => 1,
            };
            if min_len < series_len {
                let len_seg = rng.random_range(min_len..=series_len - 1);
                let start_seg = rng.random_range(1..=series_len - len_seg + 1);
                let parent = root.get_mut(parent_path).unwrap();
                parent.children[1].value = Some(program::TermValue::Int(len_seg));
                parent.children[2].value = Some(program::TermValue::Int(start_seg));
            }
        }
        Op::TermStartSeg => {
            let parent = root.get_mut(parent_path).unwrap();
            let len_seg = parent.children[1].value.and_then(|v| v.as_int()).unwrap_or(1);
            let start_seg = rng.random_range(1..=series_len - len_seg + 1);
            parent.children[2].value = Some(program::TermValue::Int(start_seg));
        }
        _ => {}
    }
}

/// Grows a replacement subtree of the given type tag that satisfies the
/// positional requirement, or None when the budget cannot fit one.
fn regrow_subtree<R: Rng>(
    tag: TypeTag,
    req: PositionReq,
    budget: usize,
    series_len: usize,
    rng: &mut R,
) -> Option<TreeNode> {
    let min_len = match req {
        PositionReq::Data { min_len } => min_len,
        _ => 2,
    };
    match tag {
        TypeTag::SeriesRaw => Some(TreeNode::leaf(Op::InputSeries)),
        TypeTag::SegmentLocated => {
            if budget < 1 || min_len.max(1) > series_len - 1 {
                return None;
            }
            Some(generate::gen_seg_dect_node(rng, min_len, series_len))
        }
        TypeTag::SegmentTransformed => {
            generate::gen_transformed_source(rng, budget, min_len, series_len)
        }
        TypeTag::Patches => {
            if budget < 1 || 2 * min_len > series_len {
                return None;
            }
            Some(generate::gen_patches(rng, budget, min_len, series_len, None))
        }
        TypeTag::Vector => {
            if budget < 1 {
                return None;
            }
            Some(generate::gen_branch(rng, budget, series_len, None))
        }
        TypeTag::Vectors => {
            if budget < 2 {
                return None;
            }
            let plain_only = matches!(req, PositionReq::Vectors { plain_only: true });
            Some(generate::gen_concat(rng, budget, series_len, None, !plain_only))
        }
    }
}

/// Mutation: with equal probability either replaces a uniformly chosen node
/// with a grow-generated subtree of the same type, or re-samples one value
/// terminal from its range.
pub fn mutate<R: Rng>(t: &ProgramTree, rng: &mut R, depth_max: usize) -> ProgramTree {
    let series_len = t.series_length();
    let paths = t.root().paths();
    let mut root = t.root().clone();
    if rng.random::<f64>() < 0.5 {
        // Subtree replacement.
        let data_paths: Vec<&Vec<usize>> = paths
            .iter()
            .filter(|p| root.get(p).unwrap().op.output_tag().is_some())
            .collect();
        let site = data_paths[rng.random_range(0..data_paths.len())].clone();
        let node_tag = root.get(&site).unwrap().op.output_tag().unwrap();
        let req = position_requirement(&root, &site);
        let budget = depth_max - site.len();
        if let Some(subtree) = regrow_subtree(node_tag, req, budget, series_len, rng) {
            *root.get_mut(&site).unwrap() = subtree;
        }
    } else {
        // Terminal perturbation.
        let term_paths: Vec<&Vec<usize>> = paths
            .iter()
            .filter(|p| root.get(p).unwrap().op.is_value_terminal())
            .collect();
        if !term_paths.is_empty() {
            let site = term_paths[rng.random_range(0..term_paths.len())].clone();
            perturb_terminal(&mut root, &site, series_len, rng);
        }
    }
    if root.depth() <= depth_max && program::validate_tree(&root, series_len).is_valid() {
        ProgramTree::new_unchecked(root, series_len)
    } else {
        debug_assert!(
            false,
            "mutation produced an invalid tree: {}",
            program::validate_tree(&root, series_len)
        );
        t.clone()
    }
}

/// The final artifact of a run: the best-of-run tree, its classifier
/// trained on the full training set, and the run records.
#[derive(Debug, Clone)]
pub struct EvolvedModel {
    pub tree: ProgramTree,
    pub classifier: ExtraTreesModel,
    pub fitness: FitnessVector,
    pub history: Vec<GenerationRecord>,
    pub config: EvoConfig,
    pub label_map: Vec<i64>,
    pub dataset_name: String,
}

#[derive(Serialize, Deserialize)]
struct EvolvedModelDoc {
    format_version: u32,
    series_length: usize,
    tree: NodeDoc,
    meta: MetaDoc,
    fitness: FitnessVector,
    config: EvoConfig,
    history: Vec<GenerationRecord>,
    label_map: Vec<i64>,
    classifier: ExtraTreesModel,
}

impl EvolvedModel {
    /// Deterministic creator tag recorded in the model document; wall-clock
    /// provenance lives in the run manifest so re-runs stay byte-identical.
    pub fn created_tag() -> String {
        format!("tsgp {}", env!("CARGO_PKG_VERSION"))
    }

    pub fn to_json(&self) -> String {
        let doc = EvolvedModelDoc {
            format_version: program::FORMAT_VERSION,
            series_length: self.tree.series_length(),
            tree: node_to_doc(self.tree.root()),
            meta: MetaDoc {
                seed: self.config.seed,
                dataset: self.dataset_name.clone(),
                created: Self::created_tag(),
            },
            fitness: self.fitness.clone(),
            config: self.config.clone(),
            history: self.history.clone(),
            label_map: self.label_map.clone(),
            classifier: self.classifier.clone(),
        };
        let mut text = serde_json::to_string_pretty(&doc).expect("model serialization");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<EvolvedModel> {
        let doc: EvolvedModelDoc =
            serde_json::from_str(text).map_err(|e| Error::MalformedModel(e.to_string()))?;
        if doc.format_version != program::FORMAT_VERSION {
            return Err(Error::MalformedModel(format!(
                "unsupported format_version {}",
                doc.format_version
            )));
        }
        let root = doc_to_node(&doc.tree)?;
        let tree = ProgramTree::new(root, doc.series_length)
            .map_err(|e| Error::MalformedModel(e.to_string()))?;
        if doc.classifier.n_features != tree.feature_dim() {
            return Err(Error::MalformedModel(format!(
                "classifier expects {} features, tree produces {}",
                doc.classifier.n_features,
                tree.feature_dim()
            )));
        }
        Ok(EvolvedModel {
            tree,
            classifier: doc.classifier,
            fitness: doc.fitness,
            history: doc.history,
            config: doc.config,
            label_map: doc.label_map,
            dataset_name: doc.meta.dataset,
        })
    }

    /// Maps an original label value to the model's class id.
    pub fn class_of_label(&self, label: i64) -> Result<usize> {
        self.label_map.iter().position(|&l| l == label).ok_or(Error::UnknownLabel(label))
    }
}

struct BestOfRun {
    tree: ProgramTree,
    fitness: FitnessVector,
    nodes: usize,
}

fn consider_best(best: &mut Option<BestOfRun>, tree: &ProgramTree, fitness: &FitnessVector) {
    let nodes = tree.node_count();
    let better = match best {
        None => true,
        Some(b) => {
            fitness.mean > b.fitness.mean || (fitness.mean == b.fitness.mean && nodes < b.nodes)
        }
    };
    if better {
        *best = Some(BestOfRun { tree: tree.clone(), fitness: fitness.clone(), nodes });
    }
}

/// Evaluates a population against the run-scoped fitness cache. Returns the
/// per-individual fitness and the number of cache hits (population size
/// minus fresh evaluations), which is thread-count independent.
fn evaluate_population(
    population: &[ProgramTree],
    d: &Dataset,
    plan: &FoldPlan,
    cfg: &EvoConfig,
    cache: &mut HashMap<String, FitnessVector>,
) -> (Vec<FitnessVector>, usize) {
    let keys: Vec<String> = population.iter().map(render_tree).collect();
    let mut seen = HashSet::new();
    let missing: Vec<(String, &ProgramTree)> = keys
        .iter()
        .zip(population)
        .filter(|(k, _)| !cache.contains_key(*k))
        .filter(|(k, _)| seen.insert((*k).clone()))
        .map(|(k, t)| (k.clone(), t))
        .collect();
    let cached = population.len() - missing.len();
    let fresh: Vec<(String, FitnessVector)> = missing
        .par_iter()
        .map(|(key, tree)| {
            let fv =
                fitness_of_tree(tree, d, plan, cfg.fitness_trees, cfg.seed).unwrap_or_else(|e| {
                    eprintln!("warning: fitness evaluation failed ({e}); assigning zero fitness");
                    FitnessVector::zero(cfg.folds)
                });
            (key.clone(), fv)
        })
        .collect();
    cache.extend(fresh);
    let fitness = keys.iter().map(|k| cache[k].clone()).collect();
    (fitness, cached)
}

/// Index of the generation's best individual: highest mean fitness, ties by
/// fewer tree nodes, then by position.
fn best_index(population: &[ProgramTree], fitness: &[FitnessVector]) -> usize {
    (0..population.len())
        .reduce(|best, i| {
            let (fb, fi) = (&fitness[best], &fitness[i]);
            if fi.mean > fb.mean
                || (fi.mean == fb.mean
                    && population[i].node_count() < population[best].node_count())
            {
                i
            } else {
                best
            }
        })
        .unwrap()
}

fn record_generation(
    generation: usize,
    population: &[ProgramTree],
    fitness: &[FitnessVector],
    cached: usize,
    history: &mut Vec<GenerationRecord>,
    best: &mut Option<BestOfRun>,
) {
    for (t, f) in population.iter().zip(fitness) {
        consider_best(best, t, f);
    }
    let gen_best = best_index(population, fitness);
    let mean_mean = fitness.iter().map(|f| f.mean).sum::<f64>() / fitness.len() as f64;
    history.push(GenerationRecord {
        generation,
        best_mean_fitness: fitness[gen_best].mean,
        mean_mean_fitness: mean_mean,
        best_tree_size: population[gen_best].node_count(),
        evaluations_cached: cached,
    });
}

/// Runs the full evolutionary loop and refits the best-of-run individual on
/// the whole training set.
pub fn evolve(d: &Dataset, cfg: &EvoConfig) -> Result<EvolvedModel> {
    cfg.validate()?;
    if d.series_length() < 4 {
        return Err(Error::InvalidConfig(format!(
            "series length {} is too short to evolve over (need >= 4)",
            d.series_length()
        )));
    }
    let plan = stratified_kfold(d, cfg.folds, derive_seed(cfg.seed, STREAM_FOLDS))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_EVOLUTION));
    let mut cache: HashMap<String, FitnessVector> = HashMap::new();
    let mut history: Vec<GenerationRecord> = Vec::with_capacity(cfg.generations + 1);
    let mut best: Option<BestOfRun> = None;

    let mut population = generate::ramped_half_and_half(
        &mut rng,
        cfg.population_size,
        cfg.depth_min,
        cfg.depth_max,
        d.series_length(),
    )?;
    let (mut fitness, cached) = evaluate_population(&population, d, &plan, cfg, &mut cache);
    record_generation(0, &population, &fitness, cached, &mut history, &mut best);

    let counts = cfg.offspring_counts();
    for generation in 1..=cfg.generations {
        let n_parents = 2 * counts.crossover + counts.mutation;
        let parents = match cfg.selection {
            Selection::Pareto => {
                pareto_tournament_select(&fitness, cfg.tournament_mu, n_parents, &mut rng)
            }
            Selection::Scalar => {
                scalar_tournament_select(&fitness, cfg.tournament_mu, n_parents, &mut rng)
            }
        };

        let mut next = Vec::with_capacity(cfg.population_size);
        let mut elite_order: Vec<usize> = (0..population.len()).collect();
        elite_order.sort_by(|&i, &j| {
            fitness[j]
                .mean
                .partial_cmp(&fitness[i].mean)
                .unwrap()
                .then(population[i].node_count().cmp(&population[j].node_count()))
                .then(i.cmp(&j))
        });
        for &i in elite_order.iter().take(counts.elites) {
            next.push(population[i].clone());
        }
        for i in 0..counts.crossover {
            let a = &population[parents[2 * i]];
            let b = &population[parents[2 * i + 1]];
            next.push(crossover(a, b, &mut rng, cfg.depth_max));
        }
        for j in 0..counts.mutation {
            let p = &population[parents[2 * counts.crossover + j]];
            next.push(mutate(p, &mut rng, cfg.depth_max));
        }
        debug_assert_eq!(next.len(), cfg.population_size);

        population = next;
        let (f, cached) = evaluate_population(&population, d, &plan, cfg, &mut cache);
        fitness = f;
        record_generation(generation, &population, &fitness, cached, &mut history, &mut best);
    }

    let best = best.expect("at least one generation was evaluated");
    let features = transform_dataset(&best.tree, d)?;
    let classifier = fit_extra_trees(
        &features,
        d.n_classes(),
        cfg.final_trees,
        derive_seed(cfg.seed, STREAM_FINAL_FIT),
    )?;
    Ok(EvolvedModel {
        tree: best.tree,
        classifier,
        fitness: best.fitness,
        history,
        config: cfg.clone(),
        label_map: d.label_map().to_vec(),
        dataset_name: d.name().to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::{generate_tree, GenMethod};
    use proptest::prelude::*;

    fn fv(values: &[f64]) -> FitnessVector {
        FitnessVector::new(values.to_vec())
    }

    #[test]
    fn dominance_examples() {
        assert!(dominates(&fv(&[0.8, 0.8]), &fv(&[0.7, 0.8])));
        assert!(!dominates(&fv(&[0.9, 0.5]), &fv(&[0.5, 0.9])));
        assert!(!dominates(&fv(&[0.5, 0.9]), &fv(&[0.9, 0.5])));
        let equal = fv(&[0.6, 0.6]);
        assert!(!dominates(&equal, &equal));
    }

    proptest! {
        #[test]
        fn dominance_is_a_strict_partial_order(
            a in proptest::collection::vec(0.0f64..1.0, 5),
            b in proptest::collection::vec(0.0f64..1.0, 5),
            c in proptest::collection::vec(0.0f64..1.0, 5),
        ) {
            let (a, b, c) = (fv(&a), fv(&b), fv(&c));
            // Irreflexive.
            prop_assert!(!dominates(&a, &a));
            // Antisymmetric.
            prop_assert!(!(dominates(&a, &b) && dominates(&b, &a)));
            // Transitive.
            if dominates(&a, &b) && dominates(&b, &c) {
                prop_assert!(dominates(&a, &c));
            }
        }
    }

    #[test]
    fn tournament_selects_non_dominated_sets() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let pop: Vec<FitnessVector> =
            vec![fv(&[0.9, 0.2]), fv(&[0.2, 0.9]), fv(&[0.1, 0.1])];
        // mu = 100% makes the tournament the whole population: the two
        // incomparable vectors fill the pool; (0.1, 0.1) never appears.
        let parents = pareto_tournament_select(&pop, 100.0, 6, &mut rng);
        assert_eq!(parents.len(), 6);
        assert!(parents.iter().all(|&i| i != 2));

        let pop = vec![fv(&[1.0, 1.0]), fv(&[0.9, 0.2])];
        let parents = pareto_tournament_select(&pop, 100.0, 4, &mut rng);
        assert!(parents.iter().all(|&i| i == 0));
    }

    #[test]
    fn scalar_tournament_picks_best_mean() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let pop = vec![fv(&[0.2, 0.2]), fv(&[0.9, 0.9]), fv(&[0.5, 0.5])];
        let parents = scalar_tournament_select(&pop, 100.0, 5, &mut rng);
        assert!(parents.iter().all(|&i| i == 1));
    }

    #[test]
    fn crossover_products_validate() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        for _ in 0..300 {
            let a = generate_tree(&mut rng, GenMethod::Grow, 6, 40).unwrap();
            let b = generate_tree(&mut rng, GenMethod::Full, 5, 40).unwrap();
            let child = crossover(&a, &b, &mut rng, 6);
            assert!(child.validate().is_valid(), "{}", child.validate());
            assert!(child.depth() <= 6);
        }
    }

    #[test]
    fn crossover_of_identical_parents_validates() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(29);
        for _ in 0..100 {
            let a = generate_tree(&mut rng, GenMethod::Grow, 4, 24).unwrap();
            let child = crossover(&a, &a.clone(), &mut rng, 6);
            assert!(child.validate().is_valid());
        }
    }

    #[test]
    fn mutation_products_validate() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for _ in 0..300 {
            let t = generate_tree(&mut rng, GenMethod::Grow, 6, 40).unwrap();
            let m = mutate(&t, &mut rng, 6);
            assert!(m.validate().is_valid(), "{}", m.validate());
            assert!(m.depth() <= 6);
        }
    }

    #[test]
    fn terminal_perturbation_stays_in_range() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(37);
        let t = crate::program::parse_rendered(
            "FeaCon2(StatisDist(x, τ=0.5), ShapeInc(SegDect(x, 10, 3), λ=0.25))",
            32,
        )
        .unwrap();
        for _ in 0..200 {
            let m = mutate(&t, &mut rng, 6);
            assert!(m.validate().is_valid());
        }
    }

    fn separable_dataset() -> Dataset {
        // Class is a deterministic function of the series minimum (the
        // first StatisDist feature): class 0 sits near -1, class 1 near +1.
        let mut rows = Vec::new();
        for i in 0..20 {
            let class = i % 2;
            let base = if class == 0 { -1.0 } else { 1.0 };
            let jitter = (i as f64) * 0.004;
            rows.push((class as i64, vec![base + jitter; 8]));
        }
        Dataset::from_rows("separable", rows).unwrap()
    }

    #[test]
    fn fitness_of_separable_dataset_is_perfect() {
        let d = separable_dataset();
        let plan = stratified_kfold(&d, 5, 99).unwrap();
        let t = crate::program::parse_rendered(
            "FeaCon2(StatisDist(x, τ=0.5), StatisDist(x, τ=0.5))",
            8,
        )
        .unwrap();
        let f = fitness_of_tree(&t, &d, &plan, 10, 1234).unwrap();
        assert_eq!(f.per_fold.len(), 5);
        assert_eq!(f.per_fold, vec![1.0; 5]);
        assert_eq!(f.mean, 1.0);
    }

    #[test]
    fn fitness_is_deterministic() {
        let d = separable_dataset();
        let plan = stratified_kfold(&d, 5, 7).unwrap();
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let t = generate_tree(&mut rng, GenMethod::Grow, 4, 8).unwrap();
        let a = fitness_of_tree(&t, &d, &plan, 10, 42).unwrap();
        let b = fitness_of_tree(&t, &d, &plan, 10, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let cfg = EvoConfig { generations: 0, ..EvoConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
        let cfg = EvoConfig { crossover_rate: 0.9, ..EvoConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
        let cfg = EvoConfig { tournament_mu: 0.0, ..EvoConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
        assert!(EvoConfig::default().validate().is_ok());
    }

    #[test]
    fn offspring_counts_match_the_documented_split() {
        let cfg = EvoConfig { population_size: 100, ..EvoConfig::default() };
        let c = cfg.offspring_counts();
        assert_eq!((c.elites, c.crossover, c.mutation), (1, 80, 19));
        let cfg = EvoConfig { population_size: 20, ..EvoConfig::default() };
        let c = cfg.offspring_counts();
        assert_eq!((c.elites, c.crossover, c.mutation), (1, 16, 3));
    }

    #[test]
    fn evolve_on_separable_data_is_deterministic_and_monotone() {
        let d = separable_dataset();
        let cfg = EvoConfig {
            population_size: 8,
            generations: 3,
            fitness_trees: 5,
            final_trees: 10,
            seed: 11,
            ..EvoConfig::default()
        };
        let a = evolve(&d, &cfg).unwrap();
        let b = evolve(&d, &cfg).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.history.len(), cfg.generations + 1);
        for w in a.history.windows(2) {
            assert!(w[1].best_mean_fitness >= w[0].best_mean_fitness);
        }
    }

    #[test]
    fn evolved_model_round_trips_through_json() {
        let d = separable_dataset();
        let cfg = EvoConfig {
            population_size: 6,
            generations: 2,
            fitness_trees: 5,
            final_trees: 8,
            seed: 4,
            ..EvoConfig::default()
        };
        let m = evolve(&d, &cfg).unwrap();
        let text = m.to_json();
        let back = EvolvedModel::from_json(&text).unwrap();
        assert_eq!(back.to_json(), text);
        assert_eq!(back.tree.root(), m.tree.root());
        assert_eq!(back.label_map, m.label_map);
    }
}
