//! Rejection sampling of scenes from a compiled scenario.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use scenelang_geometry::{box_corners, box_polygon, boxes_overlap, Sector, Vector};

use crate::error::{Error, Result, Span};
use crate::evaluator::ScenarioModel;
use crate::pruning::{self, PassStats, PruneContext, PruneSet};
use crate::values::{EvalError, Evaluator, Rgn, Value};

pub const DEFAULT_MAX_ITERATIONS: usize = 10_000;

#[derive(Debug, Clone)]
pub struct SamplerConfig {
    pub max_iterations: usize,
    pub prune: PruneSet,
    /// Worker threads; 1 samples on the calling thread.
    pub workers: usize,
    /// Iterations handed to each worker per round.
    pub batch: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { max_iterations: DEFAULT_MAX_ITERATIONS, prune: PruneSet::all(), workers: 1, batch: 32 }
    }
}

#[derive(Debug, Clone)]
pub struct SampledObject {
    pub class: String,
    pub props: BTreeMap<String, Value>,
    pub corners: [Vector; 4],
}

impl SampledObject {
    pub fn scalar(&self, p: &str) -> f64 {
        self.props.get(p).and_then(Value::as_scalar).unwrap_or(f64::NAN)
    }

    pub fn position(&self) -> Vector {
        self.props.get("position").and_then(Value::as_vector).unwrap_or(Vector::new(f64::NAN, f64::NAN))
    }

    pub fn heading(&self) -> f64 {
        self.scalar("heading")
    }
}

/// Concrete values of every object plus the global parameters.
#[derive(Debug, Clone)]
pub struct Scene {
    pub objects: Vec<SampledObject>,
    pub ego: usize,
    pub params: BTreeMap<String, Value>,
}

#[derive(Debug, Clone)]
pub struct Report {
    /// Iterations used, the accepted one included.
    pub iterations: usize,
    /// First failing check of every rejected iteration, most frequent first.
    pub rejections: Vec<(String, usize)>,
    pub pruning: Vec<PassStats>,
    pub elapsed: Duration,
}

impl Report {
    pub fn rejected(&self) -> usize {
        self.rejections.iter().map(|(_, n)| n).sum()
    }
}

pub const CONTAINMENT: &str = "containment";
pub const COLLISION: &str = "collision";
pub const VISIBILITY: &str = "visibility";

enum Outcome {
    Accept(Scene),
    Reject(String),
}

/// A scenario ready to sample, with its sampling regions already pruned.
pub struct Sampler {
    model: Arc<ScenarioModel>,
    config: SamplerConfig,
    contexts: Vec<PruneContext>,
    overrides: HashMap<u64, Rgn>,
    pruning: Vec<PassStats>,
    pool: Option<rayon::ThreadPool>,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Generator for one iteration; depends only on the seed, the scene index
/// and the iteration index.
pub fn iteration_rng(seed: u64, scene: u64, iteration: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(scene)));
    rng.set_stream(iteration);
    rng
}

impl Sampler {
    pub fn new(model: ScenarioModel, config: SamplerConfig) -> Result<Self> {
        Self::from_arc(Arc::new(model), config)
    }

    pub fn from_arc(model: Arc<ScenarioModel>, config: SamplerConfig) -> Result<Self> {
        if config.max_iterations == 0 {
            return Err(Error::sample("the iteration budget must be at least 1", None));
        }
        let contexts = pruning::derive_contexts(&model);
        let pruned = pruning::apply(&contexts, config.prune);
        let pool = if config.workers > 1 {
            let p = rayon::ThreadPoolBuilder::new()
                .num_threads(config.workers)
                .build()
                .map_err(|e| Error::sample(format!("cannot start workers: {e}"), None))?;
            Some(p)
        } else {
            None
        };
        Ok(Sampler { model, config, contexts, overrides: pruned.overrides, pruning: pruned.stats, pool })
    }

    pub fn model(&self) -> &ScenarioModel {
        &self.model
    }

    pub fn contexts(&self) -> &[PruneContext] {
        &self.contexts
    }

    pub fn pruning(&self) -> &[PassStats] {
        &self.pruning
    }

    /// Region a pruned draw now samples from.
    pub fn override_for(&self, node: u64) -> Option<&Rgn> {
        self.overrides.get(&node)
    }

    /// Samples scene number `index` for `seed`. The result does not depend
    /// on the number of workers.
    pub fn sample(&self, seed: u64, index: u64) -> Result<(Scene, Report)> {
        let start = Instant::now();
        let mut hist: HashMap<String, usize> = HashMap::new();
        let max = self.config.max_iterations;
        let window = match &self.pool {
            Some(_) => self.config.workers * self.config.batch.max(1),
            None => 1,
        };
        let mut next = 0usize;
        while next < max {
            let end = (next + window).min(max);
            let outcomes: Vec<Result<Outcome>> = match &self.pool {
                Some(pool) => pool.install(|| {
                    (next..end).into_par_iter().map(|it| self.attempt(seed, index, it as u64)).collect()
                }),
                None => (next..end).map(|it| self.attempt(seed, index, it as u64)).collect(),
            };
            for (k, o) in outcomes.into_iter().enumerate() {
                match o? {
                    Outcome::Accept(scene) => {
                        let report = Report {
                            iterations: next + k + 1,
                            rejections: sorted(hist),
                            pruning: self.pruning.clone(),
                            elapsed: start.elapsed(),
                        };
                        return Ok((scene, report));
                    }
                    Outcome::Reject(label) => *hist.entry(label).or_insert(0) += 1,
                }
            }
            next = end;
        }
        Err(Error::Exhausted { iterations: max, histogram: sorted(hist) })
    }

    fn attempt(&self, seed: u64, index: u64, iteration: u64) -> Result<Outcome> {
        let mut rng = iteration_rng(seed, index, iteration);
        let m = &*self.model;
        // soft requirements are enforced only when their coin comes up
        let gates: Vec<bool> = m.requirements.iter().map(|r| r.prob.is_none_or(|p| rng.gen::<f64>() < p)).collect();
        let mut ev = Evaluator::new(&mut rng, &m.final_props, &self.overrides);

        let mut objects = Vec::with_capacity(m.objects.len());
        for (obj, props) in m.objects.iter().zip(&m.final_props) {
            let mut values = BTreeMap::new();
            for (k, s) in props {
                match ev.eval(s) {
                    Ok(v) => {
                        values.insert(k.clone(), v);
                    }
                    Err(e) => return rejected_or_fatal(e),
                }
            }
            let dim = |p: &str| -> Result<f64> {
                match values.get(p).and_then(Value::as_scalar) {
                    Some(x) if x > 0.0 => Ok(x),
                    other => Err(Error::sample(
                        format!("{} {p} must be positive, got {}", obj.class, other.map_or("a non-scalar".into(), |x| x.to_string())),
                        Some(obj.span),
                    )),
                }
            };
            let (w, h) = (dim("width")?, dim("height")?);
            let pos = values.get("position").and_then(Value::as_vector).ok_or_else(|| {
                Error::sample(format!("{} position is not a vector", obj.class), Some(obj.span))
            })?;
            let heading = values.get("heading").and_then(Value::as_scalar).unwrap_or(0.0);
            let corners = box_corners(pos, heading, w, h);
            objects.push(SampledObject { class: obj.class.clone(), props: values, corners });
        }

        for (r, on) in m.requirements.iter().zip(&gates) {
            if !on {
                continue;
            }
            match ev.eval(&r.cond) {
                Ok(Value::Bool(true)) => {}
                Ok(Value::Bool(false)) => return Ok(Outcome::Reject(r.label.clone())),
                Ok(other) => {
                    return Err(Error::sample(
                        format!("requirement must be a boolean, got {}", other.ty().name()),
                        Some(r.span),
                    ))
                }
                Err(e) => return rejected_or_fatal(e),
            }
        }

        if let Some(label) = default_requirements(m, &objects)? {
            return Ok(Outcome::Reject(label.to_string()));
        }

        let mut params = BTreeMap::new();
        for (k, s) in &m.params {
            match ev.eval(s) {
                Ok(v) => {
                    params.insert(k.clone(), v);
                }
                Err(e) => return rejected_or_fatal(e),
            }
        }
        Ok(Outcome::Accept(Scene { objects, ego: m.ego, params }))
    }
}

fn sorted(hist: HashMap<String, usize>) -> Vec<(String, usize)> {
    let mut v: Vec<(String, usize)> = hist.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v
}

fn rejected_or_fatal(e: EvalError) -> Result<Outcome> {
    match e {
        EvalError::Reject(m) => Ok(Outcome::Reject(format!("invalid sample: {m}"))),
        EvalError::Fatal(m, span) => Err(Error::sample(m, (span != Span::default()).then_some(span))),
    }
}

fn flag(o: &SampledObject, p: &str, default: bool) -> Result<bool> {
    match o.props.get(p) {
        None => Ok(default),
        Some(Value::Bool(b)) => Ok(*b),
        Some(v) => Err(Error::sample(format!("{} {p} must be a boolean, got {}", o.class, v.ty().name()), None)),
    }
}

/// The built-in requirements, in the order containment, collision,
/// visibility. Returns the label of the first one violated.
pub fn default_requirements(m: &ScenarioModel, objects: &[SampledObject]) -> Result<Option<&'static str>> {
    let ws = &m.world.workspace;
    for o in objects {
        let b = box_polygon(o.position(), o.heading(), o.scalar("width"), o.scalar("height"));
        if !ws.covers_polygon(&b) {
            return Ok(Some(CONTAINMENT));
        }
    }
    for i in 0..objects.len() {
        if flag(&objects[i], "allowCollisions", false)? {
            continue;
        }
        for j in i + 1..objects.len() {
            if flag(&objects[j], "allowCollisions", false)? {
                continue;
            }
            if boxes_overlap(&objects[i].corners, &objects[j].corners) {
                return Ok(Some(COLLISION));
            }
        }
    }
    let ego = &objects[m.ego];
    let view = Sector::visible_region(
        ego.position(),
        ego.props.get("heading").and_then(Value::as_scalar),
        ego.scalar("viewDistance"),
        ego.props.get("viewAngle").and_then(Value::as_scalar).unwrap_or(std::f64::consts::TAU),
    );
    for (j, o) in objects.iter().enumerate() {
        if j == m.ego || !flag(o, "requireVisible", true)? {
            continue;
        }
        if !view.intersects_convex(&o.corners) {
            return Ok(Some(VISIBILITY));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modules::Loader;
    use crate::world::World;

    fn sampler(world: &str, src: &str, config: SamplerConfig) -> Sampler {
        let w = Arc::new(World::bundled(world).unwrap());
        let m = crate::evaluator::compile(src, w, &Loader::new(vec![])).unwrap();
        Sampler::new(m, config).unwrap()
    }

    #[test]
    fn single_object_accepts_at_once() {
        let s = sampler("open", "ego = Object\n", SamplerConfig::default());
        let (scene, report) = s.sample(0, 0).unwrap();
        assert_eq!(report.iterations, 1);
        let o = &scene.objects[0];
        assert_eq!(o.position(), Vector::new(0.0, 0.0));
        assert_eq!(o.heading(), 0.0);
        assert_eq!((o.scalar("width"), o.scalar("height")), (1.0, 1.0));
    }

    #[test]
    fn identical_objects_always_collide() {
        let cfg = SamplerConfig { max_iterations: 50, ..SamplerConfig::default() };
        let s = sampler("open", "ego = Object at 1 @ 1\nObject at 1 @ 1\n", cfg);
        match s.sample(0, 0) {
            Err(Error::Exhausted { iterations, histogram }) => {
                assert_eq!(iterations, 50);
                assert_eq!(histogram, vec![(COLLISION.to_string(), 50)]);
            }
            other => panic!("expected exhaustion, got {other:?}"),
        }
    }

    #[test]
    fn requirements_are_checked_before_defaults() {
        let cfg = SamplerConfig { max_iterations: 20, ..SamplerConfig::default() };
        let s = sampler("open", "ego = Object\nObject at 0 @ 0.5\nrequire False\n", cfg);
        let Err(Error::Exhausted { histogram, .. }) = s.sample(1, 0) else { panic!() };
        assert_eq!(histogram, vec![("require (line 3)".to_string(), 20)]);
    }

    #[test]
    fn workers_do_not_change_the_result() {
        let src = "ego = Car\nc = Car\nrequire (distance to c) <= 20\n";
        let one = sampler("tworoads", src, SamplerConfig::default());
        let four = sampler("tworoads", src, SamplerConfig { workers: 4, batch: 3, ..SamplerConfig::default() });
        for idx in 0..3 {
            let (a, ra) = one.sample(42, idx).unwrap();
            let (b, rb) = four.sample(42, idx).unwrap();
            assert_eq!(ra.iterations, rb.iterations);
            assert_eq!(ra.rejections, rb.rejections);
            assert_eq!(format!("{:?}", a.objects[1].props), format!("{:?}", b.objects[1].props));
        }
    }

    #[test]
    fn random_non_positive_width_is_an_error() {
        let s = sampler("open", "ego = Object with width (-1, 1)\n", SamplerConfig::default());
        let mut saw = false;
        for i in 0..20 {
            if let Err(Error::Sample { message, .. }) = s.sample(3, i) {
                assert!(message.contains("width must be positive"));
                saw = true;
            }
        }
        assert!(saw);
    }
}
