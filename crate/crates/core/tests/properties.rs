//! Property tests over whole scenarios.

use std::path::PathBuf;
use std::sync::Arc;

use geo::{Contains, Intersects, Polygon};
use proptest::prelude::*;
use scenelang_core::evaluator::{compile, ScenarioModel};
use scenelang_core::modules::Loader;
use scenelang_core::pruning::PruneSet;
use scenelang_core::sampler::{Sampler, SamplerConfig};
use scenelang_core::world::World;
use scenelang_geometry::{Coord, LineString, Vector};

fn bench(name: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/bench").join(format!("{name}.scn"));
    std::fs::read_to_string(p).unwrap()
}

fn model(world: &str, src: &str) -> ScenarioModel {
    compile(src, Arc::new(World::bundled(world).unwrap()), &Loader::new(vec![])).unwrap()
}

fn sampler(world: &str, src: &str, prune: PruneSet, workers: usize) -> Sampler {
    Sampler::new(model(world, src), SamplerConfig { prune, workers, batch: 4, ..SamplerConfig::default() }).unwrap()
}

fn poly(corners: &[Vector; 4]) -> Polygon<f64> {
    let ring: Vec<Coord<f64>> = corners.iter().map(|c| Coord { x: c.x, y: c.y }).collect();
    Polygon::new(LineString::new(ring), vec![])
}

/// Every accepted scene of an unpruned run places each pruned draw inside
/// the region pruning kept for it.
fn check_soundness(world: &str, src: &str, seed: u64) {
    let pruned = sampler(world, src, PruneSet::all(), 1);
    let plain = sampler(world, src, PruneSet::none(), 1);
    assert!(!pruned.contexts().is_empty());
    let (scene, _) = plain.sample(seed, 0).unwrap();
    for ctx in pruned.contexts() {
        let kept = pruned.override_for(ctx.node.id).expect("pruned node has a region");
        let p = scene.objects[ctx.object].position();
        assert!(kept.contains_point(p), "{world}: object {} at {p} is outside its pruned region", ctx.object);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pruning_keeps_every_heading_solution(seed in any::<u64>()) {
        check_soundness("heading2", &bench("heading"), seed);
    }

    #[test]
    fn pruning_keeps_every_width_solution(seed in any::<u64>()) {
        check_soundness("strip", &bench("width"), seed);
    }

    #[test]
    fn pruning_keeps_every_bumper_solution(seed in any::<u64>()) {
        check_soundness("bumper", &bench("bumper"), seed);
    }

    #[test]
    fn accepted_scenes_meet_the_built_in_requirements(seed in any::<u64>(), idx in 0u64..4) {
        let src = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/gallery/a09_four_cars_rain.scn")).unwrap();
        let s = sampler("tworoads", &src, PruneSet::all(), 1);
        let (scene, _) = s.sample(seed, idx).unwrap();
        let ws = s.model().world.workspace.polygons().clone();
        let polys: Vec<Polygon<f64>> = scene.objects.iter().map(|o| poly(&o.corners)).collect();
        for p in &polys {
            prop_assert!(ws.contains(p));
        }
        for i in 0..polys.len() {
            for j in i + 1..polys.len() {
                prop_assert!(!polys[i].intersects(&polys[j]), "objects {} and {} overlap", i, j);
            }
        }
    }

    #[test]
    fn sampling_is_reproducible(seed in any::<u64>(), idx in 0u64..100) {
        let src = bench("heading");
        let a = sampler("heading2", &src, PruneSet::all(), 1).sample(seed, idx).unwrap();
        let b = sampler("heading2", &src, PruneSet::all(), 3).sample(seed, idx).unwrap();
        prop_assert_eq!(a.1.iterations, b.1.iterations);
        for (x, y) in a.0.objects.iter().zip(&b.0.objects) {
            prop_assert_eq!(format!("{:?}", x.props), format!("{:?}", y.props));
        }
    }

    #[test]
    fn specifier_order_does_not_matter(perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle()) {
        let specs = ["left of 2 @ 3 by 0.5", "facing 30 deg", "with width 2", "with model 7"];
        let listed: Vec<&str> = perm.iter().map(|&i| specs[i]).collect();
        let src = format!("ego = Object at 10 @ 10\nObject {}\n", listed.join(", "));
        let m = model("open", &src);
        let s = Sampler::new(m, SamplerConfig::default()).unwrap();
        let (scene, _) = s.sample(0, 0).unwrap();
        let o = &scene.objects[1];
        let h = 30f64.to_radians();
        // 1.5 m to the left of (2, 3) along heading 30 deg
        let want = Vector::new(2.0 - 1.5 * h.cos(), 3.0 - 1.5 * h.sin());
        prop_assert!(o.position().distance(want) < 1e-12);
        prop_assert_eq!(o.scalar("model"), 7.0);
    }
}
