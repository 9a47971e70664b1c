//! Randomized checks of every listed module property. Each check takes the
//! number of cases and returns a description of the first failure.

use std::fmt::Debug;
use std::sync::Arc;

use ddfuse_core::evidence::{
    compatibility, dempster_combine, fuse_weighted, mass_from_confidence, weight_masses, Frame,
    MassFunction, Subset,
};
use ddfuse_core::geometry::{
    center_distance, ddiou, euclid_similarity, iou, iou_star, BoundingBox, SimilarityConfig,
};
use ddfuse_core::matching::{
    match_detections, score_matrix, Detection, MatchConfig, MatchMetric, MatchStrategy,
};
use ddfuse_core::metrics::{evaluate, precision_envelope, EvalConfig, GroundTruthBox};
use ddfuse_core::pipeline::{fuse_dataset, fuse_scene, FusionConfig, Provenance, Scene};
use ddfuse_core::sim::{generate, ScenarioConfig, SensorModel};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

use super::oracles::{ap_by_threshold_sweep, best_assignment_total, dempster_brute_force, RawBox};
use super::strategies::*;

pub type Check = fn(u32) -> Result<(), String>;

/// `(module, property, check)` for every invariant.
pub const ALL: &[(&str, &str, Check)] = &[
    ("geometry", "symmetry", geometry_symmetry),
    ("geometry", "ranges", geometry_ranges),
    ("geometry", "scale invariance", geometry_scale_invariance),
    ("geometry", "pixel resolution invariance", geometry_pixel_resolution_invariance),
    ("geometry", "iou* translation invariance", geometry_iou_star_translation_invariance),
    ("geometry", "monotone distance decay", geometry_distance_decay_monotone),
    ("geometry", "non-overlap discrimination", geometry_non_overlap_discrimination),
    ("geometry", "iou* equals recentered iou", geometry_iou_star_matches_recentered_iou),
    ("evidence", "normalization closure", evidence_normalization_closure),
    ("evidence", "commutativity", evidence_commutativity),
    ("evidence", "associativity", evidence_associativity),
    ("evidence", "vacuous neutrality", evidence_vacuous_neutrality),
    ("evidence", "compatibility bound", evidence_compatibility_bound),
    ("evidence", "discount monotonicity", evidence_discount_monotonicity),
    ("evidence", "conflict weighting", evidence_conflict_weighting),
    ("evidence", "brute-force oracle equivalence", evidence_oracle_equivalence),
    ("evidence", "reinforcement", evidence_reinforcement),
    ("evidence", "belief/plausibility duality", evidence_belief_plausibility),
    ("matching", "optimal equals exhaustive search", matching_optimal_is_exhaustive_max),
    ("matching", "symmetry", matching_symmetry),
    ("matching", "threshold monotonicity", matching_threshold_monotonicity),
    ("matching", "partition", matching_partition),
    ("matching", "offset tolerance", matching_offset_tolerance),
    ("pipeline", "agreement reinforcement", pipeline_agreement_reinforcement),
    ("pipeline", "agreement above the weaker score", pipeline_agreement_above_min),
    ("pipeline", "agreement reinforcement for close scores", pipeline_agreement_close_scores),
    ("pipeline", "determinism", pipeline_determinism),
    ("pipeline", "conservation of targets", pipeline_conservation),
    ("pipeline", "geometry sanity", pipeline_geometry_sanity),
    ("pipeline", "fused mass closure", pipeline_mass_closure),
    ("metrics", "AP bounds", metrics_ap_bounds),
    ("metrics", "monotone envelope", metrics_monotone_envelope),
    ("metrics", "score-scale invariance", metrics_score_scale_invariance),
    ("metrics", "threshold-sweep oracle agreement", metrics_oracle_agreement),
    ("metrics", "greedy-claim consistency", metrics_claim_consistency),
    ("sim", "seed determinism", sim_seed_determinism),
    ("sim", "rate fidelity", sim_rate_fidelity),
    ("sim", "complementarity", sim_complementarity),
];

pub fn check<S>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String>
where
    S: Strategy,
    S::Value: Debug,
{
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

// ---------------------------------------------------------------- geometry

pub fn geometry_symmetry(cases: u32) -> Result<(), String> {
    let cfg = SimilarityConfig::default();
    check(cases, (bbox(), bbox()), |(a, b)| {
        prop_assert_eq!(center_distance(&a, &b), center_distance(&b, &a));
        prop_assert_eq!(euclid_similarity(&a, &b, &cfg), euclid_similarity(&b, &a, &cfg));
        prop_assert_eq!(iou(&a, &b), iou(&b, &a));
        prop_assert_eq!(iou_star(&a, &b), iou_star(&b, &a));
        prop_assert_eq!(ddiou(&a, &b, &cfg), ddiou(&b, &a, &cfg));
        Ok(())
    })
}

pub fn geometry_ranges(cases: u32) -> Result<(), String> {
    check(cases, (bbox(), bbox(), 0.0..5.0f64), |(a, b, alpha)| {
        let cfg = SimilarityConfig::new(1.0, 1.0, alpha).unwrap();
        let v = iou(&a, &b);
        prop_assert!((0.0..=1.0).contains(&v));
        let v = iou_star(&a, &b);
        prop_assert!(v > 0.0 && v <= 1.0);
        let v = ddiou(&a, &b, &cfg);
        prop_assert!(v > 0.0 && v <= 1.0);
        prop_assert!(euclid_similarity(&a, &b, &cfg) >= 0.0);
        Ok(())
    })
}

pub fn geometry_scale_invariance(cases: u32) -> Result<(), String> {
    check(cases, (bbox(), bbox(), 0.01..100.0f64), |(a, b, k)| {
        let (sa, sb) = (a.scaled(k).unwrap(), b.scaled(k).unwrap());
        prop_assert!(close(iou(&a, &b), iou(&sa, &sb), 1e-12));
        prop_assert!(close(iou_star(&a, &b), iou_star(&sa, &sb), 1e-12));
        Ok(())
    })
}

pub fn geometry_pixel_resolution_invariance(cases: u32) -> Result<(), String> {
    let cfg = SimilarityConfig::default();
    let pixel_box = (0.0..600.0f64, 0.0..400.0f64, 1.0..200.0f64, 1.0..200.0f64);
    check(
        cases,
        (pixel_box.clone(), pixel_box, 100.0..2000.0f64, 100.0..2000.0f64),
        |((x1, y1, w1, h1), (x2, y2, w2, h2), width, height)| {
            let at = |s: f64, x: f64, y: f64, w: f64, h: f64| {
                BoundingBox::from_pixel_corners(s * x, s * y, s * (x + w), s * (y + h), s * width, s * height)
                    .unwrap()
            };
            let low = ddiou(&at(1.0, x1, y1, w1, h1), &at(1.0, x2, y2, w2, h2), &cfg);
            let high = ddiou(&at(2.0, x1, y1, w1, h1), &at(2.0, x2, y2, w2, h2), &cfg);
            prop_assert_eq!(low, high);
            Ok(())
        },
    )
}

pub fn geometry_iou_star_translation_invariance(cases: u32) -> Result<(), String> {
    check(cases, (bbox(), bbox(), -5.0..5.0f64, -5.0..5.0f64), |(a, b, dx, dy)| {
        prop_assert_eq!(iou_star(&a, &b), iou_star(&a.translated(dx, dy), &b));
        prop_assert_eq!(iou_star(&a, &b), iou_star(&a, &b.translated(dx, dy)));
        Ok(())
    })
}

pub fn geometry_distance_decay_monotone(cases: u32) -> Result<(), String> {
    check(
        cases,
        (bbox(), bbox(), 0.01..3.0f64, 0.0..std::f64::consts::TAU, 0.0..1.0f64, 0.001..1.0f64),
        |(a, b, alpha, angle, r1, extra)| {
            let cfg = SimilarityConfig::new(1.0, 1.0, alpha).unwrap();
            let near = b.recentered(a.cx() + r1 * angle.cos(), a.cy() + r1 * angle.sin());
            let r2 = r1 + extra;
            let far = b.recentered(a.cx() + r2 * angle.cos(), a.cy() + r2 * angle.sin());
            prop_assert!(center_distance(&a, &far) > center_distance(&a, &near));
            prop_assert!(ddiou(&a, &far, &cfg) < ddiou(&a, &near, &cfg));
            Ok(())
        },
    )
}

pub fn geometry_non_overlap_discrimination(cases: u32) -> Result<(), String> {
    let cfg = SimilarityConfig::default();
    check(
        cases,
        (bbox(), bbox(), 0.0..std::f64::consts::TAU, 0.01..1.0f64),
        |(a, b, angle, extra)| {
            // Far enough that the boxes cannot overlap in any direction.
            let r1 = (a.w() + b.w() + a.h() + b.h()) + 0.01;
            let r2 = r1 + extra;
            let place = |r: f64| b.recentered(a.cx() + r * angle.cos(), a.cy() + r * angle.sin());
            let (near, far) = (place(r1), place(r2));
            prop_assert_eq!(iou(&a, &near), 0.0);
            prop_assert_eq!(iou(&a, &far), 0.0);
            prop_assert!(ddiou(&a, &near, &cfg) > ddiou(&a, &far, &cfg));
            Ok(())
        },
    )
}

pub fn geometry_iou_star_matches_recentered_iou(cases: u32) -> Result<(), String> {
    check(cases, (bbox(), bbox()), |(a, b)| {
        let v = iou(&a.recentered(0.0, 0.0), &b.recentered(0.0, 0.0));
        prop_assert!(close(iou_star(&a, &b), v, 1e-12));
        Ok(())
    })
}

// ---------------------------------------------------------------- evidence

fn masses_of(size: usize, dense: &[Vec<f64>]) -> Vec<MassFunction> {
    let f = frame(size);
    dense.iter().map(|d| to_mass(&f, d)).collect()
}

fn assert_same_mass(a: &MassFunction, b: &MassFunction, tol: f64) -> Result<(), TestCaseError> {
    for mask in 0..(1u32 << a.frame().size()) {
        let s = Subset::from_bits(mask);
        prop_assert!(
            close(a.mass(s), b.mass(s), tol),
            "subset {:#b}: {} vs {}",
            mask,
            a.mass(s),
            b.mass(s)
        );
    }
    Ok(())
}

pub fn evidence_normalization_closure(cases: u32) -> Result<(), String> {
    let families = (2usize..=3).prop_flat_map(mass_family);
    check(cases, families, |(size, dense)| {
        if let Ok(m) = dempster_combine(&masses_of(size, &dense)) {
            prop_assert!(close(m.total(), 1.0, 1e-9));
            prop_assert_eq!(m.mass(Subset::EMPTY), 0.0);
        }
        Ok(())
    })?;
    let simple = (1usize..=4, 2usize..=4).prop_flat_map(|(size, n)| {
        (Just(size), prop::collection::vec(simple_support(size), n))
    });
    check(cases, simple, |(size, raw)| {
        let f = frame(size);
        let ev: Vec<_> = raw.iter().map(|v| simple_mass(&f, v)).collect();
        if let Ok(m) = fuse_weighted(&ev) {
            prop_assert!(close(m.total(), 1.0, 1e-9));
            prop_assert_eq!(m.mass(Subset::EMPTY), 0.0);
        }
        Ok(())
    })
}

pub fn evidence_commutativity(cases: u32) -> Result<(), String> {
    check(cases, (2usize..=3).prop_flat_map(mass_family), |(size, dense)| {
        let ev = masses_of(size, &dense);
        let mut reversed = ev.clone();
        reversed.reverse();
        let mut rotated = ev.clone();
        rotated.rotate_left(1);
        match dempster_combine(&ev) {
            Ok(m) => {
                assert_same_mass(&m, &dempster_combine(&reversed).unwrap(), 1e-12)?;
                assert_same_mass(&m, &dempster_combine(&rotated).unwrap(), 1e-12)?;
            }
            Err(_) => {
                prop_assert!(dempster_combine(&reversed).is_err());
                prop_assert!(dempster_combine(&rotated).is_err());
            }
        }
        Ok(())
    })
}

pub fn evidence_associativity(cases: u32) -> Result<(), String> {
    check(cases, mass_family(3), |(size, dense)| {
        let ev = masses_of(size, &dense);
        let left = dempster_combine(&ev[..2])
            .and_then(|ab| dempster_combine(&[ab, ev[2].clone()]));
        let right = dempster_combine(&ev[1..])
            .and_then(|bc| dempster_combine(&[ev[0].clone(), bc]));
        let (_, k) = dempster_brute_force(&dense);
        if k > 1e-12 {
            assert_same_mass(&left.unwrap(), &right.unwrap(), 1e-9)?;
        }
        Ok(())
    })
}

pub fn evidence_vacuous_neutrality(cases: u32) -> Result<(), String> {
    check(cases, mass_family(1), |(size, dense)| {
        let m = masses_of(size, &dense).remove(0);
        let vacuous = MassFunction::vacuous(m.frame().clone());
        assert_same_mass(&dempster_combine(&[m.clone(), vacuous.clone()]).unwrap(), &m, 1e-12)?;
        assert_same_mass(&dempster_combine(&[vacuous, m.clone()]).unwrap(), &m, 1e-12)
    })
}

pub fn evidence_compatibility_bound(cases: u32) -> Result<(), String> {
    let f = Arc::new(Frame::binary());
    check(cases, (0.0..=1.0f64, 0.0..=1.0f64), |(x, y)| {
        let mx = mass_from_confidence(&f, x).unwrap();
        let my = mass_from_confidence(&f, y).unwrap();
        for k in 0..2 {
            let r = compatibility(&mx, &my, k).unwrap();
            prop_assert!((0.0..=1.0).contains(&r));
            prop_assert_eq!(r, compatibility(&my, &mx, k).unwrap());
            prop_assert_eq!(compatibility(&mx, &mx, k).unwrap(), 1.0);
        }
        Ok(())
    })
}

fn simple_family() -> impl Strategy<Value = (usize, Vec<Vec<f64>>)> {
    (1usize..=4, 2usize..=4).prop_flat_map(|(size, n)| {
        (Just(size), prop::collection::vec(simple_support(size), n))
    })
}

pub fn evidence_discount_monotonicity(cases: u32) -> Result<(), String> {
    check(cases, simple_family(), |(size, raw)| {
        let f = frame(size);
        let ev: Vec<_> = raw.iter().map(|v| simple_mass(&f, v)).collect();
        let w = weight_masses(&ev).unwrap();
        for (orig, disc) in ev.iter().zip(w.discounted()) {
            for k in 0..size {
                prop_assert!(disc.singleton_mass(k) <= orig.singleton_mass(k));
            }
            prop_assert!(disc.uncertainty() >= orig.uncertainty() - 1e-12);
        }
        Ok(())
    })
}

pub fn evidence_conflict_weighting(cases: u32) -> Result<(), String> {
    check(cases, simple_family(), |(size, raw)| {
        let f = frame(size);
        let ev: Vec<_> = raw.iter().map(|v| simple_mass(&f, v)).collect();
        let w = weight_masses(&ev).unwrap();
        for k in 0..size {
            for i in 0..ev.len() {
                for j in 0..ev.len() {
                    if ev[i].singleton_mass(k) != ev[j].singleton_mass(k) {
                        prop_assert!(w.weights()[i][k] < 1.0, "w[{}][{}] = 1 despite conflict", i, k);
                    }
                }
            }
        }
        Ok(())
    })
}

pub fn evidence_oracle_equivalence(cases: u32) -> Result<(), String> {
    check(cases, (1usize..=3).prop_flat_map(mass_family), |(size, dense)| {
        let (expected, k) = dempster_brute_force(&dense);
        match dempster_combine(&masses_of(size, &dense)) {
            Ok(m) => {
                prop_assert!(k > 1e-12);
                for (mask, &e) in expected.iter().enumerate() {
                    let got = m.mass(Subset::from_bits(mask as u32));
                    prop_assert!(close(got, e, 1e-9), "subset {:#b}: {} vs {}", mask, got, e);
                }
            }
            Err(_) => prop_assert!(k <= 1e-12, "rejected with K = {}", k),
        }
        Ok(())
    })
}

pub fn evidence_reinforcement(cases: u32) -> Result<(), String> {
    let f = Arc::new(Frame::binary());
    check(cases, (51u32..=99, 51u32..=99), |(a, b)| {
        let (a, b) = (f64::from(a) / 100.0, f64::from(b) / 100.0);
        let m = dempster_combine(&[
            mass_from_confidence(&f, a).unwrap(),
            mass_from_confidence(&f, b).unwrap(),
        ])
        .unwrap();
        prop_assert!(m.singleton_mass(Frame::EXISTS) > a.max(b));
        Ok(())
    })
}

pub fn evidence_belief_plausibility(cases: u32) -> Result<(), String> {
    check(cases, (mass_family(1), any::<u16>()), |((size, dense), bits)| {
        let m = masses_of(size, &dense).remove(0);
        let subset = Subset::from_bits(u32::from(bits) & m.frame().theta().bits());
        let bel = m.belief(subset);
        let pl = m.plausibility(subset);
        prop_assert!(bel <= pl + 1e-12);
        prop_assert!(close(pl, 1.0 - m.belief(subset.complement(size)), 1e-12));
        Ok(())
    })
}

// ---------------------------------------------------------------- matching

fn as_rows(a: &[Detection], b: &[Detection]) -> Vec<Vec<f64>> {
    let s = score_matrix(a, b, &SimilarityConfig::default(), MatchMetric::Ddiou);
    (0..s.rows()).map(|i| s.row(i).to_vec()).collect()
}

pub fn matching_optimal_is_exhaustive_max(cases: u32) -> Result<(), String> {
    let cfg = MatchConfig {
        threshold: 0.0,
        ..MatchConfig::default()
    };
    check(cases, (detections("a", 6), detections("b", 6)), |(a, b)| {
        let r = match_detections(&a, &b, &cfg).unwrap();
        prop_assert_eq!(r.pairs.len(), a.len().min(b.len()));
        let expected = best_assignment_total(&as_rows(&a, &b));
        prop_assert!(close(r.total_score(), expected, 1e-9), "{} vs {}", r.total_score(), expected);
        Ok(())
    })
}

pub fn matching_symmetry(cases: u32) -> Result<(), String> {
    check(
        cases,
        (detections("a", 6), detections("b", 6), 0.0..0.6f64),
        |(a, b, threshold)| {
            let cfg = MatchConfig {
                threshold,
                ..MatchConfig::default()
            };
            let ab = match_detections(&a, &b, &cfg).unwrap();
            let ba = match_detections(&b, &a, &cfg).unwrap();
            let mut forward: Vec<_> = ab.pairs.iter().map(|p| (p.a, p.b)).collect();
            let mut backward: Vec<_> = ba.pairs.iter().map(|p| (p.b, p.a)).collect();
            forward.sort_unstable();
            backward.sort_unstable();
            prop_assert_eq!(forward, backward);
            Ok(())
        },
    )
}

pub fn matching_threshold_monotonicity(cases: u32) -> Result<(), String> {
    let strategy = prop_oneof![Just(MatchStrategy::Optimal), Just(MatchStrategy::Greedy)];
    check(
        cases,
        (detections("a", 6), detections("b", 6), 0.0..1.0f64, 0.0..1.0f64, strategy),
        |(a, b, t1, t2, strategy)| {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let run = |threshold| {
                let cfg = MatchConfig {
                    threshold,
                    strategy,
                    ..MatchConfig::default()
                };
                match_detections(&a, &b, &cfg).unwrap().pairs.len()
            };
            prop_assert!(run(hi) <= run(lo));
            Ok(())
        },
    )
}

pub fn matching_partition(cases: u32) -> Result<(), String> {
    let strategy = prop_oneof![Just(MatchStrategy::Optimal), Just(MatchStrategy::Greedy)];
    let metric = prop_oneof![Just(MatchMetric::Ddiou), Just(MatchMetric::Iou), Just(MatchMetric::Euclid)];
    check(
        cases,
        (detections("a", 8), detections("b", 8), 0.0..1.0f64, strategy, metric),
        |(a, b, threshold, strategy, metric)| {
            let cfg = MatchConfig {
                threshold,
                strategy,
                metric,
                ..MatchConfig::default()
            };
            let r = match_detections(&a, &b, &cfg).unwrap();
            prop_assert_eq!(
                2 * r.pairs.len() + r.unmatched_a.len() + r.unmatched_b.len(),
                a.len() + b.len()
            );
            let mut seen_a = vec![false; a.len()];
            let mut seen_b = vec![false; b.len()];
            for p in &r.pairs {
                prop_assert!(!seen_a[p.a] && !seen_b[p.b]);
                seen_a[p.a] = true;
                seen_b[p.b] = true;
                prop_assert!(metric.passes(p.score, threshold));
            }
            for &i in &r.unmatched_a {
                prop_assert!(!seen_a[i]);
                seen_a[i] = true;
            }
            for &j in &r.unmatched_b {
                prop_assert!(!seen_b[j]);
                seen_b[j] = true;
            }
            prop_assert!(seen_a.iter().chain(&seen_b).all(|&s| s));
            Ok(())
        },
    )
}

pub fn matching_offset_tolerance(cases: u32) -> Result<(), String> {
    // Same-shape targets on a 0.25 grid; shifts of at most 0.1 keep every
    // target closer to its own copy than to any other.
    let shapes = prop::collection::vec((0.02..0.1f64, 0.02..0.1f64), 1..=9);
    check(cases, (shapes, -0.07..0.07f64, -0.07..0.07f64), |(shapes, dx, dy)| {
        let a: Vec<Detection> = shapes
            .iter()
            .enumerate()
            .map(|(i, &(w, h))| {
                let (cx, cy) = (0.2 + 0.25 * (i % 3) as f64, 0.2 + 0.25 * (i / 3) as f64);
                Detection::new(BoundingBox::new(cx, cy, w, h).unwrap(), 0.9, 0, "s", "a").unwrap()
            })
            .collect();
        let b: Vec<Detection> = a.iter().map(|d| d.translated(dx, dy)).collect();
        let r = match_detections(&a, &b, &MatchConfig::default()).unwrap();
        let pairs: Vec<_> = r.pairs.iter().map(|p| (p.a, p.b)).collect();
        let identity: Vec<_> = (0..a.len()).map(|i| (i, i)).collect();
        prop_assert_eq!(pairs, identity);
        Ok(())
    })
}

// ---------------------------------------------------------------- pipeline

fn scored_pair() -> impl Strategy<Value = (Detection, Detection)> {
    (detection("a"), -0.02..0.02f64, -0.02..0.02f64, 0.01..0.99f64).prop_map(|(a, dx, dy, s)| {
        let b = Detection::new(a.bbox().translated(dx, dy), s, 0, "scene", "b").unwrap();
        (a, b)
    })
}

pub fn pipeline_agreement_reinforcement(cases: u32) -> Result<(), String> {
    let both_confident = scored_pair().prop_filter("both scores above 0.5", |(a, b)| {
        a.score() > 0.5 && b.score() > 0.5
    });
    check(cases, both_confident, |(a, b)| {
        let out = fuse_scene(&[a.clone()], &[b.clone()], &FusionConfig::default()).unwrap();
        prop_assert_eq!(out.len(), 1);
        let f = &out[0];
        prop_assert_eq!(f.provenance, Provenance::Both);
        prop_assert!(
            f.score >= a.score().max(b.score()),
            "fused {} below max({}, {})",
            f.score,
            a.score(),
            b.score()
        );
        Ok(())
    })
}

pub fn pipeline_agreement_above_min(cases: u32) -> Result<(), String> {
    let both_confident = scored_pair().prop_filter("both scores above 0.5", |(a, b)| {
        a.score() > 0.5 && b.score() > 0.5
    });
    check(cases, both_confident, |(a, b)| {
        let out = fuse_scene(&[a.clone()], &[b.clone()], &FusionConfig::default()).unwrap();
        prop_assert_eq!(out.len(), 1);
        prop_assert!(out[0].score >= a.score().min(b.score()));
        Ok(())
    })
}

pub fn pipeline_agreement_close_scores(cases: u32) -> Result<(), String> {
    let close_scores = scored_pair().prop_filter("both above 0.5 and within 0.1", |(a, b)| {
        a.score() > 0.5 && b.score() > 0.5 && (a.score() - b.score()).abs() <= 0.1
    });
    check(cases, close_scores, |(a, b)| {
        let out = fuse_scene(&[a.clone()], &[b.clone()], &FusionConfig::default()).unwrap();
        prop_assert_eq!(out.len(), 1);
        prop_assert!(out[0].score >= a.score().max(b.score()));
        Ok(())
    })
}

fn scene_pairs() -> impl Strategy<Value = Vec<(Scene, Scene)>> {
    prop::collection::vec((detections("a", 6), detections("b", 6)), 0..6).prop_map(|scenes| {
        scenes
            .into_iter()
            .enumerate()
            .map(|(i, (a, b))| {
                let id = format!("scene_{i}");
                (Scene::new(id.clone(), a), Scene::new(id, b))
            })
            .collect()
    })
}

pub fn pipeline_determinism(cases: u32) -> Result<(), String> {
    check(cases, scene_pairs(), |pairs| {
        let cfg = FusionConfig::default();
        let serial = fuse_dataset(&pairs, &cfg, 1).unwrap();
        let parallel = fuse_dataset(&pairs, &cfg, 8).unwrap();
        prop_assert_eq!(&serial, &parallel);
        prop_assert_eq!(serial, fuse_dataset(&pairs, &cfg, 1).unwrap());
        Ok(())
    })
}

pub fn pipeline_conservation(cases: u32) -> Result<(), String> {
    check(cases, (detections("a", 8), detections("b", 8)), |(a, b)| {
        let cfg = FusionConfig::default();
        let out = fuse_scene(&a, &b, &cfg).unwrap();
        let r = match_detections(&a, &b, &cfg.match_config()).unwrap();
        prop_assert_eq!(out.len(), r.pairs.len() + r.unmatched_a.len() + r.unmatched_b.len());
        Ok(())
    })
}

pub fn pipeline_geometry_sanity(cases: u32) -> Result<(), String> {
    check(cases, scored_pair(), |(a, b)| {
        let out = fuse_scene(&[a.clone()], &[b.clone()], &FusionConfig::default()).unwrap();
        let f = &out[0];
        let (pa, pb, c) = (a.bbox(), b.bbox(), f.bbox);
        let within = |v: f64, x: f64, y: f64| v >= x.min(y) - 1e-12 && v <= x.max(y) + 1e-12;
        prop_assert!(within(c.cx(), pa.cx(), pb.cx()));
        prop_assert!(within(c.cy(), pa.cy(), pb.cy()));
        let cross = (c.cx() - pa.cx()) * (pb.cy() - pa.cy()) - (c.cy() - pa.cy()) * (pb.cx() - pa.cx());
        prop_assert!(cross.abs() <= 1e-12);
        prop_assert!(within(c.w(), pa.w(), pb.w()));
        prop_assert!(within(c.h(), pa.h(), pb.h()));
        Ok(())
    })
}

pub fn pipeline_mass_closure(cases: u32) -> Result<(), String> {
    check(cases, (detections("a", 6), detections("b", 6)), |(a, b)| {
        for f in fuse_scene(&a, &b, &FusionConfig::default()).unwrap() {
            prop_assert!(close(f.exists + f.absent + f.uncertainty, 1.0, 1e-9));
            prop_assert_eq!(
                f.provenance == Provenance::Both,
                f.box_a.is_some() && f.box_b.is_some()
            );
            prop_assert!((0.0..=1.0).contains(&f.score));
        }
        Ok(())
    })
}

// ----------------------------------------------------------------- metrics

fn realize(data: &MicroDataset) -> (Vec<Detection>, Vec<GroundTruthBox>) {
    let dets = data
        .dets
        .iter()
        .map(|&(s, b, score)| Detection::new(b, score, 0, format!("img{s}"), "test").unwrap())
        .collect();
    let gts = data
        .gts
        .iter()
        .map(|&(s, b)| GroundTruthBox::new(b, 0, format!("img{s}")))
        .collect();
    (dets, gts)
}

fn raw(scene: u32, b: &BoundingBox) -> RawBox {
    RawBox {
        scene,
        x1: b.cx() - b.w() / 2.0,
        y1: b.cy() - b.h() / 2.0,
        x2: b.cx() + b.w() / 2.0,
        y2: b.cy() + b.h() / 2.0,
    }
}

pub fn metrics_ap_bounds(cases: u32) -> Result<(), String> {
    check(cases, micro_dataset(), |data| {
        let (dets, gts) = realize(&data);
        let r = evaluate(&dets, &gts, &EvalConfig::default()).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.ap));
        let perfect_point = r.pr_points.iter().any(|p| p.recall == 1.0 && p.precision == 1.0);
        prop_assert_eq!(r.ap == 1.0, perfect_point);
        Ok(())
    })
}

pub fn metrics_monotone_envelope(cases: u32) -> Result<(), String> {
    check(cases, micro_dataset(), |data| {
        let (dets, gts) = realize(&data);
        let r = evaluate(&dets, &gts, &EvalConfig::default()).unwrap();
        let env = precision_envelope(&r.pr_points);
        prop_assert!(env.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(r.pr_points.windows(2).all(|w| w[0].recall <= w[1].recall));
        Ok(())
    })
}

pub fn metrics_score_scale_invariance(cases: u32) -> Result<(), String> {
    check(cases, micro_dataset(), |data| {
        let (dets, gts) = realize(&data);
        let warped: Vec<Detection> = data
            .dets
            .iter()
            .map(|&(s, b, score)| {
                let w = 0.1 + 0.8 * score * score;
                Detection::new(b, w, 0, format!("img{s}"), "test").unwrap()
            })
            .collect();
        let cfg = EvalConfig::default();
        let a = evaluate(&dets, &gts, &cfg).unwrap();
        let b = evaluate(&warped, &gts, &cfg).unwrap();
        prop_assert_eq!(
            (a.true_positives, a.false_positives, a.false_negatives),
            (b.true_positives, b.false_positives, b.false_negatives)
        );
        prop_assert_eq!(&a.pr_points, &b.pr_points);
        prop_assert_eq!(a.ap, b.ap);
        Ok(())
    })
}

pub fn metrics_oracle_agreement(cases: u32) -> Result<(), String> {
    check(cases, micro_dataset(), |data| {
        let (dets, gts) = realize(&data);
        let r = evaluate(&dets, &gts, &EvalConfig::default()).unwrap();
        let raw_dets: Vec<_> = data.dets.iter().map(|&(s, b, score)| (raw(s, &b), score)).collect();
        let raw_gts: Vec<_> = data.gts.iter().map(|&(s, b)| raw(s, &b)).collect();
        let expected = ap_by_threshold_sweep(&raw_dets, &raw_gts, 0.5);
        prop_assert!(close(r.ap, expected, 1e-9), "{} vs oracle {}", r.ap, expected);
        Ok(())
    })
}

pub fn metrics_claim_consistency(cases: u32) -> Result<(), String> {
    check(cases, micro_dataset(), |data| {
        let (dets, gts) = realize(&data);
        let (order, is_tp) = ddfuse_core::metrics::assign(&dets, &gts, 0.5);
        for w in order.windows(2) {
            let (x, y) = (&dets[w[0]], &dets[w[1]]);
            prop_assert!(x.score() > y.score() || (x.score() == y.score() && w[0] < w[1]));
        }
        let r = evaluate(&dets, &gts, &EvalConfig::default()).unwrap();
        let tp = is_tp.iter().filter(|&&t| t).count();
        prop_assert_eq!(r.true_positives, tp);
        prop_assert!(tp <= gts.len());
        prop_assert_eq!(r.true_positives + r.false_negatives, gts.len());
        prop_assert_eq!(r.true_positives + r.false_positives, dets.len());
        Ok(())
    })
}

// --------------------------------------------------------------------- sim

pub fn sim_seed_determinism(cases: u32) -> Result<(), String> {
    check(cases.min(64), any::<u64>(), |seed| {
        let cfg = ScenarioConfig {
            seed,
            scenes: 10,
            ..ScenarioConfig::default()
        };
        prop_assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        Ok(())
    })
}

fn within_3_sigma(observed: f64, expected: f64, sigma: f64, what: &str) -> Result<(), String> {
    if (observed - expected).abs() <= 3.0 * sigma {
        Ok(())
    } else {
        Err(format!("{what}: observed {observed:.4}, expected {expected:.4} ± {:.4}", 3.0 * sigma))
    }
}

fn fidelity_config() -> ScenarioConfig {
    ScenarioConfig {
        seed: 2024,
        scenes: 200,
        sensor_a: SensorModel {
            name: "a".into(),
            miss_rate: 0.1,
            occlusion_rate: 0.3,
            false_positive_rate: 0.5,
            ..SensorModel::default()
        },
        sensor_b: SensorModel {
            name: "b".into(),
            miss_rate: 0.15,
            occlusion_rate: 0.0,
            false_positive_rate: 1.0,
            ..SensorModel::default()
        },
        ..ScenarioConfig::default()
    }
}

pub fn sim_rate_fidelity(_cases: u32) -> Result<(), String> {
    let cfg = fidelity_config();
    let data = generate(&cfg).map_err(|e| e.to_string())?;
    let n = data.target_count() as f64;
    if n < 1000.0 {
        return Err(format!("only {n} targets generated"));
    }
    let scenes = data.scenes.len() as f64;
    let detected = |sel: fn(&ddfuse_core::sim::SimScene) -> &Vec<bool>| {
        data.scenes
            .iter()
            .flat_map(|s| sel(s).iter())
            .filter(|&&seen| seen)
            .count() as f64
    };
    let binomial = |p: f64| (p * (1.0 - p) / n).sqrt();

    let pa = (1.0 - cfg.sensor_a.occlusion_rate) * (1.0 - cfg.sensor_a.miss_rate);
    let pb = (1.0 - cfg.sensor_b.occlusion_rate) * (1.0 - cfg.sensor_b.miss_rate);
    within_3_sigma(detected(|s| &s.seen_by_a) / n, pa, binomial(pa), "sensor A recall")?;
    within_3_sigma(detected(|s| &s.seen_by_b) / n, pb, binomial(pb), "sensor B recall")?;

    let union = data
        .scenes
        .iter()
        .flat_map(|s| s.seen_by_a.iter().zip(&s.seen_by_b))
        .filter(|(a, b)| **a || **b)
        .count() as f64;
    let pu = 1.0 - (1.0 - pa) * (1.0 - pb);
    within_3_sigma(union / n, pu, binomial(pu), "union coverage")?;

    for (sensor, dets, seen) in [
        (&cfg.sensor_a, data.detections_a().len() as f64, detected(|s| &s.seen_by_a)),
        (&cfg.sensor_b, data.detections_b().len() as f64, detected(|s| &s.seen_by_b)),
    ] {
        let lambda = sensor.false_positive_rate;
        within_3_sigma(
            (dets - seen) / scenes,
            lambda,
            (lambda / scenes).sqrt(),
            &format!("{} false positives per scene", sensor.name),
        )?;
    }
    Ok(())
}

pub fn sim_complementarity(_cases: u32) -> Result<(), String> {
    let data = generate(&ScenarioConfig {
        seed: 99,
        scenes: 100,
        ..ScenarioConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let count = |f: &dyn Fn(bool, bool) -> bool| {
        data.scenes
            .iter()
            .flat_map(|s| s.seen_by_a.iter().zip(&s.seen_by_b))
            .filter(|(a, b)| f(**a, **b))
            .count()
    };
    let only_a = count(&|a, _| a);
    let only_b = count(&|_, b| b);
    let union = count(&|a, b| a || b);
    if union > only_a && union > only_b {
        Ok(())
    } else {
        Err(format!("union {union} not above A {only_a} and B {only_b}"))
    }
}
