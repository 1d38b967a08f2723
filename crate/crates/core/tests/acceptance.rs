//! Acceptance suite: one test per top-level criterion, each printing a
//! pass/fail line. Time budgets are asserted where the criterion pins one.
//!
//! The shared fixture builds the order-4 classical unital once; its caches
//! (point planes, spreads) are filled by the first criterion that needs them.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use unitals_core::bridge::{self, Bridge};
use unitals_core::bruckbose;
use unitals_core::certificate::Status;
use unitals_core::pipeline::{certify_classical, PipelineConfig};
use unitals_core::unital::{self, hermitian_unital, CircleKind, Unital};

fn q4() -> &'static Unital {
    static CELL: OnceLock<Unital> = OnceLock::new();
    CELL.get_or_init(|| hermitian_unital(2).unwrap())
}

fn q4_bridge() -> &'static Bridge {
    static CELL: OnceLock<Bridge> = OnceLock::new();
    CELL.get_or_init(|| Bridge::build(q4(), 0).unwrap())
}

fn report(criterion: &str, t: Instant, budget: Option<Duration>) {
    let elapsed = t.elapsed();
    println!("acceptance {criterion}: PASS ({elapsed:?})");
    if let Some(b) = budget {
        assert!(elapsed < b, "{criterion} exceeded its {b:?} budget: {elapsed:?}");
    }
}

#[test]
fn criterion_01_construction() {
    let t = Instant::now();
    let u = hermitian_unital(2).unwrap();
    assert_eq!(u.v(), 65);
    assert_eq!(u.b(), 208);
    assert!(u.is_unital_design());
    for p in 0..u.v() as u32 {
        assert_eq!(u.lines_through(p).len(), 16);
    }
    report("01 construction (2-(65,5,1), 208 lines)", t, Some(Duration::from_secs(1)));
}

#[test]
fn criterion_02_condition_i() {
    let t = Instant::now();
    assert!(unital::check_onan(&hermitian_unital(1).unwrap()).is_empty());
    assert!(unital::check_onan(q4()).is_empty());
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mutated, planted) = unital::mutate_plant_onan(q4(), &mut rng);
        let found = unital::check_onan(&mutated);
        assert!(!found.is_empty(), "seed {seed}: no configuration found");
        assert!(found.contains(&planted), "seed {seed}: planted quad missed");
    }
    report("02 condition (I) clean + 20 mutations detected", t, Some(Duration::from_secs(30)));
}

#[test]
fn criterion_03_condition_ii() {
    let t = Instant::now();
    assert!(unital::check_condition_ii(q4()).is_none());
    report("03 condition (II) exhaustive at order 4", t, Some(Duration::from_secs(120)));
}

#[test]
fn criterion_04_inversive_planes() {
    let t = Instant::now();
    let u = q4();
    for x in 0..u.v() as u32 {
        let plane = u.inversive_plane_at(x).unwrap();
        assert_eq!(plane.plane.inc.v, 17);
        assert_eq!(plane.plane.inc.b(), 68);
        let classes = plane
            .kinds
            .iter()
            .filter(|&&k| k == CircleKind::Class)
            .count();
        assert_eq!(classes, 48);
        assert_eq!(plane.plane.inc.b() - classes, 20);
        // the infinity point sits on exactly the completed concurrent blocks
        for c in 0..plane.plane.inc.b() as u32 {
            assert_eq!(
                plane.circle_contains_infinity(c),
                plane.kinds[c as usize] == CircleKind::Infinity
            );
        }
    }
    // the placement note is part of the emitted certificates
    let bundle = certify_classical(&hermitian_unital(1).unwrap(), &PipelineConfig::exhaustive());
    let stage = bundle
        .stages
        .iter()
        .find(|s| s.statement == "inversive-planes")
        .unwrap();
    assert!(stage.notes.iter().any(|n| n.contains("infinity placement")));
    report("04 all 65 inversive planes 3-(17,5,1), 48+20, note recorded", t, Some(Duration::from_secs(60)));
}

#[test]
fn criterion_05_special_spreads_and_condition_p() {
    let t = Instant::now();
    let u = q4();
    for l in 0..u.b() as u32 {
        let s = u.special_spread(l).unwrap();
        assert_eq!(s.lines.len(), 13);
        assert_eq!(s.witnesses.len(), 5, "block-diagonal witness at every base point");
    }
    assert!(unital::check_condition_p(u).is_ok());
    report("05 all 208 special spreads + condition (P) exhaustive", t, Some(Duration::from_secs(300)));
}

#[test]
fn criterion_06_triangles() {
    let t = Instant::now();
    let u = q4();
    // unique polar triple for every pair, and the parallelism recovery
    for l in 0..u.b() as u32 {
        let sl = u.special_spread(l).unwrap();
        for &m in &sl.s_star {
            let n = unital::polar_triple(u, l, m).unwrap();
            assert!(sl.in_s_star(n));
            let set = unital::s_star_via_parallelism(u, l, m).unwrap();
            assert_eq!(set, u.special_spread(m).unwrap().s_star);
        }
    }
    // 1000 sampled disjoint triples: all four criteria agree
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut positives = 0;
    let mut negatives = 0;
    let mut tested = 0;
    use rand::Rng;
    while tested < 1000 {
        let l = rng.gen_range(0..u.b() as u32);
        let (m, n) = if tested % 2 == 0 {
            let sl = u.special_spread(l).unwrap();
            let m = sl.s_star[rng.gen_range(0..sl.s_star.len())];
            (m, unital::polar_triple(u, l, m).unwrap())
        } else {
            let dis: Vec<u32> = (0..u.b() as u32)
                .filter(|&k| k != l && !u.lines_meet(l, k))
                .collect();
            let m = dis[rng.gen_range(0..dis.len())];
            let dis2: Vec<u32> = dis
                .iter()
                .copied()
                .filter(|&k| k != m && !u.lines_meet(m, k))
                .collect();
            if dis2.is_empty() {
                continue;
            }
            (m, dis2[rng.gen_range(0..dis2.len())])
        };
        let crit = unital::check_triangle_criteria(u, l, m, n).unwrap();
        assert!(crit.all_agree(), "criteria disagree on ({l}, {m}, {n})");
        if crit.verdict() {
            positives += 1;
            assert_eq!(crit.transversal_count, 25);
        } else {
            negatives += 1;
        }
        tested += 1;
    }
    assert!(positives >= 400 && negatives >= 100);
    report("06 unique triples, 1000-sample criteria agreement, parallelism recovery", t, None);
}

#[test]
fn criterion_07_triply_ruled_partition() {
    let t = Instant::now();
    let u = q4();
    let mut triangles = 0;
    for l in 0..u.b() as u32 {
        let sl = u.special_spread(l).unwrap();
        for &m in &sl.s_star {
            if m < l {
                continue;
            }
            let n = unital::polar_triple(u, l, m).unwrap();
            if n < m {
                continue;
            }
            let trp = unital::triply_ruled_partition(u, l, m, n).unwrap();
            assert_eq!(trp.sets.len(), 2);
            for set in &trp.sets {
                assert_eq!(set.points.len(), 25);
            }
            triangles += 1;
        }
    }
    assert_eq!(triangles, 416);
    report("07 all 416 triangles admit the triply ruled partition", t, None);
}

#[test]
fn criterion_08_gq_bridge() {
    let t = Instant::now();
    let u = q4();
    let b = q4_bridge();
    assert_eq!(b.gq.inc.v, 85);
    assert!(unitals_core::design::verify_isomorphism(
        &b.gq.inc,
        &b.quadric.inc,
        &b.phi.point_map
    ));
    assert_eq!(b.sigma.h_points3.len(), 25);
    assert_eq!(b.spread.lines.len(), 17);
    let sl = u.special_spread(0).unwrap();
    let m = sl.s_star[0];
    let n = unital::polar_triple(u, 0, m).unwrap();
    let (tube, reg) = bridge::verify_tube_and_regularity(u, b, m, n).unwrap();
    assert!(tube.is_tube);
    assert_eq!(reg.regular_triples, 680);
    report("08 GQ axioms, quadric isomorphism, 17-line spread, tube, regularity", t, Some(Duration::from_secs(120)));
}

#[test]
fn criterion_09_classification_and_pencil() {
    let t = Instant::now();
    let u = q4();
    let b = q4_bridge();
    let cls = bridge::classify_reguli(u, b, true).unwrap();
    assert_eq!(cls.reguli.len(), 68);
    assert_eq!((cls.c0, cls.c1, cls.c2), (12, 15, 40));
    assert!(cls.i1.inc.is_t_design(3, 5, 1));
    assert!(cls.i2_is_design);
    assert!(cls.c0_equals_c0_star);

    let stats = bridge::verify_cell_flock_batch(u, b).unwrap();
    assert!(stats.instances > 0);

    let sl = u.special_spread(0).unwrap();
    let m = sl.s_star[0];
    let n = unital::polar_triple(u, 0, m).unwrap();
    let trp = unital::triply_ruled_partition(u, 0, m, n).unwrap();
    let w = bridge::verify_pencil(u, b, &trp).unwrap();
    let mut sizes = w.member_sizes.clone();
    sizes.sort_unstable();
    assert_eq!(sizes, vec![5, 5, 25, 25, 25]);
    report("09 68 circles split 12/15/40, swapped plane is a 3-design, pencil of 5", t, None);
}

#[test]
fn criterion_10_bruck_bose_and_classicality() {
    let t = Instant::now();
    let u = q4();
    let b = q4_bridge();
    let bb = bruckbose::bruck_bose_plane(b).unwrap();
    assert_eq!(bb.inc.v, 273);
    assert!(bb.inc.is_t_design(2, 17, 1));
    let iso = bruckbose::identify_with_pg2(b, &bb).unwrap();
    assert!(!iso.point_map.is_empty());
    let bu = bruckbose::buekenhout_unital(b, &bb).unwrap();
    assert!(bu.inc.is_t_design(2, 5, 1));
    let pp = bruckbose::build_phi_prime(u, b, &bb, &bu).unwrap();
    assert!(unitals_core::design::verify_isomorphism(&u.inc, &bu.inc, &pp.point_map));

    // end-to-end certification under the five-minute budget
    let bundle = certify_classical(u, &PipelineConfig::exhaustive());
    assert_eq!(bundle.verdict, Status::Pass);
    report("10 plane of order 16 = PG(2,16), inherited unital, design isomorphism, end-to-end", t, Some(Duration::from_secs(300)));
}

#[test]
fn criterion_11_negative_controls() {
    let t = Instant::now();
    let u = q4();
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let (mutated, (line, dropped, added)) = unital::mutate_swap_point(u, &mut rng);
        // at least one of the four front stages must fail with a witness
        let onan = !unital::check_onan(&mutated).is_empty();
        let cond2 = unital::check_condition_ii(&mutated).is_some();
        let planes = (0..mutated.v() as u32).any(|x| mutated.inversive_plane_at(x).is_err());
        let spreads = (0..mutated.b() as u32).any(|l| mutated.special_spread(l).is_err());
        assert!(
            onan || cond2 || planes || spreads,
            "mutation seed {seed} (line {line}: {dropped} -> {added}) slipped through"
        );
    }
    report("11 ten seeded single-line mutations all caught", t, None);
}

/// Stretch criterion: the order-8 pipeline in sampled mode. Ignored by
/// default; run with `cargo test -p unitals-core --test acceptance -- --ignored`.
#[test]
#[ignore = "stretch: order-8 sampled pipeline (long run)"]
fn criterion_12_order_8_sampled() {
    let t = Instant::now();
    let u = hermitian_unital(3).unwrap();
    assert_eq!(u.v(), 513);
    assert_eq!(u.b(), 3648);
    let bundle = certify_classical(&u, &PipelineConfig::default_for_order(8));
    for s in &bundle.stages {
        println!(
            "  order-8 stage {:<24} {} {:?}",
            s.statement, s.status, s.notes
        );
    }
    assert_eq!(bundle.verdict, Status::Pass);
    assert_eq!(bundle.mode, "sampled");
    report("12 order-8 sampled pipeline", t, Some(Duration::from_secs(7200)));
}
