//! Unitals: construction of the classical (Hermitian) unital, the
//! conditions (I) and (II), x-parallelism, the inversive planes at each
//! point, special spreads, self-polar triangles, L-parallelism, the
//! triply-ruled partition, and the A_ij cell tables.
//!
//! A `Unital` owns lazily built caches: one inversive plane per point and one
//! special spread per line. Both are computed in parallel on first use and
//! are immutable afterwards, so verification loops can fan out freely.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::{Arc, OnceLock};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{Incidence, InversivePlane};
use crate::error::{Error, Result};
use crate::galois::Field;
use crate::projgeom::Space;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Construction {
    Hermitian,
    External,
}

/// A 2-(n^3+1, n+1, 1) design with caches keyed to its unital structure.
pub struct Unital {
    pub inc: Incidence,
    pub order: usize,
    pub construction: Construction,
    /// PG(2, n^2) point id per unital point, for Hermitian constructions.
    pub ambient_points: Option<Vec<u32>>,
    planes: OnceLock<Vec<std::result::Result<PointPlane, String>>>,
    spreads: OnceLock<Vec<std::result::Result<SpecialSpread, String>>>,
    lparallel: OnceLock<Vec<std::result::Result<LParallelism, String>>>,
}

impl Unital {
    pub fn new(inc: Incidence, order: usize, construction: Construction) -> Result<Unital> {
        if inc.v != order * order * order + 1 {
            return Err(Error::Design(format!(
                "a unital of order {order} has {} points, got {}",
                order * order * order + 1,
                inc.v
            )));
        }
        Ok(Unital {
            inc,
            order,
            construction,
            ambient_points: None,
            planes: OnceLock::new(),
            spreads: OnceLock::new(),
            lparallel: OnceLock::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.order
    }

    pub fn v(&self) -> usize {
        self.inc.v
    }

    pub fn b(&self) -> usize {
        self.inc.b()
    }

    pub fn line(&self, l: u32) -> &[u32] {
        self.inc.block(l)
    }

    pub fn lines_through(&self, p: u32) -> &[u32] {
        &self.inc.point_blocks[p as usize]
    }

    pub fn line_through(&self, a: u32, b: u32) -> Option<u32> {
        self.inc.block_through(a, b)
    }

    pub fn on_line(&self, p: u32, l: u32) -> bool {
        self.inc.block(l).binary_search(&p).is_ok()
    }

    pub fn lines_meet(&self, a: u32, b: u32) -> bool {
        self.inc.meet_size(a, b) > 0
    }

    /// Exhaustive design check: 2-(n^3+1, n+1, 1).
    pub fn is_unital_design(&self) -> bool {
        self.inc.is_t_design(2, self.order + 1, 1)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut j = self.inc.to_json();
        let obj = j.as_object_mut().unwrap();
        obj.insert("order".into(), serde_json::json!(self.order));
        obj.insert(
            "construction".into(),
            serde_json::to_value(&self.construction).unwrap(),
        );
        j
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Unital> {
        let inc = Incidence::from_json(value)?;
        let order = value
            .get("order")
            .and_then(|v| v.as_u64())
            .map(|o| o as usize)
            .or_else(|| {
                // infer from v = n^3 + 1
                let v = inc.v;
                (1..=64).find(|n| n * n * n + 1 == v)
            })
            .ok_or_else(|| Error::Design("cannot infer unital order".into()))?;
        let construction = value
            .get("construction")
            .map(|c| serde_json::from_value(c.clone()))
            .transpose()?
            .unwrap_or(Construction::External);
        Unital::new(inc, order, construction)
    }
}

/// The classical unital of order q = 2^e: absolute points of the unitary
/// polarity x0^{q+1} + x1^{q+1} + x2^{q+1} of PG(2, q^2), with the secant
/// lines as blocks. Point ids follow the PG(2, q^2) enumeration.
pub fn hermitian_unital(e: u32) -> Result<Unital> {
    let field = Arc::new(Field::new(2 * e)?);
    let pg = Space::new(2, Arc::clone(&field));
    let q = 1usize << e;
    let absolute: Vec<u32> = (0..pg.num_points() as u32)
        .filter(|&p| {
            let c = &pg.points[p as usize];
            let mut acc = 0;
            for &x in c {
                acc = field.add(acc, field.norm(x).unwrap());
            }
            acc == 0
        })
        .collect();
    if absolute.len() != q * q * q + 1 {
        return Err(Error::Geometry(format!(
            "Hermitian curve has {} points, expected {}",
            absolute.len(),
            q * q * q + 1
        )));
    }
    let index_of: HashMap<u32, u32> = absolute
        .iter()
        .enumerate()
        .map(|(i, &p)| (p, i as u32))
        .collect();
    let mut blocks = Vec::new();
    for line in &pg.lines {
        let hits: Vec<u32> = line
            .iter()
            .filter_map(|p| index_of.get(p).copied())
            .collect();
        match hits.len() {
            1 => {}
            h if h == q + 1 => blocks.push(hits),
            h => {
                return Err(Error::Geometry(format!(
                    "a line meets the Hermitian curve in {h} points"
                )))
            }
        }
    }
    let inc = Incidence::new(absolute.len(), blocks)?;
    let mut u = Unital::new(inc, q, Construction::Hermitian)?;
    u.ambient_points = Some(absolute);
    Ok(u)
}

// ---------------------------------------------------------------------------
// Condition (I): O'Nan configurations
// ---------------------------------------------------------------------------

/// Four distinct lines pairwise meeting in six distinct points.
pub fn verify_onan_quad(inc: &Incidence, lines: &[u32; 4]) -> bool {
    let mut pts = Vec::with_capacity(6);
    for i in 0..4 {
        for j in (i + 1)..4 {
            if lines[i] == lines[j] {
                return false;
            }
            let meet = inc.meet(lines[i], lines[j]);
            if meet.len() != 1 {
                return false;
            }
            pts.push(meet[0]);
        }
    }
    pts.sort_unstable();
    pts.dedup();
    pts.len() == 6
}

/// Exhaustive O'Nan search by triangle extension: every triangle of lines is
/// extended by joining fresh point pairs on two of its sides; the join is a
/// fourth quadrilateral line exactly when it cuts the third side off the
/// vertices. Found configurations are independently re-verified.
pub fn check_onan(u: &Unital) -> Vec<[u32; 4]> {
    let inc = &u.inc;
    let b = inc.b() as u32;
    let found: Vec<[u32; 4]> = (0..b)
        .into_par_iter()
        .flat_map_iter(|l1| {
            let mut local = Vec::new();
            let mut thirds: Vec<(u32, u32, u32)> = Vec::new();
            for l2 in (l1 + 1)..b {
                let Some(p3) = inc.meet_one(l1, l2) else { continue };
                // all triangles with third side above l2
                thirds.clear();
                for &a in inc.block(l1) {
                    if a == p3 {
                        continue;
                    }
                    for &bp in inc.block(l2) {
                        if bp == p3 {
                            continue;
                        }
                        inc.for_blocks_through(a, bp, |l3| {
                            if l3 > l2 {
                                thirds.push((l3, a, bp));
                            }
                        });
                    }
                }
                thirds.sort_unstable();
                thirds.dedup();
                for &(l3, p2, p1) in &thirds {
                    // p2 = l1 n l3, p1 = l2 n l3 (fresh vertices)
                    for &a2 in inc.block(l1) {
                        if a2 == p3 || a2 == p2 {
                            continue;
                        }
                        for &b2 in inc.block(l2) {
                            if b2 == p3 || b2 == p1 {
                                continue;
                            }
                            inc.for_blocks_through(a2, b2, |l4| {
                                if l4 == l1 || l4 == l2 || l4 == l3 {
                                    return;
                                }
                                let Some(c) = inc.meet_one(l3, l4) else { return };
                                if c == p1 || c == p2 {
                                    return;
                                }
                                let mut quad = [l1, l2, l3, l4];
                                quad.sort_unstable();
                                if verify_onan_quad(inc, &quad) {
                                    local.push(quad);
                                }
                            });
                        }
                    }
                }
            }
            local
        })
        .collect();
    let mut out: Vec<[u32; 4]> = found;
    out.sort_unstable();
    out.dedup();
    out
}

// ---------------------------------------------------------------------------
// Condition (II) and x-parallelism
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ConditionIiWitness {
    pub point: u32,
    pub line: u32,
    pub missing_line: u32,
    pub base: u32,
}

/// The lines through `x` met by `m` (which should miss `x`), as a sorted set.
fn met_lines_through(u: &Unital, x: u32, m: u32) -> Vec<u32> {
    let mut met = Vec::new();
    for &p in u.line(m) {
        u.inc.for_blocks_through(p, x, |l| met.push(l));
    }
    met.sort_unstable();
    met.dedup();
    met
}

/// Exhaustive check of condition (II): for every point x, line L on x, line M
/// meeting L but missing x, and base point y' on L other than x, some line
/// through y' avoiding x meets every line from x that meets M.
pub fn check_condition_ii(u: &Unital) -> Option<ConditionIiWitness> {
    let results: Vec<Option<ConditionIiWitness>> = (0..u.v() as u32)
        .into_par_iter()
        .map(|x| {
            // met-line key and covered points per parallelism class at x
            let mut cover: HashMap<Vec<u32>, HashSet<u32>> = HashMap::new();
            let mut keys: HashMap<u32, Vec<u32>> = HashMap::new();
            for m in 0..u.b() as u32 {
                if u.on_line(x, m) {
                    continue;
                }
                let key = met_lines_through(u, x, m);
                let entry = cover.entry(key.clone()).or_default();
                for &p in u.line(m) {
                    entry.insert(p);
                }
                keys.insert(m, key);
            }
            for m in 0..u.b() as u32 {
                if u.on_line(x, m) {
                    continue;
                }
                let key = &keys[&m];
                let covered = &cover[key];
                for &l in key {
                    for &yp in u.line(l) {
                        if yp == x || covered.contains(&yp) {
                            continue;
                        }
                        // strict same-class cover failed; fall back to the
                        // literal condition before reporting a witness
                        let ok = u.lines_through(yp).iter().any(|&cand| {
                            !u.on_line(x, cand)
                                && key.iter().all(|&k| u.inc.meet_size(cand, k) > 0)
                        });
                        if !ok {
                            return Some(ConditionIiWitness {
                                point: x,
                                line: l,
                                missing_line: m,
                                base: yp,
                            });
                        }
                    }
                }
            }
            None
        })
        .collect();
    results.into_iter().flatten().next()
}

#[derive(Debug, Clone)]
pub struct ParallelClass {
    pub base: u32,
    pub members: Vec<u32>,
    pub met: Vec<u32>,
}

/// Partition of the lines missing `x` into x-parallel classes, keyed by the
/// set of met lines through x. Every class must have exactly n members.
pub fn x_parallel_classes(u: &Unital, x: u32) -> Result<Vec<ParallelClass>> {
    let mut groups: BTreeMap<Vec<u32>, Vec<u32>> = BTreeMap::new();
    for m in 0..u.b() as u32 {
        if u.on_line(x, m) {
            continue;
        }
        groups.entry(met_lines_through(u, x, m)).or_default().push(m);
    }
    let n = u.order;
    let mut classes = Vec::with_capacity(groups.len());
    for (met, members) in groups {
        if met.len() != n + 1 {
            return Err(Error::verification(
                "x-parallelism",
                format!(
                    "line {} misses {x} but meets {} lines through it",
                    members[0],
                    met.len()
                ),
            ));
        }
        if members.len() != n {
            return Err(Error::verification(
                "x-parallelism",
                format!(
                    "class of line {} at point {x} has {} members, expected {n}",
                    members[0],
                    members.len()
                ),
            ));
        }
        classes.push(ParallelClass { base: x, members, met });
    }
    Ok(classes)
}

// ---------------------------------------------------------------------------
// The inversive plane at a point
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CircleKind {
    /// An x-parallel class; the circle is its met-line set.
    Class,
    /// A concurrent-line block completed by the infinity point.
    Infinity,
}

/// The inversive plane I(x): points are the n^2 lines through x plus one
/// infinity symbol; circles are the x-parallel classes together with the
/// concurrent-line blocks. The infinity point lies exactly on the latter.
pub struct PointPlane {
    pub base: u32,
    pub plane: InversivePlane,
    /// I(x) point id -> unital line id (the infinity point has none).
    pub lines: Vec<u32>,
    pub infinity: u32,
    ip_of_line: HashMap<u32, u32>,
    pub kinds: Vec<CircleKind>,
    /// For class circles: the unital lines forming the class.
    pub class_members: Vec<Option<Vec<u32>>>,
    class_of_line: HashMap<u32, u32>,
}

impl PointPlane {
    /// I(x)-point id of a unital line through the base point.
    pub fn ip(&self, line: u32) -> u32 {
        self.ip_of_line[&line]
    }

    pub fn try_ip(&self, line: u32) -> Option<u32> {
        self.ip_of_line.get(&line).copied()
    }

    /// Circle id of the x-parallel class of a line missing the base point.
    pub fn class_circle(&self, line: u32) -> u32 {
        self.class_of_line[&line]
    }

    pub fn circle_contains_infinity(&self, c: u32) -> bool {
        self.plane.inc.block(c).binary_search(&self.infinity).is_ok()
    }
}

fn build_point_plane(u: &Unital, x: u32) -> Result<PointPlane> {
    let n = u.order;
    let through: Vec<u32> = u.lines_through(x).to_vec();
    if through.len() != n * n {
        return Err(Error::verification(
            "inversive-plane",
            format!("point {x} lies on {} lines, expected {}", through.len(), n * n),
        ));
    }
    let ip_of_line: HashMap<u32, u32> = through
        .iter()
        .enumerate()
        .map(|(i, &l)| (l, i as u32))
        .collect();
    let infinity = (n * n) as u32;

    // class circles from x-parallelism; the met sets double as a lookup for
    // the transversal scan below
    let classes = x_parallel_classes(u, x)?;
    let mut circles: Vec<Vec<u32>> = Vec::new();
    let mut meta: Vec<(CircleKind, Option<Vec<u32>>)> = Vec::new();
    let mut met_ips: HashMap<u32, std::sync::Arc<Vec<u32>>> = HashMap::new();
    for class in &classes {
        let mut circle: Vec<u32> = class.met.iter().map(|l| ip_of_line[l]).collect();
        circle.sort_unstable();
        let shared = std::sync::Arc::new(circle.clone());
        for &member in &class.members {
            met_ips.insert(member, std::sync::Arc::clone(&shared));
        }
        circles.push(circle);
        meta.push((CircleKind::Class, Some(class.members.clone())));
    }

    // infinity circles: pairs of lines through x with no common transversal
    let nn = n * n;
    let mut done = vec![false; nn * nn];
    for a in 0..nn {
        for bi in (a + 1)..nn {
            if done[a * nn + bi] {
                continue;
            }
            let la = through[a];
            let lb = through[bi];
            let mut met_union = vec![false; nn];
            for &p in u.line(la) {
                if p == x {
                    continue;
                }
                for &r in u.line(lb) {
                    if r == x {
                        continue;
                    }
                    u.inc.for_blocks_through(p, r, |k| {
                        if let Some(ips) = met_ips.get(&k) {
                            for &t in ips.iter() {
                                met_union[t as usize] = true;
                            }
                        }
                    });
                }
            }
            let mut circle: Vec<u32> = (0..nn as u32)
                .filter(|&i| !met_union[i as usize])
                .collect();
            circle.push(a as u32);
            circle.push(bi as u32);
            circle.sort_unstable();
            circle.dedup();
            if circle.len() != n {
                return Err(Error::verification(
                    "inversive-plane",
                    format!(
                        "concurrent block of lines {la}, {lb} at point {x} has {} lines, expected {n}",
                        circle.len()
                    ),
                ));
            }
            for (i, &ca) in circle.iter().enumerate() {
                for &cb in circle.iter().skip(i + 1) {
                    done[ca as usize * nn + cb as usize] = true;
                }
            }
            circle.push(infinity);
            circles.push(circle);
            meta.push((CircleKind::Infinity, None));
        }
    }

    let inc = Incidence::new(nn + 1, circles.clone())?;
    let plane = InversivePlane::new(inc, n)
        .map_err(|e| Error::verification("inversive-plane", format!("at point {x}: {e}")))?;

    // re-align metadata with the sorted block ids
    let mut kinds = vec![CircleKind::Class; plane.inc.b()];
    let mut class_members: Vec<Option<Vec<u32>>> = vec![None; plane.inc.b()];
    let mut class_of_line = HashMap::new();
    for (raw, (kind, members)) in circles.iter().zip(meta) {
        let mut key = raw.clone();
        key.sort_unstable();
        let id = plane
            .inc
            .block_id_of(&key)
            .expect("every constructed circle is a block");
        kinds[id as usize] = kind;
        if let Some(members) = members {
            for &m in &members {
                class_of_line.insert(m, id);
            }
            class_members[id as usize] = Some(members);
        }
    }

    Ok(PointPlane {
        base: x,
        plane,
        lines: through,
        infinity,
        ip_of_line,
        kinds,
        class_members,
        class_of_line,
    })
}

impl Unital {
    fn planes_cache(&self) -> &Vec<std::result::Result<PointPlane, String>> {
        self.planes.get_or_init(|| {
            (0..self.v() as u32)
                .into_par_iter()
                .map(|x| build_point_plane(self, x).map_err(|e| e.to_string()))
                .collect()
        })
    }

    /// The inversive plane I(x), built on demand and cached.
    pub fn inversive_plane_at(&self, x: u32) -> Result<&PointPlane> {
        self.planes_cache()[x as usize]
            .as_ref()
            .map_err(|e| Error::verification("inversive-plane", e.clone()))
    }

    /// Whether two lines missing z meet the same lines through z.
    pub fn parallel_at(&self, z: u32, a: u32, b: u32) -> Result<bool> {
        let plane = self.inversive_plane_at(z)?;
        Ok(plane.class_circle(a) == plane.class_circle(b))
    }
}

// ---------------------------------------------------------------------------
// Special spreads
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SpecialnessWitness {
    pub point: u32,
    /// Groups of n spread lines, one per flock circle at this point.
    pub spread_classes: Vec<Vec<u32>>,
    /// Matching groups of n+1 lines through the point.
    pub pencil_classes: Vec<Vec<u32>>,
}

/// The spread m_L: the flock with carriers L and infinity in I(x) pulls back
/// to n-1 parallel classes whose members, together with L, partition the
/// unital. The same line set must arise from every base point of L, and the
/// meet pattern at each base point is block-diagonal.
#[derive(Debug, Clone)]
pub struct SpecialSpread {
    pub line: u32,
    pub lines: Vec<u32>,
    pub s_star: Vec<u32>,
    pub witnesses: Vec<SpecialnessWitness>,
}

impl SpecialSpread {
    pub fn contains(&self, l: u32) -> bool {
        self.lines.binary_search(&l).is_ok()
    }

    pub fn in_s_star(&self, l: u32) -> bool {
        self.s_star.binary_search(&l).is_ok()
    }
}

fn spread_from_base(u: &Unital, l: u32, x: u32) -> Result<(Vec<u32>, SpecialnessWitness)> {
    let plane = u.inversive_plane_at(x)?;
    let ip_l = plane
        .try_ip(l)
        .ok_or_else(|| Error::Precondition(format!("point {x} not on line {l}")))?;
    let flock = plane.plane.flock(ip_l, plane.infinity).map_err(|e| {
        Error::verification("special-spread", format!("flock at point {x} of line {l}: {e}"))
    })?;
    let mut lines = vec![l];
    let mut spread_classes = Vec::new();
    let mut pencil_classes = Vec::new();
    for &c in &flock {
        let members = plane.class_members[c as usize].as_ref().ok_or_else(|| {
            Error::verification(
                "special-spread",
                format!("flock circle {c} at point {x} is not a parallel class"),
            )
        })?;
        lines.extend_from_slice(members);
        spread_classes.push(members.clone());
        let kx: Vec<u32> = plane
            .plane
            .inc
            .block(c)
            .iter()
            .map(|&ip| plane.lines[ip as usize])
            .collect();
        pencil_classes.push(kx);
    }
    lines.sort_unstable();
    lines.dedup();
    Ok((
        lines,
        SpecialnessWitness {
            point: x,
            spread_classes,
            pencil_classes,
        },
    ))
}

fn build_special_spread(u: &Unital, l: u32) -> Result<SpecialSpread> {
    let n = u.order;
    let base_points = u.line(l).to_vec();
    let (lines, first_witness) = spread_from_base(u, l, base_points[0])?;
    if lines.len() != n * n - n + 1 {
        return Err(Error::verification(
            "special-spread",
            format!("spread of line {l} has {} lines", lines.len()),
        ));
    }
    // partition of the point set
    let mut covered = vec![false; u.v()];
    for &m in &lines {
        for &p in u.line(m) {
            if covered[p as usize] {
                return Err(Error::verification(
                    "special-spread",
                    format!("lines of the spread of {l} overlap at point {p}"),
                ));
            }
            covered[p as usize] = true;
        }
    }
    if !covered.iter().all(|&c| c) {
        return Err(Error::verification(
            "special-spread",
            format!("spread of line {l} misses points"),
        ));
    }
    let mut witnesses = vec![first_witness];
    for &x in &base_points[1..] {
        let (other, witness) = spread_from_base(u, l, x)?;
        if other != lines {
            return Err(Error::verification(
                "special-spread",
                format!(
                    "spread of line {l} differs between base points {} and {x}",
                    base_points[0]
                ),
            ));
        }
        witnesses.push(witness);
    }
    // block-diagonal meet pattern at every base point: a spread line meets a
    // pencil line exactly when they sit in matching groups, which holds
    // exactly when the spread line's met set through the base point equals
    // its own pencil group (the groups partition the lines off L)
    for w in &witnesses {
        let mut sorted_pencils: Vec<Vec<u32>> = w.pencil_classes.clone();
        for p in sorted_pencils.iter_mut() {
            p.sort_unstable();
        }
        for (i, spread_class) in w.spread_classes.iter().enumerate() {
            for &m in spread_class {
                let met = met_lines_through(u, w.point, m);
                if met != sorted_pencils[i] {
                    return Err(Error::verification(
                        "special-spread",
                        format!(
                            "meet pattern at point {} of line {l} is not block-diagonal (spread line {m})",
                            w.point
                        ),
                    ));
                }
            }
        }
    }
    let s_star: Vec<u32> = lines.iter().copied().filter(|&m| m != l).collect();
    Ok(SpecialSpread {
        line: l,
        lines,
        s_star,
        witnesses,
    })
}

impl Unital {
    fn spreads_cache(&self) -> &Vec<std::result::Result<SpecialSpread, String>> {
        self.spreads.get_or_init(|| {
            // planes first, in parallel, so spread construction only reads
            self.planes_cache();
            (0..self.b() as u32)
                .into_par_iter()
                .map(|l| build_special_spread(self, l).map_err(|e| e.to_string()))
                .collect()
        })
    }

    pub fn special_spread(&self, l: u32) -> Result<&SpecialSpread> {
        self.spreads_cache()[l as usize]
            .as_ref()
            .map_err(|e| Error::verification("special-spread", e.clone()))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionPWitness {
    pub clause: String,
    pub lines: Vec<u32>,
}

/// Condition (P): every line carries a special spread, membership is
/// symmetric, disjoint lines share a spread member, and spread pairs meet in
/// at most three lines.
pub fn check_condition_p(u: &Unital) -> std::result::Result<(), ConditionPWitness> {
    let b = u.b() as u32;
    for l in 0..b {
        let sl = match u.special_spread(l) {
            Ok(s) => s,
            Err(_) => {
                return Err(ConditionPWitness {
                    clause: "specialness".into(),
                    lines: vec![l],
                })
            }
        };
        if !sl.contains(l) {
            return Err(ConditionPWitness {
                clause: "(p)(i)".into(),
                lines: vec![l],
            });
        }
    }
    // spread membership as bitsets for the pairwise intersection scan
    let words = u.b().div_ceil(64);
    let mut masks = vec![0u64; u.b() * words];
    for l in 0..b {
        let sl = match u.special_spread(l) {
            Ok(s) => s,
            Err(_) => {
                return Err(ConditionPWitness {
                    clause: "specialness".into(),
                    lines: vec![l],
                })
            }
        };
        for &k in &sl.lines {
            masks[l as usize * words + k as usize / 64] |= 1 << (k % 64);
        }
    }
    let verdicts: Vec<Option<ConditionPWitness>> = (0..b)
        .into_par_iter()
        .map(|l| {
            let sl = u.special_spread(l).unwrap();
            for &m in &sl.s_star {
                let sm = u.special_spread(m).unwrap();
                if !sm.in_s_star(l) {
                    return Some(ConditionPWitness {
                        clause: "(p)(ii)".into(),
                        lines: vec![l, m],
                    });
                }
            }
            let lmask = &masks[l as usize * words..(l as usize + 1) * words];
            for m in (l + 1)..b {
                if u.lines_meet(l, m) {
                    continue;
                }
                let mmask = &masks[m as usize * words..(m as usize + 1) * words];
                let mut common = 0u32;
                for (a, b) in lmask.iter().zip(mmask) {
                    common += (a & b).count_ones();
                }
                if common > 3 {
                    return Some(ConditionPWitness {
                        clause: "|m_J n m_J'| <= 3".into(),
                        lines: vec![l, m],
                    });
                }
                // l and m themselves never lie in both spreads of a disjoint
                // pair unless membership is mutual, so a shared third line
                // needs the count to exceed the mutual memberships
                let mutual = u32::from(sl.contains(m)) + u32::from(u.special_spread(m).unwrap().contains(l));
                if common <= mutual {
                    return Some(ConditionPWitness {
                        clause: "(p)(iii)".into(),
                        lines: vec![l, m],
                    });
                }
            }
            None
        })
        .collect();
    match verdicts.into_iter().flatten().next() {
        Some(w) => Err(w),
        None => Ok(()),
    }
}

// ---------------------------------------------------------------------------
// Self-polar triangles
// ---------------------------------------------------------------------------

fn triple_is_self_polar(u: &Unital, l: u32, m: u32, n: u32) -> Result<bool> {
    let mut triple = vec![l, m, n];
    triple.sort_unstable();
    let sl = u.special_spread(l)?;
    let sm = u.special_spread(m)?;
    let sn = u.special_spread(n)?;
    let inter = |a: &SpecialSpread, b: &SpecialSpread| -> Vec<u32> {
        a.lines.iter().copied().filter(|&k| b.contains(k)).collect()
    };
    Ok(inter(sl, sm) == triple && inter(sl, sn) == triple && inter(sm, sn) == triple)
}

/// The unique line completing `l` and `m in S*_l` to a self-polar triangle.
pub fn polar_triple(u: &Unital, l: u32, m: u32) -> Result<u32> {
    let sl = u.special_spread(l)?;
    if !sl.in_s_star(m) {
        return Err(Error::Precondition(format!(
            "line {m} is not in the punctured spread of {l}"
        )));
    }
    let sm = u.special_spread(m)?;
    let candidates: Vec<u32> = sl
        .lines
        .iter()
        .copied()
        .filter(|&k| k != l && k != m && sm.contains(k))
        .collect();
    let mut verified = Vec::new();
    for &n in &candidates {
        if triple_is_self_polar(u, l, m, n)? {
            verified.push(n);
        }
    }
    match verified.as_slice() {
        [n] => Ok(*n),
        [] => Err(Error::verification(
            "polar-triangle",
            format!("no third line completes ({l}, {m})"),
        )),
        _ => Err(Error::verification(
            "polar-triangle",
            format!("{} candidates complete ({l}, {m})", verified.len()),
        )),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TriangleCriteria {
    pub self_polar: bool,
    pub parallel_from_third: bool,
    pub transversal_closure: bool,
    pub two_point_parallel: bool,
    pub transversal_count: usize,
}

impl TriangleCriteria {
    pub fn all_agree(&self) -> bool {
        let v = self.self_polar;
        self.parallel_from_third == v
            && self.transversal_closure == v
            && self.two_point_parallel == v
    }

    pub fn verdict(&self) -> bool {
        self.self_polar
    }
}

/// The four equivalent descriptions of a self-polar triangle, evaluated
/// independently on a disjoint line triple.
pub fn check_triangle_criteria(u: &Unital, l: u32, m: u32, n: u32) -> Result<TriangleCriteria> {
    if u.lines_meet(l, m) || u.lines_meet(l, n) || u.lines_meet(m, n) {
        return Err(Error::Precondition("triangle lines must be disjoint".into()));
    }
    let c1 = triple_is_self_polar(u, l, m, n)?;

    let mut c2 = true;
    for &z in u.line(n) {
        if !u.parallel_at(z, l, m)? {
            c2 = false;
            break;
        }
    }

    // lines meeting at least two of {l, m, n}
    let mut meeting: HashMap<u32, u32> = HashMap::new();
    for &side in &[l, m, n] {
        let mut seen = HashSet::new();
        for &p in u.line(side) {
            for &k in u.lines_through(p) {
                if k != l && k != m && k != n && seen.insert(k) {
                    *meeting.entry(k).or_insert(0) += 1;
                }
            }
        }
    }
    let two_plus: Vec<u32> = meeting
        .iter()
        .filter(|&(_, &c)| c >= 2)
        .map(|(&k, _)| k)
        .collect();
    let nn = u.order;
    let c3 = two_plus.len() == (nn + 1) * (nn + 1) && two_plus.iter().all(|&k| meeting[&k] == 3);
    let transversal_count = two_plus.iter().filter(|&&k| meeting[&k] == 3).count();

    let sl = u.special_spread(l)?;
    let mut parallel_points = 0;
    for &z in u.line(n) {
        if u.parallel_at(z, l, m)? {
            parallel_points += 1;
        }
    }
    let c4 = sl.in_s_star(m) && parallel_points >= 2;

    Ok(TriangleCriteria {
        self_polar: c1,
        parallel_from_third: c2,
        transversal_closure: c3,
        two_point_parallel: c4,
        transversal_count,
    })
}

/// S*_M recovered through parallelism: the lines y-parallel to `l` for some
/// point y of `m`. Checked against the spread-derived S*_M, with the expected
/// multiplicity profile (the triangle partners arise from every y, the rest
/// from exactly one).
pub fn s_star_via_parallelism(u: &Unital, l: u32, m: u32) -> Result<Vec<u32>> {
    let sl = u.special_spread(l)?;
    if !sl.in_s_star(m) {
        return Err(Error::Precondition(format!(
            "line {m} is not in the punctured spread of {l}"
        )));
    }
    let mut multiplicity: HashMap<u32, usize> = HashMap::new();
    for &y in u.line(m) {
        let plane = u.inversive_plane_at(y)?;
        let class = plane.class_circle(l);
        let members = plane.class_members[class as usize]
            .as_ref()
            .expect("class circles carry members");
        for &j in members {
            *multiplicity.entry(j).or_insert(0) += 1;
        }
    }
    let mut set: Vec<u32> = multiplicity.keys().copied().collect();
    set.sort_unstable();
    let sm = u.special_spread(m)?;
    if set != sm.s_star {
        return Err(Error::verification(
            "parallel-s-star",
            format!("parallelism set of ({l}, {m}) differs from the spread"),
        ));
    }
    let n = u.order;
    if set.len() != n * n - n {
        return Err(Error::verification(
            "parallel-s-star",
            format!("parallelism set has {} lines", set.len()),
        ));
    }
    let partner = polar_triple(u, l, m)?;
    for (&j, &count) in &multiplicity {
        let expected = if j == l || j == partner { n + 1 } else { 1 };
        if count != expected {
            return Err(Error::verification(
                "parallel-s-star",
                format!("line {j} arises from {count} base points, expected {expected}"),
            ));
        }
    }
    Ok(set)
}

// ---------------------------------------------------------------------------
// L-parallelism
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct LClass {
    pub members: Vec<u32>,
    /// The n+1 spread lines met by every member.
    pub met: Vec<u32>,
    pub points: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct LParallelism {
    pub line: u32,
    pub classes: Vec<LClass>,
    /// Index of the L-non-parallel partner class (same met lines, members
    /// meeting rather than missing each other).
    pub partner: Vec<u32>,
}

impl LParallelism {
    pub fn class_of(&self, line: u32) -> Option<u32> {
        self.classes
            .iter()
            .position(|c| c.members.binary_search(&line).is_ok())
            .map(|i| i as u32)
    }
}

fn build_l_parallelism(u: &Unital, l: u32) -> Result<LParallelism> {
    let sl = u.special_spread(l)?;
    let n = u.order;
    // spread line covering each point, for O(n) met-set computation
    let mut cover = vec![u32::MAX; u.v()];
    for &k in &sl.lines {
        for &p in u.line(k) {
            cover[p as usize] = k;
        }
    }
    let mut groups: BTreeMap<Vec<u32>, Vec<u32>> = BTreeMap::new();
    for j in 0..u.b() as u32 {
        if j == l || u.lines_meet(l, j) || sl.contains(j) {
            continue;
        }
        let mut met: Vec<u32> = u.line(j).iter().map(|&p| cover[p as usize]).collect();
        met.sort_unstable();
        met.dedup();
        if met.len() != n + 1 || met.contains(&l) {
            return Err(Error::verification(
                "l-parallelism",
                format!("line {j} meets {} spread lines of {l}", met.len()),
            ));
        }
        groups.entry(met).or_default().push(j);
    }
    let mut classes = Vec::new();
    let mut partner = Vec::new();
    for (met, group) in groups {
        if group.len() != 2 * (n + 1) {
            return Err(Error::verification(
                "l-parallelism",
                format!("met-line group of size {} for line {l}", group.len()),
            ));
        }
        let seed = group[0];
        let mut class_a = vec![seed];
        let mut class_b = Vec::new();
        for &j in &group[1..] {
            if u.lines_meet(seed, j) {
                class_b.push(j);
            } else {
                class_a.push(j);
            }
        }
        if class_a.len() != n + 1 || class_b.len() != n + 1 {
            return Err(Error::verification(
                "l-parallelism",
                format!("classes of sizes {}, {} for line {l}", class_a.len(), class_b.len()),
            ));
        }
        // both classes partition the points covered by the met spread lines;
        // an exact cover also certifies that class members are disjoint
        let mut expected: Vec<u32> = met
            .iter()
            .flat_map(|&k| u.line(k).iter().copied())
            .collect();
        expected.sort_unstable();
        expected.dedup();
        for class in [&class_a, &class_b] {
            let mut covered = 0;
            let mut seen: HashSet<u32> = HashSet::with_capacity(expected.len());
            for &k in class.iter() {
                for &p in u.line(k) {
                    if expected.binary_search(&p).is_err() || !seen.insert(p) {
                        return Err(Error::verification(
                            "l-parallelism",
                            format!("ruling of line {l} does not partition the met-line points"),
                        ));
                    }
                    covered += 1;
                }
            }
            if covered != expected.len() {
                return Err(Error::verification(
                    "l-parallelism",
                    format!("ruling of line {l} misses met-line points"),
                ));
            }
        }
        // every member of one class meets every member of the partner: the
        // points of an A-line must spread over all n+1 B-lines
        let mut owner: HashMap<u32, u32> = HashMap::with_capacity(expected.len());
        for &k in &class_b {
            for &p in u.line(k) {
                owner.insert(p, k);
            }
        }
        for &a in &class_a {
            let mut hit: Vec<u32> = u.line(a).iter().map(|p| owner[p]).collect();
            hit.sort_unstable();
            hit.dedup();
            if hit.len() != n + 1 {
                return Err(Error::verification(
                    "l-parallelism",
                    format!("partner classes of line {l} contain disjoint members"),
                ));
            }
        }
        let idx = classes.len() as u32;
        classes.push(LClass {
            members: class_a,
            met: met.clone(),
            points: expected.clone(),
        });
        classes.push(LClass {
            members: class_b,
            met,
            points: expected,
        });
        partner.push(idx + 1);
        partner.push(idx);
    }
    let expected_classes = n * (n - 1) * (n - 2);
    if classes.len() != expected_classes {
        return Err(Error::verification(
            "l-parallelism",
            format!(
                "{} classes for line {l}, expected {expected_classes}",
                classes.len()
            ),
        ));
    }
    Ok(LParallelism {
        line: l,
        classes,
        partner,
    })
}

impl Unital {
    fn lparallel_cache(&self) -> &Vec<std::result::Result<LParallelism, String>> {
        self.lparallel.get_or_init(|| {
            self.spreads_cache();
            (0..self.b() as u32)
                .into_par_iter()
                .map(|l| build_l_parallelism(self, l).map_err(|e| e.to_string()))
                .collect()
        })
    }

    pub fn l_parallel_classes(&self, l: u32) -> Result<&LParallelism> {
        self.lparallel_cache()[l as usize]
            .as_ref()
            .map_err(|e| Error::verification("l-parallelism", e.clone()))
    }
}

// ---------------------------------------------------------------------------
// Triply ruled partition
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct RuledSet {
    pub points: Vec<u32>,
    pub l_ruling: Vec<u32>,
    pub m_ruling: Vec<u32>,
    pub n_ruling: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct TriplyRuled {
    pub triangle: [u32; 3],
    pub sets: Vec<RuledSet>,
}

/// Partition the unital into the triangle (l, m, n) and n-2 sets of (n+1)^2
/// points, each ruled by lines of all three punctured spreads.
pub fn triply_ruled_partition(u: &Unital, l: u32, m: u32, n: u32) -> Result<TriplyRuled> {
    if !triple_is_self_polar(u, l, m, n)? {
        return Err(Error::Precondition(format!(
            "({l}, {m}, {n}) is not a self-polar triangle"
        )));
    }
    triply_ruled_from_seeds(u, l, m, n, &mut |candidates| candidates[0])
}

/// Same construction with an arbitrary seed-line selector, for checking that
/// the resulting family of point sets does not depend on the choices.
pub fn triply_ruled_from_seeds(
    u: &Unital,
    l: u32,
    m: u32,
    n: u32,
    pick: &mut dyn FnMut(&[u32]) -> u32,
) -> Result<TriplyRuled> {
    let order = u.order;
    let sl = u.special_spread(l)?;
    let sm = u.special_spread(m)?;
    let sn = u.special_spread(n)?;
    let lp = u.l_parallel_classes(l)?;
    let mut used: HashSet<u32> = HashSet::new();
    let mut sets = Vec::new();
    for _ in 0..order.saturating_sub(2) {
        let candidates: Vec<u32> = sm
            .lines
            .iter()
            .copied()
            .filter(|&k| k != l && k != m && k != n && !used.contains(&k))
            .collect();
        if candidates.is_empty() {
            return Err(Error::verification(
                "triply-ruled",
                "ran out of seed lines",
            ));
        }
        let seed = pick(&candidates);
        let class_id = lp
            .class_of(seed)
            .ok_or_else(|| Error::verification("triply-ruled", format!("seed {seed} has no class")))?;
        let class = &lp.classes[class_id as usize];
        let partner = &lp.classes[lp.partner[class_id as usize] as usize];
        let l_ruling = class.met.clone();
        let m_ruling = class.members.clone();
        let n_ruling = partner.members.clone();
        // rulings live in the right punctured spreads
        if !m_ruling.iter().all(|&k| sm.in_s_star(k)) {
            return Err(Error::verification(
                "triply-ruled",
                format!("a ruling line of the middle side is outside its spread (seed {seed})"),
            ));
        }
        if !n_ruling.iter().all(|&k| sn.in_s_star(k)) {
            return Err(Error::verification(
                "triply-ruled",
                format!("a ruling line of the third side is outside its spread (seed {seed})"),
            ));
        }
        if !l_ruling.iter().all(|&k| sl.in_s_star(k)) {
            return Err(Error::verification("triply-ruled", "ruling outside S*_L"));
        }
        // the three rulings cover the same points
        let pts_of = |lines: &[u32]| -> Vec<u32> {
            let mut pts: Vec<u32> = lines
                .iter()
                .flat_map(|&k| u.line(k).iter().copied())
                .collect();
            pts.sort_unstable();
            pts.dedup();
            pts
        };
        let points = pts_of(&l_ruling);
        if points.len() != (order + 1) * (order + 1)
            || pts_of(&m_ruling) != points
            || pts_of(&n_ruling) != points
        {
            return Err(Error::verification(
                "triply-ruled",
                format!("rulings of seed {seed} cover different point sets"),
            ));
        }
        for &k in &m_ruling {
            used.insert(k);
        }
        sets.push(RuledSet {
            points,
            l_ruling,
            m_ruling,
            n_ruling,
        });
    }
    // the sets plus the triangle partition the unital
    let mut covered = vec![0u8; u.v()];
    for &side in &[l, m, n] {
        for &p in u.line(side) {
            covered[p as usize] += 1;
        }
    }
    for set in &sets {
        for &p in &set.points {
            covered[p as usize] += 1;
        }
    }
    if !covered.iter().all(|&c| c == 1) {
        return Err(Error::verification(
            "triply-ruled",
            "sets and triangle do not partition the points",
        ));
    }
    // rulings partition each punctured spread
    for (spread, ruling_of) in [
        (u.special_spread(l)?, 0usize),
        (u.special_spread(m)?, 1),
        (u.special_spread(n)?, 2),
    ] {
        let mut all: Vec<u32> = sets
            .iter()
            .flat_map(|s| {
                match ruling_of {
                    0 => &s.l_ruling,
                    1 => &s.m_ruling,
                    _ => &s.n_ruling,
                }
                .iter()
                .copied()
            })
            .collect();
        all.sort_unstable();
        all.dedup();
        let mut expected: Vec<u32> = spread
            .lines
            .iter()
            .copied()
            .filter(|&k| k != l && k != m && k != n)
            .collect();
        expected.sort_unstable();
        if all != expected {
            return Err(Error::verification(
                "triply-ruled",
                "rulings do not partition the punctured spread",
            ));
        }
    }
    Ok(TriplyRuled {
        triangle: [l, m, n],
        sets,
    })
}

/// A subregular spread: the triangle plus one ruling of each set, chosen by
/// the disjoint index sets.
pub fn subregular_spread(
    u: &Unital,
    trp: &TriplyRuled,
    idx_l: &[usize],
    idx_m: &[usize],
    idx_n: &[usize],
) -> Result<Vec<u32>> {
    let k = trp.sets.len();
    let mut seen = vec![false; k];
    for &idx in idx_l.iter().chain(idx_m).chain(idx_n) {
        if idx >= k || seen[idx] {
            return Err(Error::Precondition(
                "index sets must be disjoint and in range".into(),
            ));
        }
        seen[idx] = true;
    }
    if !seen.iter().all(|&s| s) {
        return Err(Error::Precondition(
            "index sets must cover every ruled set".into(),
        ));
    }
    let mut lines = trp.triangle.to_vec();
    for &i in idx_l {
        lines.extend_from_slice(&trp.sets[i].l_ruling);
    }
    for &i in idx_m {
        lines.extend_from_slice(&trp.sets[i].m_ruling);
    }
    for &i in idx_n {
        lines.extend_from_slice(&trp.sets[i].n_ruling);
    }
    lines.sort_unstable();
    lines.dedup();
    // spread check
    let mut covered = vec![false; u.v()];
    for &m in &lines {
        for &p in u.line(m) {
            if covered[p as usize] {
                return Err(Error::verification("subregular-spread", "overlap"));
            }
            covered[p as usize] = true;
        }
    }
    if !covered.iter().all(|&c| c) {
        return Err(Error::verification("subregular-spread", "not a partition"));
    }
    Ok(lines)
}

// ---------------------------------------------------------------------------
// A_ij tables
// ---------------------------------------------------------------------------

/// The cell table of a line L: row i is indexed by the i-th point of L, and
/// the n+1 cells of each row partition the n^2 - 1 lines through that point
/// other than L. The base row comes from the circles through L and infinity
/// in the inversive plane at the base point; the other rows follow the
/// pencils of those circles.
#[derive(Debug, Clone)]
pub struct AijTable {
    pub line: u32,
    pub points: Vec<u32>,
    /// cells[i][j]: the n-1 lines of cell (i, j), sorted.
    pub cells: Vec<Vec<Vec<u32>>>,
    cell_of: HashMap<u32, (usize, usize)>,
}

impl AijTable {
    pub fn cell_of(&self, line: u32) -> Option<(usize, usize)> {
        self.cell_of.get(&line).copied()
    }
}

fn aij_from_base(u: &Unital, l: u32, base_idx: usize) -> Result<AijTable> {
    let n = u.order;
    let points = u.line(l).to_vec();
    let x1 = points[base_idx];
    let plane = u.inversive_plane_at(x1)?;
    let ip_l = plane.ip(l);
    let bundle = plane.plane.bundle(ip_l, plane.infinity);
    if bundle.len() != n + 1 {
        return Err(Error::verification(
            "aij-table",
            format!("bundle of line {l} at point {x1} has {} circles", bundle.len()),
        ));
    }
    let mut cells = vec![vec![Vec::new(); n + 1]; n + 1];
    for (j, &circle) in bundle.iter().enumerate() {
        // row of the base point
        let mut a1j: Vec<u32> = plane
            .plane
            .inc
            .block(circle)
            .iter()
            .copied()
            .filter(|&ip| ip != ip_l && ip != plane.infinity)
            .map(|ip| plane.lines[ip as usize])
            .collect();
        if a1j.len() != n - 1 {
            return Err(Error::verification(
                "aij-table",
                format!("cell of the base row has {} lines", a1j.len()),
            ));
        }
        a1j.sort_unstable();
        cells[base_idx][j] = a1j;
        // other rows via the pencil at L through this bundle circle
        let pencil = plane.plane.pencil_at(ip_l, circle).map_err(|e| {
            Error::verification("aij-table", format!("pencil at line {l}, point {x1}: {e}"))
        })?;
        for &c in &pencil {
            if c == circle {
                continue;
            }
            if plane.circle_contains_infinity(c) {
                return Err(Error::verification(
                    "aij-table",
                    "pencil circle unexpectedly passes through infinity",
                ));
            }
            let members = plane.class_members[c as usize].as_ref().ok_or_else(|| {
                Error::verification("aij-table", "pencil circle is not a class")
            })?;
            for (i, &xi) in points.iter().enumerate() {
                if i == base_idx {
                    continue;
                }
                let through: Vec<u32> = members
                    .iter()
                    .copied()
                    .filter(|&mline| u.on_line(xi, mline))
                    .collect();
                if through.len() != 1 {
                    return Err(Error::verification(
                        "aij-table",
                        format!(
                            "class has {} members through point {xi}, expected 1",
                            through.len()
                        ),
                    ));
                }
                cells[i][j].push(through[0]);
            }
        }
    }
    let mut cell_of = HashMap::new();
    for (i, row) in cells.iter_mut().enumerate() {
        let mut seen: HashSet<u32> = HashSet::new();
        for (j, cell) in row.iter_mut().enumerate() {
            cell.sort_unstable();
            if cell.len() != n - 1 {
                return Err(Error::verification(
                    "aij-table",
                    format!("cell ({i}, {j}) has {} lines", cell.len()),
                ));
            }
            for &k in cell.iter() {
                if !seen.insert(k) {
                    return Err(Error::verification(
                        "aij-table",
                        format!("line {k} appears in two cells of row {i}"),
                    ));
                }
                cell_of.insert(k, (i, j));
            }
        }
        if seen.len() != n * n - 1 {
            return Err(Error::verification(
                "aij-table",
                format!("row {i} covers {} lines", seen.len()),
            ));
        }
    }
    Ok(AijTable {
        line: l,
        points,
        cells,
        cell_of,
    })
}

/// Build the cell table from the least base point and verify that every
/// other base point yields the same table up to a column relabelling.
pub fn aij_table(u: &Unital, l: u32) -> Result<AijTable> {
    let table = aij_from_base(u, l, 0)?;
    let n = u.order;
    for other in 1..=n {
        let alt = aij_from_base(u, l, other)?;
        // find the column permutation via the first row, then check all rows
        let mut sigma = vec![usize::MAX; n + 1];
        for j in 0..=n {
            let Some(jp) = (0..=n).find(|&jp| alt.cells[0][jp] == table.cells[0][j]) else {
                return Err(Error::verification(
                    "aij-table",
                    format!("base point {other} of line {l}: no column matches"),
                ));
            };
            sigma[j] = jp;
        }
        for i in 0..=n {
            for j in 0..=n {
                if alt.cells[i][sigma[j]] != table.cells[i][j] {
                    return Err(Error::verification(
                        "aij-table",
                        format!("cell table of line {l} depends on the base point ({other})"),
                    ));
                }
            }
        }
    }
    Ok(table)
}

// ---------------------------------------------------------------------------
// Flock / spread interaction
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct FlockMeetWitness {
    pub meet_point: u32,
    pub spread_line_at_meet: u32,
    pub infinity_circle: u32,
    pub lines_meeting_both: Vec<u32>,
    pub special_point: u32,
}

/// For intersecting lines m, n outside the spread of l whose flock (in the
/// inversive plane at the meet point) contains the class of l: the spread
/// line at the meet point lies on the circle of m, n and infinity; every
/// spread line meeting m meets n; and a unique point of l sees the spread
/// line at the meet point while missing the other common spread lines.
pub fn verify_flock_meet(u: &Unital, l: u32, m: u32, n: u32) -> Result<FlockMeetWitness> {
    let sl = u.special_spread(l)?;
    if sl.contains(m) || sl.contains(n) {
        return Err(Error::Precondition("carrier lines must avoid the spread".into()));
    }
    let meet = u.inc.meet(m, n);
    let [y] = meet.as_slice() else {
        return Err(Error::Precondition("carrier lines must meet in one point".into()));
    };
    let y = *y;
    if u.on_line(y, l) {
        return Err(Error::Precondition("meet point must be off the base line".into()));
    }
    let plane = u.inversive_plane_at(y)?;
    let flock = plane.plane.flock(plane.ip(m), plane.ip(n))?;
    let arc_l = plane.class_circle(l);
    if !flock.contains(&arc_l) {
        return Err(Error::Precondition(
            "the class of the base line is not in the carrier flock".into(),
        ));
    }

    // (1) the spread line through y lies on the circle of m, n, infinity
    let l1 = *sl
        .s_star
        .iter()
        .find(|&&k| u.on_line(y, k))
        .expect("the spread covers y");
    let infinity_circle = plane
        .plane
        .bundle(plane.ip(m), plane.ip(n))
        .into_iter()
        .find(|&c| plane.circle_contains_infinity(c))
        .ok_or_else(|| {
            Error::verification("flock-meet", "no infinity circle in the bundle")
        })?;
    if plane
        .plane
        .inc
        .block(infinity_circle)
        .binary_search(&plane.ip(l1))
        .is_err()
    {
        return Err(Error::verification(
            "flock-meet",
            format!("spread line {l1} not on the infinity circle at {y}"),
        ));
    }

    // (2) every spread line meeting m meets n
    let meeting_m: Vec<u32> = sl
        .s_star
        .iter()
        .copied()
        .filter(|&k| u.lines_meet(k, m))
        .collect();
    if meeting_m.len() != u.order + 1 {
        return Err(Error::verification(
            "flock-meet",
            format!("{} spread lines meet the first carrier", meeting_m.len()),
        ));
    }
    for &k in &meeting_m {
        if !u.lines_meet(k, n) {
            return Err(Error::verification(
                "flock-meet",
                format!("spread line {k} meets one carrier but not the other"),
            ));
        }
    }

    // (3) the unique special point on l
    let others: Vec<u32> = meeting_m.iter().copied().filter(|&k| k != l1).collect();
    let mut special = Vec::new();
    for &x in u.line(l) {
        let all_miss = u.lines_through(x).iter().all(|&k| {
            if !u.lines_meet(k, l1) {
                return true;
            }
            others.iter().all(|&o| !u.lines_meet(k, o))
        });
        if all_miss {
            special.push(x);
        }
    }
    let [x] = special.as_slice() else {
        return Err(Error::verification(
            "flock-meet",
            format!("{} special points on the base line", special.len()),
        ));
    };
    let x = *x;
    let xy = u
        .line_through(x, y)
        .ok_or_else(|| Error::verification("flock-meet", "no line joins x and y"))?;
    if plane
        .plane
        .inc
        .block(infinity_circle)
        .binary_search(&plane.ip(xy))
        .is_err()
    {
        return Err(Error::verification(
            "flock-meet",
            "the join of the special point does not lie on the infinity circle",
        ));
    }
    Ok(FlockMeetWitness {
        meet_point: y,
        spread_line_at_meet: l1,
        infinity_circle,
        lines_meeting_both: meeting_m,
        special_point: x,
    })
}

/// Tangency structure of a spread seen from an outside point y: the classes
/// of the spread lines other than the side through y and its two triangle
/// partners are exactly the class circles tangent to the class of l at y.
pub fn verify_tangency_structure(u: &Unital, l: u32, y: u32) -> Result<()> {
    if u.on_line(y, l) {
        return Err(Error::Precondition("point must be off the line".into()));
    }
    let sl = u.special_spread(l)?;
    let m = *sl
        .s_star
        .iter()
        .find(|&&k| u.on_line(y, k))
        .expect("the spread covers y");
    let n = polar_triple(u, l, m)?;
    let plane = u.inversive_plane_at(y)?;
    let arc_l = plane.class_circle(l);
    let mut expected: Vec<u32> = Vec::new();
    for &j in &sl.lines {
        if j == l || j == m || j == n {
            continue;
        }
        let arc_j = plane.class_circle(j);
        if !plane.plane.tangent(arc_l, arc_j) {
            return Err(Error::verification(
                "tangency",
                format!("class of spread line {j} is not tangent to the class of {l} at {y}"),
            ));
        }
        expected.push(arc_j);
    }
    expected.sort_unstable();
    expected.dedup();
    let nn = u.order;
    if expected.len() != (nn + 1) * (nn - 2) {
        return Err(Error::verification(
            "tangency",
            format!(
                "{} distinct tangent classes, expected {}",
                expected.len(),
                (nn + 1) * (nn - 2)
            ),
        ));
    }
    let mut tangent_classes: Vec<u32> = (0..plane.plane.inc.b() as u32)
        .filter(|&c| plane.kinds[c as usize] == CircleKind::Class && plane.plane.tangent(arc_l, c))
        .collect();
    tangent_classes.sort_unstable();
    if tangent_classes != expected {
        return Err(Error::verification(
            "tangency",
            "tangent class circles are not exactly the spread classes",
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Mutation helpers
// ---------------------------------------------------------------------------

/// Rewire one line so the result contains a planted O'Nan quadrilateral.
/// Returns the mutated unital and the four quadrilateral lines.
pub fn mutate_plant_onan<R: Rng>(u: &Unital, rng: &mut R) -> (Unital, [u32; 4]) {
    let inc = &u.inc;
    loop {
        let l1 = rng.gen_range(0..inc.b()) as u32;
        let l2 = {
            let p = inc.block(l1)[rng.gen_range(0..inc.block(l1).len())];
            let through = &inc.point_blocks[p as usize];
            through[rng.gen_range(0..through.len())]
        };
        if l1 == l2 {
            continue;
        }
        let meet12 = inc.meet(l1, l2);
        if meet12.len() != 1 {
            continue;
        }
        let p3 = meet12[0];
        let a: Vec<u32> = inc.block(l1).iter().copied().filter(|&p| p != p3).collect();
        let b: Vec<u32> = inc.block(l2).iter().copied().filter(|&p| p != p3).collect();
        let pa = a[rng.gen_range(0..a.len())];
        let pb = b[rng.gen_range(0..b.len())];
        let Some(l3) = inc.block_through(pa, pb) else { continue };
        if l3 == l1 || l3 == l2 {
            continue;
        }
        // fresh points on the triangle sides
        let choice = |line: u32, avoid: &[u32], rng: &mut R| -> Option<u32> {
            let pool: Vec<u32> = inc
                .block(line)
                .iter()
                .copied()
                .filter(|p| !avoid.contains(p))
                .collect();
            (!pool.is_empty()).then(|| pool[rng.gen_range(0..pool.len())])
        };
        let Some(a2) = choice(l1, &[p3, pa], rng) else { continue };
        let Some(b2) = choice(l2, &[p3, pb], rng) else { continue };
        let Some(c2) = choice(l3, &[pa, pb], rng) else { continue };
        // filler points off the three sides
        let on_sides: HashSet<u32> = [l1, l2, l3]
            .iter()
            .flat_map(|&l| inc.block(l).iter().copied())
            .collect();
        let filler: Vec<u32> = (0..inc.v as u32).filter(|p| !on_sides.contains(p)).collect();
        if filler.len() < u.order - 2 {
            continue;
        }
        let mut new_line = vec![a2, b2, c2];
        let mut pool = filler;
        while new_line.len() < u.order + 1 {
            let i = rng.gen_range(0..pool.len());
            new_line.push(pool.swap_remove(i));
        }
        new_line.sort_unstable();
        // victim line outside the triangle
        let victim = loop {
            let v = rng.gen_range(0..inc.b()) as u32;
            if v != l1 && v != l2 && v != l3 {
                break v;
            }
        };
        let mut blocks = inc.blocks.clone();
        blocks[victim as usize] = new_line.clone();
        let mutated_inc = Incidence::new(inc.v, blocks).expect("mutation keeps entries valid");
        let planted = mutated_inc
            .block_id_of(&new_line)
            .expect("rewired line is a block");
        let relabel = |old: u32| -> u32 {
            mutated_inc
                .block_id_of(inc.block(old))
                .expect("untouched lines survive the mutation")
        };
        let mut quad = [relabel(l1), relabel(l2), relabel(l3), planted];
        quad.sort_unstable();
        if quad.windows(2).any(|w| w[0] == w[1]) {
            continue;
        }
        let mutated = Unital::new(mutated_inc, u.order, Construction::External)
            .expect("mutation preserves the point count");
        if !verify_onan_quad(&mutated.inc, &quad) {
            continue;
        }
        return (mutated, quad);
    }
}

/// Swap one point of one line for an outside point.
pub fn mutate_swap_point<R: Rng>(u: &Unital, rng: &mut R) -> (Unital, (u32, u32, u32)) {
    let (inc, info) = crate::design::mutate_swap_point(&u.inc, rng);
    (
        Unital::new(inc, u.order, Construction::External).expect("same point count"),
        info,
    )
}
