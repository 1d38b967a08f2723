//! Generic incidence structures, t-design verification, inversive-plane
//! machinery (bundles, flocks, pencils of circles), and isomorphism search.
//!
//! The `Incidence` struct is the universal carrier: unitals, inversive
//! planes, generalized quadrangles and projective planes all flow through it,
//! and its JSON form `{"v": .., "blocks": [[..]]}` is the interchange format
//! for the whole crate.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NO_BLOCK: u32 = u32::MAX;

/// Points 0..v versus blocks of sorted point ids, with the pair index built
/// eagerly. When every pair lies on at most one block (the only case the
/// searches here need), `pair_block` gives O(1) point-pair -> block lookup.
#[derive(Clone)]
pub struct Incidence {
    pub v: usize,
    pub blocks: Vec<Vec<u32>>,
    pub point_blocks: Vec<Vec<u32>>,
    pair_block: Option<Vec<u32>>,
}

#[derive(Serialize, Deserialize)]
struct IncidenceJson {
    v: usize,
    blocks: Vec<Vec<u32>>,
}

impl Incidence {
    /// Build from raw blocks: entries are range-checked, each block is
    /// sorted, and the block list is sorted lexicographically.
    pub fn new(v: usize, mut blocks: Vec<Vec<u32>>) -> Result<Incidence> {
        for b in blocks.iter_mut() {
            b.sort_unstable();
            if b.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Incidence("repeated point in a block".into()));
            }
            if b.iter().any(|&p| p as usize >= v) {
                return Err(Error::Incidence("block entry out of range".into()));
            }
        }
        blocks.sort();
        let mut point_blocks = vec![Vec::new(); v];
        for (i, b) in blocks.iter().enumerate() {
            for &p in b {
                point_blocks[p as usize].push(i as u32);
            }
        }
        // pair index when lambda <= 1
        let mut pair_block = vec![NO_BLOCK; v * v.saturating_sub(1) / 2];
        let mut linear = true;
        'outer: for (i, b) in blocks.iter().enumerate() {
            for (x, &p) in b.iter().enumerate() {
                for &r in b.iter().skip(x + 1) {
                    let slot = &mut pair_block[pair_index(v, p as usize, r as usize)];
                    if *slot != NO_BLOCK {
                        linear = false;
                        break 'outer;
                    }
                    *slot = i as u32;
                }
            }
        }
        Ok(Incidence {
            v,
            blocks,
            point_blocks,
            pair_block: linear.then_some(pair_block),
        })
    }

    pub fn b(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, i: u32) -> &[u32] {
        &self.blocks[i as usize]
    }

    /// Whether any two points lie on at most one common block.
    pub fn is_partial_linear(&self) -> bool {
        self.pair_block.is_some()
    }

    /// The unique block through a pair, when the structure is partial linear.
    pub fn block_through(&self, a: u32, b: u32) -> Option<u32> {
        let pb = self.pair_block.as_ref()?;
        let id = pb[pair_index(self.v, a.min(b) as usize, a.max(b) as usize)];
        (id != NO_BLOCK).then_some(id)
    }

    /// All blocks through a pair (falls back to index intersection).
    pub fn blocks_through(&self, a: u32, b: u32) -> Vec<u32> {
        if let Some(pb) = &self.pair_block {
            let id = pb[pair_index(self.v, a.min(b) as usize, a.max(b) as usize)];
            return if id == NO_BLOCK { vec![] } else { vec![id] };
        }
        intersect_sorted(&self.point_blocks[a as usize], &self.point_blocks[b as usize])
    }

    pub fn collinear(&self, a: u32, b: u32) -> bool {
        if a == b {
            return true;
        }
        if let Some(pb) = &self.pair_block {
            return pb[pair_index(self.v, a.min(b) as usize, a.max(b) as usize)] != NO_BLOCK;
        }
        !self.blocks_through(a, b).is_empty()
    }

    pub fn meet(&self, b1: u32, b2: u32) -> Vec<u32> {
        intersect_sorted(&self.blocks[b1 as usize], &self.blocks[b2 as usize])
    }

    /// The common point of two blocks meeting exactly once, without
    /// allocating; None when they are disjoint or share several points.
    pub fn meet_one(&self, b1: u32, b2: u32) -> Option<u32> {
        let (a, b) = (&self.blocks[b1 as usize], &self.blocks[b2 as usize]);
        let (mut i, mut j) = (0, 0);
        let mut found = None;
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    if found.is_some() {
                        return None;
                    }
                    found = Some(a[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        found
    }

    /// Visit every block through a pair without allocating.
    pub fn for_blocks_through(&self, a: u32, b: u32, mut f: impl FnMut(u32)) {
        if let Some(pb) = &self.pair_block {
            let id = pb[pair_index(self.v, a.min(b) as usize, a.max(b) as usize)];
            if id != NO_BLOCK {
                f(id);
            }
            return;
        }
        let (x, y) = (
            &self.point_blocks[a as usize],
            &self.point_blocks[b as usize],
        );
        let (mut i, mut j) = (0, 0);
        while i < x.len() && j < y.len() {
            match x[i].cmp(&y[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    f(x[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
    }

    pub fn meet_size(&self, b1: u32, b2: u32) -> usize {
        let (a, b) = (&self.blocks[b1 as usize], &self.blocks[b2 as usize]);
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }

    pub fn block_id_of(&self, pts: &[u32]) -> Option<u32> {
        let mut key = pts.to_vec();
        key.sort_unstable();
        self.blocks.binary_search(&key).ok().map(|i| i as u32)
    }

    /// Exhaustive t-design test: every block has k points and every t-subset
    /// of points lies in exactly lambda blocks. t in {2, 3}.
    pub fn is_t_design(&self, t: usize, k: usize, lambda: usize) -> bool {
        if self.blocks.iter().any(|b| b.len() != k) {
            return false;
        }
        match t {
            2 => {
                let mut count = vec![0u32; self.v * self.v.saturating_sub(1) / 2];
                for b in &self.blocks {
                    for (i, &p) in b.iter().enumerate() {
                        for &r in b.iter().skip(i + 1) {
                            count[pair_index(self.v, p as usize, r as usize)] += 1;
                        }
                    }
                }
                count.iter().all(|&c| c as usize == lambda)
            }
            3 => {
                let mut count: HashMap<(u32, u32, u32), usize> = HashMap::new();
                for b in &self.blocks {
                    for i in 0..b.len() {
                        for j in (i + 1)..b.len() {
                            for l in (j + 1)..b.len() {
                                *count.entry((b[i], b[j], b[l])).or_insert(0) += 1;
                            }
                        }
                    }
                }
                let total = self.v * (self.v - 1) * (self.v - 2) / 6;
                count.len() == total && count.values().all(|&c| c == lambda)
            }
            _ => unimplemented!("only t = 2, 3 are needed"),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({ "v": self.v, "blocks": self.blocks })
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Incidence> {
        let parsed: IncidenceJson = serde_json::from_value(value.clone())?;
        Incidence::new(parsed.v, parsed.blocks)
    }

    /// Sorted degree sequence and pair-coverage histogram; cheap isomorphism
    /// invariants used to reject obviously non-isomorphic structures.
    fn shape_signature(&self) -> (Vec<usize>, Vec<usize>, HashMap<usize, usize>) {
        let mut degrees: Vec<usize> = self.point_blocks.iter().map(|b| b.len()).collect();
        degrees.sort_unstable();
        let mut sizes: Vec<usize> = self.blocks.iter().map(|b| b.len()).collect();
        sizes.sort_unstable();
        let mut pair_cov: HashMap<usize, usize> = HashMap::new();
        for a in 0..self.v as u32 {
            for b in (a + 1)..self.v as u32 {
                *pair_cov.entry(self.blocks_through(a, b).len()).or_insert(0) += 1;
            }
        }
        (degrees, sizes, pair_cov)
    }
}

fn pair_index(v: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < v);
    i * v - i * (i + 1) / 2 + (j - i - 1)
}

fn intersect_sorted(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Mutation oracle
// ---------------------------------------------------------------------------

/// Replace one point of one block by a point not already on it. The result is
/// generally no longer a design; negative tests feed these back through the
/// verification stages.
pub fn mutate_swap_point<R: Rng>(inc: &Incidence, rng: &mut R) -> (Incidence, (u32, u32, u32)) {
    loop {
        let bi = rng.gen_range(0..inc.blocks.len());
        let block = &inc.blocks[bi];
        let out = block[rng.gen_range(0..block.len())];
        let candidates: Vec<u32> = (0..inc.v as u32)
            .filter(|p| block.binary_search(p).is_err())
            .collect();
        if candidates.is_empty() {
            continue;
        }
        let put = candidates[rng.gen_range(0..candidates.len())];
        let mut blocks = inc.blocks.clone();
        blocks[bi].retain(|&p| p != out);
        blocks[bi].push(put);
        let mutated = Incidence::new(inc.v, blocks).expect("mutation keeps entries in range");
        return (mutated, (bi as u32, out, put));
    }
}

// ---------------------------------------------------------------------------
// Inversive planes
// ---------------------------------------------------------------------------

/// A 3-(m^2+1, m+1, 1) design; blocks are called circles. Tangency means
/// circle intersection of size exactly one.
pub struct InversivePlane {
    pub inc: Incidence,
    pub order: usize,
    meet: Vec<u8>,
}

impl InversivePlane {
    pub fn new(inc: Incidence, order: usize) -> Result<InversivePlane> {
        let m = order;
        if inc.v != m * m + 1 {
            return Err(Error::Design(format!(
                "inversive plane of order {m} needs {} points, got {}",
                m * m + 1,
                inc.v
            )));
        }
        if !inc.is_t_design(3, m + 1, 1) {
            return Err(Error::Design(format!(
                "not a 3-({}, {}, 1) design",
                m * m + 1,
                m + 1
            )));
        }
        let b = inc.b();
        let mut meet = vec![0u8; b * b];
        for i in 0..b {
            for j in (i + 1)..b {
                let s = inc.meet_size(i as u32, j as u32) as u8;
                meet[i * b + j] = s;
                meet[j * b + i] = s;
            }
        }
        Ok(InversivePlane { inc, order, meet })
    }

    pub fn circles(&self) -> &[Vec<u32>] {
        &self.inc.blocks
    }

    pub fn meet_size(&self, c1: u32, c2: u32) -> usize {
        self.meet[c1 as usize * self.inc.b() + c2 as usize] as usize
    }

    pub fn tangent(&self, c1: u32, c2: u32) -> bool {
        c1 != c2 && self.meet_size(c1, c2) == 1
    }

    /// The m+1 circles through two distinct points.
    pub fn bundle(&self, p1: u32, p2: u32) -> Vec<u32> {
        assert_ne!(p1, p2);
        self.inc.blocks_through(p1, p2)
    }

    /// The unique flock with the given carriers: the circles tangent to every
    /// circle of the bundle (the even-order tangency criterion), verified to
    /// partition the points off the carriers.
    pub fn flock(&self, p1: u32, p2: u32) -> Result<Vec<u32>> {
        assert_ne!(p1, p2);
        let bundle = self.bundle(p1, p2);
        let circles: Vec<u32> = (0..self.inc.b() as u32)
            .filter(|&c| {
                let blk = self.inc.block(c);
                blk.binary_search(&p1).is_err()
                    && blk.binary_search(&p2).is_err()
                    && bundle.iter().all(|&bc| self.tangent(c, bc))
            })
            .collect();
        let m = self.order;
        if circles.len() != m - 1 {
            return Err(Error::Design(format!(
                "flock criterion produced {} circles, expected {}",
                circles.len(),
                m - 1
            )));
        }
        let mut covered = vec![false; self.inc.v];
        covered[p1 as usize] = true;
        covered[p2 as usize] = true;
        for &c in &circles {
            for &p in self.inc.block(c) {
                if covered[p as usize] {
                    return Err(Error::Design(
                        "flock circles do not partition the non-carrier points".into(),
                    ));
                }
                covered[p as usize] = true;
            }
        }
        if !covered.iter().all(|&c| c) {
            return Err(Error::Design("flock circles miss some points".into()));
        }
        Ok(circles)
    }

    /// Independent oracle: every partition of the non-carrier points into
    /// disjoint circles, by backtracking. Uniqueness is the tested property.
    pub fn flocks_by_backtracking(&self, p1: u32, p2: u32) -> Vec<Vec<u32>> {
        let usable: Vec<u32> = (0..self.inc.b() as u32)
            .filter(|&c| {
                let blk = self.inc.block(c);
                blk.binary_search(&p1).is_err() && blk.binary_search(&p2).is_err()
            })
            .collect();
        let mut covered = vec![false; self.inc.v];
        covered[p1 as usize] = true;
        covered[p2 as usize] = true;
        let mut found = Vec::new();
        let mut current = Vec::new();
        self.flock_dfs(&usable, &mut covered, &mut current, &mut found);
        found
    }

    fn flock_dfs(
        &self,
        usable: &[u32],
        covered: &mut Vec<bool>,
        current: &mut Vec<u32>,
        found: &mut Vec<Vec<u32>>,
    ) {
        let Some(first_free) = covered.iter().position(|&c| !c) else {
            let mut sol = current.clone();
            sol.sort_unstable();
            found.push(sol);
            return;
        };
        for &c in usable {
            let blk = self.inc.block(c);
            if blk.binary_search(&(first_free as u32)).is_err() {
                continue;
            }
            if blk.iter().any(|&p| covered[p as usize]) {
                continue;
            }
            for &p in blk {
                covered[p as usize] = true;
            }
            current.push(c);
            self.flock_dfs(usable, covered, current, found);
            current.pop();
            for &p in blk {
                covered[p as usize] = false;
            }
        }
    }

    /// The pencil of circles mutually tangent at `p` containing `c`: the m
    /// circles through p meeting c (and each other) only at p.
    pub fn pencil_at(&self, p: u32, c: u32) -> Result<Vec<u32>> {
        if self.inc.block(c).binary_search(&p).is_err() {
            return Err(Error::Precondition("pencil carrier must lie on the base circle".into()));
        }
        let members: Vec<u32> = self.inc.point_blocks[p as usize]
            .iter()
            .copied()
            .filter(|&d| d == c || self.tangent(c, d))
            .collect();
        if members.len() != self.order {
            return Err(Error::Design(format!(
                "pencil at {p} has {} members, expected {}",
                members.len(),
                self.order
            )));
        }
        for (i, &a) in members.iter().enumerate() {
            for &b in members.iter().skip(i + 1) {
                if !self.tangent(a, b) {
                    return Err(Error::Design(
                        "pencil members are not mutually tangent".into(),
                    ));
                }
            }
        }
        Ok(members)
    }
}

// ---------------------------------------------------------------------------
// Isomorphism search
// ---------------------------------------------------------------------------

/// A verified point bijection mapping blocks onto blocks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IsoMap {
    pub point_map: Vec<u32>,
}

/// Re-verify a candidate map independently of the search that produced it.
pub fn verify_isomorphism(a: &Incidence, b: &Incidence, map: &[u32]) -> bool {
    if a.v != b.v || map.len() != a.v || a.b() != b.b() {
        return false;
    }
    let mut seen = vec![false; b.v];
    for &m in map {
        if m as usize >= b.v || seen[m as usize] {
            return false;
        }
        seen[m as usize] = true;
    }
    let mut images: Vec<Vec<u32>> = a
        .blocks
        .iter()
        .map(|blk| {
            let mut img: Vec<u32> = blk.iter().map(|&p| map[p as usize]).collect();
            img.sort_unstable();
            img
        })
        .collect();
    images.sort();
    images == b.blocks
}

/// Backtracking isomorphism search for partial linear spaces, with degree
/// refinement and most-constrained-first ordering. Deterministic: the
/// lexicographically least map in search order is returned.
///
/// Points are matched under pairwise collinearity consistency, and block
/// images are forced as soon as a block has two mapped points; the final map
/// is re-verified block-by-block before being returned.
pub fn find_isomorphism(a: &Incidence, b: &Incidence) -> Option<IsoMap> {
    if a.v != b.v || a.b() != b.b() {
        return None;
    }
    if !a.is_partial_linear() || !b.is_partial_linear() {
        // fall back to signature comparison plus brute backtracking is not
        // needed by any caller; reject loudly instead of silently looping
        panic!("find_isomorphism expects partial linear spaces");
    }
    let (da, sa, pa) = a.shape_signature();
    let (db, sb, pb) = b.shape_signature();
    if da != db || sa != sb || pa != pb {
        return None;
    }

    let search = IsoSearch {
        a,
        b,
        coll_a: collinearity_bits(a),
        coll_b: collinearity_bits(b),
    };
    search.run().map(|point_map| IsoMap { point_map })
}

fn collinearity_bits(inc: &Incidence) -> Vec<Vec<u64>> {
    let words = inc.v.div_ceil(64);
    let mut bits = vec![vec![0u64; words]; inc.v];
    for blk in &inc.blocks {
        for (i, &p) in blk.iter().enumerate() {
            for &r in blk.iter().skip(i + 1) {
                bits[p as usize][r as usize / 64] |= 1 << (r % 64);
                bits[r as usize][p as usize / 64] |= 1 << (p % 64);
            }
        }
    }
    bits
}

struct IsoSearch<'a> {
    a: &'a Incidence,
    b: &'a Incidence,
    coll_a: Vec<Vec<u64>>,
    coll_b: Vec<Vec<u64>>,
}

const UNMAPPED: u32 = u32::MAX;

struct IsoState {
    map: Vec<u32>,
    used: Vec<bool>,
    block_map: Vec<u32>,
    block_used: Vec<bool>,
    mapped_in_block: Vec<u32>,
    order: Vec<u32>,
    /// blocks with a determined image, in forcing order
    determined: Vec<u32>,
}

impl<'s> IsoSearch<'s> {
    fn run(&self) -> Option<Vec<u32>> {
        let v = self.a.v;
        let mut st = IsoState {
            map: vec![UNMAPPED; v],
            used: vec![false; v],
            block_map: vec![UNMAPPED; self.a.b()],
            block_used: vec![false; self.b.b()],
            mapped_in_block: vec![0; self.a.b()],
            order: Vec::with_capacity(v),
            determined: Vec::new(),
        };
        if self.extend(&mut st) && verify_isomorphism(self.a, self.b, &st.map) {
            return Some(st.map);
        }
        None
    }

    /// Point selection drives a forcing cascade: a point on two blocks with
    /// determined images has a unique candidate, so such points come first;
    /// otherwise prefer the point whose assignment determines the most new
    /// block images (blocks through it that already hold a mapped point).
    /// Ties break by id, and candidate images are tried in ascending order.
    fn extend(&self, st: &mut IsoState) -> bool {
        let v = self.a.v;
        if st.order.len() == v {
            return true;
        }
        let mut best: Option<((usize, usize, usize), u32)> = None;
        for p in 0..v as u32 {
            if st.map[p as usize] != UNMAPPED {
                continue;
            }
            let mut determined = 0usize;
            let mut touched = 0usize;
            for &blk in &self.a.point_blocks[p as usize] {
                if st.block_map[blk as usize] != UNMAPPED {
                    determined += 1;
                }
                if st.mapped_in_block[blk as usize] > 0 {
                    touched += 1;
                }
            }
            let score = (usize::from(determined >= 2), touched, determined);
            if best.is_none_or(|(s, _)| score > s) {
                best = Some((score, p));
            }
        }
        let (_, p) = best.unwrap();
        let candidates = self.candidates_for(p, st);
        for cand in candidates {
            if let Some(trail) = self.assign(p, cand, st) {
                st.order.push(p);
                if self.extend(st) {
                    return true;
                }
                st.order.pop();
                self.undo(p, cand, trail, st);
            }
        }
        false
    }

    fn candidates_for(&self, p: u32, st: &IsoState) -> Vec<u32> {
        // if some block through p already has a forced image, candidates are
        // confined to that image block
        let mut pool: Option<Vec<u32>> = None;
        for &blk in &self.a.point_blocks[p as usize] {
            let img = st.block_map[blk as usize];
            if img != UNMAPPED {
                let pts: Vec<u32> = self.b.blocks[img as usize]
                    .iter()
                    .copied()
                    .filter(|&x| !st.used[x as usize])
                    .collect();
                pool = Some(match pool {
                    None => pts,
                    Some(prev) => prev.into_iter().filter(|x| pts.contains(x)).collect(),
                });
            }
        }
        // a free choice is where wrong branches are made; screen those
        // candidates against the block-meeting pattern as well
        let free = pool.is_none();
        let pool = pool.unwrap_or_else(|| {
            (0..self.b.v as u32).filter(|&x| !st.used[x as usize]).collect()
        });
        pool.into_iter()
            .filter(|&cand| self.consistent(p, cand, st, free))
            .collect()
    }

    fn consistent(&self, p: u32, cand: u32, st: &IsoState, check_meets: bool) -> bool {
        if self.a.point_blocks[p as usize].len() != self.b.point_blocks[cand as usize].len() {
            return false;
        }
        for &r in &st.order {
            let ca = self.coll_a[p as usize][r as usize / 64] >> (r % 64) & 1;
            let fr = st.map[r as usize];
            let cb = self.coll_b[cand as usize][fr as usize / 64] >> (fr % 64) & 1;
            if ca != cb {
                return false;
            }
        }
        if check_meets {
            // joins from p to mapped points must meet exactly the determined
            // blocks their images meet; isomorphisms preserve block meetings
            const DETERMINED_CAP: usize = 60;
            for &r in st.order.iter().take(16) {
                let fr = st.map[r as usize];
                let Some(ja) = self.a.block_through(p, r) else { continue };
                let Some(jb) = self.b.block_through(cand, fr) else { return false };
                for &da in st.determined.iter().take(DETERMINED_CAP) {
                    if da == ja {
                        continue;
                    }
                    let db = st.block_map[da as usize];
                    if (self.a.meet_size(ja, da) > 0) != (self.b.meet_size(jb, db) > 0) {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Map p -> cand and force block images where possible. An image is
    /// rejected when it is already the image of another block (block maps of
    /// isomorphisms are injective). Returns the forced blocks for undo, or
    /// None on clash.
    fn assign(&self, p: u32, cand: u32, st: &mut IsoState) -> Option<Vec<u32>> {
        // validate before mutating anything but the forced list
        let mut forced: Vec<(u32, u32)> = Vec::new();
        let rollback = |forced: &[(u32, u32)], st: &mut IsoState| {
            for &(blk, target) in forced {
                st.block_map[blk as usize] = UNMAPPED;
                st.block_used[target as usize] = false;
            }
        };
        for &blk in &self.a.point_blocks[p as usize] {
            let img = st.block_map[blk as usize];
            if img != UNMAPPED {
                // cand must lie on the already-forced image
                if self.b.blocks[img as usize].binary_search(&cand).is_err() {
                    rollback(&forced, st);
                    return None;
                }
            } else if let Some(&other) = self.a.blocks[blk as usize]
                .iter()
                .find(|&&x| x != p && st.map[x as usize] != UNMAPPED)
            {
                let fo = st.map[other as usize];
                let target = match self.b.block_through(cand, fo) {
                    Some(t)
                        if !st.block_used[t as usize]
                            && self.b.blocks[t as usize].len()
                                == self.a.blocks[blk as usize].len() =>
                    {
                        t
                    }
                    _ => {
                        rollback(&forced, st);
                        return None;
                    }
                };
                st.block_map[blk as usize] = target;
                st.block_used[target as usize] = true;
                forced.push((blk, target));
            }
        }
        for &blk in &self.a.point_blocks[p as usize] {
            st.mapped_in_block[blk as usize] += 1;
        }
        st.map[p as usize] = cand;
        st.used[cand as usize] = true;
        st.determined.extend(forced.iter().map(|&(blk, _)| blk));
        Some(forced.into_iter().map(|(blk, _)| blk).collect())
    }

    fn undo(&self, p: u32, cand: u32, forced: Vec<u32>, st: &mut IsoState) {
        st.determined.truncate(st.determined.len() - forced.len());
        for &f in &forced {
            let target = st.block_map[f as usize];
            st.block_map[f as usize] = UNMAPPED;
            st.block_used[target as usize] = false;
        }
        for &blk in &self.a.point_blocks[p as usize] {
            st.mapped_in_block[blk as usize] -= 1;
        }
        st.map[p as usize] = UNMAPPED;
        st.used[cand as usize] = false;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn fano() -> Incidence {
        Incidence::new(
            7,
            vec![
                vec![0, 1, 2],
                vec![0, 3, 4],
                vec![0, 5, 6],
                vec![1, 3, 5],
                vec![1, 4, 6],
                vec![2, 3, 6],
                vec![2, 4, 5],
            ],
        )
        .unwrap()
    }

    #[test]
    fn fano_is_a_2_design() {
        let f = fano();
        assert!(f.is_t_design(2, 3, 1));
        assert!(!f.is_t_design(2, 3, 2));
        assert!(f.is_partial_linear());
        assert_eq!(f.block_through(0, 1), f.block_id_of(&[0, 1, 2]));
    }

    #[test]
    fn mutation_breaks_the_design() {
        let f = fano();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let (m, _) = mutate_swap_point(&f, &mut rng);
        assert!(!m.is_t_design(2, 3, 1));
    }

    #[test]
    fn identity_isomorphism_on_fano_and_relabellings() {
        let f = fano();
        let iso = find_isomorphism(&f, &f).unwrap();
        assert!(verify_isomorphism(&f, &f, &iso.point_map));

        // relabel points by a permutation and search again
        let perm: Vec<u32> = vec![3, 0, 6, 1, 5, 2, 4];
        let blocks: Vec<Vec<u32>> = f
            .blocks
            .iter()
            .map(|b| b.iter().map(|&p| perm[p as usize]).collect())
            .collect();
        let g = Incidence::new(7, blocks).unwrap();
        let iso = find_isomorphism(&f, &g).unwrap();
        assert!(verify_isomorphism(&f, &g, &iso.point_map));
    }

    #[test]
    fn non_isomorphic_rejected() {
        let f = fano();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let (m, _) = mutate_swap_point(&f, &mut rng);
        if m.is_partial_linear() {
            assert!(find_isomorphism(&f, &m).is_none());
        }
    }

    #[test]
    fn json_round_trip() {
        let f = fano();
        let j = f.to_json();
        let g = Incidence::from_json(&j).unwrap();
        assert_eq!(f.blocks, g.blocks);
        assert_eq!(f.v, g.v);
    }

    proptest::proptest! {
        // canonicalization is idempotent and the indexes stay consistent
        // with the blocks on arbitrary inputs
        #[test]
        fn canonical_form_and_indexes(raw in proptest::collection::vec(
            proptest::collection::btree_set(0u32..12, 2..5), 1..10)) {
            let blocks: Vec<Vec<u32>> = raw.iter().map(|s| s.iter().copied().collect()).collect();
            let inc = Incidence::new(12, blocks).unwrap();
            let round = Incidence::from_json(&inc.to_json()).unwrap();
            proptest::prop_assert_eq!(&round.blocks, &inc.blocks);
            for (i, blk) in inc.blocks.iter().enumerate() {
                for (x, &p) in blk.iter().enumerate() {
                    proptest::prop_assert!(inc.point_blocks[p as usize].contains(&(i as u32)));
                    for &r in blk.iter().skip(x + 1) {
                        proptest::prop_assert!(inc.blocks_through(p, r).contains(&(i as u32)));
                    }
                }
            }
        }
    }
}
