//! The bridge from a unital to PG(4, n): the generalized quadrangle GQ(L),
//! its isomorphism onto the parabolic-quadric quadrangle, the hyperplane
//! section, the induced regular spread, the classification of its reguli in
//! unital terms, and the pencil of quadrics carrying the triply-ruled
//! partition.

use std::collections::{HashMap, HashSet};

use serde::Serialize;

use crate::design::{find_isomorphism, Incidence, InversivePlane, IsoMap};
use crate::error::{Error, Result};
use crate::galois::{El, Field};
use crate::linalg;
use crate::projgeom::{
    cameron_knarr_spread, fit_quadric, is_regular_spread, is_spread, is_tube,
    mu_projection, nucleus, parabolic_quadric, pencil_members, regulus_through, NucleusMap,
    Polarity, QuadricForm, Section3, Space, TubeReport,
};
use crate::unital::{AijTable, TriplyRuled, Unital};

// ---------------------------------------------------------------------------
// GQ(L)
// ---------------------------------------------------------------------------

/// GQ(L): points are the (n+1)^2 cells of the A_ij table plus the unital
/// points off L; lines are the row labels, the column labels, and the unital
/// lines meeting L. Verified to satisfy the quadrangle axioms of order (n, n).
pub struct GqStructure {
    pub inc: Incidence,
    /// gq point id of cell (i, j).
    pub cell_point: Vec<Vec<u32>>,
    pub point_of_unital: HashMap<u32, u32>,
    /// gq point id -> unital point, for the non-cell points.
    pub unital_of_point: Vec<Option<u32>>,
    /// block ids of the row lines A_i and column lines B_j.
    pub a_lines: Vec<u32>,
    pub b_lines: Vec<u32>,
    /// block id per unital line meeting L.
    pub k_lines: HashMap<u32, u32>,
}

pub fn build_gq(u: &Unital, aij: &AijTable) -> Result<GqStructure> {
    let n = u.order;
    let l = aij.line;
    let cells_total = (n + 1) * (n + 1);
    let mut cell_point = vec![vec![0u32; n + 1]; n + 1];
    for (i, row) in cell_point.iter_mut().enumerate() {
        for (j, c) in row.iter_mut().enumerate() {
            *c = (i * (n + 1) + j) as u32;
        }
    }
    let off_l: Vec<u32> = (0..u.v() as u32).filter(|&p| !u.on_line(p, l)).collect();
    let point_of_unital: HashMap<u32, u32> = off_l
        .iter()
        .enumerate()
        .map(|(k, &p)| (p, (cells_total + k) as u32))
        .collect();
    let mut unital_of_point = vec![None; cells_total + off_l.len()];
    for (&up, &gp) in &point_of_unital {
        unital_of_point[gp as usize] = Some(up);
    }

    let mut blocks: Vec<Vec<u32>> = Vec::new();
    let mut labels: Vec<(char, u32)> = Vec::new();
    for i in 0..=n {
        blocks.push((0..=n).map(|j| cell_point[i][j]).collect());
        labels.push(('a', i as u32));
    }
    for j in 0..=n {
        blocks.push((0..=n).map(|i| cell_point[i][j]).collect());
        labels.push(('b', j as u32));
    }
    for k in 0..u.b() as u32 {
        if k == l || !u.lines_meet(k, l) {
            continue;
        }
        let (i, j) = aij
            .cell_of(k)
            .ok_or_else(|| Error::verification("gq", format!("line {k} has no cell")))?;
        let mut block = vec![cell_point[i][j]];
        for &p in u.line(k) {
            if let Some(&gp) = point_of_unital.get(&p) {
                block.push(gp);
            }
        }
        blocks.push(block);
        labels.push(('k', k));
    }
    let raw_blocks = blocks.clone();
    let inc = Incidence::new(cells_total + off_l.len(), blocks)?;
    let mut a_lines = vec![0u32; n + 1];
    let mut b_lines = vec![0u32; n + 1];
    let mut k_lines = HashMap::new();
    for (raw, (kind, which)) in raw_blocks.iter().zip(labels) {
        let mut key = raw.clone();
        key.sort_unstable();
        let id = inc.block_id_of(&key).expect("constructed block");
        match kind {
            'a' => a_lines[which as usize] = id,
            'b' => b_lines[which as usize] = id,
            _ => {
                k_lines.insert(which, id);
            }
        }
    }
    let gq = GqStructure {
        inc,
        cell_point,
        point_of_unital,
        unital_of_point,
        a_lines,
        b_lines,
        k_lines,
    };
    verify_gq_axioms(&gq.inc, n, n)?;
    Ok(gq)
}

/// Generalized-quadrangle axioms for order (s, t): s+1 points per line, t+1
/// lines per point, at most one line through two points, and the unique
/// projection property for every non-incident point-line pair.
pub fn verify_gq_axioms(inc: &Incidence, s: usize, t: usize) -> Result<()> {
    if !inc.is_partial_linear() {
        return Err(Error::verification("gq", "two points on two common lines"));
    }
    for b in &inc.blocks {
        if b.len() != s + 1 {
            return Err(Error::verification("gq", format!("line with {} points", b.len())));
        }
    }
    for p in 0..inc.v {
        if inc.point_blocks[p].len() != t + 1 {
            return Err(Error::verification(
                "gq",
                format!("point {p} on {} lines", inc.point_blocks[p].len()),
            ));
        }
    }
    // collinearity bitmap
    let words = inc.v.div_ceil(64);
    let mut coll = vec![vec![0u64; words]; inc.v];
    for blk in &inc.blocks {
        for (i, &p) in blk.iter().enumerate() {
            for &r in blk.iter().skip(i + 1) {
                coll[p as usize][r as usize / 64] |= 1 << (r % 64);
                coll[r as usize][p as usize / 64] |= 1 << (p % 64);
            }
        }
    }
    for p in 0..inc.v as u32 {
        for (bid, blk) in inc.blocks.iter().enumerate() {
            if blk.binary_search(&p).is_ok() {
                continue;
            }
            let mut hits = 0;
            for &q in blk {
                if coll[p as usize][q as usize / 64] >> (q % 64) & 1 == 1 {
                    hits += 1;
                }
            }
            if hits != 1 {
                return Err(Error::verification(
                    "gq",
                    format!("point {p} sees {hits} points of line {bid}"),
                ));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// The quadric side Q(4, n)
// ---------------------------------------------------------------------------

/// The parabolic quadric of PG(4, q) as an incidence structure, with the
/// id translation between quadric indices and ambient points.
pub struct QuadricSide {
    pub space: Space,
    pub form: QuadricForm,
    pub inc: Incidence,
    pub pg_of_idx: Vec<u32>,
    pub idx_of_pg: HashMap<u32, u32>,
    pub line_pg_points: Vec<Vec<u32>>,
    pub nucleus: u32,
}

pub fn build_quadric_side(field: std::sync::Arc<Field>) -> Result<QuadricSide> {
    let space = Space::new(4, field);
    let (form, lines) = parabolic_quadric(&space);
    let pg_of_idx = form.zero_set.clone();
    let idx_of_pg: HashMap<u32, u32> = pg_of_idx
        .iter()
        .enumerate()
        .map(|(i, &p)| (p, i as u32))
        .collect();
    let mut blocks = Vec::with_capacity(lines.len());
    let mut line_pg_points = Vec::with_capacity(lines.len());
    for &lid in &lines {
        let pts = space.line_points(lid).to_vec();
        blocks.push(pts.iter().map(|p| idx_of_pg[p]).collect::<Vec<u32>>());
        line_pg_points.push(pts);
    }
    let inc = Incidence::new(pg_of_idx.len(), blocks)?;
    let nucleus = nucleus(&space, &form)?;
    Ok(QuadricSide {
        space,
        form,
        inc,
        pg_of_idx,
        idx_of_pg,
        line_pg_points,
        nucleus,
    })
}

// ---------------------------------------------------------------------------
// Sigma, the polarity, and the nucleus projection
// ---------------------------------------------------------------------------

pub struct SigmaSide {
    pub functional: Vec<El>,
    pub points: Vec<u32>,
    pub section: Section3,
    pub h_points3: Vec<u32>,
    pub h_form: QuadricForm,
    pub alpha: Polarity,
    /// PG3 line ids of the base regulus, index i matching the i-th point of L.
    pub r0: Vec<u32>,
    pub r0_opposite: Vec<u32>,
    pub mu: NucleusMap,
    /// gq point id -> PG3 point id under the composite projection.
    pub muphi: Vec<u32>,
}

/// The spread induced by the punctured special spread, together with the
/// translation between its ambient lines and the unital lines behind them.
pub struct SpreadWitness {
    pub lines: Vec<u32>,
    pub r0: Vec<u32>,
    pub line_of_unital: HashMap<u32, u32>,
    pub unital_of_line: HashMap<u32, u32>,
}

pub struct Bridge {
    pub line: u32,
    pub aij: AijTable,
    pub gq: GqStructure,
    pub quadric: QuadricSide,
    pub phi: IsoMap,
    pub sigma: SigmaSide,
    pub spread: SpreadWitness,
}

impl Bridge {
    /// PG3 point of a gq point.
    pub fn muphi(&self, gq_point: u32) -> u32 {
        self.sigma.muphi[gq_point as usize]
    }

    /// PG3 point of a unital point off L.
    pub fn muphi_unital(&self, p: u32) -> u32 {
        self.muphi(self.gq.point_of_unital[&p])
    }

    pub fn build(u: &Unital, l: u32) -> Result<Bridge> {
        let aij = crate::unital::aij_table(u, l)?;
        let gq = build_gq(u, &aij)?;
        let field = std::sync::Arc::new(Field::new(u.order.trailing_zeros())?);
        let quadric = build_quadric_side(field)?;
        let phi = find_isomorphism(&gq.inc, &quadric.inc).ok_or_else(|| {
            Error::verification("gq-isomorphism", "no isomorphism onto the quadric quadrangle")
        })?;

        // Sigma spanned by the images of the first two row lines
        let space = &quadric.space;
        let a1_pg = line_pg_via(&gq, &quadric, &phi, gq.a_lines[0]);
        let a2_pg = line_pg_via(&gq, &quadric, &phi, gq.a_lines[1]);
        let mut basis_rows: Vec<Vec<El>> = Vec::new();
        for &p in a1_pg.iter().chain(&a2_pg) {
            basis_rows.push(space.points[p as usize].clone());
        }
        let h = {
            let ns = linalg::nullspace(&space.field, &basis_rows, 5);
            if ns.len() != 1 {
                return Err(Error::verification(
                    "sigma",
                    "row-line images do not span a hyperplane",
                ));
            }
            ns.into_iter().next().unwrap()
        };
        let points = space.hyperplane_points(&h);

        // Sigma meets the quadric exactly in the cell images
        let cell_imgs: HashSet<u32> = gq
            .cell_point
            .iter()
            .flatten()
            .map(|&gp| quadric.pg_of_idx[phi.point_map[gp as usize] as usize])
            .collect();
        let sec_quadric: HashSet<u32> = quadric
            .form
            .zero_set
            .iter()
            .copied()
            .filter(|&p| space.dot(&h, &space.points[p as usize]) == 0)
            .collect();
        if cell_imgs != sec_quadric {
            return Err(Error::verification(
                "sigma",
                "hyperplane section of the quadric is not the cell image set",
            ));
        }

        let section = Section3::new(space, &points)?;
        let h_points3: Vec<u32> = {
            let mut v: Vec<u32> = sec_quadric
                .iter()
                .map(|p| section.from_ambient[p])
                .collect();
            v.sort_unstable();
            v
        };
        let h_form = fit_quadric(&section.space, &h_points3).ok_or_else(|| {
            Error::verification("sigma", "no quadratic form fits the hyperplane section")
        })?;
        let alpha = Polarity::from_form(&section.space, &h_form)?;

        let mut r0 = Vec::new();
        for i in 0..=u.order {
            let pg = line_pg_via(&gq, &quadric, &phi, gq.a_lines[i]);
            let lid = section.line_from_ambient_points(&pg).ok_or_else(|| {
                Error::verification("sigma", "row-line image is not a section line")
            })?;
            r0.push(lid);
        }
        let mut r0_opposite = Vec::new();
        for j in 0..=u.order {
            let pg = line_pg_via(&gq, &quadric, &phi, gq.b_lines[j]);
            let lid = section.line_from_ambient_points(&pg).ok_or_else(|| {
                Error::verification("sigma", "column-line image is not a section line")
            })?;
            r0_opposite.push(lid);
        }

        let mu = mu_projection(space, &quadric.form, quadric.nucleus, &h)?;
        let mut muphi = Vec::with_capacity(gq.inc.v);
        for gp in 0..gq.inc.v as u32 {
            let pg = quadric.pg_of_idx[phi.point_map[gp as usize] as usize];
            let img = mu.map[&pg];
            muphi.push(section.from_ambient[&img]);
        }

        let sigma = SigmaSide {
            functional: h,
            points,
            section,
            h_points3,
            h_form,
            alpha,
            r0,
            r0_opposite,
            mu,
            muphi,
        };

        let spread = build_spread(u, l, &gq, &sigma)?;

        Ok(Bridge {
            line: l,
            aij,
            gq,
            quadric,
            phi,
            sigma,
            spread,
        })
    }
}

fn line_pg_via(gq: &GqStructure, quadric: &QuadricSide, phi: &IsoMap, block: u32) -> Vec<u32> {
    gq.inc
        .block(block)
        .iter()
        .map(|&p| quadric.pg_of_idx[phi.point_map[p as usize] as usize])
        .collect()
}

/// The images of the punctured-spread lines are lines of the section; with
/// the base regulus they form a spread.
fn build_spread(u: &Unital, l: u32, gq: &GqStructure, sigma: &SigmaSide) -> Result<SpreadWitness> {
    let sl = u.special_spread(l)?;
    let mut lines: Vec<u32> = sigma.r0.clone();
    let mut line_of_unital = HashMap::new();
    let mut unital_of_line = HashMap::new();
    for &m in &sl.s_star {
        let pts3: Vec<u32> = u
            .line(m)
            .iter()
            .map(|&p| sigma.muphi[gq.point_of_unital[&p] as usize])
            .collect();
        let lid = sigma.section.space.line_through(pts3[0], pts3[1]);
        for &p in &pts3 {
            if sigma
                .section
                .space
                .line_points(lid)
                .binary_search(&p)
                .is_err()
            {
                return Err(Error::verification(
                    "spread",
                    format!("image of unital line {m} is not collinear"),
                ));
            }
        }
        // the image avoids the hyperplane section of the quadric
        for &p in sigma.section.space.line_points(lid) {
            if sigma.h_points3.binary_search(&p).is_ok() {
                return Err(Error::verification(
                    "spread",
                    format!("image of unital line {m} meets the quadric section"),
                ));
            }
        }
        line_of_unital.insert(m, lid);
        unital_of_line.insert(lid, m);
        lines.push(lid);
    }
    lines.sort_unstable();
    lines.dedup();
    let q = u.order;
    if lines.len() != q * q + 1 || !is_spread(&sigma.section.space, &lines) {
        return Err(Error::verification("spread", "images do not form a spread"));
    }
    Ok(SpreadWitness {
        lines,
        r0: sigma.r0.clone(),
        line_of_unital,
        unital_of_line,
    })
}

// ---------------------------------------------------------------------------
// Tube and regularity
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct TubeRegularity {
    pub tube_planes: usize,
    pub reconstructed_equals_spread: bool,
    pub regular_triples: usize,
}

/// The images of a self-polar triangle companion pair form a tube with the
/// base regulus; its reconstruction recovers the spread, and the spread is
/// regular over every line triple. Also checks that the lines through each
/// base point meeting the triangle side map onto the opposite regulus of the
/// generated regulus.
pub fn verify_tube_and_regularity(
    u: &Unital,
    bridge: &Bridge,
    m: u32,
    n: u32,
) -> Result<(TubeReport, TubeRegularity)> {
    let sl = u.special_spread(bridge.line)?;
    if !sl.in_s_star(m) || !sl.in_s_star(n) {
        return Err(Error::Precondition(
            "triangle sides must lie in the punctured spread".into(),
        ));
    }
    let space = &bridge.sigma.section.space;
    let lm = bridge.spread.line_of_unital[&m];
    let ln = bridge.spread.line_of_unital[&n];
    let mut companions = vec![ln];
    companions.extend_from_slice(&bridge.sigma.r0);
    let report = is_tube(space, lm, &companions);
    if !report.is_tube {
        return Err(Error::verification(
            "tube",
            report
                .failure
                .clone()
                .unwrap_or_else(|| "tube check failed".into()),
        ));
    }
    let ck = cameron_knarr_spread(space, lm, &companions)?;
    let reconstructed = ck == bridge.spread.lines;
    if !reconstructed {
        return Err(Error::verification(
            "tube",
            "reconstructed spread differs from the induced spread",
        ));
    }
    if let Some(bad) = is_regular_spread(space, &bridge.spread.lines)? {
        return Err(Error::verification(
            "regular-spread",
            format!("triple {bad:?} generates a regulus outside the spread"),
        ));
    }

    // opposite-regulus witness at every base point
    for (i, &r0_line) in bridge.sigma.r0.iter().enumerate() {
        let xi = bridge.aij.points[i];
        let reg = regulus_through(space, lm, ln, r0_line)?;
        let mut images: Vec<u32> = Vec::new();
        for &k in u.lines_through(xi) {
            if k == bridge.line || !u.lines_meet(k, m) {
                continue;
            }
            let gq_block = bridge.gq.k_lines[&k];
            let pts3: Vec<u32> = bridge
                .gq
                .inc
                .block(gq_block)
                .iter()
                .map(|&gp| bridge.sigma.muphi[gp as usize])
                .collect();
            let lid = space.line_through(pts3[0], pts3[1]);
            for &p in &pts3 {
                if space.line_points(lid).binary_search(&p).is_err() {
                    return Err(Error::verification(
                        "regular-spread",
                        format!("projection of line {k} is not collinear"),
                    ));
                }
            }
            images.push(lid);
        }
        images.sort_unstable();
        images.dedup();
        if images != reg.opposite {
            return Err(Error::verification(
                "regular-spread",
                format!("images at base point {xi} are not the opposite regulus"),
            ));
        }
    }

    let q = u.order;
    let triples = bridge.spread.lines.len();
    Ok((
        report,
        TubeRegularity {
            tube_planes: q + 1,
            reconstructed_equals_spread: reconstructed,
            regular_triples: triples * (triples - 1) * (triples - 2) / 6,
        },
    ))
}

// ---------------------------------------------------------------------------
// Regulus classification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum RegulusLabel {
    Base,
    /// Disjoint from the base regulus; witnessed by an L-parallel class pair.
    Disjoint { class: u32, partner: u32 },
    /// Tangent: one base line; the other members pull back to one parallel
    /// class at the matching point of L.
    Tangent { point_index: usize },
    /// Secant: two base lines; witnessed by a flock at a sampled point.
    Secant { point_indices: [usize; 2] },
}

#[derive(Debug, Clone)]
pub struct ClassifiedRegulus {
    pub lines: Vec<u32>,
    pub label: RegulusLabel,
}

pub struct RegulusClassification {
    pub reguli: Vec<ClassifiedRegulus>,
    pub c0: usize,
    pub c1: usize,
    pub c2: usize,
    pub i1: InversivePlane,
    pub i2_is_design: bool,
    pub c0_equals_c0_star: bool,
}

/// Enumerate the reguli inside the spread (they are the circles of the
/// derived inversive plane), label each by its intersection with the base
/// regulus, and verify the unital-side witness for every label. `exhaustive`
/// checks the secant witness at every point of every member rather than one.
pub fn classify_reguli(
    u: &Unital,
    bridge: &Bridge,
    exhaustive: bool,
) -> Result<RegulusClassification> {
    let space = &bridge.sigma.section.space;
    let spread = &bridge.spread.lines;
    let index_of: HashMap<u32, u32> = spread
        .iter()
        .enumerate()
        .map(|(i, &l)| (l, i as u32))
        .collect();
    let r0_set: HashSet<u32> = bridge.sigma.r0.iter().copied().collect();

    let per_i: Vec<Result<Vec<Vec<u32>>>> = {
        use rayon::prelude::*;
        (0..spread.len())
            .into_par_iter()
            .map(|i| {
                let mut local: Vec<Vec<u32>> = Vec::new();
                for j in (i + 1)..spread.len() {
                    for k in (j + 1)..spread.len() {
                        let reg = regulus_through(space, spread[i], spread[j], spread[k])?;
                        if !reg.lines.iter().all(|l| index_of.contains_key(l)) {
                            return Err(Error::verification(
                                "regulus-classification",
                                "spread is not regular",
                            ));
                        }
                        local.push(reg.lines);
                    }
                }
                local.sort();
                local.dedup();
                Ok(local)
            })
            .collect()
    };
    let mut reguli: Vec<Vec<u32>> = Vec::new();
    for r in per_i {
        reguli.extend(r?);
    }
    reguli.sort();
    reguli.dedup();
    let n = u.order;
    if reguli.len() != n * (n * n + 1) {
        return Err(Error::verification(
            "regulus-classification",
            format!("{} distinct reguli, expected {}", reguli.len(), n * (n * n + 1)),
        ));
    }

    // the derived inversive plane on the spread lines
    let blocks: Vec<Vec<u32>> = reguli
        .iter()
        .map(|r| r.iter().map(|l| index_of[l]).collect())
        .collect();
    let i1 = InversivePlane::new(Incidence::new(spread.len(), blocks)?, n)?;

    let lp = u.l_parallel_classes(bridge.line)?;
    // met-line key (sorted unital lines) -> class pair
    let mut key_to_classes: HashMap<Vec<u32>, Vec<u32>> = HashMap::new();
    for (ci, class) in lp.classes.iter().enumerate() {
        key_to_classes
            .entry(class.met.clone())
            .or_default()
            .push(ci as u32);
    }

    let mut classified = Vec::new();
    let (mut c0, mut c1, mut c2) = (0usize, 0usize, 0usize);
    let mut c0_blocks: HashSet<Vec<u32>> = HashSet::new();
    let r0_sorted: Vec<u32> = {
        let mut v = bridge.sigma.r0.clone();
        v.sort_unstable();
        v
    };
    for lines in &reguli {
        if *lines == r0_sorted {
            classified.push(ClassifiedRegulus {
                lines: lines.clone(),
                label: RegulusLabel::Base,
            });
            continue;
        }
        let base_members: Vec<u32> = lines
            .iter()
            .copied()
            .filter(|l| r0_set.contains(l))
            .collect();
        let label = match base_members.len() {
            0 => {
                c0 += 1;
                let mut key: Vec<u32> = lines
                    .iter()
                    .map(|l| bridge.spread.unital_of_line[l])
                    .collect();
                key.sort_unstable();
                let classes = key_to_classes.get(&key).ok_or_else(|| {
                    Error::verification(
                        "regulus-classification",
                        "disjoint regulus does not match an L-parallel class pair",
                    )
                })?;
                if classes.len() != 2 || lp.partner[classes[0] as usize] != classes[1] {
                    return Err(Error::verification(
                        "regulus-classification",
                        "met-line group is not a partner pair",
                    ));
                }
                c0_blocks.insert(key.clone());
                RegulusLabel::Disjoint {
                    class: classes[0],
                    partner: classes[1],
                }
            }
            1 => {
                c1 += 1;
                let i = bridge
                    .sigma
                    .r0
                    .iter()
                    .position(|&r| r == base_members[0])
                    .unwrap();
                let xi = bridge.aij.points[i];
                let plane = u.inversive_plane_at(xi)?;
                let pulled: Vec<u32> = lines
                    .iter()
                    .filter(|l| !r0_set.contains(l))
                    .map(|l| bridge.spread.unital_of_line[l])
                    .collect();
                let first_class = plane.class_circle(pulled[0]);
                for &m in &pulled[1..] {
                    if plane.class_circle(m) != first_class {
                        return Err(Error::verification(
                            "regulus-classification",
                            format!("tangent regulus members are not parallel at point {xi}"),
                        ));
                    }
                }
                RegulusLabel::Tangent { point_index: i }
            }
            2 => {
                c2 += 1;
                let i1_idx = bridge
                    .sigma
                    .r0
                    .iter()
                    .position(|&r| r == base_members[0])
                    .unwrap();
                let i2_idx = bridge
                    .sigma
                    .r0
                    .iter()
                    .position(|&r| r == base_members[1])
                    .unwrap();
                let pulled: Vec<u32> = lines
                    .iter()
                    .filter(|l| !r0_set.contains(l))
                    .map(|l| bridge.spread.unital_of_line[l])
                    .collect();
                verify_secant_witness(u, bridge, &pulled, i1_idx, i2_idx, exhaustive)?;
                RegulusLabel::Secant {
                    point_indices: [i1_idx, i2_idx],
                }
            }
            k => {
                return Err(Error::verification(
                    "regulus-classification",
                    format!("regulus shares {k} lines with the base regulus"),
                ))
            }
        };
        classified.push(ClassifiedRegulus {
            lines: lines.clone(),
            label,
        });
    }

    // expected counts
    if c0 != n * (n - 1) * (n - 2) / 2 || c1 != (n + 1) * (n - 1) {
        return Err(Error::verification(
            "regulus-classification",
            format!("label counts ({c0}, {c1}, {c2}) off the expected profile"),
        ));
    }

    // every L-parallel partner pair arises as a disjoint regulus
    let expected_c0: HashSet<Vec<u32>> = key_to_classes.keys().cloned().collect();
    let c0_equals_c0_star = c0_blocks == expected_c0;

    // the swapped structure: replace the disjoint circles by the met-line
    // blocks coming from the unital side
    let mut i2_blocks: Vec<Vec<u32>> = Vec::new();
    for cr in &classified {
        if !matches!(cr.label, RegulusLabel::Disjoint { .. }) {
            i2_blocks.push(cr.lines.iter().map(|l| index_of[l]).collect());
        }
    }
    for key in &expected_c0 {
        let block: Vec<u32> = key
            .iter()
            .map(|m| index_of[&bridge.spread.line_of_unital[m]])
            .collect();
        i2_blocks.push(block);
    }
    let i2 = Incidence::new(spread.len(), i2_blocks)?;
    let i2_is_design = i2.is_t_design(3, n + 1, 1);

    Ok(RegulusClassification {
        reguli: classified,
        c0,
        c1,
        c2,
        i1,
        i2_is_design,
        c0_equals_c0_star,
    })
}

/// Secant-regulus witness: at a point z of the first pulled-back line, the
/// flock carried by the joins to the two matched points of L consists of the
/// classes of the other pulled-back lines plus one infinity circle.
fn verify_secant_witness(
    u: &Unital,
    bridge: &Bridge,
    pulled: &[u32],
    i1: usize,
    i2: usize,
    exhaustive: bool,
) -> Result<()> {
    let x1 = bridge.aij.points[i1];
    let x2 = bridge.aij.points[i2];
    let firsts: Vec<u32> = if exhaustive {
        pulled.to_vec()
    } else {
        vec![*pulled.iter().min().unwrap()]
    };
    for &l1 in &firsts {
        let zs: Vec<u32> = if exhaustive {
            u.line(l1).to_vec()
        } else {
            vec![u.line(l1)[0]]
        };
        for &z in &zs {
            let k1 = u
                .line_through(z, x1)
                .ok_or_else(|| Error::verification("regulus-classification", "no join"))?;
            let k2 = u
                .line_through(z, x2)
                .ok_or_else(|| Error::verification("regulus-classification", "no join"))?;
            let plane = u.inversive_plane_at(z)?;
            let flock = plane.plane.flock(plane.ip(k1), plane.ip(k2))?;
            let mut expected: Vec<u32> = pulled
                .iter()
                .filter(|&&m| m != l1)
                .map(|&m| plane.class_circle(m))
                .collect();
            expected.sort_unstable();
            let mut class_circles: Vec<u32> = flock
                .iter()
                .copied()
                .filter(|&c| !plane.circle_contains_infinity(c))
                .collect();
            class_circles.sort_unstable();
            if class_circles != expected {
                return Err(Error::verification(
                    "regulus-classification",
                    format!("flock at point {z} does not list the secant members"),
                ));
            }
            let infinity_count = flock.len() - class_circles.len();
            if infinity_count != 1 {
                return Err(Error::verification(
                    "regulus-classification",
                    format!("{infinity_count} infinity circles in the secant flock"),
                ));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Cell/flock biconditional (exhaustive batch)
// ---------------------------------------------------------------------------

#[derive(Debug, Default, Serialize)]
pub struct CellFlockStats {
    pub instances: usize,
    pub holds: bool,
    pub forward_matches: usize,
}

/// For intersecting lines K1 in cell (i1, j1), K2 in cell (i2, j2) with
/// distinct rows and columns, and a punctured-spread line M off their meet:
/// the class of M lies in the flock of (K1, K2) at the meet exactly when some
/// point z of M joins to the matched points of L inside the two cells.
/// Additionally each such pair admits exactly n-2 off-meet points z.
pub fn verify_cell_flock_batch(u: &Unital, bridge: &Bridge) -> Result<CellFlockStats> {
    let meets: Vec<u32> = (0..u.v() as u32)
        .filter(|&y| !u.on_line(y, bridge.line))
        .collect();
    verify_cell_flock_at(u, bridge, &meets)
}

/// The same biconditional over a seeded sample of meet points.
pub fn verify_cell_flock_sampled(
    u: &Unital,
    bridge: &Bridge,
    seed: u64,
    points: usize,
) -> Result<CellFlockStats> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x52f1_0c5e);
    let mut meets: Vec<u32> = (0..u.v() as u32)
        .filter(|&y| !u.on_line(y, bridge.line))
        .collect();
    meets.shuffle(&mut rng);
    meets.truncate(points);
    meets.sort_unstable();
    verify_cell_flock_at(u, bridge, &meets)
}

fn verify_cell_flock_at(u: &Unital, bridge: &Bridge, meets: &[u32]) -> Result<CellFlockStats> {
    use rayon::prelude::*;
    let l = bridge.line;
    let sl = u.special_spread(l)?;
    let aij = &bridge.aij;
    let n = u.order;
    let per_point: Vec<Result<(usize, usize)>> = meets
        .par_iter()
        .map(|&y| -> Result<(usize, usize)> {
            let mut instances = 0usize;
            let mut forward = 0usize;
            let joins: Vec<(usize, usize, u32)> = aij
                .points
                .iter()
                .enumerate()
                .map(|(i, &xi)| {
                    let k = u.line_through(y, xi).expect("unital join");
                    let (ci, cj) = aij.cell_of(k).expect("join meets L");
                    debug_assert_eq!(ci, i);
                    (i, cj, k)
                })
                .collect();
            let plane = u.inversive_plane_at(y)?;
            for a in 0..joins.len() {
                for b in (a + 1)..joins.len() {
                    let (i1, j1, k1) = joins[a];
                    let (i2, j2, k2) = joins[b];
                    if j1 == j2 {
                        continue;
                    }
                    let flock = plane.plane.flock(plane.ip(k1), plane.ip(k2))?;
                    // the off-meet witnesses for this pair
                    let mut zs: Vec<u32> = Vec::new();
                    for z in 0..u.v() as u32 {
                        if z == y || u.on_line(z, l) {
                            continue;
                        }
                        let z1 = u.line_through(z, aij.points[i1]).expect("join");
                        let z2 = u.line_through(z, aij.points[i2]).expect("join");
                        if aij.cell_of(z1) == Some((i1, j1)) && aij.cell_of(z2) == Some((i2, j2))
                        {
                            zs.push(z);
                        }
                    }
                    if zs.len() != n - 2 {
                        return Err(Error::verification(
                            "cell-flock",
                            format!(
                                "pair at point {y} has {} off-meet witnesses, expected {}",
                                zs.len(),
                                n - 2
                            ),
                        ));
                    }
                    let zset: HashSet<u32> = zs.iter().copied().collect();
                    for &m in &sl.s_star {
                        if u.on_line(y, m) {
                            continue;
                        }
                        instances += 1;
                        let in_flock = flock.contains(&plane.class_circle(m));
                        let has_witness = u.line(m).iter().any(|p| zset.contains(p));
                        if in_flock != has_witness {
                            return Err(Error::verification(
                                "cell-flock",
                                format!("biconditional fails at point {y} for spread line {m}"),
                            ));
                        }
                        if in_flock {
                            forward += 1;
                        }
                    }
                }
            }
            Ok((instances, forward))
        })
        .collect();
    let mut stats = CellFlockStats {
        instances: 0,
        holds: true,
        forward_matches: 0,
    };
    for r in per_point {
        let (i, f) = r?;
        stats.instances += i;
        stats.forward_matches += f;
    }
    Ok(stats)
}

// ---------------------------------------------------------------------------
// The pencil of quadrics
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct PencilWitness {
    pub member_sizes: Vec<usize>,
    pub hyperbolic_members: usize,
    pub line_members: usize,
    pub covers_sigma: bool,
}

/// The triply-ruled partition maps onto a pencil of quadrics: the section
/// quadric, one hyperbolic quadric per ruled set, and two line-quadrics on
/// the images of the triangle sides. Verifies pencil membership by zero-set
/// comparison against the span of two fitted members, mutual disjointness,
/// and the spread decomposition.
pub fn verify_pencil(_u: &Unital, bridge: &Bridge, trp: &TriplyRuled) -> Result<PencilWitness> {
    let space = &bridge.sigma.section.space;
    let [l, m, n] = trp.triangle;
    if l != bridge.line {
        return Err(Error::Precondition(
            "partition triangle must start at the bridge line".into(),
        ));
    }
    // image point sets of the ruled sets
    let mut h_sets: Vec<Vec<u32>> = Vec::new();
    for set in &trp.sets {
        let mut pts: Vec<u32> = set
            .points
            .iter()
            .map(|&p| bridge.muphi_unital(p))
            .collect();
        pts.sort_unstable();
        pts.dedup();
        h_sets.push(pts);
    }
    // each ruled set's first ruling is a regulus inside the spread
    for (set, img) in trp.sets.iter().zip(&h_sets) {
        let ruling3: Vec<u32> = set
            .l_ruling
            .iter()
            .map(|k| bridge.spread.line_of_unital[k])
            .collect();
        let reg = regulus_through(space, ruling3[0], ruling3[1], ruling3[2])?;
        let mut sorted = ruling3.clone();
        sorted.sort_unstable();
        if reg.lines != sorted {
            return Err(Error::verification("pencil", "ruling is not a regulus"));
        }
        if &reg.point_set(space) != img {
            return Err(Error::verification(
                "pencil",
                "ruling regulus does not cover the image of its ruled set",
            ));
        }
    }
    // spread decomposition: rulings + base regulus + the two side images
    {
        let mut acc: Vec<u32> = bridge.sigma.r0.clone();
        acc.push(bridge.spread.line_of_unital[&m]);
        acc.push(bridge.spread.line_of_unital[&n]);
        for set in &trp.sets {
            for k in &set.l_ruling {
                acc.push(bridge.spread.line_of_unital[k]);
            }
        }
        acc.sort_unstable();
        acc.dedup();
        if acc != bridge.spread.lines {
            return Err(Error::verification(
                "pencil",
                "spread does not decompose into rulings, base regulus and side images",
            ));
        }
    }

    let g = fit_quadric(space, &h_sets[0])
        .ok_or_else(|| Error::verification("pencil", "no form fits the first ruled-set image"))?;
    let members = pencil_members(space, &bridge.sigma.h_form, &g)?;

    let lm_pts: Vec<u32> = space
        .line_points(bridge.spread.line_of_unital[&m])
        .to_vec();
    let ln_pts: Vec<u32> = space
        .line_points(bridge.spread.line_of_unital[&n])
        .to_vec();
    let mut expected: Vec<Vec<u32>> = vec![bridge.sigma.h_points3.clone()];
    expected.extend(h_sets.iter().cloned());
    expected.push(lm_pts.clone());
    expected.push(ln_pts.clone());
    expected.sort();
    let mut got: Vec<Vec<u32>> = members.iter().map(|f| f.zero_set.clone()).collect();
    got.sort();
    if expected != got {
        return Err(Error::verification(
            "pencil",
            "pencil member zero sets do not match the partition images",
        ));
    }

    // the members partition the section points (empty base locus)
    let mut covered = vec![0u8; space.num_points()];
    for z in &got {
        for &p in z {
            covered[p as usize] += 1;
        }
    }
    let covers = covered.iter().all(|&c| c == 1);
    if !covers {
        return Err(Error::verification(
            "pencil",
            "pencil members do not partition the section",
        ));
    }
    let qsz = space.q() + 1;
    Ok(PencilWitness {
        member_sizes: got.iter().map(|z| z.len()).collect(),
        hyperbolic_members: got.iter().filter(|z| z.len() == qsz * qsz).count(),
        line_members: got.iter().filter(|z| z.len() == qsz).count(),
        covers_sigma: covers,
    })
}

// ---------------------------------------------------------------------------
// Plane containment for off-spread lines
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct LinePlaneStats {
    pub outside_lines: usize,
    pub predicted_matches: usize,
    pub spread_side_planes: usize,
}

/// Every unital line missing L and outside its spread maps to a plane of
/// PG(4, q) that contains a spread line, and that line is the image of the
/// triangle partner predicted by the spread membership. Lines inside the
/// punctured spread instead span the plane of the nucleus and their own
/// projection.
pub fn verify_line_planes(u: &Unital, bridge: &Bridge) -> Result<LinePlaneStats> {
    let l = bridge.line;
    let sl = u.special_spread(l)?;
    let space4 = &bridge.quadric.space;
    let sec = &bridge.sigma.section;
    let mut stats = LinePlaneStats {
        outside_lines: 0,
        predicted_matches: 0,
        spread_side_planes: 0,
    };
    for j in 0..u.b() as u32 {
        if j == l || u.lines_meet(j, l) || sl.contains(j) {
            continue;
        }
        stats.outside_lines += 1;
        let phi_pts: Vec<u32> = u
            .line(j)
            .iter()
            .map(|&p| {
                bridge.quadric.pg_of_idx
                    [bridge.phi.point_map[bridge.gq.point_of_unital[&p] as usize] as usize]
            })
            .collect();
        if space4.rank_of(&phi_pts) != 3 {
            return Err(Error::verification(
                "line-planes",
                format!("image of line {j} does not span a plane"),
            ));
        }
        let plane_pts = space4.span_points(&phi_pts);
        let in_sigma: Vec<u32> = plane_pts
            .iter()
            .copied()
            .filter(|&p| space4.dot(&bridge.sigma.functional, &space4.points[p as usize]) == 0)
            .collect();
        if in_sigma.len() != space4.q() + 1 {
            return Err(Error::verification(
                "line-planes",
                format!(
                    "plane of line {j} cuts the hyperplane in {} points",
                    in_sigma.len()
                ),
            ));
        }
        let lid = sec
            .line_from_ambient_points(&in_sigma)
            .ok_or_else(|| Error::verification("line-planes", "section cut is not a line"))?;
        if bridge.spread.lines.binary_search(&lid).is_err() {
            return Err(Error::verification(
                "line-planes",
                format!("plane of line {j} contains no spread line"),
            ));
        }
        // predicted partner: the spread side whose punctured spread holds j
        let carriers: Vec<u32> = sl
            .s_star
            .iter()
            .copied()
            .filter(|&m| {
                u.special_spread(m)
                    .map(|sm| sm.in_s_star(j))
                    .unwrap_or(false)
            })
            .collect();
        let [m] = carriers.as_slice() else {
            return Err(Error::verification(
                "line-planes",
                format!(
                    "line {j} lies in {} punctured spreads of spread sides",
                    carriers.len()
                ),
            ));
        };
        let partner = crate::unital::polar_triple(u, l, *m)?;
        if bridge.spread.line_of_unital[&partner] == lid {
            stats.predicted_matches += 1;
        } else {
            return Err(Error::verification(
                "line-planes",
                format!("plane of line {j} contains an unexpected spread line"),
            ));
        }
    }
    // spread-side lines: the plane of the nucleus and the projected line
    for &m in &sl.s_star {
        let lid = bridge.spread.line_of_unital[&m];
        let amb: Vec<u32> = sec
            .space
            .line_points(lid)
            .iter()
            .map(|&p| sec.to_ambient[p as usize])
            .collect();
        let mut basis: Vec<Vec<El>> =
            vec![space4.points[bridge.quadric.nucleus as usize].clone()];
        basis.push(space4.points[amb[0] as usize].clone());
        basis.push(space4.points[amb[1] as usize].clone());
        for &p in u.line(m) {
            let pg = bridge.quadric.pg_of_idx
                [bridge.phi.point_map[bridge.gq.point_of_unital[&p] as usize] as usize];
            let mut rows = basis.clone();
            rows.push(space4.points[pg as usize].clone());
            if linalg::rank(&space4.field, &rows) != 3 {
                return Err(Error::verification(
                    "line-planes",
                    format!("image of spread-side line {m} leaves its nucleus plane"),
                ));
            }
        }
        stats.spread_side_planes += 1;
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::unital::hermitian_unital;

    // building the bridge is costly; share one instance across the tests
    fn with_bridge<R>(f: impl FnOnce(&Unital, &Bridge) -> R) -> R {
        use std::sync::OnceLock;
        static CELL: OnceLock<(Unital, Bridge)> = OnceLock::new();
        let (u, b) = CELL.get_or_init(|| {
            let u = hermitian_unital(2).unwrap();
            let b = Bridge::build(&u, 0).unwrap();
            (u, b)
        });
        f(u, b)
    }

    #[test]
    fn gq_counts_and_axioms_q4() {
        with_bridge(|_, b| {
            assert_eq!(b.gq.inc.v, 85);
            assert_eq!(b.gq.inc.b(), 85);
            for blk in &b.gq.inc.blocks {
                assert_eq!(blk.len(), 5);
            }
            for p in 0..b.gq.inc.v {
                assert_eq!(b.gq.inc.point_blocks[p].len(), 5);
            }
        });
    }

    #[test]
    fn quadric_side_q4() {
        with_bridge(|_, b| {
            assert_eq!(b.quadric.inc.v, 85);
            assert_eq!(b.quadric.inc.b(), 85);
            assert_eq!(
                b.quadric.space.points[b.quadric.nucleus as usize],
                vec![1, 0, 0, 0, 0]
            );
        });
    }

    #[test]
    fn phi_is_verified_isomorphism() {
        with_bridge(|_, b| {
            assert!(crate::design::verify_isomorphism(
                &b.gq.inc,
                &b.quadric.inc,
                &b.phi.point_map
            ));
        });
    }

    #[test]
    fn sigma_section_q4() {
        with_bridge(|_, b| {
            assert_eq!(b.sigma.points.len(), 85);
            assert_eq!(b.sigma.h_points3.len(), 25);
            assert_eq!(b.sigma.r0.len(), 5);
            // alpha is involutory and incidence-reversing
            let space = &b.sigma.section.space;
            for p in 0..space.num_points() as u32 {
                let plane = b.sigma.alpha.plane(p);
                assert_eq!(b.sigma.alpha.pole(plane), Some(p));
                for &y in plane.iter().take(8) {
                    assert!(b.sigma.alpha.plane(y).binary_search(&p).is_ok());
                }
            }
            // alpha maps quadric points to tangent planes
            for &hpt in b.sigma.h_points3.iter().take(6) {
                assert!(b.sigma.alpha.plane(hpt).binary_search(&hpt).is_ok());
            }
        });
    }

    #[test]
    fn spread_q4() {
        with_bridge(|u, b| {
            assert_eq!(b.spread.lines.len(), 17);
            assert!(is_spread(&b.sigma.section.space, &b.spread.lines));
            let _ = u;
        });
    }

    #[test]
    fn mu_identity_on_section_points() {
        with_bridge(|_, b| {
            for (&v, &img) in &b.sigma.mu.map {
                let on_sigma = b
                    .quadric
                    .space
                    .dot(&b.sigma.functional, &b.quadric.space.points[v as usize])
                    == 0;
                if on_sigma {
                    assert_eq!(v, img);
                }
            }
        });
    }

    #[test]
    fn cone_images_are_polar_planes() {
        with_bridge(|_, b| {
            let space = &b.quadric.space;
            // a few quadric points off the hyperplane
            let mut tested = 0;
            for &v in &b.quadric.form.zero_set {
                if space.dot(&b.sigma.functional, &space.points[v as usize]) == 0 {
                    continue;
                }
                let img = crate::projgeom::cone_image(
                    space,
                    &b.quadric.form,
                    &b.sigma.mu,
                    &b.sigma.functional,
                    v,
                )
                .unwrap();
                assert_eq!(img.plane.len(), 21);
                assert_eq!(img.conic.len(), 5);
                // image plane is the polar plane of mu(v)
                let mu_v3 = b.sigma.section.from_ambient[&b.sigma.mu.map[&v]];
                let polar: Vec<u32> = b.sigma.alpha.plane(mu_v3).to_vec();
                let img3: Vec<u32> = {
                    let mut w: Vec<u32> = img
                        .plane
                        .iter()
                        .map(|p| b.sigma.section.from_ambient[p])
                        .collect();
                    w.sort_unstable();
                    w
                };
                assert_eq!(img3, polar);
                assert_eq!(b.sigma.section.from_ambient[&img.conic_nucleus], mu_v3);
                tested += 1;
                if tested == 5 {
                    break;
                }
            }
            assert_eq!(tested, 5);
        });
    }

    #[test]
    fn tube_and_regularity_q4() {
        with_bridge(|u, b| {
            let sl = u.special_spread(0).unwrap();
            let m = sl.s_star[0];
            let n = crate::unital::polar_triple(u, 0, m).unwrap();
            let (report, reg) = verify_tube_and_regularity(u, b, m, n).unwrap();
            assert!(report.is_tube);
            assert_eq!(report.planes.len(), 5);
            for p in &report.planes {
                assert_eq!(p.hyperoval.len(), 6);
            }
            assert!(reg.reconstructed_equals_spread);
            assert_eq!(reg.regular_triples, 680);
        });
    }

    #[test]
    fn classification_q4() {
        with_bridge(|u, b| {
            let cls = classify_reguli(u, b, false).unwrap();
            assert_eq!(cls.reguli.len(), 68);
            assert_eq!((cls.c0, cls.c1, cls.c2), (12, 15, 40));
            assert!(cls.i2_is_design);
            assert!(cls.c0_equals_c0_star);
        });
    }

    #[test]
    fn cell_flock_batch_q4() {
        with_bridge(|u, b| {
            let stats = verify_cell_flock_batch(u, b).unwrap();
            assert!(stats.instances > 0);
        });
    }

    #[test]
    fn pencil_q4() {
        with_bridge(|u, b| {
            let sl = u.special_spread(0).unwrap();
            let m = sl.s_star[0];
            let n = crate::unital::polar_triple(u, 0, m).unwrap();
            let trp = crate::unital::triply_ruled_partition(u, 0, m, n).unwrap();
            let w = verify_pencil(u, b, &trp).unwrap();
            assert_eq!(w.hyperbolic_members, 3);
            assert_eq!(w.line_members, 2);
            assert!(w.covers_sigma);
            let mut sizes = w.member_sizes.clone();
            sizes.sort_unstable();
            assert_eq!(sizes, vec![5, 5, 25, 25, 25]);
        });
    }

    #[test]
    fn line_planes_q4() {
        with_bridge(|u, b| {
            let stats = verify_line_planes(u, b).unwrap();
            assert_eq!(stats.outside_lines, 120);
            assert_eq!(stats.predicted_matches, 120);
            assert_eq!(stats.spread_side_planes, 12);
        });
    }
}

#[cfg(test)]
mod small_order_tests {
    use super::*;
    use crate::unital::hermitian_unital;

    #[test]
    fn bridge_exists_at_order_2() {
        // construction sanity below the theorem hypotheses: the quadrangle of
        // the order-2 unital is the 15-point quadric quadrangle
        let u = hermitian_unital(1).unwrap();
        let b = Bridge::build(&u, 0).unwrap();
        assert_eq!(b.gq.inc.v, 15);
        assert_eq!(b.gq.inc.b(), 15);
        assert!(crate::design::verify_isomorphism(
            &b.gq.inc,
            &b.quadric.inc,
            &b.phi.point_map
        ));
        assert_eq!(b.spread.lines.len(), 5);
        assert!(
            is_regular_spread(&b.sigma.section.space, &b.spread.lines)
                .unwrap()
                .is_none()
        );
    }
}
