//! The projective plane of order q^2 built from the regular spread (points:
//! the affine points of PG(4, q) plus one point per spread line; lines: the
//! affine planes through a spread line plus the line at infinity), the
//! unital it inherits from the quadric, and the explicit design isomorphism
//! from the source unital onto it.

use std::collections::{HashMap, HashSet};

use serde::Serialize;

use crate::bridge::Bridge;
use crate::design::{find_isomorphism, Incidence, IsoMap};
use crate::error::{Error, Result};
use crate::galois::Field;
use crate::projgeom::Space;
use crate::unital::Unital;

/// The completed translation plane of the spread.
pub struct BBPlane {
    pub inc: Incidence,
    /// bb point id -> ambient PG(4, q) point id, for the affine points.
    pub pg_of_bb: Vec<Option<u32>>,
    pub bb_of_pg: HashMap<u32, u32>,
    /// bb point id of the infinite point of spread line k (spread order).
    pub infinite_points: Vec<u32>,
    pub line_at_infinity: u32,
}

/// Build the plane: one line per (spread line, affine plane through it),
/// completed by the line at infinity. Verified to be a projective plane of
/// order q^2 by the exhaustive pair count.
pub fn bruck_bose_plane(bridge: &Bridge) -> Result<BBPlane> {
    let space4 = &bridge.quadric.space;
    let sec = &bridge.sigma.section;
    let q = space4.q();
    let affine: Vec<u32> = (0..space4.num_points() as u32)
        .filter(|&p| space4.dot(&bridge.sigma.functional, &space4.points[p as usize]) != 0)
        .collect();
    debug_assert_eq!(affine.len(), q.pow(4));
    let bb_of_pg: HashMap<u32, u32> = affine
        .iter()
        .enumerate()
        .map(|(i, &p)| (p, i as u32))
        .collect();
    let mut pg_of_bb: Vec<Option<u32>> = affine.iter().map(|&p| Some(p)).collect();
    let spread = &bridge.spread.lines;
    let infinite_points: Vec<u32> = (0..spread.len())
        .map(|k| (affine.len() + k) as u32)
        .collect();
    pg_of_bb.extend(std::iter::repeat(None).take(spread.len()));

    let mut blocks: Vec<Vec<u32>> = Vec::new();
    for (k, &line3) in spread.iter().enumerate() {
        let amb: Vec<u32> = sec
            .space
            .line_points(line3)
            .iter()
            .map(|&p| sec.to_ambient[p as usize])
            .collect();
        let mut covered: HashSet<u32> = HashSet::new();
        for &a in &affine {
            if covered.contains(&a) {
                continue;
            }
            let plane = space4.span_points(&[amb[0], amb[1], a]);
            let mut block: Vec<u32> = Vec::with_capacity(q * q + 1);
            for &p in &plane {
                if let Some(&bb) = bb_of_pg.get(&p) {
                    block.push(bb);
                    covered.insert(p);
                }
            }
            if block.len() != q * q {
                return Err(Error::verification(
                    "bruck-bose",
                    format!("affine plane holds {} affine points", block.len()),
                ));
            }
            block.push(infinite_points[k]);
            blocks.push(block);
        }
    }
    let infinity_block: Vec<u32> = infinite_points.clone();
    blocks.push(infinity_block.clone());
    if blocks.len() != q * q * (q * q + 1) + 1 {
        return Err(Error::verification(
            "bruck-bose",
            format!("{} lines in the completed plane", blocks.len()),
        ));
    }
    let inc = Incidence::new(pg_of_bb.len(), blocks)?;
    let order = q * q;
    if !inc.is_t_design(2, order + 1, 1) {
        return Err(Error::verification(
            "bruck-bose",
            "completed plane is not a projective plane",
        ));
    }
    let line_at_infinity = inc
        .block_id_of(&infinity_block)
        .expect("infinity line is a block");
    Ok(BBPlane {
        inc,
        pg_of_bb,
        bb_of_pg,
        infinite_points,
        line_at_infinity,
    })
}

/// The plane of a regular spread is Desarguesian: certified by an explicit
/// incidence isomorphism onto PG(2, q^2).
pub fn identify_with_pg2(bridge: &Bridge, bb: &BBPlane) -> Result<IsoMap> {
    let q = bridge.quadric.space.q();
    let e = q.trailing_zeros();
    let field = std::sync::Arc::new(Field::new(2 * e)?);
    let pg2 = Space::new(2, field);
    let target = pg2.incidence();
    find_isomorphism(&bb.inc, &target)
        .ok_or_else(|| Error::verification("desarguesian", "no isomorphism onto PG(2, q^2)"))
}

/// The unital inherited from the quadric: affine quadric points plus the
/// infinite points of the base regulus.
pub struct BuekenhoutUnital {
    pub inc: Incidence,
    /// unital-side point of each bu point (bb point id).
    pub bb_points: Vec<u32>,
    pub bu_of_bb: HashMap<u32, u32>,
    /// bu point ids of the infinite points, in base-regulus order.
    pub infinite: Vec<u32>,
}

pub fn buekenhout_unital(bridge: &Bridge, bb: &BBPlane) -> Result<BuekenhoutUnital> {
    let space4 = &bridge.quadric.space;
    let q = space4.q();
    // affine quadric points
    let mut bb_points: Vec<u32> = bridge
        .quadric
        .form
        .zero_set
        .iter()
        .copied()
        .filter(|&p| space4.dot(&bridge.sigma.functional, &space4.points[p as usize]) != 0)
        .map(|p| bb.bb_of_pg[&p])
        .collect();
    // infinite points of the base regulus, in order
    let mut infinite = Vec::new();
    for &r in &bridge.sigma.r0 {
        let k = bridge
            .spread
            .lines
            .binary_search(&r)
            .expect("base regulus line is in the spread");
        let bb_pt = bb.infinite_points[k];
        infinite.push(bb_pt);
        bb_points.push(bb_pt);
    }
    bb_points.sort_unstable();
    bb_points.dedup();
    if bb_points.len() != q * q * q + 1 {
        return Err(Error::verification(
            "buekenhout",
            format!("{} unital points", bb_points.len()),
        ));
    }
    let bu_of_bb: HashMap<u32, u32> = bb_points
        .iter()
        .enumerate()
        .map(|(i, &p)| (p, i as u32))
        .collect();
    let inset: HashSet<u32> = bb_points.iter().copied().collect();
    let mut blocks = Vec::new();
    for line in &bb.inc.blocks {
        let hits: Vec<u32> = line
            .iter()
            .copied()
            .filter(|p| inset.contains(p))
            .map(|p| bu_of_bb[&p])
            .collect();
        match hits.len() {
            h if h == q + 1 => blocks.push(hits),
            0 | 1 => {}
            h => {
                return Err(Error::verification(
                    "buekenhout",
                    format!("a plane line meets the unital point set in {h} points"),
                ))
            }
        }
    }
    let inc = Incidence::new(bb_points.len(), blocks)?;
    if !inc.is_t_design(2, q + 1, 1) {
        return Err(Error::verification(
            "buekenhout",
            "inherited structure is not a unital design",
        ));
    }
    let infinite = infinite
        .into_iter()
        .map(|p| bu_of_bb[&p])
        .collect();
    Ok(BuekenhoutUnital {
        inc,
        bb_points,
        bu_of_bb,
        infinite,
    })
}

#[derive(Debug, Serialize)]
pub struct PhiPrime {
    /// unital point -> bu point.
    pub point_map: Vec<u32>,
    pub lines_mapped: usize,
}

/// The explicit design isomorphism: base-line points go to the matched
/// infinite points, all other points ride the quadrangle isomorphism into
/// the affine part, and every unital line lands on a block.
pub fn build_phi_prime(
    u: &Unital,
    bridge: &Bridge,
    bb: &BBPlane,
    bu: &BuekenhoutUnital,
) -> Result<PhiPrime> {
    let l = bridge.line;
    let mut map = vec![u32::MAX; u.v()];
    for (i, &xi) in bridge.aij.points.iter().enumerate() {
        map[xi as usize] = bu.infinite[i];
    }
    for p in 0..u.v() as u32 {
        if u.on_line(p, l) {
            continue;
        }
        let pg = bridge.quadric.pg_of_idx
            [bridge.phi.point_map[bridge.gq.point_of_unital[&p] as usize] as usize];
        let bb_pt = *bb.bb_of_pg.get(&pg).ok_or_else(|| {
            Error::verification("phi-prime", format!("image of point {p} is not affine"))
        })?;
        map[p as usize] = bu.bu_of_bb[&bb_pt];
    }
    // bijectivity
    let mut seen = vec![false; bu.inc.v];
    for &m in &map {
        if m == u32::MAX || seen[m as usize] {
            return Err(Error::verification("phi-prime", "point map is not a bijection"));
        }
        seen[m as usize] = true;
    }
    // every unital line maps onto a block
    let mut image_blocks = HashSet::new();
    for j in 0..u.b() as u32 {
        let img: Vec<u32> = u.line(j).iter().map(|&p| map[p as usize]).collect();
        let Some(bid) = bu.inc.block_id_of(&img) else {
            return Err(Error::verification(
                "phi-prime",
                format!("image of line {j} is not a block"),
            ));
        };
        image_blocks.insert(bid);
    }
    if image_blocks.len() != bu.inc.b() {
        return Err(Error::verification(
            "phi-prime",
            "line images do not exhaust the blocks",
        ));
    }
    // the base line lands on the infinity section
    let infinity_trace: Vec<u32> = {
        let mut v: Vec<u32> = bu.infinite.clone();
        v.sort_unstable();
        v
    };
    let base_img: Vec<u32> = {
        let mut v: Vec<u32> = u.line(l).iter().map(|&p| map[p as usize]).collect();
        v.sort_unstable();
        v
    };
    if base_img != infinity_trace {
        return Err(Error::verification(
            "phi-prime",
            "base line does not map onto the infinity section",
        ));
    }
    Ok(PhiPrime {
        point_map: map,
        lines_mapped: u.b(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::unital::hermitian_unital;
    use std::sync::OnceLock;

    fn with_chain<R>(f: impl FnOnce(&Unital, &Bridge, &BBPlane, &BuekenhoutUnital) -> R) -> R {
        static CELL: OnceLock<(Unital, Bridge, BBPlane, BuekenhoutUnital)> = OnceLock::new();
        let (u, b, bb, bu) = CELL.get_or_init(|| {
            let u = hermitian_unital(2).unwrap();
            let b = Bridge::build(&u, 0).unwrap();
            let bb = bruck_bose_plane(&b).unwrap();
            let bu = buekenhout_unital(&b, &bb).unwrap();
            (u, b, bb, bu)
        });
        f(u, b, bb, bu)
    }

    #[test]
    fn plane_of_order_16() {
        with_chain(|_, _, bb, _| {
            assert_eq!(bb.inc.v, 273);
            assert_eq!(bb.inc.b(), 273);
            for blk in &bb.inc.blocks {
                assert_eq!(blk.len(), 17);
            }
            // the infinity line carries exactly the spread points
            let inf = bb.inc.block(bb.line_at_infinity);
            let mut expected = bb.infinite_points.clone();
            expected.sort_unstable();
            assert_eq!(inf, expected.as_slice());
        });
    }

    #[test]
    fn identified_with_pg2_16() {
        with_chain(|_, b, bb, _| {
            let iso = identify_with_pg2(b, bb).unwrap();
            let field = std::sync::Arc::new(Field::new(4).unwrap());
            let pg2 = Space::new(2, field);
            assert!(crate::design::verify_isomorphism(
                &bb.inc,
                &pg2.incidence(),
                &iso.point_map
            ));
            // the infinity line maps onto a line of PG(2, 16)
            let img: Vec<u32> = bb
                .inc
                .block(bb.line_at_infinity)
                .iter()
                .map(|&p| iso.point_map[p as usize])
                .collect();
            let mut img = img;
            img.sort_unstable();
            assert!(pg2.incidence().block_id_of(&img).is_some());
        });
    }

    #[test]
    fn buekenhout_counts() {
        with_chain(|_, _, _, bu| {
            assert_eq!(bu.inc.v, 65);
            assert_eq!(bu.inc.b(), 208);
            assert_eq!(bu.infinite.len(), 5);
        });
    }

    #[test]
    fn phi_prime_is_design_isomorphism() {
        with_chain(|u, b, bb, bu| {
            let pp = build_phi_prime(u, b, bb, bu).unwrap();
            assert_eq!(pp.lines_mapped, 208);
            assert!(crate::design::verify_isomorphism(
                &u.inc,
                &bu.inc,
                &pp.point_map
            ));
        });
    }

    #[test]
    fn buekenhout_is_classical() {
        with_chain(|_, _, _, bu| {
            let h = hermitian_unital(2).unwrap();
            let iso = find_isomorphism(&bu.inc, &h.inc).unwrap();
            assert!(crate::design::verify_isomorphism(
                &bu.inc,
                &h.inc,
                &iso.point_map
            ));
        });
    }
}
