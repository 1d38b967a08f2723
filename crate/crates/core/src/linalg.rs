//! Dense row-reduction helpers over a `Field`. Matrices are tiny (at most a
//! few dozen rows), so everything is plain Gaussian elimination.

use crate::galois::{El, Field};

/// Reduce `m` to reduced row-echelon form in place; returns (rank, pivot columns).
pub fn rref(f: &Field, m: &mut [Vec<El>]) -> (usize, Vec<usize>) {
    let rows = m.len();
    if rows == 0 {
        return (0, vec![]);
    }
    let cols = m[0].len();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..rows).find(|&i| m[i][c] != 0) else {
            continue;
        };
        m.swap(r, p);
        let inv = f.inv(m[r][c]);
        for x in m[r].iter_mut() {
            *x = f.mul(*x, inv);
        }
        for i in 0..rows {
            if i != r && m[i][c] != 0 {
                let factor = m[i][c];
                for j in 0..cols {
                    let t = f.mul(factor, m[r][j]);
                    m[i][j] = f.add(m[i][j], t);
                }
            }
        }
        pivots.push(c);
        r += 1;
        if r == rows {
            break;
        }
    }
    (r, pivots)
}

pub fn rank(f: &Field, rows: &[Vec<El>]) -> usize {
    let mut m: Vec<Vec<El>> = rows.to_vec();
    rref(f, &mut m).0
}

/// Basis of the right nullspace of the matrix (solutions of A x = 0).
pub fn nullspace(f: &Field, rows: &[Vec<El>], cols: usize) -> Vec<Vec<El>> {
    let mut m: Vec<Vec<El>> = rows.to_vec();
    let (rank, pivots) = rref(f, &mut m);
    let free: Vec<usize> = (0..cols).filter(|c| !pivots.contains(c)).collect();
    let mut basis = Vec::with_capacity(cols - rank);
    for &fc in &free {
        let mut v = vec![0 as El; cols];
        v[fc] = 1;
        for (ri, &pc) in pivots.iter().enumerate() {
            v[pc] = m[ri][fc]; // char 2: -x = x
        }
        basis.push(v);
    }
    basis
}

/// One solution of A x = b, if consistent.
pub fn solve(f: &Field, rows: &[Vec<El>], b: &[El]) -> Option<Vec<El>> {
    let cols = rows.first().map_or(0, |r| r.len());
    let mut m: Vec<Vec<El>> = rows
        .iter()
        .zip(b)
        .map(|(r, &bi)| {
            let mut row = r.clone();
            row.push(bi);
            row
        })
        .collect();
    let (_, pivots) = rref(f, &mut m);
    if pivots.contains(&cols) {
        return None; // pivot in the augmented column
    }
    let mut x = vec![0 as El; cols];
    for (ri, &pc) in pivots.iter().enumerate() {
        x[pc] = m[ri][cols];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::galois::Field;

    #[test]
    fn solve_and_nullspace_agree() {
        let f = Field::new(2).unwrap();
        let a = vec![vec![1, 2], vec![0, 3]];
        let det = f.add(f.mul(1, 3), f.mul(2, 0));
        assert_ne!(det, 0);
        let x = solve(&f, &a, &[1, 0]).unwrap();
        let y0 = f.add(f.mul(a[0][0], x[0]), f.mul(a[0][1], x[1]));
        let y1 = f.add(f.mul(a[1][0], x[0]), f.mul(a[1][1], x[1]));
        assert_eq!((y0, y1), (1, 0));
        assert!(nullspace(&f, &a, 2).is_empty());
    }

    #[test]
    fn nullspace_vectors_are_in_kernel() {
        let f = Field::new(3).unwrap();
        let a = vec![vec![1, 2, 3, 0], vec![0, 1, 1, 1]];
        let ns = nullspace(&f, &a, 4);
        assert_eq!(ns.len(), 2);
        for v in &ns {
            for row in &a {
                let s = row
                    .iter()
                    .zip(v)
                    .fold(0, |acc, (&r, &x)| f.add(acc, f.mul(r, x)));
                assert_eq!(s, 0);
            }
        }
    }
}
