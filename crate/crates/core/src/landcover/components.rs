//! 8-connected component labeling (two-pass, union-find).

/// Result of labeling a boolean raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labeling {
    /// Component id per pixel; 0 for background.
    pub labels: Vec<u32>,
    /// Number of components; ids run `1..=count`.
    pub count: u32,
    /// Pixel count per id, index 0 unused.
    pub sizes: Vec<usize>,
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        let p = parent[x as usize];
        parent[x as usize] = parent[p as usize];
        x = p;
    }
    x
}

fn union(parent: &mut [u32], a: u32, b: u32) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        // keep the smaller provisional id as root so final ids follow scan order
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi as usize] = lo;
    }
}

/// Labels 8-connected `true` regions. Final ids are assigned in raster scan
/// order of each component's first pixel.
pub fn label_components(mask: &[bool], width: usize, height: usize) -> Labeling {
    assert_eq!(mask.len(), width * height);
    let mut prov = vec![0u32; mask.len()];
    let mut parent: Vec<u32> = vec![0];

    for row in 0..height {
        for col in 0..width {
            let i = row * width + col;
            if !mask[i] {
                continue;
            }
            let mut neigh = [0u32; 4];
            let mut n = 0;
            if col > 0 && prov[i - 1] != 0 {
                neigh[n] = prov[i - 1];
                n += 1;
            }
            if row > 0 {
                let up = i - width;
                if col > 0 && prov[up - 1] != 0 {
                    neigh[n] = prov[up - 1];
                    n += 1;
                }
                if prov[up] != 0 {
                    neigh[n] = prov[up];
                    n += 1;
                }
                if col + 1 < width && prov[up + 1] != 0 {
                    neigh[n] = prov[up + 1];
                    n += 1;
                }
            }
            if n == 0 {
                let id = parent.len() as u32;
                parent.push(id);
                prov[i] = id;
            } else {
                let first = neigh[0];
                for &other in &neigh[1..n] {
                    union(&mut parent, first, other);
                }
                prov[i] = first;
            }
        }
    }

    let mut final_id = vec![0u32; parent.len()];
    let mut count = 0u32;
    for id in 1..parent.len() as u32 {
        let root = find(&mut parent, id);
        if root == id {
            count += 1;
            final_id[id as usize] = count;
        } else {
            final_id[id as usize] = final_id[root as usize];
        }
    }
    let mut sizes = vec![0usize; count as usize + 1];
    let labels: Vec<u32> = prov
        .iter()
        .map(|&p| {
            let l = final_id[p as usize];
            if l != 0 {
                sizes[l as usize] += 1;
            }
            l
        })
        .collect();
    Labeling {
        labels,
        count,
        sizes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::{BTreeMap, VecDeque};

    /// Flood-fill oracle with BFS.
    fn flood(mask: &[bool], w: usize, h: usize) -> Vec<u32> {
        let mut out = vec![0u32; w * h];
        let mut next = 0;
        for start in 0..w * h {
            if !mask[start] || out[start] != 0 {
                continue;
            }
            next += 1;
            out[start] = next;
            let mut q = VecDeque::from([start]);
            while let Some(i) = q.pop_front() {
                let (c, r) = ((i % w) as i64, (i / w) as i64);
                for dr in -1..=1 {
                    for dc in -1..=1 {
                        let (nc, nr) = (c + dc, r + dr);
                        if nc < 0 || nr < 0 || nc >= w as i64 || nr >= h as i64 {
                            continue;
                        }
                        let j = nr as usize * w + nc as usize;
                        if mask[j] && out[j] == 0 {
                            out[j] = next;
                            q.push_back(j);
                        }
                    }
                }
            }
        }
        out
    }

    fn same_partition(a: &[u32], b: &[u32]) -> bool {
        let mut fwd = BTreeMap::new();
        let mut back = BTreeMap::new();
        a.iter().zip(b).all(|(&x, &y)| {
            (x == 0) == (y == 0)
                && *fwd.entry(x).or_insert(y) == y
                && *back.entry(y).or_insert(x) == x
        })
    }

    #[test]
    fn u_shape_merges() {
        #[rustfmt::skip]
        let m = [
            true, false, true,
            true, false, true,
            true, true,  true,
        ];
        let l = label_components(&m, 3, 3);
        assert_eq!(l.count, 1);
        assert_eq!(l.sizes[1], 7);
    }

    #[test]
    fn scan_order_ids() {
        let mut m = [false; 18];
        for i in [1, 3, 4, 12] {
            m[i] = true;
        }
        let l = label_components(&m, 6, 3);
        let mut expect = vec![0; 18];
        expect[1] = 1;
        expect[3] = 2;
        expect[4] = 2;
        expect[12] = 3;
        assert_eq!(l.labels, expect);
    }

    proptest! {
        #[test]
        fn matches_flood_fill(w in 1usize..24, h in 1usize..24, seed in any::<u64>(), p in 0.2f64..0.7) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let m: Vec<bool> = (0..w * h).map(|_| rng.random_bool(p)).collect();
            let l = label_components(&m, w, h);
            let oracle = flood(&m, w, h);
            // scan-order ids make the labels identical, not only the partition
            prop_assert_eq!(&l.labels, &oracle);
            prop_assert_eq!(l.sizes.iter().sum::<usize>(), m.iter().filter(|&&b| b).count());
        }

        #[test]
        fn partition_invariant_under_transpose(w in 1usize..20, h in 1usize..20, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let m: Vec<bool> = (0..w * h).map(|_| rng.random_bool(0.45)).collect();
            let t: Vec<bool> = (0..w * h).map(|i| m[(i % h) * w + i / h]).collect();
            let a = label_components(&m, w, h).labels;
            let bt = label_components(&t, h, w).labels;
            let b: Vec<u32> = (0..w * h).map(|i| bt[(i % w) * h + i / w]).collect();
            prop_assert!(same_partition(&a, &b));
        }
    }
}
