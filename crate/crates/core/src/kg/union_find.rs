use std::collections::BTreeMap;

/// Disjoint-set forest whose roots are always the smallest index of their set.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    pub fn new(len: usize) -> Self {
        Self {
            parent: (0..len as u32).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    /// Root of `x`, with path halving.
    pub fn find(&mut self, x: usize) -> usize {
        let mut x = x;
        while self.parent[x] as usize != x {
            let grand = self.parent[self.parent[x] as usize];
            self.parent[x] = grand;
            x = grand as usize;
        }
        x
    }

    /// Merges the sets of `a` and `b`. Returns false if they were already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra == rb {
            return false;
        }
        // The smaller root wins so that the root stays the minimum of its set.
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi] = lo as u32;
        true
    }

    pub fn freeze(mut self) -> EquivClasses {
        let rep = (0..self.parent.len())
            .map(|i| self.find(i) as u32)
            .collect();
        EquivClasses { rep }
    }
}

/// Frozen equivalence classes over `0..len` with the smallest member as representative.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EquivClasses {
    rep: Vec<u32>,
}

impl EquivClasses {
    pub fn identity(len: usize) -> Self {
        Self {
            rep: (0..len as u32).collect(),
        }
    }

    pub fn from_pairs(len: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut uf = UnionFind::new(len);
        for (a, b) in pairs {
            uf.union(a, b);
        }
        uf.freeze()
    }

    pub fn len(&self) -> usize {
        self.rep.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rep.is_empty()
    }

    #[inline]
    pub fn rep(&self, x: usize) -> usize {
        self.rep[x] as usize
    }

    pub fn same(&self, a: usize, b: usize) -> bool {
        self.rep[a] == self.rep[b]
    }

    /// True if `x` belongs to a class with more than one member.
    pub fn is_shared(&self, x: usize) -> bool {
        self.class_sizes()[self.rep(x)] > 1
    }

    fn class_sizes(&self) -> Vec<u32> {
        let mut sizes = vec![0u32; self.rep.len()];
        for &r in &self.rep {
            sizes[r as usize] += 1;
        }
        sizes
    }

    /// Members of every class, keyed by representative, members ascending.
    pub fn classes(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &r) in self.rep.iter().enumerate() {
            out.entry(r as usize).or_default().push(i);
        }
        out
    }

    /// Dense renumbering of representatives: returns the class index of every element
    /// (classes ordered by representative) and the number of classes.
    pub fn compress(&self) -> (Vec<u32>, usize) {
        let mut class_of_rep = vec![u32::MAX; self.rep.len()];
        let mut n = 0u32;
        let mut out = Vec::with_capacity(self.rep.len());
        for &r in &self.rep {
            let slot = &mut class_of_rep[r as usize];
            if *slot == u32::MAX {
                *slot = n;
                n += 1;
            }
            out.push(*slot);
        }
        (out, n as usize)
    }
}
