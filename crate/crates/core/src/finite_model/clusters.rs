//! Partition of `[n]` into clusters with merge, burn, and size-ordered lookup.

/// Fenwick tree over sizes `1..=n`.
#[derive(Clone, Debug)]
struct Fenwick {
    tree: Vec<i64>,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Fenwick { tree: vec![0; n + 1] }
    }

    fn add(&mut self, mut i: usize, delta: i64) {
        while i < self.tree.len() {
            self.tree[i] += delta;
            i += i & i.wrapping_neg();
        }
    }

    fn prefix(&self, mut i: usize) -> i64 {
        let mut s = 0;
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }

    /// Smallest `i` with `prefix(i) > target`, together with `prefix(i - 1)`.
    fn search(&self, target: i64) -> (usize, i64) {
        let n = self.tree.len() - 1;
        let mut pos = 0;
        let mut acc = 0;
        let mut step = if n == 0 { 0 } else { 1 << (usize::BITS - 1 - n.leading_zeros()) };
        while step > 0 {
            let next = pos + step;
            if next <= n && acc + self.tree[next] <= target {
                pos = next;
                acc += self.tree[next];
            }
            step >>= 1;
        }
        (pos + 1, acc)
    }
}

/// Clusters of an `n`-vertex graph. Only the vertex partition is stored.
///
/// Cluster ids are recycled through a free list; at most `n` exist at once.
#[derive(Clone, Debug)]
pub struct ClusterSet {
    cluster_of: Vec<u32>,
    members: Vec<Vec<u32>>,
    free: Vec<u32>,
    counts: Vec<u64>,
    by_size: Vec<Vec<u32>>,
    pos: Vec<u32>,
    vertex_mass: Fenwick,
    sum_sq: u64,
}

impl ClusterSet {
    /// Build from cluster sizes; vertices are labelled consecutively in the
    /// given order.
    pub fn from_sizes(sizes: &[usize]) -> Self {
        let n: usize = sizes.iter().sum();
        assert!(n >= 1 && n < u32::MAX as usize, "vertex count out of range");
        let mut set = ClusterSet {
            cluster_of: vec![0; n],
            members: vec![Vec::new(); n],
            free: Vec::new(),
            counts: vec![0; n + 1],
            by_size: vec![Vec::new(); n + 1],
            pos: vec![0; n],
            vertex_mass: Fenwick::new(n),
            sum_sq: 0,
        };
        let mut v = 0u32;
        let mut id = 0u32;
        for &s in sizes.iter().filter(|&&s| s > 0) {
            let members: Vec<u32> = (v..v + s as u32).collect();
            for &m in &members {
                set.cluster_of[m as usize] = id;
            }
            set.members[id as usize] = members;
            set.attach(id, s);
            set.sum_sq += (s * s) as u64;
            v += s as u32;
            id += 1;
        }
        set.free = (id..n as u32).rev().collect();
        set
    }

    pub fn singletons(n: usize) -> Self {
        Self::from_sizes(&vec![1; n])
    }

    pub fn n(&self) -> usize {
        self.cluster_of.len()
    }

    pub fn cluster_count(&self) -> usize {
        self.n() - self.free.len()
    }

    pub fn cluster_of(&self, v: u32) -> u32 {
        self.cluster_of[v as usize]
    }

    pub fn members(&self, id: u32) -> &[u32] {
        &self.members[id as usize]
    }

    pub fn cluster_size(&self, id: u32) -> usize {
        self.members[id as usize].len()
    }

    pub fn size_of_vertex(&self, v: u32) -> usize {
        self.cluster_size(self.cluster_of(v))
    }

    /// Number of clusters of each size, indexed by size (entry 0 unused).
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn sum_sq(&self) -> u64 {
        self.sum_sq
    }

    /// `Σ_clusters C(size, 2)`.
    pub fn within_pairs(&self) -> u64 {
        (self.sum_sq - self.n() as u64) / 2
    }

    pub fn max_size(&self) -> usize {
        (1..self.counts.len()).rev().find(|&s| self.counts[s] > 0).unwrap_or(0)
    }

    fn attach(&mut self, id: u32, size: usize) {
        let list = &mut self.by_size[size];
        self.pos[id as usize] = list.len() as u32;
        list.push(id);
        self.counts[size] += 1;
        self.vertex_mass.add(size, size as i64);
    }

    fn detach(&mut self, id: u32, size: usize) {
        let idx = self.pos[id as usize] as usize;
        let list = &mut self.by_size[size];
        list.swap_remove(idx);
        if idx < list.len() {
            self.pos[list[idx] as usize] = idx as u32;
        }
        self.counts[size] -= 1;
        self.vertex_mass.add(size, -(size as i64));
    }

    /// Join the clusters of `a` and `b`. Returns the new cluster id, or `None`
    /// when they already share a cluster.
    pub fn merge_vertices(&mut self, a: u32, b: u32) -> Option<u32> {
        let ca = self.cluster_of(a);
        let cb = self.cluster_of(b);
        if ca == cb {
            return None;
        }
        Some(self.merge_clusters(ca, cb))
    }

    fn merge_clusters(&mut self, a: u32, b: u32) -> u32 {
        let (big, small) =
            if self.members[a as usize].len() >= self.members[b as usize].len() { (a, b) } else { (b, a) };
        let sb = self.members[big as usize].len();
        let ss = self.members[small as usize].len();
        self.detach(big, sb);
        self.detach(small, ss);
        let mut moved = std::mem::take(&mut self.members[small as usize]);
        for &v in &moved {
            self.cluster_of[v as usize] = big;
        }
        self.members[big as usize].extend_from_slice(&moved);
        moved.clear();
        self.members[small as usize] = moved;
        self.free.push(small);
        self.attach(big, sb + ss);
        self.sum_sq += 2 * (sb * ss) as u64;
        big
    }

    /// Reset every member of cluster `id` to a singleton. Returns the size burned.
    pub fn burn(&mut self, id: u32) -> usize {
        let s = self.members[id as usize].len();
        if s <= 1 {
            return s;
        }
        self.detach(id, s);
        let rest: Vec<u32> = self.members[id as usize].drain(1..).collect();
        self.attach(id, 1);
        for v in rest {
            let nid = self.free.pop().expect("free cluster id");
            let list = &mut self.members[nid as usize];
            list.clear();
            list.push(v);
            self.cluster_of[v as usize] = nid;
            self.attach(nid, 1);
        }
        self.sum_sq -= (s * s - s) as u64;
        s
    }

    pub fn burn_vertex(&mut self, v: u32) -> usize {
        self.burn(self.cluster_of(v))
    }

    /// The vertex at position `j` (0-based) when vertices are listed in
    /// increasing order of cluster size, and that cluster's size.
    pub fn vertex_by_rank(&self, j: u64) -> (u32, usize) {
        debug_assert!((j as usize) < self.n());
        let (size, below) = self.vertex_mass.search(j as i64);
        let offset = j as usize - below as usize;
        let id = self.by_size[size][offset / size];
        (self.members[id as usize][offset % size], size)
    }

    /// Cumulative number of vertices in clusters of size at most `size`.
    pub fn vertices_up_to(&self, size: usize) -> u64 {
        self.vertex_mass.prefix(size.min(self.n())) as u64
    }

    /// Mass fractions `l · count_l / n` up to the largest cluster.
    pub fn mass_fractions(&self) -> Vec<f64> {
        let n = self.n() as f64;
        (1..=self.max_size()).map(|l| (l as u64 * self.counts[l]) as f64 / n).collect()
    }

    /// Full recount of all derived bookkeeping.
    pub fn check_consistency(&self) -> Result<(), String> {
        let n = self.n();
        let mut counts = vec![0u64; n + 1];
        let mut seen = 0usize;
        let mut sum_sq = 0u64;
        let mut live = 0usize;
        for (id, m) in self.members.iter().enumerate() {
            if m.is_empty() {
                continue;
            }
            live += 1;
            counts[m.len()] += 1;
            seen += m.len();
            sum_sq += (m.len() * m.len()) as u64;
            for &v in m {
                if self.cluster_of[v as usize] != id as u32 {
                    return Err(format!("vertex {v} not mapped to cluster {id}"));
                }
            }
            let p = self.pos[id] as usize;
            if self.by_size[m.len()].get(p) != Some(&(id as u32)) {
                return Err(format!("cluster {id} missing from its size list"));
            }
        }
        if seen != n {
            return Err(format!("members cover {seen} of {n} vertices"));
        }
        if live != self.cluster_count() {
            return Err(format!("{live} live clusters, free list implies {}", self.cluster_count()));
        }
        if counts != self.counts {
            return Err("histogram differs from recount".into());
        }
        if sum_sq != self.sum_sq {
            return Err(format!("sum of squares {} vs recount {sum_sq}", self.sum_sq));
        }
        for s in 1..=n {
            if self.by_size[s].len() as u64 != counts[s] {
                return Err(format!("size list {s} has wrong length"));
            }
        }
        let mut acc = 0i64;
        for s in 1..=n {
            acc += (s as u64 * counts[s]) as i64;
            if self.vertex_mass.prefix(s) != acc {
                return Err(format!("vertex mass prefix wrong at size {s}"));
            }
        }
        Ok(())
    }
}
