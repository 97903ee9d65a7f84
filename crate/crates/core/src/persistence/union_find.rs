/// Disjoint sets with union by size and path halving.
#[derive(Clone, Debug)]
pub(crate) struct DisjointSet {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl DisjointSet {
    pub(crate) fn new(n: usize) -> Self {
        assert!(n < u32::MAX as usize, "too many elements for u32 indices");
        Self {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    #[inline]
    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] as usize != x {
            let grand = self.parent[self.parent[x] as usize];
            self.parent[x] = grand;
            x = grand as usize;
        }
        x
    }

    /// Merges two roots and returns the surviving root.
    #[inline]
    pub(crate) fn link(&mut self, a: usize, b: usize) -> usize {
        debug_assert_eq!(self.parent[a] as usize, a);
        debug_assert_eq!(self.parent[b] as usize, b);
        let (big, small) = if self.size[a] >= self.size[b] { (a, b) } else { (b, a) };
        self.parent[small] = big as u32;
        self.size[big] += self.size[small];
        big
    }
}
