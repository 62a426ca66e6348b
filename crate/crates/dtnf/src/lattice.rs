//! Dense storage over the (m, n) state lattice [0, M-1] x [N0, N].

use crate::model::NetworkParams;

#[derive(Debug, Clone, PartialEq)]
pub struct Lattice<T> {
    m_count: u32,
    n0: u32,
    n_count: u32,
    data: Vec<T>,
}

impl<T: Clone> Lattice<T> {
    pub fn filled(params: &NetworkParams, value: T) -> Self {
        let m_count = params.destinations;
        let n0 = params.initial_infected;
        let n_count = params.relays - n0 + 1;
        Self {
            m_count,
            n0,
            n_count,
            data: vec![value; (m_count * n_count) as usize],
        }
    }
}

impl<T> Lattice<T> {
    fn idx(&self, m: u32, n: u32) -> usize {
        debug_assert!(m < self.m_count, "m={m} out of range");
        debug_assert!(n >= self.n0 && n < self.n0 + self.n_count, "n={n} out of range");
        (m * self.n_count + (n - self.n0)) as usize
    }

    pub fn get(&self, m: u32, n: u32) -> &T {
        &self.data[self.idx(m, n)]
    }

    pub fn set(&mut self, m: u32, n: u32, value: T) {
        let i = self.idx(m, n);
        self.data[i] = value;
    }

    pub fn m_range(&self) -> std::ops::Range<u32> {
        0..self.m_count
    }

    pub fn n_range(&self) -> std::ops::RangeInclusive<u32> {
        self.n0..=(self.n0 + self.n_count - 1)
    }

    /// Iterates (m, n, value) over the whole lattice.
    pub fn iter(&self) -> impl Iterator<Item = (u32, u32, &T)> + '_ {
        self.data.iter().enumerate().map(move |(i, v)| {
            let m = i as u32 / self.n_count;
            let n = self.n0 + i as u32 % self.n_count;
            (m, n, v)
        })
    }
}
