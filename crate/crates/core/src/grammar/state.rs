//! Factored state space: points, product-form sets and their enumeration.

use std::fmt;

use serde::{Deserialize, Serialize};

/// One value index per declared feature, in declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StatePoint(pub Vec<usize>);

impl StatePoint {
    pub fn values(&self) -> &[usize] {
        &self.0
    }

    pub fn value(&self, feature: usize) -> usize {
        self.0[feature]
    }
}

/// Mixed-radix layout of the joint state space. The first declared feature is
/// the most significant digit, so increasing index order is lexicographic
/// order over the feature domains.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSpace {
    radices: Vec<usize>,
    strides: Vec<usize>,
    size: usize,
}

impl StateSpace {
    /// Returns `None` if the joint size overflows `usize`.
    pub fn new(radices: Vec<usize>) -> Option<Self> {
        let mut strides = vec![0; radices.len()];
        let mut size: usize = 1;
        for (i, &r) in radices.iter().enumerate().rev() {
            strides[i] = size;
            size = size.checked_mul(r)?;
        }
        Some(StateSpace {
            radices,
            strides,
            size,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn num_features(&self) -> usize {
        self.radices.len()
    }

    pub fn radix(&self, feature: usize) -> usize {
        self.radices[feature]
    }

    pub fn index(&self, point: &StatePoint) -> usize {
        point.0.iter().zip(&self.strides).map(|(v, s)| v * s).sum()
    }

    pub fn point(&self, mut index: usize) -> StatePoint {
        let mut values = Vec::with_capacity(self.radices.len());
        for &s in &self.strides {
            values.push(index / s);
            index %= s;
        }
        StatePoint(values)
    }

    /// Value of one feature for a state index without decoding the whole point.
    pub fn digit(&self, index: usize, feature: usize) -> usize {
        (index / self.strides[feature]) % self.radices[feature]
    }

    pub fn contains(&self, point: &StatePoint) -> bool {
        point.0.len() == self.radices.len() && point.0.iter().zip(&self.radices).all(|(v, r)| v < r)
    }
}

/// A product-form set of states: one nonempty allowed-value subset per feature.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StateSet {
    allowed: Vec<Vec<bool>>,
}

impl StateSet {
    pub fn full(space: &StateSpace) -> Self {
        StateSet {
            allowed: space.radices.iter().map(|&r| vec![true; r]).collect(),
        }
    }

    pub fn singleton(space: &StateSpace, point: &StatePoint) -> Self {
        let mut set = StateSet {
            allowed: space.radices.iter().map(|&r| vec![false; r]).collect(),
        };
        for (f, &v) in point.0.iter().enumerate() {
            set.allowed[f][v] = true;
        }
        set
    }

    /// Builds a set from explicit per-feature masks. Returns `None` if any mask
    /// is empty or has the wrong width.
    pub fn from_masks(space: &StateSpace, allowed: Vec<Vec<bool>>) -> Option<Self> {
        if allowed.len() != space.num_features() {
            return None;
        }
        for (f, mask) in allowed.iter().enumerate() {
            if mask.len() != space.radix(f) || !mask.iter().any(|&b| b) {
                return None;
            }
        }
        Some(StateSet { allowed })
    }

    /// Restricts one feature to the given values. An empty restriction is ignored
    /// and reported as `false`.
    pub fn restrict(&mut self, feature: usize, values: &[usize]) -> bool {
        let mask = &mut self.allowed[feature];
        let mut next = vec![false; mask.len()];
        for &v in values {
            if v < next.len() && mask[v] {
                next[v] = true;
            }
        }
        if next.iter().any(|&b| b) {
            *mask = next;
            true
        } else {
            false
        }
    }

    pub fn allows(&self, feature: usize, value: usize) -> bool {
        self.allowed[feature][value]
    }

    pub fn mask(&self, feature: usize) -> &[bool] {
        &self.allowed[feature]
    }

    pub fn is_unconstrained(&self, feature: usize) -> bool {
        self.allowed[feature].iter().all(|&b| b)
    }

    pub fn contains(&self, point: &StatePoint) -> bool {
        point.0.len() == self.allowed.len()
            && point
                .0
                .iter()
                .zip(&self.allowed)
                .all(|(&v, mask)| mask.get(v).copied().unwrap_or(false))
    }

    pub fn contains_index(&self, space: &StateSpace, index: usize) -> bool {
        (0..self.allowed.len()).all(|f| self.allowed[f][space.digit(index, f)])
    }

    /// Number of member states, saturating at `u128::MAX`.
    pub fn len(&self) -> u128 {
        self.allowed.iter().fold(1u128, |acc, mask| {
            acc.saturating_mul(mask.iter().filter(|&&b| b).count() as u128)
        })
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Member states in lexicographic order over the feature domains.
    pub fn iter(&self) -> StateSetIter<'_> {
        let choices: Vec<Vec<usize>> = self
            .allowed
            .iter()
            .map(|m| {
                m.iter()
                    .enumerate()
                    .filter(|(_, &b)| b)
                    .map(|(v, _)| v)
                    .collect()
            })
            .collect();
        let done = choices.iter().any(|c| c.is_empty());
        StateSetIter {
            cursor: vec![0; choices.len()],
            choices,
            done,
            _set: std::marker::PhantomData,
        }
    }

    pub fn intersect(&self, other: &StateSet) -> Option<StateSet> {
        let allowed: Vec<Vec<bool>> = self
            .allowed
            .iter()
            .zip(&other.allowed)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| *x && *y).collect())
            .collect();
        if allowed.iter().all(|m: &Vec<bool>| m.iter().any(|&b| b)) {
            Some(StateSet { allowed })
        } else {
            None
        }
    }
}

pub struct StateSetIter<'a> {
    choices: Vec<Vec<usize>>,
    cursor: Vec<usize>,
    done: bool,
    _set: std::marker::PhantomData<&'a StateSet>,
}

impl Iterator for StateSetIter<'_> {
    type Item = StatePoint;

    fn next(&mut self) -> Option<StatePoint> {
        if self.done {
            return None;
        }
        let point = StatePoint(
            self.cursor
                .iter()
                .zip(&self.choices)
                .map(|(&i, c)| c[i])
                .collect(),
        );
        // odometer, last feature fastest
        let mut f = self.cursor.len();
        loop {
            if f == 0 {
                self.done = true;
                break;
            }
            f -= 1;
            self.cursor[f] += 1;
            if self.cursor[f] < self.choices[f].len() {
                break;
            }
            self.cursor[f] = 0;
        }
        Some(point)
    }
}

impl fmt::Display for StatePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip_is_lexicographic() {
        let space = StateSpace::new(vec![2, 3]).unwrap();
        assert_eq!(space.size(), 6);
        let points: Vec<_> = (0..6).map(|i| space.point(i)).collect();
        assert_eq!(points[0], StatePoint(vec![0, 0]));
        assert_eq!(points[1], StatePoint(vec![0, 1]));
        assert_eq!(points[3], StatePoint(vec![1, 0]));
        for (i, p) in points.iter().enumerate() {
            assert_eq!(space.index(p), i);
            assert_eq!(space.digit(i, 1), p.value(1));
        }
    }

    #[test]
    fn set_iteration_matches_membership() {
        let space = StateSpace::new(vec![2, 2]).unwrap();
        let full = StateSet::full(&space);
        let all: Vec<_> = full.iter().collect();
        assert_eq!(all.len(), 4);
        assert_eq!(all[0], StatePoint(vec![0, 0]));
        assert_eq!(all[3], StatePoint(vec![1, 1]));

        let mut fixed = StateSet::full(&space);
        assert!(fixed.restrict(0, &[1]));
        let members: Vec<_> = fixed.iter().collect();
        assert_eq!(
            members,
            vec![StatePoint(vec![1, 0]), StatePoint(vec![1, 1])]
        );
        for i in 0..4 {
            let p = space.point(i);
            assert_eq!(fixed.contains(&p), fixed.contains_index(&space, i));
            assert_eq!(fixed.contains(&p), members.contains(&p));
        }
        assert!(!fixed.restrict(1, &[]));
        assert_eq!(fixed.len(), 2);
    }

    #[test]
    fn overflow_is_detected() {
        assert!(StateSpace::new(vec![usize::MAX, 2]).is_none());
    }
}
