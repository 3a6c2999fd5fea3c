use crate::error::{Error, Result};

/// Inner iterations after which the iterate is projected.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProjectionSchedule {
    total: usize,
    gap: usize,
    indices: Vec<usize>,
    hits: Vec<bool>,
}

/// `{E, 2E, ..., E⌊T/E⌋} ∪ {T}`.
pub fn make_schedule(total: usize, gap: usize) -> Result<ProjectionSchedule> {
    ProjectionSchedule::new(total, gap)
}

impl ProjectionSchedule {
    pub fn new(total: usize, gap: usize) -> Result<Self> {
        check_bounds(total, gap)?;
        let mut indices: Vec<usize> = (1..=total / gap).map(|k| k * gap).collect();
        if indices.last() != Some(&total) {
            indices.push(total);
        }
        Ok(Self::from_indices(total, gap, indices))
    }

    /// Accepts any strictly increasing set in `1..=total` whose gaps, counted
    /// from 0, never exceed `gap`.
    pub fn custom(total: usize, gap: usize, mut indices: Vec<usize>) -> Result<Self> {
        check_bounds(total, gap)?;
        indices.sort_unstable();
        indices.dedup();
        if let Some(&bad) = indices.iter().find(|&&i| i == 0 || i > total) {
            return Err(Error::InvalidArgument(format!("schedule index {bad} outside 1..={total}")));
        }
        let mut prev = 0;
        for &i in &indices {
            if i - prev > gap {
                return Err(Error::GapViolation { gap: i - prev, allowed: gap });
            }
            prev = i;
        }
        if indices.is_empty() {
            return Err(Error::GapViolation { gap: total, allowed: gap });
        }
        Ok(Self::from_indices(total, gap, indices))
    }

    fn from_indices(total: usize, gap: usize, indices: Vec<usize>) -> Self {
        let mut hits = vec![false; total + 1];
        for &i in &indices {
            hits[i] = true;
        }
        Self { total, gap, indices, hits }
    }

    pub fn contains(&self, t: usize) -> bool {
        self.hits.get(t).copied().unwrap_or(false)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn gap(&self) -> usize {
        self.gap
    }

    pub fn total(&self) -> usize {
        self.total
    }
}

fn check_bounds(total: usize, gap: usize) -> Result<()> {
    if gap == 0 || gap > total {
        return Err(Error::InvalidArgument(format!("need 1 <= gap <= total, got gap {gap}, total {total}")));
    }
    Ok(())
}
