//! Ability domains, question banks and grade schemes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed ability interval `[p_lo, p_hi]` with `0 < p_lo < p_hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDomain")]
pub struct AbilityDomain {
    p_lo: f64,
    p_hi: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDomain {
    p_lo: f64,
    p_hi: f64,
}

impl TryFrom<RawDomain> for AbilityDomain {
    type Error = Error;

    fn try_from(raw: RawDomain) -> Result<Self> {
        AbilityDomain::new(raw.p_lo, raw.p_hi)
    }
}

impl AbilityDomain {
    pub fn new(p_lo: f64, p_hi: f64) -> Result<Self> {
        if !(p_lo.is_finite() && p_hi.is_finite()) {
            return Err(Error::InvalidDomain(format!("bounds must be finite, got [{p_lo}, {p_hi}]")));
        }
        if p_lo <= 0.0 {
            return Err(Error::InvalidDomain(format!("p_lo must be positive, got {p_lo}")));
        }
        if p_lo >= p_hi {
            return Err(Error::InvalidDomain(format!("need p_lo < p_hi, got [{p_lo}, {p_hi}]")));
        }
        Ok(Self { p_lo, p_hi })
    }

    pub fn lo(&self) -> f64 {
        self.p_lo
    }

    pub fn hi(&self) -> f64 {
        self.p_hi
    }

    pub fn contains(&self, p: f64) -> bool {
        p >= self.p_lo && p <= self.p_hi
    }

    /// `count` equispaced abilities strictly inside the domain.
    pub fn interior_grid(&self, count: usize) -> Vec<f64> {
        let step = (self.p_hi - self.p_lo) / (count + 1) as f64;
        (1..=count).map(|i| self.p_lo + step * i as f64).collect()
    }
}

/// The set of admissible question difficulties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBank", rename_all = "snake_case")]
pub enum QuestionBank {
    /// Strictly increasing positive levels.
    Finite { levels: Vec<f64> },
    /// Compact interval `[lo, hi]` with `lo > 0`.
    Interval { lo: f64, hi: f64 },
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum RawBank {
    Finite { levels: Vec<f64> },
    Interval { lo: f64, hi: f64 },
}

impl TryFrom<RawBank> for QuestionBank {
    type Error = Error;

    fn try_from(raw: RawBank) -> Result<Self> {
        match raw {
            RawBank::Finite { levels } => QuestionBank::finite(levels),
            RawBank::Interval { lo, hi } => QuestionBank::interval(lo, hi),
        }
    }
}

impl QuestionBank {
    pub fn finite(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidBank("finite bank needs at least one level".into()));
        }
        if levels.iter().any(|x| !x.is_finite() || *x <= 0.0) {
            return Err(Error::InvalidBank("levels must be finite and positive".into()));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidBank("levels must be strictly increasing".into()));
        }
        Ok(QuestionBank::Finite { levels })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo <= 0.0 || lo > hi {
            return Err(Error::InvalidBank(format!("interval must satisfy 0 < lo <= hi, got [{lo}, {hi}]")));
        }
        Ok(QuestionBank::Interval { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        match self {
            QuestionBank::Finite { levels } => levels[0],
            QuestionBank::Interval { lo, .. } => *lo,
        }
    }

    pub fn hi(&self) -> f64 {
        match self {
            QuestionBank::Finite { levels } => levels[levels.len() - 1],
            QuestionBank::Interval { hi, .. } => *hi,
        }
    }

    pub fn levels(&self) -> Option<&[f64]> {
        match self {
            QuestionBank::Finite { levels } => Some(levels),
            QuestionBank::Interval { .. } => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, QuestionBank::Finite { .. })
    }

    /// The admissible level closest to `x` (ties resolve to the easier level).
    pub fn snap(&self, x: f64) -> f64 {
        match self {
            QuestionBank::Interval { lo, hi } => x.clamp(*lo, *hi),
            QuestionBank::Finite { levels } => {
                let idx = levels.partition_point(|&l| l < x);
                if idx == 0 {
                    levels[0]
                } else if idx == levels.len() {
                    levels[idx - 1]
                } else {
                    let (below, above) = (levels[idx - 1], levels[idx]);
                    if x - below <= above - x {
                        below
                    } else {
                        above
                    }
                }
            }
        }
    }
}

/// One of the `J + 1` half-open grade brackets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub index: usize,
    /// `u_i`, or the domain's `p_lo` for the lowest bracket.
    pub lower: f64,
    /// `u_{i+1}`, or the domain's `p_hi` for the highest bracket.
    pub upper: f64,
}

impl Bracket {
    pub fn contains(&self, p: f64) -> bool {
        p >= self.lower && p < self.upper
    }
}

/// Ordered grade thresholds `u_1 < ... < u_J` inside an ability domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrades")]
pub struct GradeScheme {
    thresholds: Vec<f64>,
    domain: AbilityDomain,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrades {
    thresholds: Vec<f64>,
    domain: AbilityDomain,
}

impl TryFrom<RawGrades> for GradeScheme {
    type Error = Error;

    fn try_from(raw: RawGrades) -> Result<Self> {
        GradeScheme::new(raw.thresholds, raw.domain)
    }
}

impl GradeScheme {
    pub fn new(thresholds: Vec<f64>, domain: AbilityDomain) -> Result<Self> {
        if thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidGrades("thresholds must be strictly increasing".into()));
        }
        if let Some(&u) = thresholds.iter().find(|&&u| !(u > domain.lo() && u < domain.hi())) {
            return Err(Error::InvalidGrades(format!(
                "threshold {u} is not strictly inside the ability domain [{}, {}]",
                domain.lo(),
                domain.hi()
            )));
        }
        Ok(Self { thresholds, domain })
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn domain(&self) -> &AbilityDomain {
        &self.domain
    }

    pub fn bracket_count(&self) -> usize {
        self.thresholds.len() + 1
    }

    pub fn bracket(&self, index: usize) -> Bracket {
        assert!(index < self.bracket_count(), "bracket index {index} out of range");
        let lower = if index == 0 { self.domain.lo() } else { self.thresholds[index - 1] };
        let upper = self.thresholds.get(index).copied().unwrap_or_else(|| self.domain.hi());
        Bracket { index, lower, upper }
    }

    /// Bracket `[u_i, u_{i+1})` holding `p`; `p_hi` itself belongs to the top bracket.
    pub fn bracket_of(&self, p: f64) -> Bracket {
        let index = self.thresholds.partition_point(|&u| u <= p);
        self.bracket(index)
    }

    /// Grade threshold closest to `p`, or `None` for a single-bracket scheme.
    pub fn nearest_threshold(&self, p: f64) -> Option<f64> {
        self.thresholds.iter().copied().min_by(|a, b| (a - p).abs().total_cmp(&(b - p).abs()))
    }
}
