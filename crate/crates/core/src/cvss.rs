//! CVSS v3.1 base metrics: vector grammar, base score equations and
//! qualitative severity ratings.
//!
//! Scores are carried as [`Score`], an integer count of tenths, so that
//! equality between a stored and a recomputed score is exact.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CvssError {
    #[error("missing metric {0}")]
    MissingMetric(&'static str),
    #[error("metric {0} given more than once")]
    DuplicateMetric(String),
    #[error("unknown metric key {0:?}")]
    UnknownKey(String),
    #[error("unknown value {1:?} for metric {0}")]
    UnknownValue(String, String),
    #[error("malformed vector fragment {0:?}")]
    MalformedPair(String),
    #[error("score {0} outside 0.0..=10.0 or not a one-decimal value")]
    OutOfRange(f64),
}

/// A value of one base metric: single-letter wire code plus long name.
pub trait MetricValue: Copy + Eq + fmt::Debug + Sized + 'static {
    /// Key used in the vector string, e.g. `"AV"`.
    const KEY: &'static str;
    /// Every value, in class-index order.
    const ALL: &'static [Self];

    fn code(self) -> char;
    fn long_name(self) -> &'static str;

    fn from_code(code: &str) -> Option<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|v| code.len() == 1 && code.starts_with(v.code()))
    }

    fn index(self) -> usize {
        Self::ALL.iter().position(|v| *v == self).unwrap()
    }

    fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

macro_rules! metric_enum {
    ($(#[$doc:meta])* $name:ident, $key:literal, [$($variant:ident = ($code:literal, $long:literal)),+ $(,)?]) => {
        $(#[$doc])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
        pub enum $name {
            $($variant),+
        }

        impl MetricValue for $name {
            const KEY: &'static str = $key;
            const ALL: &'static [Self] = &[$($name::$variant),+];

            fn code(self) -> char {
                match self {
                    $($name::$variant => $code),+
                }
            }

            fn long_name(self) -> &'static str {
                match self {
                    $($name::$variant => $long),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.code())
            }
        }
    };
}

metric_enum!(
    /// Attack Vector.
    AttackVector, "AV",
    [Network = ('N', "Network"), Adjacent = ('A', "Adjacent"), Local = ('L', "Local"), Physical = ('P', "Physical")]
);
metric_enum!(
    /// Attack Complexity.
    AttackComplexity, "AC",
    [Low = ('L', "Low"), High = ('H', "High")]
);
metric_enum!(
    /// Privileges Required.
    PrivilegesRequired, "PR",
    [None = ('N', "None"), Low = ('L', "Low"), High = ('H', "High")]
);
metric_enum!(
    /// User Interaction.
    UserInteraction, "UI",
    [None = ('N', "None"), Required = ('R', "Required")]
);
metric_enum!(
    /// Scope.
    Scope, "S",
    [Unchanged = ('U', "Unchanged"), Changed = ('C', "Changed")]
);
metric_enum!(
    /// Confidentiality, Integrity or Availability impact.
    Impact, "C",
    [High = ('H', "High"), Low = ('L', "Low"), None = ('N', "None")]
);

/// The eight base metrics, in canonical vector order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "AV")]
    AttackVector,
    #[serde(rename = "AC")]
    AttackComplexity,
    #[serde(rename = "PR")]
    PrivilegesRequired,
    #[serde(rename = "UI")]
    UserInteraction,
    #[serde(rename = "S")]
    Scope,
    #[serde(rename = "C")]
    Confidentiality,
    #[serde(rename = "I")]
    Integrity,
    #[serde(rename = "A")]
    Availability,
}

impl Metric {
    pub const ALL: [Metric; 8] = [
        Metric::AttackVector,
        Metric::AttackComplexity,
        Metric::PrivilegesRequired,
        Metric::UserInteraction,
        Metric::Scope,
        Metric::Confidentiality,
        Metric::Integrity,
        Metric::Availability,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Metric::AttackVector => "AV",
            Metric::AttackComplexity => "AC",
            Metric::PrivilegesRequired => "PR",
            Metric::UserInteraction => "UI",
            Metric::Scope => "S",
            Metric::Confidentiality => "C",
            Metric::Integrity => "I",
            Metric::Availability => "A",
        }
    }

    pub fn long_name(self) -> &'static str {
        match self {
            Metric::AttackVector => "Attack Vector",
            Metric::AttackComplexity => "Attack Complexity",
            Metric::PrivilegesRequired => "Privileges Required",
            Metric::UserInteraction => "User Interaction",
            Metric::Scope => "Scope",
            Metric::Confidentiality => "Confidentiality Impact",
            Metric::Integrity => "Integrity Impact",
            Metric::Availability => "Availability Impact",
        }
    }

    pub fn from_key(key: &str) -> Option<Metric> {
        Metric::ALL
            .into_iter()
            .find(|m| m.key().eq_ignore_ascii_case(key))
    }

    pub fn num_classes(self) -> usize {
        self.class_codes().len()
    }

    /// Wire codes of every class, indexed by class id.
    pub fn class_codes(self) -> Vec<char> {
        fn codes<M: MetricValue>() -> Vec<char> {
            M::ALL.iter().map(|v| v.code()).collect()
        }
        match self {
            Metric::AttackVector => codes::<AttackVector>(),
            Metric::AttackComplexity => codes::<AttackComplexity>(),
            Metric::PrivilegesRequired => codes::<PrivilegesRequired>(),
            Metric::UserInteraction => codes::<UserInteraction>(),
            Metric::Scope => codes::<Scope>(),
            _ => codes::<Impact>(),
        }
    }

    pub fn class_names(self) -> Vec<&'static str> {
        fn names<M: MetricValue>() -> Vec<&'static str> {
            M::ALL.iter().map(|v| v.long_name()).collect()
        }
        match self {
            Metric::AttackVector => names::<AttackVector>(),
            Metric::AttackComplexity => names::<AttackComplexity>(),
            Metric::PrivilegesRequired => names::<PrivilegesRequired>(),
            Metric::UserInteraction => names::<UserInteraction>(),
            Metric::Scope => names::<Scope>(),
            _ => names::<Impact>(),
        }
    }

    /// Class index of this metric's value in `v`.
    pub fn class_of(self, v: &CvssVector) -> usize {
        match self {
            Metric::AttackVector => v.av.index(),
            Metric::AttackComplexity => v.ac.index(),
            Metric::PrivilegesRequired => v.pr.index(),
            Metric::UserInteraction => v.ui.index(),
            Metric::Scope => v.s.index(),
            Metric::Confidentiality => v.c.index(),
            Metric::Integrity => v.i.index(),
            Metric::Availability => v.a.index(),
        }
    }

    /// Overwrites this metric's value in `v`; returns `false` if `class` is out of range.
    pub fn set_class(self, v: &mut CvssVector, class: usize) -> bool {
        fn set<M: MetricValue>(slot: &mut M, class: usize) -> bool {
            match M::from_index(class) {
                Some(x) => {
                    *slot = x;
                    true
                }
                None => false,
            }
        }
        match self {
            Metric::AttackVector => set(&mut v.av, class),
            Metric::AttackComplexity => set(&mut v.ac, class),
            Metric::PrivilegesRequired => set(&mut v.pr, class),
            Metric::UserInteraction => set(&mut v.ui, class),
            Metric::Scope => set(&mut v.s, class),
            Metric::Confidentiality => set(&mut v.c, class),
            Metric::Integrity => set(&mut v.i, class),
            Metric::Availability => set(&mut v.a, class),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Metric {
    type Err = CvssError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::from_key(s).ok_or_else(|| CvssError::UnknownKey(s.to_string()))
    }
}

/// A complete CVSS v3.x base vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CvssVector {
    pub av: AttackVector,
    pub ac: AttackComplexity,
    pub pr: PrivilegesRequired,
    pub ui: UserInteraction,
    pub s: Scope,
    pub c: Impact,
    pub i: Impact,
    pub a: Impact,
}

/// Version label carried by a `CVSS:3.x/` prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CvssVersion {
    #[serde(rename = "3.0")]
    V3_0,
    #[serde(rename = "3.1")]
    V3_1,
}

impl fmt::Display for CvssVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CvssVersion::V3_0 => f.write_str("3.0"),
            CvssVersion::V3_1 => f.write_str("3.1"),
        }
    }
}

/// A parsed vector together with the version its prefix claimed, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParsedVector {
    pub version: Option<CvssVersion>,
    pub vector: CvssVector,
}

/// Parses a base vector, accepting an optional `CVSS:3.0/` or `CVSS:3.1/`
/// prefix and metrics in any order.
pub fn parse_vector(text: &str) -> Result<CvssVector, CvssError> {
    parse_vector_versioned(text).map(|p| p.vector)
}

pub fn parse_vector_versioned(text: &str) -> Result<ParsedVector, CvssError> {
    let text = text.trim();
    let (version, body) = match text.strip_prefix("CVSS:") {
        Some(rest) => {
            let (ver, body) = rest
                .split_once('/')
                .ok_or_else(|| CvssError::MalformedPair(text.to_string()))?;
            let version = match ver {
                "3.1" => CvssVersion::V3_1,
                "3.0" => CvssVersion::V3_0,
                other => return Err(CvssError::UnknownValue("CVSS".into(), other.into())),
            };
            (Some(version), body)
        }
        None => (None, text),
    };

    let mut slots: [Option<&str>; 8] = [None; 8];
    for fragment in body.split('/') {
        let (key, value) = fragment
            .split_once(':')
            .filter(|(k, v)| !k.is_empty() && !v.is_empty())
            .ok_or_else(|| CvssError::MalformedPair(fragment.to_string()))?;
        let pos = Metric::ALL
            .iter()
            .position(|m| m.key() == key)
            .ok_or_else(|| CvssError::UnknownKey(key.to_string()))?;
        if slots[pos].replace(value).is_some() {
            return Err(CvssError::DuplicateMetric(key.to_string()));
        }
    }

    fn field<M: MetricValue>(slot: Option<&str>, key: &'static str) -> Result<M, CvssError> {
        let value = slot.ok_or(CvssError::MissingMetric(key))?;
        M::from_code(value).ok_or_else(|| CvssError::UnknownValue(key.into(), value.into()))
    }

    let vector = CvssVector {
        av: field(slots[0], "AV")?,
        ac: field(slots[1], "AC")?,
        pr: field(slots[2], "PR")?,
        ui: field(slots[3], "UI")?,
        s: field(slots[4], "S")?,
        c: field(slots[5], "C")?,
        i: field(slots[6], "I")?,
        a: field(slots[7], "A")?,
    };
    Ok(ParsedVector { version, vector })
}

/// Canonical vector string (AV, AC, PR, UI, S, C, I, A order).
pub fn format_vector(v: &CvssVector, with_prefix: bool) -> String {
    let body = format!(
        "AV:{}/AC:{}/PR:{}/UI:{}/S:{}/C:{}/I:{}/A:{}",
        v.av, v.ac, v.pr, v.ui, v.s, v.c, v.i, v.a
    );
    if with_prefix {
        format!("CVSS:3.1/{body}")
    } else {
        body
    }
}

impl fmt::Display for CvssVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_vector(self, false))
    }
}

impl FromStr for CvssVector {
    type Err = CvssError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_vector(s)
    }
}

impl Serialize for CvssVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_vector(self, true))
    }
}

impl<'de> Deserialize<'de> for CvssVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        parse_vector(&s).map_err(serde::de::Error::custom)
    }
}

impl CvssVector {
    /// Every one of the 2,592 base vectors, AV varying slowest.
    pub fn all() -> impl Iterator<Item = CvssVector> {
        AttackVector::ALL.iter().flat_map(|&av| {
            AttackComplexity::ALL.iter().flat_map(move |&ac| {
                PrivilegesRequired::ALL.iter().flat_map(move |&pr| {
                    UserInteraction::ALL.iter().flat_map(move |&ui| {
                        Scope::ALL.iter().flat_map(move |&s| {
                            Impact::ALL.iter().flat_map(move |&c| {
                                Impact::ALL.iter().flat_map(move |&i| {
                                    Impact::ALL.iter().map(move |&a| CvssVector {
                                        av,
                                        ac,
                                        pr,
                                        ui,
                                        s,
                                        c,
                                        i,
                                        a,
                                    })
                                })
                            })
                        })
                    })
                })
            })
        })
    }

    pub fn score(&self) -> Score {
        base_score(self).score
    }
}

/// A CVSS score in tenths (0..=100).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Score(u8);

impl Score {
    pub const ZERO: Score = Score(0);
    pub const MAX: Score = Score(100);

    pub fn from_tenths(tenths: u8) -> Result<Score, CvssError> {
        if tenths <= 100 {
            Ok(Score(tenths))
        } else {
            Err(CvssError::OutOfRange(f64::from(tenths) / 10.0))
        }
    }

    /// Accepts only values in `0.0..=10.0` that carry a single fractional digit.
    pub fn from_f64(x: f64) -> Result<Score, CvssError> {
        if !x.is_finite() || !(0.0..=10.0).contains(&x) {
            return Err(CvssError::OutOfRange(x));
        }
        let tenths = (x * 10.0).round();
        if (tenths / 10.0 - x).abs() > 1e-9 {
            return Err(CvssError::OutOfRange(x));
        }
        Ok(Score(tenths as u8))
    }

    pub fn tenths(self) -> u8 {
        self.0
    }

    pub fn value(self) -> f64 {
        f64::from(self.0) / 10.0
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.0 / 10, self.0 % 10)
    }
}

impl Serialize for Score {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.value())
    }
}

impl<'de> Deserialize<'de> for Score {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let x = f64::deserialize(d)?;
        Score::from_f64(x).map_err(serde::de::Error::custom)
    }
}

/// Qualitative severity rating bands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Rating {
    None,
    Low,
    Medium,
    High,
    Critical,
}

impl Rating {
    pub fn from_score(score: Score) -> Rating {
        match score.tenths() {
            0 => Rating::None,
            1..=39 => Rating::Low,
            40..=69 => Rating::Medium,
            70..=89 => Rating::High,
            _ => Rating::Critical,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Rating::None => "None",
            Rating::Low => "Low",
            Rating::Medium => "Medium",
            Rating::High => "High",
            Rating::Critical => "Critical",
        }
    }
}

impl fmt::Display for Rating {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn severity_rating(score: f64) -> Result<Rating, CvssError> {
    Score::from_f64(score).map(Rating::from_score)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Severity {
    pub score: Score,
    pub rating: Rating,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.score, self.rating)
    }
}

// Normative v3.1 weights.
fn av_weight(v: AttackVector) -> f64 {
    match v {
        AttackVector::Network => 0.85,
        AttackVector::Adjacent => 0.62,
        AttackVector::Local => 0.55,
        AttackVector::Physical => 0.2,
    }
}

fn ac_weight(v: AttackComplexity) -> f64 {
    match v {
        AttackComplexity::Low => 0.77,
        AttackComplexity::High => 0.44,
    }
}

fn pr_weight(v: PrivilegesRequired, s: Scope) -> f64 {
    match (v, s) {
        (PrivilegesRequired::None, _) => 0.85,
        (PrivilegesRequired::Low, Scope::Unchanged) => 0.62,
        (PrivilegesRequired::Low, Scope::Changed) => 0.68,
        (PrivilegesRequired::High, Scope::Unchanged) => 0.27,
        (PrivilegesRequired::High, Scope::Changed) => 0.5,
    }
}

fn ui_weight(v: UserInteraction) -> f64 {
    match v {
        UserInteraction::None => 0.85,
        UserInteraction::Required => 0.62,
    }
}

fn cia_weight(v: Impact) -> f64 {
    match v {
        Impact::High => 0.56,
        Impact::Low => 0.22,
        Impact::None => 0.0,
    }
}

/// Smallest one-decimal value >= `x`, in tenths, using the integer-scaled
/// guard against binary floating point artifacts.
pub fn round_up_tenths(x: f64) -> u32 {
    let scaled = (x * 100_000.0).round() as i64;
    let tenths = if scaled % 10_000 == 0 {
        scaled / 10_000
    } else {
        scaled.div_euclid(10_000) + 1
    };
    tenths.max(0) as u32
}

/// Round-up as a float, for callers that want the numeric value.
pub fn round_up(x: f64) -> f64 {
    f64::from(round_up_tenths(x)) / 10.0
}

/// Base score and rating of a vector.
pub fn base_score(v: &CvssVector) -> Severity {
    let iss = 1.0 - (1.0 - cia_weight(v.c)) * (1.0 - cia_weight(v.i)) * (1.0 - cia_weight(v.a));
    let impact = match v.s {
        Scope::Unchanged => 6.42 * iss,
        Scope::Changed => 7.52 * (iss - 0.029) - 3.25 * (iss - 0.02).powi(15),
    };
    let exploitability =
        8.22 * av_weight(v.av) * ac_weight(v.ac) * pr_weight(v.pr, v.s) * ui_weight(v.ui);

    let tenths = if impact <= 0.0 {
        0
    } else {
        match v.s {
            Scope::Unchanged => round_up_tenths((impact + exploitability).min(10.0)),
            Scope::Changed => round_up_tenths((1.08 * (impact + exploitability)).min(10.0)),
        }
    };
    let score = Score(tenths.min(100) as u8);
    Severity {
        score,
        rating: Rating::from_score(score),
    }
}
