//! Planted-signal corpora: every description carries one marker word per
//! base metric that spells out that metric's class, hidden among neutral
//! filler words.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cvss::{CvssVector, Metric};
use crate::nvd::VulnRecord;

const FILLER: &[&str] = &[
    "the", "a", "component", "version", "update", "module", "handling", "request", "parameter",
    "server", "client", "function", "may", "allow", "issue", "affected", "product", "input",
    "file", "data", "service", "in", "of", "via", "when", "before", "after", "library", "plugin",
    "interface", "configuration", "setting", "user", "process", "memory", "page", "field",
    "value", "handler", "routine", "feature", "release", "build", "package", "driver",
    "firmware", "application", "system", "network", "device",
];

/// The marker word for `class` of `metric`, e.g. `zqavpx` for AV:P.
pub fn marker(metric: Metric, class: usize) -> String {
    format!(
        "zq{}{}x",
        metric.key().to_lowercase(),
        metric.class_codes()[class].to_ascii_lowercase()
    )
}

/// `n` records with uniformly drawn vectors. Descriptions hold the eight
/// markers plus 6 to 12 filler words, in shuffled order.
pub fn planted_corpus(n: usize, seed: u64) -> Vec<VulnRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all: Vec<CvssVector> = CvssVector::all().collect();
    (0..n)
        .map(|i| {
            let vector = *all.choose(&mut rng).expect("non-empty");
            let mut words: Vec<String> = Metric::ALL.iter().map(|&m| marker(m, m.class_of(&vector))).collect();
            let fill = rng.random_range(6..=12);
            words.extend((0..fill).map(|_| FILLER.choose(&mut rng).expect("non-empty").to_string()));
            words.shuffle(&mut rng);
            VulnRecord {
                cve_id: format!("CVE-2099-{:05}", i + 1),
                description: words.join(" "),
                vector,
                score: vector.score(),
                year: 2099,
                version: "3.1".into(),
                flags: Vec::new(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn markers_are_unique_and_plain() {
        let mut seen = HashSet::new();
        for m in Metric::ALL {
            for c in 0..m.num_classes() {
                let w = marker(m, c);
                assert!(w.chars().all(|ch| ch.is_ascii_lowercase()));
                assert!(seen.insert(w));
            }
        }
        assert_eq!(seen.len(), 4 + 2 + 3 + 2 + 2 + 3 + 3 + 3);
        assert_eq!(marker(Metric::AttackVector, 3), "zqavpx");
    }

    #[test]
    fn descriptions_reveal_labels() {
        let rs = planted_corpus(50, 3);
        assert_eq!(rs, planted_corpus(50, 3));
        for r in &rs {
            for m in Metric::ALL {
                let hits: Vec<usize> = (0..m.num_classes())
                    .filter(|&c| r.description.split(' ').any(|w| w == marker(m, c)))
                    .collect();
                assert_eq!(hits, vec![m.class_of(&r.vector)]);
            }
        }
    }
}
