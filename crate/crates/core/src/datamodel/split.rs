//! Stratified subject split with largest-remainder apportionment, which is
//! the unique rounding that reproduces the published per-class train counts.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seeds;
use super::{DatasetSplit, Diagnosis};

/// Split subjects into train/test keeping per-diagnosis proportions.
///
/// Per class, the train count starts at floor(n_c * fraction); the remaining
/// budget up to round(N * fraction) goes to the classes with the largest
/// fractional remainders (ties broken by class order, then larger class).
pub fn stratified_split(
    subjects: &[(String, Diagnosis)],
    train_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    {
        let mut ids: Vec<&str> = subjects.iter().map(|(s, _)| s.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != subjects.len() {
            return Err(Error::Data("duplicate subject ids in split input".into()));
        }
    }

    let mut by_class: Vec<(Diagnosis, Vec<String>)> = Diagnosis::ALL
        .iter()
        .map(|&d| (d, Vec::new()))
        .collect();
    for (id, dx) in subjects {
        by_class
            .iter_mut()
            .find(|(d, _)| d == dx)
            .unwrap()
            .1
            .push(id.clone());
    }
    by_class.retain(|(_, v)| !v.is_empty());

    let total = subjects.len();
    let target_train = (total as f64 * train_fraction).round() as usize;

    // floor + largest remainder
    let mut counts: Vec<usize> = Vec::new();
    let mut remainders: Vec<(usize, f64, usize)> = Vec::new(); // (class idx, remainder, class size)
    for (i, (_, members)) in by_class.iter().enumerate() {
        let exact = members.len() as f64 * train_fraction;
        let base = exact.floor() as usize;
        counts.push(base.min(members.len()));
        remainders.push((i, exact - base as f64, members.len()));
    }
    let assigned: usize = counts.iter().sum();
    let mut leftover = target_train.saturating_sub(assigned);
    remainders.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap()
            .then(b.2.cmp(&a.2))
            .then(a.0.cmp(&b.0))
    });
    for (i, _, size) in remainders {
        if leftover == 0 {
            break;
        }
        if counts[i] < size {
            counts[i] += 1;
            leftover -= 1;
        }
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    for ((dx, members), n_train) in by_class.iter().zip(counts.iter()) {
        let mut members = members.clone();
        members.sort_unstable();
        let mut rng = seeds::rng_from(seed, &["split", dx.as_str()]);
        members.shuffle(&mut rng);
        for (i, id) in members.into_iter().enumerate() {
            if i < *n_train {
                train.push(id);
            } else {
                test.push(id);
            }
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(DatasetSplit {
        train_subjects: train,
        test_subjects: test,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn table_subjects() -> Vec<(String, Diagnosis)> {
        // published class totals: CN 72, EMCI 45, LMCI 31, SMC 62, AD 12
        let spec = [
            (Diagnosis::CN, 72),
            (Diagnosis::EMCI, 45),
            (Diagnosis::LMCI, 31),
            (Diagnosis::SMC, 62),
            (Diagnosis::AD, 12),
        ];
        let mut out = Vec::new();
        for (dx, n) in spec {
            for i in 0..n {
                out.push((format!("{dx}-{i:03}"), dx));
            }
        }
        out
    }

    fn class_counts(ids: &[String], all: &[(String, Diagnosis)]) -> Vec<(Diagnosis, usize)> {
        Diagnosis::ALL
            .iter()
            .map(|&d| {
                let n = ids
                    .iter()
                    .filter(|id| all.iter().any(|(s, dx)| s == *id && *dx == d))
                    .count();
                (d, n)
            })
            .collect()
    }

    #[test]
    fn reproduces_published_split_counts() {
        let subjects = table_subjects();
        let split = stratified_split(&subjects, 178.0 / 222.0, 1).unwrap();
        assert_eq!(split.train_subjects.len(), 178);
        assert_eq!(split.test_subjects.len(), 44);
        let train = class_counts(&split.train_subjects, &subjects);
        let test = class_counts(&split.test_subjects, &subjects);
        assert_eq!(
            train,
            vec![
                (Diagnosis::CN, 58),
                (Diagnosis::EMCI, 36),
                (Diagnosis::LMCI, 25),
                (Diagnosis::SMC, 50),
                (Diagnosis::AD, 9)
            ]
        );
        assert_eq!(
            test,
            vec![
                (Diagnosis::CN, 14),
                (Diagnosis::EMCI, 9),
                (Diagnosis::LMCI, 6),
                (Diagnosis::SMC, 12),
                (Diagnosis::AD, 3)
            ]
        );
    }

    #[test]
    fn deterministic_given_seed() {
        let subjects = table_subjects();
        let a = stratified_split(&subjects, 0.8, 42).unwrap();
        let b = stratified_split(&subjects, 0.8, 42).unwrap();
        assert_eq!(a.train_subjects, b.train_subjects);
        assert_eq!(a.test_subjects, b.test_subjects);
        let c = stratified_split(&subjects, 0.8, 43).unwrap();
        assert_ne!(a.train_subjects, c.train_subjects);
    }

    #[test]
    fn single_class_rounding() {
        let subjects: Vec<_> = (0..10).map(|i| (format!("s{i}"), Diagnosis::CN)).collect();
        let split = stratified_split(&subjects, 0.8, 0).unwrap();
        assert_eq!(split.train_subjects.len(), 8);
        assert_eq!(split.test_subjects.len(), 2);
    }

    #[test]
    fn union_and_disjointness() {
        let subjects = table_subjects();
        let split = stratified_split(&subjects, 0.7, 9).unwrap();
        let train: HashSet<_> = split.train_subjects.iter().collect();
        let test: HashSet<_> = split.test_subjects.iter().collect();
        assert!(train.is_disjoint(&test));
        assert_eq!(train.len() + test.len(), subjects.len());
    }

    #[test]
    fn rejects_bad_fraction_and_duplicates() {
        let subjects = vec![("a".to_string(), Diagnosis::CN)];
        assert!(matches!(stratified_split(&subjects, 0.0, 0), Err(Error::Config(_))));
        assert!(matches!(stratified_split(&subjects, 1.0, 0), Err(Error::Config(_))));
        let dup = vec![
            ("a".to_string(), Diagnosis::CN),
            ("a".to_string(), Diagnosis::AD),
        ];
        assert!(matches!(stratified_split(&dup, 0.5, 0), Err(Error::Data(_))));
    }
}
