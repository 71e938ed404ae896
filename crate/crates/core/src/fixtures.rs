//! Bundled instances with exact rational data.

use crate::io::parse_instance;
use crate::model::ProblemInstance;

const SOURCES: &[(&str, &str)] = &[
    ("greedy3", include_str!("../fixtures/greedy3.json")),
    ("drf_compare", include_str!("../fixtures/drf_compare.json")),
    ("utilization", include_str!("../fixtures/utilization.json")),
    ("slope2", include_str!("../fixtures/slope2.json")),
    ("nonunique_n3", include_str!("../fixtures/nonunique_n3.json")),
    ("circle4", include_str!("../fixtures/circle4.json")),
    ("elim_example", include_str!("../fixtures/elim_example.json")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    SOURCES.iter().map(|(n, _)| *n)
}

pub fn source(name: &str) -> Option<&'static str> {
    SOURCES.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn by_name(name: &str) -> Option<ProblemInstance> {
    source(name).map(|s| parse_instance(s).expect("bundled fixtures parse"))
}

pub fn all() -> Vec<(&'static str, ProblemInstance)> {
    names().map(|n| (n, by_name(n).unwrap())).collect()
}

/// Three users, three resources; greedy one-user-at-a-time fails here.
pub fn greedy3() -> ProblemInstance {
    by_name("greedy3").unwrap()
}

/// Three equal users, two resources; bottleneck fairness vs DRF.
pub fn drf_compare() -> ProblemInstance {
    by_name("drf_compare").unwrap()
}

/// Two users, four resources; DRF achieves higher average utilization.
pub fn utilization() -> ProblemInstance {
    by_name("utilization").unwrap()
}

/// Two users sharing one resource at 2/3 each, entitlements 0.4/0.6.
pub fn slope2() -> ProblemInstance {
    by_name("slope2").unwrap()
}

/// Three users with a one-parameter family of fair allocations.
pub fn nonunique_n3() -> ProblemInstance {
    by_name("nonunique_n3").unwrap()
}

/// Four users on a ring of four resources; seven known fair allocations.
pub fn circle4() -> ProblemInstance {
    by_name("circle4").unwrap()
}

/// User 1 never asks for his entitlement and is eliminated up front.
pub fn elim_example() -> ProblemInstance {
    by_name("elim_example").unwrap()
}

/// The utilization example with `k` middle resources that only user 2 uses.
pub fn utilization_with_middles(k: usize) -> ProblemInstance {
    let mut r1 = vec![0.5];
    let mut r2 = vec![1.0];
    r1.extend(std::iter::repeat_n(0.0, k));
    r2.extend(std::iter::repeat_n(1.0, k));
    r1.push(1.0);
    r2.push(0.0);
    ProblemInstance::new(vec![0.5, 0.5], vec![r1, r2]).expect("rectangular by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_instance;

    #[test]
    fn every_fixture_is_valid() {
        for (name, inst) in all() {
            assert!(validate_instance(&inst, 1e-9).is_empty(), "{name}");
        }
    }

    #[test]
    fn middles_variant_matches_base_example() {
        assert_eq!(utilization_with_middles(2), utilization());
    }
}
