use itertools::Itertools;

use super::{Candidate, DiscoveryConfig, DiscoveryResult, InvarianceProvider, Method, Session, EXHAUSTIVE_SCOPE_LIMIT};
use crate::error::{Error, Result};

fn resolve_scope(provider: &dyn InvarianceProvider, scope: Option<&[usize]>, limit: usize) -> Result<Vec<usize>> {
    let d = provider.covariate_count();
    let mut s: Vec<usize> = match scope {
        Some(s) => s.to_vec(),
        None => (0..d).collect(),
    };
    s.sort_unstable();
    s.dedup();
    if let Some(&bad) = s.iter().find(|&&v| v >= d) {
        return Err(Error::UnknownNode(bad));
    }
    if s.len() > limit {
        return Err(Error::ScopeTooLarge { size: s.len(), limit });
    }
    Ok(s)
}

/// Subsets of `scope` with exactly `k` elements, lexicographic.
fn subsets_of_size(scope: &[usize], k: usize) -> impl Iterator<Item = Vec<usize>> + '_ {
    scope.iter().copied().combinations(k)
}

fn mask_of(scope: &[usize], subset: &[usize]) -> u64 {
    subset
        .iter()
        .map(|v| 1u64 << scope.binary_search(v).expect("subset inside scope"))
        .fold(0, |a, b| a | b)
}

fn candidate(subset: Vec<usize>, e: &super::Evaluation) -> Candidate {
    Candidate {
        subset,
        mmse_hat: e.mmse,
        p_value: e.p_value,
    }
}

/// Intersection of every invariant subset of the scope.
pub fn icp(
    provider: &dyn InvarianceProvider,
    scope: Option<&[usize]>,
    config: &DiscoveryConfig,
) -> Result<DiscoveryResult> {
    config.validate()?;
    let scope = resolve_scope(provider, scope, EXHAUSTIVE_SCOPE_LIMIT)?;
    let session = Session::new(provider);
    let mut candidates = Vec::new();
    for k in 0..=scope.len() {
        for s in subsets_of_size(&scope, k) {
            let e = session.eval(&s)?;
            if e.invariant_at(config.alpha) {
                candidates.push(candidate(s, &e));
            }
        }
    }
    let parents = match candidates.split_first() {
        None => Vec::new(),
        Some((first, rest)) => first
            .subset
            .iter()
            .copied()
            .filter(|v| rest.iter().all(|c| c.subset.contains(v)))
            .collect(),
    };
    Ok(session.finish(Method::Icp, parents, candidates, scope, config))
}

/// Union of minimally invariant subsets with at most `max_set_size` elements.
/// Supersets of an invariant set cannot be minimal and are not tested.
pub fn ias(
    provider: &dyn InvarianceProvider,
    scope: Option<&[usize]>,
    config: &DiscoveryConfig,
) -> Result<DiscoveryResult> {
    config.validate()?;
    let scope = resolve_scope(provider, scope, EXHAUSTIVE_SCOPE_LIMIT)?;
    let level = config.ias_alpha0.unwrap_or(config.alpha);
    let session = Session::new(provider);
    let mut found: Vec<u64> = Vec::new();
    let mut candidates = Vec::new();
    for k in 0..=config.max_set_size.min(scope.len()) {
        for s in subsets_of_size(&scope, k) {
            let m = mask_of(&scope, &s);
            if found.iter().any(|&f| f & !m == 0) {
                continue;
            }
            let e = session.eval(&s)?;
            if e.invariant_at(level) {
                found.push(m);
                candidates.push(candidate(s, &e));
            }
        }
    }
    let parents: Vec<usize> = candidates
        .iter()
        .flat_map(|c| c.subset.iter().copied())
        .sorted_unstable()
        .dedup()
        .collect();
    Ok(session.finish(Method::Ias, parents, candidates, scope, config))
}

/// Invariant subsets by increasing cardinality, skipping supersets of accepted
/// ones; returns the accepted subset of least MMSE.
pub fn mmse_icp(
    provider: &dyn InvarianceProvider,
    scope: Option<&[usize]>,
    config: &DiscoveryConfig,
) -> Result<DiscoveryResult> {
    config.validate()?;
    let scope = resolve_scope(provider, scope, EXHAUSTIVE_SCOPE_LIMIT)?;
    let session = Session::new(provider);
    let mut accepted: Vec<u64> = Vec::new();
    let mut candidates: Vec<Candidate> = Vec::new();
    for k in 0..=scope.len() {
        for s in subsets_of_size(&scope, k) {
            let m = mask_of(&scope, &s);
            if accepted.iter().any(|&a| a & !m == 0) {
                continue;
            }
            let e = session.eval(&s)?;
            if e.invariant_at(config.alpha) {
                accepted.push(m);
                candidates.push(candidate(s, &e));
            }
        }
        // Every subset extends the empty set.
        if accepted.first() == Some(&0) {
            break;
        }
    }
    let best = candidates
        .iter()
        .fold(None::<&Candidate>, |best, c| match best {
            Some(b) if b.mmse_hat <= c.mmse_hat => Some(b),
            _ => Some(c),
        })
        .map(|c| c.subset.clone())
        .unwrap_or_default();
    Ok(session.finish(Method::MmseIcp, best, candidates, scope, config))
}

/// Returns the empty set when it is invariant. Otherwise a two-stage greedy
/// search: shrink the scope to an invariant set by removing up
/// to `max_depth` covariates at a time, then drop single covariates while
/// invariance holds, preferring the lowest MMSE.
///
/// Stage 1 moves to the first invariant candidate it meets (removals of one
/// covariate before two, lexicographic within a size); if none is invariant it
/// moves to the candidate of least dependency.
pub fn fast_icp(
    provider: &dyn InvarianceProvider,
    scope: Option<&[usize]>,
    config: &DiscoveryConfig,
) -> Result<DiscoveryResult> {
    config.validate()?;
    let scope = resolve_scope(provider, scope, config.fast_scope_limit)?;
    let session = Session::new(provider);
    let mut candidates: Vec<Candidate> = Vec::new();
    let empty = session.eval(&[])?;
    if empty.invariant_at(config.alpha) {
        candidates.push(candidate(Vec::new(), &empty));
        return Ok(session.finish(Method::FastIcp, Vec::new(), candidates, scope, config));
    }
    let mut s = scope.clone();
    let mut e = session.eval(&s)?;

    while !e.invariant_at(config.alpha) {
        let mut best: Option<(Vec<usize>, super::Evaluation)> = None;
        'scan: for r in 1..=config.max_depth.min(s.len()) {
            for removed in subsets_of_size(&s, r) {
                let next: Vec<usize> = s.iter().copied().filter(|v| !removed.contains(v)).collect();
                let ne = session.eval(&next)?;
                if ne.invariant_at(config.alpha) {
                    best = Some((next, ne));
                    break 'scan;
                }
                if best.as_ref().is_none_or(|(_, b)| ne.dependency < b.dependency) {
                    best = Some((next, ne));
                }
            }
        }
        match best {
            Some((next, ne)) => {
                s = next;
                e = ne;
            }
            None => return Ok(session.finish(Method::FastIcp, Vec::new(), candidates, scope, config)),
        }
    }
    candidates.push(candidate(s.clone(), &e));

    loop {
        let mut best: Option<(Vec<usize>, super::Evaluation)> = None;
        for &z in &s {
            let next: Vec<usize> = s.iter().copied().filter(|&v| v != z).collect();
            let ne = session.eval(&next)?;
            if ne.invariant_at(config.alpha) {
                candidates.push(candidate(next.clone(), &ne));
                if best.as_ref().is_none_or(|(_, b)| ne.mmse < b.mmse) {
                    best = Some((next, ne));
                }
            }
        }
        match best {
            Some((next, _)) => s = next,
            None => break,
        }
    }
    Ok(session.finish(Method::FastIcp, s, candidates, scope, config))
}

pub fn run(
    method: Method,
    provider: &dyn InvarianceProvider,
    scope: Option<&[usize]>,
    config: &DiscoveryConfig,
) -> Result<DiscoveryResult> {
    match method {
        Method::Icp => icp(provider, scope, config),
        Method::Ias => ias(provider, scope, config),
        Method::MmseIcp => mmse_icp(provider, scope, config),
        Method::FastIcp => fast_icp(provider, scope, config),
    }
}
