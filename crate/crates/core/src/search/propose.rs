use rand::Rng;

use crate::memory::{MemoryStore, RefinementRecord};
use crate::model::{Descriptor, SearchForest, SolutionNode, TypedEdit, FAMILY_KEY};

use super::Proposer;

/// Most recent refinements retrieved to ground a proposal.
pub const HISTORY_WINDOW: usize = 20;

/// Refinements whose parent belongs to `family`, most recent last, capped at
/// [`HISTORY_WINDOW`].
pub fn family_history(store: &MemoryStore, family: &str) -> Vec<RefinementRecord> {
    let matching: Vec<_> = store
        .refinements()
        .iter()
        .filter(|r| r.parent_descriptor.get(FAMILY_KEY).map(String::as_str) == Some(family))
        .collect();
    let start = matching.len().saturating_sub(HISTORY_WINDOW);
    matching[start..].iter().map(|r| (*r).clone()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    Empty,
    NoChange,
    Infeasible,
    Duplicate,
}

/// Checks a proposed edit against the parent and the forest; returns the
/// child descriptor when it passes.
pub fn check_edit(
    edit: &TypedEdit,
    parent: &SolutionNode,
    forest: &SearchForest,
) -> Result<Descriptor, Rejection> {
    if edit.delta.is_empty() {
        return Err(Rejection::Empty);
    }
    if edit.delta.contains_key(FAMILY_KEY) {
        return Err(Rejection::Infeasible);
    }
    if edit
        .delta
        .iter()
        .all(|(k, v)| parent.descriptor.get(k) == Some(v))
    {
        return Err(Rejection::NoChange);
    }
    let child = edit.apply(&parent.descriptor);
    if forest.contains_descriptor(&child) {
        return Err(Rejection::Duplicate);
    }
    Ok(child)
}

/// Asks the proposer for an edit of `parent`, up to `max_retries + 1` times.
/// `None` means every attempt was empty, a no-op, infeasible, or a duplicate.
pub fn propose_child<R: Rng + ?Sized>(
    parent: &SolutionNode,
    proposer: &dyn Proposer,
    store: &MemoryStore,
    forest: &SearchForest,
    max_retries: u32,
    rng: &mut R,
) -> Option<(TypedEdit, Descriptor)> {
    let history = family_history(store, parent.family.as_str());
    for attempt in 0..=max_retries {
        let seed: u64 = rng.random();
        let Some(edit) = proposer.propose(parent, &history, seed) else {
            log::debug!("proposal {attempt} for {} was empty", parent.id);
            continue;
        };
        match check_edit(&edit, parent, forest) {
            Ok(child) => return Some((edit, child)),
            Err(why) => log::debug!("proposal {attempt} for {} rejected: {why:?}", parent.id),
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EditType;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::cell::Cell;

    fn desc(pairs: &[(&str, &str)]) -> Descriptor {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    struct Scripted<F: Fn(u32) -> Option<TypedEdit>> {
        calls: Cell<u32>,
        f: F,
    }

    impl<F: Fn(u32) -> Option<TypedEdit>> Proposer for Scripted<F> {
        fn propose(&self, _: &SolutionNode, _: &[RefinementRecord], _: u64) -> Option<TypedEdit> {
            let n = self.calls.get();
            self.calls.set(n + 1);
            (self.f)(n)
        }
    }

    fn edit(pairs: &[(&str, &str)]) -> TypedEdit {
        TypedEdit {
            edit_type: EditType::Architecture,
            delta: desc(pairs),
            rationale: "scripted".into(),
        }
    }

    fn setup() -> (SolutionNode, SearchForest) {
        let mut parent = SolutionNode::root(
            "t/n00000",
            "t",
            "gnn".into(),
            desc(&[("family", "gnn"), ("layers", "3")]),
        );
        parent.complete(vec![0.5]);
        let mut forest = SearchForest::new("t");
        forest.insert_root(parent.clone()).unwrap();
        (parent, forest)
    }

    #[test]
    fn fresh_edit_overrides_parent_descriptor() {
        let (parent, forest) = setup();
        let p = Scripted { calls: Cell::new(0), f: |_| Some(edit(&[("layers", "4")])) };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (e, child) =
            propose_child(&parent, &p, &MemoryStore::new(), &forest, 2, &mut rng).unwrap();
        assert_eq!(e.delta, desc(&[("layers", "4")]));
        assert_eq!(child, desc(&[("family", "gnn"), ("layers", "4")]));
        assert_eq!(p.calls.get(), 1);
    }

    #[test]
    fn parent_copy_is_rejected_then_retried() {
        let (parent, forest) = setup();
        let p = Scripted {
            calls: Cell::new(0),
            f: |n| {
                Some(if n == 0 {
                    edit(&[("family", "gnn"), ("layers", "3")])
                } else {
                    edit(&[("layers", "5")])
                })
            },
        };
        assert_eq!(
            check_edit(&edit(&[("layers", "3")]), &parent, &forest),
            Err(Rejection::NoChange)
        );
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (_, child) =
            propose_child(&parent, &p, &MemoryStore::new(), &forest, 2, &mut rng).unwrap();
        assert_eq!(child["layers"], "5");
        assert_eq!(p.calls.get(), 2);
    }

    #[test]
    fn always_empty_exhausts_retries() {
        let (parent, forest) = setup();
        let p = Scripted { calls: Cell::new(0), f: |_| None };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(propose_child(&parent, &p, &MemoryStore::new(), &forest, 2, &mut rng).is_none());
        assert_eq!(p.calls.get(), 3);
    }

    #[test]
    fn duplicate_of_existing_node_rejected() {
        let (parent, mut forest) = setup();
        let mut sibling = SolutionNode::root(
            "t/n00001",
            "t",
            "gnn".into(),
            desc(&[("family", "gnn"), ("layers", "4")]),
        );
        sibling.parent_id = Some(parent.id.clone());
        sibling.edit_type = Some(EditType::Architecture);
        forest.insert_child(sibling).unwrap();
        assert_eq!(
            check_edit(&edit(&[("layers", "4")]), &parent, &forest),
            Err(Rejection::Duplicate)
        );
    }
}
